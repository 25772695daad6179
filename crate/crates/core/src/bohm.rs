//! de Broglie-Bohm trajectory ensembles for the standard and spin-current
//! velocity laws.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{linear_fields, LinearScenario};
use crate::domain::{BohmSample, CoherentPrep, GaussianPrep, MadelungFields, SystemParams, Trajectory};
use crate::error::{Error, Result};
use crate::interp;
use crate::madelung::recompose;
use crate::ode::rk4_step;
use crate::scalar::{cross3, dot3, is_finite3, Real, Vec3};
use crate::spectral::SpectralPlan;
use crate::stats::{self, TabulatedCdf};

/// Largest `max|v| dt / dx` accepted when choosing the trajectory step.
pub const CFL_NUMBER: f64 = 0.5;

/// Nodes kept between a trajectory and the periodic seam.
pub const INTERIOR_MARGIN: usize = 3;

/// Unflagged trajectories required by [`equivariance_distance`].
pub const MIN_EQUIVARIANCE_SAMPLES: usize = 1000;

/// Allowed deviation of the spin axis from unit length.
const UNIT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum VelocityMode<T> {
    /// `v = grad S / m`
    Standard,
    /// `v = grad S / m + (hbar / 2m) grad ln rho x k`
    SpinCurrent { axis: Vec3<T> },
}

impl<T: Real> VelocityMode<T> {
    pub fn validate(&self) -> Result<()> {
        if let VelocityMode::SpinCurrent { axis } = self {
            if !is_finite3(axis) || (dot3(axis, axis).sqrt() - T::one()).abs() > T::lit(UNIT_TOL) {
                return Err(Error::param("spin_axis", "must be a unit vector"));
            }
        }
        Ok(())
    }

    /// Velocity from `grad S`, `grad ln rho` at one point.
    pub fn combine(&self, grad_s: &Vec3<T>, grad_ln_rho: &Vec3<T>, params: &SystemParams<T>) -> Vec3<T> {
        let m = params.mass;
        let mut v = [grad_s[0] / m, grad_s[1] / m, grad_s[2] / m];
        if let VelocityMode::SpinCurrent { axis } = self {
            let c = params.hbar / (T::lit(2.0) * m);
            let spin = cross3(grad_ln_rho, axis);
            for (va, sa) in v.iter_mut().zip(spin) {
                *va = *va + c * sa;
            }
        }
        v.iter_mut().skip(params.dim).for_each(|c| *c = T::zero());
        v
    }
}

/// Node-valued vector field with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<T> {
    pub values: Vec<Vec3<T>>,
    pub valid: Vec<bool>,
}

/// Bohm velocity at every supported node.
///
/// `grad S = hbar Im(psi* grad psi) / rho` and `grad ln rho = 2 Re(psi* grad psi) / rho`
/// with spectral derivatives of the recomposed wave function, so no phase
/// unwrapping enters the gradient.
pub fn velocity_field<T: Real>(
    fields: &MadelungFields<T>,
    params: &SystemParams<T>,
    mode: &VelocityMode<T>,
) -> Result<VectorField<T>> {
    params.require_quantum()?;
    mode.validate()?;
    let psi = recompose(fields, params);
    let plan = SpectralPlan::new(&fields.grid);
    let grads = plan.gradient_complex(&psi.values);
    let two = T::lit(2.0);
    let values = (0..psi.values.len())
        .map(|i| {
            let rho = fields.rho[i];
            if !fields.support[i] || rho <= T::zero() {
                return [T::zero(); 3];
            }
            let conj = psi.values[i].conj();
            let mut grad_s = [T::zero(); 3];
            let mut grad_ln = [T::zero(); 3];
            for (a, g) in grads.iter().enumerate() {
                let z: Complex<T> = conj * g[i];
                grad_s[a] = params.hbar * z.im / rho;
                grad_ln[a] = two * z.re / rho;
            }
            mode.combine(&grad_s, &grad_ln, params)
        })
        .collect();
    Ok(VectorField {
        values,
        valid: fields.support.clone(),
    })
}

/// Velocity available anywhere in space and time, or `None` where it is undefined.
pub trait VelocitySource<T: Real>: Sync {
    fn velocity(&self, x: &Vec3<T>, t: T) -> Option<Vec3<T>>;
    /// Largest speed, for the step rule.
    fn max_speed(&self) -> T;
    /// Length scale the step rule resolves; `None` for grid-free sources.
    fn resolution(&self) -> Option<T>;
    fn mode(&self) -> VelocityMode<T>;
}

/// Velocity fields of a snapshot sequence, cubic in space and linear in time.
///
/// Snapshots can be appended one at a time, so a propagation loop never has
/// to keep its wave functions.
pub struct SnapshotVelocity<T: Real> {
    grid: crate::domain::Grid<T>,
    params: SystemParams<T>,
    times: Vec<T>,
    /// Active velocity components per snapshot.
    fields: Vec<Vec<Vec<T>>>,
    valid: Vec<Vec<bool>>,
    mode: VelocityMode<T>,
    max_speed: T,
    max_change: T,
    last: Option<VectorField<T>>,
}

impl<T: Real> SnapshotVelocity<T> {
    pub fn empty(grid: &crate::domain::Grid<T>, params: &SystemParams<T>, mode: VelocityMode<T>) -> Result<Self> {
        params.require_quantum()?;
        mode.validate()?;
        if grid.dim() != params.dim {
            return Err(Error::param("grid", "dimension differs from system"));
        }
        Ok(SnapshotVelocity {
            grid: grid.clone(),
            params: params.clone(),
            times: Vec::new(),
            fields: Vec::new(),
            valid: Vec::new(),
            mode,
            max_speed: T::zero(),
            max_change: T::zero(),
            last: None,
        })
    }

    pub fn new(snapshots: &[MadelungFields<T>], params: &SystemParams<T>, mode: VelocityMode<T>) -> Result<Self> {
        let Some(first) = snapshots.first() else {
            return Err(Error::param("snapshots", "empty sequence"));
        };
        let mut out = Self::empty(&first.grid, params, mode)?;
        let computed: Vec<VectorField<T>> = snapshots
            .par_iter()
            .map(|f| velocity_field(f, params, &mode))
            .collect::<Result<_>>()?;
        for (f, vf) in snapshots.iter().zip(computed) {
            out.push_velocity(f, vf)?;
        }
        Ok(out)
    }

    /// Appends the velocity of one more snapshot.
    pub fn push(&mut self, fields: &MadelungFields<T>) -> Result<()> {
        let vf = velocity_field(fields, &self.params, &self.mode)?;
        self.push_velocity(fields, vf)
    }

    fn push_velocity(&mut self, fields: &MadelungFields<T>, vf: VectorField<T>) -> Result<()> {
        if fields.grid != self.grid {
            return Err(Error::param("snapshots", "grids differ"));
        }
        if self.times.last().is_some_and(|&t| fields.time <= t) {
            return Err(Error::param("snapshots", "times must be strictly increasing"));
        }
        for (v, &ok) in vf.values.iter().zip(&vf.valid) {
            if ok {
                self.max_speed = self.max_speed.max(dot3(v, v).sqrt());
            }
        }
        if let Some(prev) = &self.last {
            self.max_change = self.max_change.max(relative_change(prev, &vf));
        }
        let dim = self.grid.dim();
        self.fields
            .push((0..dim).map(|a| vf.values.iter().map(|v| v[a]).collect()).collect());
        self.valid.push(vf.valid.clone());
        self.times.push(fields.time);
        self.last = Some(vf);
        Ok(())
    }

    /// Drops all but the newest snapshot.
    pub fn retain_last(&mut self) {
        let n = self.times.len();
        if n > 1 {
            self.times.drain(..n - 1);
            self.fields.drain(..n - 1);
            self.valid.drain(..n - 1);
        }
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// Largest RMS change of the velocity between consecutive snapshots,
    /// relative to the RMS speed of the pair.
    pub fn max_relative_change(&self) -> T {
        self.max_change
    }

    fn sample(&self, k: usize, x: &Vec3<T>) -> Option<Vec3<T>> {
        let node = self.grid.nearest_node(x)?;
        if !self.valid[k][node] {
            return None;
        }
        let f = &self.fields[k];
        let mut v = [T::zero(); 3];
        match f.len() {
            1 => v[0] = interp::sample_many(&self.grid, [f[0].as_slice()], x)[0],
            2 => {
                let s = interp::sample_many(&self.grid, [f[0].as_slice(), f[1].as_slice()], x);
                v[..2].copy_from_slice(&s);
            }
            _ => v = interp::sample_many(&self.grid, [f[0].as_slice(), f[1].as_slice(), f[2].as_slice()], x),
        }
        Some(v)
    }
}

fn relative_change<T: Real>(a: &VectorField<T>, b: &VectorField<T>) -> T {
    let (mut num, mut den) = (T::zero(), T::zero());
    for i in 0..a.values.len() {
        if a.valid[i] && b.valid[i] {
            let d: Vec3<T> = std::array::from_fn(|c| b.values[i][c] - a.values[i][c]);
            num = num + dot3(&d, &d);
            den = den + (dot3(&a.values[i], &a.values[i]) + dot3(&b.values[i], &b.values[i])) / T::lit(2.0);
        }
    }
    if den > T::zero() {
        (num / den).sqrt()
    } else {
        T::zero()
    }
}

impl<T: Real> VelocitySource<T> for SnapshotVelocity<T> {
    fn velocity(&self, x: &Vec3<T>, t: T) -> Option<Vec3<T>> {
        if !self.grid.contains_interior(x, INTERIOR_MARGIN) {
            return None;
        }
        let last = self.times.len().checked_sub(1)?;
        if t < self.times[0] || t > self.times[last] {
            return None;
        }
        if last == 0 {
            return self.sample(0, x);
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, last) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        let v0 = self.sample(k, x)?;
        let v1 = self.sample(k + 1, x)?;
        Some(std::array::from_fn(|a| v0[a] + w * (v1[a] - v0[a])))
    }

    fn max_speed(&self) -> T {
        self.max_speed
    }

    fn resolution(&self) -> Option<T> {
        Some(self.grid.min_spacing())
    }

    fn mode(&self) -> VelocityMode<T> {
        self.mode
    }
}

/// Velocity of the closed-form linear scenario, with gradients of
/// `linear_fields` taken by fourth-order central differences.
pub struct AnalyticLinearVelocity<T: Real> {
    pub scenario: LinearScenario<T>,
    pub mode: VelocityMode<T>,
    /// Difference step.
    pub step: T,
}

impl<T: Real> AnalyticLinearVelocity<T> {
    pub fn new(scenario: LinearScenario<T>, mode: VelocityMode<T>) -> Result<Self> {
        mode.validate()?;
        scenario.params.require_quantum()?;
        let step = T::lit(1e-3) * scenario.prep.sigma0;
        Ok(AnalyticLinearVelocity {
            scenario,
            mode,
            step,
        })
    }
}

impl<T: Real> VelocitySource<T> for AnalyticLinearVelocity<T> {
    fn velocity(&self, x: &Vec3<T>, t: T) -> Option<Vec3<T>> {
        let h = self.step;
        let eval = |a: usize, off: T| {
            let mut y = *x;
            y[a] = y[a] + off;
            let (rho, s) = linear_fields(&y, t, &self.scenario);
            (s, rho.ln())
        };
        let dim = self.scenario.params.dim;
        let mut grad_s = [T::zero(); 3];
        let mut grad_ln = [T::zero(); 3];
        let (c1, c2) = (T::lit(8.0), T::lit(12.0) * h);
        for a in 0..dim {
            let (sp1, lp1) = eval(a, h);
            let (sm1, lm1) = eval(a, -h);
            let (sp2, lp2) = eval(a, h + h);
            let (sm2, lm2) = eval(a, -h - h);
            grad_s[a] = (c1 * (sp1 - sm1) - (sp2 - sm2)) / c2;
            grad_ln[a] = (c1 * (lp1 - lm1) - (lp2 - lm2)) / c2;
        }
        let v = self.mode.combine(&grad_s, &grad_ln, &self.scenario.params);
        is_finite3(&v).then_some(v)
    }

    fn max_speed(&self) -> T {
        T::zero()
    }

    fn resolution(&self) -> Option<T> {
        None
    }

    fn mode(&self) -> VelocityMode<T> {
        self.mode
    }
}

/// Offsets `eta0` drawn from the isotropic Gaussian of width `sigma`.
pub fn sample_initial<T: Real>(sigma: T, dim: usize, n: usize, seed: u64) -> Vec<BohmSample<T>> {
    stats::gaussian_offsets(n, sigma, dim, seed)
        .into_iter()
        .map(|eta0| BohmSample { eta0 })
        .collect()
}

pub fn sample_gaussian_prep<T: Real>(prep: &GaussianPrep<T>, dim: usize, n: usize, seed: u64) -> Vec<BohmSample<T>> {
    sample_initial(prep.sigma0, dim, n, seed)
}

pub fn sample_coherent_prep<T: Real>(
    prep: &CoherentPrep<T>,
    params: &SystemParams<T>,
    n: usize,
    seed: u64,
) -> Vec<BohmSample<T>> {
    sample_initial(prep.sigma_hbar(params), params.dim, n, seed)
}

/// Offsets from `origin` of positions drawn from the tabulated density: a node
/// is picked with probability proportional to its mass, then the position is
/// spread uniformly over its cell.
pub fn sample_from_density<T: Real>(
    fields: &MadelungFields<T>,
    origin: &Vec3<T>,
    n: usize,
    seed: u64,
) -> Result<Vec<BohmSample<T>>> {
    use rand::Rng;
    let total: f64 = fields.rho.iter().map(|r| r.as_f64()).sum();
    if !(total > 0.0) {
        return Err(Error::param("fields", "density has no mass"));
    }
    let mut cumulative = Vec::with_capacity(fields.rho.len());
    let mut acc = 0.0;
    for r in &fields.rho {
        acc += r.as_f64() / total;
        cumulative.push(acc);
    }
    let grid = &fields.grid;
    let mut rng = stats::rng(seed);
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let node = cumulative.partition_point(|&c| c < u).min(cumulative.len() - 1);
            let x = grid.position(node);
            let mut eta0 = [T::zero(); 3];
            for a in 0..grid.dim() {
                let jitter: f64 = rng.random::<f64>() - 0.5;
                eta0[a] = x[a] + T::lit(jitter) * grid.spacing()[a] - origin[a];
            }
            BohmSample { eta0 }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleRun<T> {
    pub samples: Vec<BohmSample<T>>,
    pub origin: Vec3<T>,
    /// One trajectory per sample on the common output times.
    pub trajectories: Vec<Trajectory<T>>,
    /// Time at which each sample was frozen, if it was.
    pub flagged: Vec<Option<T>>,
    pub mode: VelocityMode<T>,
    pub seed: u64,
    /// Largest step actually taken.
    pub dt: T,
}

impl<T: Real> EnsembleRun<T> {
    pub fn times(&self) -> &[T] {
        self.trajectories.first().map_or(&[], |t| t.times.as_slice())
    }

    pub fn n_flagged(&self) -> usize {
        self.flagged.iter().filter(|f| f.is_some()).count()
    }

    /// Positions of unflagged samples at output index `k`.
    pub fn positions_at(&self, k: usize) -> Vec<Vec3<T>> {
        self.trajectories
            .iter()
            .zip(&self.flagged)
            .filter(|(_, f)| f.is_none())
            .map(|(tr, _)| tr.positions[k])
            .collect()
    }
}

/// Positions of an ensemble in flight.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleState<T> {
    pub time: T,
    pub positions: Vec<Vec3<T>>,
    /// Time at which each sample was frozen, if it was.
    pub flagged: Vec<Option<T>>,
}

impl<T: Real> EnsembleState<T> {
    pub fn start<S: VelocitySource<T>>(source: &S, samples: &[BohmSample<T>], origin: &Vec3<T>, t0: T) -> Self {
        let positions: Vec<Vec3<T>> = samples.iter().map(|s| s.start(origin)).collect();
        let flagged = positions
            .iter()
            .map(|x| source.velocity(x, t0).is_none().then_some(t0))
            .collect();
        EnsembleState {
            time: t0,
            positions,
            flagged,
        }
    }
}

/// Step count and step between `t0` and `t1`: the largest `(t1 - t0) / n`
/// not above `dt_max` with `max|v| dt <= CFL_NUMBER * dx`.
pub fn ensemble_step<T: Real, S: VelocitySource<T>>(source: &S, t0: T, t1: T, dt_max: T) -> (usize, T) {
    let mut dt = dt_max;
    if let Some(dx) = source.resolution() {
        let speed = source.max_speed();
        if speed > T::zero() {
            dt = dt.min(T::lit(CFL_NUMBER) * dx / speed);
        }
    }
    let n = ((t1 - t0) / dt).ceil().to_usize().unwrap_or(1).max(1);
    (n, (t1 - t0) / T::from_usize_lossy(n))
}

/// Advances every unflagged sample to `t1` with RK4. A sample whose velocity
/// becomes undefined is frozen at its last position and flagged. Returns the step used.
pub fn advance_ensemble<T: Real, S: VelocitySource<T>>(
    source: &S,
    state: &mut EnsembleState<T>,
    t1: T,
    dt_max: T,
) -> Result<T> {
    if !(t1 > state.time) {
        return Err(Error::param("times", "must be strictly increasing"));
    }
    if !(dt_max.is_finite() && dt_max > T::zero()) {
        return Err(Error::param("dt", "must be positive"));
    }
    let t0 = state.time;
    let (n, h) = ensemble_step(source, t0, t1, dt_max);
    let rhs = |t: T, y: &[T; 3]| -> [T; 3] {
        // NaN carries an undefined velocity out of the stage.
        // The last stage can land an ulp past `t1`.
        source.velocity(y, t.min(t1)).unwrap_or([T::nan(); 3])
    };
    state
        .positions
        .par_iter_mut()
        .zip(state.flagged.par_iter_mut())
        .for_each(|(x, flag)| {
            if flag.is_some() {
                return;
            }
            for s in 0..n {
                let t = t0 + T::from_usize_lossy(s) * h;
                let next = rk4_step(&rhs, t, x, h);
                if !is_finite3(&next) {
                    *flag = Some(t);
                    return;
                }
                *x = next;
            }
            if source.velocity(x, t1).is_none() {
                *flag = Some(t1);
            }
        });
    state.time = t1;
    Ok(h)
}

/// Integrates every sample through `source` and reports the states at
/// `times` (the first of which is the start time).
pub fn integrate_with_source<T: Real, S: VelocitySource<T>>(
    source: &S,
    samples: &[BohmSample<T>],
    origin: &Vec3<T>,
    times: &[T],
    dt_max: T,
    seed: u64,
) -> Result<EnsembleRun<T>> {
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("times", "must be non-empty and strictly increasing"));
    }
    let mut state = EnsembleState::start(source, samples, origin, times[0]);
    let mut trajectories: Vec<Trajectory<T>> = samples
        .iter()
        .map(|_| Trajectory {
            times: times.to_vec(),
            positions: Vec::with_capacity(times.len()),
            velocities: Vec::with_capacity(times.len()),
        })
        .collect();
    let record = |trajectories: &mut Vec<Trajectory<T>>, state: &EnsembleState<T>| {
        for ((tr, x), flag) in trajectories.iter_mut().zip(&state.positions).zip(&state.flagged) {
            let v = if flag.is_none() { source.velocity(x, state.time) } else { None };
            tr.positions.push(*x);
            tr.velocities.push(v.unwrap_or([T::zero(); 3]));
        }
    };
    record(&mut trajectories, &state);
    let mut dt = T::zero();
    for &t in &times[1..] {
        dt = dt.max(advance_ensemble(source, &mut state, t, dt_max)?);
        record(&mut trajectories, &state);
    }
    Ok(EnsembleRun {
        samples: samples.to_vec(),
        origin: *origin,
        trajectories,
        flagged: state.flagged,
        mode: source.mode(),
        seed,
        dt,
    })
}

/// Integrates samples through the velocity of a snapshot sequence, reporting
/// positions at the snapshot times.
pub fn integrate_ensemble<T: Real>(
    snapshots: &[MadelungFields<T>],
    samples: &[BohmSample<T>],
    origin: &Vec3<T>,
    params: &SystemParams<T>,
    mode: VelocityMode<T>,
    seed: u64,
) -> Result<EnsembleRun<T>> {
    let source = SnapshotVelocity::new(snapshots, params, mode)?;
    let times = source.times().to_vec();
    let span = times[times.len() - 1] - times[0];
    let dt_max = if span > T::zero() { span } else { T::one() };
    integrate_with_source(&source, samples, origin, &times, dt_max, seed)
}

/// Largest per-axis Kolmogorov-Smirnov distance between the unflagged
/// positions at `fields.time` and the marginals of `fields.rho`.
pub fn equivariance_distance<T: Real>(run: &EnsembleRun<T>, fields: &MadelungFields<T>) -> Result<T> {
    let times = run.times();
    let tol = T::lit(1e-9) * fields.time.abs().max(T::one());
    let Some(k) = times.iter().position(|&t| (t - fields.time).abs() <= tol) else {
        return Err(Error::OutOfRange {
            time: fields.time.as_f64(),
            start: times.first().map_or(f64::NAN, |t| t.as_f64()),
            end: times.last().map_or(f64::NAN, |t| t.as_f64()),
        });
    };
    let positions = run.positions_at(k);
    if positions.len() < MIN_EQUIVARIANCE_SAMPLES {
        return Err(Error::TooFewSamples {
            got: positions.len(),
            need: MIN_EQUIVARIANCE_SAMPLES,
        });
    }
    Ok(marginal_distance(&positions, fields))
}

/// Largest per-axis Kolmogorov-Smirnov distance between `positions` and the
/// marginals of `fields.rho`.
pub fn marginal_distance<T: Real>(positions: &[Vec3<T>], fields: &MadelungFields<T>) -> T {
    let grid = &fields.grid;
    let mut worst = 0.0f64;
    for axis in 0..grid.dim() {
        let marginal: Vec<f64> = fields.marginal(axis).iter().map(|m| m.as_f64()).collect();
        let cdf = TabulatedCdf::new(grid.coordinate(axis, 0).as_f64(), grid.spacing()[axis].as_f64(), &marginal);
        let xs: Vec<f64> = positions.iter().map(|x| x[axis].as_f64()).collect();
        worst = worst.max(stats::ks_statistic(&xs, |x| cdf.eval(x)));
    }
    T::lit(worst)
}

/// Largest per-axis two-sample Kolmogorov-Smirnov distance between two sets of positions.
pub fn ensemble_distance<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>], dim: usize) -> T {
    let worst = (0..dim)
        .map(|axis| {
            let xa: Vec<f64> = a.iter().map(|x| x[axis].as_f64()).collect();
            let xb: Vec<f64> = b.iter().map(|x| x[axis].as_f64()).collect();
            stats::ks_two_sample(&xa, &xb)
        })
        .fold(0.0, f64::max);
    T::lit(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{coherent_fields, CoherentScenario};
    use crate::domain::{make_grid, PotentialSpec};

    #[test]
    fn plane_wave_velocity_is_constant() {
        let grid = make_grid(1, &[(0.0, 8.0)], &[64]).unwrap();
        let params = SystemParams::new(2.0, 0.5, PotentialSpec::Free, 1).unwrap();
        let k = 2.0 * std::f64::consts::PI / 8.0 * 3.0;
        let fields = MadelungFields::from_fn(&grid, 0.0, 1e-10, |x| (1.0 / 8.0, 0.5 * k * x[0]));
        let vf = velocity_field(&fields, &params, &VelocityMode::Standard).unwrap();
        for v in &vf.values {
            assert!((v[0] - 0.5 * k / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spin_term_of_resting_gaussian() {
        let params = SystemParams::new(1.0, 1.0, PotentialSpec::Free, 3).unwrap();
        let mode = VelocityMode::SpinCurrent { axis: [0.0, 0.0, 1.0] };
        // grad ln rho = -(x - zeta0) / sigma0^2 at zeta0 + e1
        let v = mode.combine(&[0.0; 3], &[-1.0, 0.0, 0.0], &params);
        assert_eq!(v, [0.0, 0.5, 0.0]);
    }

    #[test]
    fn coherent_spin_field_is_rigid_rotation() {
        let grid = make_grid(2, &[(-12.0, 12.0), (-12.0, 12.0)], &[128, 128]).unwrap();
        let prep = CoherentPrep {
            x0: [1.0, 0.5, 0.0],
            v0: [0.0, 0.3, 0.0],
            omega: 1.0,
        };
        let scen = CoherentScenario::<f64>::new(prep, 1.0, 2.0, 2).unwrap();
        let t = 0.4;
        let fields = MadelungFields::from_fn(&grid, t, 1e-10, |x| coherent_fields(x, t, &scen));
        let mode = VelocityMode::SpinCurrent { axis: [0.0, 0.0, 1.0] };
        let vf = velocity_field(&fields, &scen.params, &mode).unwrap();
        let (xi, dxi) = scen.trajectory(t);
        for i in (0..grid.len()).filter(|&i| fields.rho[i] > 1e-4 * fields.max_density()) {
            let x = grid.position(i);
            let expected = [dxi[0] - (x[1] - xi[1]), dxi[1] + (x[0] - xi[0])];
            assert!((vf.values[i][0] - expected[0]).abs() < 1e-8, "{:?} {:?}", vf.values[i], expected);
            assert!((vf.values[i][1] - expected[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn invalid_spin_axis_rejected() {
        let mode = VelocityMode::SpinCurrent { axis: [0.0, 0.0, 2.0] };
        assert!(mode.validate().is_err());
    }

    #[test]
    fn samples_are_reproducible() {
        let a = sample_initial(1.0f64, 1, 1, 99);
        assert_eq!(a, sample_initial(1.0f64, 1, 1, 99));
        assert_ne!(a, sample_initial(1.0f64, 1, 1, 100));
    }

    #[test]
    fn density_sampling_follows_marginal() {
        let grid = make_grid(1, &[(-8.0, 8.0)], &[128]).unwrap();
        let fields = MadelungFields::from_fn(&grid, 0.0, 1e-10, |x: &[f64; 3]| {
            ((-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt(), 0.0)
        });
        let s = sample_from_density(&fields, &[0.0; 3], 5000, 1).unwrap();
        let run = EnsembleRun {
            trajectories: s
                .iter()
                .map(|b| Trajectory {
                    times: vec![0.0],
                    positions: vec![b.eta0],
                    velocities: vec![[0.0; 3]],
                })
                .collect(),
            flagged: vec![None; s.len()],
            samples: s,
            origin: [0.0; 3],
            mode: VelocityMode::Standard,
            seed: 1,
            dt: 0.0,
        };
        let d = equivariance_distance(&run, &fields).unwrap();
        assert!(d < 0.03, "{d}");
    }
}
