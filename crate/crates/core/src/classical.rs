//! Classical baselines: the local action along one trajectory and the
//! statistical Hamilton-Jacobi system solved by characteristics.

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{GaussianPrep, LocalAction, SystemParams, Trajectory};
use crate::error::{Error, Result};
use crate::ode::{dopri_integrate, rk4_step};
use crate::scalar::{dot3, masked, Real, Vec3};
use crate::stats;

/// Error tolerance of the adaptive integrator used with sampled potentials.
pub const SAMPLED_POTENTIAL_TOL: f64 = 1e-9;

/// Step cap of one adaptive integration interval.
const MAX_ADAPTIVE_STEPS: usize = 100_000;

/// Offset of the auxiliary characteristics, in units of `sigma0`.
pub const JACOBIAN_OFFSET: f64 = 1e-6;

/// Default internal step of the characteristic integration.
pub const DEFAULT_CHARACTERISTIC_DT: f64 = 1e-3;

/// Smallest ensemble accepted by [`statistical_hj_evolve`].
pub const MIN_PARTICLES: usize = 100;

fn newton_rhs<T: Real>(params: &SystemParams<T>, x: &Vec3<T>) -> Vec3<T> {
    let g = params.potential.gradient(x, params.mass);
    [-g[0] / params.mass, -g[1] / params.mass, -g[2] / params.mass]
}

/// Advances `y` by `h` with fixed-step RK4 for closed-form potentials and the
/// adaptive integrator for sampled ones.
fn advance<T: Real, const N: usize, F>(f: &F, sampled: bool, t: T, y: &[T; N], h: T) -> Result<[T; N]>
where
    F: Fn(T, &[T; N]) -> [T; N],
{
    if sampled {
        dopri_integrate(f, t, y, t + h, T::lit(SAMPLED_POTENTIAL_TOL), MAX_ADAPTIVE_STEPS)
    } else {
        Ok(rk4_step(f, t, y, h))
    }
}

/// Integrates Newton's equation from `(x0, v0)` together with
/// `dg/dt = -m xi'^2 / 2 - V(xi) - m xi'' . xi`, `g(0) = 0`.
///
/// States are stored every `dt`; the last interval is shortened to end at `t_max`.
pub fn local_action_evolve<T: Real>(
    x0: &Vec3<T>,
    v0: &Vec3<T>,
    params: &SystemParams<T>,
    t_max: T,
    dt: T,
) -> Result<LocalAction<T>> {
    params.validate()?;
    if !(t_max.is_finite() && t_max > T::zero()) {
        return Err(Error::param("t_max", "must be positive"));
    }
    if !(dt.is_finite() && dt > T::zero()) {
        return Err(Error::param("dt", "must be positive"));
    }
    let dim = params.dim;
    let m = params.mass;
    let half = T::lit(0.5);
    let accel = |x: &Vec3<T>| masked(newton_rhs(params, x), dim);
    let g_rate = |x: &Vec3<T>, v: &Vec3<T>| {
        let a = accel(x);
        -half * m * dot3(v, v) - params.potential.value(x, m) - m * dot3(&a, x)
    };
    let rhs = |_t: T, y: &[T; 7]| {
        let x = [y[0], y[1], y[2]];
        let v = [y[3], y[4], y[5]];
        let a = accel(&x);
        [v[0], v[1], v[2], a[0], a[1], a[2], g_rate(&x, &v)]
    };
    let mut y = [T::zero(); 7];
    y[..3].copy_from_slice(&masked(*x0, dim));
    y[3..6].copy_from_slice(&masked(*v0, dim));

    let n_steps = (t_max / dt).ceil().to_usize().unwrap_or(1).max(1);
    let mut action = LocalAction {
        trajectory: Trajectory {
            times: Vec::with_capacity(n_steps + 1),
            positions: Vec::with_capacity(n_steps + 1),
            velocities: Vec::with_capacity(n_steps + 1),
        },
        accelerations: Vec::with_capacity(n_steps + 1),
        g: Vec::with_capacity(n_steps + 1),
        g_rate: Vec::with_capacity(n_steps + 1),
        mass: m,
    };
    let mut push = |t: T, y: &[T; 7]| {
        let x = [y[0], y[1], y[2]];
        let v = [y[3], y[4], y[5]];
        action.trajectory.times.push(t);
        action.trajectory.positions.push(x);
        action.trajectory.velocities.push(v);
        action.accelerations.push(accel(&x));
        action.g.push(y[6]);
        action.g_rate.push(g_rate(&x, &v));
    };
    push(T::zero(), &y);
    let sampled = params.potential.is_sampled();
    for k in 0..n_steps {
        let t = T::from_usize_lossy(k) * dt;
        let t_next = (T::from_usize_lossy(k + 1) * dt).min(t_max);
        y = advance(&rhs, sampled, t, &y, t_next - t)?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite classical state at t = {t_next}")));
        }
        push(t_next, &y);
    }
    action.trajectory.validate()?;
    Ok(action)
}

/// Interpolated state of a local action at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalState<T> {
    pub position: Vec3<T>,
    pub velocity: Vec3<T>,
    pub g: T,
}

fn hermite<T: Real>(y0: T, d0: T, y1: T, d1: T, h: T, s: T) -> T {
    let s2 = s * s;
    let s3 = s2 * s;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    (two * s3 - three * s2 + T::one()) * y0
        + (s3 - two * s2 + s) * h * d0
        + (-two * s3 + three * s2) * y1
        + (s3 - s2) * h * d1
}

/// State at any `t` in the computed range by cubic Hermite interpolation
/// (positions with velocities, velocities with accelerations, `g` with its rate).
pub fn local_state<T: Real>(action: &LocalAction<T>, t: T) -> Result<LocalState<T>> {
    let times = &action.trajectory.times;
    let (start, end) = (times[0], times[times.len() - 1]);
    if !(t >= start && t <= end) {
        return Err(Error::OutOfRange {
            time: t.as_f64(),
            start: start.as_f64(),
            end: end.as_f64(),
        });
    }
    let k = match times.binary_search_by(|s| s.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less)) {
        Ok(k) => {
            return Ok(LocalState {
                position: action.trajectory.positions[k],
                velocity: action.trajectory.velocities[k],
                g: action.g[k],
            })
        }
        Err(k) => k - 1,
    };
    let h = times[k + 1] - times[k];
    let s = (t - times[k]) / h;
    let (p, v, a) = (&action.trajectory.positions, &action.trajectory.velocities, &action.accelerations);
    let mut position = [T::zero(); 3];
    let mut velocity = [T::zero(); 3];
    for i in 0..3 {
        position[i] = hermite(p[k][i], v[k][i], p[k + 1][i], v[k + 1][i], h, s);
        velocity[i] = hermite(v[k][i], a[k][i], v[k + 1][i], a[k + 1][i], h, s);
    }
    let g = hermite(action.g[k], action.g_rate[k], action.g[k + 1], action.g_rate[k + 1], h, s);
    Ok(LocalState { position, velocity, g })
}

/// `S(x, t) = m xi'(t) . x + g(t)`
pub fn local_action_field<T: Real>(action: &LocalAction<T>, x: &Vec3<T>, t: T) -> Result<T> {
    let st = local_state(action, t)?;
    Ok(action.mass * dot3(&st.velocity, x) + st.g)
}

/// `|dS/dt + |grad S|^2 / 2m + V|` at `x = xi(t)`. The time derivative is a
/// centred difference with the stored step (one-sided, second order, at the ends).
pub fn local_hj_residual<T: Real>(action: &LocalAction<T>, params: &SystemParams<T>, t: T) -> Result<T> {
    let st = local_state(action, t)?;
    let times = &action.trajectory.times;
    let h = times[1] - times[0];
    let (start, end) = (times[0], times[times.len() - 1]);
    let x = st.position;
    let s = |tau: T| local_action_field(action, &x, tau);
    let two = T::lit(2.0);
    let ds_dt = if t - h >= start && t + h <= end {
        (s(t + h)? - s(t - h)?) / (two * h)
    } else if t - h < start {
        (-T::lit(3.0) * s(t)? + T::lit(4.0) * s(t + h)? - s(t + two * h)?) / (two * h)
    } else {
        (T::lit(3.0) * s(t)? - T::lit(4.0) * s(t - h)? + s(t - two * h)?) / (two * h)
    };
    let m = params.mass;
    let kinetic = T::lit(0.5) * m * dot3(&st.velocity, &st.velocity);
    Ok((ds_dt + kinetic + params.potential.value(&x, m)).abs())
}

/// `|xi' - grad S / m|` at `x = xi(t)`; the gradient of the affine action is
/// `m xi'` identically, so this vanishes for every scenario.
pub fn local_velocity_residual<T: Real>(action: &LocalAction<T>, t: T) -> Result<T> {
    let st = local_state(action, t)?;
    let grad = [
        action.mass * st.velocity[0],
        action.mass * st.velocity[1],
        action.mass * st.velocity[2],
    ];
    let d: Vec3<T> = std::array::from_fn(|i| st.velocity[i] - grad[i] / action.mass);
    Ok(dot3(&d, &d).sqrt())
}

/// Particles drawn from `rho0` with velocities `grad S0 / m`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassicalEnsemble<T> {
    pub positions: Vec<Vec3<T>>,
    pub velocities: Vec<Vec3<T>>,
    pub seed: u64,
}

/// Samples the Gaussian preparation: positions `~ N(zeta0, sigma0^2)`, velocities `v0`.
pub fn sample_ensemble<T: Real>(prep: &GaussianPrep<T>, dim: usize, n: usize, seed: u64) -> ClassicalEnsemble<T> {
    let positions = stats::gaussian_offsets(n, prep.sigma0, dim, seed)
        .into_iter()
        .map(|eta| masked(std::array::from_fn(|a| prep.zeta0[a] + eta[a]), dim))
        .collect();
    ClassicalEnsemble {
        positions,
        velocities: vec![masked(prep.v0, dim); n],
        seed,
    }
}

/// Characteristics of the statistical Hamilton-Jacobi system sampled at output times.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CharacteristicField<T> {
    pub dim: usize,
    pub times: Vec<T>,
    /// `positions[k][i]`: particle `i` at `times[k]`.
    pub positions: Vec<Vec<Vec3<T>>>,
    pub velocities: Vec<Vec<Vec3<T>>>,
    /// Accumulated action `S0(x_i) + int (m x'^2 / 2 - V) ds`.
    pub actions: Vec<Vec<T>>,
    /// Determinant of `d x(t) / d x(0)` per particle.
    pub jacobians: Vec<Vec<T>>,
    /// Earliest time at which any Jacobian reaches zero.
    pub first_caustic: Option<T>,
    pub internal_dt: T,
    pub seed: u64,
}

// Characteristic state: position, velocity, action, then position and
// velocity of one auxiliary characteristic per axis.
const STATE: usize = 7 + 6 * 3;

fn determinant<T: Real>(y: &[T; STATE], delta: T, dim: usize) -> T {
    let j = |a: usize, b: usize| (y[7 + 6 * a + b] - y[b]) / delta;
    match dim {
        1 => j(0, 0),
        2 => j(0, 0) * j(1, 1) - j(0, 1) * j(1, 0),
        _ => {
            j(0, 0) * (j(1, 1) * j(2, 2) - j(1, 2) * j(2, 1)) - j(0, 1) * (j(1, 0) * j(2, 2) - j(1, 2) * j(2, 0))
                + j(0, 2) * (j(1, 0) * j(2, 1) - j(1, 1) * j(2, 0))
        }
    }
}

struct Characteristic<T> {
    positions: Vec<Vec3<T>>,
    velocities: Vec<Vec3<T>>,
    actions: Vec<T>,
    jacobians: Vec<T>,
    caustic: Option<T>,
}

/// Evolves the statistical Hamilton-Jacobi system by characteristics with the default internal step.
pub fn statistical_hj_evolve<T: Real>(
    prep: &GaussianPrep<T>,
    params: &SystemParams<T>,
    t_grid: &[T],
    n_particles: usize,
    seed: u64,
) -> Result<CharacteristicField<T>> {
    statistical_hj_evolve_with(prep, params, t_grid, n_particles, seed, T::lit(DEFAULT_CHARACTERISTIC_DT))
}

/// As [`statistical_hj_evolve`] with an explicit maximal internal step.
///
/// A caustic does not abort the evolution: its time is recorded and density
/// reconstruction refuses later output times.
pub fn statistical_hj_evolve_with<T: Real>(
    prep: &GaussianPrep<T>,
    params: &SystemParams<T>,
    t_grid: &[T],
    n_particles: usize,
    seed: u64,
    dt: T,
) -> Result<CharacteristicField<T>> {
    params.validate()?;
    prep.validate()?;
    if n_particles < MIN_PARTICLES {
        return Err(Error::TooFewSamples {
            got: n_particles,
            need: MIN_PARTICLES,
        });
    }
    if t_grid.is_empty() || t_grid[0] < T::zero() || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("t_grid", "must be non-empty, non-negative and strictly increasing"));
    }
    if !(dt.is_finite() && dt > T::zero()) {
        return Err(Error::param("dt", "must be positive"));
    }
    let dim = params.dim;
    let m = params.mass;
    let half = T::lit(0.5);
    let delta = T::lit(JACOBIAN_OFFSET) * prep.sigma0;
    let sampled = params.potential.is_sampled();
    let ensemble = sample_ensemble(prep, dim, n_particles, seed);

    let rhs = |_t: T, y: &[T; STATE]| {
        let mut out = [T::zero(); STATE];
        let x = [y[0], y[1], y[2]];
        let v = [y[3], y[4], y[5]];
        let a = masked(newton_rhs(params, &x), dim);
        out[..3].copy_from_slice(&v);
        out[3..6].copy_from_slice(&a);
        out[6] = half * m * dot3(&v, &v) - params.potential.value(&x, m);
        for axis in 0..dim {
            let o = 7 + 6 * axis;
            let xa = [y[o], y[o + 1], y[o + 2]];
            let aa = masked(newton_rhs(params, &xa), dim);
            out[o..o + 3].copy_from_slice(&[y[o + 3], y[o + 4], y[o + 5]]);
            out[o + 3..o + 6].copy_from_slice(&aa);
        }
        out
    };

    let run = |i: usize| -> Result<Characteristic<T>> {
        let x0 = ensemble.positions[i];
        let v0 = ensemble.velocities[i];
        let mut y = [T::zero(); STATE];
        y[..3].copy_from_slice(&x0);
        y[3..6].copy_from_slice(&v0);
        y[6] = m * dot3(&v0, &x0);
        for axis in 0..dim {
            let o = 7 + 6 * axis;
            let mut xa = x0;
            xa[axis] = xa[axis] + delta;
            y[o..o + 3].copy_from_slice(&xa);
            y[o + 3..o + 6].copy_from_slice(&v0);
        }
        let mut out = Characteristic {
            positions: Vec::with_capacity(t_grid.len()),
            velocities: Vec::with_capacity(t_grid.len()),
            actions: Vec::with_capacity(t_grid.len()),
            jacobians: Vec::with_capacity(t_grid.len()),
            caustic: None,
        };
        let mut t = T::zero();
        let mut det = determinant(&y, delta, dim);
        for &target in t_grid {
            while t < target {
                let h = dt.min(target - t);
                let next = advance(&rhs, sampled, t, &y, h)?;
                let next_det = determinant(&next, delta, dim);
                if out.caustic.is_none() && next_det <= T::zero() {
                    // Secant root of the determinant inside the step.
                    let frac = if det > next_det { det / (det - next_det) } else { T::one() };
                    out.caustic = Some(t + frac * h);
                }
                y = next;
                det = next_det;
                t = t + h;
            }
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite characteristic at t = {t}")));
            }
            out.positions.push([y[0], y[1], y[2]]);
            out.velocities.push([y[3], y[4], y[5]]);
            out.actions.push(y[6]);
            out.jacobians.push(det);
        }
        Ok(out)
    };

    let chars: Vec<Characteristic<T>> = (0..n_particles).into_par_iter().map(run).collect::<Result<_>>()?;
    let first_caustic = chars
        .iter()
        .filter_map(|c| c.caustic)
        .fold(None, |acc: Option<T>, c| Some(acc.map_or(c, |a| a.min(c))));
    let nt = t_grid.len();
    let gather = |f: &dyn Fn(&Characteristic<T>, usize) -> Vec3<T>| -> Vec<Vec<Vec3<T>>> {
        (0..nt).map(|k| chars.iter().map(|c| f(c, k)).collect()).collect()
    };
    let positions = gather(&|c, k| c.positions[k]);
    let velocities = gather(&|c, k| c.velocities[k]);
    let actions = (0..nt).map(|k| chars.iter().map(|c| c.actions[k]).collect()).collect();
    let jacobians = (0..nt).map(|k| chars.iter().map(|c| c.jacobians[k]).collect()).collect();
    Ok(CharacteristicField {
        dim,
        times: t_grid.to_vec(),
        positions,
        velocities,
        actions,
        jacobians,
        first_caustic,
        internal_dt: dt,
        seed,
    })
}

impl<T: Real> CharacteristicField<T> {
    fn check_reconstructible(&self, k: usize) -> Result<()> {
        if k >= self.times.len() {
            return Err(Error::param("time index", "beyond the output times"));
        }
        match self.first_caustic {
            Some(tc) if self.times[k] >= tc => Err(Error::CausticReached { time: tc.as_f64() }),
            _ => Ok(()),
        }
    }

    /// Per-axis Silverman bandwidths at output index `k`.
    pub fn bandwidths(&self, k: usize) -> Vec3<T> {
        let factor = T::lit(stats::silverman_factor(self.positions[k].len(), self.dim));
        let mut h = [T::zero(); 3];
        for (a, ha) in h.iter_mut().enumerate().take(self.dim) {
            let xs: Vec<T> = self.positions[k].iter().map(|x| x[a]).collect();
            *ha = factor * stats::mean_std(&xs).1;
        }
        h
    }

    /// Gaussian kernel estimates of density and action at `points`, time index `k`.
    /// The action is the kernel-weighted mean of the particle actions.
    pub fn reconstruct(&self, k: usize, points: &[Vec3<T>]) -> Result<Vec<(T, T)>> {
        self.check_reconstructible(k)?;
        let h = self.bandwidths(k);
        let dim = self.dim;
        let norm: T = (0..dim)
            .map(|a| (T::PI() + T::PI()).sqrt() * h[a])
            .fold(T::one(), |p, f| p * f);
        let n = T::from_usize_lossy(self.positions[k].len());
        let half = T::lit(0.5);
        Ok(points
            .par_iter()
            .map(|p| {
                let (mut w_sum, mut s_sum) = (T::zero(), T::zero());
                for (x, s) in self.positions[k].iter().zip(&self.actions[k]) {
                    let q: T = (0..dim).map(|a| ((p[a] - x[a]) / h[a]).powi(2)).sum();
                    let w = (-half * q).exp();
                    w_sum = w_sum + w;
                    s_sum = s_sum + w * *s;
                }
                let rho = w_sum / (n * norm);
                let action = if w_sum > T::zero() { s_sum / w_sum } else { T::nan() };
                (rho, action)
            })
            .collect())
    }

    /// Marginal CDF of the kernel estimate along `axis` at `x`.
    pub fn kernel_marginal_cdf(&self, k: usize, axis: usize, x: T) -> Result<T> {
        self.check_reconstructible(k)?;
        let h = self.bandwidths(k)[axis].as_f64();
        let xs = &self.positions[k];
        let sum: f64 = xs.iter().map(|p| normal_cdf((x.as_f64() - p[axis].as_f64()) / h)).sum();
        Ok(T::lit(sum / xs.len() as f64))
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PotentialSpec;
    use std::f64::consts::FRAC_PI_2;

    fn params(potential: PotentialSpec<f64>) -> SystemParams<f64> {
        SystemParams::new(1.0, 0.0, potential, 1).unwrap()
    }

    #[test]
    fn free_particle_at_rest_has_zero_action() {
        let p = params(PotentialSpec::Free);
        let la = local_action_evolve(&[0.7, 0.0, 0.0], &[0.0; 3], &p, 1.0, 0.1).unwrap();
        assert!(la.g.iter().all(|&g| g == 0.0));
        assert!(la.trajectory.positions.iter().all(|x| x[0] == 0.7));
        assert_eq!(local_action_field(&la, &[3.0, 0.0, 0.0], 0.55).unwrap(), 0.0);
        assert_eq!(local_hj_residual(&la, &p, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn harmonic_quarter_period() {
        let p = params(PotentialSpec::Harmonic { omega: 1.0 });
        let la = local_action_evolve(&[1.0, 0.0, 0.0], &[0.0; 3], &p, 2.0, 1e-3).unwrap();
        let st = local_state(&la, FRAC_PI_2).unwrap();
        assert!(st.position[0].abs() < 1e-10);
        assert!((st.velocity[0] + 1.0).abs() < 1e-10);
        // g(t) = sin(2t)/4
        assert!(st.g.abs() < 1e-10);
        let g1 = local_state(&la, 1.0).unwrap().g;
        assert!((g1 - (2.0f64).sin() / 4.0).abs() < 1e-10);
        assert!((local_action_field(&la, &[2.5, 0.0, 0.0], FRAC_PI_2).unwrap() + 2.5).abs() < 1e-9);
        assert!(local_hj_residual(&la, &p, FRAC_PI_2).unwrap() <= 1e-6);
        assert_eq!(local_velocity_residual(&la, 1.3).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_time_is_rejected() {
        let p = params(PotentialSpec::Free);
        let la = local_action_evolve(&[0.0; 3], &[1.0, 0.0, 0.0], &p, 1.0, 0.1).unwrap();
        assert!(matches!(local_state(&la, 1.5), Err(Error::OutOfRange { .. })));
        assert!(local_action_evolve(&[0.0; 3], &[0.0; 3], &p, 0.0, 0.1).is_err());
    }

    #[test]
    fn harmonic_characteristics_meet_at_quarter_period() {
        let p = params(PotentialSpec::Harmonic { omega: 1.0 });
        let prep = GaussianPrep {
            zeta0: [0.0; 3],
            sigma0: 1.0,
            v0: [0.0; 3],
        };
        let f = statistical_hj_evolve(&prep, &p, &[0.5, 1.0, 2.0], 200, 1).unwrap();
        let tc = f.first_caustic.unwrap();
        assert!((tc - FRAC_PI_2).abs() <= 1e-3);
        assert!(f.reconstruct(1, &[[0.0; 3]]).is_ok());
        assert!(matches!(f.reconstruct(2, &[[0.0; 3]]), Err(Error::CausticReached { .. })));
    }

    #[test]
    fn free_ensemble_at_rest_does_not_move() {
        let p = params(PotentialSpec::Free);
        let prep = GaussianPrep {
            zeta0: [0.3, 0.0, 0.0],
            sigma0: 1.0,
            v0: [0.0; 3],
        };
        let f = statistical_hj_evolve(&prep, &p, &[0.0, 1.0], 100, 4).unwrap();
        assert_eq!(f.positions[0], f.positions[1]);
        assert!(f.actions[1].iter().all(|&s| s == 0.0));
        assert!(f.first_caustic.is_none());
        assert!(f.jacobians[1].iter().all(|&j| (j - 1.0).abs() < 1e-8));
    }

    #[test]
    fn too_few_particles_rejected() {
        let p = params(PotentialSpec::Free);
        let prep = GaussianPrep {
            zeta0: [0.0; 3],
            sigma0: 1.0,
            v0: [0.0; 3],
        };
        assert!(matches!(
            statistical_hj_evolve(&prep, &p, &[1.0], 10, 0),
            Err(Error::TooFewSamples { .. })
        ));
    }
}
