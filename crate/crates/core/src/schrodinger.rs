//! Split-step spectral propagation of the Schrodinger equation on a periodic grid.
//!
//! Each Strang step applies half a potential phase, the exact kinetic
//! propagator `exp(-i hbar |k|^2 dt / 2m)` in Fourier space, and the second
//! half of the potential phase. All factors are unimodular, so the norm is
//! preserved up to rounding unless an absorbing mask is active.

use num_complex::Complex;
use serde::Serialize;

use crate::domain::{Grid, SystemParams, WaveField};
use crate::error::{Error, Result};
use crate::scalar::{Real, Vec3};
use crate::spectral::SpectralPlan;

/// Probability allowed in the boundary band of an unmasked run.
pub const BOUNDARY_TAIL_LIMIT: f64 = 1e-8;

/// Width of the monitored boundary band as a fraction of each axis.
pub const BOUNDARY_BAND_FRACTION: f64 = 1.0 / 32.0;

/// Exponent of the cosine ramp of the absorbing mask.
const MASK_EXPONENT: f64 = 0.125;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Splitting {
    Strang,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropagatorConfig<T> {
    pub dt: T,
    pub n_steps: usize,
    /// Snapshot every `stride` steps; the initial state is always emitted.
    pub stride: usize,
    pub splitting: Splitting,
    /// Fraction of each axis covered by the absorbing ramp; zero disables it.
    pub absorbing_margin: T,
}

impl<T: Real> PropagatorConfig<T> {
    pub fn new(dt: T, n_steps: usize, stride: usize) -> Self {
        PropagatorConfig {
            dt,
            n_steps,
            stride,
            splitting: Splitting::Strang,
            absorbing_margin: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > T::zero()) {
            return Err(Error::param("dt", "must be positive"));
        }
        if self.stride == 0 {
            return Err(Error::param("stride", "must be at least 1"));
        }
        if !(self.absorbing_margin >= T::zero() && self.absorbing_margin <= T::lit(0.25)) {
            return Err(Error::param("absorbing_margin", "must lie in [0, 0.25]"));
        }
        Ok(())
    }
}

/// Discrete `sum |psi|^2 dV`.
pub fn norm<T: Real>(psi: &WaveField<T>) -> T {
    psi.values.iter().map(|z| z.norm_sqr()).sum::<T>() * psi.grid.cell_volume()
}

/// Mean position and per-axis variance of `|psi|^2`, normalized by the discrete norm.
pub fn moments<T: Real>(psi: &WaveField<T>) -> (Vec3<T>, Vec3<T>) {
    let grid = &psi.grid;
    let mut mass = T::zero();
    let mut mean = [T::zero(); 3];
    for (i, z) in psi.values.iter().enumerate() {
        let r = z.norm_sqr();
        let x = grid.position(i);
        mass = mass + r;
        for a in 0..grid.dim() {
            mean[a] = mean[a] + r * x[a];
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / mass);
    let mut var = [T::zero(); 3];
    for (i, z) in psi.values.iter().enumerate() {
        let r = z.norm_sqr();
        let x = grid.position(i);
        for a in 0..grid.dim() {
            var[a] = var[a] + r * (x[a] - mean[a]) * (x[a] - mean[a]);
        }
    }
    var.iter_mut().for_each(|v| *v = *v / mass);
    (mean, var)
}

/// Probability in the outer band of the grid.
pub fn boundary_mass<T: Real>(psi: &WaveField<T>) -> T {
    let grid = &psi.grid;
    let bands: Vec<usize> = (0..grid.dim())
        .map(|a| ((grid.points()[a] as f64 * BOUNDARY_BAND_FRACTION).ceil() as usize).max(2))
        .collect();
    let vol = grid.cell_volume();
    psi.values
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let idx = grid.multi_index(*i);
            (0..grid.dim()).any(|a| idx[a] < bands[a] || idx[a] + bands[a] >= grid.points()[a])
        })
        .map(|(_, z)| z.norm_sqr())
        .sum::<T>()
        * vol
}

fn absorbing_mask<T: Real>(grid: &Grid<T>, margin: T) -> Vec<T> {
    let half_pi = T::FRAC_PI_2();
    (0..grid.len())
        .map(|i| {
            let idx = grid.multi_index(i);
            (0..grid.dim()).fold(T::one(), |acc, a| {
                let n = grid.points()[a];
                let u = (T::from_usize_lossy(idx[a]) + T::lit(0.5)) / T::from_usize_lossy(n);
                let edge = u.min(T::one() - u);
                if edge >= margin {
                    acc
                } else {
                    let depth = (margin - edge) / margin;
                    acc * (half_pi * depth).cos().max(T::zero()).powf(T::lit(MASK_EXPONENT))
                }
            })
        })
        .collect()
}

/// Precomputed phase factors for a fixed grid, system and step.
pub struct Propagator<T: Real> {
    plan: SpectralPlan<T>,
    kinetic: Vec<Complex<T>>,
    half_potential: Vec<Complex<T>>,
    mask: Option<Vec<T>>,
    dt: T,
}

impl<T: Real> Propagator<T> {
    /// `dt` may be negative for backward propagation.
    pub fn new(grid: &Grid<T>, params: &SystemParams<T>, dt: T, absorbing_margin: T) -> Result<Self> {
        params.require_quantum()?;
        if grid.dim() != params.dim {
            return Err(Error::param("grid", "dimension differs from system"));
        }
        let plan = SpectralPlan::new(grid);
        let (m, hbar) = (params.mass, params.hbar);
        let kinetic = plan
            .k_squared()
            .into_iter()
            .map(|k2| Complex::from_polar(T::one(), -hbar * k2 * dt / (T::lit(2.0) * m)))
            .collect();
        let half_potential = params
            .potential
            .values_on(grid, m)
            .into_iter()
            .map(|v| Complex::from_polar(T::one(), -v * dt / (T::lit(2.0) * hbar)))
            .collect();
        let mask = (absorbing_margin > T::zero()).then(|| absorbing_mask(grid, absorbing_margin));
        Ok(Propagator {
            plan,
            kinetic,
            half_potential,
            mask,
            dt,
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn step(&self, psi: &mut WaveField<T>) {
        let values = &mut psi.values;
        for (z, p) in values.iter_mut().zip(&self.half_potential) {
            *z = *z * p;
        }
        self.plan.forward(values);
        for (z, k) in values.iter_mut().zip(&self.kinetic) {
            *z = *z * k;
        }
        self.plan.inverse(values);
        for (z, p) in values.iter_mut().zip(&self.half_potential) {
            *z = *z * p;
        }
        if let Some(mask) = &self.mask {
            for (z, w) in values.iter_mut().zip(mask) {
                *z = *z * *w;
            }
        }
        psi.time = psi.time + self.dt;
    }
}

/// Propagates `psi0` for `cfg.n_steps` Strang steps and returns the snapshots
/// (initial state included) taken every `cfg.stride` steps.
pub fn evolve<T: Real>(psi0: &WaveField<T>, params: &SystemParams<T>, cfg: &PropagatorConfig<T>) -> Result<Vec<WaveField<T>>> {
    cfg.validate()?;
    let prop = Propagator::new(&psi0.grid, params, cfg.dt, cfg.absorbing_margin)?;
    let masked = cfg.absorbing_margin > T::zero();
    let check = |psi: &WaveField<T>| -> Result<()> {
        if !psi.is_finite() {
            return Err(Error::Numerical(format!("non-finite wave function at t = {}", psi.time)));
        }
        if !masked {
            let tail = boundary_mass(psi);
            if tail > T::lit(BOUNDARY_TAIL_LIMIT) {
                return Err(Error::GridInadequate(format!(
                    "boundary probability {tail:e} exceeds {BOUNDARY_TAIL_LIMIT:e} at t = {}",
                    psi.time
                )));
            }
        }
        Ok(())
    };
    check(psi0)?;
    let mut out = Vec::with_capacity(cfg.n_steps / cfg.stride + 1);
    out.push(psi0.clone());
    let mut psi = psi0.clone();
    for step in 1..=cfg.n_steps {
        prop.step(&mut psi);
        // avoid accumulated rounding in the clock
        psi.time = psi0.time + T::from_usize_lossy(step) * cfg.dt;
        if step % cfg.stride == 0 || step == cfg.n_steps {
            check(&psi)?;
            out.push(psi.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::sigma_hbar;
    use crate::domain::{make_grid, prepare_wavefunction, GaussianPrep, PotentialSpec, Preparation};

    fn free_params(hbar: f64) -> SystemParams<f64> {
        SystemParams::new(1.0, hbar, PotentialSpec::Free, 1).unwrap()
    }

    #[test]
    fn norm_examples() {
        let grid = make_grid(1, &[(-16.0, 16.0)], &[512]).unwrap();
        let prep = Preparation::Gaussian(GaussianPrep {
            zeta0: [0.0; 3],
            sigma0: 1.0,
            v0: [0.5, 0.0, 0.0],
        });
        let mut psi = prepare_wavefunction(&prep, &free_params(1.0), &grid).unwrap();
        assert!((norm(&psi) - 1.0).abs() < 1e-9);
        psi.values.iter_mut().for_each(|z| *z = *z * 2.0);
        assert!((norm(&psi) - 4.0).abs() < 4e-9);
        psi.values.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
        assert_eq!(norm(&psi), 0.0);
    }

    #[test]
    fn plane_wave_is_an_eigenstate() {
        let tau = std::f64::consts::TAU;
        let grid = make_grid(1, &[(0.0, tau)], &[64]).unwrap();
        let k = 3.0;
        let psi0 = WaveField {
            grid: grid.clone(),
            time: 0.0,
            values: grid
                .axis_coordinates(0)
                .iter()
                .map(|x| Complex::from_polar(1.0 / tau.sqrt(), k * x))
                .collect(),
        };
        let params = free_params(0.7);
        let prop = Propagator::new(&grid, &params, 0.01, 0.0).unwrap();
        let mut psi = psi0.clone();
        for _ in 0..100 {
            prop.step(&mut psi);
        }
        let phase = -0.7 * k * k * 1.0 / 2.0;
        for (a, b) in psi.values.iter().zip(&psi0.values) {
            assert!((a.norm() - b.norm()).abs() < 1e-13);
            assert!((a - b * Complex::from_polar(1.0, phase)).norm() < 1e-12);
        }
    }

    #[test]
    fn free_packet_width_follows_spreading_law() {
        let grid = make_grid(1, &[(-20.0, 20.0)], &[1024]).unwrap();
        let params = free_params(1.0);
        let prep = Preparation::Gaussian(GaussianPrep {
            zeta0: [0.0; 3],
            sigma0: 1.0,
            v0: [0.0; 3],
        });
        let psi0 = prepare_wavefunction(&prep, &params, &grid).unwrap();
        let snaps = evolve(&psi0, &params, &PropagatorConfig::new(1e-3, 2000, 200)).unwrap();
        assert_eq!(snaps.len(), 11);
        for s in &snaps {
            let (_, var) = moments(s);
            let expected = sigma_hbar(s.time, &params, 1.0);
            assert!((var[0].sqrt() / expected - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn norm_drift_and_time_reversal() {
        let grid = make_grid(2, &[(-8.0, 8.0), (-8.0, 8.0)], &[128, 128]).unwrap();
        let params = SystemParams::<f64>::new(1.0, 1.0, PotentialSpec::Harmonic { omega: 1.0 }, 2).unwrap();
        let prep = Preparation::Gaussian(GaussianPrep {
            zeta0: [0.5, -0.3, 0.0],
            sigma0: 0.8,
            v0: [0.2, 0.1, 0.0],
        });
        let psi0 = prepare_wavefunction(&prep, &params, &grid).unwrap();
        let n = 200;
        let fwd = Propagator::new(&grid, &params, 0.01, 0.0).unwrap();
        let back = Propagator::new(&grid, &params, -0.01, 0.0).unwrap();
        let mut psi = psi0.clone();
        let n0 = norm(&psi0);
        for _ in 0..n {
            fwd.step(&mut psi);
        }
        assert!((norm(&psi) - n0).abs() <= 1e-12 * n as f64);
        for _ in 0..n {
            back.step(&mut psi);
        }
        let err = psi
            .values
            .iter()
            .zip(&psi0.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "reversal error {err}");
    }

    #[test]
    fn absorbing_mask_removes_outgoing_probability() {
        let grid = make_grid(1, &[(-16.0, 16.0)], &[512]).unwrap();
        let params = free_params(1.0);
        let prep = Preparation::Gaussian(GaussianPrep {
            zeta0: [0.0; 3],
            sigma0: 1.0,
            v0: [4.0, 0.0, 0.0],
        });
        let psi0 = prepare_wavefunction(&prep, &params, &grid).unwrap();
        let mut cfg = PropagatorConfig::new(0.01, 600, 600);
        assert!(evolve(&psi0, &params, &cfg).is_err());
        cfg.absorbing_margin = 0.2;
        let snaps = evolve(&psi0, &params, &cfg).unwrap();
        assert!(norm(snaps.last().unwrap()) < 0.5);
        cfg.absorbing_margin = 0.3;
        assert!(evolve(&psi0, &params, &cfg).is_err());
    }
}
