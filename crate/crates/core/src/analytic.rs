//! Closed-form Madelung fields and trajectories.
//!
//! Two exactly solvable families: a Gaussian packet in a linear (or zero)
//! potential with hbar-independent width, and the harmonic-oscillator coherent
//! state whose width scales as `sqrt(hbar)`. Both are implemented per axis and
//! composed, so every formula holds in one, two or three dimensions.

use serde::Serialize;

use crate::domain::{CoherentPrep, GaussianPrep, PotentialSpec, SystemParams};
use crate::error::{Error, Result};
use crate::ode::adaptive_simpson;
use crate::scalar::{dot3, masked, Real, Vec3};

/// Per-axis weight of the `hbar * omega * t` phase lag of a coherent state:
/// the offset is `COHERENT_PHASE_PER_AXIS * dim * hbar * omega * t`
/// (the ground-state energy `dim/2 * hbar * omega` times `t`).
pub const COHERENT_PHASE_PER_AXIS: f64 = 0.5;

/// Tolerance for the quadrature of `g(t)` along the coherent trajectory.
pub const G_QUADRATURE_TOL: f64 = 1e-10;

/// Width of a free or linearly accelerated Gaussian:
/// `sigma0 * sqrt(1 + (hbar t / 2 m sigma0^2)^2)`.
pub fn sigma_hbar<T: Real>(t: T, params: &SystemParams<T>, sigma0: T) -> T {
    let tau = spreading_ratio(t, params, sigma0);
    sigma0 * (T::one() + tau * tau).sqrt()
}

/// `hbar t / (2 m sigma0^2)`
#[inline]
fn spreading_ratio<T: Real>(t: T, params: &SystemParams<T>, sigma0: T) -> T {
    params.hbar * t / (T::lit(2.0) * params.mass * sigma0 * sigma0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearScenario<T> {
    pub prep: GaussianPrep<T>,
    pub force: Vec3<T>,
    pub params: SystemParams<T>,
}

impl<T: Real> LinearScenario<T> {
    /// Builds the scenario and the matching system (`Linear`, or `Free` when `force` is zero).
    /// Components on axes beyond `dim` are dropped.
    pub fn new(prep: GaussianPrep<T>, force: Vec3<T>, mass: T, hbar: T, dim: usize) -> Result<Self> {
        let force = masked(force, dim);
        let prep = GaussianPrep {
            zeta0: masked(prep.zeta0, dim),
            sigma0: prep.sigma0,
            v0: masked(prep.v0, dim),
        };
        let potential = if force.iter().all(|f| *f == T::zero()) {
            PotentialSpec::Free
        } else {
            PotentialSpec::Linear { force }
        };
        let params = SystemParams::new(mass, hbar, potential, dim)?;
        prep.validate()?;
        Ok(LinearScenario { prep, force, params })
    }

    pub fn with_hbar(&self, hbar: T) -> Self {
        LinearScenario {
            params: self.params.with_hbar(hbar),
            ..self.clone()
        }
    }

    /// Packet centre `zeta0 + v0 t + K t^2 / 2m`; also the classical path of the centre.
    pub fn center(&self, t: T) -> Vec3<T> {
        let a = t * t / (T::lit(2.0) * self.params.mass);
        let mut c = [T::zero(); 3];
        for (axis, ca) in c.iter_mut().enumerate().take(self.params.dim) {
            *ca = self.prep.zeta0[axis] + self.prep.v0[axis] * t + self.force[axis] * a;
        }
        c
    }

    fn classical_action(&self, x: &Vec3<T>, t: T) -> T {
        let m = self.params.mass;
        let half = T::lit(0.5);
        let (v0, k) = (&self.prep.v0, &self.force);
        -half * m * dot3(v0, v0) * t + m * dot3(v0, x) + dot3(k, x) * t - half * dot3(k, v0) * t * t
            - dot3(k, k) * t * t * t / (T::lit(6.0) * m)
    }

    fn offset_sq(&self, x: &Vec3<T>, t: T) -> T {
        let c = self.center(t);
        (0..self.params.dim).map(|a| (x[a] - c[a]) * (x[a] - c[a])).sum()
    }
}

fn gaussian_density<T: Real>(r2: T, sigma: T, dim: usize) -> T {
    let var = sigma * sigma;
    ((T::PI() + T::PI()) * var).powf(-T::lit(dim as f64 / 2.0)) * (-r2 / (T::lit(2.0) * var)).exp()
}

/// Exact `(rho, S)` of the Gaussian packet in a linear potential.
pub fn linear_fields<T: Real>(x: &Vec3<T>, t: T, scen: &LinearScenario<T>) -> (T, T) {
    let p = &scen.params;
    let sigma0 = scen.prep.sigma0;
    let sigma_t = sigma_hbar(t, p, sigma0);
    let r2 = scen.offset_sq(x, t);
    let rho = gaussian_density(r2, sigma_t, p.dim);
    let tau = spreading_ratio(t, p, sigma0);
    let dim_half = T::lit(p.dim as f64 / 2.0);
    let spreading_phase = -dim_half * p.hbar * tau.atan();
    let curvature = r2 * p.hbar * p.hbar * t / (T::lit(8.0) * p.mass * sigma0 * sigma0 * sigma_t * sigma_t);
    (rho, spreading_phase + scen.classical_action(x, t) + curvature)
}

/// hbar-free limit of [`linear_fields`]: fixed-width Gaussian riding the
/// classical centre, with the classical action.
pub fn classical_limit_fields<T: Real>(x: &Vec3<T>, t: T, scen: &LinearScenario<T>) -> (T, T) {
    let rho = gaussian_density(scen.offset_sq(x, t), scen.prep.sigma0, scen.params.dim);
    (rho, scen.classical_action(x, t))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoherentScenario<T> {
    pub prep: CoherentPrep<T>,
    pub params: SystemParams<T>,
}

impl<T: Real> CoherentScenario<T> {
    /// Components on axes beyond `dim` are dropped.
    pub fn new(prep: CoherentPrep<T>, mass: T, hbar: T, dim: usize) -> Result<Self> {
        let prep = CoherentPrep {
            x0: masked(prep.x0, dim),
            v0: masked(prep.v0, dim),
            omega: prep.omega,
        };
        prep.validate()?;
        let params = SystemParams::new(mass, hbar, PotentialSpec::Harmonic { omega: prep.omega }, dim)?;
        Ok(CoherentScenario { prep, params })
    }

    pub fn validate(&self) -> Result<()> {
        match self.params.potential {
            PotentialSpec::Harmonic { omega } if omega == self.prep.omega => Ok(()),
            _ => Err(Error::param("potential", "coherent scenario needs Harmonic with the prep's omega")),
        }
    }

    pub fn with_hbar(&self, hbar: T) -> Self {
        CoherentScenario {
            params: self.params.with_hbar(hbar),
            ..self.clone()
        }
    }

    pub fn sigma(&self) -> T {
        self.prep.sigma_hbar(&self.params)
    }

    /// Classical trajectory `(xi, xi')` of the packet centre.
    pub fn trajectory(&self, t: T) -> (Vec3<T>, Vec3<T>) {
        harmonic_trajectory(&self.prep.x0, &self.prep.v0, self.prep.omega, t, self.params.dim)
    }

    /// `g(t) = int_0^t (-m xi'^2 / 2 + m omega^2 xi^2 / 2) ds` by adaptive quadrature.
    pub fn g(&self, t: T) -> T {
        let m = self.params.mass;
        let w2 = self.prep.omega * self.prep.omega;
        let half = T::lit(0.5);
        let integrand = |s: T| {
            let (xi, v) = self.trajectory(s);
            -half * m * dot3(&v, &v) + half * m * w2 * dot3(&xi, &xi)
        };
        adaptive_simpson(&integrand, T::zero(), t, T::lit(G_QUADRATURE_TOL))
    }

    fn phase_lag(&self, t: T) -> T {
        T::lit(COHERENT_PHASE_PER_AXIS * self.params.dim as f64) * self.params.hbar * self.prep.omega * t
    }
}

/// `x0 cos(wt) + v0/w sin(wt)` and its derivative.
pub fn harmonic_trajectory<T: Real>(x0: &Vec3<T>, v0: &Vec3<T>, omega: T, t: T, dim: usize) -> (Vec3<T>, Vec3<T>) {
    let (s, c) = (omega * t).sin_cos();
    let mut xi = [T::zero(); 3];
    let mut v = [T::zero(); 3];
    for a in 0..dim {
        xi[a] = x0[a] * c + v0[a] / omega * s;
        v[a] = -x0[a] * omega * s + v0[a] * c;
    }
    (xi, v)
}

/// Exact `(rho, S)` of the coherent state. Evaluates `g(t)` by quadrature;
/// use [`coherent_fields_with`] to reuse a precomputed `g` over many points.
pub fn coherent_fields<T: Real>(x: &Vec3<T>, t: T, scen: &CoherentScenario<T>) -> (T, T) {
    coherent_fields_with(x, t, scen, scen.g(t))
}

pub fn coherent_fields_with<T: Real>(x: &Vec3<T>, t: T, scen: &CoherentScenario<T>, g: T) -> (T, T) {
    let (xi, v) = scen.trajectory(t);
    let r2: T = (0..scen.params.dim).map(|a| (x[a] - xi[a]) * (x[a] - xi[a])).sum();
    let rho = gaussian_density(r2, scen.sigma(), scen.params.dim);
    let action = scen.params.mass * dot3(&v, x) + g - scen.phase_lag(t);
    (rho, action)
}

/// `Q = (dim/2) hbar omega - m omega^2 |x - xi(t)|^2 / 2`
pub fn coherent_quantum_potential<T: Real>(x: &Vec3<T>, t: T, scen: &CoherentScenario<T>) -> T {
    let (xi, _) = scen.trajectory(t);
    let r2: T = (0..scen.params.dim).map(|a| (x[a] - xi[a]) * (x[a] - xi[a])).sum();
    let w = scen.prep.omega;
    T::lit(COHERENT_PHASE_PER_AXIS * scen.params.dim as f64) * scen.params.hbar * w
        - T::lit(0.5) * scen.params.mass * w * w * r2
}

/// Bohm trajectory for the standard velocity law, every active axis:
/// `centre(t) + eta0 * sigma_hbar(t) / sigma0`.
pub fn bohm_trajectory_standard<T: Real>(eta0: &Vec3<T>, t: T, scen: &LinearScenario<T>) -> Vec3<T> {
    let stretch = sigma_hbar(t, &scen.params, scen.prep.sigma0) / scen.prep.sigma0;
    let c = scen.center(t);
    let mut x = [T::zero(); 3];
    for a in 0..scen.params.dim {
        x[a] = c[a] + eta0[a] * stretch;
    }
    x
}

/// First-axis component of [`bohm_trajectory_standard`].
pub fn bohm_trajectory_1d<T: Real>(eta0: T, t: T, scen: &LinearScenario<T>) -> T {
    let mut e = [T::zero(); 3];
    e[0] = eta0;
    bohm_trajectory_standard(&e, t, scen)[0]
}

/// Bohm trajectory for the spin-current velocity law with spin along the
/// third axis. The transverse offset grows like `sigma_hbar(t)/sigma0` and
/// turns counter-clockwise about the spin axis by `atan(hbar t / 2 m sigma0^2)`.
pub fn bohm_trajectory_3d_spin<T: Real>(eta0: &Vec3<T>, t: T, scen: &LinearScenario<T>) -> Result<Vec3<T>> {
    if scen.params.dim != 3 {
        return Err(Error::param("dim", "spin trajectory needs a three-dimensional scenario"));
    }
    if scen.force[0] != T::zero() || scen.force[1] != T::zero() {
        return Err(Error::param("force", "force must be along the spin (third) axis"));
    }
    let p = &scen.params;
    let sigma0 = scen.prep.sigma0;
    let stretch = sigma_hbar(t, p, sigma0) / sigma0;
    let c = scen.center(t);
    let radius = eta0[0].hypot(eta0[1]);
    let mut x = [c[0], c[1], c[2] + eta0[2] * stretch];
    if radius > T::zero() {
        let angle = eta0[1].atan2(eta0[0]) + spreading_ratio(t, p, sigma0).atan();
        let (s, co) = angle.sin_cos();
        x[0] = x[0] + radius * stretch * co;
        x[1] = x[1] + radius * stretch * s;
    }
    Ok(x)
}
