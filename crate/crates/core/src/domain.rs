//! Physical and numerical domain types shared by every solver.
//!
//! Vectors are stored as `[T; 3]`; axes beyond `dim` are inactive and kept
//! at zero. Grids are periodic with nodes `lower + i * spacing`, so the upper
//! bound itself is not a node.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp;
use crate::scalar::{dot3, is_finite3, sub3, Real, Vec3};

/// Default ceiling on the number of grid nodes.
pub const DEFAULT_MAX_NODES: usize = 1 << 24;

/// Minimum points per active axis.
pub const MIN_POINTS: usize = 8;

/// Packets must span at least this many grid spacings per standard deviation.
pub const MIN_NODES_PER_SIGMA: f64 = 4.0;

/// Half-width of the region a packet must fit in, in standard deviations.
pub const PACKET_HALF_WIDTH_SIGMAS: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid<T> {
    dim: usize,
    lower: Vec3<T>,
    upper: Vec3<T>,
    points: [usize; 3],
    spacing: Vec3<T>,
}

/// Builds a periodic grid; see [`make_grid_with_cap`].
pub fn make_grid<T: Real>(dim: usize, bounds: &[(T, T)], points: &[usize]) -> Result<Grid<T>> {
    make_grid_with_cap(dim, bounds, points, DEFAULT_MAX_NODES)
}

pub fn make_grid_with_cap<T: Real>(
    dim: usize,
    bounds: &[(T, T)],
    points: &[usize],
    max_nodes: usize,
) -> Result<Grid<T>> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
    }
    if bounds.len() != dim || points.len() != dim {
        return Err(Error::InvalidGrid(format!(
            "expected {dim} bounds and point counts, got {} and {}",
            bounds.len(),
            points.len()
        )));
    }
    let mut grid = Grid {
        dim,
        lower: [T::zero(); 3],
        upper: [T::zero(); 3],
        points: [1; 3],
        spacing: [T::one(); 3],
    };
    let mut total: usize = 1;
    for axis in 0..dim {
        let (lo, hi) = bounds[axis];
        let n = points[axis];
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::InvalidGrid(format!(
                "axis {axis}: bounds [{lo}, {hi}] must be finite with upper > lower"
            )));
        }
        if n < MIN_POINTS || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "axis {axis}: {n} points is not a power of two >= {MIN_POINTS}"
            )));
        }
        total = total
            .checked_mul(n)
            .filter(|&t| t <= max_nodes)
            .ok_or_else(|| Error::InvalidGrid(format!("node count exceeds cap of {max_nodes}")))?;
        grid.lower[axis] = lo;
        grid.upper[axis] = hi;
        grid.points[axis] = n;
        grid.spacing[axis] = (hi - lo) / T::from_usize_lossy(n);
    }
    Ok(grid)
}

impl<T: Real> Grid<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn lower(&self) -> &Vec3<T> {
        &self.lower
    }
    pub fn upper(&self) -> &Vec3<T> {
        &self.upper
    }
    /// Points per axis; inactive axes report 1.
    pub fn points(&self) -> &[usize; 3] {
        &self.points
    }
    pub fn spacing(&self) -> &Vec3<T> {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> T {
        self.spacing[..self.dim].iter().fold(T::one(), |acc, &h| acc * h)
    }

    pub fn min_spacing(&self) -> T {
        self.spacing[..self.dim].iter().fold(T::infinity(), |acc, &h| acc.min(h))
    }

    /// Distance between neighbouring flat indices along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.points[axis + 1..].iter().product()
    }

    #[inline]
    pub fn index(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.points[1] + idx[1]) * self.points[2] + idx[2]
    }

    #[inline]
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let i2 = flat % self.points[2];
        let rest = flat / self.points[2];
        [rest / self.points[1], rest % self.points[1], i2]
    }

    #[inline]
    pub fn coordinate(&self, axis: usize, i: usize) -> T {
        self.lower[axis] + T::from_usize_lossy(i) * self.spacing[axis]
    }

    pub fn position(&self, flat: usize) -> Vec3<T> {
        let idx = self.multi_index(flat);
        let mut x = [T::zero(); 3];
        for (axis, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = self.coordinate(axis, idx[axis]);
        }
        x
    }

    pub fn axis_coordinates(&self, axis: usize) -> Vec<T> {
        (0..self.points[axis]).map(|i| self.coordinate(axis, i)).collect()
    }

    /// Angular wavenumbers in FFT order for `axis`.
    pub fn wavenumbers(&self, axis: usize) -> Vec<T> {
        let n = self.points[axis];
        let length = T::from_usize_lossy(n) * self.spacing[axis];
        let dk = (T::PI() + T::PI()) / length;
        (0..n)
            .map(|i| {
                let signed = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                T::lit(signed) * dk
            })
            .collect()
    }

    /// Periodic neighbour `offset` steps away along `axis`.
    #[inline]
    pub fn neighbor(&self, flat: usize, axis: usize, offset: isize) -> usize {
        let n = self.points[axis] as isize;
        let mut idx = self.multi_index(flat);
        idx[axis] = (idx[axis] as isize + offset).rem_euclid(n) as usize;
        self.index(idx)
    }

    /// Non-wrapping neighbour, `None` past the grid edge.
    #[inline]
    pub fn neighbor_open(&self, flat: usize, axis: usize, offset: isize) -> Option<usize> {
        let mut idx = self.multi_index(flat);
        let j = idx[axis] as isize + offset;
        if j < 0 || j >= self.points[axis] as isize {
            return None;
        }
        idx[axis] = j as usize;
        Some(self.index(idx))
    }

    /// Node closest to `x`, if `x` lies within the grid's extent.
    pub fn nearest_node(&self, x: &Vec3<T>) -> Option<usize> {
        let mut idx = [0usize; 3];
        for axis in 0..self.dim {
            let s = ((x[axis] - self.lower[axis]) / self.spacing[axis]).round();
            let s = s.to_i64()?;
            if s < 0 || s >= self.points[axis] as i64 {
                return None;
            }
            idx[axis] = s as usize;
        }
        Some(self.index(idx))
    }

    /// True when `x` is at least `margin` nodes away from the periodic seam on every axis.
    pub fn contains_interior(&self, x: &Vec3<T>, margin: usize) -> bool {
        (0..self.dim).all(|axis| {
            let m = T::from_usize_lossy(margin) * self.spacing[axis];
            let last = self.coordinate(axis, self.points[axis] - 1);
            x[axis].is_finite() && x[axis] >= self.lower[axis] + m && x[axis] <= last - m
        })
    }

    /// Checks the adequacy rule for an isotropic Gaussian packet of width
    /// `sigma` centred at `center`, widened by `drift` on each axis.
    pub fn check_packet_fits(&self, center: &Vec3<T>, sigma: T, drift: &Vec3<T>) -> Result<()> {
        let min_sigma = T::lit(MIN_NODES_PER_SIGMA) * self.min_spacing();
        if sigma < min_sigma {
            return Err(Error::GridInadequate(format!(
                "packet width {sigma} below {MIN_NODES_PER_SIGMA} grid spacings ({min_sigma})"
            )));
        }
        let half = T::lit(PACKET_HALF_WIDTH_SIGMAS) * sigma;
        for axis in 0..self.dim {
            let reach = half + drift[axis].abs();
            let last = self.coordinate(axis, self.points[axis] - 1);
            if center[axis] - reach < self.lower[axis] || center[axis] + reach > last {
                return Err(Error::GridInadequate(format!(
                    "axis {axis}: packet {} +/- {reach} leaves [{}, {last}]",
                    center[axis], self.lower[axis]
                )));
            }
        }
        Ok(())
    }
}

/// Smooth potential families plus tabulated values on a grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum PotentialSpec<T> {
    Free,
    /// `V(x) = -K . x`
    Linear { force: Vec3<T> },
    /// `V(x) = m omega^2 |x|^2 / 2`
    Harmonic { omega: T },
    Sampled { grid: Grid<T>, values: Vec<T> },
}

impl<T: Real> PotentialSpec<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialSpec::Free => Ok(()),
            PotentialSpec::Linear { force } if is_finite3(force) => Ok(()),
            PotentialSpec::Linear { .. } => Err(Error::param("potential.force", "must be finite")),
            PotentialSpec::Harmonic { omega } if omega.is_finite() && *omega > T::zero() => Ok(()),
            PotentialSpec::Harmonic { .. } => Err(Error::param("potential.omega", "must be positive")),
            PotentialSpec::Sampled { grid, values } => {
                if values.len() != grid.len() {
                    return Err(Error::param("potential.values", "length differs from grid"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::param("potential.values", "must be finite at every node"));
                }
                Ok(())
            }
        }
    }

    pub fn value(&self, x: &Vec3<T>, mass: T) -> T {
        match self {
            PotentialSpec::Free => T::zero(),
            PotentialSpec::Linear { force } => -dot3(force, x),
            PotentialSpec::Harmonic { omega } => T::lit(0.5) * mass * *omega * *omega * dot3(x, x),
            PotentialSpec::Sampled { grid, values } => interp::sample_many(grid, [values], x)[0],
        }
    }

    pub fn gradient(&self, x: &Vec3<T>, mass: T) -> Vec3<T> {
        match self {
            PotentialSpec::Free => [T::zero(); 3],
            PotentialSpec::Linear { force } => [-force[0], -force[1], -force[2]],
            PotentialSpec::Harmonic { omega } => {
                let k = mass * *omega * *omega;
                [k * x[0], k * x[1], k * x[2]]
            }
            PotentialSpec::Sampled { grid, values } => interp::sample_with_gradient(grid, values, x).1,
        }
    }

    /// Potential at every node of `grid`.
    pub fn values_on(&self, grid: &Grid<T>, mass: T) -> Vec<T> {
        match self {
            PotentialSpec::Sampled { grid: own, values } if own == grid => values.clone(),
            _ => (0..grid.len()).map(|i| self.value(&grid.position(i), mass)).collect(),
        }
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self, PotentialSpec::Sampled { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemParams<T> {
    pub mass: T,
    pub hbar: T,
    pub potential: PotentialSpec<T>,
    pub dim: usize,
}

impl<T: Real> SystemParams<T> {
    pub fn new(mass: T, hbar: T, potential: PotentialSpec<T>, dim: usize) -> Result<Self> {
        let params = SystemParams {
            mass,
            hbar,
            potential,
            dim,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > T::zero()) {
            return Err(Error::param("mass", "must be positive and finite"));
        }
        if !(self.hbar.is_finite() && self.hbar >= T::zero()) {
            return Err(Error::param("hbar", "must be non-negative and finite"));
        }
        if !(1..=3).contains(&self.dim) {
            return Err(Error::param("dim", "must be 1, 2 or 3"));
        }
        self.potential.validate()
    }

    /// Same system with a different Planck parameter.
    pub fn with_hbar(&self, hbar: T) -> Self {
        SystemParams {
            hbar,
            ..self.clone()
        }
    }

    pub(crate) fn require_quantum(&self) -> Result<()> {
        self.validate()?;
        if self.hbar <= T::zero() {
            return Err(Error::param("hbar", "must be positive for wave functions"));
        }
        Ok(())
    }
}

/// Gaussian packet whose width does not depend on hbar.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianPrep<T> {
    pub zeta0: Vec3<T>,
    pub sigma0: T,
    pub v0: Vec3<T>,
}

impl<T: Real> GaussianPrep<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0.is_finite() && self.sigma0 > T::zero()) {
            return Err(Error::param("sigma0", "must be positive"));
        }
        if !(is_finite3(&self.zeta0) && is_finite3(&self.v0)) {
            return Err(Error::param("zeta0/v0", "must be finite"));
        }
        Ok(())
    }
}

/// Harmonic-oscillator coherent state; its width `sqrt(hbar / 2 m omega)` shrinks with hbar.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoherentPrep<T> {
    pub x0: Vec3<T>,
    pub v0: Vec3<T>,
    pub omega: T,
}

impl<T: Real> CoherentPrep<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > T::zero()) {
            return Err(Error::param("omega", "must be positive"));
        }
        if !(is_finite3(&self.x0) && is_finite3(&self.v0)) {
            return Err(Error::param("x0/v0", "must be finite"));
        }
        Ok(())
    }

    pub fn sigma_hbar(&self, params: &SystemParams<T>) -> T {
        (params.hbar / (T::lit(2.0) * params.mass * self.omega)).sqrt()
    }
}

/// Initial-condition families understood by [`prepare_wavefunction`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Preparation<T> {
    Gaussian(GaussianPrep<T>),
    Coherent(CoherentPrep<T>),
    /// Equal-weight superposition of Gaussian packets, renormalized on the grid.
    Superposition(Vec<GaussianPrep<T>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveField<T> {
    pub grid: Grid<T>,
    pub time: T,
    pub values: Vec<Complex<T>>,
}

impl<T: Real> WaveField<T> {
    pub fn density(&self) -> Vec<T> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Gauge record for one connected component of the density support.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentGauge<T> {
    /// Node where unwrapping was seeded (density maximum of the component).
    pub seed: usize,
    /// Action assigned at the seed; the component's action is defined relative to it.
    pub offset: T,
    pub nodes: usize,
}

/// Madelung variables `(rho, S)` on a grid.
///
/// `action` holds `hbar * unwrapped phase` on the support and the principal
/// value elsewhere, so phase-wrapped differences stay meaningful everywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct MadelungFields<T> {
    pub grid: Grid<T>,
    pub time: T,
    pub rho: Vec<T>,
    pub action: Vec<T>,
    pub support: Vec<bool>,
    /// Absolute density cutoff defining `support`.
    pub mass_threshold: T,
    pub components: Vec<ComponentGauge<T>>,
    /// Nodes masked because of unresolved phase jumps.
    pub defects: usize,
}

impl<T: Real> MadelungFields<T> {
    /// Samples closed-form `(rho, S)` on the grid. `relative_threshold` scales the maximum density.
    pub fn from_fn<F>(grid: &Grid<T>, time: T, relative_threshold: T, f: F) -> Self
    where
        F: Fn(&Vec3<T>) -> (T, T),
    {
        let (rho, action): (Vec<T>, Vec<T>) = (0..grid.len()).map(|i| f(&grid.position(i))).unzip();
        let max = rho.iter().fold(T::zero(), |m, &r| m.max(r));
        let threshold = relative_threshold * max;
        let support: Vec<bool> = rho.iter().map(|&r| r > threshold).collect();
        let nodes = support.iter().filter(|&&s| s).count();
        let seed = rho
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, bv), (i, &r)| if r > bv { (i, r) } else { (bi, bv) })
            .0;
        MadelungFields {
            grid: grid.clone(),
            time,
            components: vec![ComponentGauge {
                seed,
                offset: action[seed],
                nodes,
            }],
            rho,
            action,
            support,
            mass_threshold: threshold,
            defects: 0,
        }
    }

    pub fn total_mass(&self) -> T {
        self.rho.iter().copied().sum::<T>() * self.grid.cell_volume()
    }

    pub fn max_density(&self) -> T {
        self.rho.iter().fold(T::zero(), |m, &r| m.max(r))
    }

    /// Marginal node masses along `axis` (sum over the other axes, times cell volume).
    pub fn marginal(&self, axis: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.grid.points()[axis]];
        for (i, &r) in self.rho.iter().enumerate() {
            out[self.grid.multi_index(i)[axis]] = out[self.grid.multi_index(i)[axis]] + r;
        }
        let vol = self.grid.cell_volume();
        out.iter_mut().for_each(|m| *m = *m * vol);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub positions: Vec<Vec3<T>>,
    pub velocities: Vec<Vec3<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.positions.len() || self.times.len() != self.velocities.len() {
            return Err(Error::param("trajectory", "times, positions and velocities differ in length"));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("trajectory.times", "must be strictly increasing"));
        }
        if !self.positions.iter().chain(&self.velocities).all(is_finite3) {
            return Err(Error::param("trajectory", "non-finite state"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_position(&self) -> Option<&Vec3<T>> {
        self.positions.last()
    }
}

/// Local action `S(x, t) = m xi'(t) . x + g(t)` attached to one classical trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalAction<T> {
    pub trajectory: Trajectory<T>,
    /// Acceleration along the trajectory, kept for Hermite interpolation.
    pub accelerations: Vec<Vec3<T>>,
    pub g: Vec<T>,
    /// `dg/dt` at each stored time.
    pub g_rate: Vec<T>,
    pub mass: T,
}

impl<T: Real> LocalAction<T> {
    /// Local action at stored time index `k`.
    pub fn action_at_index(&self, x: &Vec3<T>, k: usize) -> T {
        self.mass * dot3(&self.trajectory.velocities[k], x) + self.g[k]
    }
}

/// Initial offset `eta0` of a Bohm particle from the packet centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BohmSample<T> {
    pub eta0: Vec3<T>,
}

impl<T: Real> BohmSample<T> {
    pub fn start(&self, zeta0: &Vec3<T>) -> Vec3<T> {
        [zeta0[0] + self.eta0[0], zeta0[1] + self.eta0[1], zeta0[2] + self.eta0[2]]
    }
}

fn gaussian_amplitude<T: Real>(x: &Vec3<T>, center: &Vec3<T>, sigma: T, dim: usize) -> T {
    let d = sub3(x, center);
    let two_pi_var = (T::PI() + T::PI()) * sigma * sigma;
    let norm = two_pi_var.powf(-T::lit(dim as f64 / 4.0));
    norm * (-dot3(&d, &d) / (T::lit(4.0) * sigma * sigma)).exp()
}

/// Initial wave function `sqrt(rho0) exp(i m v0 . x / hbar)` for a preparation.
///
/// The density prefactor is `(2 pi sigma^2)^(-dim/2)` and the phase is gauged
/// so that `S0(0) = 0`.
pub fn prepare_wavefunction<T: Real>(
    prep: &Preparation<T>,
    params: &SystemParams<T>,
    grid: &Grid<T>,
) -> Result<WaveField<T>> {
    params.require_quantum()?;
    if grid.dim() != params.dim {
        return Err(Error::param("grid", "dimension differs from system"));
    }
    let zero = [T::zero(); 3];
    let packets: Vec<(Vec3<T>, T, Vec3<T>)> = match prep {
        Preparation::Gaussian(g) => {
            g.validate()?;
            vec![(g.zeta0, g.sigma0, g.v0)]
        }
        Preparation::Coherent(c) => {
            c.validate()?;
            vec![(c.x0, c.sigma_hbar(params), c.v0)]
        }
        Preparation::Superposition(gs) => {
            if gs.is_empty() {
                return Err(Error::param("preparation", "empty superposition"));
            }
            for g in gs {
                g.validate()?;
            }
            gs.iter().map(|g| (g.zeta0, g.sigma0, g.v0)).collect()
        }
    };
    for (center, sigma, _) in &packets {
        grid.check_packet_fits(center, *sigma, &zero)?;
    }
    let m_over_hbar = params.mass / params.hbar;
    let values: Vec<Complex<T>> = (0..grid.len())
        .map(|i| {
            let x = grid.position(i);
            packets
                .iter()
                .map(|(c, s, v)| {
                    let amp = gaussian_amplitude(&x, c, *s, params.dim);
                    Complex::from_polar(amp, m_over_hbar * dot3(v, &x))
                })
                .fold(Complex::new(T::zero(), T::zero()), |acc, z| acc + z)
        })
        .collect();
    let mut psi = WaveField {
        grid: grid.clone(),
        time: T::zero(),
        values,
    };
    if packets.len() > 1 {
        let n = crate::schrodinger::norm(&psi).sqrt();
        psi.values.iter_mut().for_each(|z| *z = *z / n);
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schrodinger::norm;

    #[test]
    fn grid_spacing_and_size() {
        let g = make_grid::<f64>(1, &[(-10.0, 10.0)], &[256]).unwrap();
        assert_eq!(g.spacing()[0], 0.078125);
        let g2 = make_grid::<f64>(2, &[(-8.0, 8.0), (-8.0, 8.0)], &[128, 128]).unwrap();
        assert_eq!(g2.len(), 16384);
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(matches!(make_grid::<f64>(1, &[(-10.0, 10.0)], &[100]), Err(Error::InvalidGrid(_))));
        assert!(make_grid::<f64>(1, &[(1.0, -1.0)], &[64]).is_err());
        assert!(make_grid::<f64>(1, &[(0.0, 1.0)], &[4]).is_err());
        assert!(make_grid_with_cap::<f64>(2, &[(0.0, 1.0), (0.0, 1.0)], &[64, 64], 1000).is_err());
        assert!(make_grid::<f64>(4, &[], &[]).is_err());
    }

    #[test]
    fn flat_and_multi_indices_agree() {
        let g = make_grid::<f64>(3, &[(0.0, 1.0), (0.0, 2.0), (0.0, 3.0)], &[8, 16, 32]).unwrap();
        for flat in [0, 1, 17, 511, 4095] {
            assert_eq!(g.index(g.multi_index(flat)), flat);
        }
        assert_eq!(g.neighbor(0, 0, -1), g.index([7, 0, 0]));
        assert_eq!(g.neighbor_open(0, 2, -1), None);
        assert_eq!(g.stride(0), 512);
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::new(-1.0, 1.0, PotentialSpec::Free, 1).is_err());
        assert!(SystemParams::new(1.0, -1.0, PotentialSpec::Free, 1).is_err());
        assert!(SystemParams::new(1.0, 0.0, PotentialSpec::Free, 1).is_ok());
        assert!(SystemParams::new(1.0, 1.0, PotentialSpec::Harmonic { omega: 0.0 }, 2).is_err());
        assert!(SystemParams::new(1.0, 1.0, PotentialSpec::Free, 4).is_err());
    }

    fn gaussian_1d(sigma0: f64, v0: f64) -> Preparation<f64> {
        Preparation::Gaussian(GaussianPrep {
            zeta0: [0.0; 3],
            sigma0,
            v0: [v0, 0.0, 0.0],
        })
    }

    #[test]
    fn gaussian_peak_density() {
        let grid = make_grid(1, &[(-16.0, 16.0)], &[512]).unwrap();
        let params = SystemParams::new(1.0, 1.0, PotentialSpec::Free, 1).unwrap();
        let psi = prepare_wavefunction(&gaussian_1d(1.0, 0.0), &params, &grid).unwrap();
        let center = grid.nearest_node(&[0.0; 3]).unwrap();
        let peak = psi.values[center].norm_sqr();
        assert!((peak - (2.0 * std::f64::consts::PI).powf(-0.5)).abs() < 1e-15);
        assert!((peak - 0.398942).abs() < 1e-6);
        assert!((norm(&psi) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coherent_peak_density_in_two_dimensions() {
        let grid = make_grid(2, &[(-16.0, 16.0), (-16.0, 16.0)], &[128, 128]).unwrap();
        let params = SystemParams::new(1.0, 2.0, PotentialSpec::Harmonic { omega: 1.0 }, 2).unwrap();
        let prep = CoherentPrep {
            x0: [0.0; 3],
            v0: [0.0; 3],
            omega: 1.0,
        };
        assert_eq!(prep.sigma_hbar(&params), 1.0);
        let psi = prepare_wavefunction(&Preparation::Coherent(prep), &params, &grid).unwrap();
        let center = grid.nearest_node(&[0.0; 3]).unwrap();
        let peak = psi.values[center].norm_sqr();
        assert!((peak - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert!((peak - 0.159155).abs() < 1e-6);
        assert!((norm(&psi) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn phase_gradient_is_m_v0() {
        let grid = make_grid(1, &[(-16.0, 16.0)], &[1024]).unwrap();
        let params = SystemParams::new(2.0, 1.0, PotentialSpec::Free, 1).unwrap();
        let psi = prepare_wavefunction(&gaussian_1d(1.0, 3.0), &params, &grid).unwrap();
        let h = grid.spacing()[0];
        for i in (400..620).step_by(13) {
            let dphi = crate::scalar::wrap_angle((psi.values[i + 1] / psi.values[i]).arg());
            let grad_s = params.hbar * dphi / h;
            assert!((grad_s - 6.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_zero_hbar_and_small_grids() {
        let grid = make_grid(1, &[(-4.0, 4.0)], &[256]).unwrap();
        let params = SystemParams::new(1.0, 0.0, PotentialSpec::Free, 1).unwrap();
        assert!(prepare_wavefunction(&gaussian_1d(0.25, 0.0), &params, &grid).is_err());
        let params = params.with_hbar(1.0);
        // 8 sigma of a unit packet does not fit in [-4, 4).
        assert!(matches!(
            prepare_wavefunction(&gaussian_1d(1.0, 0.0), &params, &grid),
            Err(Error::GridInadequate(_))
        ));
        // too few nodes per sigma
        let coarse = make_grid(1, &[(-4.0, 4.0)], &[8]).unwrap();
        assert!(prepare_wavefunction(&gaussian_1d(0.4, 0.0), &params, &coarse).is_err());
    }
}
