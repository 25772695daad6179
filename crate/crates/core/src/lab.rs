//! hbar -> 0 convergence experiments.
//!
//! Each sweep point is an end-to-end pipeline (closed forms, or a propagated
//! wave function with its Madelung decomposition and Bohm ensemble) whose
//! errors against the classical limit are collected into a
//! [`ConvergenceReport`] with fitted orders.

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{
    classical_limit_fields, coherent_fields_with, coherent_quantum_potential, linear_fields, sigma_hbar, CoherentScenario,
    LinearScenario,
};
use crate::bohm::{
    advance_ensemble, marginal_distance, sample_from_density, AnalyticLinearVelocity, EnsembleState,
    SnapshotVelocity, VelocityMode, MIN_EQUIVARIANCE_SAMPLES,
};
use crate::domain::{
    make_grid_with_cap, prepare_wavefunction, BohmSample, GaussianPrep, Grid, MadelungFields, PotentialSpec,
    Preparation, SystemParams, WaveField, DEFAULT_MAX_NODES, MIN_NODES_PER_SIGMA, PACKET_HALF_WIDTH_SIGMAS,
};
use crate::error::{Error, Result};
use crate::interp;
use crate::madelung::{quantum_potential, residuals, GaugeTracker, ResidualReport, DEFAULT_RELATIVE_THRESHOLD};
use crate::scalar::{dot3, Vec3};
use crate::schrodinger::{boundary_mass, moments, Propagator, BOUNDARY_TAIL_LIMIT};
use crate::stats;

/// Points of the probe stencil on each side of the centre, per axis.
pub const PROBE_HALF_POINTS: usize = 8;

/// Half-width of the probe stencil in units of `sigma0`.
pub const PROBE_HALF_WIDTH_SIGMAS: f64 = 3.0;

/// Ratio of the default geometric sweep.
pub const DEFAULT_SWEEP_RATIO: f64 = 0.5;

/// Length of the default sweep.
pub const DEFAULT_SWEEP_LEN: usize = 6;

/// Discretization must stay this factor below the smallest model error.
pub const BUDGET_FACTOR: f64 = 0.1;

/// Relative tolerance on the ratios of a geometric sweep.
const GEOMETRIC_TOL: f64 = 1e-9;

/// Radius, in packet widths, of the region used for the affine action regression.
pub const AFFINE_REGION_SIGMAS: f64 = 2.0;

/// Semiclassical classification of a preparation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Discernment {
    /// Width independent of hbar: the limit is a statistical (ensemble) description.
    NonDiscerned,
    /// Width shrinking with hbar: the limit is a single classical trajectory.
    Discerned,
}

/// Two Gaussian packets at `(+-separation/2, 0)` sharing width and velocity, in two dimensions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoubleSlit {
    pub separation: f64,
    pub sigma0: f64,
    pub v0: Vec3<f64>,
    pub mass: f64,
}

impl DoubleSlit {
    pub fn validate(&self) -> Result<()> {
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return Err(Error::param("separation", "must be positive"));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::param("mass", "must be positive and finite"));
        }
        for p in self.preps() {
            p.validate()?;
        }
        Ok(())
    }

    pub fn preps(&self) -> [GaussianPrep<f64>; 2] {
        let h = 0.5 * self.separation;
        let v0 = [self.v0[0], self.v0[1], 0.0];
        [
            GaussianPrep {
                zeta0: [-h, 0.0, 0.0],
                sigma0: self.sigma0,
                v0,
            },
            GaussianPrep {
                zeta0: [h, 0.0, 0.0],
                sigma0: self.sigma0,
                v0,
            },
        ]
    }

    pub fn params(&self, hbar: f64) -> Result<SystemParams<f64>> {
        SystemParams::new(self.mass, hbar, PotentialSpec::Free, 2)
    }

    /// CDF along `axis` of the classical two-beam envelope at time `t`:
    /// an equal mixture of the two packets moving rigidly with `v0`.
    pub fn envelope_cdf(&self, axis: usize, x: f64, t: f64) -> f64 {
        self.preps()
            .iter()
            .map(|p| normal_cdf((x - p.zeta0[axis] - p.v0[axis] * t) / self.sigma0))
            .sum::<f64>()
            / 2.0
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Scenario {
    LinearGaussian(LinearScenario<f64>),
    HarmonicCoherent(CoherentScenario<f64>),
    DoubleSlit(DoubleSlit),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::LinearGaussian(_) => "linear-gaussian",
            Scenario::HarmonicCoherent(_) => "harmonic-coherent",
            Scenario::DoubleSlit(_) => "double-slit",
        }
    }

    pub fn discernment(&self) -> Discernment {
        match self {
            Scenario::LinearGaussian(_) | Scenario::DoubleSlit(_) => Discernment::NonDiscerned,
            Scenario::HarmonicCoherent(_) => Discernment::Discerned,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Scenario::LinearGaussian(s) => {
                s.params.validate()?;
                s.prep.validate()
            }
            Scenario::HarmonicCoherent(s) => s.validate(),
            Scenario::DoubleSlit(d) => d.validate(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EvaluationPath {
    /// Closed-form fields; only trajectories are integrated numerically.
    Analytic,
    /// Split-step propagation followed by Madelung decomposition.
    Solver,
}

/// Resolution and sampling parameters of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepBudget {
    pub path: EvaluationPath,
    /// Evaluation time.
    pub time: f64,
    /// Propagator and trajectory step.
    pub dt: f64,
    /// Lower bound on grid nodes per packet width.
    pub nodes_per_sigma: f64,
    /// Spacing of the snapshots used for gauge tracking and Bohm velocities.
    pub sample_interval: f64,
    /// Bohm samples per sweep point.
    pub n_samples: usize,
    pub seed: u64,
    pub max_nodes: usize,
}

impl SweepBudget {
    pub fn new(path: EvaluationPath, time: f64) -> Self {
        SweepBudget {
            path,
            time,
            dt: 1e-3,
            nodes_per_sigma: MIN_NODES_PER_SIGMA,
            sample_interval: 1e-2,
            n_samples: 256,
            seed: 0,
            max_nodes: DEFAULT_MAX_NODES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.time.is_finite() && self.time > 0.0) {
            bad.push("time: must be positive".to_string());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            bad.push("dt: must be positive".to_string());
        }
        if !(self.nodes_per_sigma >= MIN_NODES_PER_SIGMA) {
            bad.push(format!("nodes_per_sigma: must be at least {MIN_NODES_PER_SIGMA}"));
        }
        if !(self.sample_interval.is_finite() && self.sample_interval >= self.dt) {
            bad.push("sample_interval: must be at least dt".to_string());
        }
        if self.n_samples == 0 {
            bad.push("n_samples: must be at least 1".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad))
        }
    }
}

/// `hbar0, hbar0 r, ..., hbar0 r^(n-1)`
pub fn geometric_hbars(hbar0: f64, ratio: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| hbar0 * ratio.powi(k as i32)).collect()
}

/// The default sweep `1, 1/2, ..., 1/32`.
pub fn default_hbars() -> Vec<f64> {
    geometric_hbars(1.0, DEFAULT_SWEEP_RATIO, DEFAULT_SWEEP_LEN)
}

/// Least-squares slope of `log error` against `log hbar`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderFit {
    pub order: f64,
    /// Standard error of the slope.
    pub ci: f64,
    pub points: usize,
    /// Exact zeros left out of the fit.
    pub excluded_zeros: usize,
}

/// Fits `error ~ c hbar^order`. Exact zeros are excluded (and counted); at
/// least four positive errors must remain.
pub fn fit_order(errors: &[f64], hbars: &[f64]) -> Result<OrderFit> {
    if errors.len() != hbars.len() {
        return Err(Error::param("errors", "length differs from hbars"));
    }
    if let Some(k) = errors.iter().position(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::NonPositive { index: k });
    }
    if let Some(k) = hbars.iter().position(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::NonPositive { index: k });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = hbars
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .unzip();
    if x.len() < 4 {
        return Err(Error::TooFewSamples { got: x.len(), need: 4 });
    }
    let fit = stats::fit_line(&x, &y)?;
    Ok(OrderFit {
        order: fit.slope,
        ci: fit.slope_stderr,
        points: x.len(),
        excluded_zeros: errors.len() - x.len(),
    })
}

/// Probe stencil: the centre plus `PROBE_HALF_POINTS` points on each side
/// along every active axis, spanning `+-3 sigma0`.
pub fn probe_points(center: &Vec3<f64>, sigma0: f64, dim: usize) -> Vec<Vec3<f64>> {
    let step = PROBE_HALF_WIDTH_SIGMAS * sigma0 / PROBE_HALF_POINTS as f64;
    let mut out = vec![*center];
    for axis in 0..dim {
        for k in 1..=PROBE_HALF_POINTS as i64 {
            for sign in [-1.0, 1.0] {
                let mut p = *center;
                p[axis] += sign * k as f64 * step;
                out.push(p);
            }
        }
    }
    out
}

/// One metric across the sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricSeries {
    pub name: String,
    pub values: Vec<f64>,
    /// Order the closed forms predict, when there is one.
    pub expected_order: Option<f64>,
    pub fit: Option<OrderFit>,
    pub note: Option<String>,
}

impl MetricSeries {
    fn new(name: &str, values: Vec<f64>, expected_order: Option<f64>) -> Self {
        MetricSeries {
            name: name.to_string(),
            values,
            expected_order,
            fit: None,
            note: None,
        }
    }
}

/// Discretization estimate of one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BudgetEntry {
    pub hbar: f64,
    pub points: [usize; 3],
    pub spacing: f64,
    pub dt: f64,
    /// Named error estimates; the largest dominates.
    pub terms: Vec<(String, f64)>,
}

impl BudgetEntry {
    pub fn dominant(&self) -> (&str, f64) {
        self.terms
            .iter()
            .fold(("none", 0.0), |(n, v), (k, e)| if *e > v { (k.as_str(), *e) } else { (n, v) })
    }
}

/// Per-point counts recorded for the manifest.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PointCounts {
    pub flagged_samples: usize,
    pub phase_defects: usize,
    pub gauge_turns: i64,
    pub max_velocity_change: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub scenario: String,
    pub discernment: Discernment,
    pub path: EvaluationPath,
    pub time: f64,
    pub hbar_values: Vec<f64>,
    pub metrics: Vec<MetricSeries>,
    pub budgets: Vec<BudgetEntry>,
    pub counts: Vec<PointCounts>,
    pub residuals: Vec<Option<ResidualReport<f64>>>,
    pub flags: Vec<String>,
}

impl ConvergenceReport {
    pub fn metric(&self, name: &str) -> Option<&MetricSeries> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

/// Final fields and Bohm endpoints of one sweep point, for serialization.
#[derive(Clone, Debug)]
pub struct PointArtifacts {
    pub hbar: f64,
    pub fields: Option<MadelungFields<f64>>,
    pub quantum_potential: Option<Vec<f64>>,
    pub endpoints: Vec<Vec3<f64>>,
}

/// Result of one sweep point before assembly.
struct PointResult {
    metrics: Vec<(&'static str, f64)>,
    budget: BudgetEntry,
    counts: PointCounts,
    residuals: Option<ResidualReport<f64>>,
    artifacts: PointArtifacts,
}

fn check_sweep(scenario: &Scenario, hbars: &[f64]) -> Result<()> {
    let min_len = if matches!(scenario, Scenario::DoubleSlit(_)) { 4 } else { 5 };
    if hbars.len() < min_len {
        return Err(Error::TooFewSamples {
            got: hbars.len(),
            need: min_len,
        });
    }
    if let Some(k) = hbars.iter().position(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::NonPositive { index: k });
    }
    if hbars.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("hbars", "must be strictly decreasing"));
    }
    let r = hbars[1] / hbars[0];
    if hbars.windows(2).any(|w| ((w[1] / w[0]) - r).abs() > GEOMETRIC_TOL * r) {
        return Err(Error::param("hbars", "must be geometric"));
    }
    if min_len == 5 && hbars[0] / hbars[hbars.len() - 1] < 10.0 * (1.0 - GEOMETRIC_TOL) {
        return Err(Error::param("hbars", "must span at least one decade"));
    }
    Ok(())
}

/// Runs the sweep and assembles the report.
pub fn hbar_sweep(scenario: &Scenario, hbars: &[f64], budget: &SweepBudget) -> Result<ConvergenceReport> {
    hbar_sweep_with_artifacts(scenario, hbars, budget).map(|(r, _)| r)
}

/// As [`hbar_sweep`], also returning the final fields and Bohm endpoints of every point.
pub fn hbar_sweep_with_artifacts(
    scenario: &Scenario,
    hbars: &[f64],
    budget: &SweepBudget,
) -> Result<(ConvergenceReport, Vec<PointArtifacts>)> {
    scenario.validate()?;
    budget.validate()?;
    check_sweep(scenario, hbars)?;
    let common_grid = match scenario {
        Scenario::DoubleSlit(ds) => Some(double_slit_grid(ds, hbars, budget)?),
        _ => None,
    };
    let points: Vec<PointResult> = hbars
        .par_iter()
        .map(|&h| match scenario {
            Scenario::LinearGaussian(s) => linear_point(&s.with_hbar(h), budget),
            Scenario::HarmonicCoherent(s) => coherent_point(&s.with_hbar(h), budget),
            Scenario::DoubleSlit(ds) => double_slit_point(ds, h, budget, common_grid.as_ref().expect("grid")),
        })
        .collect::<Result<_>>()?;
    Ok(assemble(scenario, hbars, budget, points))
}

fn expected_order(scenario: &Scenario, metric: &str) -> Option<f64> {
    match (scenario, metric) {
        (Scenario::LinearGaussian(_), "density_linf" | "action_linf" | "trajectory_linf") => Some(2.0),
        (Scenario::HarmonicCoherent(_), "second_moment" | "q_on_trajectory" | "intercept_error") => Some(1.0),
        (Scenario::HarmonicCoherent(_), "lsq_without_q") => Some(2.0),
        _ => None,
    }
}

/// Metrics expected to shrink with hbar (checked for monotonicity).
fn expected_decreasing(scenario: &Scenario, metric: &str) -> bool {
    expected_order(scenario, metric).is_some() || matches!((scenario, metric), (Scenario::DoubleSlit(_), "envelope_divergence"))
}

/// Allowed non-monotone wiggle: sampling noise for ensemble statistics,
/// rounding otherwise.
fn noise_floor(metric: &str, n_samples: usize) -> f64 {
    match metric {
        // Two-sided 95% Kolmogorov band.
        "envelope_divergence" | "equivariance" | "equivariance_max" => 1.36 / (n_samples as f64).sqrt(),
        _ => 1e-13,
    }
}

fn assemble(
    scenario: &Scenario,
    hbars: &[f64],
    budget: &SweepBudget,
    points: Vec<PointResult>,
) -> (ConvergenceReport, Vec<PointArtifacts>) {
    let names: Vec<&'static str> = points[0].metrics.iter().map(|(n, _)| *n).collect();
    let mut flags = Vec::new();
    let mut metrics = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let values: Vec<f64> = points.iter().map(|p| p.metrics[j].1).collect();
        let mut series = MetricSeries::new(name, values, expected_order(scenario, name));
        if series.expected_order.is_some() {
            match fit_order(&series.values, hbars) {
                Ok(fit) => {
                    if fit.excluded_zeros > 0 {
                        series.note = Some(format!("{} exact zeros excluded from the fit", fit.excluded_zeros));
                    }
                    series.fit = Some(fit);
                }
                Err(e) => series.note = Some(format!("no order fitted: {e}")),
            }
        }
        if expected_decreasing(scenario, name) {
            let floor = noise_floor(name, budget.n_samples);
            for (k, w) in series.values.windows(2).enumerate() {
                if w[1] > w[0] + floor {
                    let (term, est) = points[k + 1].budget.dominant();
                    flags.push(format!(
                        "{name}: non-monotone at hbar = {}; resolution-limited, dominant budget term {term} ({est:.3e})",
                        hbars[k + 1]
                    ));
                }
            }
        }
        metrics.push(series);
    }
    if let Some(primary) = metrics.iter().find(|m| m.expected_order.is_some()) {
        let smallest = primary.values.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
        for p in &points {
            let (term, est) = p.budget.dominant();
            if smallest.is_finite() && est > BUDGET_FACTOR * smallest {
                flags.push(format!(
                    "hbar = {}: discretization estimate {est:.3e} ({term}) above {BUDGET_FACTOR} x smallest {} ({smallest:.3e})",
                    p.budget.hbar, primary.name
                ));
            }
        }
    }
    let mut budgets = Vec::new();
    let mut counts = Vec::new();
    let mut res = Vec::new();
    let mut artifacts = Vec::new();
    for p in points {
        budgets.push(p.budget);
        counts.push(p.counts);
        res.push(p.residuals);
        artifacts.push(p.artifacts);
    }
    (
        ConvergenceReport {
            scenario: scenario.name().to_string(),
            discernment: scenario.discernment(),
            path: budget.path,
            time: budget.time,
            hbar_values: hbars.to_vec(),
            metrics,
            budgets,
            counts,
            residuals: res,
            flags,
        },
        artifacts,
    )
}

/// Largest power of two not above `x`.
fn pow2_floor(x: f64) -> f64 {
    2f64.powi(x.log2().floor() as i32)
}

/// Grid symmetric about the origin with a power-of-two spacing not above
/// `dx_target`, covering `[lo, hi]` on every active axis.
pub fn covering_grid(dim: usize, extent: &[(f64, f64)], dx_target: f64, max_nodes: usize) -> Result<Grid<f64>> {
    if !(dx_target.is_finite() && dx_target > 0.0) {
        return Err(Error::param("spacing", "must be positive"));
    }
    let dx = pow2_floor(dx_target);
    let mut bounds = Vec::with_capacity(dim);
    let mut points = Vec::with_capacity(dim);
    for &(lo, hi) in extent.iter().take(dim) {
        let half = lo.abs().max(hi.abs()) + dx;
        let n = ((2.0 * half / dx).ceil() as usize).next_power_of_two().max(crate::domain::MIN_POINTS);
        let l = n as f64 * dx / 2.0;
        bounds.push((-l, l));
        points.push(n);
    }
    make_grid_with_cap(dim, &bounds, &points, max_nodes)
}

/// Spacing that resolves a packet of width `sigma` moving with wavenumber `k_center`.
fn resolving_spacing(sigma: f64, k_center: f64, nodes_per_sigma: f64) -> f64 {
    // Spectrum of the packet: exp(-(k - kc)^2 sigma^2); keep six e-foldings of amplitude.
    let k_max = k_center.abs() + 6.0 / sigma;
    (sigma / nodes_per_sigma).min(std::f64::consts::PI / k_max)
}

fn spectral_term(grid: &Grid<f64>, sigma: f64, k_center: f64) -> f64 {
    let k_nyq = std::f64::consts::PI / grid.min_spacing();
    let gap = (k_nyq - k_center.abs()).max(0.0);
    (-(gap * sigma).powi(2)).exp()
}

/// Advances `psi` by `n` steps, checking for blow-up and boundary leakage.
fn advance(prop: &Propagator<f64>, psi: &mut WaveField<f64>, n: usize) -> Result<()> {
    for _ in 0..n {
        prop.step(psi);
    }
    if !psi.is_finite() {
        return Err(Error::Numerical(format!("non-finite wave function at t = {}", psi.time)));
    }
    let tail = boundary_mass(psi);
    if tail > BOUNDARY_TAIL_LIMIT {
        return Err(Error::GridInadequate(format!(
            "boundary probability {tail:e} exceeds {BOUNDARY_TAIL_LIMIT:e} at t = {}",
            psi.time
        )));
    }
    Ok(())
}

/// Gauge-tracked fields at `t - delta`, `t` and `t + delta`, with `delta` a
/// whole number of sampling intervals.
struct Propagated {
    before: MadelungFields<f64>,
    at: MadelungFields<f64>,
    after: MadelungFields<f64>,
    turns: i64,
}

/// Propagates `psi0` to `time + delta`, decomposing every sampling interval
/// with a gauge tracker anchored at `anchor`. `visit` sees every decomposed
/// snapshot up to `time`.
fn propagate_tracked(
    psi0: WaveField<f64>,
    params: &SystemParams<f64>,
    budget: &SweepBudget,
    anchor: MadelungFields<f64>,
    mut visit: impl FnMut(&MadelungFields<f64>) -> Result<()>,
) -> Result<Propagated> {
    let t = budget.time;
    let n = (t / budget.dt).ceil() as usize;
    let dt = t / n as f64;
    let k = ((budget.sample_interval / dt).round() as usize).clamp(1, n);
    let prop = Propagator::new(&psi0.grid, params, dt, 0.0)?;
    let rel = DEFAULT_RELATIVE_THRESHOLD;
    let mut tracker = GaugeTracker::anchored(anchor, rel);
    let mut psi = psi0;
    let first = tracker.decompose(&psi, params)?;
    visit(&first)?;
    let mut done = 0;
    let mut before = None;
    let mut marks: Vec<usize> = (1..=n / k).map(|j| j * k).filter(|&s| s < n - k.min(n)).collect();
    marks.extend([n - k, n]);
    marks.retain(|&s| s > 0);
    marks.dedup();
    for &s in &marks {
        advance(&prop, &mut psi, s - done)?;
        done = s;
        let f = tracker.decompose(&psi, params)?;
        visit(&f)?;
        if s == n - k {
            before = Some(f);
        }
    }
    let at = tracker.decompose(&psi, params)?;
    advance(&prop, &mut psi, k)?;
    let after = tracker.decompose(&psi, params)?;
    let before = match before {
        Some(b) => b,
        None => first,
    };
    Ok(Propagated {
        before,
        at,
        after,
        turns: tracker.turns,
    })
}

fn max_abs_diff(a: &[(f64, f64)], b: &[(f64, f64)]) -> (f64, f64) {
    a.iter().zip(b).fold((0.0, 0.0), |(dr, ds), (x, y)| {
        (dr.max((x.0 - y.0).abs()), ds.max((x.1 - y.1).abs()))
    })
}

/// Samples `(rho, S)` of decomposed fields at arbitrary points.
fn sample_fields(fields: &MadelungFields<f64>, points: &[Vec3<f64>]) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(|p| {
            let [r, s] = interp::sample_many(&fields.grid, [fields.rho.as_slice(), fields.action.as_slice()], p);
            (r, s)
        })
        .collect()
}

/// Probe-set errors of `(rho, S)` against a reference; zero for a self-comparison.
pub fn probe_errors(quantum: &[(f64, f64)], classical: &[(f64, f64)]) -> (f64, f64) {
    max_abs_diff(quantum, classical)
}

fn linear_point(scen: &LinearScenario<f64>, budget: &SweepBudget) -> Result<PointResult> {
    let t = budget.time;
    let p = &scen.params;
    let dim = p.dim;
    let sigma0 = scen.prep.sigma0;
    let center = scen.center(t);
    let probes = probe_points(&center, sigma0, dim);
    let classical: Vec<(f64, f64)> = probes.iter().map(|x| classical_limit_fields(x, t, scen)).collect();

    let v_end: Vec3<f64> = std::array::from_fn(|a| scen.prep.v0[a] + scen.force[a] * t / p.mass);
    let v_max = norm(&scen.prep.v0).max(norm(&v_end));
    let k_center = p.mass * v_max / p.hbar;
    let sigma_t = sigma_hbar(t, p, sigma0);
    let mut counts = PointCounts::default();
    let mut terms = Vec::new();
    let mut grid_points = [1usize; 3];
    let mut spacing = 0.0;

    let samples = crate::bohm::sample_gaussian_prep(&scen.prep, dim, budget.n_samples, budget.seed);
    let (quantum, residual, fields, endpoints) = match budget.path {
        EvaluationPath::Analytic => {
            let quantum: Vec<(f64, f64)> = probes.iter().map(|x| linear_fields(x, t, scen)).collect();
            let source = AnalyticLinearVelocity::new(scen.clone(), VelocityMode::Standard)?;
            let mut state = EnsembleState::start(&source, &samples, &scen.prep.zeta0, 0.0);
            advance_ensemble(&source, &mut state, t, budget.dt)?;
            counts.flagged_samples = state.flagged.iter().filter(|f| f.is_some()).count();
            terms.push(("trajectory_rk4".to_string(), budget.dt.powi(4)));
            (quantum, None, None, state.positions)
        }
        EvaluationPath::Solver => {
            let lo: Vec<(f64, f64)> = (0..dim)
                .map(|a| {
                    let reach = PACKET_HALF_WIDTH_SIGMAS * sigma_t;
                    (scen.prep.zeta0[a].min(center[a]) - reach, scen.prep.zeta0[a].max(center[a]) + reach)
                })
                .collect();
            let dx = resolving_spacing(sigma0, k_center, budget.nodes_per_sigma);
            let grid = covering_grid(dim, &lo, dx, budget.max_nodes)?;
            grid_points = *grid.points();
            spacing = grid.min_spacing();
            terms.push(("spectral".to_string(), spectral_term(&grid, sigma0, k_center)));
            let k2: f64 = dot3(&scen.force, &scen.force);
            terms.push(("splitting".to_string(), k2 * t * budget.dt * budget.dt / (24.0 * p.mass)));
            let psi0 = prepare_wavefunction(&Preparation::Gaussian(scen.prep.clone()), p, &grid)?;
            let anchor = MadelungFields::from_fn(&grid, 0.0, DEFAULT_RELATIVE_THRESHOLD, |x| linear_fields(x, 0.0, scen));
            let mut velocity = SnapshotVelocity::empty(&grid, p, VelocityMode::Standard)?;
            let mut state: Option<EnsembleState<f64>> = None;
            let mut defects = 0;
            let prop = propagate_tracked(psi0, p, budget, anchor, |f| {
                defects = defects.max(f.defects);
                velocity.push(f)?;
                match state.as_mut() {
                    None => state = Some(EnsembleState::start(&velocity, &samples, &scen.prep.zeta0, f.time)),
                    Some(s) => {
                        advance_ensemble(&velocity, s, f.time, budget.dt)?;
                    }
                }
                velocity.retain_last();
                Ok(())
            })?;
            let state = state.expect("initial snapshot visited");
            counts.flagged_samples = state.flagged.iter().filter(|f| f.is_some()).count();
            counts.phase_defects = defects;
            counts.gauge_turns = prop.turns;
            counts.max_velocity_change = velocity.max_relative_change();
            let quantum = sample_fields(&prop.at, &probes);
            let residual = residuals(&prop.before, &prop.at, &prop.after, p)?;
            (quantum, Some(residual), Some(prop.at), state.positions)
        }
    };
    let (density_linf, action_linf) = probe_errors(&quantum, &classical);
    let trajectory_linf = samples
        .iter()
        .zip(&endpoints)
        .map(|(s, x)| {
            let start = s.start(&scen.prep.zeta0);
            let classical: Vec3<f64> =
                std::array::from_fn(|a| start[a] + scen.prep.v0[a] * t + scen.force[a] * t * t / (2.0 * p.mass));
            (0..dim).map(|a| (x[a] - classical[a]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let q = fields.as_ref().map(|f| quantum_potential(f, p).values);
    Ok(PointResult {
        metrics: vec![
            ("density_linf", density_linf),
            ("action_linf", action_linf),
            ("trajectory_linf", trajectory_linf),
        ],
        budget: BudgetEntry {
            hbar: p.hbar,
            points: grid_points,
            spacing,
            dt: budget.dt,
            terms,
        },
        counts,
        residuals: residual,
        artifacts: PointArtifacts {
            hbar: p.hbar,
            fields,
            quantum_potential: q,
            endpoints,
        },
    })
}

fn norm(v: &Vec3<f64>) -> f64 {
    dot3(v, v).sqrt()
}

/// Weighted least-squares affine fit `S ~ a + b . x` over the given nodes.
/// Returns `(a, b, rms residual)`.
pub fn affine_fit(points: &[Vec3<f64>], values: &[f64], dim: usize) -> Result<(f64, Vec3<f64>, f64)> {
    let n = points.len();
    if n < dim + 2 {
        return Err(Error::TooFewSamples { got: n, need: dim + 2 });
    }
    // Normal equations on centred coordinates.
    let mean: Vec3<f64> = std::array::from_fn(|a| points.iter().map(|p| p[a]).sum::<f64>() / n as f64);
    let vm = values.iter().sum::<f64>() / n as f64;
    let mut m = [[0.0; 3]; 3];
    let mut r = [0.0; 3];
    for (p, v) in points.iter().zip(values) {
        for a in 0..dim {
            r[a] += (p[a] - mean[a]) * (v - vm);
            for b in 0..dim {
                m[a][b] += (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    let slope = solve_small(&m, &r, dim)?;
    let intercept = vm - dot3(&slope, &mean);
    let ssr: f64 = points
        .iter()
        .zip(values)
        .map(|(p, v)| (v - intercept - dot3(&slope, p)).powi(2))
        .sum();
    Ok((intercept, slope, (ssr / n as f64).sqrt()))
}

/// Gaussian elimination with partial pivoting for `dim <= 3`.
fn solve_small(m: &[[f64; 3]; 3], r: &[f64; 3], dim: usize) -> Result<Vec3<f64>> {
    let mut a = *m;
    let mut b = *r;
    for col in 0..dim {
        let piv = (col..dim)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::Numerical("singular regression".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..dim {
            let f = a[row][col] / a[col][col];
            for k in col..dim {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..dim).rev() {
        let s: f64 = (row + 1..dim).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

fn coherent_point(scen: &CoherentScenario<f64>, budget: &SweepBudget) -> Result<PointResult> {
    let t = budget.time;
    let p = &scen.params;
    let dim = p.dim;
    let sigma = scen.sigma();
    let omega = scen.prep.omega;
    let (xi, dxi) = scen.trajectory(t);
    let g = scen.g(t);

    // Region swept by the packet over [0, t + interval].
    let t_end = t + budget.sample_interval;
    let n_track = 64;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut v_max: f64 = 0.0;
    for j in 0..=n_track {
        let (x, v) = scen.trajectory(t_end * j as f64 / n_track as f64);
        v_max = v_max.max(norm(&v));
        for a in 0..dim {
            lo[a] = lo[a].min(x[a]);
            hi[a] = hi[a].max(x[a]);
        }
    }
    let reach = PACKET_HALF_WIDTH_SIGMAS * sigma;
    let extent: Vec<(f64, f64)> = (0..dim).map(|a| (lo[a] - reach, hi[a] + reach)).collect();
    let k_center = p.mass * v_max / p.hbar;
    let dx = resolving_spacing(sigma, k_center, budget.nodes_per_sigma);
    let grid = covering_grid(dim, &extent, dx, budget.max_nodes)?;
    let mut terms = vec![("spectral".to_string(), spectral_term(&grid, sigma, k_center))];
    let mut counts = PointCounts::default();

    let exact = |time: f64| {
        let gt = scen.g(time);
        MadelungFields::from_fn(&grid, time, DEFAULT_RELATIVE_THRESHOLD, |x| {
            coherent_fields_with(x, time, scen, gt)
        })
    };
    let (before, at, after, q_xi) = match budget.path {
        EvaluationPath::Analytic => {
            let d = budget.sample_interval;
            let q = coherent_quantum_potential(&xi, t, scen);
            (exact(t - d), exact(t), exact(t + d), q)
        }
        EvaluationPath::Solver => {
            // Strang splitting in a quadratic potential: phase error ~ (omega dt)^2 per unit time.
            terms.push((
                "splitting".to_string(),
                (omega * budget.dt).powi(2) * omega * t * p.hbar.max(p.mass * v_max * v_max) / 24.0,
            ));
            let psi0 = prepare_wavefunction(&Preparation::Coherent(scen.prep.clone()), p, &grid)?;
            let anchor = exact(0.0);
            let mut defects = 0;
            let prop = propagate_tracked(psi0, p, budget, anchor, |f| {
                defects = defects.max(f.defects);
                Ok(())
            })?;
            counts.phase_defects = defects;
            counts.gauge_turns = prop.turns;
            let q = quantum_potential(&prop.at, p);
            let q_xi = match grid.nearest_node(&xi) {
                Some(i) if (0..dim).all(|a| (grid.position(i)[a] - xi[a]).abs() < 1e-12) => q.values[i],
                _ => interp::sample_many(&grid, [q.values.as_slice()], &xi)[0],
            };
            (prop.before, prop.at, prop.after, q_xi)
        }
    };

    // Second moment about xi(t), per axis, averaged over axes.
    let psi_like = WaveField {
        grid: grid.clone(),
        time: t,
        values: at.rho.iter().map(|r| num_complex::Complex::new(r.sqrt(), 0.0)).collect(),
    };
    let (mean, var) = moments(&psi_like);
    let second: f64 = (0..dim).map(|a| var[a] + (mean[a] - xi[a]).powi(2)).sum::<f64>() / dim as f64;

    let region = AFFINE_REGION_SIGMAS * sigma;
    let (pts, vals): (Vec<Vec3<f64>>, Vec<f64>) = (0..grid.len())
        .filter(|&i| at.support[i])
        .map(|i| (grid.position(i), at.action[i]))
        .filter(|(x, _)| (0..dim).map(|a| (x[a] - xi[a]).powi(2)).sum::<f64>() <= region * region)
        .unzip();
    let (intercept, slope, affine_rms) = affine_fit(&pts, &vals, dim)?;
    let slope_error = (0..dim).map(|a| (slope[a] - p.mass * dxi[a]).abs()).fold(0.0, f64::max);
    let intercept_error = (intercept - g).abs();
    let residual = residuals(&before, &at, &after, p)?;
    let q_fields = quantum_potential(&at, p).values;
    let sigma2 = p.hbar / (2.0 * p.mass * omega);
    Ok(PointResult {
        metrics: vec![
            ("second_moment", second),
            ("second_moment_rel_error", (second - sigma2).abs() / sigma2),
            ("q_on_trajectory", q_xi),
            ("affine_residual", affine_rms),
            ("slope_error", slope_error),
            ("intercept_error", intercept_error),
            ("lsq_with_q", residual.lsq_functional),
            ("lsq_without_q", residual.lsq_functional_without_q),
        ],
        budget: BudgetEntry {
            hbar: p.hbar,
            points: *grid.points(),
            spacing: grid.min_spacing(),
            dt: budget.dt,
            terms,
        },
        counts,
        residuals: Some(residual),
        artifacts: PointArtifacts {
            hbar: p.hbar,
            fields: Some(at),
            quantum_potential: Some(q_fields),
            endpoints: Vec::new(),
        },
    })
}

fn double_slit_grid(ds: &DoubleSlit, hbars: &[f64], budget: &SweepBudget) -> Result<Grid<f64>> {
    let t = budget.time;
    let h_max = hbars.iter().copied().fold(0.0, f64::max);
    let h_min = hbars.iter().copied().fold(f64::INFINITY, f64::min);
    let p = ds.params(h_max)?;
    let sigma_t = sigma_hbar(t, &p, ds.sigma0);
    let reach = PACKET_HALF_WIDTH_SIGMAS * sigma_t;
    let preps = ds.preps();
    let extent: Vec<(f64, f64)> = (0..2)
        .map(|a| {
            let ends = preps.iter().flat_map(|q| [q.zeta0[a], q.zeta0[a] + q.v0[a] * t]);
            let (lo, hi) = ends.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
            (lo - reach, hi + reach)
        })
        .collect();
    let k_center = ds.mass * norm(&ds.v0) / h_min;
    let dx = resolving_spacing(ds.sigma0, k_center, budget.nodes_per_sigma);
    covering_grid(2, &extent, dx, budget.max_nodes)
}

fn double_slit_point(ds: &DoubleSlit, hbar: f64, budget: &SweepBudget, grid: &Grid<f64>) -> Result<PointResult> {
    let t = budget.time;
    let p = ds.params(hbar)?;
    let preps = ds.preps().to_vec();
    let psi0 = prepare_wavefunction(&Preparation::Superposition(preps.clone()), &p, grid)?;
    let s0 = |x: &Vec3<f64>| p.mass * dot3(&ds.v0, x);
    let anchor = MadelungFields::from_fn(grid, 0.0, DEFAULT_RELATIVE_THRESHOLD, |x| (psi0_density(&psi0, grid, x), s0(x)));
    let mut velocity = SnapshotVelocity::empty(grid, &p, VelocityMode::Standard)?;
    let mut state: Option<EnsembleState<f64>> = None;
    let mut samples: Vec<BohmSample<f64>> = Vec::new();
    let mut defects = 0;
    let mut worst_ks: f64 = 0.0;
    let prop = propagate_tracked(psi0, &p, budget, anchor, |f| {
        defects = defects.max(f.defects);
        velocity.push(f)?;
        match state.as_mut() {
            None => {
                samples = sample_from_density(f, &[0.0; 3], budget.n_samples, budget.seed)?;
                state = Some(EnsembleState::start(&velocity, &samples, &[0.0; 3], f.time));
            }
            Some(s) => {
                advance_ensemble(&velocity, s, f.time, budget.dt.max(budget.sample_interval))?;
            }
        }
        velocity.retain_last();
        let s = state.as_ref().expect("started above");
        let alive: Vec<Vec3<f64>> = s
            .positions
            .iter()
            .zip(&s.flagged)
            .filter(|(_, f)| f.is_none())
            .map(|(x, _)| *x)
            .collect();
        worst_ks = worst_ks.max(marginal_distance(&alive, f));
        Ok(())
    })?;
    let state = state.expect("initial snapshot visited");
    let alive: Vec<Vec3<f64>> = state
        .positions
        .iter()
        .zip(&state.flagged)
        .filter(|(_, f)| f.is_none())
        .map(|(x, _)| *x)
        .collect();
    if alive.len() < MIN_EQUIVARIANCE_SAMPLES {
        return Err(Error::TooFewSamples {
            got: alive.len(),
            need: MIN_EQUIVARIANCE_SAMPLES,
        });
    }
    let equivariance = marginal_distance(&alive, &prop.at);
    let equivariance_max = worst_ks.max(equivariance);
    let xs: Vec<f64> = alive.iter().map(|x| x[0]).collect();
    let envelope_divergence = stats::ks_statistic(&xs, |x| ds.envelope_cdf(0, x, t));
    // Noise-free counterpart: the density marginal against the envelope, at cell edges.
    let marginal = prop.at.marginal(0);
    let total: f64 = marginal.iter().sum();
    let dx = grid.spacing()[0];
    let mut acc = 0.0;
    let mut density_divergence: f64 = 0.0;
    for (j, m) in marginal.iter().enumerate() {
        acc += m / total;
        let edge = grid.coordinate(0, j) + 0.5 * dx;
        density_divergence = density_divergence.max((acc - ds.envelope_cdf(0, edge, t)).abs());
    }
    let residual = residuals(&prop.before, &prop.at, &prop.after, &p)?;
    let counts = PointCounts {
        flagged_samples: state.flagged.iter().filter(|f| f.is_some()).count(),
        phase_defects: defects,
        gauge_turns: prop.turns,
        max_velocity_change: velocity.max_relative_change(),
    };
    let q = quantum_potential(&prop.at, &p).values;
    Ok(PointResult {
        metrics: vec![
            ("equivariance", equivariance),
            ("equivariance_max", equivariance_max),
            ("envelope_divergence", envelope_divergence),
            ("density_divergence", density_divergence),
            ("hj_residual_l2", residual.hj_residual_l2),
            ("continuity_residual_l2", residual.continuity_residual_l2),
        ],
        budget: BudgetEntry {
            hbar,
            points: *grid.points(),
            spacing: grid.min_spacing(),
            dt: budget.dt,
            terms: vec![(
                "spectral".to_string(),
                spectral_term(grid, ds.sigma0, ds.mass * norm(&ds.v0) / hbar),
            )],
        },
        counts,
        residuals: Some(residual),
        artifacts: PointArtifacts {
            hbar,
            fields: Some(prop.at),
            quantum_potential: Some(q),
            endpoints: state.positions,
        },
    })
}

/// `|psi0|^2` at a node position (the anchor only needs node values).
fn psi0_density(psi0: &WaveField<f64>, grid: &Grid<f64>, x: &Vec3<f64>) -> f64 {
    grid.nearest_node(x).map_or(0.0, |i| psi0.values[i].norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_order_of_synthetic_powers() {
        let h = default_hbars();
        let quad: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        let f = fit_order(&quad, &h).unwrap();
        assert!((f.order - 2.0).abs() < 1e-12 && f.ci < 1e-12);
        let lin: Vec<f64> = h.iter().map(|x| 0.7 * x).collect();
        assert!((fit_order(&lin, &h).unwrap().order - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_order_rejects_negative_and_excludes_zeros() {
        let h = default_hbars();
        let mut e: Vec<f64> = h.iter().map(|x| x * x).collect();
        e[0] = 0.0;
        let f = fit_order(&e, &h).unwrap();
        assert_eq!(f.excluded_zeros, 1);
        e[1] = -1.0;
        assert!(matches!(fit_order(&e, &h), Err(Error::NonPositive { index: 1 })));
        assert!(fit_order(&[1.0, 0.5, 0.25], &[1.0, 0.5, 0.25]).is_err());
    }

    #[test]
    fn probe_stencil_shape() {
        let p = probe_points(&[0.75, 0.0, 0.0], 1.0, 1);
        assert_eq!(p.len(), 17);
        let mut xs: Vec<f64> = p.iter().map(|x| x[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs[0], 0.75 - 3.0);
        assert_eq!(xs[16], 0.75 + 3.0);
        assert_eq!(probe_points(&[0.0; 3], 1.0, 2).len(), 33);
    }

    #[test]
    fn self_comparison_is_zero() {
        let a = vec![(0.3, 1.0), (0.1, -2.0)];
        assert_eq!(probe_errors(&a, &a), (0.0, 0.0));
    }

    #[test]
    fn covering_grid_has_power_of_two_spacing() {
        let g = covering_grid(1, &[(-9.0, 9.75)], 0.07, DEFAULT_MAX_NODES).unwrap();
        assert_eq!(g.spacing()[0], 0.0625);
        assert!(g.lower()[0] <= -9.0);
        assert!(g.coordinate(0, g.points()[0] - 1) >= 9.75);
        assert!(g.points()[0].is_power_of_two());
    }

    #[test]
    fn sweep_shape_is_checked() {
        let scen = Scenario::LinearGaussian(
            LinearScenario::new(
                GaussianPrep {
                    zeta0: [0.0; 3],
                    sigma0: 1.0,
                    v0: [0.0; 3],
                },
                [0.0; 3],
                1.0,
                1.0,
                1,
            )
            .unwrap(),
        );
        assert!(check_sweep(&scen, &[1.0, 0.5, 0.25, 0.125]).is_err());
        assert!(check_sweep(&scen, &[1.0, 0.5, 0.25, 0.2, 0.1]).is_err());
        assert!(check_sweep(&scen, &[1.0, 0.5, 0.25, 0.125, 0.0625]).is_ok());
        assert!(check_sweep(&scen, &geometric_hbars(1.0, 0.8, 5)).is_err());
    }

    #[test]
    fn affine_fit_recovers_plane() {
        let pts: Vec<Vec3<f64>> = (0..20).map(|i| [i as f64 * 0.1, (i * i % 7) as f64, 0.0]).collect();
        let vals: Vec<f64> = pts.iter().map(|p| 0.5 + 2.0 * p[0] - 3.0 * p[1]).collect();
        let (a, b, r) = affine_fit(&pts, &vals, 2).unwrap();
        assert!((a - 0.5).abs() < 1e-12 && (b[0] - 2.0).abs() < 1e-12 && (b[1] + 3.0).abs() < 1e-12);
        assert!(r < 1e-12);
    }
}
