//! Run configuration (TOML) and its validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use semiclassical::analytic::{CoherentScenario, LinearScenario};
use semiclassical::bohm::VelocityMode;
use semiclassical::domain::{
    make_grid_with_cap, CoherentPrep, GaussianPrep, Grid, PotentialSpec, SystemParams, DEFAULT_MAX_NODES,
    MIN_NODES_PER_SIGMA,
};
use semiclassical::lab::{DoubleSlit, EvaluationPath, Scenario, SweepBudget};
use semiclassical::{Error, Result, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    pub task: Task,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Defaults to `out/<name>` when neither this nor `--out` is given.
    pub dir: Option<PathBuf>,
    /// Write every `stride`-th field snapshot.
    #[serde(default = "one")]
    pub stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None, stride: 1 }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Task {
    Sweep(SweepConfig),
    Ensemble(EnsembleConfig),
    LocalHj(LocalHjConfig),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathChoice {
    Analytic,
    Solver,
}

impl From<PathChoice> for EvaluationPath {
    fn from(p: PathChoice) -> Self {
        match p {
            PathChoice::Analytic => EvaluationPath::Analytic,
            PathChoice::Solver => EvaluationPath::Solver,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioConfig {
    Linear {
        dim: usize,
        #[serde(default = "unit")]
        mass: f64,
        #[serde(default = "unit")]
        sigma0: f64,
        #[serde(default)]
        zeta0: Vec<f64>,
        #[serde(default)]
        v0: Vec<f64>,
        #[serde(default)]
        force: Vec<f64>,
    },
    Coherent {
        dim: usize,
        #[serde(default = "unit")]
        mass: f64,
        #[serde(default = "unit")]
        omega: f64,
        #[serde(default)]
        x0: Vec<f64>,
        #[serde(default)]
        v0: Vec<f64>,
    },
    DoubleSlit {
        separation: f64,
        #[serde(default = "unit")]
        sigma0: f64,
        #[serde(default)]
        v0: Vec<f64>,
        #[serde(default = "unit")]
        mass: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub scenario: ScenarioConfig,
    pub path: PathChoice,
    pub time: f64,
    /// Explicit sweep; otherwise `hbar0 * ratio^k`, `k < count`.
    pub hbars: Option<Vec<f64>>,
    #[serde(default = "unit")]
    pub hbar0: f64,
    #[serde(default = "half")]
    pub ratio: f64,
    #[serde(default = "six")]
    pub count: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_nodes_per_sigma")]
    pub nodes_per_sigma: f64,
    #[serde(default = "default_interval")]
    pub sample_interval: f64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
}

fn half() -> f64 {
    0.5
}
fn six() -> usize {
    6
}
fn default_dt() -> f64 {
    1e-3
}
fn default_nodes_per_sigma() -> f64 {
    MIN_NODES_PER_SIGMA
}
fn default_interval() -> f64 {
    1e-2
}
fn default_samples() -> usize {
    1000
}
fn default_max_nodes() -> usize {
    DEFAULT_MAX_NODES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// `[lower, upper]` per active axis.
    pub bounds: Vec<[f64; 2]>,
    pub points: Vec<usize>,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModeConfig {
    Standard,
    Spin { axis: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Must be a `linear` scenario.
    pub scenario: ScenarioConfig,
    pub path: PathChoice,
    #[serde(default = "unit")]
    pub hbar: f64,
    pub time: f64,
    /// Spacing of recorded snapshots (and of gauge tracking on the solver path).
    pub snapshot_interval: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    pub mode: ModeConfig,
    pub grid: GridConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    Free,
    Linear { force: Vec<f64> },
    Harmonic { omega: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalHjConfig {
    pub dim: usize,
    #[serde(default = "unit")]
    pub mass: f64,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub x0: Vec<f64>,
    #[serde(default)]
    pub v0: Vec<f64>,
    pub t_max: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Spacing of the rows written to the trajectory file.
    #[serde(default = "default_interval")]
    pub sample_interval: f64,
    /// Characteristics of a Gaussian cloud of this width around `x0`; 0 skips them.
    #[serde(default)]
    pub characteristics: usize,
    #[serde(default = "unit")]
    pub sigma0: f64,
}

/// Collects every violation before failing.
#[derive(Default)]
struct Violations(Vec<String>);

impl Violations {
    fn check(&mut self, ok: bool, field: &str, reason: &str) {
        if !ok {
            self.0.push(format!("{field}: {reason}"));
        }
    }

    fn positive(&mut self, v: f64, field: &str) {
        self.check(v.is_finite() && v > 0.0, field, "must be positive and finite");
    }

    fn dim(&mut self, d: usize, field: &str) {
        self.check((1..=3).contains(&d), field, "must be 1, 2 or 3");
    }

    fn vector(&mut self, v: &[f64], dim: usize, field: &str) {
        self.check(v.len() <= dim.min(3), field, "has more components than the dimension");
        self.check(v.iter().all(|x| x.is_finite()), field, "must be finite");
    }

    fn absorb(&mut self, r: Result<()>) {
        if let Err(e) = r {
            match e {
                Error::InvalidConfig(list) => self.0.extend(list),
                other => self.0.push(other.to_string()),
            }
        }
    }

    fn finish(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(self.0))
        }
    }
}

fn vec3(v: &[f64]) -> Vec3<f64> {
    std::array::from_fn(|a| v.get(a).copied().unwrap_or(0.0))
}

impl ScenarioConfig {
    fn check(&self, out: &mut Violations, prefix: &str) {
        let f = |s: &str| format!("{prefix}.{s}");
        match self {
            ScenarioConfig::Linear {
                dim,
                mass,
                sigma0,
                zeta0,
                v0,
                force,
            } => {
                out.dim(*dim, &f("dim"));
                out.positive(*mass, &f("mass"));
                out.positive(*sigma0, &f("sigma0"));
                out.vector(zeta0, *dim, &f("zeta0"));
                out.vector(v0, *dim, &f("v0"));
                out.vector(force, *dim, &f("force"));
            }
            ScenarioConfig::Coherent { dim, mass, omega, x0, v0 } => {
                out.dim(*dim, &f("dim"));
                out.positive(*mass, &f("mass"));
                out.positive(*omega, &f("omega"));
                out.vector(x0, *dim, &f("x0"));
                out.vector(v0, *dim, &f("v0"));
            }
            ScenarioConfig::DoubleSlit {
                separation,
                sigma0,
                v0,
                mass,
            } => {
                out.positive(*separation, &f("separation"));
                out.positive(*sigma0, &f("sigma0"));
                out.positive(*mass, &f("mass"));
                out.vector(v0, 2, &f("v0"));
            }
        }
    }

    /// The scenario at `hbar`; call after validation.
    pub fn build(&self, hbar: f64) -> Result<Scenario> {
        Ok(match self {
            ScenarioConfig::Linear {
                dim,
                mass,
                sigma0,
                zeta0,
                v0,
                force,
            } => Scenario::LinearGaussian(LinearScenario::new(
                GaussianPrep {
                    zeta0: vec3(zeta0),
                    sigma0: *sigma0,
                    v0: vec3(v0),
                },
                vec3(force),
                *mass,
                hbar,
                *dim,
            )?),
            ScenarioConfig::Coherent { dim, mass, omega, x0, v0 } => Scenario::HarmonicCoherent(CoherentScenario::new(
                CoherentPrep {
                    x0: vec3(x0),
                    v0: vec3(v0),
                    omega: *omega,
                },
                *mass,
                hbar,
                *dim,
            )?),
            ScenarioConfig::DoubleSlit {
                separation,
                sigma0,
                v0,
                mass,
            } => Scenario::DoubleSlit(DoubleSlit {
                separation: *separation,
                sigma0: *sigma0,
                v0: vec3(v0),
                mass: *mass,
            }),
        })
    }
}

impl SweepConfig {
    pub fn hbar_values(&self) -> Vec<f64> {
        match &self.hbars {
            Some(h) => h.clone(),
            None => semiclassical::lab::geometric_hbars(self.hbar0, self.ratio, self.count),
        }
    }

    pub fn budget(&self, seed: u64) -> SweepBudget {
        SweepBudget {
            path: self.path.into(),
            time: self.time,
            dt: self.dt,
            nodes_per_sigma: self.nodes_per_sigma,
            sample_interval: self.sample_interval,
            n_samples: self.n_samples,
            seed,
            max_nodes: self.max_nodes,
        }
    }

    fn check(&self, out: &mut Violations, seed: u64) {
        self.scenario.check(out, "task.scenario");
        out.positive(self.time, "task.time");
        if self.hbars.is_none() {
            out.positive(self.hbar0, "task.hbar0");
            out.check(self.ratio > 0.0 && self.ratio < 1.0, "task.ratio", "must lie in (0, 1)");
        }
        let hb = self.hbar_values();
        out.check(
            hb.iter().all(|h| h.is_finite() && *h > 0.0),
            "task.hbars",
            "every value must be positive and finite",
        );
        out.absorb(self.budget(seed).validate());
        if out.0.is_empty() {
            // Scenario-level checks need a buildable scenario.
            match self.scenario.build(hb[0]) {
                Ok(s) => out.absorb(s.validate()),
                Err(e) => out.absorb(Err(e)),
            }
        }
    }
}

impl GridConfig {
    fn check(&self, out: &mut Violations, dim: usize) {
        out.check(self.bounds.len() == dim, "task.grid.bounds", "needs one [lower, upper] pair per axis");
        out.check(self.points.len() == dim, "task.grid.points", "needs one count per axis");
        for (a, b) in self.bounds.iter().enumerate() {
            out.check(
                b[0].is_finite() && b[1].is_finite() && b[1] > b[0],
                &format!("task.grid.bounds[{a}]"),
                "upper must exceed lower",
            );
        }
        for (a, n) in self.points.iter().enumerate() {
            out.check(
                n.is_power_of_two() && *n >= semiclassical::domain::MIN_POINTS,
                &format!("task.grid.points[{a}]"),
                "must be a power of two of at least 8",
            );
        }
        let total: usize = self.points.iter().product();
        out.check(total <= self.max_nodes, "task.grid.points", "total node count exceeds max_nodes");
    }

    pub fn build(&self, dim: usize) -> Result<Grid<f64>> {
        let bounds: Vec<(f64, f64)> = self.bounds.iter().map(|b| (b[0], b[1])).collect();
        make_grid_with_cap(dim, &bounds, &self.points, self.max_nodes)
    }
}

impl ModeConfig {
    pub fn build(&self) -> VelocityMode<f64> {
        match self {
            ModeConfig::Standard => VelocityMode::Standard,
            ModeConfig::Spin { axis } => VelocityMode::SpinCurrent { axis: vec3(axis) },
        }
    }
}

impl EnsembleConfig {
    pub fn linear(&self) -> Result<LinearScenario<f64>> {
        match self.scenario.build(self.hbar)? {
            Scenario::LinearGaussian(s) => Ok(s),
            _ => Err(Error::InvalidConfig(vec!["task.scenario: ensembles need a linear scenario".into()])),
        }
    }

    fn check(&self, out: &mut Violations) {
        self.scenario.check(out, "task.scenario");
        let dim = match &self.scenario {
            ScenarioConfig::Linear { dim, .. } => *dim,
            _ => {
                out.check(false, "task.scenario.type", "ensembles need a linear scenario");
                return;
            }
        };
        out.positive(self.hbar, "task.hbar");
        out.positive(self.time, "task.time");
        out.positive(self.snapshot_interval, "task.snapshot_interval");
        out.positive(self.dt, "task.dt");
        out.check(self.dt <= self.snapshot_interval, "task.dt", "must not exceed snapshot_interval");
        out.check(self.n_samples > 0, "task.n_samples", "must be at least 1");
        if let ModeConfig::Spin { axis } = &self.mode {
            out.check(axis.len() == 3, "task.mode.axis", "needs three components");
            out.absorb(self.mode.build().validate());
        }
        if (1..=3).contains(&dim) {
            self.grid.check(out, dim);
        }
    }
}

impl PotentialConfig {
    pub fn build(&self) -> PotentialSpec<f64> {
        match self {
            PotentialConfig::Free => PotentialSpec::Free,
            PotentialConfig::Linear { force } => PotentialSpec::Linear { force: vec3(force) },
            PotentialConfig::Harmonic { omega } => PotentialSpec::Harmonic { omega: *omega },
        }
    }
}

impl LocalHjConfig {
    /// Classical system; `hbar` is unused by the classical equations.
    pub fn params(&self) -> Result<SystemParams<f64>> {
        SystemParams::new(self.mass, 1.0, self.potential.build(), self.dim)
    }

    fn check(&self, out: &mut Violations) {
        out.dim(self.dim, "task.dim");
        out.positive(self.mass, "task.mass");
        out.vector(&self.x0, self.dim, "task.x0");
        out.vector(&self.v0, self.dim, "task.v0");
        match &self.potential {
            PotentialConfig::Free => {}
            PotentialConfig::Linear { force } => out.vector(force, self.dim, "task.potential.force"),
            PotentialConfig::Harmonic { omega } => out.positive(*omega, "task.potential.omega"),
        }
        out.positive(self.t_max, "task.t_max");
        out.positive(self.dt, "task.dt");
        out.check(
            self.sample_interval.is_finite() && self.sample_interval >= self.dt,
            "task.sample_interval",
            "must be at least dt",
        );
        if self.characteristics > 0 {
            out.check(
                self.characteristics >= semiclassical::classical::MIN_PARTICLES,
                "task.characteristics",
                "needs at least 100 particles (or 0 to skip)",
            );
            out.positive(self.sigma0, "task.sigma0");
        }
    }

    pub fn x0(&self) -> Vec3<f64> {
        vec3(&self.x0)
    }

    pub fn v0(&self) -> Vec3<f64> {
        vec3(&self.v0)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(vec![e.message().to_string()]))
    }

    /// Checks every parameter and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut out = Violations::default();
        out.check(self.output.stride > 0, "output.stride", "must be at least 1");
        match &self.task {
            Task::Sweep(s) => s.check(&mut out, self.seed),
            Task::Ensemble(e) => e.check(&mut out),
            Task::LocalHj(l) => l.check(&mut out),
        }
        out.finish()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_violations_reported_together() {
        let text = r#"
            [task]
            kind = "sweep"
            path = "analytic"
            time = -1.0
            [task.scenario]
            type = "linear"
            dim = 4
            mass = -1.0
        "#;
        let cfg = RunConfig::parse(text).unwrap();
        let Err(Error::InvalidConfig(list)) = cfg.validate() else {
            panic!("expected invalid configuration");
        };
        let joined = list.join("\n");
        assert!(joined.contains("task.scenario.mass"));
        assert!(joined.contains("task.scenario.dim"));
        assert!(joined.contains("task.time"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"
            seed = 1
            colour = "blue"
            [task]
            kind = "local-hj"
            dim = 1
            t_max = 1.0
            [task.potential]
            type = "free"
        "#;
        assert!(matches!(RunConfig::parse(text), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn toml_round_trip() {
        for p in crate::presets::PRESETS {
            let cfg = (p.build)();
            cfg.validate().unwrap();
            assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        }
    }
}
