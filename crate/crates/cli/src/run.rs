//! Execution of a validated configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use semiclassical::analytic::{bohm_trajectory_3d_spin, bohm_trajectory_standard, linear_fields, LinearScenario};
use semiclassical::bohm::{
    advance_ensemble, marginal_distance, sample_gaussian_prep, AnalyticLinearVelocity, EnsembleState,
    SnapshotVelocity, VelocityMode, CFL_NUMBER, INTERIOR_MARGIN, MIN_EQUIVARIANCE_SAMPLES,
};
use semiclassical::classical::{
    local_action_evolve, local_hj_residual, local_state, local_velocity_residual, statistical_hj_evolve,
    JACOBIAN_OFFSET, SAMPLED_POTENTIAL_TOL,
};
use semiclassical::domain::{
    prepare_wavefunction, GaussianPrep, Grid, MadelungFields, Preparation, DEFAULT_MAX_NODES, MIN_NODES_PER_SIGMA,
    PACKET_HALF_WIDTH_SIGMAS,
};
use semiclassical::lab::{self, BUDGET_FACTOR, PROBE_HALF_POINTS, PROBE_HALF_WIDTH_SIGMAS};
use semiclassical::madelung::{quantum_potential, GaugeTracker, DEFAULT_RELATIVE_THRESHOLD};
use semiclassical::schrodinger::{boundary_mass, Propagator, BOUNDARY_TAIL_LIMIT};
use semiclassical::{Error, Result, Vec3};

use crate::config::{EnsembleConfig, LocalHjConfig, PathChoice, RunConfig, SweepConfig, Task};
use crate::output::{axis_names, Writer};

/// Everything needed to reproduce a run, except wall-clock times.
#[derive(Serialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub tolerances: BTreeMap<&'static str, f64>,
    pub counts: BTreeMap<String, i64>,
    pub outputs: Vec<String>,
}

#[derive(Serialize)]
struct Timing {
    stages: Vec<(String, f64)>,
}

struct Stages(Vec<(String, f64)>);

impl Stages {
    fn time<R>(&mut self, name: &str, f: impl FnOnce() -> Result<R>) -> Result<R> {
        let start = Instant::now();
        let r = f();
        self.0.push((name.to_string(), start.elapsed().as_secs_f64()));
        r
    }
}

fn tolerances() -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("madelung_relative_threshold", DEFAULT_RELATIVE_THRESHOLD),
        ("boundary_tail_limit", BOUNDARY_TAIL_LIMIT),
        ("packet_half_width_sigmas", PACKET_HALF_WIDTH_SIGMAS),
        ("min_nodes_per_sigma", MIN_NODES_PER_SIGMA),
        ("max_nodes", DEFAULT_MAX_NODES as f64),
        ("bohm_cfl_number", CFL_NUMBER),
        ("bohm_interior_margin", INTERIOR_MARGIN as f64),
        ("min_equivariance_samples", MIN_EQUIVARIANCE_SAMPLES as f64),
        ("probe_half_points", PROBE_HALF_POINTS as f64),
        ("probe_half_width_sigmas", PROBE_HALF_WIDTH_SIGMAS),
        ("budget_factor", BUDGET_FACTOR),
        ("affine_region_sigmas", lab::AFFINE_REGION_SIGMAS),
        ("jacobian_offset", JACOBIAN_OFFSET),
        ("sampled_potential_tol", SAMPLED_POTENTIAL_TOL),
    ])
}

/// Runs `config` (validated here) and writes every artifact into `out`.
/// Returns the names of the files written.
pub fn run(config: &RunConfig, out: &Path) -> Result<Vec<String>> {
    config.validate()?;
    let mut w = Writer::new(out)?;
    let mut stages = Stages(Vec::new());
    let mut counts = BTreeMap::new();
    match &config.task {
        Task::Sweep(s) => run_sweep(s, config.seed, &mut w, &mut stages, &mut counts)?,
        Task::Ensemble(e) => run_ensemble(e, config, &mut w, &mut stages, &mut counts)?,
        Task::LocalHj(l) => run_local_hj(l, config.seed, &mut w, &mut stages, &mut counts)?,
    }
    let mut outputs = w.files().to_vec();
    outputs.push("manifest.json".into());
    outputs.push("timing.json".into());
    let manifest = RunManifest {
        config: config.clone(),
        versions: BTreeMap::from([
            ("semiclassical", semiclassical::VERSION),
            ("semiclassical-cli", env!("CARGO_PKG_VERSION")),
        ]),
        tolerances: tolerances(),
        counts,
        outputs: outputs.clone(),
    };
    w.json("manifest.json", &manifest)?;
    w.json("timing.json", &Timing { stages: stages.0 })?;
    Ok(outputs)
}

fn run_sweep(
    cfg: &SweepConfig,
    seed: u64,
    w: &mut Writer,
    stages: &mut Stages,
    counts: &mut BTreeMap<String, i64>,
) -> Result<()> {
    let hbars = cfg.hbar_values();
    let scenario = cfg.scenario.build(hbars[0])?;
    let budget = cfg.budget(seed);
    let (report, artifacts) = stages.time("sweep", || lab::hbar_sweep_with_artifacts(&scenario, &hbars, &budget))?;
    stages.time("write", || {
        w.json("report.json", &report)?;
        let (mass, dim) = match &scenario {
            lab::Scenario::LinearGaussian(s) => (s.params.mass, s.params.dim),
            lab::Scenario::HarmonicCoherent(s) => (s.params.mass, s.params.dim),
            lab::Scenario::DoubleSlit(d) => (d.mass, 2),
        };
        for (k, a) in artifacts.iter().enumerate() {
            if let Some(f) = &a.fields {
                w.fields(&format!("fields_h{k:02}.csv"), f, a.quantum_potential.as_deref(), a.hbar, mass)?;
            }
            if !a.endpoints.is_empty() {
                w.trajectories(&format!("trajectories_h{k:02}.csv"), &[cfg.time], &[a.endpoints.clone()], dim)?;
            }
        }
        Ok(())
    })?;
    for c in &report.counts {
        *counts.entry("flagged_samples".into()).or_default() += c.flagged_samples as i64;
        *counts.entry("phase_defects".into()).or_default() += c.phase_defects as i64;
        *counts.entry("gauge_turns_total".into()).or_default() += c.gauge_turns.abs();
    }
    counts.insert("report_flags".into(), report.flags.len() as i64);
    counts.insert("caustics".into(), 0);
    Ok(())
}

/// Per-snapshot statistics of an ensemble run.
#[derive(Serialize)]
struct EnsembleReport {
    path: PathChoice,
    mode: VelocityMode<f64>,
    hbar: f64,
    n_samples: usize,
    times: Vec<f64>,
    /// Largest per-axis KS distance between unflagged samples and `rho`.
    ks_distance: Vec<f64>,
    max_ks_distance: f64,
    flagged_samples: usize,
    /// Largest `|x - x_closed| / max(|x_closed|, 1)` at the final time, when a closed form exists.
    closed_form_relative_error: Option<f64>,
    phase_defects: usize,
    gauge_turns: i64,
    max_velocity_change: f64,
}

fn exact_fields(grid: &Grid<f64>, t: f64, scen: &LinearScenario<f64>) -> MadelungFields<f64> {
    MadelungFields::from_fn(grid, t, DEFAULT_RELATIVE_THRESHOLD, |x| linear_fields(x, t, scen))
}

fn closed_form(eta0: &Vec3<f64>, t: f64, scen: &LinearScenario<f64>, mode: &VelocityMode<f64>) -> Option<Vec3<f64>> {
    match mode {
        VelocityMode::Standard => Some(bohm_trajectory_standard(eta0, t, scen)),
        VelocityMode::SpinCurrent { axis } if *axis == [0.0, 0.0, 1.0] => bohm_trajectory_3d_spin(eta0, t, scen).ok(),
        VelocityMode::SpinCurrent { .. } => None,
    }
}

fn run_ensemble(
    cfg: &EnsembleConfig,
    run: &RunConfig,
    w: &mut Writer,
    stages: &mut Stages,
    counts: &mut BTreeMap<String, i64>,
) -> Result<()> {
    let scen = cfg.linear()?;
    let params = scen.params.clone();
    let dim = params.dim;
    let grid = cfg.grid.build(dim)?;
    let mode = cfg.mode.build();
    let n_snap = ((cfg.time / cfg.snapshot_interval).round() as usize).max(1);
    let interval = cfg.time / n_snap as f64;
    let samples = sample_gaussian_prep(&scen.prep, dim, cfg.n_samples, run.seed);
    let origin = scen.prep.zeta0;
    let stride = run.output.stride;

    let mut times = Vec::with_capacity(n_snap + 1);
    let mut positions = Vec::with_capacity(n_snap + 1);
    let mut ks = Vec::with_capacity(n_snap + 1);
    let mut record = |w: &mut Writer, k: usize, state: &EnsembleState<f64>, fields: &MadelungFields<f64>| -> Result<()> {
        let alive: Vec<Vec3<f64>> = state
            .positions
            .iter()
            .zip(&state.flagged)
            .filter(|(_, f)| f.is_none())
            .map(|(x, _)| *x)
            .collect();
        times.push(state.time);
        positions.push(state.positions.clone());
        ks.push(marginal_distance(&alive, fields));
        if k % stride == 0 || k == n_snap {
            let q = quantum_potential(fields, &params).values;
            w.fields(&format!("fields_{k:04}.csv"), fields, Some(&q), params.hbar, params.mass)?;
        }
        Ok(())
    };

    let mut defects = 0;
    let mut turns = 0;
    let mut change = 0.0;
    let state = stages.time("ensemble", || match cfg.path {
        PathChoice::Analytic => {
            let source = AnalyticLinearVelocity::new(scen.clone(), mode)?;
            let mut state = EnsembleState::start(&source, &samples, &origin, 0.0);
            record(w, 0, &state, &exact_fields(&grid, 0.0, &scen))?;
            for k in 1..=n_snap {
                let t = k as f64 * interval;
                advance_ensemble(&source, &mut state, t, cfg.dt)?;
                record(w, k, &state, &exact_fields(&grid, t, &scen))?;
            }
            Ok(state)
        }
        PathChoice::Solver => {
            let m = (interval / cfg.dt).ceil() as usize;
            let prop = Propagator::new(&grid, &params, interval / m as f64, 0.0)?;
            let mut psi = prepare_wavefunction(&Preparation::Gaussian(scen.prep.clone()), &params, &grid)?;
            let mut tracker = GaugeTracker::anchored(exact_fields(&grid, 0.0, &scen), DEFAULT_RELATIVE_THRESHOLD);
            let mut velocity = SnapshotVelocity::empty(&grid, &params, mode)?;
            let mut state: Option<EnsembleState<f64>> = None;
            for k in 0..=n_snap {
                if k > 0 {
                    for _ in 0..m {
                        prop.step(&mut psi);
                    }
                    // Pin the clock to the snapshot grid so times are exact multiples.
                    psi.time = k as f64 * interval;
                    check_wave(&psi)?;
                }
                let fields = tracker.decompose(&psi, &params)?;
                defects = defects.max(fields.defects);
                velocity.push(&fields)?;
                let st = match state.as_mut() {
                    None => state.insert(EnsembleState::start(&velocity, &samples, &origin, fields.time)),
                    Some(s) => {
                        advance_ensemble(&velocity, s, fields.time, cfg.dt)?;
                        s
                    }
                };
                velocity.retain_last();
                record(w, k, st, &fields)?;
            }
            turns = tracker.turns;
            change = velocity.max_relative_change();
            Ok(state.expect("at least one snapshot"))
        }
    })?;

    let t_end = state.time;
    let closed: Option<f64> = samples
        .iter()
        .zip(&state.positions)
        .zip(&state.flagged)
        .filter(|(_, f)| f.is_none())
        .map(|((s, x), _)| {
            closed_form(&s.eta0, t_end, &scen, &mode).map(|c| {
                let d: f64 = (0..3).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>().sqrt();
                d / c.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0)
            })
        })
        .try_fold(0.0f64, |acc, e| e.map(|e| acc.max(e)));
    let flagged = state.flagged.iter().filter(|f| f.is_some()).count();
    let report = EnsembleReport {
        path: cfg.path,
        mode,
        hbar: params.hbar,
        n_samples: cfg.n_samples,
        max_ks_distance: ks.iter().copied().fold(0.0, f64::max),
        times: times.clone(),
        ks_distance: ks,
        flagged_samples: flagged,
        closed_form_relative_error: closed,
        phase_defects: defects,
        gauge_turns: turns,
        max_velocity_change: change,
    };
    stages.time("write", || {
        w.trajectories("trajectories.csv", &times, &positions, dim)?;
        w.json("report.json", &report)
    })?;
    counts.insert("flagged_samples".into(), flagged as i64);
    counts.insert("phase_defects".into(), defects as i64);
    counts.insert("gauge_turns".into(), turns);
    counts.insert("caustics".into(), 0);
    Ok(())
}

fn check_wave(psi: &semiclassical::domain::WaveField<f64>) -> Result<()> {
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

#[derive(Serialize)]
struct LocalHjReport {
    max_hj_residual: f64,
    max_velocity_residual: f64,
    final_action: f64,
    characteristics: usize,
    /// First time any characteristic Jacobian reaches zero.
    first_caustic: Option<f64>,
    integration_dt: f64,
}

fn run_local_hj(
    cfg: &LocalHjConfig,
    seed: u64,
    w: &mut Writer,
    stages: &mut Stages,
    counts: &mut BTreeMap<String, i64>,
) -> Result<()> {
    let params = cfg.params()?;
    let dim = cfg.dim;
    let (x0, v0) = (cfg.x0(), cfg.v0());
    let action = stages.time("local_action", || local_action_evolve(&x0, &v0, &params, cfg.t_max, cfg.dt))?;
    let n_out = ((cfg.t_max / cfg.sample_interval).round() as usize).max(1);
    let out_times: Vec<f64> = (0..=n_out).map(|k| cfg.t_max * k as f64 / n_out as f64).collect();

    let mut columns = vec!["time".to_string()];
    columns.extend(axis_names("xi", dim));
    columns.extend(axis_names("v", dim));
    columns.extend(["g".to_string(), "hj_residual".to_string(), "velocity_residual".to_string()]);
    let mut rows = Vec::with_capacity(out_times.len());
    let (mut max_hj, mut max_v) = (0.0f64, 0.0f64);
    for &t in &out_times {
        let st = local_state(&action, t)?;
        let r = local_hj_residual(&action, &params, t)?;
        let rv = local_velocity_residual(&action, t)?;
        max_hj = max_hj.max(r);
        max_v = max_v.max(rv);
        let mut row = vec![t];
        row.extend_from_slice(&st.position[..dim]);
        row.extend_from_slice(&st.velocity[..dim]);
        row.extend([st.g, r, rv]);
        rows.push(row);
    }
    w.table("local_action.csv", "units: natural; local action S = m xi' . x + g along the classical trajectory", &columns, &rows)?;

    let mut caustic = None;
    if cfg.characteristics > 0 {
        let prep = GaussianPrep {
            zeta0: x0,
            sigma0: cfg.sigma0,
            v0,
        };
        let field = stages.time("characteristics", || {
            statistical_hj_evolve(&prep, &params, &out_times, cfg.characteristics, seed)
        })?;
        caustic = field.first_caustic;
        w.trajectories("characteristics.csv", &field.times, &field.positions, dim)?;
    }
    let report = LocalHjReport {
        max_hj_residual: max_hj,
        max_velocity_residual: max_v,
        final_action: *action.g.last().expect("non-empty"),
        characteristics: cfg.characteristics,
        first_caustic: caustic,
        integration_dt: cfg.dt,
    };
    w.json("report.json", &report)?;
    counts.insert("caustics".into(), caustic.is_some() as i64);
    counts.insert("flagged_samples".into(), 0);
    counts.insert("phase_defects".into(), 0);
    Ok(())
}
