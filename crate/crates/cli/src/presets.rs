//! Named scenario presets.

use std::f64::consts::FRAC_PI_2;

use crate::config::{
    EnsembleConfig, GridConfig, LocalHjConfig, ModeConfig, OutputConfig, PathChoice, PotentialConfig, RunConfig,
    ScenarioConfig, SweepConfig, Task,
};
use semiclassical::domain::DEFAULT_MAX_NODES;
use semiclassical::{Error, Result};

pub struct Preset {
    pub name: &'static str,
    pub provenance: &'static str,
    pub build: fn() -> RunConfig,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "linear-theorem3",
        provenance: "Gaussian packet in a linear potential converges to the statistical Hamilton-Jacobi fields",
        build: linear_theorem3,
    },
    Preset {
        name: "coherent-theorem4",
        provenance: "Harmonic coherent state collapses onto one classical trajectory and its local action",
        build: coherent_theorem4,
    },
    Preset {
        name: "bohm-1d",
        provenance: "Bohm trajectories of the linear-potential packet, standard velocity law, one dimension",
        build: bohm_1d,
    },
    Preset {
        name: "bohm-3d-spin",
        provenance: "Bohm trajectories with the spin-current term, three dimensions, spin along the third axis",
        build: bohm_3d_spin,
    },
    Preset {
        name: "double-slit",
        provenance: "Two-slit superposition: equivariance and divergence from the classical two-beam envelope",
        build: double_slit,
    },
    Preset {
        name: "local-hj-demo",
        provenance: "Local action along a classical trajectory, and characteristics reaching the harmonic caustic",
        build: local_hj_demo,
    },
];

pub fn find(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

/// One line per preset: name and provenance.
pub fn list_presets() -> String {
    let width = PRESETS.iter().map(|p| p.name.len()).max().unwrap_or(0);
    PRESETS
        .iter()
        .map(|p| format!("{:width$}  {}\n", p.name, p.provenance))
        .collect()
}

fn linear_1d() -> ScenarioConfig {
    ScenarioConfig::Linear {
        dim: 1,
        mass: 1.0,
        sigma0: 1.0,
        zeta0: vec![0.0],
        v0: vec![0.5],
        force: vec![0.5],
    }
}

fn linear_theorem3() -> RunConfig {
    RunConfig {
        seed: 0,
        output: OutputConfig::default(),
        task: Task::Sweep(SweepConfig {
            scenario: linear_1d(),
            path: PathChoice::Solver,
            time: 1.0,
            hbars: None,
            hbar0: 1.0,
            ratio: 0.5,
            count: 6,
            dt: 1e-3,
            nodes_per_sigma: 4.0,
            sample_interval: 1e-2,
            n_samples: 256,
            max_nodes: DEFAULT_MAX_NODES,
        }),
    }
}

fn coherent_theorem4() -> RunConfig {
    RunConfig {
        seed: 0,
        output: OutputConfig::default(),
        task: Task::Sweep(SweepConfig {
            scenario: ScenarioConfig::Coherent {
                dim: 2,
                mass: 1.0,
                omega: 1.0,
                x0: vec![1.0, 0.0],
                v0: vec![0.0, 0.5],
            },
            path: PathChoice::Solver,
            time: FRAC_PI_2,
            hbars: None,
            hbar0: 1.0,
            ratio: 0.5,
            count: 6,
            dt: FRAC_PI_2 / 1571.0,
            nodes_per_sigma: 4.0,
            sample_interval: 1e-2,
            n_samples: 256,
            max_nodes: DEFAULT_MAX_NODES,
        }),
    }
}

fn bohm_1d() -> RunConfig {
    RunConfig {
        seed: 0,
        output: OutputConfig { dir: None, stride: 4 },
        task: Task::Ensemble(EnsembleConfig {
            scenario: linear_1d(),
            path: PathChoice::Solver,
            hbar: 1.0,
            time: 2.0,
            snapshot_interval: 0.05,
            dt: 1e-3,
            n_samples: 10_000,
            mode: ModeConfig::Standard,
            grid: GridConfig {
                bounds: vec![[-16.0, 16.0]],
                points: vec![512],
                max_nodes: DEFAULT_MAX_NODES,
            },
        }),
    }
}

fn bohm_3d_spin() -> RunConfig {
    RunConfig {
        seed: 0,
        output: OutputConfig { dir: None, stride: 10 },
        task: Task::Ensemble(EnsembleConfig {
            scenario: ScenarioConfig::Linear {
                dim: 3,
                mass: 1.0,
                sigma0: 1.0,
                zeta0: vec![0.0, 0.0, 0.0],
                v0: vec![0.5, 0.0, 0.0],
                force: vec![0.0, 0.0, 0.5],
            },
            path: PathChoice::Analytic,
            hbar: 1.0,
            time: 1.0,
            snapshot_interval: 0.05,
            dt: 1e-3,
            n_samples: 2000,
            mode: ModeConfig::Spin {
                axis: vec![0.0, 0.0, 1.0],
            },
            grid: GridConfig {
                bounds: vec![[-8.0, 8.0]; 3],
                points: vec![32; 3],
                max_nodes: DEFAULT_MAX_NODES,
            },
        }),
    }
}

fn double_slit() -> RunConfig {
    RunConfig {
        seed: 0,
        output: OutputConfig::default(),
        task: Task::Sweep(SweepConfig {
            scenario: ScenarioConfig::DoubleSlit {
                separation: 6.0,
                sigma0: 1.0,
                v0: vec![0.0, 0.0],
                mass: 1.0,
            },
            path: PathChoice::Solver,
            time: 3.0,
            hbars: Some(vec![1.0, 0.5, 0.25, 0.125]),
            hbar0: 1.0,
            ratio: 0.5,
            count: 4,
            dt: 1e-3,
            nodes_per_sigma: 4.0,
            sample_interval: 0.05,
            n_samples: 10_000,
            max_nodes: DEFAULT_MAX_NODES,
        }),
    }
}

fn local_hj_demo() -> RunConfig {
    RunConfig {
        seed: 0,
        output: OutputConfig::default(),
        task: Task::LocalHj(LocalHjConfig {
            dim: 1,
            mass: 1.0,
            potential: PotentialConfig::Harmonic { omega: 1.0 },
            x0: vec![1.0],
            v0: vec![0.0],
            t_max: 3.0,
            dt: 1e-3,
            sample_interval: 1e-2,
            characteristics: 500,
            sigma0: 0.5,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_presets_listed() {
        assert_eq!(list_presets().lines().count(), 6);
        assert!(matches!(find("nope"), Err(Error::UnknownPreset(_))));
    }
}
