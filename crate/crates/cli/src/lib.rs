//! Batch front end: run configurations, presets, and plot-ready output.

pub mod config;
pub mod output;
pub mod presets;
pub mod run;

use std::path::{Path, PathBuf};

use semiclassical::{Error, Result};

pub use config::RunConfig;

/// Machine-readable error category and process exit code.
pub fn error_category(e: &Error) -> (&'static str, i32) {
    match e {
        Error::Numerical(_) | Error::GridInadequate(_) | Error::CausticReached { .. } => ("numerical", 3),
        Error::Io(_) => ("io", 4),
        Error::InvalidGrid(_)
        | Error::InvalidParameter { .. }
        | Error::OutOfRange { .. }
        | Error::TooFewSamples { .. }
        | Error::NonPositive { .. }
        | Error::InvalidConfig(_)
        | Error::UnknownPreset(_) => ("validation", 2),
    }
}

/// Where a configuration came from.
pub enum Source<'a> {
    File(&'a Path),
    Preset(&'a str),
}

/// Loads the configuration, applies command-line overrides, and runs it.
/// Returns the output directory.
pub fn execute(source: Source<'_>, out: Option<&Path>, seed: Option<u64>) -> Result<PathBuf> {
    let (mut config, name) = match source {
        Source::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
            let stem = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
            (RunConfig::parse(&text)?, stem)
        }
        Source::Preset(name) => ((presets::find(name)?.build)(), name.to_string()),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    let dir = match (out, &config.output.dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(d)) => d.clone(),
        (None, None) => Path::new("out").join(name),
    };
    config.output.dir = Some(dir.clone());
    run::run(&config, &dir)?;
    Ok(dir)
}
