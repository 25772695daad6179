use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use semiclab::{error_category, execute, presets, Source};

#[derive(Parser)]
#[command(name = "semiclab", version, about = "Semiclassical limit experiments: Madelung fields, Bohm trajectories, hbar sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file or a named preset.
    #[command(group(ArgGroup::new("source").required(true).args(["config", "preset"])))]
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Output directory (default: the configured one, else out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 1 runs serially.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the built-in presets.
    ListPresets,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::ListPresets => {
            print!("{}", presets::list_presets());
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            preset,
            out,
            seed,
            threads,
        } => {
            if let Some(n) = threads {
                if n == 0 {
                    eprintln!("error[validation]: --threads must be at least 1");
                    return ExitCode::from(2);
                }
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error[validation]: {e}");
                    return ExitCode::from(2);
                }
            }
            let source = match (&config, &preset) {
                (Some(path), _) => Source::File(path),
                (None, Some(name)) => Source::Preset(name),
                (None, None) => unreachable!("clap requires one source"),
            };
            match execute(source, out.as_deref(), seed) {
                Ok(dir) => {
                    println!("wrote {}", dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    let (category, code) = error_category(&e);
                    eprintln!("error[{category}]: {e}");
                    ExitCode::from(code as u8)
                }
            }
        }
    }
}
