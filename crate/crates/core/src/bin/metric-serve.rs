use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use metric_serve::generate::{generate, GenParams};
use metric_serve::instance::Mode;
use metric_serve::pipeline::{self, PipelineError, RunConfig};

/// Online service with deadlines or delay on a finite metric space.
#[derive(Debug, Parser)]
#[command(name = "metric-serve", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Deadline,
    Delay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RunMode {
    Auto,
    Deadline,
    Delay,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded random instance.
    Generate {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        points: usize,
        #[arg(long)]
        requests: usize,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Integer weights and times on a quarter grid.
        #[arg(long)]
        quantized: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the online algorithm and print its trace.
    Run {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        mode: RunMode,
        /// Route trees through released request points only.
        #[arg(long)]
        request_regime: bool,
        /// Delay mode: stop once the clock passes this time.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compute the exact offline optimum.
    Opt {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run, audit and charge one instance. Exits 1 on a structural failure.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        request_regime: bool,
    },
    /// Batch costs and ratios over instance files.
    Report {
        #[arg(long)]
        glob: String,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        request_regime: bool,
    },
}

enum Failure {
    Usage(String),
    Structural,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Generate {
            seed,
            points,
            requests,
            mode,
            quantized,
            out,
        } => {
            if points == 0 {
                return Err(Failure::Usage("--points must be at least 1".into()));
            }
            let mode = match mode {
                ModeArg::Deadline => Mode::Deadline,
                ModeArg::Delay => Mode::Delay,
            };
            let mut params = GenParams::new(points, requests, mode);
            params.quantized = quantized;
            let text = generate(seed, &params).to_json();
            match out {
                Some(p) => write(&p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Run {
            instance,
            mode,
            request_regime,
            horizon,
            trace,
        } => {
            let inst = pipeline::load_instance(&instance)?;
            let wanted = match mode {
                RunMode::Auto => inst.mode(),
                RunMode::Deadline => Mode::Deadline,
                RunMode::Delay => Mode::Delay,
            };
            if wanted != inst.mode() {
                return Err(Failure::Usage(format!(
                    "--mode {wanted} given for a {} instance",
                    inst.mode()
                )));
            }
            if horizon.is_some_and(|h| !h.is_finite()) {
                return Err(Failure::Usage("--horizon must be finite".into()));
            }
            let t = pipeline::run(
                &inst,
                RunConfig {
                    request_regime,
                    horizon,
                },
            )?;
            let text = json(&t);
            if let Some(p) = trace {
                write(&p, &text)?;
            }
            print!("{text}");
        }
        Command::Opt { instance, trace } => {
            let o = pipeline::optimum(&pipeline::load_instance(&instance)?)?;
            let text = json(&o);
            if let Some(p) = trace {
                write(&p, &text)?;
            }
            print!("{text}");
        }
        Command::Verify {
            instance,
            request_regime,
        } => {
            let v = pipeline::verify(
                &pipeline::load_instance(&instance)?,
                RunConfig {
                    request_regime,
                    horizon: None,
                },
            )?;
            print!("{}", json(&v));
            if !v.structural_pass {
                return Err(Failure::Structural);
            }
        }
        Command::Report {
            glob,
            csv,
            request_regime,
        } => {
            let rows = pipeline::report(
                &glob,
                RunConfig {
                    request_regime,
                    horizon: None,
                },
            )?;
            if let Some(p) = csv {
                write(&p, &pipeline::to_csv(&rows))?;
            }
            print!("{}", json(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Structural) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
