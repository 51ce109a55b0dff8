use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scaledsgd::problem::{generate, save_csv, GeneratorSpec};
use scaledsgd_bench::scenario::DataSource;
use scaledsgd_bench::{builtin, resolve, run, BenchError, RunOptions, Scale};

#[derive(Parser)]
#[command(name = "scaledsgd", version, about = "Matrix completion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or built-in scenario.
    Run {
        scenario: String,
        #[command(flatten)]
        scale: ScaleArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        /// Include wall-clock seconds in traces and summary.
        #[arg(long)]
        timing: bool,
        /// Dataset path for CSV-backed scenarios.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Check a scenario and print the resolved solver bindings.
    Validate {
        scenario: String,
        #[command(flatten)]
        scale: ScaleArgs,
    },
    /// List built-in scenarios.
    List,
    /// Write a synthetic instance as `i,j,value` CSV.
    Generate {
        /// Generator spec (TOML or JSON) or a built-in scenario name.
        spec: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        scale: ScaleArgs,
    },
}

#[derive(Args)]
struct ScaleArgs {
    #[arg(long, conflicts_with = "paper_scale")]
    desk_scale: bool,
    #[arg(long)]
    paper_scale: bool,
}

impl ScaleArgs {
    fn scale(&self) -> Scale {
        if self.paper_scale {
            Scale::Paper
        } else {
            Scale::Desk
        }
    }
}

fn config_err(path: &str, message: impl ToString) -> BenchError {
    BenchError::Config {
        path: path.to_string(),
        message: message.to_string(),
    }
}

fn generator_spec(spec: &str, scale: Scale) -> Result<GeneratorSpec, BenchError> {
    let path = std::path::Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parsed: Result<GeneratorSpec, String> = if text.trim_start().starts_with('{') {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        return parsed.map_err(|m| config_err("", m));
    }
    let (scenario, _) = resolve(spec)?;
    match scenario.data_for(scale) {
        DataSource::Generate(g) => Ok(g.clone()),
        DataSource::Csv(_) => Err(config_err("data", "scenario data is not generated")),
    }
}

fn execute(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run {
            scenario,
            scale,
            seed,
            repeats,
            out_dir,
            jobs,
            timing,
            data,
        } => {
            if jobs == Some(0) {
                return Err(config_err("--jobs", "must be at least 1"));
            }
            let (scenario, base_dir) = resolve(&scenario)?;
            let options = RunOptions {
                scale: scale.scale(),
                seed,
                repeats,
                out_dir,
                jobs,
                timing,
                data,
                base_dir,
            };
            let artifacts = run(&scenario, &options)?;
            for s in &artifacts.summary.solvers {
                println!(
                    "{:<16} {:<11} cost {:.3e}  rel_residual {:.3e}  epochs {}",
                    s.label,
                    s.engine,
                    s.mean.cost.unwrap_or(f64::NAN),
                    s.mean.rel_residual.unwrap_or(f64::NAN),
                    s.mean.epochs.unwrap_or(f64::NAN)
                );
            }
            println!("wrote {}", artifacts.dir.display());
        }
        Command::Validate { scenario, scale } => {
            let (scenario, _) = resolve(&scenario)?;
            let report = scenario.validate(scale.scale())?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
        }
        Command::List => {
            for s in builtin::all() {
                println!("{:<18} {}", s.name, s.description);
            }
        }
        Command::Generate {
            spec,
            out,
            seed,
            scale,
        } => {
            let mut spec = generator_spec(&spec, scale.scale())?;
            if let Some(seed) = seed {
                spec = spec.with_seed(seed);
            }
            let (data, _) = generate(&spec).map_err(|e| config_err("generate", e))?;
            save_csv(&data, &out).map_err(|e| BenchError::Io {
                path: out.clone(),
                source: std::io::Error::other(e),
            })?;
            println!(
                "wrote {} entries of a {}x{} matrix to {}",
                data.len(),
                data.n(),
                data.m(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
