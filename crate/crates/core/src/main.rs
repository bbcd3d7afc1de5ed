use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reactive_sgd::harness::{self, ExperimentConfig};
use reactive_sgd::Result;

/// Directory for CSV output when neither `--out` nor an absolute `output`
/// path is given.
const OUT_DIR_VAR: &str = "REACTIVE_SGD_OUT_DIR";

#[derive(Parser)]
#[command(name = "reactive-sgd", version, about = "Byzantine fault-tolerant SGD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config and write per-round CSV.
    Run {
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of trials.
        #[arg(long)]
        trials: Option<u64>,
        /// CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate a per-round CSV.
    Summarize {
        csv: PathBuf,
        /// Compare against the analytic bounds for this many faults, check
        /// probability and tamper probability.
        #[arg(long, requires_all = ["q", "p"])]
        f: Option<usize>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
    },
    /// Run acceptance experiments: `all` or a comma-separated list of numbers.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
}

fn output_path(config: &Path, configured: Option<&Path>, out: Option<PathBuf>) -> PathBuf {
    if let Some(out) = out {
        return out;
    }
    let name = match configured {
        Some(p) if p.is_absolute() => return p.to_path_buf(),
        Some(p) => p.to_path_buf(),
        None => {
            let stem = config.file_stem().unwrap_or_default();
            PathBuf::from(stem).with_extension("csv")
        }
    };
    let dir = std::env::var_os(OUT_DIR_VAR).map_or_else(|| PathBuf::from("results"), PathBuf::from);
    dir.join(name)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            seed,
            trials,
            out,
        } => {
            let mut exp = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                exp.run.seed = seed;
            }
            if let Some(trials) = trials {
                exp.trials = trials;
            }
            let records = exp.execute()?;
            let path = output_path(&config, exp.output.as_deref(), out);
            harness::emit_csv(&records, &path)?;
            let summary = harness::summarize(&records)?;
            println!("{summary}");
            println!("wrote {}", path.display());
            Ok(true)
        }
        Command::Summarize { csv, f, q, p } => {
            let records = harness::load_csv(&csv)?;
            let summary = harness::summarize(&records)?;
            println!("{summary}");
            if let (Some(f), Some(q), Some(p)) = (f, q, p) {
                print!("{}", summary.compare(f, q, p)?);
            }
            Ok(true)
        }
        Command::Verify { suite } => {
            let mut all = true;
            for id in harness::suite_ids(&suite)? {
                let outcome = harness::run_criterion(id)?;
                println!("{outcome}");
                all &= outcome.passed;
            }
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            match &e {
                reactive_sgd::Error::Config(problems) => {
                    eprintln!("config error:");
                    for p in problems {
                        eprintln!("  {p}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
