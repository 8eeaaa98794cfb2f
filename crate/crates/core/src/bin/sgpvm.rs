use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use sgpvm::bench::{Benchmark, AGENT_SWEEP};
use sgpvm::config::ExperimentConfig;
use sgpvm::runner::{cmd_bench, cmd_evolve, cmd_replay, BenchRequest};
use sgpvm::{Backend, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "sgpvm", version, about = "Event-driven linear GP engine")]
struct Cli {
    /// Root seed. Overrides the config file for `evolve`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Interpreter backend. `bench` runs both when omitted.
    #[arg(long, global = true)]
    backend: Option<Backend>,
    /// Directory for outputs.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the replicates described by an experiment config.
    Evolve {
        config: PathBuf,
    },
    /// Time the microbenchmarks on both backends.
    Bench {
        /// Benchmark to run; may be repeated. Defaults to all five.
        #[arg(long)]
        benchmark: Vec<Benchmark>,
        #[arg(long, value_delimiter = ',', default_values_t = AGENT_SWEEP)]
        agents: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        replicates: usize,
        /// Timing CSV, relative to --out-dir.
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
        /// Minimum length of each timed region.
        #[arg(long, default_value_t = 100)]
        min_time_ms: u64,
    },
    /// Recompute a result CSV from a run manifest and verify its checksum.
    Replay {
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        replicate: usize,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Evolve { config } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            if let Some(backend) = cli.backend {
                config.backend = backend;
            }
            config.validate()?;
            let out_dir = cli
                .out_dir
                .or_else(|| config.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("."));
            let report = cmd_evolve(&config, &out_dir)?;
            print!("{}", report.summary_csv);
            eprintln!("wrote {}", out_dir.join(sgpvm::runner::MANIFEST_FILE).display());
        }
        Command::Bench {
            benchmark,
            agents,
            replicates,
            out,
            min_time_ms,
        } => {
            let out_dir = cli.out_dir.unwrap_or_else(|| PathBuf::from("."));
            let request = BenchRequest {
                benchmarks: if benchmark.is_empty() {
                    Benchmark::ALL.to_vec()
                } else {
                    benchmark
                },
                backends: cli.backend.map_or(Backend::ALL.to_vec(), |b| vec![b]),
                agents,
                replicates,
                min_time: Duration::from_millis(min_time_ms),
                seed: cli.seed.unwrap_or(1),
                out: out_dir.join(out),
            };
            cmd_bench(&request)?;
            print!("{}", std::fs::read_to_string(request.speedup_path())?);
            eprintln!("wrote {}", request.out.display());
        }
        Command::Replay {
            manifest,
            replicate,
        } => {
            let out_dir = cli.out_dir.unwrap_or_else(|| {
                manifest
                    .parent()
                    .filter(|p| !p.as_os_str().is_empty())
                    .map_or_else(|| PathBuf::from("."), PathBuf::from)
            });
            let report = cmd_replay(&manifest, replicate, &out_dir)?;
            println!("ok {} sha256={}", report.path.display(), report.checksum);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &Error) -> u8 {
    e.exit_code() as u8
}
