use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flsim::bench::BenchConfig;
use flsim_cli::{bench, error_line, options_from_env, run, sweep, RunManifest};

#[derive(Parser)]
#[command(name = "flsim", version, about = "Federated-learning simulator with Byzantine-robust aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Manifest {
    /// Experiment config in key = value format.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl From<Manifest> for RunManifest {
    fn from(m: Manifest) -> Self {
        RunManifest {
            config_path: m.config,
            out_dir: m.out,
            overrides: m.overrides,
            seed: m.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment, writing metrics.csv and metrics.json.
    Run(Manifest),
    /// Run one experiment per value of a config key.
    Sweep {
        #[command(flatten)]
        manifest: Manifest,
        /// Key to vary: log_size, sigma, epsilon, aggregator or partition.
        #[arg(long = "sweep", value_name = "KEY")]
        key: String,
        /// Comma-separated values.
        #[arg(long, value_name = "LIST", value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
    },
    /// Time every aggregator over growing worker counts; writes bench.csv.
    Bench {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long = "n-values", value_delimiter = ',', default_value = "8,16,32,64")]
        n_values: Vec<usize>,
        /// Gradient dimension.
        #[arg(long, default_value_t = 2000)]
        d: usize,
        /// LEGATO log size.
        #[arg(long, default_value_t = 10)]
        m: usize,
        #[arg(long, default_value_t = 7)]
        repetitions: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let options = options_from_env();
    let result = match cli.command {
        Command::Run(m) => run(&m.into(), options).map(|_| true),
        Command::Sweep {
            manifest,
            key,
            values,
        } => sweep(&manifest.into(), &key, &values, options).map(|outcomes| {
            for o in &outcomes {
                if let Err(e) = &o.result {
                    eprintln!("error[sweep]: {} = {}: {}", key, o.value, e);
                }
            }
            outcomes.iter().all(|o| o.result.is_ok())
        }),
        Command::Bench {
            out,
            n_values,
            d,
            m,
            repetitions,
            seed,
        } => {
            let cfg = BenchConfig {
                n_values,
                d,
                m,
                repetitions,
                seed,
                ..BenchConfig::default()
            };
            bench(&cfg, &out).map(|csv| {
                print!("{csv}");
                true
            })
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(2)
        }
    }
}
