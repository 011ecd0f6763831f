use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cknn_ae_cli::commands::{bench_graphs, eval_run, gen_data, train_run, DEFAULT_BENCH_SIZES};
use cknn_ae_cli::ExperimentConfig;

#[derive(Parser)]
#[command(name = "cknn-ae", version, about = "CkNN auto-encoder experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write train.csv and test.csv for a generator dataset.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write a run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a trained run on its test split.
    Eval {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        /// Output directory; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Score this CSV instead of the configured test split.
        #[arg(long)]
        test_csv: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Time CkNN and MST construction over batch sizes.
    BenchGraphs {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, default_value_t = cknn_ae::graphs::BENCH_REPS)]
        reps: usize,
        #[arg(long, default_value_t = 9)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Usage(String),
    Runtime(cknn_ae::Error),
}

impl From<cknn_ae::Error> for Failure {
    fn from(e: cknn_ae::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn read_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::GenData { config, out, seed } => {
            let cfg = read_config(&config, seed)?;
            if matches!(cfg.dataset, cknn_ae_cli::DatasetSource::Csv { .. }) {
                return Err(Failure::Usage("gen-data needs dataset = swiss-roll or two-boxes".into()));
            }
            let (a, b) = gen_data(&cfg, &out)?;
            println!("wrote {} and {}", a.display(), b.display());
        }
        Command::Train { config, out, seed } => {
            let cfg = read_config(&config, seed)?;
            let o = train_run(&cfg, &out)?;
            if let Some(r) = o.history.last() {
                println!(
                    "{} steps; final loss {:.6}, rec {:.6}, topo {:.6}",
                    o.history.len(),
                    r.loss_total,
                    r.loss_rec,
                    r.loss_topo_or_sne
                );
            }
            println!("run directory {}", o.run_dir.display());
        }
        Command::Eval {
            run,
            out,
            test_csv,
            seed,
        } => {
            let out = out.unwrap_or_else(|| run.clone());
            let o = eval_run(&run, &out, test_csv.as_deref(), seed)?;
            print!("{}", o.report.to_json());
        }
        Command::BenchGraphs {
            out,
            sizes,
            reps,
            k,
            seed,
        } => {
            let sizes = sizes.unwrap_or_else(|| DEFAULT_BENCH_SIZES.to_vec());
            if reps == 0 || sizes.is_empty() {
                return Err(Failure::Usage("need at least one size and one repetition".into()));
            }
            for r in bench_graphs(&sizes, reps, k, seed, &out)? {
                println!("{:>6} {:<5} {:.4e} s (+- {:.1e})", r.size, r.method, r.mean_seconds, r.std_seconds);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
