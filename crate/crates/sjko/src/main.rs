use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sjko::commands::{self, WallClock};
use sjko::error::exit;
use sjko::ou::{self, BenchMethod};
use sjko::selfcheck::{self, Hooks};
use sjko::{checkpoint, CliError, CliResult, Method, RunConfig, Task};

#[derive(Parser)]
#[command(name = "sjko", version, about = "Semi-dual JKO training of generative maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, or resume one from a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        task: Option<Task>,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Resume from this checkpoint; its embedded configuration is used.
        #[arg(long, conflicts_with_all = ["config", "task", "method", "seed"])]
        checkpoint: Option<PathBuf>,
    },
    /// Draw samples from a trained model.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a CSV point cloud against a task.
    Eval {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        task: Option<Task>,
        /// Flow time of the cloud (OU task only).
        #[arg(long)]
        time: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare methods on an Ornstein–Uhlenbeck flow with a known solution.
    OuBench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', default_value = "analytic,em,sjko")]
        methods: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "runs/ou")]
        out: PathBuf,
    },
    /// Run the numerical self-checks.
    Selfcheck,
}

fn load_config(path: Option<&PathBuf>, task: Option<Task>) -> CliResult<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p, task),
        None => RunConfig::from_toml_str("", task),
    }
}

fn print_metrics(rows: &[(String, f64)]) {
    for (k, v) in rows {
        println!("{k} = {v}");
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train {
            config,
            task,
            method,
            seed,
            out,
            checkpoint,
        } => {
            let (cfg, resume) = match checkpoint {
                Some(path) => {
                    let (mut cfg, trainer) = checkpoint::load(&path)?;
                    if let Some(out) = out {
                        cfg.out = out;
                    }
                    (cfg, Some(trainer))
                }
                None => {
                    let mut cfg = load_config(config.as_ref(), task)?;
                    if let Some(m) = method {
                        cfg.method = m;
                    }
                    if let Some(s) = seed {
                        cfg.seed = s;
                    }
                    if let Some(o) = out {
                        cfg.out = o;
                    }
                    cfg.validate()?;
                    (cfg, None)
                }
            };
            let summary = commands::train(&cfg, resume, &WallClock::start())?;
            println!(
                "trained {} phases ({} iterations) into {}",
                summary.phases,
                summary.iterations,
                summary.out.display()
            );
            print_metrics(&summary.final_metrics);
        }
        Command::Sample {
            checkpoint,
            n,
            seed,
            out,
        } => {
            let cloud = commands::sample(&checkpoint, n, seed, &out)?;
            println!("wrote {} samples to {}", cloud.len(), out.display());
        }
        Command::Eval {
            samples,
            config,
            task,
            time,
            out,
        } => {
            let cfg = load_config(config.as_ref(), task)?;
            print_metrics(&commands::eval(&cfg, &samples, time, out.as_deref())?);
        }
        Command::OuBench {
            config,
            dim,
            times,
            methods,
            seeds,
            out,
        } => {
            let mut cfg = load_config(config.as_ref(), Some(Task::Ou))?;
            if let Some(d) = dim {
                cfg.ou.dim = d;
            }
            if let Some(t) = times {
                cfg.ou.times = t;
            }
            let methods = methods
                .iter()
                .map(|m| BenchMethod::parse(m))
                .collect::<CliResult<Vec<_>>>()?;
            for r in ou::bench(&cfg, &methods, &seeds, &out)? {
                println!(
                    "{} d={} t={} seed={} sym_kl={:.6e}",
                    r.method, r.dim, r.time, r.seed, r.sym_kl
                );
            }
        }
        Command::Selfcheck => {
            let results = selfcheck::run(&Hooks::default());
            for r in &results {
                println!("{}", r.line());
            }
            if results.iter().any(|r| !r.passed) {
                let failed: Vec<_> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
                return Err(CliError::CheckFailed(failed.join(", ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
