//! Ornstein–Uhlenbeck benchmark: distance of each method's law at fixed
//! times to the closed-form flow.

use std::path::Path;
use std::sync::Mutex;

use sjko_core::rng::{streams, StreamRng};
use sjko_core::sjko::{Clock, NoClock, SjkoTrainer};
use sjko_core::wgf::{em_simulate, fit_gaussian, ou_analytic, sym_kl};

use crate::config::{RunConfig, Task};
use crate::csvio::{self, ResultRow};
use crate::error::{CliError, CliResult};

/// Environment variable bounding the number of worker threads.
pub const THREADS_ENV: &str = "SJKO_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BenchMethod {
    Analytic,
    Em,
    Sjko,
}

impl BenchMethod {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s.trim() {
            "analytic" => Ok(BenchMethod::Analytic),
            "em" => Ok(BenchMethod::Em),
            "sjko" => Ok(BenchMethod::Sjko),
            other => Err(CliError::Usage(format!(
                "unknown OU method {other:?} (analytic, em, sjko)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Analytic => "analytic",
            BenchMethod::Em => "em",
            BenchMethod::Sjko => "sjko",
        }
    }
}

/// Phase index whose model represents time `t`.
pub fn phase_for_time(t: f64, h: f64) -> CliResult<usize> {
    let k = (t / h).round();
    if (k * h - t).abs() > 1e-9 * t.abs().max(1.0) {
        return Err(CliError::Config(format!(
            "evaluation time {t} is not a multiple of the step size {h}"
        )));
    }
    Ok(k as usize)
}

/// Worker count from [`THREADS_ENV`], at least 1.
pub fn thread_budget() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(1)
        .max(1)
}

/// Symmetric KL of S-JKO models at each of `times` for one training seed.
pub fn sjko_cell(config: &RunConfig, seed: u64, times: &[f64], clock: &dyn Clock) -> CliResult<Vec<(f64, f64)>> {
    let mut cfg = config.clone();
    cfg.task = Task::Ou;
    cfg.seed = seed;
    let h = cfg.train.step_size;
    let targets: Vec<(f64, usize)> = times
        .iter()
        .map(|&t| phase_for_time(t, h).map(|k| (t, k)))
        .collect::<CliResult<_>>()?;
    cfg.train.phases = targets.iter().map(|p| p.1).max().unwrap_or(0).max(1);
    let spec = cfg.ou_process()?;
    let (source, target) = cfg.samplers()?;
    let mut trainer = SjkoTrainer::new(cfg.sjko_config()?, source, target)?;
    let mut out = Vec::new();
    let eval = |trainer: &SjkoTrainer, out: &mut Vec<(f64, f64)>| -> sjko_core::Result<()> {
        for &(t, k) in &targets {
            if k == trainer.phase() {
                let fitted = fit_gaussian(&trainer.sample(cfg.ou.samples, cfg.output.sample_seed ^ seed)?)?;
                out.push((t, sym_kl(&fitted, &ou_analytic(&spec, t)?)?));
            }
        }
        Ok(())
    };
    trainer.train(clock, &mut |t| {
        eval(t, &mut out)?;
        Ok(Vec::new())
    })?;
    if targets.iter().any(|p| p.1 == 0) {
        let initial = fit_gaussian(&sjko_core::sjko::sample_pushforward(
            &[],
            trainer.source_spec(),
            cfg.ou.samples,
            cfg.output.sample_seed ^ seed,
        )?)?;
        out.push((0.0, sym_kl(&initial, &ou_analytic(&spec, 0.0)?)?));
    }
    Ok(out)
}

fn em_cell(config: &RunConfig, seed: u64, times: &[f64]) -> CliResult<Vec<(f64, f64)>> {
    let spec = config.ou_process()?;
    times
        .iter()
        .map(|&t| {
            let mut rng = StreamRng::new(seed, streams::SIMULATION);
            let cloud = em_simulate(&spec, config.ou.em_particles, config.ou.em_dt, t, &mut rng)?;
            Ok((t, sym_kl(&fit_gaussian(&cloud)?, &ou_analytic(&spec, t)?)?))
        })
        .collect()
}

fn analytic_cell(config: &RunConfig, times: &[f64]) -> CliResult<Vec<(f64, f64)>> {
    let spec = config.ou_process()?;
    times
        .iter()
        .map(|&t| {
            let g = ou_analytic(&spec, t)?;
            Ok((t, sym_kl(&g, &g)?))
        })
        .collect()
}

/// Runs every `(method, seed)` cell on up to [`thread_budget`] threads and
/// writes `results.csv` under `out` sorted by method, time and seed.
pub fn bench(config: &RunConfig, methods: &[BenchMethod], seeds: &[u64], out: &Path) -> CliResult<Vec<ResultRow>> {
    config.validate()?;
    if methods.is_empty() || seeds.is_empty() || config.ou.times.is_empty() {
        return Err(CliError::Usage(
            "ou-bench needs at least one method, seed and time".into(),
        ));
    }
    let times = config.ou.times.clone();
    let cells: Vec<(BenchMethod, u64)> = methods
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let queue = Mutex::new(cells.into_iter().rev().collect::<Vec<_>>());
    let results = Mutex::new(Vec::new());
    let failure = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..thread_budget() {
            scope.spawn(|| loop {
                let Some((method, seed)) = queue.lock().expect("queue").pop() else {
                    break;
                };
                let cell = match method {
                    BenchMethod::Analytic => analytic_cell(config, &times),
                    BenchMethod::Em => em_cell(config, seed, &times),
                    BenchMethod::Sjko => sjko_cell(config, seed, &times, &NoClock),
                };
                match cell {
                    Ok(rows) => results
                        .lock()
                        .expect("results")
                        .extend(rows.into_iter().map(|(t, s)| ResultRow {
                            method: method.name().into(),
                            dim: config.ou.dim,
                            time: t,
                            sym_kl: s,
                            seed,
                        })),
                    Err(e) => {
                        failure.lock().expect("failure").get_or_insert(e);
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().expect("failure") {
        return Err(e);
    }
    let mut rows = results.into_inner().expect("results");
    let order = |m: &str| methods.iter().position(|x| x.name() == m).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        order(&a.method)
            .cmp(&order(&b.method))
            .then(a.time.total_cmp(&b.time))
            .then(a.seed.cmp(&b.seed))
    });
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    csvio::write_text(&out.join("config.toml"), &config.to_toml())?;
    csvio::write_results(&out.join("results.csv"), &rows)?;
    Ok(rows)
}
