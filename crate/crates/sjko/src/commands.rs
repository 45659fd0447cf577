//! The `train`, `sample` and `eval` commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use sjko_core::datasets::{gmm25_centers, ParticleCloud, TWO_CIRCLES_RADII};
use sjko_core::metrics::{capture_min_for, mode_coverage, ring_fraction};
use sjko_core::sjko::{Clock, SjkoTrainer};
use sjko_core::wgf::{fit_gaussian, ou_analytic, sym_kl};

use crate::checkpoint;
use crate::config::{RunConfig, Task};
use crate::csvio;
use crate::error::{CliError, CliResult};

/// Seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        WallClock(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::start()
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Task metrics of a cloud. `time` is the flow time the cloud represents,
/// used only by the OU task.
pub fn evaluate(config: &RunConfig, cloud: &ParticleCloud, time: Option<f64>) -> CliResult<Vec<(String, f64)>> {
    let o = &config.output;
    Ok(match config.task {
        Task::Gmm25 => {
            let min = capture_min_for(cloud.len(), o.capture_min_fraction);
            let r = mode_coverage(cloud, &gmm25_centers(), o.capture_radius, min)?;
            vec![
                ("captured_modes".into(), r.captured_modes as f64),
                ("high_quality_fraction".into(), r.high_quality_fraction),
            ]
        }
        Task::TwoCircles => {
            let r = ring_fraction(cloud, &TWO_CIRCLES_RADII, o.ring_tolerance)?;
            let mut rows = vec![("fraction_near_rings".to_string(), r.fraction_near_rings)];
            for (rad, share) in TWO_CIRCLES_RADII.iter().zip(&r.shares) {
                rows.push((format!("share_radius_{rad}"), *share));
            }
            rows
        }
        Task::Ou => {
            let spec = config.ou_process()?;
            if cloud.dim() != spec.dim() {
                return Err(CliError::Usage(format!(
                    "cloud is {}-dimensional, the OU task is {}-dimensional",
                    cloud.dim(),
                    spec.dim()
                )));
            }
            let fitted = fit_gaussian(cloud)?;
            let mut rows = vec![(
                "mean_norm".to_string(),
                fitted.mean.iter().map(|m| m * m).sum::<f64>().sqrt(),
            )];
            if let Some(t) = time {
                let s = sym_kl(&fitted, &ou_analytic(&spec, t)?)?;
                rows.push(("sym_kl".into(), s));
                rows.push(("log10_sym_kl".into(), s.log10()));
            }
            rows
        }
    })
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub out: PathBuf,
    pub phases: usize,
    pub iterations: usize,
    pub final_metrics: Vec<(String, f64)>,
}

pub fn cloud_path(out: &Path, phase: usize) -> PathBuf {
    out.join(format!("samples_phase_{phase}.csv"))
}

pub fn checkpoint_path(out: &Path, phase: usize) -> PathBuf {
    out.join(format!("checkpoint_phase_{phase}.sjko"))
}

/// Runs (or resumes) training and writes every artifact into `config.out`.
///
/// Outputs: `config.toml`, `trace.csv`, `timing.csv`, `metrics.csv`,
/// `samples_phase_{k}.csv` after each phase, periodic
/// `checkpoint_phase_{k}.sjko` files and the final `checkpoint.sjko`.
/// On a numeric failure the partial traces are still written.
pub fn train(config: &RunConfig, resume: Option<SjkoTrainer>, clock: &dyn Clock) -> CliResult<TrainSummary> {
    config.validate()?;
    let out = config.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    csvio::write_text(&out.join("config.toml"), &config.to_toml())?;
    let mut trainer = match resume {
        Some(t) => t,
        None => {
            let (source, target) = config.samplers()?;
            SjkoTrainer::new(config.sjko_config()?, source, target)?
        }
    };
    let step = config.train.step_size;
    let every = config.output.checkpoint_every;
    let mut io_error = None;
    let result = trainer.train(clock, &mut |t| {
        let k = t.phase();
        let cloud = t.sample(config.output.sample_size, config.output.sample_seed)?;
        let metrics = match evaluate(config, &cloud, Some(k as f64 * step)) {
            Ok(m) => m,
            Err(CliError::Core(e)) => return Err(e),
            Err(e) => {
                io_error = Some(e);
                return Err(sjko_core::Error::Config("output failure".into()));
            }
        };
        let written = csvio::write_cloud(&cloud_path(&out, k), &cloud).and_then(|_| {
            if every > 0 && k % every == 0 {
                checkpoint::save(&checkpoint_path(&out, k), config, t)
            } else {
                Ok(())
            }
        });
        if let Err(e) = written {
            io_error = Some(e);
            return Err(sjko_core::Error::Config("output failure".into()));
        }
        Ok(metrics)
    });
    csvio::write_trace(&out.join("trace.csv"), trainer.trace())?;
    csvio::write_timing(&out.join("timing.csv"), trainer.trace())?;
    csvio::write_metrics(&out.join("metrics.csv"), trainer.trace())?;
    if let Some(e) = io_error {
        return Err(e);
    }
    result?;
    checkpoint::save(&out.join("checkpoint.sjko"), config, &trainer)?;
    Ok(TrainSummary {
        out,
        phases: trainer.phase(),
        iterations: trainer.trace().iterations.len(),
        final_metrics: trainer
            .trace()
            .phases
            .last()
            .map(|p| p.metrics.clone())
            .unwrap_or_default(),
    })
}

/// Draws `n` points from a checkpointed model into `out`.
pub fn sample(checkpoint: &Path, n: usize, seed: u64, out: &Path) -> CliResult<ParticleCloud> {
    if n == 0 {
        return Err(CliError::Usage("--n must be >= 1".into()));
    }
    let (_, trainer) = checkpoint::load(checkpoint)?;
    let cloud = trainer.sample(n, seed)?;
    csvio::write_cloud(out, &cloud)?;
    Ok(cloud)
}

/// Evaluates a CSV cloud against a task. OU clouds are compared with the
/// analytic law at `time` when given.
pub fn eval(
    config: &RunConfig,
    samples: &Path,
    time: Option<f64>,
    out: Option<&Path>,
) -> CliResult<Vec<(String, f64)>> {
    let cloud = csvio::read_cloud(samples)?;
    let expected = match config.task {
        Task::Ou => config.ou.dim,
        _ => 2,
    };
    if cloud.dim() != expected {
        return Err(CliError::format(
            samples,
            format!("expected {expected}-dimensional points, found {}", cloud.dim()),
        ));
    }
    let rows = evaluate(config, &cloud, time)?;
    let default_out;
    let out = match out {
        Some(p) => p,
        None => {
            let stem = samples
                .file_stem()
                .map_or_else(|| "samples".into(), |s| s.to_string_lossy().into_owned());
            default_out = samples.with_file_name(format!("{stem}_eval.csv"));
            &default_out
        }
    };
    csvio::write_report(out, &rows)?;
    Ok(rows)
}
