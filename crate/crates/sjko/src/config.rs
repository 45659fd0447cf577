//! Run configuration: TOML file, task defaults and command-line overrides.
//!
//! Every key has a default that depends on the task. A file only needs the
//! keys it changes; unknown keys are rejected. The fully resolved
//! configuration is what gets echoed next to the outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sjko_core::datasets::SamplerSpec;
use sjko_core::divergence::FDivKind;
use sjko_core::nets::Activation;
use sjko_core::sjko::{Composition, NetConfig, Objective, SjkoConfig, DEFAULT_HIDDEN};
use sjko_core::wgf::OuProcessSpec;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    TwoCircles,
    Gmm25,
    Ou,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::TwoCircles => "two-circles",
            Task::Gmm25 => "gmm25",
            Task::Ou => "ou",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Sjko,
    /// Both marginals relaxed with KL penalties.
    Uotm,
    /// Source marginal pinned, target relaxed.
    UotmSourceFixed,
}

impl Method {
    pub fn objective(self) -> Objective {
        match self {
            Method::Sjko => Objective::Sjko,
            Method::Uotm => Objective::Uotm {
                source: FDivKind::Kld,
                target: FDivKind::Kld,
            },
            Method::UotmSourceFixed => Objective::Uotm {
                source: FDivKind::Indicator,
                target: FDivKind::Kld,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Sjko => "sjko",
            Method::Uotm => "uotm",
            Method::UotmSourceFixed => "uotm-source-fixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub phases: usize,
    pub iters_per_phase: usize,
    /// Iterations of the first phase.
    pub first_phase_iters: usize,
    pub step_size: f64,
    pub batch_size: usize,
    pub lr_transport: f64,
    pub lr_potential: f64,
    pub r1_weight: f64,
    /// `kld` or `jsd`.
    pub divergence: String,
    pub aux_noise_dim: usize,
    pub cost_dim_normalized: bool,
    /// `reparametrized` or `sequential`.
    pub composition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetsSection {
    pub transport_hidden: Vec<usize>,
    pub potential_hidden: Vec<usize>,
    /// `silu`, `softplus` or `relu`.
    pub transport_activation: String,
    pub potential_activation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamSection {
    pub beta1: f64,
    pub beta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuSection {
    pub dim: usize,
    /// Seed of the random drift matrix and center.
    pub matrix_seed: u64,
    pub times: Vec<f64>,
    /// Model samples drawn per evaluation.
    pub samples: usize,
    pub em_particles: usize,
    pub em_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Write a checkpoint every this many phases; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Points per phase cloud.
    pub sample_size: usize,
    pub sample_seed: u64,
    pub capture_radius: f64,
    pub capture_min_fraction: f64,
    pub ring_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub method: Method,
    pub seed: u64,
    pub out: PathBuf,
    pub train: TrainSection,
    pub nets: NetsSection,
    pub adam: AdamSection,
    pub ou: OuSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn defaults(task: Task) -> Self {
        let (step_size, phases, iters, lr_t, lr_v) = match task {
            Task::TwoCircles => (2.0, 20, 5000, 1e-4, 1e-5),
            Task::Gmm25 => (5.0, 20, 5000, 1e-4, 1e-5),
            Task::Ou => (0.1, 9, 1000, 1e-3, 1e-3),
        };
        RunConfig {
            task,
            method: Method::Sjko,
            seed: 0,
            out: PathBuf::from(format!("runs/{}", task.name())),
            train: TrainSection {
                phases,
                iters_per_phase: iters,
                first_phase_iters: iters,
                step_size,
                batch_size: 400,
                lr_transport: lr_t,
                lr_potential: lr_v,
                r1_weight: 0.0,
                divergence: "kld".into(),
                aux_noise_dim: 0,
                cost_dim_normalized: false,
                composition: "reparametrized".into(),
            },
            nets: NetsSection {
                transport_hidden: DEFAULT_HIDDEN.to_vec(),
                potential_hidden: DEFAULT_HIDDEN.to_vec(),
                transport_activation: "silu".into(),
                potential_activation: "silu".into(),
            },
            adam: AdamSection { beta1: 0.5, beta2: 0.9 },
            ou: OuSection {
                dim: 2,
                matrix_seed: 0,
                times: vec![0.5, 0.9],
                samples: 10_000,
                em_particles: 50_000,
                em_dt: 1e-3,
            },
            output: OutputSection {
                checkpoint_every: 0,
                sample_size: 10_000,
                sample_seed: 12_345,
                capture_radius: sjko_core::metrics::DEFAULT_CAPTURE_RADIUS,
                capture_min_fraction: sjko_core::metrics::DEFAULT_CAPTURE_MIN_FRACTION,
                ring_tolerance: 0.6,
            },
        }
    }

    /// Parses a TOML document on top of the defaults of its task. `task`
    /// overrides the file's own `task` key.
    pub fn from_toml_str(text: &str, task: Option<Task>) -> CliResult<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let file_task = match user.get("task") {
            Some(v) => Some(Task::deserialize(v.clone()).map_err(|e| CliError::Config(format!("task: {e}")))?),
            None => None,
        };
        let task = task.or(file_task).unwrap_or(Task::Gmm25);
        let explicit_first = user.get("train").and_then(|t| t.get("first_phase_iters")).is_some();
        let mut merged = toml::Table::try_from(Self::defaults(task)).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut merged, user);
        merged.insert("task".into(), toml::Value::String(task.name().into()));
        let mut cfg: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if !explicit_first {
            cfg.train.first_phase_iters = cfg.train.iters_per_phase;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, task: Option<Task>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text, task)
    }

    pub fn to_toml(&self) -> String {
        let mut s = format!(
            "# effective configuration; total iterations: {}\n",
            self.total_iterations()
        );
        s.push_str(&toml::to_string(self).expect("configuration serializes"));
        s
    }

    pub fn total_iterations(&self) -> usize {
        let t = &self.train;
        if t.phases == 0 {
            0
        } else {
            t.first_phase_iters + (t.phases - 1) * t.iters_per_phase
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.sjko_config()?.validate()?;
        let o = &self.output;
        if o.sample_size == 0 {
            return Err(CliError::Config("output.sample_size must be >= 1".into()));
        }
        if !(o.capture_radius > 0.0) || !(o.ring_tolerance > 0.0) || !(0.0..=1.0).contains(&o.capture_min_fraction) {
            return Err(CliError::Config("invalid evaluation thresholds in [output]".into()));
        }
        let ou = &self.ou;
        if ou.dim == 0 || ou.samples <= ou.dim || ou.em_particles <= ou.dim || !(ou.em_dt > 0.0) {
            return Err(CliError::Config("invalid [ou] section".into()));
        }
        if ou.times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(CliError::Config("ou.times must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn sjko_config(&self) -> CliResult<SjkoConfig> {
        let t = &self.train;
        let divergence = FDivKind::parse(&t.divergence)
            .filter(|k| *k != FDivKind::Indicator)
            .ok_or_else(|| CliError::Config(format!("train.divergence must be kld or jsd, got {:?}", t.divergence)))?;
        let composition = match t.composition.as_str() {
            "reparametrized" => Composition::Reparametrized,
            "sequential" => Composition::Sequential,
            other => return Err(CliError::Config(format!("unknown composition {other:?}"))),
        };
        let act = |s: &str| Activation::parse(s).ok_or_else(|| CliError::Config(format!("unknown activation {s:?}")));
        let mut c = SjkoConfig::new(t.step_size);
        c.phases = t.phases;
        c.iters_per_phase = t.iters_per_phase;
        c.first_phase_iters = Some(t.first_phase_iters);
        c.batch_size = t.batch_size;
        c.lr_transport = t.lr_transport;
        c.lr_potential = t.lr_potential;
        c.r1_weight = t.r1_weight;
        c.divergence = divergence;
        c.aux_noise_dim = t.aux_noise_dim;
        c.cost_dim_normalized = t.cost_dim_normalized;
        c.seed = self.seed;
        c.transport_net = NetConfig::new(&self.nets.transport_hidden, act(&self.nets.transport_activation)?);
        c.potential_net = NetConfig::new(&self.nets.potential_hidden, act(&self.nets.potential_activation)?);
        c.adam_betas = (self.adam.beta1, self.adam.beta2);
        c.objective = self.method.objective();
        c.composition = composition;
        Ok(c)
    }

    pub fn ou_process(&self) -> CliResult<OuProcessSpec> {
        Ok(OuProcessSpec::random(self.ou.dim, self.ou.matrix_seed)?)
    }

    /// Source and target laws of the task.
    pub fn samplers(&self) -> CliResult<(SamplerSpec, SamplerSpec)> {
        Ok(match self.task {
            Task::TwoCircles => (SamplerSpec::StandardGaussian { dim: 2 }, SamplerSpec::TwoCircles),
            Task::Gmm25 => (SamplerSpec::StandardGaussian { dim: 2 }, SamplerSpec::Gmm25),
            Task::Ou => {
                let p = self.ou_process()?;
                (
                    SamplerSpec::Gaussian(p.initial().clone()),
                    SamplerSpec::Gaussian(p.stationary()),
                )
            }
        })
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_task() {
        let g = RunConfig::from_toml_str("", None).unwrap();
        assert_eq!(g.task, Task::Gmm25);
        assert_eq!(g.train.step_size, 5.0);
        assert_eq!(g.total_iterations(), 100_000);
        let c = RunConfig::from_toml_str("task = \"two-circles\"", None).unwrap();
        assert_eq!(c.train.step_size, 2.0);
        let o = RunConfig::from_toml_str("", Some(Task::Ou)).unwrap();
        assert_eq!(o.train.step_size, 0.1);
    }

    #[test]
    fn partial_sections_merge_and_first_phase_follows_n() {
        let c = RunConfig::from_toml_str("[train]\niters_per_phase = 7\nphases = 3\n", None).unwrap();
        assert_eq!(c.train.first_phase_iters, 7);
        assert_eq!(c.total_iterations(), 21);
        assert_eq!(c.train.batch_size, 400);
        let c = RunConfig::from_toml_str("[train]\nfirst_phase_iters = 10000\nphases = 3\n", None).unwrap();
        assert_eq!(c.total_iterations(), 20_000);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        for text in [
            "bogus = 1",
            "[train]\nbogus = 1",
            "[nets]\nwidth = 3",
            "[train]\nphases = 0",
            "[train]\nstep_size = -1.0",
            "[train]\ndivergence = \"indicator\"",
            "task = \"mnist\"",
            "[train]\nbatch_size = \"x\"",
            "not toml at all [",
        ] {
            assert!(RunConfig::from_toml_str(text, None).is_err(), "{text}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::from_toml_str("method = \"uotm\"\nseed = 4", Some(Task::TwoCircles)).unwrap();
        c.ou.times = vec![0.1, 0.25];
        let back = RunConfig::from_toml_str(&c.to_toml(), None).unwrap();
        assert_eq!(back, c);
        assert!(c
            .to_toml()
            .starts_with("# effective configuration; total iterations: 100000"));
    }
}
