use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::config::{Composition, Objective, SjkoConfig};
use super::losses::{cost_terms, potential_loss_graph, transport_loss_graph, uotm_potential_graph};
use crate::autodiff::{gather_params, param_leaves, r1_penalty_var, Graph, ParamVector};
use crate::datasets::{CloudMeta, ParticleCloud, Sampler, SamplerSpec};
use crate::divergence::FDivKind;
use crate::error::{Error, Result};
use crate::nets::{adam_step, mlp_forward, mlp_graph, mlp_new, snapshot, AdamState, MlpSpec, TransportRef};
use crate::rng::{streams, RngState, StreamRng};
use crate::tensor::RealTensor;

/// Source of wall-clock seconds; the core crate has no clock of its own.
pub trait Clock {
    fn now(&self) -> f64;
}

/// A clock that always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub phase: usize,
    pub iteration: usize,
    pub loss_potential: f64,
    pub loss_transport: f64,
    /// Unweighted gradient penalty (0 when disabled).
    pub r1: f64,
    /// Duration of this iteration in seconds.
    pub seconds: f64,
    /// Seconds since training started, at the end of this iteration.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSnapshot {
    /// Number of completed phases.
    pub phase: usize,
    pub metrics: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace {
    pub iterations: Vec<IterationRecord>,
    pub phases: Vec<PhaseSnapshot>,
}

impl TrainingTrace {
    /// Records with the timing columns zeroed, for determinism comparisons.
    pub fn losses(&self) -> Vec<(usize, usize, f64, f64, f64)> {
        self.iterations
            .iter()
            .map(|r| (r.phase, r.iteration, r.loss_potential, r.loss_transport, r.r1))
            .collect()
    }
}

/// Everything one iteration fed to its two losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedBatches {
    /// Potential parameters before the potential update.
    pub potential_before: ParamVector,
    pub fake: RealTensor,
    pub real: RealTensor,
    pub v_fake: Vec<f64>,
    pub v_real: Vec<f64>,
    /// Potential parameters used by the transport update.
    pub potential_after: ParamVector,
    pub y_old: RealTensor,
    pub y_new: RealTensor,
    pub v_new: Vec<f64>,
}

/// State needed to continue training from a phase boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerCheckpoint {
    pub config: SjkoConfig,
    pub dim: usize,
    pub phase: usize,
    pub transport: ParamVector,
    pub transport_adam: AdamState,
    pub potential: ParamVector,
    pub potential_adam: AdamState,
    /// Frozen reference networks, innermost first.
    pub reference: Vec<ParamVector>,
    pub source_rng: RngState,
    pub target_rng: RngState,
    pub noise_rng: RngState,
}

/// Live networks, the frozen reference map and the training streams.
#[derive(Debug, Clone)]
pub struct SjkoTrainer {
    config: SjkoConfig,
    dim: usize,
    transport_spec: MlpSpec,
    transport: ParamVector,
    transport_adam: AdamState,
    potential_spec: MlpSpec,
    potential: ParamVector,
    potential_adam: AdamState,
    /// `T_old` as a composition applied left to right; empty is the identity.
    reference: Vec<TransportRef>,
    phase: usize,
    iteration: usize,
    source: Sampler,
    target: Sampler,
    noise: StreamRng,
    trace: TrainingTrace,
    log_batches: bool,
    last_batches: Option<LoggedBatches>,
    started: Option<f64>,
}

impl SjkoTrainer {
    pub fn new(config: SjkoConfig, source: SamplerSpec, target: SamplerSpec) -> Result<Self> {
        config.validate()?;
        let dim = source.dim();
        if target.dim() != dim {
            return Err(Error::Config(alloc::format!(
                "source is {dim}-dimensional but target is {}-dimensional",
                target.dim()
            )));
        }
        let transport_spec = config.transport_spec(dim);
        let potential_spec = config.potential_spec(dim);
        let transport = mlp_new(&transport_spec, config.seed, streams::TRANSPORT_INIT)?;
        let potential = mlp_new(&potential_spec, config.seed, streams::POTENTIAL_INIT)?;
        let (b1, b2) = config.adam_betas;
        Ok(SjkoTrainer {
            transport_adam: AdamState::new(transport.total_len(), b1, b2),
            potential_adam: AdamState::new(potential.total_len(), b1, b2),
            source: Sampler::new(source, config.seed, streams::SOURCE)?,
            target: Sampler::new(target, config.seed, streams::TARGET)?,
            noise: StreamRng::new(config.seed, streams::NOISE),
            config,
            dim,
            transport_spec,
            transport,
            potential_spec,
            potential,
            reference: Vec::new(),
            phase: 0,
            iteration: 0,
            trace: TrainingTrace::default(),
            log_batches: false,
            last_batches: None,
            started: None,
        })
    }

    pub fn config(&self) -> &SjkoConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Completed phases.
    pub fn phase(&self) -> usize {
        self.phase
    }

    /// Iterations done in the current phase.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn transport_spec(&self) -> &MlpSpec {
        &self.transport_spec
    }

    pub fn transport_params(&self) -> &ParamVector {
        &self.transport
    }

    pub fn potential_spec(&self) -> &MlpSpec {
        &self.potential_spec
    }

    pub fn potential_params(&self) -> &ParamVector {
        &self.potential
    }

    pub fn transport_adam(&self) -> &AdamState {
        &self.transport_adam
    }

    pub fn potential_adam(&self) -> &AdamState {
        &self.potential_adam
    }

    /// The frozen reference map, innermost first; empty means identity.
    pub fn reference(&self) -> &[TransportRef] {
        &self.reference
    }

    pub fn source_spec(&self) -> &SamplerSpec {
        self.source.spec()
    }

    pub fn target_spec(&self) -> &SamplerSpec {
        self.target.spec()
    }

    pub fn trace(&self) -> &TrainingTrace {
        &self.trace
    }

    pub fn into_trace(self) -> TrainingTrace {
        self.trace
    }

    /// Keep a copy of the batches of the latest iteration.
    pub fn set_log_batches(&mut self, on: bool) {
        self.log_batches = on;
        if !on {
            self.last_batches = None;
        }
    }

    pub fn last_batches(&self) -> Option<&LoggedBatches> {
        self.last_batches.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.phase >= self.config.phases
    }

    /// Maps whose composition pushes the source to the current model.
    ///
    /// With the reparametrized representation this is always one network.
    pub fn pushforward_maps(&self) -> Vec<TransportRef> {
        let live = snapshot(&self.transport_spec, &self.transport);
        match self.config.composition {
            Composition::Reparametrized => vec![live],
            Composition::Sequential => {
                let mut maps = self.reference.clone();
                if self.iteration > 0 || maps.is_empty() {
                    maps.push(live);
                }
                maps
            }
        }
    }

    /// `n` samples of the current model, reproducible from `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<ParticleCloud> {
        let mut cloud = sample_pushforward(&self.pushforward_maps(), self.source.spec(), n, seed)?;
        cloud.meta.origin = alloc::format!("{}-model", self.config.objective.name());
        cloud.meta.phase = Some(self.phase);
        cloud.meta.time = Some(self.phase as f64 * self.config.step_size);
        Ok(cloud)
    }

    fn draw_noise(&mut self, n: usize) -> Result<Option<RealTensor>> {
        let k = self.config.aux_noise_dim;
        if k == 0 {
            return Ok(None);
        }
        Ok(Some(RealTensor::matrix(n, k, self.noise.normals(n * k))?))
    }

    fn apply_reference(&self, x: &RealTensor, z: Option<&RealTensor>) -> Result<RealTensor> {
        let mut y = x.clone();
        for map in &self.reference {
            y = map.eval(&y, z)?;
        }
        Ok(y)
    }

    /// Input the live network sees for source points `x`.
    fn live_input(&self, x: &RealTensor, z_reference: Option<&RealTensor>) -> Result<RealTensor> {
        match self.config.composition {
            Composition::Reparametrized => Ok(x.clone()),
            Composition::Sequential => self.apply_reference(x, z_reference),
        }
    }

    fn uotm_kinds(&self) -> Option<(FDivKind, FDivKind)> {
        match self.config.objective {
            Objective::Sjko => None,
            Objective::Uotm { source, target } => Some((source, target)),
        }
    }

    /// One potential update followed by one transport update.
    pub fn inner_iteration(&mut self, clock: &dyn Clock) -> Result<IterationRecord> {
        if self.is_finished() {
            return Err(Error::Config("training already finished".into()));
        }
        let (phase, iteration) = (self.phase, self.iteration);
        let t0 = clock.now();
        let started = *self.started.get_or_insert(t0);
        let record = self
            .step(phase, iteration, clock, started, t0)
            .map_err(|e| e.at_iteration(phase, iteration))?;
        self.trace.iterations.push(record);
        self.iteration += 1;
        Ok(record)
    }

    fn step(
        &mut self,
        phase: usize,
        iteration: usize,
        clock: &dyn Clock,
        started: f64,
        t0: f64,
    ) -> Result<IterationRecord> {
        let cfg = &self.config;
        let b = cfg.batch_size;
        let kind = cfg.loss_kind();
        let lambda = cfg.r1_weight;
        let (h, normalized) = (cfg.step_size, cfg.cost_dim_normalized);
        let (lr_v, lr_t) = (cfg.lr_potential, cfg.lr_transport);
        let uotm = self.uotm_kinds();

        // Potential update.
        let x = self.source.sample_tensor(b)?;
        let y = self.target.sample_tensor(b)?;
        let z = self.draw_noise(b)?;
        let live_in = self.live_input(&x, None)?;
        let fake = mlp_forward(&self.transport_spec, &self.transport, &live_in, z.as_ref())?;
        let mut g = Graph::new();
        let pv = param_leaves(&mut g, &self.potential, true);
        let fake_var = g.constant(fake.clone());
        let real_var = g.leaf(y.clone(), lambda > 0.0);
        let vf = mlp_graph(&self.potential_spec, &mut g, &pv, fake_var, None)?;
        let vr = mlp_graph(&self.potential_spec, &mut g, &pv, real_var, None)?;
        let base = match uotm {
            None => potential_loss_graph(&mut g, kind, vf, vr)?,
            Some((src, tgt)) => {
                let costs = if src == FDivKind::Indicator {
                    None
                } else {
                    let old = g.constant(x.clone());
                    cost_terms(&mut g, old, fake_var, h, normalized, true)?.1
                };
                uotm_potential_graph(&mut g, src, tgt, vf, vr, costs)?
            }
        };
        let (loss_v, r1) = if lambda > 0.0 {
            let r1 = r1_penalty_var(&mut g, vr, real_var)?;
            let weighted = g.scale(r1, lambda);
            (g.add(base, weighted)?, g.value(r1).item()?)
        } else {
            (base, 0.0)
        };
        let loss_potential = g.value(loss_v).item()?;
        if !loss_potential.is_finite() {
            return Err(Error::non_finite("potential loss"));
        }
        let grads = g.grad(loss_v, &pv)?;
        let grads = gather_params(&g, &grads, &self.potential)?;
        let logged_potential = if self.log_batches {
            Some((
                self.potential.clone(),
                g.value(vf).data().to_vec(),
                g.value(vr).data().to_vec(),
            ))
        } else {
            None
        };
        drop(g);
        adam_step(&mut self.potential, &grads, &mut self.potential_adam, lr_v)?;

        // Transport update.
        let x = self.source.sample_tensor(b)?;
        let z1 = self.draw_noise(b)?;
        let z2 = self.draw_noise(b)?;
        let y_old = self.apply_reference(&x, z2.as_ref())?;
        let input = match self.config.composition {
            Composition::Reparametrized => x,
            Composition::Sequential => y_old.clone(),
        };
        let mut g = Graph::new();
        let tv = param_leaves(&mut g, &self.transport, true);
        let xin = g.constant(input);
        let zin = z1.map(|z| g.constant(z));
        let y_new = mlp_graph(&self.transport_spec, &mut g, &tv, xin, zin)?;
        let pv = param_leaves(&mut g, &self.potential, false);
        let v_new = mlp_graph(&self.potential_spec, &mut g, &pv, y_new, None)?;
        let old = g.constant(y_old);
        let (cost_mean, _) = cost_terms(&mut g, old, y_new, h, normalized, false)?;
        let loss_t = transport_loss_graph(&mut g, kind, cost_mean, v_new)?;
        let loss_transport = g.value(loss_t).item()?;
        if !loss_transport.is_finite() {
            return Err(Error::non_finite("transport loss"));
        }
        let grads = g.grad(loss_t, &tv)?;
        let grads = gather_params(&g, &grads, &self.transport)?;
        if let Some((potential_before, v_fake, v_real)) = logged_potential {
            self.last_batches = Some(LoggedBatches {
                potential_before,
                fake,
                real: y,
                v_fake,
                v_real,
                potential_after: self.potential.clone(),
                y_old: g.value(old).clone(),
                y_new: g.value(y_new).clone(),
                v_new: g.value(v_new).data().to_vec(),
            });
        }
        drop(g);
        adam_step(&mut self.transport, &grads, &mut self.transport_adam, lr_t)?;

        let t1 = clock.now();
        Ok(IterationRecord {
            phase,
            iteration,
            loss_potential,
            loss_transport,
            r1,
            seconds: t1 - t0,
            elapsed: t1 - started,
        })
    }

    /// Finishes the current phase and moves the reference map forward.
    pub fn run_phase(&mut self, clock: &dyn Clock) -> Result<()> {
        let n = self.config.iters_in_phase(self.phase);
        while self.iteration < n {
            self.inner_iteration(clock)?;
        }
        self.end_phase();
        Ok(())
    }

    fn end_phase(&mut self) {
        let frozen = snapshot(&self.transport_spec, &self.transport);
        match (self.config.objective, self.config.composition) {
            (Objective::Uotm { .. }, _) => {}
            (Objective::Sjko, Composition::Reparametrized) => self.reference = vec![frozen],
            (Objective::Sjko, Composition::Sequential) => self.reference.push(frozen),
        }
        self.phase += 1;
        self.iteration = 0;
    }

    /// Runs the remaining phases. After each phase `on_phase` sees the
    /// trainer and returns metrics to store in the trace.
    pub fn train(
        &mut self,
        clock: &dyn Clock,
        on_phase: &mut dyn FnMut(&SjkoTrainer) -> Result<Vec<(String, f64)>>,
    ) -> Result<()> {
        while !self.is_finished() {
            self.run_phase(clock)?;
            let metrics = on_phase(self)?;
            self.trace.phases.push(PhaseSnapshot {
                phase: self.phase,
                metrics,
            });
        }
        Ok(())
    }

    /// Resumable state; only available at a phase boundary.
    pub fn checkpoint(&self) -> Result<TrainerCheckpoint> {
        if self.iteration != 0 {
            return Err(Error::Config("checkpoints are taken at phase boundaries".into()));
        }
        let reference = self
            .reference
            .iter()
            .map(|r| match r {
                TransportRef::Frozen { params, .. } => params.clone(),
                TransportRef::Identity => ParamVector::new(),
            })
            .collect();
        Ok(TrainerCheckpoint {
            config: self.config.clone(),
            dim: self.dim,
            phase: self.phase,
            transport: self.transport.clone(),
            transport_adam: self.transport_adam.clone(),
            potential: self.potential.clone(),
            potential_adam: self.potential_adam.clone(),
            reference,
            source_rng: self.source.rng_state(),
            target_rng: self.target.rng_state(),
            noise_rng: self.noise.state(),
        })
    }

    pub fn restore(ckpt: TrainerCheckpoint, source: SamplerSpec, target: SamplerSpec) -> Result<Self> {
        let mut t = SjkoTrainer::new(ckpt.config, source, target)?;
        if ckpt.dim != t.dim {
            return Err(Error::Config("checkpoint dimension does not match the data".into()));
        }
        let bad = |what: &str| Error::Config(alloc::format!("checkpoint {what} does not match the network layout"));
        if !ckpt.transport.same_layout(&t.transport) || ckpt.transport_adam.m.len() != t.transport.total_len() {
            return Err(bad("transport"));
        }
        if !ckpt.potential.same_layout(&t.potential) || ckpt.potential_adam.m.len() != t.potential.total_len() {
            return Err(bad("potential"));
        }
        let mut reference = Vec::with_capacity(ckpt.reference.len());
        for p in ckpt.reference {
            if !p.same_layout(&t.transport) {
                return Err(bad("reference map"));
            }
            reference.push(snapshot(&t.transport_spec, &p));
        }
        t.phase = ckpt.phase;
        t.transport = ckpt.transport;
        t.transport_adam = ckpt.transport_adam;
        t.potential = ckpt.potential;
        t.potential_adam = ckpt.potential_adam;
        t.reference = reference;
        t.source.set_rng_state(&ckpt.source_rng);
        t.target.set_rng_state(&ckpt.target_rng);
        t.noise = StreamRng::from_state(&ckpt.noise_rng);
        Ok(t)
    }
}

/// Final networks and trace of a finished run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub transport_spec: MlpSpec,
    pub transport: ParamVector,
    pub trainer: SjkoTrainer,
    pub trace: TrainingTrace,
}

/// A failed run with everything recorded before the failure.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub trace: TrainingTrace,
}

/// Builds a trainer and runs all phases.
pub fn train(
    config: SjkoConfig,
    source: SamplerSpec,
    target: SamplerSpec,
    clock: &dyn Clock,
    on_phase: &mut dyn FnMut(&SjkoTrainer) -> Result<Vec<(String, f64)>>,
) -> core::result::Result<TrainOutcome, TrainFailure> {
    let mut trainer = SjkoTrainer::new(config, source, target).map_err(|error| TrainFailure {
        error,
        trace: TrainingTrace::default(),
    })?;
    match trainer.train(clock, on_phase) {
        Ok(()) => Ok(TrainOutcome {
            transport_spec: trainer.transport_spec.clone(),
            transport: trainer.transport.clone(),
            trace: trainer.trace.clone(),
            trainer,
        }),
        Err(error) => Err(TrainFailure {
            error,
            trace: trainer.into_trace(),
        }),
    }
}

/// Pushes `n` source samples through `maps` (applied in order). Auxiliary
/// noise is drawn per map that takes it.
pub fn sample_pushforward(maps: &[TransportRef], source: &SamplerSpec, n: usize, seed: u64) -> Result<ParticleCloud> {
    let mut sampler = Sampler::new(source.clone(), seed, streams::EVAL)?;
    let mut noise = StreamRng::new(seed, streams::EVAL_NOISE);
    let mut y = sampler.sample_tensor(n)?;
    for map in maps {
        let z = match map {
            TransportRef::Frozen { spec, .. } if spec.aux_noise_dim > 0 => {
                let k = spec.aux_noise_dim;
                Some(RealTensor::matrix(n, k, noise.normals(n * k))?)
            }
            _ => None,
        };
        y = map.eval(&y, z.as_ref())?;
    }
    let mut meta = CloudMeta::new("pushforward", seed);
    meta.phase = Some(maps.len());
    ParticleCloud::new(y, meta)
}
