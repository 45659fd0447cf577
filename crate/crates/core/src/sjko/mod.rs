//! Per-phase adversarial training of the proximal (JKO) steps.
//!
//! Each phase approximates one step `μ_{k+1} = argmin_ρ W₂²(μ_k, ρ)/(2h) + D_f(ρ | ν)`
//! by alternating a potential update and a transport update. The transport
//! network always maps the source directly to the current iterate; the
//! previous phase's network is kept frozen as the reference map, so the cost
//! per iteration does not depend on the phase index.

mod config;
mod losses;
mod trainer;

pub use config::{Composition, NetConfig, Objective, SjkoConfig, DEFAULT_HIDDEN};
pub use losses::{cost, mean_cost, potential_loss, transport_loss, uotm_losses};
pub use trainer::{
    sample_pushforward, train, Clock, IterationRecord, LoggedBatches, NoClock, PhaseSnapshot, SjkoTrainer,
    TrainFailure, TrainOutcome, TrainerCheckpoint, TrainingTrace,
};
