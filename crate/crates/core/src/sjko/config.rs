use alloc::format;
use alloc::vec::Vec;

use crate::divergence::FDivKind;
use crate::error::{Error, Result};
use crate::nets::{Activation, MlpSpec};

/// Which objective the trainer optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Proximal steps against the previous phase's map.
    Sjko,
    /// Unbalanced OT between source and target; the reference map stays the
    /// identity for the whole run. `source = Indicator` fixes the source
    /// marginal.
    Uotm { source: FDivKind, target: FDivKind },
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Sjko => "sjko",
            Objective::Uotm {
                source: FDivKind::Indicator,
                ..
            } => "uotm-sf",
            Objective::Uotm { .. } => "uotm",
        }
    }
}

/// How the map of phase `k` is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Composition {
    /// One network carries the whole composed map; the reference map is a
    /// snapshot of it (constant cost per iteration).
    #[default]
    Reparametrized,
    /// The live network only models the increment; the reference map is the
    /// chain of all previous increments (cost per iteration grows with `k`).
    Sequential,
}

/// Hidden widths of both networks unless configured otherwise.
pub const DEFAULT_HIDDEN: [usize; 3] = [256, 256, 256];

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl NetConfig {
    pub fn new(hidden: &[usize], activation: Activation) -> Self {
        NetConfig {
            hidden: hidden.to_vec(),
            activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SjkoConfig {
    /// Number of proximal phases `K`.
    pub phases: usize,
    /// Inner iterations per phase `N`.
    pub iters_per_phase: usize,
    /// Iterations of the first phase; `None` means `iters_per_phase`.
    pub first_phase_iters: Option<usize>,
    /// Proximal step size `h` in time units.
    pub step_size: f64,
    pub batch_size: usize,
    pub lr_transport: f64,
    pub lr_potential: f64,
    /// Weight of the gradient penalty on real samples.
    pub r1_weight: f64,
    pub divergence: FDivKind,
    pub aux_noise_dim: usize,
    /// Divide the quadratic cost by the dimension.
    pub cost_dim_normalized: bool,
    pub seed: u64,
    pub transport_net: NetConfig,
    pub potential_net: NetConfig,
    pub adam_betas: (f64, f64),
    pub objective: Objective,
    pub composition: Composition,
}

impl SjkoConfig {
    /// Defaults shared by the synthetic tasks, for data of dimension `dim`.
    pub fn new(step_size: f64) -> Self {
        SjkoConfig {
            phases: 20,
            iters_per_phase: 5000,
            first_phase_iters: None,
            step_size,
            batch_size: 400,
            lr_transport: 1e-4,
            lr_potential: 1e-5,
            r1_weight: 0.0,
            divergence: FDivKind::Kld,
            aux_noise_dim: 0,
            cost_dim_normalized: false,
            seed: 0,
            transport_net: NetConfig::new(&DEFAULT_HIDDEN, Activation::Silu),
            potential_net: NetConfig::new(&DEFAULT_HIDDEN, Activation::Silu),
            adam_betas: (0.5, 0.9),
            objective: Objective::Sjko,
            composition: Composition::Reparametrized,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.phases == 0 {
            return fail("phases must be >= 1".into());
        }
        if self.iters_per_phase == 0 || self.first_phase_iters == Some(0) {
            return fail("iterations per phase must be >= 1".into());
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return fail(format!("step size must be positive and finite, got {}", self.step_size));
        }
        if self.batch_size < 2 {
            return fail(format!("batch size must be >= 2, got {}", self.batch_size));
        }
        if !(self.r1_weight >= 0.0) || !self.r1_weight.is_finite() {
            return fail(format!("R1 weight must be >= 0, got {}", self.r1_weight));
        }
        for (name, lr) in [("transport", self.lr_transport), ("potential", self.lr_potential)] {
            if !(lr > 0.0) || !lr.is_finite() {
                return fail(format!("{name} learning rate must be positive, got {lr}"));
            }
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return fail(format!("Adam betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        match self.objective {
            Objective::Sjko => {
                if self.divergence == FDivKind::Indicator {
                    return fail("the gradient-flow functional must be kld or jsd".into());
                }
            }
            Objective::Uotm { source, target } => {
                if source == FDivKind::Jsd || target != FDivKind::Kld {
                    return fail("UOTM supports a kld target penalty and an indicator or kld source penalty".into());
                }
                if self.composition != Composition::Reparametrized {
                    return fail("UOTM has no phase composition".into());
                }
            }
        }
        if self.composition == Composition::Sequential && self.aux_noise_dim > 0 {
            return fail("sequential composition needs aux_noise_dim = 0".into());
        }
        if self.r1_weight > 0.0 && !self.potential_net.activation.is_smooth() {
            return fail("the R1 penalty needs a smooth potential activation".into());
        }
        if self.transport_net.hidden.contains(&0) || self.potential_net.hidden.contains(&0) {
            return fail("hidden widths must be >= 1".into());
        }
        Ok(())
    }

    /// Iterations of phase `k`.
    pub fn iters_in_phase(&self, k: usize) -> usize {
        if k == 0 {
            self.first_phase_iters.unwrap_or(self.iters_per_phase)
        } else {
            self.iters_per_phase
        }
    }

    pub fn total_iterations(&self) -> usize {
        (0..self.phases).map(|k| self.iters_in_phase(k)).sum()
    }

    /// The divergence the potential and transport losses are built for.
    pub fn loss_kind(&self) -> FDivKind {
        match self.objective {
            Objective::Sjko => self.divergence,
            Objective::Uotm { .. } => FDivKind::Kld,
        }
    }

    pub fn transport_spec(&self, dim: usize) -> MlpSpec {
        MlpSpec::transport(
            dim,
            &self.transport_net.hidden,
            self.transport_net.activation,
            self.aux_noise_dim,
        )
    }

    pub fn potential_spec(&self, dim: usize) -> MlpSpec {
        MlpSpec::potential(dim, &self.potential_net.hidden, self.potential_net.activation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_count_iterations() {
        let mut c = SjkoConfig::new(2.0);
        c.validate().unwrap();
        assert_eq!(c.total_iterations(), 100_000);
        c.first_phase_iters = Some(10_000);
        c.phases = 3;
        c.iters_per_phase = 7;
        assert_eq!(c.total_iterations(), 10_014);
        c.phases = 1;
        c.first_phase_iters = None;
        c.iters_per_phase = 1;
        assert_eq!(c.total_iterations(), 1);
    }

    #[test]
    fn rejects_invalid_fields() {
        let base = SjkoConfig::new(1.0);
        let cases: [fn(&mut SjkoConfig); 9] = [
            |c| c.phases = 0,
            |c| c.iters_per_phase = 0,
            |c| c.step_size = 0.0,
            |c| c.batch_size = 1,
            |c| c.r1_weight = -1.0,
            |c| c.divergence = FDivKind::Indicator,
            |c| {
                c.composition = Composition::Sequential;
                c.aux_noise_dim = 2;
            },
            |c| {
                c.r1_weight = 1.0;
                c.potential_net.activation = Activation::Relu;
            },
            |c| {
                c.objective = Objective::Uotm {
                    source: FDivKind::Kld,
                    target: FDivKind::Jsd,
                }
            },
        ];
        for f in cases {
            let mut c = base.clone();
            f(&mut c);
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
