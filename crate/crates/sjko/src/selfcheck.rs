//! Numerical self-checks against independent oracles.
//!
//! Every check compares a library routine (reachable through [`Hooks`] so
//! tests can substitute a broken one) with a brute-force or Monte-Carlo
//! reference computed here.

use std::time::Instant;

use sjko_core::autodiff::{central_difference_error, forward, grad, r1_param_gradient, ParamVector};
use sjko_core::datasets::{CloudMeta, ParticleCloud, SamplerSpec};
use sjko_core::divergence::{f_conjugate, f_derivative, f_value, FDivKind};
use sjko_core::linalg::Matrix;
use sjko_core::metrics::empirical_w2_sq;
use sjko_core::nets::{mlp_forward, mlp_graph, mlp_new, Activation, MlpSpec};
use sjko_core::rng::StreamRng;
use sjko_core::sjko::{train, NetConfig, NoClock, Objective, SjkoConfig, SjkoTrainer};
use sjko_core::wgf::{sym_kl, GaussianDist};
use sjko_core::{RealTensor, Result};

pub const GRADIENT_TOL: f64 = 1e-6;
pub const R1_TOL: f64 = 1e-4;
pub const CONJUGATE_TOL: f64 = 1e-4;
pub const FENCHEL_YOUNG_SLACK: f64 = 1e-12;
pub const SYM_KL_REL_TOL: f64 = 0.02;
pub const W2_TOL: f64 = 1e-12;
pub const EQUIVALENCE_TOL: f64 = 1e-12;

pub const GRADIENT_NETS: usize = 100;
pub const FENCHEL_YOUNG_PAIRS: usize = 10_000;
pub const SYM_KL_PAIRS: usize = 5;
pub const SYM_KL_SAMPLES: usize = 200_000;
pub const W2_MAX_POINTS: usize = 7;
pub const EQUIVALENCE_ITERS: usize = 500;

/// Gradient of `mean(net(x, z)²)` with respect to the parameters.
pub type GradientFn = fn(&MlpSpec, &ParamVector, &RealTensor, Option<&RealTensor>) -> Result<ParamVector>;

/// Routines under test.
#[derive(Clone, Copy)]
pub struct Hooks {
    pub conjugate: fn(FDivKind, f64) -> f64,
    pub gradient: GradientFn,
    pub sym_kl: fn(&GaussianDist, &GaussianDist) -> Result<f64>,
    pub w2: fn(&ParticleCloud, &ParticleCloud) -> Result<f64>,
}

impl Default for Hooks {
    fn default() -> Self {
        Hooks {
            conjugate: f_conjugate,
            gradient: squared_output_gradient,
            sym_kl,
            w2: empirical_w2_sq,
        }
    }
}

pub fn squared_output_gradient(
    spec: &MlpSpec,
    params: &ParamVector,
    x: &RealTensor,
    z: Option<&RealTensor>,
) -> Result<ParamVector> {
    let mut inputs = vec![x.clone()];
    inputs.extend(z.cloned());
    let mut fwd = forward(&inputs, params, |g, i, p| {
        let out = mlp_graph(spec, g, p, i[0], i.get(1).copied())?;
        let sq = g.square(out);
        Ok(g.mean(sq))
    })?;
    grad(&mut fwd, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value and its bound.
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{} {} ({}; {:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

type Outcome = std::result::Result<(bool, String), String>;

fn timed(name: &'static str, f: impl FnOnce() -> Outcome) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn worst(label: &str, value: f64, bound: f64) -> (bool, String) {
    (value <= bound, format!("{label} {value:.3e} <= {bound:.0e}"))
}

fn tensor(rows: usize, cols: usize, rng: &mut StreamRng) -> RealTensor {
    RealTensor::matrix(rows, cols, rng.normals(rows * cols)).expect("shape")
}

/// Parameter gradients of randomly shaped networks against central differences.
pub fn check_gradients(hooks: &Hooks) -> CheckResult {
    timed("mlp_gradients", || {
        let mut rng = StreamRng::new(2024, 0);
        let mut max_err = 0.0f64;
        for net in 0..GRADIENT_NETS {
            let dim = 1 + rng.below(4);
            let hidden: Vec<usize> = (0..rng.below(3)).map(|_| 2 + rng.below(10)).collect();
            let act = if rng.below(2) == 0 {
                Activation::Silu
            } else {
                Activation::Softplus
            };
            let aux = rng.below(3);
            let spec = MlpSpec::transport(dim, &hidden, act, aux);
            let params = mlp_new(&spec, net as u64, 1).map_err(|e| e.to_string())?;
            let n = 2 + rng.below(5);
            let x = tensor(n, dim, &mut rng);
            let z = (aux > 0).then(|| tensor(n, aux, &mut rng));
            let analytic = (hooks.gradient)(&spec, &params, &x, z.as_ref()).map_err(|e| e.to_string())?;
            let err = central_difference_error(
                |p| {
                    let probe = params.with_data(p.to_vec()).expect("same layout");
                    mlp_forward(&spec, &probe, &x, z.as_ref())
                        .map(|o| o.data().iter().map(|v| v * v).sum::<f64>() / o.len() as f64)
                        .unwrap_or(f64::NAN)
                },
                params.as_slice(),
                analytic.as_slice(),
                1e-5,
            );
            max_err = max_err.max(err);
        }
        Ok(worst(
            &format!("{GRADIENT_NETS} nets, max relative error"),
            max_err,
            GRADIENT_TOL,
        ))
    })
}

/// Gradient of the input-gradient penalty against central differences.
pub fn check_r1() -> CheckResult {
    timed("r1_gradient", || {
        let mut max_err = 0.0f64;
        for (seed, act) in [
            (0u64, Activation::Silu),
            (1, Activation::Softplus),
            (2, Activation::Silu),
        ] {
            let spec = MlpSpec::potential(2, &[10, 10], act);
            let params = mlp_new(&spec, seed, 5).map_err(|e| e.to_string())?;
            let y = tensor(6, 2, &mut StreamRng::new(seed, 8));
            let pot = |g: &mut sjko_core::autodiff::Graph, yv, pv: &[sjko_core::autodiff::Var]| {
                mlp_graph(&spec, g, pv, yv, None)
            };
            let (_, analytic) = r1_param_gradient(pot, &y, &params).map_err(|e| e.to_string())?;
            let err = central_difference_error(
                |p| {
                    let probe = params.with_data(p.to_vec()).expect("same layout");
                    r1_param_gradient(pot, &y, &probe).map_or(f64::NAN, |r| r.0)
                },
                params.as_slice(),
                analytic.as_slice(),
                1e-5,
            );
            max_err = max_err.max(err);
        }
        Ok(worst("max relative error", max_err, R1_TOL))
    })
}

/// `sup_x (xy − f(x))` over `x ∈ (0, 50]` on a 1e-4 grid.
pub fn brute_force_conjugate(kind: FDivKind, y: f64) -> f64 {
    (1..=500_000)
        .map(|i| {
            let x = i as f64 * 1e-4;
            x * y - f_value(kind, x).expect("positive x")
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn check_conjugates(hooks: &Hooks) -> CheckResult {
    timed("conjugate_brute_force", || {
        let mut max_err = 0.0f64;
        for kind in [FDivKind::Kld, FDivKind::Jsd] {
            for y in [-2.0, -1.0, -0.5, 0.0, 0.3, 0.5] {
                max_err = max_err.max(((hooks.conjugate)(kind, y) - brute_force_conjugate(kind, y)).abs());
            }
        }
        Ok(worst("max abs error", max_err, CONJUGATE_TOL))
    })
}

/// `f(x) + f*(y) ≥ xy` on random pairs, with equality at `y = f'(x)`.
pub fn check_fenchel_young(hooks: &Hooks) -> CheckResult {
    timed("fenchel_young", || {
        let mut rng = StreamRng::new(7, 0);
        let mut violation = 0.0f64;
        let mut tight_gap = 0.0f64;
        for kind in [FDivKind::Kld, FDivKind::Jsd] {
            let y_max = if kind == FDivKind::Jsd { 0.69 } else { 3.0 };
            for _ in 0..FENCHEL_YOUNG_PAIRS / 2 {
                let x = rng.uniform_range(0.01, 20.0);
                let y = rng.uniform_range(-20.0, y_max);
                let gap = f_value(kind, x).map_err(|e| e.to_string())? + (hooks.conjugate)(kind, y) - x * y;
                violation = violation.max(-gap);
                let yt = f_derivative(kind, x).map_err(|e| e.to_string())?;
                let tight = f_value(kind, x).map_err(|e| e.to_string())? + (hooks.conjugate)(kind, yt) - x * yt;
                tight_gap = tight_gap.max(tight.abs() / (1.0 + (x * yt).abs()));
            }
        }
        let ok = violation <= FENCHEL_YOUNG_SLACK && tight_gap <= 1e-9;
        Ok((
            ok,
            format!("{FENCHEL_YOUNG_PAIRS} pairs, max violation {violation:.3e}, max gap at f' {tight_gap:.3e}"),
        ))
    })
}

/// Log density with a precomputed Cholesky factor.
struct Density {
    mean: Vec<f64>,
    chol: Matrix,
    log_norm: f64,
}

impl Density {
    fn new(g: &GaussianDist) -> Result<Self> {
        let chol = g.cov.cholesky()?;
        let d = g.dim();
        let logdet: f64 = (0..d).map(|i| 2.0 * chol.row(i)[i].ln()).sum();
        Ok(Density {
            mean: g.mean.clone(),
            chol,
            log_norm: -0.5 * (logdet + d as f64 * (2.0 * std::f64::consts::PI).ln()),
        })
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        let mut u = vec![0.0; d];
        for i in 0..d {
            let row = self.chol.row(i);
            let s: f64 = (0..i).map(|j| row[j] * u[j]).sum();
            u[i] = (x[i] - self.mean[i] - s) / row[i];
        }
        self.log_norm - 0.5 * u.iter().map(|v| v * v).sum::<f64>()
    }

    fn sample(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let d = self.mean.len();
        let z = rng.normals(d);
        for i in 0..d {
            let row = self.chol.row(i);
            out[i] = self.mean[i] + (0..=i).map(|j| row[j] * z[j]).sum::<f64>();
        }
    }
}

fn random_gaussian(d: usize, rng: &mut StreamRng) -> GaussianDist {
    let raw = Matrix::from_data(d, rng.normals(d * d).iter().map(|v| 0.5 * v).collect()).expect("square");
    let cov = raw
        .matmul(&raw.transpose())
        .add(&Matrix::scaled_identity(d, 0.5))
        .symmetrized();
    let mean = rng.normals(d).iter().map(|v| 0.5 * v).collect();
    GaussianDist::new(mean, cov).expect("spd")
}

/// Closed-form symmetric KL against Monte-Carlo estimates of both KL terms.
pub fn check_sym_kl(hooks: &Hooks) -> CheckResult {
    timed("sym_kl_monte_carlo", || {
        let mut rng = StreamRng::new(99, 0);
        let mut max_rel = 0.0f64;
        for pair in 0..SYM_KL_PAIRS {
            let d = 1 + pair % 3;
            let (p, q) = (random_gaussian(d, &mut rng), random_gaussian(d, &mut rng));
            let (dp, dq) = (
                Density::new(&p).map_err(|e| e.to_string())?,
                Density::new(&q).map_err(|e| e.to_string())?,
            );
            let mut x = vec![0.0; d];
            let mut total = 0.0;
            for _ in 0..SYM_KL_SAMPLES {
                dp.sample(&mut rng, &mut x);
                total += dp.log_density(&x) - dq.log_density(&x);
                dq.sample(&mut rng, &mut x);
                total += dq.log_density(&x) - dp.log_density(&x);
            }
            let mc = total / SYM_KL_SAMPLES as f64;
            let exact = (hooks.sym_kl)(&p, &q).map_err(|e| e.to_string())?;
            max_rel = max_rel.max((exact - mc).abs() / mc.abs().max(1e-12));
        }
        Ok(worst(
            &format!("{SYM_KL_PAIRS} pairs, max relative error"),
            max_rel,
            SYM_KL_REL_TOL,
        ))
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Exact assignment W2 against enumeration of all permutations.
pub fn check_w2(hooks: &Hooks) -> CheckResult {
    timed("w2_brute_force", || {
        let mut rng = StreamRng::new(5, 0);
        let mut max_err = 0.0f64;
        for n in 1..=W2_MAX_POINTS {
            let perms = permutations(n);
            for _ in 0..4 {
                let cloud = |rng: &mut StreamRng| {
                    ParticleCloud::new(tensor(n, 2, rng).map(|v| 3.0 * v), CloudMeta::new("check", 0)).expect("cloud")
                };
                let (a, b) = (cloud(&mut rng), cloud(&mut rng));
                let dist = |i: usize, j: usize| -> f64 {
                    a.point(i).iter().zip(b.point(j)).map(|(x, y)| (x - y) * (x - y)).sum()
                };
                let brute = perms
                    .iter()
                    .map(|p| p.iter().enumerate().map(|(i, &j)| dist(i, j)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
                    / n as f64;
                let got = (hooks.w2)(&a, &b).map_err(|e| e.to_string())?;
                max_err = max_err.max((got - brute).abs() / (1.0 + brute));
            }
        }
        Ok(worst(
            &format!("n <= {W2_MAX_POINTS}, max relative error"),
            max_err,
            W2_TOL,
        ))
    })
}

/// Configuration shared by the single-phase equivalence run.
pub fn equivalence_config(seed: u64, iters: usize) -> SjkoConfig {
    let mut c = SjkoConfig::new(5.0);
    c.phases = 1;
    c.iters_per_phase = iters;
    c.batch_size = 64;
    c.seed = seed;
    c.lr_transport = 1e-3;
    c.lr_potential = 1e-4;
    c.transport_net = NetConfig::new(&[16, 16], Activation::Silu);
    c.potential_net = NetConfig::new(&[16, 16], Activation::Silu);
    c
}

/// Largest loss difference over all iterations and whether the final
/// transport parameters agree, between one S-JKO phase and source-fixed UOTM.
pub fn single_phase_gap(seed: u64, iters: usize) -> Result<(f64, bool)> {
    let a = equivalence_config(seed, iters);
    let mut b = a.clone();
    b.objective = Objective::Uotm {
        source: FDivKind::Indicator,
        target: FDivKind::Kld,
    };
    let source = SamplerSpec::StandardGaussian { dim: 2 };
    let mut none = |_: &SjkoTrainer| Ok(Vec::new());
    let ta = train(a, source.clone(), SamplerSpec::Gmm25, &NoClock, &mut none).map_err(|f| f.error)?;
    let tb = train(b, source, SamplerSpec::Gmm25, &NoClock, &mut none).map_err(|f| f.error)?;
    let (la, lb) = (ta.trace.losses(), tb.trace.losses());
    if la.len() != lb.len() {
        return Ok((f64::INFINITY, false));
    }
    let gap = la
        .iter()
        .zip(&lb)
        .map(|(x, y)| (x.2 - y.2).abs().max((x.3 - y.3).abs()))
        .fold(0.0, f64::max);
    let diff = ta
        .transport
        .as_slice()
        .iter()
        .zip(tb.transport.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok((gap, diff <= EQUIVALENCE_TOL))
}

pub fn check_equivalence() -> CheckResult {
    timed("single_phase_equivalence", || {
        let (gap, same) = single_phase_gap(3, EQUIVALENCE_ITERS).map_err(|e| e.to_string())?;
        Ok((
            gap <= EQUIVALENCE_TOL && same,
            format!("{EQUIVALENCE_ITERS} iterations, max loss gap {gap:.3e}, parameters equal: {same}"),
        ))
    })
}

/// Every check, in a fixed order.
pub fn run(hooks: &Hooks) -> Vec<CheckResult> {
    vec![
        check_gradients(hooks),
        check_r1(),
        check_conjugates(hooks),
        check_fenchel_young(hooks),
        check_sym_kl(hooks),
        check_w2(hooks),
        check_equivalence(),
    ]
}
