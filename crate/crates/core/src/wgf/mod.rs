//! Ground truth for the Wasserstein gradient flow of `KL(ρ | N(b, A⁻¹))`.
//!
//! That flow is the Fokker–Planck equation of the Ornstein–Uhlenbeck process
//! `dX = −A(X − b) dt + √2 dW`. Started from a Gaussian it stays Gaussian with
//!
//! ```text
//! m_t = b + e^{−At} (m₀ − b)
//! Σ_t = e^{−At} Σ₀ e^{−At} + A⁻¹ (I − e^{−2At})
//! ```
//!
//! [`em_simulate`] integrates the SDE with Euler–Maruyama as an independent
//! check of those formulas.

mod gaussian;

pub use gaussian::{fit_gaussian, kl, sym_kl, GaussianDist, COVARIANCE_FLOOR};

use alloc::format;
use alloc::vec::Vec;

use crate::datasets::{CloudMeta, ParticleCloud};
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, Matrix, SymEigen};
use crate::rng::{streams, StreamRng};
use crate::tensor::RealTensor;

/// Drift matrix, center and initial law of an OU process.
#[derive(Debug, Clone, PartialEq)]
pub struct OuProcessSpec {
    drift: Matrix,
    center: Vec<f64>,
    initial: GaussianDist,
    eigen: SymEigen,
}

impl OuProcessSpec {
    pub fn new(drift: Matrix, center: Vec<f64>, initial: GaussianDist) -> Result<Self> {
        let d = drift.dim();
        if center.len() != d || initial.dim() != d {
            return Err(Error::shape(
                "OuProcessSpec",
                "drift, center and initial law dimensions differ",
            ));
        }
        let eigen = drift.check_spd("OU drift matrix")?;
        Ok(OuProcessSpec {
            drift,
            center,
            initial,
            eigen,
        })
    }

    /// Reproducible benchmark instance: `A = Q diag(λ) Qᵀ` with `λᵢ ~ U[0.5, 2]`
    /// and a random rotation `Q`, `b ~ U[−1, 1]^d`, initial law `N(0, 4I)`.
    pub fn random(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("OU dimension must be >= 1".into()));
        }
        let mut rng = StreamRng::new(seed, streams::OU_SETUP);
        let lambdas: Vec<f64> = (0..dim).map(|_| rng.uniform_range(0.5, 2.0)).collect();
        let raw = Matrix::from_data(dim, rng.normals(dim * dim))?;
        let q = orthonormalize(&raw)?;
        let drift = q
            .matmul(&Matrix::diagonal(&lambdas))
            .matmul(&q.transpose())
            .symmetrized();
        let center = (0..dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let initial = GaussianDist::new(alloc::vec![0.0; dim], Matrix::scaled_identity(dim, 4.0))?;
        Self::new(drift, center, initial)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn drift(&self) -> &Matrix {
        &self.drift
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn initial(&self) -> &GaussianDist {
        &self.initial
    }

    pub fn with_initial(&self, initial: GaussianDist) -> Result<Self> {
        Self::new(self.drift.clone(), self.center.clone(), initial)
    }

    /// `N(b, A⁻¹)`, the target of the flow.
    pub fn stationary(&self) -> GaussianDist {
        GaussianDist {
            mean: self.center.clone(),
            cov: self.eigen.apply(|l| 1.0 / l),
        }
    }
}

/// Law of the OU process at time `t`.
pub fn ou_analytic(spec: &OuProcessSpec, t: f64) -> Result<GaussianDist> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain {
            what: "OU evaluation time",
            value: t,
        });
    }
    let e = spec.eigen.apply(|l| libm::exp(-l * t));
    let m0 = &spec.initial.mean;
    let shift: Vec<f64> = m0.iter().zip(&spec.center).map(|(m, b)| m - b).collect();
    let mean = e.matvec(&shift).iter().zip(&spec.center).map(|(s, b)| b + s).collect();
    let relax = spec.eigen.apply(|l| -libm::expm1(-2.0 * l * t) / l);
    let cov = e.matmul(&spec.initial.cov).matmul(&e).add(&relax).symmetrized();
    GaussianDist::new(mean, cov)
}

/// Euler–Maruyama integration of `dX = −A(X − b) dt + √2 dW` from particles
/// drawn from the initial law. The last step is shortened to land on `t_end`.
/// Each step draws `n·d` normals row-major.
pub fn em_simulate(
    spec: &OuProcessSpec,
    n_particles: usize,
    dt: f64,
    t_end: f64,
    rng: &mut StreamRng,
) -> Result<ParticleCloud> {
    if !(dt > 0.0) || !(t_end >= 0.0) || n_particles == 0 {
        return Err(Error::Config(format!(
            "em_simulate needs dt > 0, t_end >= 0, n >= 1 (dt={dt}, t_end={t_end}, n={n_particles})"
        )));
    }
    let d = spec.dim();
    let chol = spec.initial.cov.cholesky()?;
    let mut x = rng.normals(n_particles * d);
    for row in x.chunks_mut(d) {
        let xi: Vec<f64> = row.to_vec();
        for i in 0..d {
            let mut s = spec.initial.mean[i];
            for k in 0..=i {
                s += chol[(i, k)] * xi[k];
            }
            row[i] = s;
        }
    }

    let steps = if t_end == 0.0 {
        0
    } else {
        libm::ceil(t_end / dt - 1e-9).max(1.0) as usize
    };
    let a = &spec.drift;
    let b = &spec.center;
    let mut noise = alloc::vec![0.0; n_particles * d];
    let mut drift = alloc::vec![0.0; d];
    for s in 0..steps {
        let tau = if s + 1 == steps {
            t_end - dt * (steps - 1) as f64
        } else {
            dt
        };
        let amp = libm::sqrt(2.0 * tau);
        rng.fill_normal(&mut noise);
        for (row, xi) in x.chunks_mut(d).zip(noise.chunks(d)) {
            for i in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += a[(i, k)] * (row[k] - b[k]);
                }
                drift[i] = acc;
            }
            for i in 0..d {
                row[i] += -drift[i] * tau + amp * xi[i];
            }
        }
    }
    let mut meta = CloudMeta::new("em", 0);
    meta.time = Some(t_end);
    ParticleCloud::new(RealTensor::matrix(n_particles, d, x)?, meta)
}
