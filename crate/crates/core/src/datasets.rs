//! Seeded samplers for the source and target distributions.
//!
//! Draw order is fixed so clouds are reproducible: Gaussian batches consume
//! `n·d` normals row-major; Two Circles consumes, per point, one uniform for
//! the ring, one for the angle and one normal pair; the 25-Gaussian mixture
//! consumes one uniform for the center and one normal pair.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{RngState, StreamRng};
use crate::tensor::RealTensor;
use crate::wgf::GaussianDist;

pub const TWO_CIRCLES_RADII: [f64; 2] = [4.0, 8.0];
pub const TWO_CIRCLES_NOISE: f64 = 0.2;
pub const GMM25_SPACING: f64 = 3.0;
pub const GMM25_NOISE: f64 = 0.005;

/// The 25 mixture centers `{(3i, 3j) : i, j ∈ {−2, …, 2}}`, row-major in `i`.
pub fn gmm25_centers() -> Vec<[f64; 2]> {
    let mut c = Vec::with_capacity(25);
    for i in -2..=2 {
        for j in -2..=2 {
            c.push([GMM25_SPACING * i as f64, GMM25_SPACING * j as f64]);
        }
    }
    c
}

/// Provenance attached to a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudMeta {
    pub origin: String,
    pub phase: Option<usize>,
    pub time: Option<f64>,
    pub seed: u64,
}

impl CloudMeta {
    pub fn new(origin: impl Into<String>, seed: u64) -> Self {
        CloudMeta {
            origin: origin.into(),
            phase: None,
            time: None,
            seed,
        }
    }
}

/// `n` points in `d` dimensions, stored as a `[n, d]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub points: RealTensor,
    pub meta: CloudMeta,
}

impl ParticleCloud {
    pub fn new(points: RealTensor, meta: CloudMeta) -> Result<Self> {
        if points.rows() == 0 || points.is_empty() {
            return Err(Error::shape("ParticleCloud", "a cloud needs at least one point"));
        }
        if !points.all_finite() {
            return Err(Error::non_finite(alloc::format!("cloud `{}`", meta.origin)));
        }
        Ok(ParticleCloud { points, meta })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row_slice(i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerSpec {
    StandardGaussian { dim: usize },
    TwoCircles,
    Gmm25,
    Gaussian(GaussianDist),
}

impl SamplerSpec {
    pub fn dim(&self) -> usize {
        match self {
            SamplerSpec::StandardGaussian { dim } => *dim,
            SamplerSpec::TwoCircles | SamplerSpec::Gmm25 => 2,
            SamplerSpec::Gaussian(g) => g.dim(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SamplerSpec::StandardGaussian { .. } => "standard-gaussian",
            SamplerSpec::TwoCircles => "two-circles",
            SamplerSpec::Gmm25 => "gmm25",
            SamplerSpec::Gaussian(_) => "gaussian",
        }
    }
}

/// A sampler owning its random stream.
#[derive(Debug, Clone)]
pub struct Sampler {
    spec: SamplerSpec,
    rng: StreamRng,
    seed: u64,
    /// Cholesky factor for [`SamplerSpec::Gaussian`].
    chol: Option<Matrix>,
}

impl Sampler {
    pub fn new(spec: SamplerSpec, seed: u64, stream: u64) -> Result<Self> {
        let chol = match &spec {
            SamplerSpec::Gaussian(g) => Some(g.cov.cholesky()?),
            SamplerSpec::StandardGaussian { dim: 0 } => {
                return Err(Error::Config("Gaussian dimension must be >= 1".into()))
            }
            _ => None,
        };
        Ok(Sampler {
            spec,
            rng: StreamRng::new(seed, stream),
            seed,
            chol,
        })
    }

    pub fn spec(&self) -> &SamplerSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn rng_state(&self) -> RngState {
        self.rng.state()
    }

    pub fn set_rng_state(&mut self, state: &RngState) {
        self.rng = StreamRng::from_state(state);
    }

    /// Draws `n` points as a `[n, d]` tensor.
    pub fn sample_tensor(&mut self, n: usize) -> Result<RealTensor> {
        if n == 0 {
            return Err(Error::Config("sample size must be >= 1".into()));
        }
        let rng = &mut self.rng;
        let data = match &self.spec {
            SamplerSpec::StandardGaussian { dim } => rng.normals(n * dim),
            SamplerSpec::TwoCircles => two_circles(rng, n),
            SamplerSpec::Gmm25 => gmm25(rng, n),
            SamplerSpec::Gaussian(g) => {
                let l = self.chol.as_ref().expect("built in new");
                gaussian(rng, n, &g.mean, l)
            }
        };
        RealTensor::matrix(n, self.spec.dim(), data)
    }

    pub fn sample(&mut self, n: usize) -> Result<ParticleCloud> {
        let points = self.sample_tensor(n)?;
        ParticleCloud::new(points, CloudMeta::new(self.spec.label(), self.seed))
    }
}

fn two_circles(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let r = if rng.uniform() < 0.5 {
            TWO_CIRCLES_RADII[0]
        } else {
            TWO_CIRCLES_RADII[1]
        };
        let (s, c) = libm::sincos(2.0 * PI * rng.uniform());
        let (z1, z2) = rng.normal_pair();
        out.push(r * c + TWO_CIRCLES_NOISE * z1);
        out.push(r * s + TWO_CIRCLES_NOISE * z2);
    }
    out
}

fn gmm25(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let k = rng.below(25);
        let (i, j) = ((k / 5) as f64 - 2.0, (k % 5) as f64 - 2.0);
        let (z1, z2) = rng.normal_pair();
        out.push(GMM25_SPACING * i + GMM25_NOISE * z1);
        out.push(GMM25_SPACING * j + GMM25_NOISE * z2);
    }
    out
}

fn gaussian(rng: &mut StreamRng, n: usize, mean: &[f64], chol: &Matrix) -> Vec<f64> {
    let d = mean.len();
    let xi = rng.normals(n * d);
    let mut out = Vec::with_capacity(n * d);
    for row in xi.chunks(d) {
        for i in 0..d {
            let mut s = mean[i];
            for k in 0..=i {
                s += chol[(i, k)] * row[k];
            }
            out.push(s);
        }
    }
    out
}

/// `n` i.i.d. `N(0, I_d)` points.
pub fn sample_standard_gaussian(dim: usize, n: usize, rng: &mut StreamRng) -> Result<ParticleCloud> {
    if dim == 0 || n == 0 {
        return Err(Error::Config("dimension and sample size must be >= 1".into()));
    }
    let points = RealTensor::matrix(n, dim, rng.normals(n * dim))?;
    ParticleCloud::new(points, CloudMeta::new("standard-gaussian", 0))
}

/// Uniform angle on a ring of radius 4 or 8 (equal mass), plus `0.2·N(0, I₂)`.
pub fn sample_two_circles(n: usize, rng: &mut StreamRng) -> Result<ParticleCloud> {
    if n == 0 {
        return Err(Error::Config("sample size must be >= 1".into()));
    }
    let points = RealTensor::matrix(n, 2, two_circles(rng, n))?;
    ParticleCloud::new(points, CloudMeta::new("two-circles", 0))
}

/// Uniform center on the 5×5 grid of spacing 3, plus `0.005·N(0, I₂)`.
pub fn sample_gmm25(n: usize, rng: &mut StreamRng) -> Result<ParticleCloud> {
    if n == 0 {
        return Err(Error::Config("sample size must be >= 1".into()));
    }
    let points = RealTensor::matrix(n, 2, gmm25(rng, n))?;
    ParticleCloud::new(points, CloudMeta::new("gmm25", 0))
}
