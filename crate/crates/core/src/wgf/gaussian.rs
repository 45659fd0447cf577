use alloc::vec::Vec;

use crate::datasets::ParticleCloud;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Eigenvalue floor applied to fitted covariances.
pub const COVARIANCE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl GaussianDist {
    /// Validates dimensions, symmetry (to `1e-10`) and positive definiteness.
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        if cov.dim() != mean.len() {
            return Err(Error::shape("GaussianDist", "mean and covariance dimensions differ"));
        }
        if !cov.is_symmetric(1e-10) {
            return Err(Error::NotSpd("covariance is not symmetric".into()));
        }
        cov.check_spd("covariance")?;
        Ok(GaussianDist { mean, cov })
    }

    pub fn standard(dim: usize) -> Self {
        GaussianDist {
            mean: alloc::vec![0.0; dim],
            cov: Matrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `log N(x; m, Σ)`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let e = self.cov.check_spd("covariance")?;
        let d = self.dim();
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let prec = e.apply(|l| 1.0 / l);
        let quad: f64 = prec.matvec(&diff).iter().zip(&diff).map(|(a, b)| a * b).sum();
        let logdet: f64 = e.values.iter().map(|&l| libm::log(l)).sum();
        Ok(-0.5 * (quad + logdet + d as f64 * libm::log(2.0 * core::f64::consts::PI)))
    }
}

/// Sample mean and unbiased sample covariance, symmetrized and with
/// eigenvalues floored at [`COVARIANCE_FLOOR`].
pub fn fit_gaussian(cloud: &ParticleCloud) -> Result<GaussianDist> {
    let (n, d) = (cloud.len(), cloud.dim());
    if n <= d {
        return Err(Error::TooFewPoints { n, dim: d });
    }
    let mut mean = alloc::vec![0.0; d];
    for i in 0..n {
        for (m, &x) in mean.iter_mut().zip(cloud.point(i)) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = Matrix::zeros(d);
    for i in 0..n {
        let p = cloud.point(i);
        for a in 0..d {
            let da = p[a] - mean[a];
            for b in 0..d {
                cov[(a, b)] += da * (p[b] - mean[b]);
            }
        }
    }
    let cov = cov.scale(1.0 / (n - 1) as f64).symmetrized();
    let floored = cov.symmetric_eigen()?.apply(|l| l.max(COVARIANCE_FLOOR)).symmetrized();
    Ok(GaussianDist { mean, cov: floored })
}

fn check_pair(p: &GaussianDist, q: &GaussianDist) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::shape("sym_kl", "dimensions differ"));
    }
    Ok(())
}

/// `KL(p ‖ q)` in closed form.
pub fn kl(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    check_pair(p, q)?;
    let ep = p.cov.check_spd("first covariance")?;
    let eq = q.cov.check_spd("second covariance")?;
    let q_inv = eq.apply(|l| 1.0 / l);
    let delta: Vec<f64> = p.mean.iter().zip(&q.mean).map(|(a, b)| a - b).collect();
    let quad: f64 = q_inv.matvec(&delta).iter().zip(&delta).map(|(a, b)| a * b).sum();
    let logdet_p: f64 = ep.values.iter().map(|&l| libm::log(l)).sum();
    let logdet_q: f64 = eq.values.iter().map(|&l| libm::log(l)).sum();
    let d = p.dim() as f64;
    Ok(0.5 * (q_inv.matmul(&p.cov).trace() + quad - d + logdet_q - logdet_p))
}

/// `KL(p‖q) + KL(q‖p)`; the log-determinants cancel:
/// `½ tr(Σq⁻¹Σp + Σp⁻¹Σq) − d + ½ δᵀ(Σp⁻¹ + Σq⁻¹)δ`.
pub fn sym_kl(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    check_pair(p, q)?;
    let p_inv = p.cov.check_spd("first covariance")?.apply(|l| 1.0 / l);
    let q_inv = q.cov.check_spd("second covariance")?.apply(|l| 1.0 / l);
    let delta: Vec<f64> = p.mean.iter().zip(&q.mean).map(|(a, b)| a - b).collect();
    let both = p_inv.add(&q_inv);
    let quad: f64 = both.matvec(&delta).iter().zip(&delta).map(|(a, b)| a * b).sum();
    let tr = q_inv.matmul(&p.cov).trace() + p_inv.matmul(&q.cov).trace();
    Ok((0.5 * tr - p.dim() as f64 + 0.5 * quad).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{sample_standard_gaussian, CloudMeta};
    use crate::rng::StreamRng;
    use crate::tensor::RealTensor;

    fn g1(m: f64, v: f64) -> GaussianDist {
        GaussianDist::new(alloc::vec![m], Matrix::diagonal(&[v])).unwrap()
    }

    #[test]
    fn sym_kl_closed_forms() {
        assert_eq!(sym_kl(&g1(0.0, 1.0), &g1(0.0, 1.0)).unwrap(), 0.0);
        assert!((sym_kl(&g1(0.0, 1.0), &g1(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((sym_kl(&g1(0.0, 1.0), &g1(0.0, 2.0)).unwrap() - 0.25).abs() < 1e-15);
        let p = g1(0.3, 0.7);
        let q = g1(-0.2, 1.9);
        let s = kl(&p, &q).unwrap() + kl(&q, &p).unwrap();
        assert!((sym_kl(&p, &q).unwrap() - s).abs() < 1e-14);
        assert!((sym_kl(&p, &q).unwrap() - sym_kl(&q, &p).unwrap()).abs() < 1e-12);
        assert!(GaussianDist::new(alloc::vec![0.0], Matrix::diagonal(&[0.0])).is_err());
    }

    #[test]
    fn fit_two_points_and_degenerate_cloud() {
        let c = ParticleCloud::new(
            RealTensor::matrix(2, 1, alloc::vec![-1.0, 1.0]).unwrap(),
            CloudMeta::new("t", 0),
        )
        .unwrap();
        let g = fit_gaussian(&c).unwrap();
        assert_eq!(g.mean, alloc::vec![0.0]);
        assert!((g.cov[(0, 0)] - 2.0).abs() < 1e-15);

        let same = ParticleCloud::new(RealTensor::filled(5, 2, 3.0), CloudMeta::new("t", 0)).unwrap();
        let g = fit_gaussian(&same).unwrap();
        assert!(g.cov.max_abs_diff(&Matrix::scaled_identity(2, COVARIANCE_FLOOR)) < 1e-20);

        let few = ParticleCloud::new(RealTensor::filled(2, 2, 0.0), CloudMeta::new("t", 0)).unwrap();
        assert!(matches!(fit_gaussian(&few), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn fit_standard_gaussian_sample() {
        let c = sample_standard_gaussian(2, 100_000, &mut StreamRng::new(4, 0)).unwrap();
        let g = fit_gaussian(&c).unwrap();
        assert!(sym_kl(&g, &GaussianDist::standard(2)).unwrap() <= 5e-3);
    }
}
