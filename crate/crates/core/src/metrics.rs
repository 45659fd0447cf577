//! Evaluation of generated clouds against the synthetic targets.

use alloc::vec;
use alloc::vec::Vec;

use crate::datasets::{ParticleCloud, TWO_CIRCLES_RADII};
use crate::error::{Error, Result};

/// Default capture radius: a quarter of the 25-Gaussian grid spacing.
pub const DEFAULT_CAPTURE_RADIUS: f64 = 0.75;
/// Default minimum share of the cloud a mode needs to count as captured.
pub const DEFAULT_CAPTURE_MIN_FRACTION: f64 = 0.002;
/// Largest cloud accepted by [`empirical_w2_sq`].
pub const MAX_ASSIGNMENT_SIZE: usize = 512;

/// `ceil(fraction · n)`, at least 1.
pub fn capture_min_for(n: usize, fraction: f64) -> usize {
    (libm::ceil(fraction * n as f64 - 1e-9) as usize).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    pub captured_modes: usize,
    /// Points within the capture radius of their nearest center, per center.
    pub counts: Vec<usize>,
    /// Share of points within the capture radius of some center.
    pub high_quality_fraction: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y))
}

fn require_2d(cloud: &ParticleCloud, what: &'static str) -> Result<()> {
    if cloud.dim() != 2 {
        return Err(Error::shape(
            what,
            alloc::format!("expected a 2D cloud, got {}D", cloud.dim()),
        ));
    }
    Ok(())
}

/// Nearest-center assignment; a point is high quality within `capture_radius`
/// and a mode is captured once it holds `capture_min` high-quality points.
pub fn mode_coverage(
    cloud: &ParticleCloud,
    centers: &[[f64; 2]],
    capture_radius: f64,
    capture_min: usize,
) -> Result<ModeReport> {
    require_2d(cloud, "mode_coverage")?;
    let mut counts = vec![0usize; centers.len()];
    let mut good = 0usize;
    let r2 = capture_radius * capture_radius;
    for i in 0..cloud.len() {
        let p = cloud.point(i);
        let mut best = (0usize, f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let d = dist2(p, c);
            if d < best.1 {
                best = (k, d);
            }
        }
        if best.1 <= r2 {
            counts[best.0] += 1;
            good += 1;
        }
    }
    Ok(ModeReport {
        captured_modes: counts.iter().filter(|&&c| c >= capture_min).count(),
        counts,
        high_quality_fraction: good as f64 / cloud.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingReport {
    /// Share of points within `tol` of some ring.
    pub fraction_near_rings: f64,
    /// Share of all points whose nearest ring is each radius.
    pub shares: Vec<f64>,
}

pub fn ring_fraction(cloud: &ParticleCloud, radii: &[f64], tol: f64) -> Result<RingReport> {
    require_2d(cloud, "ring_fraction")?;
    let mut near = 0usize;
    let mut per = vec![0usize; radii.len()];
    for i in 0..cloud.len() {
        let p = cloud.point(i);
        let r = libm::sqrt(p[0] * p[0] + p[1] * p[1]);
        let mut best = (0usize, f64::INFINITY);
        for (k, &rad) in radii.iter().enumerate() {
            let d = libm::fabs(r - rad);
            if d < best.1 {
                best = (k, d);
            }
        }
        per[best.0] += 1;
        if best.1 <= tol {
            near += 1;
        }
    }
    let n = cloud.len() as f64;
    Ok(RingReport {
        fraction_near_rings: near as f64 / n,
        shares: per.iter().map(|&c| c as f64 / n).collect(),
    })
}

/// [`ring_fraction`] against the Two Circles radii.
pub fn two_circles_report(cloud: &ParticleCloud, tol: f64) -> Result<RingReport> {
    ring_fraction(cloud, &TWO_CIRCLES_RADII, tol)
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with row/column potentials, `O(n³)`). Returns `assignment[row] = column`.
pub fn solve_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

/// `min_σ (1/n) Σᵢ ‖aᵢ − b_σ(i)‖²` over permutations, solved exactly.
pub fn empirical_w2_sq(a: &ParticleCloud, b: &ParticleCloud) -> Result<f64> {
    if a.len() != b.len() || a.dim() != b.dim() {
        return Err(Error::shape(
            "empirical_w2_sq",
            alloc::format!("clouds of {}x{} and {}x{}", a.len(), a.dim(), b.len(), b.dim()),
        ));
    }
    if a.len() > MAX_ASSIGNMENT_SIZE {
        return Err(Error::Config(alloc::format!(
            "exact W2 is limited to {MAX_ASSIGNMENT_SIZE} points"
        )));
    }
    let n = a.len();
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| dist2(a.point(i), b.point(j))).collect())
        .collect();
    let asg = solve_assignment(&cost);
    let total = asg.iter().enumerate().fold(0.0, |acc, (i, &j)| acc + cost[i][j]);
    Ok(total / n as f64)
}
