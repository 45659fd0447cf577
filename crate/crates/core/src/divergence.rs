//! f-divergences `D_f(ρ|ν) = ∫ f(dρ/dν) dν` used as the JKO functional and as
//! UOT marginal penalties.
//!
//! For each kind the module exposes the generator `f`, its convex conjugate
//! `f*(y) = sup_x (xy − f(x))` and `f°(y) = −f*(−y)`. Divergent values are
//! returned as `±∞` rather than errors.
//!
//! | kind | `f(x)` | `f*(y)` | `f°(y)` |
//! |------|--------|---------|---------|
//! | KLD | `x log x − x + 1` | `eʸ − 1` | `1 − e⁻ʸ` |
//! | JSD | `x log x − (1+x) log((1+x)/2)` | `−log(2 − eʸ)`, `y < log 2` | `log(2 − e⁻ʸ)`, `y > −log 2` |
//! | Indicator | `0` at `x = 1`, `+∞` elsewhere | `y` | `y` |

use core::f64::consts::LN_2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FDivKind {
    Kld,
    Jsd,
    /// Convex indicator of `{1}`: pins a marginal exactly.
    Indicator,
}

impl FDivKind {
    pub fn name(self) -> &'static str {
        match self {
            FDivKind::Kld => "kld",
            FDivKind::Jsd => "jsd",
            FDivKind::Indicator => "indicator",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "kld" | "kl" => Some(FDivKind::Kld),
            "jsd" | "js" => Some(FDivKind::Jsd),
            "indicator" => Some(FDivKind::Indicator),
            _ => None,
        }
    }
}

/// Generator `f(x)` for `x > 0`.
pub fn f_value(kind: FDivKind, x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_infinite() {
        return Err(Error::Domain {
            what: "f-divergence generator",
            value: x,
        });
    }
    Ok(match kind {
        FDivKind::Kld => x * libm::log(x) - x + 1.0,
        FDivKind::Jsd => x * libm::log(x) - (1.0 + x) * libm::log((1.0 + x) / 2.0),
        FDivKind::Indicator => {
            if x == 1.0 {
                0.0
            } else {
                f64::INFINITY
            }
        }
    })
}

/// `f'(x)`; for the indicator only `x = 1` is meaningful and any slope is a
/// subgradient, so 0 is returned.
pub fn f_derivative(kind: FDivKind, x: f64) -> Result<f64> {
    f_value(kind, x)?;
    Ok(match kind {
        FDivKind::Kld => libm::log(x),
        FDivKind::Jsd => libm::log(2.0 * x / (1.0 + x)),
        FDivKind::Indicator => 0.0,
    })
}

/// Convex conjugate `f*(y)`, `+∞` outside its effective domain.
pub fn f_conjugate(kind: FDivKind, y: f64) -> f64 {
    match kind {
        FDivKind::Kld => libm::expm1(y),
        FDivKind::Jsd => {
            if y < LN_2 {
                -libm::log(2.0 - libm::exp(y))
            } else {
                f64::INFINITY
            }
        }
        FDivKind::Indicator => y,
    }
}

/// `f°(y) = −f*(−y)`, `−∞` outside its effective domain.
pub fn f_circ(kind: FDivKind, y: f64) -> f64 {
    match kind {
        FDivKind::Kld => -libm::expm1(-y),
        FDivKind::Jsd => {
            if y > -LN_2 {
                libm::log(2.0 - libm::exp(-y))
            } else {
                f64::NEG_INFINITY
            }
        }
        FDivKind::Indicator => y,
    }
}

/// `S(x) = log(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-libm::fabs(x)))
}

/// `σ(x) = 1 / (1 + e⁻ˣ)` without overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// JSD discriminator logit for a potential value: `w = σ⁻¹(exp(v − log 2))`.
/// Defined for `v < log 2`.
pub fn jsd_logit_from_potential(v: f64) -> f64 {
    let p = libm::exp(v - LN_2);
    libm::log(p) - libm::log1p(-p)
}

#[cfg(test)]
mod tests {
    use super::*;

    const KINDS: [FDivKind; 2] = [FDivKind::Kld, FDivKind::Jsd];

    /// Brute-force `sup_x (xy − f(x))` over `x ∈ (0, 50]` with step 1e-4.
    fn conjugate_oracle(kind: FDivKind, y: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        let steps = 500_000;
        for i in 1..=steps {
            let x = i as f64 * 1e-4;
            let v = x * y - f_value(kind, x).unwrap();
            if v > best {
                best = v;
            }
        }
        best
    }

    #[test]
    fn generator_values() {
        for k in [FDivKind::Kld, FDivKind::Jsd, FDivKind::Indicator] {
            assert_eq!(f_value(k, 1.0).unwrap(), 0.0);
        }
        assert!((f_value(FDivKind::Kld, core::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        let j3 = 3.0 * libm::log(3.0) - 4.0 * libm::log(2.0);
        assert!((f_value(FDivKind::Jsd, 3.0).unwrap() - j3).abs() < 1e-15);
        assert!(f_value(FDivKind::Kld, 0.0).is_err());
        assert!(f_value(FDivKind::Jsd, -1.0).is_err());
        assert_eq!(f_value(FDivKind::Indicator, 2.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn generators_are_convex_nonnegative_with_unique_zero() {
        for k in KINDS {
            let grid: alloc::vec::Vec<f64> = (1..400).map(|i| i as f64 * 0.025).collect();
            for w in grid.windows(2) {
                let (a, b) = (w[0], w[1] + 0.5);
                let mid = f_value(k, (a + b) / 2.0).unwrap();
                assert!(mid <= (f_value(k, a).unwrap() + f_value(k, b).unwrap()) / 2.0 + 1e-15);
            }
            for &x in &grid {
                let v = f_value(k, x).unwrap();
                if (x - 1.0).abs() > 1e-9 {
                    assert!(v > 0.0, "{k:?} f({x}) = {v}");
                }
            }
        }
    }

    #[test]
    fn conjugates_match_brute_force_sup() {
        assert_eq!(f_conjugate(FDivKind::Jsd, 0.0), 0.0);
        assert_eq!(f_conjugate(FDivKind::Kld, 0.0), 0.0);
        for k in KINDS {
            for &y in &[-2.0, -1.0, 0.0, 0.5] {
                let oracle = conjugate_oracle(k, y);
                assert!(
                    (f_conjugate(k, y) - oracle).abs() <= 1e-4,
                    "{k:?} y={y}: {} vs {oracle}",
                    f_conjugate(k, y)
                );
            }
        }
        assert_eq!(f_conjugate(FDivKind::Jsd, LN_2), f64::INFINITY);
    }

    #[test]
    fn circ_identities() {
        assert_eq!(f_circ(FDivKind::Kld, 0.0), 0.0);
        assert_eq!(f_circ(FDivKind::Jsd, 0.0), 0.0);
        assert!(f_circ(FDivKind::Kld, 50.0) <= 1.0);
        assert!((f_circ(FDivKind::Kld, 50.0) - 1.0).abs() < 1e-15);
        assert_eq!(f_circ(FDivKind::Jsd, -1.0), f64::NEG_INFINITY);
        let mut y = -0.6;
        while y < 5.0 {
            for k in [FDivKind::Kld, FDivKind::Jsd, FDivKind::Indicator] {
                assert!((f_circ(k, y) + f_conjugate(k, -y)).abs() <= 1e-12);
            }
            y += 0.0137;
        }
    }

    #[test]
    fn circ_is_nondecreasing_and_concave() {
        for k in KINDS {
            let ys: alloc::vec::Vec<f64> = (0..600).map(|i| -0.69 + i as f64 * 0.01).collect();
            for w in ys.windows(3) {
                let (a, b, c) = (f_circ(k, w[0]), f_circ(k, w[1]), f_circ(k, w[2]));
                assert!(b >= a && c >= b);
                assert!(b >= (a + c) / 2.0 - 1e-13);
            }
        }
    }

    #[test]
    fn fenchel_young_tight_at_derivative() {
        for k in KINDS {
            for &x in &[0.2, 0.9, 1.0, 2.5, 7.0] {
                let y = f_derivative(k, x).unwrap();
                let gap = f_value(k, x).unwrap() + f_conjugate(k, y) - x * y;
                assert!(gap.abs() <= 1e-6 && gap > -1e-12, "{k:?} x={x} gap={gap}");
            }
        }
    }

    #[test]
    fn softplus_and_sigmoid() {
        assert!((softplus(0.0) - LN_2).abs() < 1e-16);
        for &x in &[-5.0, 0.3, 40.0] {
            assert!((softplus(x) - softplus(-x) - x).abs() < 1e-12);
        }
        assert!(softplus(800.0).is_finite());
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
        assert_eq!(softplus(-800.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        // w = σ⁻¹(e^{v - log 2}) inverts to v = log(2σ(w)).
        let v = -0.3;
        let w = jsd_logit_from_potential(v);
        assert!((libm::log(2.0 * sigmoid(w)) - v).abs() < 1e-12);
    }
}
