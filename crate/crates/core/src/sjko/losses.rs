//! Per-batch objectives, as plain functions over values and as graph builders.
//!
//! The plain functions are the reference definitions; the trainer uses the
//! graph builders, which compute the same quantities with the same reduction
//! order so that they can be differentiated.
//!
//! Batch reductions are arithmetic means.

use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::divergence::{f_circ, f_conjugate, softplus, FDivKind};
use crate::error::{Error, Result};
use crate::tensor::RealTensor;

/// `‖x − y‖² / (2h)`, additionally divided by `d` when `dim_normalized`.
pub fn cost(x: &[f64], y: &[f64], h: f64, dim_normalized: bool) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("cost", alloc::format!("{} vs {}", x.len(), y.len())));
    }
    if !(h > 0.0) {
        return Err(Error::Domain {
            what: "JKO step size",
            value: h,
        });
    }
    let sq = x.iter().zip(y).fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b));
    Ok(sq / cost_denominator(h, x.len(), dim_normalized))
}

pub(crate) fn cost_denominator(h: f64, dim: usize, dim_normalized: bool) -> f64 {
    if dim_normalized {
        2.0 * h * dim as f64
    } else {
        2.0 * h
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc + x) / v.len() as f64
}

fn check_batch(what: &'static str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::shape(what, "empty batch"));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::non_finite(what));
    }
    Ok(())
}

fn finite(what: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::non_finite(what))
    }
}

/// Potential objective.
///
/// * KLD: `mean(v_fake) + mean(f*(−v_real)) + λ·r1` with `f*(u) = eᵘ − 1`.
/// * JSD (on the logit network `w`): `mean(S(w_fake)) + mean(S(−w_real)) + λ·r1`.
pub fn potential_loss(kind: FDivKind, fake: &[f64], real: &[f64], r1: f64, lambda: f64) -> Result<f64> {
    check_batch("potential_loss fake batch", fake)?;
    check_batch("potential_loss real batch", real)?;
    let base = match kind {
        FDivKind::Kld => mean(fake) + mean(&real.iter().map(|&v| f_conjugate(kind, -v)).collect::<Vec<_>>()),
        FDivKind::Jsd => {
            mean(&fake.iter().map(|&w| softplus(w)).collect::<Vec<_>>())
                + mean(&real.iter().map(|&w| softplus(-w)).collect::<Vec<_>>())
        }
        FDivKind::Indicator => {
            return Err(Error::Config(
                "the JKO functional cannot be the indicator divergence".into(),
            ))
        }
    };
    finite("potential_loss", base + lambda * r1)
}

/// Mean transport cost between aligned batches `[n, d]`.
pub fn mean_cost(y_old: &RealTensor, y_new: &RealTensor, h: f64, dim_normalized: bool) -> Result<f64> {
    if !y_old.same_shape(y_new) || y_old.rows() == 0 {
        return Err(Error::shape("transport cost", "batches are not aligned"));
    }
    let mut acc = 0.0;
    for i in 0..y_old.rows() {
        acc += cost(y_old.row_slice(i), y_new.row_slice(i), h, dim_normalized)?;
    }
    Ok(acc / y_old.rows() as f64)
}

/// Transport objective.
///
/// * KLD: `mean c(y_old, y_new) − mean v(y_new)`.
/// * JSD: `mean c(y_old, y_new) + mean S(−w(y_new))` (non-saturating form).
pub fn transport_loss(
    kind: FDivKind,
    y_old: &RealTensor,
    y_new: &RealTensor,
    v_new: &[f64],
    h: f64,
    dim_normalized: bool,
) -> Result<f64> {
    check_batch("transport_loss potential batch", v_new)?;
    if v_new.len() != y_new.rows() {
        return Err(Error::shape("transport_loss", "one potential value per point expected"));
    }
    let c = mean_cost(y_old, y_new, h, dim_normalized)?;
    let value = match kind {
        FDivKind::Kld => c - mean(v_new),
        FDivKind::Jsd => c + mean(&v_new.iter().map(|&w| softplus(-w)).collect::<Vec<_>>()),
        FDivKind::Indicator => {
            return Err(Error::Config(
                "the JKO functional cannot be the indicator divergence".into(),
            ))
        }
    };
    finite("transport_loss", value)
}

/// UOT semi-dual objectives `(L_v, L_T)`.
///
/// `L_v = mean(−φ₁°(c − v_fake)) − mean(φ₂°(v_real)) + λ·r1` and
/// `L_T = mean(c − v_fake)`. With `φ₁` the indicator, `−φ₁°(c − v) = v − c`
/// and the `φ`-independent `−mean(c)` is dropped, which makes both losses
/// coincide with the one-phase S-JKO objectives.
pub fn uotm_losses(
    source: FDivKind,
    target: FDivKind,
    v_fake: &[f64],
    v_real: &[f64],
    costs: &[f64],
    lambda: f64,
    r1: f64,
) -> Result<(f64, f64)> {
    check_batch("uotm fake batch", v_fake)?;
    check_batch("uotm real batch", v_real)?;
    check_batch("uotm costs", costs)?;
    if costs.len() != v_fake.len() {
        return Err(Error::shape("uotm_losses", "one cost per generated point expected"));
    }
    let fake_term = match source {
        FDivKind::Indicator => mean(v_fake),
        k => mean(
            &costs
                .iter()
                .zip(v_fake)
                .map(|(&c, &v)| -f_circ(k, c - v))
                .collect::<Vec<_>>(),
        ),
    };
    let real_term = mean(&v_real.iter().map(|&v| -f_circ(target, v)).collect::<Vec<_>>());
    let lv = fake_term + real_term + lambda * r1;
    let lt = mean(costs) - mean(v_fake);
    if !lv.is_finite() {
        return Err(Error::non_finite(
            "uotm potential loss (potential outside the domain of f°)",
        ));
    }
    Ok((lv, finite("uotm transport loss", lt)?))
}

// Graph builders. `v` arguments are `[n, 1]` potential outputs.

/// `mean(−f°(u)) = mean(f*(−u))` for the kinds whose `f°` is finite everywhere.
pub(crate) fn neg_circ_mean(g: &mut Graph, kind: FDivKind, u: Var) -> Result<Var> {
    match kind {
        FDivKind::Kld => {
            let neg = g.neg(u);
            let e = g.exp(neg);
            let m = g.mean(e);
            Ok(g.add_scalar(m, -1.0))
        }
        FDivKind::Indicator => {
            let neg = g.neg(u);
            Ok(g.mean(neg))
        }
        FDivKind::Jsd => Err(Error::Config(
            "JSD marginals are trained through the logit form only".into(),
        )),
    }
}

/// `Σ‖y_new − y_old‖² / (n · denominator)` plus, when requested, the per-row
/// costs as `[n, 1]`.
pub(crate) fn cost_terms(
    g: &mut Graph,
    y_old: Var,
    y_new: Var,
    h: f64,
    dim_normalized: bool,
    per_row: bool,
) -> Result<(Var, Option<Var>)> {
    let (n, d) = (g.value(y_new).rows(), g.value(y_new).cols());
    let denom = cost_denominator(h, d, dim_normalized);
    let diff = g.sub(y_new, y_old)?;
    let sq = g.square(diff);
    let rows = if per_row {
        let s = g.sum_cols(sq);
        Some(g.scale(s, 1.0 / denom))
    } else {
        None
    };
    let total = g.sum(sq);
    Ok((g.scale(total, 1.0 / (denom * n as f64)), rows))
}

pub(crate) fn potential_loss_graph(g: &mut Graph, kind: FDivKind, fake: Var, real: Var) -> Result<Var> {
    match kind {
        FDivKind::Kld => {
            let a = g.mean(fake);
            let b = neg_circ_mean(g, kind, real)?;
            g.add(a, b)
        }
        FDivKind::Jsd => {
            let sf = g.softplus(fake);
            let a = g.mean(sf);
            let nr = g.neg(real);
            let sr = g.softplus(nr);
            let b = g.mean(sr);
            g.add(a, b)
        }
        FDivKind::Indicator => Err(Error::Config(
            "the JKO functional cannot be the indicator divergence".into(),
        )),
    }
}

pub(crate) fn transport_loss_graph(g: &mut Graph, kind: FDivKind, cost_mean: Var, v_new: Var) -> Result<Var> {
    match kind {
        FDivKind::Kld => {
            let m = g.mean(v_new);
            g.sub(cost_mean, m)
        }
        FDivKind::Jsd => {
            let nv = g.neg(v_new);
            let s = g.softplus(nv);
            let m = g.mean(s);
            g.add(cost_mean, m)
        }
        FDivKind::Indicator => Err(Error::Config(
            "the JKO functional cannot be the indicator divergence".into(),
        )),
    }
}

/// Potential objective of the UOT semi-dual; `costs` is `[n, 1]` (unused for
/// an indicator source penalty).
pub(crate) fn uotm_potential_graph(
    g: &mut Graph,
    source: FDivKind,
    target: FDivKind,
    fake: Var,
    real: Var,
    costs: Option<Var>,
) -> Result<Var> {
    let a = match source {
        FDivKind::Indicator => g.mean(fake),
        k => {
            let c = costs.ok_or_else(|| Error::Config("relaxed source marginal needs costs".into()))?;
            let u = g.sub(c, fake)?;
            neg_circ_mean(g, k, u)?
        }
    };
    let b = neg_circ_mean(g, target, real)?;
    g.add(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn cost_examples() {
        assert_eq!(cost(&[1.0, 2.0], &[1.0, 2.0], 0.3, false).unwrap(), 0.0);
        assert!((cost(&[0.0, 0.0], &[1.0, 1.0], 0.1, false).unwrap() - 10.0).abs() < 1e-12);
        assert!((cost(&[0.0, 0.0], &[1.0, 1.0], 0.1, true).unwrap() - 5.0).abs() < 1e-12);
        assert!(cost(&[0.0], &[1.0, 1.0], 0.1, true).is_err());
        assert!(cost(&[0.0], &[1.0], 0.0, true).is_err());
    }

    #[test]
    fn potential_loss_examples() {
        let kld = potential_loss(FDivKind::Kld, &[0.3], &[0.1], 0.0, 0.0).unwrap();
        assert!((kld - (0.3 + libm::exp(-0.1) - 1.0)).abs() < 1e-15);
        assert!((kld - 0.204837).abs() < 1e-6);
        let jsd = potential_loss(FDivKind::Jsd, &[0.0], &[0.0], 0.0, 0.0).unwrap();
        assert!((jsd - 2.0 * core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(potential_loss(FDivKind::Kld, &[0.0], &[0.0], 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(potential_loss(FDivKind::Kld, &[0.0], &[0.0], 2.0, 0.5).unwrap(), 1.0);
        assert!(potential_loss(FDivKind::Kld, &[], &[0.0], 0.0, 0.0).is_err());
        assert!(potential_loss(FDivKind::Kld, &[f64::NAN], &[0.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn transport_loss_examples() {
        let a = RealTensor::row(&[0.0, 0.0]);
        let b = RealTensor::row(&[1.0, 1.0]);
        assert_eq!(transport_loss(FDivKind::Kld, &a, &a, &[0.0], 1.0, false).unwrap(), 0.0);
        let v = transport_loss(FDivKind::Kld, &a, &b, &[2.0], 0.1, false).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
        let j = transport_loss(FDivKind::Jsd, &a, &a, &[0.0], 1.0, false).unwrap();
        assert!((j - core::f64::consts::LN_2).abs() < 1e-15);
        assert!(transport_loss(FDivKind::Kld, &a, &RealTensor::zeros(2, 2), &[0.0, 0.0], 1.0, false).is_err());
    }

    #[test]
    fn cost_scaling_in_step_size() {
        let a = RealTensor::matrix(2, 2, vec![0.0, 1.0, -2.0, 0.5]).unwrap();
        let b = RealTensor::matrix(2, 2, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let c1 = mean_cost(&a, &b, 0.7, false).unwrap();
        let c2 = mean_cost(&a, &b, 1.4, false).unwrap();
        assert!((c1 - 2.0 * c2).abs() < 1e-14);
        // Affine in 1/h with slope mean‖Δ‖²/2.
        let slope = (1.0 + 0.0 + 4.0 + 0.25) / 2.0 / 2.0;
        let l1 = transport_loss(FDivKind::Kld, &a, &b, &[0.3, -0.1], 0.5, false).unwrap();
        let l2 = transport_loss(FDivKind::Kld, &a, &b, &[0.3, -0.1], 0.25, false).unwrap();
        assert!(((l2 - l1) / (4.0 - 2.0) - slope).abs() < 1e-12);
    }

    #[test]
    fn uotm_examples() {
        let (lv, lt) = uotm_losses(FDivKind::Kld, FDivKind::Kld, &[0.0], &[0.0], &[0.0], 0.0, 0.0).unwrap();
        assert_eq!((lv, lt), (0.0, 0.0));
        let (lv, _) = uotm_losses(FDivKind::Kld, FDivKind::Kld, &[0.3], &[0.1], &[0.2], 0.0, 0.0).unwrap();
        let expected = -(1.0 - libm::exp(-(0.2 - 0.3))) - (1.0 - libm::exp(-0.1));
        assert!((lv - expected).abs() < 1e-15);
        assert!((lv - 0.01001).abs() < 1e-5);
    }

    #[test]
    fn indicator_source_reduces_to_one_phase_objective() {
        let fake = [0.3, -0.7, 1.1];
        let real = [0.1, 0.4, -0.2];
        let y_old = RealTensor::matrix(3, 2, vec![0.0, 0.0, 1.0, 2.0, -1.0, 0.5]).unwrap();
        let y_new = RealTensor::matrix(3, 2, vec![0.5, 0.1, 1.2, 1.0, 0.0, 0.0]).unwrap();
        let h = 0.4;
        let costs: Vec<f64> = (0..3)
            .map(|i| cost(y_old.row_slice(i), y_new.row_slice(i), h, false).unwrap())
            .collect();
        let (lv, lt) = uotm_losses(FDivKind::Indicator, FDivKind::Kld, &fake, &real, &costs, 0.5, 0.3).unwrap();
        let pv = potential_loss(FDivKind::Kld, &fake, &real, 0.3, 0.5).unwrap();
        let pt = transport_loss(FDivKind::Kld, &y_old, &y_new, &fake, h, false).unwrap();
        assert!((lv - pv).abs() <= 1e-12);
        assert!((lt - pt).abs() <= 1e-12);
    }

    #[test]
    fn graph_builders_agree_with_reference_values() {
        let fake = RealTensor::matrix(3, 1, vec![0.3, -0.7, 1.1]).unwrap();
        let real = RealTensor::matrix(3, 1, vec![0.1, 0.4, -0.2]).unwrap();
        for kind in [FDivKind::Kld, FDivKind::Jsd] {
            let mut g = Graph::new();
            let f = g.constant(fake.clone());
            let r = g.constant(real.clone());
            let l = potential_loss_graph(&mut g, kind, f, r).unwrap();
            let reference = potential_loss(kind, fake.data(), real.data(), 0.0, 0.0).unwrap();
            assert!((g.value(l).item().unwrap() - reference).abs() < 1e-14);
        }
        let a = RealTensor::matrix(3, 2, vec![0.0, 0.0, 1.0, 2.0, -1.0, 0.5]).unwrap();
        let b = RealTensor::matrix(3, 2, vec![0.5, 0.1, 1.2, 1.0, 0.0, 0.0]).unwrap();
        for kind in [FDivKind::Kld, FDivKind::Jsd] {
            let mut g = Graph::new();
            let (av, bv, vv) = (g.constant(a.clone()), g.constant(b.clone()), g.constant(fake.clone()));
            let (c, rows) = cost_terms(&mut g, av, bv, 0.3, true, true).unwrap();
            let l = transport_loss_graph(&mut g, kind, c, vv).unwrap();
            let reference = transport_loss(kind, &a, &b, fake.data(), 0.3, true).unwrap();
            assert!((g.value(l).item().unwrap() - reference).abs() < 1e-14);
            let rows = g.value(rows.unwrap()).clone();
            for i in 0..3 {
                let ci = cost(a.row_slice(i), b.row_slice(i), 0.3, true).unwrap();
                assert!((rows.get(i, 0) - ci).abs() < 1e-14);
            }
        }
        let mut g = Graph::new();
        let (f, r) = (g.constant(fake.clone()), g.constant(real.clone()));
        let c = g.constant(RealTensor::matrix(3, 1, vec![0.2, 0.0, 0.5]).unwrap());
        let l = uotm_potential_graph(&mut g, FDivKind::Kld, FDivKind::Kld, f, r, Some(c)).unwrap();
        let (lv, _) = uotm_losses(
            FDivKind::Kld,
            FDivKind::Kld,
            fake.data(),
            real.data(),
            &[0.2, 0.0, 0.5],
            0.0,
            0.0,
        )
        .unwrap();
        assert!((g.value(l).item().unwrap() - lv).abs() < 1e-14);
    }
}
