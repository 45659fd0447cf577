//! Multilayer perceptrons for the transport map `T_θ(x, z)` and the potential
//! `v_φ(y)`, frozen snapshots used as `T_old`, and the Adam optimizer.
//!
//! Layer `0` computes `x·W₀ + z·W_z + b₀` when auxiliary noise is configured,
//! which is the same as feeding the concatenation `[x, z]`. Hidden layers apply
//! the activation; the output layer is affine.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Fun, Graph, ParamVector, Var};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::tensor::{self, RealTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Silu,
    Softplus,
    Relu,
}

impl Activation {
    pub fn fun(self) -> Fun {
        match self {
            Activation::Silu => Fun::Silu,
            Activation::Softplus => Fun::Softplus,
            Activation::Relu => Fun::Relu,
        }
    }

    /// Twice differentiable, hence usable in a potential with an R1 penalty.
    pub fn is_smooth(self) -> bool {
        self.fun().is_smooth()
    }

    pub fn name(self) -> &'static str {
        self.fun().name()
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "silu" => Some(Activation::Silu),
            "softplus" => Some(Activation::Softplus),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MlpSpec {
    pub in_dim: usize,
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub activation: Activation,
    /// Width of the auxiliary noise `z`; 0 disables it.
    pub aux_noise_dim: usize,
}

impl MlpSpec {
    pub fn transport(dim: usize, hidden: &[usize], activation: Activation, aux_noise_dim: usize) -> Self {
        MlpSpec {
            in_dim: dim,
            hidden: hidden.to_vec(),
            out_dim: dim,
            activation,
            aux_noise_dim,
        }
    }

    pub fn potential(dim: usize, hidden: &[usize], activation: Activation) -> Self {
        MlpSpec {
            in_dim: dim,
            hidden: hidden.to_vec(),
            out_dim: 1,
            activation,
            aux_noise_dim: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!("all MLP dimensions must be >= 1: {self:?}")));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.in_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.out_dim);
        w
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    /// Empty parameter vector with this network's segment layout.
    pub fn layout(&self) -> ParamVector {
        let w = self.widths();
        let mut p = ParamVector::new();
        for l in 0..self.num_layers() {
            p.push_segment(format!("layer{l}.weight"), w[l], w[l + 1]);
            if l == 0 && self.aux_noise_dim > 0 {
                p.push_segment("layer0.noise_weight", self.aux_noise_dim, w[1]);
            }
            p.push_segment(format!("layer{l}.bias"), 1, w[l + 1]);
        }
        p
    }

    /// Segment indices `(weight, noise_weight, bias)` of layer `l`.
    fn layer_segments(&self, l: usize) -> (usize, Option<usize>, usize) {
        let noise = self.aux_noise_dim > 0;
        if l == 0 {
            if noise {
                (0, Some(1), 2)
            } else {
                (0, None, 1)
            }
        } else {
            let base = 2 * l + usize::from(noise);
            (base, None, base + 1)
        }
    }

    fn check_inputs(&self, x: &RealTensor, z: Option<&RealTensor>) -> Result<()> {
        if x.cols() != self.in_dim {
            return Err(Error::shape(
                "mlp_forward",
                format!("input has {} columns, network expects {}", x.cols(), self.in_dim),
            ));
        }
        match (self.aux_noise_dim, z) {
            (0, None) => Ok(()),
            (0, Some(_)) => Err(Error::shape(
                "mlp_forward",
                "noise given to a network without noise input",
            )),
            (_, None) => Err(Error::shape("mlp_forward", "network expects auxiliary noise")),
            (k, Some(z)) if z.cols() != k || z.rows() != x.rows() => Err(Error::shape(
                "mlp_forward",
                format!("noise is [{},{}], expected [{},{k}]", z.rows(), z.cols(), x.rows()),
            )),
            _ => Ok(()),
        }
    }
}

/// Fresh parameters: weights `N(0, 1/fan_in)` with `fan_in` counting the
/// noise columns, biases zero.
pub fn mlp_new(spec: &MlpSpec, seed: u64, stream: u64) -> Result<ParamVector> {
    spec.validate()?;
    let mut params = spec.layout();
    let mut rng = StreamRng::new(seed, stream);
    for l in 0..spec.num_layers() {
        let (w, wz, _) = spec.layer_segments(l);
        let fan_in = params.segments()[w].rows + wz.map_or(0, |i| params.segments()[i].rows);
        let scale = 1.0 / libm::sqrt(fan_in as f64);
        for idx in core::iter::once(w).chain(wz) {
            let seg = params.segment_mut(idx);
            rng.fill_normal(seg);
            for v in seg.iter_mut() {
                *v *= scale;
            }
        }
    }
    Ok(params)
}

/// Graph-free forward pass on a batch `x: [n, in_dim]`.
pub fn mlp_forward(spec: &MlpSpec, params: &ParamVector, x: &RealTensor, z: Option<&RealTensor>) -> Result<RealTensor> {
    spec.check_inputs(x, z)?;
    let fun = spec.activation.fun();
    let mut h = x.clone();
    for l in 0..spec.num_layers() {
        let (w, wz, b) = spec.layer_segments(l);
        let mut pre = tensor::matmul(&h, &params.segment_tensor(w))?;
        if let (Some(wz), Some(z)) = (wz, z) {
            let zw = tensor::matmul(z, &params.segment_tensor(wz))?;
            pre = pre.zip_map(&zw, |a, c| a + c);
        }
        pre = tensor::add_row(&pre, &params.segment_tensor(b))?;
        h = if l + 1 < spec.num_layers() {
            fun.apply(0, &pre)
        } else {
            pre
        };
    }
    Ok(h)
}

/// Records the forward pass on `graph`; `param_vars` are one leaf per segment
/// in layout order. Produces the same values as [`mlp_forward`].
pub fn mlp_graph(spec: &MlpSpec, graph: &mut Graph, param_vars: &[Var], x: Var, z: Option<Var>) -> Result<Var> {
    spec.check_inputs(graph.value(x), z.map(|v| graph.value(v)))?;
    let fun = spec.activation.fun();
    let mut h = x;
    for l in 0..spec.num_layers() {
        let (w, wz, b) = spec.layer_segments(l);
        let mut pre = graph.matmul(h, param_vars[w])?;
        if let (Some(wz), Some(z)) = (wz, z) {
            let zw = graph.matmul(z, param_vars[wz])?;
            pre = graph.add(pre, zw)?;
        }
        pre = graph.add_row(pre, param_vars[b])?;
        h = if l + 1 < spec.num_layers() {
            graph.unary(pre, fun)?
        } else {
            pre
        };
    }
    Ok(h)
}

/// The map applied to source samples to produce `ŷ_old`.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportRef {
    Identity,
    Frozen { spec: MlpSpec, params: ParamVector },
}

impl TransportRef {
    pub fn is_identity(&self) -> bool {
        matches!(self, TransportRef::Identity)
    }

    /// `Identity` ignores `z`; a frozen network uses it if it has a noise input.
    pub fn eval(&self, x: &RealTensor, z: Option<&RealTensor>) -> Result<RealTensor> {
        match self {
            TransportRef::Identity => Ok(x.clone()),
            TransportRef::Frozen { spec, params } => {
                let z = if spec.aux_noise_dim > 0 { z } else { None };
                mlp_forward(spec, params, x, z)
            }
        }
    }
}

/// Deep copy of the live network as a frozen map.
pub fn snapshot(spec: &MlpSpec, params: &ParamVector) -> TransportRef {
    TransportRef::Frozen {
        spec: spec.clone(),
        params: params.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Steps refused because the gradient was not finite.
    pub skipped: u64,
}

impl AdamState {
    pub fn new(len: usize, beta1: f64, beta2: f64) -> Self {
        AdamState {
            m: alloc::vec![0.0; len],
            v: alloc::vec![0.0; len],
            t: 0,
            beta1,
            beta2,
            eps: 1e-8,
            skipped: 0,
        }
    }
}

/// One bias-corrected Adam step. Returns `false` (and counts it in
/// `state.skipped`) when the gradient has a non-finite entry; nothing else
/// changes in that case.
pub fn adam_step(params: &mut ParamVector, grads: &ParamVector, state: &mut AdamState, lr: f64) -> Result<bool> {
    let n = params.total_len();
    if grads.total_len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::shape(
            "adam_step",
            format!(
                "params {n}, grads {}, moments {}/{}",
                grads.total_len(),
                state.m.len(),
                state.v.len()
            ),
        ));
    }
    if !grads.all_finite() {
        state.skipped += 1;
        return Ok(false);
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - libm::pow(b1, state.t as f64);
    let c2 = 1.0 - libm::pow(b2, state.t as f64);
    let p = params.as_mut_slice();
    for (i, &g) in grads.as_slice().iter().enumerate() {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        p[i] -= lr * mhat / (libm::sqrt(vhat) + state.eps);
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let spec = MlpSpec::transport(2, &[8, 8], Activation::Silu, 3);
        let a = mlp_new(&spec, 7, 1).unwrap();
        let b = mlp_new(&spec, 7, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, mlp_new(&spec, 8, 1).unwrap());
        for (i, s) in a.segments().iter().enumerate() {
            if s.name.ends_with("bias") {
                assert!(a.segment(i).iter().all(|&v| v == 0.0));
            }
        }
        assert_eq!(a.segments()[1].name, "layer0.noise_weight");
    }

    #[test]
    fn init_variance_matches_fan_in() {
        let spec = MlpSpec::potential(256, &[256], Activation::Silu);
        let p = mlp_new(&spec, 3, 0).unwrap();
        let w = p.segment(0);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (w.len() - 1) as f64;
        let expected = 1.0 / 256.0;
        assert!((var - expected).abs() < 0.2 * expected, "{var}");
    }

    #[test]
    fn hand_computed_one_two_one() {
        let spec = MlpSpec::potential(1, &[2], Activation::Softplus);
        let mut p = spec.layout();
        p.segment_mut(0).copy_from_slice(&[0.5, -1.5]);
        p.segment_mut(1).copy_from_slice(&[0.1, 0.2]);
        p.segment_mut(2).copy_from_slice(&[2.0, -3.0]);
        p.segment_mut(3).copy_from_slice(&[0.25]);
        let x = 0.8;
        let sp = |t: f64| libm::log(1.0 + libm::exp(t));
        let expected = 2.0 * sp(0.5 * x + 0.1) - 3.0 * sp(-1.5 * x + 0.2) + 0.25;
        let out = mlp_forward(&spec, &p, &RealTensor::row(&[x]), None).unwrap();
        assert!((out.item().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_output_and_identity_is_exact() {
        let spec = MlpSpec::transport(2, &[4], Activation::Relu, 0);
        let p = spec.layout();
        let x = RealTensor::row(&[3.0, -1.0]);
        assert_eq!(mlp_forward(&spec, &p, &x, None).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(TransportRef::Identity.eval(&x, None).unwrap().data(), &[3.0, -1.0]);
        assert_ne!(snapshot(&spec, &p).eval(&x, None).unwrap(), x);
    }

    #[test]
    fn shape_errors() {
        let spec = MlpSpec::transport(2, &[4], Activation::Silu, 2);
        let p = mlp_new(&spec, 0, 0).unwrap();
        let x = RealTensor::zeros(3, 2);
        assert!(mlp_forward(&spec, &p, &x, None).is_err());
        assert!(mlp_forward(&spec, &p, &x, Some(&RealTensor::zeros(3, 1))).is_err());
        assert!(mlp_forward(&spec, &p, &RealTensor::zeros(3, 3), Some(&RealTensor::zeros(3, 2))).is_err());
        assert!(mlp_forward(&spec, &p, &x, Some(&RealTensor::zeros(3, 2))).is_ok());
        assert!(MlpSpec::transport(0, &[4], Activation::Silu, 0).validate().is_err());
    }

    #[test]
    fn snapshot_is_isolated_from_live_updates() {
        let spec = MlpSpec::transport(2, &[5], Activation::Silu, 0);
        let mut live = mlp_new(&spec, 1, 1).unwrap();
        let x = RealTensor::matrix(2, 2, vec![0.1, 0.2, -1.0, 0.5]).unwrap();
        let before = mlp_forward(&spec, &live, &x, None).unwrap();
        let frozen = snapshot(&spec, &live);
        live.as_mut_slice()[0] += 1.0;
        assert_eq!(frozen.eval(&x, None).unwrap(), before);
        assert_ne!(mlp_forward(&spec, &live, &x, None).unwrap(), before);
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let mut p = ParamVector::new();
        p.push_segment("w", 1, 3);
        let mut st = AdamState::new(3, 0.5, 0.9);
        let g = p.with_data(vec![0.3, -2.0, 0.0]).unwrap();
        adam_step(&mut p, &g, &mut st, 0.1).unwrap();
        assert_eq!(st.t, 1);
        assert!((p.as_slice()[0] + 0.1).abs() < 1e-6);
        assert!((p.as_slice()[1] - 0.1).abs() < 1e-6);
        assert_eq!(p.as_slice()[2], 0.0);

        let mut q = ParamVector::new();
        q.push_segment("w", 1, 2);
        let mut st = AdamState::new(2, 0.9, 0.999);
        let zero = q.zeros_like();
        adam_step(&mut q, &zero, &mut st, 0.1).unwrap();
        assert_eq!(q.as_slice(), &[0.0, 0.0]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_skips_non_finite_gradients() {
        let mut p = ParamVector::new();
        p.push_segment("w", 1, 1);
        let mut st = AdamState::new(1, 0.5, 0.9);
        let g = p.with_data(vec![f64::NAN]).unwrap();
        assert!(!adam_step(&mut p, &g, &mut st, 0.1).unwrap());
        assert_eq!((st.t, st.skipped), (0, 1));
        assert_eq!(p.as_slice(), &[0.0]);
        let short = ParamVector::new();
        assert!(adam_step(&mut p, &short, &mut st, 0.1).is_err());
    }

    #[test]
    fn adam_minimizes_a_parabola() {
        let mut p = ParamVector::new();
        p.push_segment("w", 1, 1);
        let mut st = AdamState::new(1, 0.9, 0.999);
        for _ in 0..50 {
            let w = p.as_slice()[0];
            let g = p.with_data(vec![2.0 * (w - 3.0)]).unwrap();
            adam_step(&mut p, &g, &mut st, 0.1).unwrap();
        }
        assert!((p.as_slice()[0] - 3.0).abs() < 0.5, "{}", p.as_slice()[0]);
    }
}
