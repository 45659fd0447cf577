//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records primitive operations as they are evaluated. Gradients
//! are produced by [`Graph::grad`], which records the backward pass as more
//! graph nodes; differentiating a gradient again (reverse-over-reverse) is how
//! [`r1_param_gradient`] obtains `∂‖∇ᵧ v(y)‖² / ∂φ`.

mod graph;
mod params;

use alloc::vec::Vec;

pub use graph::{Fun, Graph, Var, MAX_DERIVATIVE_ORDER};
pub use params::{ParamVector, Segment};

use crate::error::{Error, Result};
use crate::tensor::RealTensor;

/// A built graph together with the leaves it was built from.
#[derive(Debug, Clone)]
pub struct Forward {
    pub graph: Graph,
    pub output: Var,
    pub inputs: Vec<Var>,
    pub params: Vec<Var>,
}

impl Forward {
    pub fn value(&self) -> &RealTensor {
        self.graph.value(self.output)
    }

    /// True if any intermediate value was NaN or infinite.
    pub fn has_non_finite(&self) -> bool {
        self.graph.has_non_finite()
    }
}

/// Loads every segment of `params` as a `[rows, cols]` leaf.
pub fn param_leaves(graph: &mut Graph, params: &ParamVector, requires_grad: bool) -> Vec<Var> {
    (0..params.segments().len())
        .map(|i| graph.leaf(params.segment_tensor(i), requires_grad))
        .collect()
}

/// Evaluates `build` on fresh leaves for `inputs` and `params`.
///
/// Inputs and parameters are all differentiable leaves, so both [`grad`] and
/// [`input_gradient`] can be taken afterwards.
pub fn forward<F>(inputs: &[RealTensor], params: &ParamVector, build: F) -> Result<Forward>
where
    F: FnOnce(&mut Graph, &[Var], &[Var]) -> Result<Var>,
{
    let mut graph = Graph::new();
    let input_vars: Vec<Var> = inputs.iter().map(|t| graph.leaf(t.clone(), true)).collect();
    let param_vars = param_leaves(&mut graph, params, true);
    let output = build(&mut graph, &input_vars, &param_vars)?;
    Ok(Forward {
        graph,
        output,
        inputs: input_vars,
        params: param_vars,
    })
}

/// Collects gradient variables into a vector with the layout of `like`.
pub fn gather_params(graph: &Graph, grads: &[Var], like: &ParamVector) -> Result<ParamVector> {
    let mut out = like.zeros_like();
    if grads.len() != like.segments().len() {
        return Err(Error::shape("gather_params", "one gradient per segment expected"));
    }
    for (i, &g) in grads.iter().enumerate() {
        out.segment_mut(i).copy_from_slice(graph.value(g).data());
    }
    Ok(out)
}

/// `∂output/∂params` for a scalar output.
pub fn grad(fwd: &mut Forward, like: &ParamVector) -> Result<ParamVector> {
    let wrt = fwd.params.clone();
    let gs = fwd.graph.grad(fwd.output, &wrt)?;
    gather_params(&fwd.graph, &gs, like)
}

/// `∂output/∂input` for the `index`-th input of a scalar output.
pub fn input_gradient(fwd: &mut Forward, index: usize) -> Result<RealTensor> {
    let w = *fwd.inputs.get(index).ok_or(Error::NotInGraph(usize::MAX))?;
    let g = fwd.graph.grad(fwd.output, &[w])?[0];
    Ok(fwd.graph.value(g).clone())
}

/// Builds the squared input-gradient norm of a potential as graph nodes.
///
/// `potential_out` is `[n, 1]` evaluated row-wise on `y: [n, d]`. Returns the
/// batch mean of `‖∇ᵧ v(yᵢ)‖²` as a `[1,1]` variable that is itself
/// differentiable with respect to the potential's parameters.
pub fn r1_penalty_var(graph: &mut Graph, potential_out: Var, y: Var) -> Result<Var> {
    let n = graph.value(y).rows() as f64;
    let total = graph.sum(potential_out);
    let gy = graph.grad(total, &[y])?[0];
    let sq = graph.square(gy);
    let s = graph.sum(sq);
    Ok(graph.scale(s, 1.0 / n))
}

/// R1 penalty `mean ‖∇ᵧ v_φ(y)‖²` and its gradient with respect to `φ`.
///
/// `potential` receives the graph, the `y` leaf and the parameter leaves and
/// must return the `[n, 1]` potential values. Non-smooth nonlinearities fail
/// with [`Error::NonSmooth`] when the second backward pass reaches them.
pub fn r1_param_gradient<F>(potential: F, y: &RealTensor, params: &ParamVector) -> Result<(f64, ParamVector)>
where
    F: FnOnce(&mut Graph, Var, &[Var]) -> Result<Var>,
{
    let mut graph = Graph::new();
    let yv = graph.leaf(y.clone(), true);
    let pv = param_leaves(&mut graph, params, true);
    let out = potential(&mut graph, yv, &pv)?;
    let penalty = r1_penalty_var(&mut graph, out, yv)?;
    let value = graph.value(penalty).item()?;
    let gs = graph.grad(penalty, &pv)?;
    Ok((value, gather_params(&graph, &gs, params)?))
}

/// Normwise relative error `‖analytic − central‖₂ / max(‖analytic‖₂, ‖central‖₂, 1e-12)`.
///
/// `f` is evaluated at `point ± eps·eᵢ` for every coordinate `i`.
pub fn central_difference_error<F>(mut f: F, point: &[f64], analytic: &[f64], eps: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = point.to_vec();
    let (mut diff, mut norm_a, mut norm_n) = (0.0, 0.0, 0.0);
    for i in 0..point.len() {
        probe[i] = point[i] + eps;
        let up = f(&probe);
        probe[i] = point[i] - eps;
        let down = f(&probe);
        probe[i] = point[i];
        let numeric = (up - down) / (2.0 * eps);
        diff += (analytic[i] - numeric) * (analytic[i] - numeric);
        norm_a += analytic[i] * analytic[i];
        norm_n += numeric * numeric;
    }
    let err = libm::sqrt(diff) / libm::sqrt(norm_a).max(libm::sqrt(norm_n)).max(1e-12);
    if err.is_nan() {
        f64::INFINITY
    } else {
        err
    }
}

/// Checks [`grad`] of a scalar builder against central differences in `params`.
pub fn finite_diff_check<F>(build: F, inputs: &[RealTensor], params: &ParamVector, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var], &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Domain {
            what: "finite-difference epsilon",
            value: eps,
        });
    }
    let mut fwd = forward(inputs, params, &build)?;
    let analytic = grad(&mut fwd, params)?;
    let mut failure = None;
    let err = central_difference_error(
        |p| {
            let probe = params.with_data(p.to_vec()).expect("same length");
            match forward(inputs, &probe, &build).and_then(|f| f.value().item()) {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            }
        },
        params.as_slice(),
        analytic.as_slice(),
        eps,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(err),
    }
}
