use alloc::vec;
use alloc::vec::Vec;

use crate::divergence::{sigmoid, softplus};
use crate::error::{Error, Result};
use crate::tensor::{self, RealTensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise scalar functions known to the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fun {
    /// `x·σ(x)`, C^∞.
    Silu,
    /// `log(1 + eˣ)`, C^∞.
    Softplus,
    /// `max(x, 0)`; differentiable once (almost everywhere) and no further.
    Relu,
    Exp,
    Log,
}

/// Highest derivative order any [`Fun`] can be asked for.
pub const MAX_DERIVATIVE_ORDER: u8 = 3;

impl Fun {
    pub fn name(self) -> &'static str {
        match self {
            Fun::Silu => "silu",
            Fun::Softplus => "softplus",
            Fun::Relu => "relu",
            Fun::Exp => "exp",
            Fun::Log => "log",
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, Fun::Relu)
    }

    fn check_order(self, order: u8) -> Result<()> {
        if order > MAX_DERIVATIVE_ORDER {
            return Err(Error::DerivativeOrder {
                fun: self.name(),
                order,
            });
        }
        if !self.is_smooth() && order > 1 {
            return Err(Error::NonSmooth(self.name()));
        }
        Ok(())
    }

    /// The `order`-th derivative evaluated at `x`. Callers validate `order`.
    pub fn derivative(self, order: u8, x: f64) -> f64 {
        match self {
            Fun::Exp => libm::exp(x),
            Fun::Log => match order {
                0 => libm::log(x),
                1 => 1.0 / x,
                2 => -1.0 / (x * x),
                _ => 2.0 / (x * x * x),
            },
            Fun::Relu => match order {
                0 => {
                    if x > 0.0 {
                        x
                    } else {
                        0.0
                    }
                }
                _ => {
                    if x > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            },
            Fun::Softplus => {
                if order == 0 {
                    return softplus(x);
                }
                let s = sigmoid(x);
                let p = s * (1.0 - s);
                match order {
                    1 => s,
                    2 => p,
                    _ => p * (1.0 - 2.0 * s),
                }
            }
            Fun::Silu => {
                let s = sigmoid(x);
                let p = s * (1.0 - s);
                let q = 1.0 - 2.0 * s;
                match order {
                    0 => x * s,
                    1 => s * (1.0 + x * (1.0 - s)),
                    2 => p * (2.0 + x * q),
                    _ => p * (q * (3.0 + x * q) - 2.0 * x * p),
                }
            }
        }
    }

    /// Applies the `order`-th derivative elementwise.
    pub fn apply(self, order: u8, t: &RealTensor) -> RealTensor {
        t.map(|x| self.derivative(order, x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    AddRow(Var, Var),
    SumRows(Var),
    SumCols(Var),
    BroadcastRows(Var, usize),
    BroadcastCols(Var, usize),
    Sum(Var),
    Fill(Var, usize, usize),
    Unary(Var, Fun, u8),
}

#[derive(Debug, Clone)]
struct Node {
    value: RealTensor,
    op: Op,
    requires_grad: bool,
}

/// A recorded computation over [`RealTensor`]s.
///
/// Nodes are appended in evaluation order, which is also a topological order.
/// [`Graph::grad`] walks that order backwards once and records the gradient
/// computation as new nodes, so a gradient is itself differentiable; this is
/// what the R1 penalty needs (`‖∇ᵧ v(y)‖²` differentiated with respect to the
/// potential's parameters).
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    non_finite: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// True once any recorded value contains NaN or ±∞.
    pub fn has_non_finite(&self) -> bool {
        self.non_finite
    }

    pub fn value(&self, v: Var) -> &RealTensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: RealTensor, op: Op, requires_grad: bool) -> Var {
        if !value.all_finite() {
            self.non_finite = true;
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf. Only leaves with `requires_grad` can be differentiated against.
    pub fn leaf(&mut self, value: RealTensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: RealTensor) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = tensor::transpose(self.value(a));
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (x, y) = (self.value(a), self.value(b));
        if x.same_shape(y) {
            Ok(())
        } else {
            Err(Error::shape(
                op,
                alloc::format!("[{},{}] vs [{},{}]", x.rows(), x.cols(), y.rows(), y.cols()),
            ))
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a).expect("same shape")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| c * x);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push(value, Op::AddScalar(a, c), rg)
    }

    /// `a[n,m] + bias[1,m]`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = tensor::add_row(self.value(a), self.value(bias))?;
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(value, Op::AddRow(a, bias), rg))
    }

    /// `[n,m] -> [1,m]`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let value = tensor::sum_rows(self.value(a));
        let rg = self.rg(a);
        self.push(value, Op::SumRows(a), rg)
    }

    /// `[n,m] -> [n,1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = tensor::sum_cols(self.value(a));
        let rg = self.rg(a);
        self.push(value, Op::SumCols(a), rg)
    }

    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Var {
        let value = tensor::broadcast_rows(self.value(a), n);
        let rg = self.rg(a);
        self.push(value, Op::BroadcastRows(a, n), rg)
    }

    pub fn broadcast_cols(&mut self, a: Var, m: usize) -> Var {
        let value = tensor::broadcast_cols(self.value(a), m);
        let rg = self.rg(a);
        self.push(value, Op::BroadcastCols(a, m), rg)
    }

    /// Sum of every entry, as a `[1,1]` scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = RealTensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Broadcasts a `[1,1]` scalar to `[rows, cols]`.
    pub fn fill(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let v = self.value(a).item()?;
        let rg = self.rg(a);
        Ok(self.push(RealTensor::filled(rows, cols, v), Op::Fill(a, rows, cols), rg))
    }

    pub fn unary(&mut self, a: Var, fun: Fun) -> Result<Var> {
        self.unary_order(a, fun, 0)
    }

    fn unary_order(&mut self, a: Var, fun: Fun, order: u8) -> Result<Var> {
        fun.check_order(order)?;
        let value = fun.apply(order, self.value(a));
        let rg = self.rg(a);
        Ok(self.push(value, Op::Unary(a, fun, order), rg))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Fun::Exp).expect("order 0")
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Fun::Log).expect("order 0")
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Fun::Softplus).expect("order 0")
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(a, Fun::Silu).expect("order 0")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Fun::Relu).expect("order 0")
    }

    /// Gradients of the scalar `output` with respect to each of `wrt`.
    ///
    /// The backward pass is recorded in this graph, so the returned variables
    /// can be differentiated again. A leaf that does not influence `output`
    /// gets an exact zero.
    pub fn grad(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::NotScalar {
                rows: out.rows(),
                cols: out.cols(),
            });
        }
        for &w in wrt {
            if w.0 >= self.nodes.len() || !matches!(self.nodes[w.0].op, Op::Leaf) || !self.nodes[w.0].requires_grad {
                return Err(Error::NotInGraph(w.0));
            }
        }
        let end = output.0 + 1;
        let mut adj: Vec<Option<Var>> = vec![None; end];
        let seed = self.constant(RealTensor::filled(out.rows(), out.cols(), 1.0));
        adj[output.0] = Some(seed);

        for i in (0..end).rev() {
            let Some(g) = adj[i] else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op;
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.rg(a) {
                        let bt = self.transpose(b);
                        let ga = self.matmul(g, bt)?;
                        self.accumulate(&mut adj, a, ga)?;
                    }
                    if self.rg(b) {
                        let at = self.transpose(a);
                        let gb = self.matmul(at, g)?;
                        self.accumulate(&mut adj, b, gb)?;
                    }
                }
                Op::Transpose(a) => {
                    let ga = self.transpose(g);
                    self.accumulate(&mut adj, a, ga)?;
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut adj, a, g)?;
                    self.accumulate(&mut adj, b, g)?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adj, a, g)?;
                    if self.rg(b) {
                        let gb = self.neg(g);
                        self.accumulate(&mut adj, b, gb)?;
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(a) {
                        let ga = self.mul(g, b)?;
                        self.accumulate(&mut adj, a, ga)?;
                    }
                    if self.rg(b) {
                        let gb = self.mul(g, a)?;
                        self.accumulate(&mut adj, b, gb)?;
                    }
                }
                Op::Scale(a, c) => {
                    let ga = self.scale(g, c);
                    self.accumulate(&mut adj, a, ga)?;
                }
                Op::AddScalar(a, _) => self.accumulate(&mut adj, a, g)?,
                Op::AddRow(a, bias) => {
                    self.accumulate(&mut adj, a, g)?;
                    if self.rg(bias) {
                        let gb = self.sum_rows(g);
                        self.accumulate(&mut adj, bias, gb)?;
                    }
                }
                Op::SumRows(a) => {
                    let n = self.value(a).rows();
                    let ga = self.broadcast_rows(g, n);
                    self.accumulate(&mut adj, a, ga)?;
                }
                Op::SumCols(a) => {
                    let m = self.value(a).cols();
                    let ga = self.broadcast_cols(g, m);
                    self.accumulate(&mut adj, a, ga)?;
                }
                Op::BroadcastRows(a, _) => {
                    let ga = self.sum_rows(g);
                    self.accumulate(&mut adj, a, ga)?;
                }
                Op::BroadcastCols(a, _) => {
                    let ga = self.sum_cols(g);
                    self.accumulate(&mut adj, a, ga)?;
                }
                Op::Sum(a) => {
                    let (r, c) = (self.value(a).rows(), self.value(a).cols());
                    let ga = self.fill(g, r, c)?;
                    self.accumulate(&mut adj, a, ga)?;
                }
                Op::Fill(a, _, _) => {
                    let ga = self.sum(g);
                    self.accumulate(&mut adj, a, ga)?;
                }
                Op::Unary(a, fun, order) => {
                    let d = self.unary_order(a, fun, order + 1)?;
                    let ga = self.mul(g, d)?;
                    self.accumulate(&mut adj, a, ga)?;
                }
            }
        }

        let mut grads = Vec::with_capacity(wrt.len());
        for &w in wrt {
            let g = match adj[w.0] {
                Some(g) => g,
                None => {
                    let v = self.value(w);
                    let (r, c) = (v.rows(), v.cols());
                    self.constant(RealTensor::zeros(r, c))
                }
            };
            grads.push(g);
        }
        Ok(grads)
    }

    fn accumulate(&mut self, adj: &mut [Option<Var>], target: Var, contribution: Var) -> Result<()> {
        if !self.rg(target) {
            return Ok(());
        }
        adj[target.0] = Some(match adj[target.0] {
            None => contribution,
            Some(prev) => self.add(prev, contribution)?,
        });
        Ok(())
    }
}
