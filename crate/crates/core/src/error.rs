use alloc::string::String;

/// Errors raised anywhere in the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("value {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("expected a scalar output, got shape {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },
    #[error("variable {0} is not a differentiable leaf of this graph")]
    NotInGraph(usize),
    #[error("non-smooth nonlinearity `{0}` cannot be differentiated twice")]
    NonSmooth(&'static str),
    #[error("derivative of order {order} of `{fun}` is not supported")]
    DerivativeOrder { fun: &'static str, order: u8 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),
    #[error("need more than {dim} points to fit a {dim}-dimensional Gaussian, got {n}")]
    TooFewPoints { n: usize, dim: usize },
    #[error("training failed at phase {phase}, iteration {iteration}: {source}")]
    Training {
        phase: usize,
        iteration: usize,
        source: alloc::boxed::Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }

    pub(crate) fn at_iteration(self, phase: usize, iteration: usize) -> Self {
        match self {
            e @ Error::Training { .. } => e,
            e => Error::Training {
                phase,
                iteration,
                source: alloc::boxed::Box::new(e),
            },
        }
    }
}
