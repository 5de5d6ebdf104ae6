use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point {0} lies on the cone locus")]
    SingularPoint(String),
    #[error("degenerate metric at node {node}: form value {value}")]
    DegenerateMetric { node: usize, value: f64 },
    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),
    #[error("incompatible data: {0}")]
    IncompatibleData(String),
    #[error("coercivity violation: K = {k} but C_P + 1 = {bound}")]
    CoercivityViolation { k: f64, bound: f64 },
    #[error("discretization failure: {0}")]
    DiscretizationFailure(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("singular data: {0}")]
    SingularData(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("positivity lost at node {node}")]
    PositivityLoss { node: usize },
    #[error("invalid vector field: {0}")]
    InvalidField(String),
    #[error("obstruction: {0}")]
    Obstruction(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Process exit status used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InvalidArgument(_) | Error::Unsupported(_) | Error::InvalidField(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
