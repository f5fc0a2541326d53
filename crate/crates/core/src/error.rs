use thiserror::Error;

/// Errors produced by the geometry, quadrature, linear-algebra and
/// simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("agents {first} and {second} are {distance:e} apart, below the degeneracy tolerance")]
    CoincidentAgents {
        first: usize,
        second: usize,
        distance: f64,
    },

    #[error("agent {agent} lies outside the domain")]
    OutsideDomain { agent: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("cell of agent {agent} is degenerate (volume {volume:e})")]
    DegenerateCell { agent: usize, volume: f64 },

    #[error("perturbing agent {agent} changes the neighbor graph even at step {step:e}")]
    GraphChanged { agent: usize, step: f64 },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is singular or ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("neighbor graph does not match the tessellation: {0}")]
    GraphMismatch(String),

    #[error("fast step {step:e} is not admissible (bound {bound:e})")]
    InadmissibleStep { step: f64, bound: f64 },

    #[error("invalid value for `{field}`: {message}")]
    Config { field: String, message: String },

    /// Malformed scenario file. The message carries line and key.
    #[error("{0}")]
    Parse(String),

    #[error("simulation aborted at step {step} (t = {t}): {source}")]
    Simulation {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the scenario description rather than by
    /// the simulation itself.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Parse(_) | Error::InvalidDomain(_))
    }

    pub(crate) fn at_step(self, step: usize, t: f64) -> Self {
        match self {
            e @ Error::Simulation { .. } => e,
            e => Error::Simulation {
                step,
                t,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
