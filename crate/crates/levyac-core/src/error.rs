use alloc::boxed::Box;
use thiserror::Error;

/// Crate-wide error type.
///
/// Variants carry enough context to locate the failure (offending agent,
/// path/step of a simulation, grid node of a metric).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    /// A jump-measure description that cannot be simulated or compensated.
    #[error("unsupported measure: {0}")]
    UnsupportedMeasure(&'static str),
    /// Non-finite value produced outside of a path simulation.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    /// Non-finite value produced while simulating; includes path and step.
    #[error("numeric fault in {what} at path {path}, step {step}")]
    NumericFault {
        what: &'static str,
        path: usize,
        step: usize,
    },
    /// An iterate or argument left the admissible domain of a residual map.
    #[error("out of domain for agent {index}")]
    OutOfDomain { index: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    /// An operation was invoked on an object in the wrong state.
    #[error("invalid state: {0}")]
    InvalidState(&'static str),
    /// A relative error metric with an identically zero reference.
    #[error("degenerate metric: zero reference norm at node {node}")]
    DegenerateMetric { node: usize },
    /// A best-response worker failed; wraps the underlying error.
    #[error("worker for agent {agent} failed: {source}")]
    AgentFailed {
        agent: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tags an error with the agent whose worker produced it.
    pub fn for_agent(self, agent: usize) -> Error {
        Error::AgentFailed {
            agent,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
