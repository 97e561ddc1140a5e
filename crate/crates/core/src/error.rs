use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value at node {node}, path {path}: {what}")]
    NonFinite {
        what: String,
        node: usize,
        path: usize,
    },

    #[error("implicit step did not converge at node {node}, path {path} (residual {residual:e})")]
    ImplicitStep {
        node: usize,
        path: usize,
        residual: f64,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("gradient consistency check failed: deviation {deviation:e} > {tolerance:e} at {point}")]
    GradCheck {
        deviation: f64,
        tolerance: f64,
        point: String,
    },

    #[error("oracle failure: {0}")]
    Oracle(String),
}

impl Error {
    /// Wraps an error with a label naming the solver stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
