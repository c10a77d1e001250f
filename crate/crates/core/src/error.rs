use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("split list is empty")]
    EmptySplitList,

    #[error("contradictory splits on feature {feature} at threshold {threshold}")]
    ContradictorySplits { feature: usize, threshold: f64 },

    #[error("gamma must be positive, got {0}")]
    GammaNotPositive(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("target is constant; no split can reduce variance")]
    DegenerateData,

    #[error("no candidate rule survived extraction")]
    EmptyPool,

    #[error("index {index} out of range for pool of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("Cholesky factorization of the ridge kernel failed (size {size})")]
    CholeskyFailure { size: usize },

    #[error("epsilon {epsilon} exceeds the largest feasible value {epsilon_max}")]
    Infeasible { epsilon: f64, epsilon_max: f64 },

    #[error("{what} exceeded its limit of {limit}")]
    IterationLimit { what: &'static str, limit: usize },

    #[error("k = {k} exceeds pool size {m}")]
    KTooLarge { k: usize, m: usize },

    #[error("rule set is empty")]
    EmptyRuleSet,

    #[error("need at least two rule sets, got {0}")]
    TooFewSets(usize),

    #[error("target is constant on the evaluation split")]
    ConstantTarget,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("at epsilon {epsilon}: {source}")]
    AtEpsilon {
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Strips `AtEpsilon`/`Fold` context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtEpsilon { source, .. } | Error::Fold { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for numerical-solver failures (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self.root(),
            Error::Infeasible { .. } | Error::IterationLimit { .. } | Error::CholeskyFailure { .. }
        )
    }

    /// Short machine-readable tag used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::EmptySplitList => "empty_split_list",
            Error::ContradictorySplits { .. } => "contradictory_splits",
            Error::GammaNotPositive(_) => "gamma_not_positive",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::DegenerateData => "degenerate_data",
            Error::EmptyPool => "empty_pool",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::CholeskyFailure { .. } => "cholesky_failure",
            Error::Infeasible { .. } => "infeasible",
            Error::IterationLimit { .. } => "iteration_limit",
            Error::KTooLarge { .. } => "k_too_large",
            Error::EmptyRuleSet => "empty_rule_set",
            Error::TooFewSets(_) => "too_few_sets",
            Error::ConstantTarget => "constant_target",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::AtEpsilon { .. } | Error::Fold { .. } => unreachable!(),
        }
    }

    pub(crate) fn at_epsilon(self, epsilon: f64) -> Error {
        Error::AtEpsilon {
            epsilon,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_fold(self, fold: usize) -> Error {
        Error::Fold {
            fold,
            source: Box::new(self),
        }
    }
}
