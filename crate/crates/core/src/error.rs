use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("value {value} is outside the domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("invalid search space: {0}")]
    InvalidSpace(String),

    #[error("config is missing dimension `{0}`")]
    MissingDimension(String),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("step index {step} out of range for a cycle of {len} steps")]
    StepOutOfRange { step: usize, len: usize },

    #[error("non-finite or negative learning rate {0}")]
    InvalidLearningRate(f64),

    #[error("checkpoint restore failed: {0}")]
    Checkpoint(String),

    #[error("scheduler: {0}")]
    Scheduler(String),

    #[error("infeasible budget: {0}")]
    InfeasibleBudget(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("budget exceeded: consumed {consumed} + {requested} > budget {budget}")]
    BudgetExceeded {
        consumed: u64,
        requested: u64,
        budget: u64,
    },

    #[error("event log: {0}")]
    EventLog(String),

    #[error("experiment config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by invalid user input rather than a failure while
    /// running.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidDomain(_)
                | Error::OutOfDomain { .. }
                | Error::InvalidSpace(_)
                | Error::MissingDimension(_)
                | Error::InvalidPlan(_)
                | Error::InvalidSchedule(_)
                | Error::InfeasibleBudget(_)
                | Error::Config(_)
        )
    }
}
