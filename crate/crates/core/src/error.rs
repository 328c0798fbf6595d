use thiserror::Error;

/// Errors raised anywhere in the selection / matching / testing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular design: column(s) {} are linearly dependent on earlier columns", .columns.join(", "))]
    SingularDesign { columns: Vec<String> },

    #[error("degenerate response: {0}")]
    DegenerateResponse(String),

    #[error("non-finite inverse probability weight for unit {unit} (propensity {ps})")]
    NonFiniteWeight { unit: usize, ps: f64 },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("ordering failed at orbit {orbit}: every remaining candidate is unfittable")]
    Ordering { orbit: usize },

    #[error("stability selection failed: {0}")]
    Selection(String),

    #[error("full matching infeasible: {0}")]
    InfeasibleMatching(String),

    #[error("enumeration too large: |Omega| = {size} exceeds cap {cap}; use the Monte Carlo p-value")]
    EnumerationTooLarge { size: f64, cap: u64 },

    #[error("unknown scenario `{name}`; available: {}", .available.join(", "))]
    UnknownScenario { name: String, available: Vec<String> },

    #[error("study aborted: {failed} of {total} replicates failed")]
    StudyAborted { failed: usize, total: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Tag an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
