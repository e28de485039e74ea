use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single offending cell of a policy grid: (post-arrival queue state, channel state).
///
/// Channel states are 1-based, matching the way thresholds are reported.
pub type Cell = (usize, usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{field}: probabilities sum to {sum}, expected 1")]
    NonStochastic { field: &'static str, sum: f64 },

    #[error("channel.powers: powers must be strictly decreasing and positive (P_{index} = {value})")]
    NonDecreasingPower { index: usize, value: f64 },

    #[error("arrival.probs: mean arrival rate {mean} is not below one packet per slot")]
    UnstableArrival { mean: f64 },

    #[error("buffer.capacity: capacity {capacity} is smaller than the largest arrival burst {burst}")]
    CapacityTooSmall { capacity: usize, burst: usize },

    #[error("arrival.probs: no packets ever arrive (theta_0 = 1)")]
    DegenerateArrivals,

    #[error("{field}: {reason}")]
    InvalidValue { field: &'static str, reason: String },

    #[error("policy does not match the system: {0}")]
    MalformedPolicy(String),

    #[error("transition matrix column {state} sums to {sum}")]
    NumericalInconsistency { state: usize, sum: f64 },

    #[error("stationary system is singular; closed classes {classes:?}")]
    SingularSystem { classes: Vec<Vec<usize>> },

    #[error("infeasible power budget {p_aver}; minimum stabilizing power is {p_min}")]
    Infeasible { p_aver: f64, p_min: f64 },

    #[error("linear program is infeasible")]
    LpInfeasible,

    #[error("linear program is unbounded (internal error)")]
    Unbounded,

    #[error("LP solution is inconsistent: {0}")]
    InconsistentSolution(String),

    #[error("threshold structure violated at {cells:?}: {reason}")]
    StructureViolation { reason: String, cells: Vec<Cell> },

    #[error("no table entry fits within power budget {p_aver}")]
    NoFeasibleEntry { p_aver: f64 },

    #[error("enumeration of 2^{bits} policies exceeds the cap of 2^24")]
    TooLarge { bits: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("table file line {line}: {reason}")]
    TableFormat { line: usize, reason: String },
}

impl Error {
    /// True for errors caused by user input (config, spec values, files).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::NonStochastic { .. }
                | Error::NonDecreasingPower { .. }
                | Error::UnstableArrival { .. }
                | Error::CapacityTooSmall { .. }
                | Error::DegenerateArrivals
                | Error::InvalidValue { .. }
                | Error::Config(_)
                | Error::TableFormat { .. }
        )
    }
}
