use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("horizon overflow: t={t} + horizon={horizon} exceeds bound {bound}")]
    HorizonOverflow { t: usize, horizon: usize, bound: usize },
    #[error("opponent model clash: profile slot {player} disagrees with own control")]
    OpponentModelClash { player: usize },
    #[error("{what} is not a probability measure (mass {mass})")]
    NotNormalized { what: String, mass: f64 },
    #[error("unknown metric id `{0}`")]
    UnknownMetric(String),
    #[error("empty control grid")]
    EmptyGrid,
    #[error("state {state} is not in the state space at t={t}")]
    UnknownState { t: usize, state: usize },
    #[error("control has no decision at (t={t}, x={state})")]
    MissingDecision { t: usize, state: usize },
    #[error("kappa {0} outside [0, 1]")]
    KappaOutOfRange(f64),
    #[error("T0={t0} outside [{lo}, {hi}]")]
    TimeOutOfRange { t0: usize, lo: usize, hi: usize },
    #[error("need at least {needed} trajectory entries, have {have}")]
    ShortTrajectory { needed: usize, have: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("divergence: non-finite loss")]
    Divergence,
    #[error("invalid game: {0}")]
    InvalidGame(String),
    #[error("discount factor {0} must lie in [0, 1)")]
    BadDiscount(f64),
    #[error("singular linear system")]
    Singular,
    #[error("cannot step a terminal cart-pole state")]
    TerminalState,
    #[error("horizon {0} too large for control enumeration (max 16)")]
    HorizonTooLarge(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
