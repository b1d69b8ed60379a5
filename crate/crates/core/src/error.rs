use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("shift moves an endpoint below zero")]
    NegativeEndpoint,
    #[error("stage {requested} exceeds the available depth {available}")]
    DepthExceeded { requested: usize, available: usize },
    #[error("orbit leaves the resolved column at depth {depth}{}", index.map(|i| format!(" (orbit index {i})")).unwrap_or_default())]
    NeedsDeeperStage { depth: usize, index: Option<i64> },
    #[error("no return to the set within {0} steps")]
    NoReturnWithinBudget(usize),
    #[error("mass {0} of the base could not be classified at this depth")]
    UnresolvedMass(String),
    #[error("partitions have different alphabet sizes ({0} vs {1})")]
    AlphabetMismatch(usize, usize),
    #[error("no anchors with a non-1 symbol")]
    EmptyAnchor,
    #[error("{h} is not a nonnegative combination of {n} and {}", n + 1)]
    NotRepresentable { h: u64, n: u64 },
    #[error("columns sharing a key have heights {0} and {1}")]
    HeightMismatch(usize, usize),
    #[error("tower level {level} of column {column} straddles K")]
    TowerNotRefinedByK { column: usize, level: usize },
    #[error("S_N 1_K stalls along the walk; the orbit meets K finitely often")]
    BoundedOrbitDetected,
    #[error("column {0} has no per-level names")]
    MissingNames(usize),
    #[error("partition has no finite-measure atoms left")]
    DegeneratePartition,
    #[error("word of length {len} exceeds model depth {depth}")]
    WordTooLong { len: usize, depth: usize },
    #[error("symbol {0} is outside the alphabet")]
    UnknownSymbol(u32),
    #[error("tower {0} does not refine its predecessor: {1}")]
    NotRefining(usize, String),
    #[error("path is maximal at the stored depth")]
    MaximalPath,
    #[error("inverse-limit identity fails for levels ({l}, {m}, {n}): {detail}")]
    InconsistentTower {
        l: usize,
        m: usize,
        n: usize,
        detail: String,
    },
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn deeper(depth: usize) -> Self {
        Error::NeedsDeeperStage { depth, index: None }
    }

    pub fn is_depth_error(&self) -> bool {
        matches!(
            self,
            Error::NeedsDeeperStage { .. } | Error::DepthExceeded { .. } | Error::UnresolvedMass(_)
        )
    }
}
