use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HmmError {
    #[error("tracker count {0} outside supported range 1..=8")]
    TrackerCount(usize),
    #[error("observable {value} outside (0,1)")]
    Domain { value: f64 },
    #[error("invalid beta shape (p={p}, q={q}); both must be positive and finite")]
    InvalidShape { p: f64, q: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid transition matrix: {0}")]
    Transitions(String),
    #[error("invalid annotation: {0}")]
    Annotation(String),
    #[error("history is empty")]
    EmptyHistory,
    #[error("history has no annotations; learning needs at least one detection")]
    Unannotated,
    #[error("forward mass vanished at frame {time}")]
    ZeroMass { time: usize },
    #[error("annotated state at frame {time} is impossible under the model")]
    ImpossibleAnnotation { time: usize },
    #[error("pairwise posterior requested at frame {time}, which ends a segment")]
    SegmentBoundary { time: usize },
    #[error("frame {time} outside history of length {len}")]
    TimeOutOfRange { time: usize, len: usize },
    #[error("invalid tie group: {0}")]
    TieGroup(String),
}

impl HmmError {
    /// True for failures of the arithmetic itself rather than of the input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            HmmError::ZeroMass { .. } | HmmError::ImpossibleAnnotation { .. }
        )
    }
}
