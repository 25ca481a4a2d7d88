use crate::data::{Label, Task};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("label {label:?} is not valid for task {task}")]
    InvalidLabel { label: String, task: Task },

    #[error("duplicate instance id {0:?}")]
    DuplicateId(String),

    #[error("instance {id:?}: {reason}")]
    InvalidInstance { id: String, reason: String },

    #[error("defeasible instance {0:?} has no update sentence")]
    MissingUpdate(String),

    #[error("training corpus is empty")]
    EmptyCorpus,

    #[error("training corpus contains a single label ({0})")]
    SingleLabelCorpus(Label),

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),

    #[error("invalid temperature bounds ({lo}, {hi})")]
    InvalidBounds { lo: f64, hi: f64 },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("prediction record {id:?}: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("instance coverage mismatch: {} missing ({})", .missing.len(), preview(.missing))]
    CoverageMismatch { missing: Vec<String> },

    #[error("insufficient candidates: {}", describe_deficits(.0))]
    InsufficientCandidates(Vec<Deficit>),

    #[error("edit rejected: {0}")]
    EditConstraint(String),

    #[error("unknown edit {0:?}")]
    UnknownEdit(String),

    #[error("annotator {annotator:?} already labelled edit {edit_id:?} differently")]
    ConflictingValidation { edit_id: String, annotator: String },

    #[error("probability triple {index} sums to {sum}")]
    NotNormalized { index: usize, sum: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model format: {0}")]
    ModelFormat(String),
}

/// Shortfall for one directional (l → l′) sampling cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deficit {
    pub original: Label,
    pub target: Label,
    pub requested: usize,
    pub available: usize,
}

fn preview(ids: &[String]) -> String {
    let mut s = ids.iter().take(5).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > 5 {
        s.push_str(", ...");
    }
    s
}

fn describe_deficits(d: &[Deficit]) -> String {
    d.iter()
        .map(|d| {
            format!(
                "{}->{} needs {} but has {}",
                d.original, d.target, d.requested, d.available
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}
