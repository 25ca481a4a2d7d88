//! Artifact-candidate selection, the edited-example lifecycle and
//! inter-annotator agreement.

mod candidates;
mod edits;
mod import;
mod kappa;
mod registry;
mod sampling;

pub use candidates::{select_artifact_candidates, CandidateSet, Provenance};
pub use edits::{
    register_edit, EditStatus, EditedExample, EditedRecord, ValidationOutcome, ValidationPolicy,
    ValidationRecord,
};
pub use import::{import_edits, read_edited_set, write_edited_set, ImportFormat, ImportMapping};
pub use kappa::{cohen_kappa, AgreementReport};
pub use registry::{EditRegistry, EditorItem, ValidatorItem};
pub use sampling::{sample_for_editing, Assignment, Quota};
