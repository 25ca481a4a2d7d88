use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::edits::{register_edit, EditStatus, EditedExample, EditedRecord, ValidationOutcome, ValidationPolicy};
use super::kappa::{cohen_kappa, AgreementReport};
use super::sampling::Assignment;
use crate::data::{Dataset, Instance, Label, Task, TextField};
use crate::error::{Error, Result};

/// What a validator is shown: the post-edit texts and the label choices.
/// Neither the original nor the target label is present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidatorItem {
    pub edit_id: String,
    pub task: Task,
    pub premise: String,
    pub hypothesis: String,
    pub update: Option<String>,
    pub choices: Vec<Label>,
}

/// What an editor is shown: the original instance, the field to rewrite and
/// the label to induce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EditorItem {
    pub instance: Instance,
    pub editable_field: TextField,
    pub original_label: Label,
    pub target_label: Label,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct State {
    next_id: u64,
    policy: ValidationPolicy,
    assignments: Vec<Assignment>,
    originals: BTreeMap<String, Instance>,
    edits: BTreeMap<String, EditedExample>,
}

/// Store of edits and their validations, optionally persisted to a JSON
/// file that is rewritten atomically after every mutation.
#[derive(Debug)]
pub struct EditRegistry {
    state: State,
    path: Option<PathBuf>,
}

impl EditRegistry {
    pub fn in_memory(policy: ValidationPolicy) -> Self {
        EditRegistry {
            state: State {
                policy,
                ..Default::default()
            },
            path: None,
        }
    }

    /// Loads the registry at `path`, or starts an empty one there.
    pub fn open(path: impl AsRef<Path>, policy: ValidationPolicy) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let state = if path.exists() {
            let mut state: State = serde_json::from_slice(&fs::read(&path)?)?;
            state.policy = policy;
            state
        } else {
            State {
                policy,
                ..Default::default()
            }
        };
        Ok(EditRegistry {
            state,
            path: Some(path),
        })
    }

    fn persist(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&self.state)?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn policy(&self) -> ValidationPolicy {
        self.state.policy
    }

    /// Queues sampled assignments and remembers their original instances.
    pub fn add_assignments(&mut self, assignments: &[Assignment], dataset: &Dataset) -> Result<()> {
        for a in assignments {
            let inst = dataset.get(&a.instance_id).ok_or_else(|| Error::CoverageMismatch {
                missing: vec![a.instance_id.clone()],
            })?;
            self.state.originals.insert(inst.id.clone(), inst.clone());
            self.state.assignments.push(a.clone());
        }
        self.persist()
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.state.assignments
    }

    fn has_live_edit(&self, a: &Assignment) -> bool {
        self.state.edits.values().any(|e| {
            e.original.id == a.instance_id && e.target_label == a.target_label && e.status != EditStatus::Rejected
        })
    }

    /// First queued assignment without a pending or accepted edit.
    pub fn next_editor_item(&self) -> Option<EditorItem> {
        let a = self.state.assignments.iter().find(|a| !self.has_live_edit(a))?;
        let inst = self.state.originals.get(&a.instance_id)?;
        Some(EditorItem {
            instance: inst.clone(),
            editable_field: inst.task.context_field(),
            original_label: a.original_label,
            target_label: a.target_label,
        })
    }

    /// First draft edit this annotator neither wrote nor labelled yet.
    pub fn next_validator_item(&self, annotator_id: &str) -> Option<ValidatorItem> {
        self.state
            .edits
            .values()
            .find(|e| {
                e.status == EditStatus::Draft
                    && e.editor_id != annotator_id
                    && e.validations.iter().all(|v| v.annotator_id != annotator_id)
            })
            .map(|e| {
                let inst = e.edited_instance();
                ValidatorItem {
                    edit_id: e.edit_id.clone(),
                    task: inst.task,
                    premise: inst.premise,
                    hypothesis: inst.hypothesis,
                    update: inst.update,
                    choices: inst.task.labels().to_vec(),
                }
            })
    }

    pub fn register(
        &mut self,
        instance_id: &str,
        target_label: Label,
        edited_text: &str,
        editor_id: &str,
        field: Option<TextField>,
    ) -> Result<EditedExample> {
        let original = self
            .state
            .originals
            .get(instance_id)
            .ok_or_else(|| Error::EditConstraint(format!("instance {instance_id:?} is not queued for editing")))?;
        let edit_id = format!("edit-{:06}", self.state.next_id + 1);
        let edit = register_edit(edit_id.clone(), original, target_label, edited_text, editor_id, field)?;
        self.state.next_id += 1;
        self.state.edits.insert(edit_id, edit.clone());
        self.persist()?;
        Ok(edit)
    }

    pub fn record_validation(
        &mut self,
        edit_id: &str,
        annotator_id: &str,
        assigned_label: Label,
        timestamp_ms: u64,
    ) -> Result<(EditedExample, ValidationOutcome)> {
        let policy = self.state.policy;
        let edit = self
            .state
            .edits
            .get_mut(edit_id)
            .ok_or_else(|| Error::UnknownEdit(edit_id.to_string()))?;
        let outcome = edit.add_validation(annotator_id, assigned_label, timestamp_ms, policy)?;
        let snapshot = edit.clone();
        if outcome == ValidationOutcome::Recorded {
            self.persist()?;
        }
        Ok((snapshot, outcome))
    }

    pub fn get(&self, edit_id: &str) -> Option<&EditedExample> {
        self.state.edits.get(edit_id)
    }

    pub fn edits(&self) -> impl Iterator<Item = &EditedExample> {
        self.state.edits.values()
    }

    /// Agreement between editors (their target label) and the first
    /// independent validator, over edits of `task`.
    pub fn agreement(&self, task: Task) -> Result<AgreementReport> {
        let pairs: Vec<(Label, Label)> = self
            .edits()
            .filter(|e| e.task() == task)
            .filter_map(|e| e.first_counting_validation().map(|v| (e.target_label, v.assigned_label)))
            .collect();
        cohen_kappa(&pairs)
    }

    /// Edited-set records; only validated edits unless `include_all`.
    pub fn export(&self, include_all: bool) -> Vec<EditedRecord> {
        self.edits()
            .filter(|e| include_all || e.status == EditStatus::Validated)
            .map(EditedExample::to_record)
            .collect()
    }
}
