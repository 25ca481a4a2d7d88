use serde::{Deserialize, Serialize};

use crate::data::{decompose, Instance, Label, Task, TextField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditStatus {
    Draft,
    Validated,
    Rejected,
}

impl EditStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EditStatus::Draft => "draft",
            EditStatus::Validated => "validated",
            EditStatus::Rejected => "rejected",
        }
    }
}

/// A blind label assigned to an edited example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub annotator_id: String,
    pub assigned_label: Label,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
    /// False when the editor labelled their own edit.
    pub counts: bool,
}

/// How many independent validators must agree before an edit is accepted.
///
/// Once `panel` counting validations exist the edit is validated if at least
/// `min_agree` of them assigned the target label, and rejected otherwise.
/// An edit is rejected early once `min_agree` becomes unreachable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationPolicy {
    pub panel: usize,
    pub min_agree: usize,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        ValidationPolicy { panel: 1, min_agree: 1 }
    }
}

impl ValidationPolicy {
    pub fn new(min_agree: usize, panel: usize) -> Result<Self> {
        if panel == 0 || min_agree == 0 || min_agree > panel {
            return Err(Error::InvalidParameter(format!(
                "validation policy {min_agree}-of-{panel} is not satisfiable"
            )));
        }
        Ok(ValidationPolicy { panel, min_agree })
    }

    fn decide(&self, agree: usize, disagree: usize) -> EditStatus {
        if agree + disagree >= self.panel {
            if agree >= self.min_agree {
                EditStatus::Validated
            } else {
                EditStatus::Rejected
            }
        } else if self.panel - disagree < self.min_agree {
            EditStatus::Rejected
        } else {
            EditStatus::Draft
        }
    }
}

/// An original instance with its context sentence rewritten to induce a
/// different gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditedExample {
    pub edit_id: String,
    pub original: Instance,
    pub edited_field: TextField,
    pub edited_text: String,
    pub original_label: Label,
    pub target_label: Label,
    pub editor_id: String,
    pub validations: Vec<ValidationRecord>,
    pub status: EditStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationOutcome {
    Recorded,
    /// Same annotator, same label: nothing changed.
    Duplicate,
}

/// Creates a draft edit. `field`, when given, must name the context field:
/// NLI edits rewrite the premise, defeasible edits rewrite the hypothesis.
pub fn register_edit(
    edit_id: impl Into<String>,
    original: &Instance,
    target_label: Label,
    edited_text: &str,
    editor_id: &str,
    field: Option<TextField>,
) -> Result<EditedExample> {
    original.validate()?;
    let task = original.task;
    let context_field = task.context_field();
    if let Some(f) = field {
        if f == task.target_field() {
            return Err(Error::EditConstraint(format!(
                "{f} is the target field of a {task} instance and must stay unchanged"
            )));
        }
        if f != context_field {
            return Err(Error::EditConstraint(format!(
                "{task} edits rewrite the {context_field}, not the {f}"
            )));
        }
    }
    if target_label.task() != task {
        return Err(Error::InvalidLabel {
            label: target_label.to_string(),
            task,
        });
    }
    if target_label == original.gold {
        return Err(Error::EditConstraint(format!(
            "target label equals the original label ({target_label})"
        )));
    }
    if edited_text.trim().is_empty() {
        return Err(Error::EditConstraint("edited text is empty".into()));
    }
    if edited_text == original.context_text() {
        return Err(Error::EditConstraint(format!(
            "edited {context_field} is identical to the original"
        )));
    }
    if editor_id.is_empty() {
        return Err(Error::EditConstraint("editor id is empty".into()));
    }

    let edit = EditedExample {
        edit_id: edit_id.into(),
        original: original.clone(),
        edited_field: context_field,
        edited_text: edited_text.to_string(),
        original_label: original.gold,
        target_label,
        editor_id: editor_id.to_string(),
        validations: Vec::new(),
        status: EditStatus::Draft,
    };
    edit.check_invariants()?;
    Ok(edit)
}

impl EditedExample {
    pub fn task(&self) -> Task {
        self.original.task
    }

    /// The post-edit instance, carrying the target label as gold.
    pub fn edited_instance(&self) -> Instance {
        let mut inst = self.original.with_context(&self.edited_text);
        inst.id = self.edit_id.clone();
        inst.gold = self.target_label;
        inst
    }

    pub fn check_invariants(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::EditConstraint(format!("{}: {m}", self.edit_id)));
        if self.original_label == self.target_label {
            return bad("target label equals original label");
        }
        if self.edited_field != self.task().context_field() {
            return bad("edited field is not the context field");
        }
        let edited = self.edited_instance();
        if self.original.field(self.edited_field) == edited.field(self.edited_field) {
            return bad("edited field is unchanged");
        }
        let before = decompose(&self.original)?.target;
        let after = decompose(&edited)?.target;
        if before.as_bytes() != after.as_bytes() {
            return bad("target text changed");
        }
        Ok(())
    }

    /// Appends a blind label and re-evaluates the status under `policy`.
    /// Validations by the editor are kept but flagged as non-counting.
    pub fn add_validation(
        &mut self,
        annotator_id: &str,
        assigned_label: Label,
        timestamp_ms: u64,
        policy: ValidationPolicy,
    ) -> Result<ValidationOutcome> {
        if assigned_label.task() != self.task() {
            return Err(Error::InvalidLabel {
                label: assigned_label.to_string(),
                task: self.task(),
            });
        }
        if let Some(prev) = self.validations.iter().find(|v| v.annotator_id == annotator_id) {
            if prev.assigned_label == assigned_label {
                return Ok(ValidationOutcome::Duplicate);
            }
            return Err(Error::ConflictingValidation {
                edit_id: self.edit_id.clone(),
                annotator: annotator_id.to_string(),
            });
        }
        let counts = annotator_id != self.editor_id;
        if !counts {
            log::warn!("{}: self-validation by {annotator_id} does not count", self.edit_id);
        } else if assigned_label != self.target_label {
            log::info!(
                "{}: {annotator_id} labelled {assigned_label}, edit targets {}",
                self.edit_id,
                self.target_label
            );
        }
        self.validations.push(ValidationRecord {
            annotator_id: annotator_id.to_string(),
            assigned_label,
            timestamp_ms,
            counts,
        });
        self.status = self.recompute_status(policy);
        Ok(ValidationOutcome::Recorded)
    }

    fn recompute_status(&self, policy: ValidationPolicy) -> EditStatus {
        let counting = self.validations.iter().filter(|v| v.counts);
        let (agree, disagree) = counting.fold((0, 0), |(a, d), v| {
            if v.assigned_label == self.target_label {
                (a + 1, d)
            } else {
                (a, d + 1)
            }
        });
        policy.decide(agree, disagree)
    }

    /// First counting validation, used for editor/validator agreement.
    pub fn first_counting_validation(&self) -> Option<&ValidationRecord> {
        self.validations.iter().find(|v| v.counts)
    }

    pub fn to_record(&self) -> EditedRecord {
        let edited = self.edited_instance();
        EditedRecord {
            edit_id: self.edit_id.clone(),
            original_id: self.original.id.clone(),
            task: self.task(),
            premise: edited.premise,
            hypothesis: edited.hypothesis,
            update: edited.update,
            edited_field: self.edited_field,
            original_label: self.original_label,
            target_label: self.target_label,
            status: self.status,
        }
    }
}

/// Exported edited-set line. Texts are post-edit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditedRecord {
    pub edit_id: String,
    pub original_id: String,
    pub task: Task,
    pub premise: String,
    pub hypothesis: String,
    pub update: Option<String>,
    pub edited_field: TextField,
    pub original_label: Label,
    pub target_label: Label,
    pub status: EditStatus,
}

impl EditedRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::EditConstraint(format!("{}: {m}", self.edit_id)));
        for l in [self.original_label, self.target_label] {
            if l.task() != self.task {
                return Err(Error::InvalidLabel {
                    label: l.to_string(),
                    task: self.task,
                });
            }
        }
        if self.original_label == self.target_label {
            return bad("target label equals original label".into());
        }
        if self.edited_field != self.task.context_field() {
            return bad(format!("{} is not the {} context field", self.edited_field, self.task));
        }
        self.instance().validate()
    }

    /// The edited instance, gold = target label.
    pub fn instance(&self) -> Instance {
        Instance {
            id: self.edit_id.clone(),
            task: self.task,
            premise: self.premise.clone(),
            hypothesis: self.hypothesis.clone(),
            update: self.update.clone(),
            gold: self.target_label,
            split: crate::data::Split::Test,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    fn snli() -> Instance {
        Instance {
            id: "s1".into(),
            task: Task::Nli,
            premise: "A dog runs through a field.".into(),
            hypothesis: "An animal is outside.".into(),
            update: None,
            gold: Label::Entailment,
            split: Split::Test,
        }
    }

    fn dsnli() -> Instance {
        Instance {
            id: "d1".into(),
            task: Task::DefeasibleNli,
            premise: "A man is sitting in a dim restaurant.".into(),
            hypothesis: "He is eating food.".into(),
            update: Some("He is browsing a menu.".into()),
            gold: Label::Weakener,
            split: Split::Test,
        }
    }

    #[test]
    fn snli_edit_rewrites_premise() {
        let e = register_edit(
            "e1",
            &snli(),
            Label::Contradiction,
            "A dog sleeps in a kennel indoors.",
            "ed",
            None,
        )
        .unwrap();
        assert_eq!(e.edited_field, TextField::Premise);
        assert_eq!(e.status, EditStatus::Draft);
        let inst = e.edited_instance();
        assert_eq!(inst.premise, "A dog sleeps in a kennel indoors.");
        assert_eq!(inst.hypothesis, snli().hypothesis);
        assert_eq!(inst.gold, Label::Contradiction);
    }

    #[test]
    fn dsnli_edit_rewrites_hypothesis() {
        let e = register_edit("e2", &dsnli(), Label::Strengthener, "He is waiting for a table.", "ed", None)
            .unwrap();
        assert_eq!(e.edited_field, TextField::Hypothesis);
        let rec = e.to_record();
        assert_eq!(rec.premise, dsnli().premise);
        assert_eq!(rec.update, dsnli().update);
        assert_eq!(rec.hypothesis, "He is waiting for a table.");
        rec.validate().unwrap();
    }

    #[test]
    fn constraint_violations() {
        let s = snli();
        let err = register_edit("e", &s, Label::Neutral, &s.premise, "ed", None).unwrap_err();
        assert!(matches!(err, Error::EditConstraint(_)));
        assert!(register_edit("e", &s, Label::Entailment, "other", "ed", None).is_err());
        assert!(register_edit("e", &s, Label::Neutral, "   ", "ed", None).is_err());
        assert!(register_edit("e", &s, Label::Weakener, "other", "ed", None).is_err());
        let err = register_edit("e", &s, Label::Neutral, "other", "ed", Some(TextField::Hypothesis)).unwrap_err();
        assert!(err.to_string().contains("target field"));
        let err = register_edit("e", &dsnli(), Label::Strengthener, "x", "ed", Some(TextField::Update)).unwrap_err();
        assert!(err.to_string().contains("target field"));
        assert!(register_edit("e", &dsnli(), Label::Strengthener, "x", "ed", Some(TextField::Premise)).is_err());
    }

    #[test]
    fn single_validator_policy() {
        let mut e = register_edit("e", &snli(), Label::Neutral, "A dog runs.", "ed", None).unwrap();
        e.add_validation("val", Label::Neutral, 1, ValidationPolicy::default()).unwrap();
        assert_eq!(e.status, EditStatus::Validated);

        let mut e = register_edit("e", &snli(), Label::Neutral, "A dog runs.", "ed", None).unwrap();
        e.add_validation("val", Label::Entailment, 1, ValidationPolicy::default()).unwrap();
        assert_eq!(e.status, EditStatus::Rejected);
    }

    #[test]
    fn self_validation_does_not_count() {
        let mut e = register_edit("e", &snli(), Label::Neutral, "A dog runs.", "ed", None).unwrap();
        e.add_validation("ed", Label::Neutral, 1, ValidationPolicy::default()).unwrap();
        assert_eq!(e.status, EditStatus::Draft);
        assert!(!e.validations[0].counts);
        assert!(e.first_counting_validation().is_none());
    }

    #[test]
    fn duplicate_and_conflicting_validations() {
        let policy = ValidationPolicy::new(2, 3).unwrap();
        let mut e = register_edit("e", &snli(), Label::Neutral, "A dog runs.", "ed", None).unwrap();
        assert_eq!(e.add_validation("a", Label::Neutral, 1, policy).unwrap(), ValidationOutcome::Recorded);
        assert_eq!(e.add_validation("a", Label::Neutral, 2, policy).unwrap(), ValidationOutcome::Duplicate);
        assert_eq!(e.validations.len(), 1);
        assert!(matches!(
            e.add_validation("a", Label::Contradiction, 3, policy),
            Err(Error::ConflictingValidation { .. })
        ));
        assert!(matches!(e.add_validation("b", Label::Strengthener, 3, policy), Err(Error::InvalidLabel { .. })));
        assert_eq!(e.status, EditStatus::Draft);
        e.add_validation("b", Label::Neutral, 4, policy).unwrap();
        assert_eq!(e.status, EditStatus::Draft);
        e.add_validation("c", Label::Entailment, 5, policy).unwrap();
        assert_eq!(e.status, EditStatus::Validated);
    }

    #[test]
    fn k_of_n_rejects_when_unreachable() {
        let policy = ValidationPolicy::new(2, 2).unwrap();
        let mut e = register_edit("e", &snli(), Label::Neutral, "A dog runs.", "ed", None).unwrap();
        e.add_validation("a", Label::Contradiction, 1, policy).unwrap();
        assert_eq!(e.status, EditStatus::Rejected);
        assert!(ValidationPolicy::new(3, 2).is_err());
    }
}
