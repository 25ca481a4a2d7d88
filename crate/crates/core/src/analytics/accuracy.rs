use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::calibration::PredictionRecord;
use crate::data::{InputView, Label, Task};
use crate::error::{Error, Result};
use crate::probe::EditedRecord;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AccuracyCell {
    pub correct: usize,
    pub total: usize,
}

impl AccuracyCell {
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

/// Accuracy on edited examples, by original label (rows) and induced label
/// (columns). A prediction is correct when it equals the induced label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyMatrix {
    pub task: Task,
    cells: BTreeMap<(Label, Label), AccuracyCell>,
}

impl AccuracyMatrix {
    fn empty(task: Task) -> Self {
        let mut cells = BTreeMap::new();
        for &l in task.labels() {
            for &t in task.labels() {
                if l != t {
                    cells.insert((l, t), AccuracyCell::default());
                }
            }
        }
        AccuracyMatrix { task, cells }
    }

    /// `None` on the diagonal.
    pub fn cell(&self, original: Label, target: Label) -> Option<AccuracyCell> {
        self.cells.get(&(original, target)).copied()
    }

    pub fn cells(&self) -> impl Iterator<Item = ((Label, Label), AccuracyCell)> + '_ {
        self.cells.iter().map(|(k, v)| (*k, *v))
    }

    pub fn overall(&self) -> AccuracyCell {
        self.cells.values().fold(AccuracyCell::default(), |acc, c| AccuracyCell {
            correct: acc.correct + c.correct,
            total: acc.total + c.total,
        })
    }
}

pub fn stratified_accuracy(predictions: &[PredictionRecord], edits: &[EditedRecord]) -> Result<AccuracyMatrix> {
    let task = edits.first().ok_or(Error::Empty("edited set"))?.task;
    let by_id: HashMap<&str, &PredictionRecord> =
        predictions.iter().map(|r| (r.instance_id.as_str(), r)).collect();
    let missing: Vec<String> = edits
        .iter()
        .filter(|e| !by_id.contains_key(e.edit_id.as_str()))
        .map(|e| e.edit_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::CoverageMismatch { missing });
    }

    let mut matrix = AccuracyMatrix::empty(task);
    for e in edits {
        if e.task != task {
            return Err(Error::InvalidParameter(format!(
                "edit {} is {} but the set is {task}",
                e.edit_id, e.task
            )));
        }
        let record = by_id[e.edit_id.as_str()];
        record.validate()?;
        if record.task() != task {
            return Err(Error::InvalidRecord {
                id: record.instance_id.clone(),
                reason: format!("{}-way logits for a {task} edit", record.logits.len()),
            });
        }
        let cell = matrix
            .cells
            .get_mut(&(e.original_label, e.target_label))
            .ok_or_else(|| Error::EditConstraint(format!("{}: original equals target", e.edit_id)))?;
        cell.total += 1;
        if record.predicted() == e.target_label {
            cell.correct += 1;
        }
    }
    Ok(matrix)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub model_id: String,
    pub view: InputView,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Argmax accuracy per `(model_id, view)`, rows sorted by key.
pub fn summary_accuracy(records: &[PredictionRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Empty("prediction record set"));
    }
    let mut groups: BTreeMap<(&str, InputView), (usize, usize)> = BTreeMap::new();
    for r in records {
        r.validate()?;
        let entry = groups.entry((r.model_id.as_str(), r.view)).or_default();
        entry.1 += 1;
        if r.is_correct() {
            entry.0 += 1;
        }
    }
    Ok(groups
        .into_iter()
        .map(|((model_id, view), (correct, total))| SummaryRow {
            model_id: model_id.to_string(),
            view,
            correct,
            total,
            accuracy: correct as f64 / total as f64,
        })
        .collect())
}
