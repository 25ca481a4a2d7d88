use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::{Calibration, ProbabilitySource, SourceTally};
use crate::calibration::PredictionRecord;
use crate::data::Label;
use crate::error::{Error, Result};
use crate::probe::EditedRecord;

pub const DIAGONAL_TOLERANCE: f64 = 1e-12;
pub const QUADRANT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    AboveDiagonal,
    BelowDiagonal,
    OnDiagonal,
}

/// Position relative to the 0.5 thresholds, named `<x><y>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrant {
    HighHigh,
    HighLow,
    LowHigh,
    LowLow,
}

impl Quadrant {
    fn of(x: f64, y: f64) -> Quadrant {
        match (x >= QUADRANT_THRESHOLD, y >= QUADRANT_THRESHOLD) {
            (true, true) => Quadrant::HighHigh,
            (true, false) => Quadrant::HighLow,
            (false, true) => Quadrant::LowHigh,
            (false, false) => Quadrant::LowLow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftPoint {
    pub instance_id: String,
    pub x: f64,
    pub y: f64,
    pub region: Region,
    pub quadrant: Quadrant,
}

impl ShiftPoint {
    pub fn new(instance_id: impl Into<String>, x: f64, y: f64) -> Result<Self> {
        let instance_id = instance_id.into();
        for v in [x, y] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidRecord {
                    id: instance_id,
                    reason: format!("confidence {v} outside [0, 1]"),
                });
            }
        }
        let region = if (y - x).abs() <= DIAGONAL_TOLERANCE {
            Region::OnDiagonal
        } else if y > x {
            Region::AboveDiagonal
        } else {
            Region::BelowDiagonal
        };
        Ok(ShiftPoint {
            instance_id,
            x,
            y,
            region,
            quadrant: Quadrant::of(x, y),
        })
    }

    /// Post-edit reading: confident in `l` before and not after the edit.
    pub fn is_ideal_flip(&self) -> bool {
        self.quadrant == Quadrant::HighLow
    }

    /// Post-edit reading: still confident in the now-wrong label.
    pub fn is_artifact_override(&self) -> bool {
        self.quadrant == Quadrant::HighHigh
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RegionSummary {
    pub n: usize,
    pub above_diagonal: usize,
    pub below_diagonal: usize,
    pub on_diagonal: usize,
    pub high_high: usize,
    pub high_low: usize,
    pub low_high: usize,
    pub low_low: usize,
}

impl RegionSummary {
    pub fn of(points: &[ShiftPoint]) -> Self {
        let mut s = RegionSummary {
            n: points.len(),
            ..Default::default()
        };
        for p in points {
            match p.region {
                Region::AboveDiagonal => s.above_diagonal += 1,
                Region::BelowDiagonal => s.below_diagonal += 1,
                Region::OnDiagonal => s.on_diagonal += 1,
            }
            match p.quadrant {
                Quadrant::HighHigh => s.high_high += 1,
                Quadrant::HighLow => s.high_low += 1,
                Quadrant::LowHigh => s.low_high += 1,
                Quadrant::LowLow => s.low_low += 1,
            }
        }
        s
    }

    fn fraction(&self, count: usize) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            count as f64 / self.n as f64
        }
    }

    pub fn fraction_above(&self) -> f64 {
        self.fraction(self.above_diagonal)
    }

    pub fn fraction_below(&self) -> f64 {
        self.fraction(self.below_diagonal)
    }
}

/// Scatter data plus the probability source it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftSet {
    pub x_label: String,
    pub y_label: String,
    pub source: ProbabilitySource,
    pub summary: RegionSummary,
    pub points: Vec<ShiftPoint>,
}

fn by_id(records: &[PredictionRecord]) -> HashMap<&str, &PredictionRecord> {
    records.iter().map(|r| (r.instance_id.as_str(), r)).collect()
}

fn coverage(a: &HashMap<&str, &PredictionRecord>, b: &HashMap<&str, &PredictionRecord>) -> Result<()> {
    let mut missing: Vec<String> = a
        .keys()
        .filter(|k| !b.contains_key(*k))
        .chain(b.keys().filter(|k| !a.contains_key(*k)))
        .map(|k| k.to_string())
        .collect();
    if missing.is_empty() {
        return Ok(());
    }
    missing.sort();
    Err(Error::CoverageMismatch { missing })
}

fn confidence(
    record: &PredictionRecord,
    label: Label,
    calibration: &Calibration,
    tally: &mut SourceTally,
) -> Result<f64> {
    record.validate()?;
    if label.task() != record.task() {
        return Err(Error::InvalidLabel {
            label: label.to_string(),
            task: record.task(),
        });
    }
    Ok(calibration.probabilities(record, tally)[label.index()])
}

/// One point per instance: x = partial-input confidence in the gold label,
/// y = full-input confidence in the gold label. Points are sorted by id.
pub fn confidence_shift_points(
    partial: &[PredictionRecord],
    full: &[PredictionRecord],
    gold: &BTreeMap<String, Label>,
    calibration: &Calibration,
) -> Result<ShiftSet> {
    let p = by_id(partial);
    let f = by_id(full);
    coverage(&p, &f)?;
    let mut ids: Vec<&str> = p.keys().copied().collect();
    ids.sort_unstable();

    let mut tally = SourceTally::default();
    let mut points = Vec::with_capacity(ids.len());
    for id in ids {
        let label = *gold.get(id).ok_or_else(|| Error::CoverageMismatch {
            missing: vec![id.to_string()],
        })?;
        let x = confidence(p[id], label, calibration, &mut tally)?;
        let y = confidence(f[id], label, calibration, &mut tally)?;
        points.push(ShiftPoint::new(id, x, y)?);
    }
    Ok(ShiftSet {
        x_label: "partial-input confidence in gold".into(),
        y_label: "full-input confidence in gold".into(),
        source: tally.source(),
        summary: RegionSummary::of(&points),
        points,
    })
}

/// One point per edit: x = confidence in the original label `l` before the
/// edit, y = confidence in that same label after it. Both record sets and
/// `original_labels` are keyed by edit id.
pub fn post_edit_shift_points(
    pre: &[PredictionRecord],
    post: &[PredictionRecord],
    original_labels: &BTreeMap<String, Label>,
    calibration: &Calibration,
) -> Result<ShiftSet> {
    let before = by_id(pre);
    let after = by_id(post);
    let missing: Vec<String> = original_labels
        .keys()
        .filter(|id| !before.contains_key(id.as_str()) || !after.contains_key(id.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::CoverageMismatch { missing });
    }

    let mut tally = SourceTally::default();
    let mut points = Vec::with_capacity(original_labels.len());
    for (id, &label) in original_labels {
        let x = confidence(before[id.as_str()], label, calibration, &mut tally)?;
        let y = confidence(after[id.as_str()], label, calibration, &mut tally)?;
        points.push(ShiftPoint::new(id.clone(), x, y)?);
    }
    Ok(ShiftSet {
        x_label: "pre-edit confidence in original label".into(),
        y_label: "post-edit confidence in original label".into(),
        source: tally.source(),
        summary: RegionSummary::of(&points),
        points,
    })
}

/// Re-keys records made on original instances to the ids of the edits
/// derived from them. Edits whose original has no record are skipped.
pub fn rekey_by_edit(on_originals: &[PredictionRecord], edits: &[EditedRecord]) -> Vec<PredictionRecord> {
    let by_original = by_id(on_originals);
    edits
        .iter()
        .filter_map(|e| {
            by_original.get(e.original_id.as_str()).map(|r| PredictionRecord {
                instance_id: e.edit_id.clone(),
                ..(*r).clone()
            })
        })
        .collect()
}
