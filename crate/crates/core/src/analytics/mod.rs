//! Confidence-shift data, stratified accuracy tables and ternary heatmaps.
//!
//! Every transform consumes calibrated probabilities when a temperature is
//! known for the record's `(model_id, view)` and raw softmax otherwise; the
//! outputs say which one was used.

mod accuracy;
pub mod render;
mod shift;
mod ternary;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::calibration::{apply_temperature, ModelKey, PredictionRecord, Temperature};

pub use accuracy::{stratified_accuracy, summary_accuracy, AccuracyCell, AccuracyMatrix, SummaryRow};
pub use shift::{
    confidence_shift_points, post_edit_shift_points, rekey_by_edit, Quadrant, Region, RegionSummary, ShiftPoint,
    ShiftSet, DIAGONAL_TOLERANCE, QUADRANT_THRESHOLD,
};
pub use ternary::{barycentric_bin, lattice_points, simplex_position, ternary_heatmap, TernaryGrid};

/// Default number of subdivisions per simplex edge.
pub const DEFAULT_RESOLUTION: usize = 30;
/// Default smoothing width, in lattice cells.
pub const DEFAULT_SIGMA: f64 = 1.5;

/// Per-model temperatures. An empty table means raw softmax everywhere.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Calibration {
    temperatures: BTreeMap<ModelKey, Temperature>,
}

impl Calibration {
    pub fn raw() -> Self {
        Calibration::default()
    }

    pub fn insert(&mut self, key: ModelKey, tau: Temperature) {
        self.temperatures.insert(key, tau);
    }

    pub fn get(&self, record: &PredictionRecord) -> Option<Temperature> {
        self.temperatures
            .get(&(record.model_id.clone(), record.view))
            .copied()
    }

    pub fn is_empty(&self) -> bool {
        self.temperatures.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ModelKey, &Temperature)> {
        self.temperatures.iter()
    }

    fn probabilities(&self, record: &PredictionRecord, used: &mut SourceTally) -> Vec<f64> {
        match self.get(record) {
            Some(tau) => {
                used.calibrated += 1;
                apply_temperature(record, tau)
            }
            None => {
                used.raw += 1;
                apply_temperature(record, Temperature::IDENTITY)
            }
        }
    }
}

impl FromIterator<(ModelKey, Temperature)> for Calibration {
    fn from_iter<I: IntoIterator<Item = (ModelKey, Temperature)>>(iter: I) -> Self {
        Calibration {
            temperatures: iter.into_iter().collect(),
        }
    }
}

/// Whether probabilities came from calibrated or raw logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbabilitySource {
    Raw,
    Calibrated,
    Mixed,
}

#[derive(Debug, Default)]
struct SourceTally {
    raw: usize,
    calibrated: usize,
}

impl SourceTally {
    fn source(&self) -> ProbabilitySource {
        match (self.raw, self.calibrated) {
            (_, 0) => ProbabilitySource::Raw,
            (0, _) => ProbabilitySource::Calibrated,
            _ => ProbabilitySource::Mixed,
        }
    }
}
