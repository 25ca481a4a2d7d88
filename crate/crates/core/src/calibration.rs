//! Post-hoc temperature scaling of classifier logits.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::data::{InputView, Label, Task};
use crate::error::{Error, Result};

/// Default search interval for the fitted temperature.
pub const DEFAULT_BOUNDS: (f64, f64) = (0.05, 10.0);
/// Golden-section stopping width on the temperature axis.
pub const GOLDEN_TOLERANCE: f64 = 1e-4;
/// Step of the grid scan that guards the golden-section search.
pub const GRID_STEP: f64 = 0.01;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A positive calibration temperature.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub const IDENTITY: Temperature = Temperature(1.0);

    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 {
            Ok(Temperature(tau))
        } else {
            Err(Error::InvalidTemperature(tau))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Temperature::new(v)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

/// One model output on one instance. Serializes as a prediction JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub model_id: String,
    pub view: InputView,
    pub logits: Vec<f64>,
    pub gold: Label,
}

impl PredictionRecord {
    pub fn task(&self) -> Task {
        self.gold.task()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidRecord {
            id: self.instance_id.clone(),
            reason,
        };
        let arity = self.task().arity();
        if self.logits.len() != arity {
            return Err(bad(format!(
                "{} logits for a {}-label task",
                self.logits.len(),
                arity
            )));
        }
        if self.logits.iter().any(|z| !z.is_finite()) {
            return Err(bad("non-finite logit".into()));
        }
        Ok(())
    }

    /// Raw argmax label.
    pub fn predicted(&self) -> Label {
        self.task()
            .label_at(argmax(&self.logits))
            .expect("validated logits length")
    }

    pub fn is_correct(&self) -> bool {
        self.predicted() == self.gold
    }

    pub fn probabilities(&self, tau: Temperature) -> Vec<f64> {
        apply_temperature(self, tau)
    }
}

/// `softmax(logits / tau)`.
pub fn apply_temperature(record: &PredictionRecord, tau: Temperature) -> Vec<f64> {
    scaled_softmax(&record.logits, tau.value())
}

fn scaled_softmax(logits: &[f64], tau: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|z| z / tau).collect();
    softmax(&scaled)
}

/// Calibrated probability mass on `label`.
pub fn confidence_in(record: &PredictionRecord, tau: Temperature, label: Label) -> Result<f64> {
    if label.task() != record.task() {
        return Err(Error::InvalidLabel {
            label: label.to_string(),
            task: record.task(),
        });
    }
    Ok(apply_temperature(record, tau)[label.index()])
}

/// `-ln softmax(logits / tau)[gold]`, written as
/// `(max - z_gold) + ln(1 + sum over non-max of exp(z - max))` so that
/// confident records keep their tiny losses instead of rounding to zero.
fn gold_nll(logits: &[f64], gold: usize, tau: f64) -> f64 {
    let top = argmax(logits);
    let max = logits[top] / tau;
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, z)| (z / tau - max).exp())
        .sum();
    (max - logits[gold] / tau) + rest.ln_1p()
}

/// Mean negative log-likelihood of the gold labels at temperature `tau`.
pub fn mean_nll(records: &[PredictionRecord], tau: f64) -> f64 {
    let total: f64 = records
        .iter()
        .map(|r| gold_nll(&r.logits, r.gold.index(), tau))
        .sum();
    total / records.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemperatureFit {
    pub tau: Temperature,
    pub nll: f64,
    pub nll_at_identity: f64,
    pub records: usize,
    /// Every record had constant logits, so the temperature is irrelevant.
    pub degenerate: bool,
}

/// Fits the temperature minimizing mean gold NLL within `bounds`.
///
/// Golden-section search runs first; a grid scan at [`GRID_STEP`] then
/// checks for a better basin, and the bounds and `tau = 1` are always
/// considered as candidates.
pub fn fit_temperature(records: &[PredictionRecord], bounds: (f64, f64)) -> Result<TemperatureFit> {
    let (lo, hi) = bounds;
    if records.is_empty() {
        return Err(Error::Empty("calibration record set"));
    }
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
        return Err(Error::InvalidBounds { lo, hi });
    }
    for r in records {
        r.validate()?;
    }
    let nll_at_identity = mean_nll(records, 1.0);

    let degenerate = records
        .iter()
        .all(|r| r.logits.iter().all(|&z| z == r.logits[0]));
    if degenerate {
        return Ok(TemperatureFit {
            tau: Temperature::IDENTITY,
            nll: nll_at_identity,
            nll_at_identity,
            records: records.len(),
            degenerate: true,
        });
    }

    let f = |t: f64| mean_nll(records, t);
    let mut best = golden_section(&f, lo, hi, GOLDEN_TOLERANCE);

    let consider = |t: f64, best: &mut (f64, f64)| {
        let v = f(t);
        if v < best.1 {
            *best = (t, v);
        }
    };
    consider(lo, &mut best);
    consider(hi, &mut best);
    if (lo..=hi).contains(&1.0) {
        consider(1.0, &mut best);
    }

    let (grid_tau, grid_nll) = grid_minimum(&f, lo, hi, GRID_STEP);
    if grid_nll < best.1 {
        log::debug!("grid scan beat golden section ({grid_nll} < {}), refining", best.1);
        let refined = golden_section(
            &f,
            (grid_tau - GRID_STEP).max(lo),
            (grid_tau + GRID_STEP).min(hi),
            GOLDEN_TOLERANCE,
        );
        best = if refined.1 < grid_nll { refined } else { (grid_tau, grid_nll) };
    }

    Ok(TemperatureFit {
        tau: Temperature::new(best.0)?,
        nll: best.1,
        nll_at_identity,
        records: records.len(),
        degenerate: false,
    })
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn grid_minimum(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let steps = ((hi - lo) / step).floor() as usize;
    (0..=steps)
        .map(|i| lo + i as f64 * step)
        .map(|t| (t, f(t)))
        .fold((lo, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Key identifying one calibrated model: `(model_id, view)`.
pub type ModelKey = (String, InputView);

/// Fits one temperature per `(model_id, view)` group.
pub fn fit_per_model(
    records: &[PredictionRecord],
    bounds: (f64, f64),
) -> Result<BTreeMap<ModelKey, TemperatureFit>> {
    let mut groups: BTreeMap<ModelKey, Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.model_id.clone(), r.view))
            .or_default()
            .push(r.clone());
    }
    groups
        .into_iter()
        .map(|(k, recs)| fit_temperature(&recs, bounds).map(|fit| (k, fit)))
        .collect()
}

/// Reads prediction JSONL, failing on the first invalid line. A leading
/// metadata line is skipped; when it carries `label_order`, every record's
/// label set must match it.
pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    let mut label_order: Option<Vec<Label>> = None;
    let mut first = true;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::Malformed { line: i + 1, reason };
        if std::mem::take(&mut first) {
            if let Some(meta) = crate::meta::parse_meta_line(&line) {
                if let Some(order) = meta.get("label_order") {
                    label_order = Some(serde_json::from_value(order.clone()).map_err(|e| malformed(e.to_string()))?);
                }
                continue;
            }
        }
        let record: PredictionRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        record.validate().map_err(|e| malformed(e.to_string()))?;
        if let Some(order) = &label_order {
            if order.as_slice() != record.task().labels() {
                return Err(malformed(format!(
                    "header label order {order:?} differs from the canonical {} order",
                    record.task()
                )));
            }
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(mut out: W, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
