use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::calibration::PredictionRecord;
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub partial_neural_correct: bool,
    pub bow_full_correct: bool,
}

impl Provenance {
    pub fn any(self) -> bool {
        self.partial_neural_correct || self.bow_full_correct
    }
}

/// Instances that a partial-input or lexical full-input model already
/// labels correctly: the likeliest carriers of target-side artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCandidateSet")]
pub struct CandidateSet {
    pub dataset: String,
    members: BTreeMap<String, Provenance>,
}

#[derive(Deserialize)]
struct RawCandidateSet {
    dataset: String,
    members: BTreeMap<String, Provenance>,
}

impl TryFrom<RawCandidateSet> for CandidateSet {
    type Error = Error;

    fn try_from(raw: RawCandidateSet) -> Result<Self> {
        CandidateSet::from_members(raw.dataset, raw.members)
    }
}

impl CandidateSet {
    /// Rebuilds a set from stored members; each needs a provenance flag.
    pub fn from_members(
        dataset: impl Into<String>,
        members: impl IntoIterator<Item = (String, Provenance)>,
    ) -> Result<Self> {
        let members: BTreeMap<String, Provenance> = members.into_iter().collect();
        if let Some((id, _)) = members.iter().find(|(_, p)| !p.any()) {
            return Err(Error::InvalidRecord {
                id: id.clone(),
                reason: "candidate without a provenance flag".into(),
            });
        }
        Ok(CandidateSet {
            dataset: dataset.into(),
            members,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.members.contains_key(id)
    }

    pub fn provenance(&self, id: &str) -> Option<Provenance> {
        self.members.get(id).copied()
    }

    /// Member ids in sorted order.
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.members.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Provenance)> {
        self.members.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

fn index_by_id(records: &[PredictionRecord]) -> HashMap<&str, &PredictionRecord> {
    records.iter().map(|r| (r.instance_id.as_str(), r)).collect()
}

/// Selects every instance for which either model's argmax equals the gold
/// label recorded in `dataset`.
pub fn select_artifact_candidates(
    partial_neural: &[PredictionRecord],
    bow_full: &[PredictionRecord],
    dataset: &Dataset,
) -> Result<CandidateSet> {
    let partial = index_by_id(partial_neural);
    let bow = index_by_id(bow_full);

    let mut missing: Vec<String> = partial
        .keys()
        .filter(|id| !bow.contains_key(*id))
        .chain(bow.keys().filter(|id| !partial.contains_key(*id)))
        .chain(partial.keys().filter(|id| dataset.get(id).is_none()))
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::CoverageMismatch { missing });
    }

    let mut members = BTreeMap::new();
    for (id, p) in &partial {
        let gold = dataset.get(id).expect("coverage checked").gold;
        p.validate()?;
        let b = bow[id];
        b.validate()?;
        let prov = Provenance {
            partial_neural_correct: p.predicted() == gold,
            bow_full_correct: b.predicted() == gold,
        };
        if prov.any() {
            members.insert(id.to_string(), prov);
        }
    }
    Ok(CandidateSet {
        dataset: dataset.name().to_string(),
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{InputView, Instance, Label, Split, Task};

    fn ds() -> Dataset {
        let inst = |id: &str, gold| Instance {
            id: id.into(),
            task: Task::Nli,
            premise: "p".into(),
            hypothesis: "h".into(),
            update: None,
            gold,
            split: Split::Test,
        };
        Dataset::new(
            "t",
            Task::Nli,
            vec![inst("a", Label::Entailment), inst("b", Label::Neutral), inst("c", Label::Contradiction)],
        )
        .unwrap()
    }

    fn rec(id: &str, model: &str, predicted: usize) -> PredictionRecord {
        let mut logits = vec![0.0; 3];
        logits[predicted] = 1.0;
        PredictionRecord {
            instance_id: id.into(),
            model_id: model.into(),
            view: InputView::Partial,
            logits,
            gold: Label::Entailment,
        }
    }

    #[test]
    fn union_with_provenance() {
        let partial = vec![rec("a", "p", 0), rec("b", "p", 0), rec("c", "p", 0)];
        let bow = vec![rec("a", "b", 1), rec("b", "b", 1), rec("c", "b", 0)];
        let set = select_artifact_candidates(&partial, &bow, &ds()).unwrap();
        assert_eq!(set.ids().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(
            set.provenance("a"),
            Some(Provenance { partial_neural_correct: true, bow_full_correct: false })
        );
        assert_eq!(
            set.provenance("b"),
            Some(Provenance { partial_neural_correct: false, bow_full_correct: true })
        );
        assert!(!set.contains("c"));
    }

    #[test]
    fn coverage_mismatch_lists_ids() {
        let partial = vec![rec("a", "p", 0), rec("b", "p", 0)];
        let bow = vec![rec("a", "b", 0), rec("z", "b", 0)];
        match select_artifact_candidates(&partial, &bow, &ds()) {
            Err(Error::CoverageMismatch { missing }) => assert_eq!(missing, ["b", "z"]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
