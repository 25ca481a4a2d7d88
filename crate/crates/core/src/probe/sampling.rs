use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::candidates::CandidateSet;
use crate::data::{Dataset, Label, Task};
use crate::error::{Deficit, Error, Result};

/// Requested number of edits per directional `(l, l′)` cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quota {
    task: Task,
    cells: BTreeMap<(Label, Label), usize>,
}

impl Quota {
    /// The same count for every ordered pair of distinct labels.
    pub fn uniform(task: Task, per_cell: usize) -> Self {
        let mut cells = BTreeMap::new();
        for &l in task.labels() {
            for &t in task.labels() {
                if l != t {
                    cells.insert((l, t), per_cell);
                }
            }
        }
        Quota { task, cells }
    }

    /// 50 per directional pair for NLI (300 total), 150 per direction for
    /// defeasible NLI (300 total).
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Nli => Quota::uniform(task, 50),
            Task::DefeasibleNli => Quota::uniform(task, 150),
        }
    }

    pub fn set(&mut self, original: Label, target: Label, count: usize) -> Result<()> {
        if original.task() != self.task || target.task() != self.task || original == target {
            return Err(Error::InvalidParameter(format!(
                "{original}->{target} is not a {} directional pair",
                self.task
            )));
        }
        self.cells.insert((original, target), count);
        Ok(())
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn get(&self, original: Label, target: Label) -> usize {
        self.cells.get(&(original, target)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.cells.values().sum()
    }

    fn demand(&self, original: Label) -> usize {
        self.cells
            .iter()
            .filter(|((l, _), _)| *l == original)
            .map(|(_, n)| n)
            .sum()
    }
}

/// One instance chosen for editing, with the label the edit must induce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub instance_id: String,
    pub original_label: Label,
    pub target_label: Label,
}

/// Draws, without replacement, `quota` candidates per directional pair.
///
/// Candidates are grouped by gold label in id order, each group is shuffled
/// by a generator seeded with `seed`, and consecutive chunks are dealt to
/// the target labels in canonical order.
pub fn sample_for_editing(
    candidates: &CandidateSet,
    dataset: &Dataset,
    quota: &Quota,
    seed: u64,
) -> Result<Vec<Assignment>> {
    let task = quota.task();
    if dataset.task() != task {
        return Err(Error::InvalidParameter(format!(
            "quota is for {task} but dataset {} is {}",
            dataset.name(),
            dataset.task()
        )));
    }

    let mut pools: BTreeMap<Label, Vec<&str>> = BTreeMap::new();
    for id in candidates.ids() {
        let inst = dataset.get(id).ok_or_else(|| Error::CoverageMismatch {
            missing: vec![id.to_string()],
        })?;
        pools.entry(inst.gold).or_default().push(id);
    }

    let mut deficits = Vec::new();
    for &l in task.labels() {
        let available = pools.get(&l).map_or(0, Vec::len);
        if quota.demand(l) > available {
            for &t in task.labels().iter().filter(|&&t| t != l) {
                deficits.push(Deficit {
                    original: l,
                    target: t,
                    requested: quota.get(l, t),
                    available,
                });
            }
        }
    }
    if !deficits.is_empty() {
        return Err(Error::InsufficientCandidates(deficits));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(quota.total());
    for &l in task.labels() {
        let mut pool = pools.remove(&l).unwrap_or_default();
        pool.shuffle(&mut rng);
        let mut drawn = pool.into_iter();
        for &t in task.labels().iter().filter(|&&t| t != l) {
            for id in drawn.by_ref().take(quota.get(l, t)) {
                out.push(Assignment {
                    instance_id: id.to_string(),
                    original_label: l,
                    target_label: t,
                });
            }
        }
    }
    Ok(out)
}
