use std::collections::{BTreeMap, BTreeSet};

use ctxprobe_core::data::decompose;
use ctxprobe_core::probe::{
    cohen_kappa, register_edit, sample_for_editing, select_artifact_candidates, EditRegistry, EditStatus,
    ValidationOutcome, ValidationPolicy,
};
use ctxprobe_core::probe::Quota;
use ctxprobe_core::{Dataset, Error, InputView, Instance, Label, PredictionRecord, Split, Task, TextField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nli_instance(i: usize, gold: Label) -> Instance {
    Instance {
        id: format!("s{i:05}"),
        task: Task::Nli,
        premise: format!("Premise number {i}."),
        hypothesis: format!("Hypothesis number {i}."),
        update: None,
        gold,
        split: Split::Train,
    }
}

fn dnli_instance(i: usize, gold: Label) -> Instance {
    Instance {
        id: format!("d{i:05}"),
        task: Task::DefeasibleNli,
        premise: format!("A premise {i}."),
        hypothesis: format!("A hypothesis {i}."),
        update: Some(format!("An update {i}.")),
        gold,
        split: Split::Train,
    }
}

fn prediction(id: &str, view: InputView, predicted: Label, gold: Label) -> PredictionRecord {
    let mut logits = vec![0.0; gold.task().arity()];
    logits[predicted.index()] = 2.0;
    PredictionRecord {
        instance_id: id.into(),
        model_id: if view == InputView::Partial { "roberta" } else { "bow" }.into(),
        view,
        logits,
        gold,
    }
}

struct Synthetic {
    dataset: Dataset,
    partial: Vec<PredictionRecord>,
    bow: Vec<PredictionRecord>,
}

fn synthetic(n: usize, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = Task::Nli.labels();
    let pick = |rng: &mut ChaCha8Rng| labels[rng.gen_range(0..3)];
    let mut instances = Vec::new();
    let mut partial = Vec::new();
    let mut bow = Vec::new();
    for i in 0..n {
        let gold = pick(&mut rng);
        let inst = nli_instance(i, gold);
        partial.push(prediction(&inst.id, InputView::Partial, pick(&mut rng), gold));
        bow.push(prediction(&inst.id, InputView::Full, pick(&mut rng), gold));
        instances.push(inst);
    }
    Synthetic {
        dataset: Dataset::new("synthetic", Task::Nli, instances).unwrap(),
        partial,
        bow,
    }
}

/// Union by explicit index loop over argmax equality.
fn brute_union(s: &Synthetic) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (p, b) in s.partial.iter().zip(&s.bow) {
        let gold = s.dataset.get(&p.instance_id).unwrap().gold.index();
        let arg = |z: &[f64]| {
            let mut best = 0;
            for k in 1..z.len() {
                if z[k] > z[best] {
                    best = k;
                }
            }
            best
        };
        if arg(&p.logits) == gold || arg(&b.logits) == gold {
            out.insert(p.instance_id.clone());
        }
    }
    out
}

#[test]
fn subselection_equals_brute_force_union() {
    for seed in 0..5 {
        let s = synthetic(1000, seed);
        let set = select_artifact_candidates(&s.partial, &s.bow, &s.dataset).unwrap();
        let got: BTreeSet<String> = set.ids().map(str::to_string).collect();
        assert_eq!(got, brute_union(&s));
        for (id, prov) in set.iter() {
            assert!(prov.any());
            let gold = s.dataset.get(id).unwrap().gold;
            let p = s.partial.iter().find(|r| r.instance_id == id).unwrap();
            assert_eq!(prov.partial_neural_correct, p.predicted() == gold);
        }
    }
}

#[test]
fn subselection_definitions() {
    let ds = Dataset::new(
        "tiny",
        Task::Nli,
        vec![nli_instance(0, Label::Entailment), nli_instance(1, Label::Neutral)],
    )
    .unwrap();
    let partial = vec![
        prediction("s00000", InputView::Partial, Label::Entailment, Label::Entailment),
        prediction("s00001", InputView::Partial, Label::Entailment, Label::Neutral),
    ];
    let bow = vec![
        prediction("s00000", InputView::Full, Label::Neutral, Label::Entailment),
        prediction("s00001", InputView::Full, Label::Contradiction, Label::Neutral),
    ];
    let set = select_artifact_candidates(&partial, &bow, &ds).unwrap();
    assert_eq!(set.len(), 1);
    let prov = set.provenance("s00000").unwrap();
    assert!(prov.partial_neural_correct && !prov.bow_full_correct);
    assert!(!set.contains("s00001"));

    let err = select_artifact_candidates(&partial[..1], &bow, &ds).unwrap_err();
    match err {
        Error::CoverageMismatch { missing } => assert_eq!(missing, ["s00001"]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn subselection_is_monotone() {
    let mut s = synthetic(300, 7);
    let before: BTreeSet<String> = select_artifact_candidates(&s.partial, &s.bow, &s.dataset)
        .unwrap()
        .ids()
        .map(str::to_string)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let k = rng.gen_range(0..s.bow.len());
        let gold = s.bow[k].gold;
        let id = s.bow[k].instance_id.clone();
        s.bow[k] = prediction(&id, InputView::Full, gold, gold);
    }
    let after: BTreeSet<String> = select_artifact_candidates(&s.partial, &s.bow, &s.dataset)
        .unwrap()
        .ids()
        .map(str::to_string)
        .collect();
    assert!(before.is_subset(&after));
}

fn all_candidates(ds: &Dataset) -> ctxprobe_core::probe::CandidateSet {
    let preds: Vec<_> = ds
        .instances()
        .iter()
        .map(|i| prediction(&i.id, InputView::Partial, i.gold, i.gold))
        .collect();
    select_artifact_candidates(&preds, &preds, ds).unwrap()
}

fn labelled_dataset(task: Task, per_label: usize) -> Dataset {
    let mut instances = Vec::new();
    for (k, &l) in task.labels().iter().enumerate() {
        for j in 0..per_label {
            let i = k * per_label + j;
            instances.push(match task {
                Task::Nli => nli_instance(i, l),
                Task::DefeasibleNli => dnli_instance(i, l),
            });
        }
    }
    Dataset::new("pool", task, instances).unwrap()
}

#[test]
fn default_quotas_fill_every_cell() {
    for (task, per_label, per_cell) in [(Task::Nli, 120, 50), (Task::DefeasibleNli, 200, 150)] {
        let ds = labelled_dataset(task, per_label);
        let cands = all_candidates(&ds);
        let quota = Quota::default_for(task);
        let out = sample_for_editing(&cands, &ds, &quota, 42).unwrap();
        assert_eq!(out.len(), 300);
        let mut cells: BTreeMap<(Label, Label), usize> = BTreeMap::new();
        for a in &out {
            assert_ne!(a.original_label, a.target_label);
            assert_eq!(ds.get(&a.instance_id).unwrap().gold, a.original_label);
            *cells.entry((a.original_label, a.target_label)).or_default() += 1;
        }
        assert!(cells.values().all(|&n| n == per_cell), "{cells:?}");
        let unique: BTreeSet<_> = out.iter().map(|a| &a.instance_id).collect();
        assert_eq!(unique.len(), out.len());
    }
}

#[test]
fn sampling_is_seeded() {
    let ds = labelled_dataset(Task::Nli, 120);
    let cands = all_candidates(&ds);
    let q = Quota::default_for(Task::Nli);
    let a = sample_for_editing(&cands, &ds, &q, 5).unwrap();
    assert_eq!(a, sample_for_editing(&cands, &ds, &q, 5).unwrap());
    assert_ne!(a, sample_for_editing(&cands, &ds, &q, 6).unwrap());
    assert!(sample_for_editing(&cands, &ds, &Quota::uniform(Task::Nli, 0), 5).unwrap().is_empty());
}

#[test]
fn sampling_reports_deficits() {
    let ds = labelled_dataset(Task::DefeasibleNli, 100);
    let cands = all_candidates(&ds);
    match sample_for_editing(&cands, &ds, &Quota::default_for(Task::DefeasibleNli), 1) {
        Err(Error::InsufficientCandidates(deficits)) => {
            assert_eq!(deficits.len(), 2);
            assert!(deficits.iter().all(|d| d.requested == 150 && d.available == 100));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn edits_hold_target_constant() {
    let orig = nli_instance(3, Label::Entailment);
    let edit = register_edit("e1", &orig, Label::Contradiction, "Nobody is here.", "ed", None).unwrap();
    assert_eq!(edit.edited_field, TextField::Premise);
    assert_eq!(edit.status, EditStatus::Draft);
    let after = decompose(&edit.edited_instance()).unwrap();
    assert_eq!(after.target, decompose(&orig).unwrap().target);
    assert_eq!(after.context, "Nobody is here.");

    let d = dnli_instance(1, Label::Strengthener);
    let edit = register_edit("e2", &d, Label::Weakener, "A different hypothesis.", "ed", None).unwrap();
    assert_eq!(edit.edited_field, TextField::Hypothesis);
    assert_eq!(edit.edited_instance().update, d.update);

    assert!(register_edit("e3", &orig, Label::Contradiction, &orig.premise, "ed", None).is_err());
    assert!(register_edit("e3", &orig, Label::Entailment, "New text.", "ed", None).is_err());
    assert!(register_edit("e3", &orig, Label::Neutral, "New text.", "ed", Some(TextField::Hypothesis)).is_err());
    assert!(register_edit("e3", &orig, Label::Weakener, "New text.", "ed", None).is_err());
}

proptest! {
    #[test]
    fn any_accepted_edit_keeps_target_bytes(text in "\\PC{1,40}", dnli in any::<bool>()) {
        let (orig, target) = if dnli {
            (dnli_instance(0, Label::Weakener), Label::Strengthener)
        } else {
            (nli_instance(0, Label::Neutral), Label::Entailment)
        };
        if let Ok(edit) = register_edit("p", &orig, target, &text, "ed", None) {
            prop_assert_eq!(decompose(&edit.edited_instance()).unwrap().target, decompose(&orig).unwrap().target);
            prop_assert!(edit.check_invariants().is_ok());
        }
    }

    #[test]
    fn kappa_is_bounded(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..200)) {
        let labels = Task::Nli.labels();
        let pairs: Vec<_> = pairs.into_iter().map(|(a, b)| (labels[a], labels[b])).collect();
        let r = cohen_kappa(&pairs).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r.kappa));
        if r.observed == 1.0 {
            prop_assert_eq!(r.kappa, 1.0);
        }
    }
}

#[test]
fn kappa_reference_values() {
    let (a, b) = (Label::Strengthener, Label::Weakener);
    let mut pairs = Vec::new();
    pairs.extend(std::iter::repeat_n((a, a), 40));
    pairs.extend(std::iter::repeat_n((a, b), 10));
    pairs.extend(std::iter::repeat_n((b, a), 10));
    pairs.extend(std::iter::repeat_n((b, b), 40));
    let r = cohen_kappa(&pairs).unwrap();
    assert!((r.observed - 0.8).abs() < 1e-12);
    assert!((r.expected - 0.5).abs() < 1e-12);
    assert!((r.kappa - 0.6).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let labels = Task::Nli.labels();
    let same: Vec<_> = (0..500).map(|_| labels[rng.gen_range(0..3)]).map(|l| (l, l)).collect();
    assert_eq!(cohen_kappa(&same).unwrap().kappa, 1.0);
    let random: Vec<_> = (0..10_000)
        .map(|_| (labels[rng.gen_range(0..3)], labels[rng.gen_range(0..3)]))
        .collect();
    assert!(cohen_kappa(&random).unwrap().kappa.abs() < 0.05);
    assert!(cohen_kappa(&[]).is_err());
}

#[test]
fn registry_lifecycle_and_blindness() {
    let ds = labelled_dataset(Task::Nli, 4);
    let cands = all_candidates(&ds);
    let assignments = sample_for_editing(&cands, &ds, &Quota::uniform(Task::Nli, 1), 3).unwrap();
    let mut reg = EditRegistry::in_memory(ValidationPolicy::default());
    reg.add_assignments(&assignments, &ds).unwrap();

    let item = reg.next_editor_item().unwrap();
    let edit = reg
        .register(&item.instance.id, item.target_label, "A rewritten premise.", "alice", None)
        .unwrap();
    let json = serde_json::to_value(reg.next_validator_item("bob").unwrap()).unwrap();
    let keys: BTreeSet<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    assert!(!keys.iter().any(|k| k.contains("label") && *k != "choices"), "{keys:?}");
    assert!(reg.next_validator_item("alice").is_none(), "editors do not validate their own edits");

    let (e, _) = reg.record_validation(&edit.edit_id, "alice", edit.target_label, 1).unwrap();
    assert_eq!(e.status, EditStatus::Draft, "self-validation does not count");
    let (e, out) = reg.record_validation(&edit.edit_id, "bob", edit.target_label, 2).unwrap();
    assert_eq!((e.status, out), (EditStatus::Validated, ValidationOutcome::Recorded));
    let (_, out) = reg.record_validation(&edit.edit_id, "bob", edit.target_label, 3).unwrap();
    assert_eq!(out, ValidationOutcome::Duplicate);
    assert!(reg.record_validation(&edit.edit_id, "bob", edit.original_label, 4).is_err());
    assert!(reg.record_validation("edit-999999", "bob", edit.target_label, 5).is_err());

    let item = reg.next_editor_item().unwrap();
    let second = reg
        .register(&item.instance.id, item.target_label, "Another premise.", "alice", None)
        .unwrap();
    let (e, _) = reg.record_validation(&second.edit_id, "bob", second.original_label, 6).unwrap();
    assert_eq!(e.status, EditStatus::Rejected);

    assert_eq!(reg.export(false).len(), 1);
    assert_eq!(reg.export(true).len(), 2);
    let report = reg.agreement(Task::Nli).unwrap();
    assert_eq!(report.n, 2);
}

#[test]
fn registry_persists_across_reopen() {
    let dir = std::env::temp_dir().join(format!("ctxprobe-registry-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("registry.json");
    let _ = std::fs::remove_file(&path);

    let ds = labelled_dataset(Task::DefeasibleNli, 3);
    let cands = all_candidates(&ds);
    let assignments = sample_for_editing(&cands, &ds, &Quota::uniform(Task::DefeasibleNli, 1), 0).unwrap();
    let id = {
        let mut reg = EditRegistry::open(&path, ValidationPolicy::default()).unwrap();
        reg.add_assignments(&assignments, &ds).unwrap();
        let a = &assignments[0];
        let e = reg.register(&a.instance_id, a.target_label, "Rewritten.", "ed", None).unwrap();
        reg.record_validation(&e.edit_id, "val", a.target_label, 10).unwrap();
        e.edit_id
    };
    let reg = EditRegistry::open(&path, ValidationPolicy::default()).unwrap();
    assert_eq!(reg.get(&id).unwrap().status, EditStatus::Validated);
    assert_eq!(reg.assignments().len(), 2);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn k_of_n_policy() {
    let orig = nli_instance(0, Label::Neutral);
    let policy = ValidationPolicy::new(2, 3).unwrap();
    let mut e = register_edit("e", &orig, Label::Entailment, "Changed.", "ed", None).unwrap();
    e.add_validation("v1", Label::Entailment, 0, policy).unwrap();
    assert_eq!(e.status, EditStatus::Draft);
    e.add_validation("v2", Label::Neutral, 0, policy).unwrap();
    assert_eq!(e.status, EditStatus::Draft);
    e.add_validation("v3", Label::Entailment, 0, policy).unwrap();
    assert_eq!(e.status, EditStatus::Validated);

    let mut e = register_edit("f", &orig, Label::Entailment, "Changed.", "ed", None).unwrap();
    e.add_validation("v1", Label::Neutral, 0, policy).unwrap();
    e.add_validation("v2", Label::Contradiction, 0, policy).unwrap();
    assert_eq!(e.status, EditStatus::Rejected);
    assert!(ValidationPolicy::new(3, 2).is_err());
}

#[test]
fn candidate_sets_round_trip_through_json() {
    let s = synthetic(50, 3);
    let set = select_artifact_candidates(&s.partial, &s.bow, &s.dataset).unwrap();
    let json = serde_json::to_string(&set).unwrap();
    let back: ctxprobe_core::probe::CandidateSet = serde_json::from_str(&json).unwrap();
    assert_eq!(back, set);
    let bad = r#"{"dataset":"x","members":{"a":{"partial_neural_correct":false,"bow_full_correct":false}}}"#;
    assert!(serde_json::from_str::<ctxprobe_core::probe::CandidateSet>(bad).is_err());
}
