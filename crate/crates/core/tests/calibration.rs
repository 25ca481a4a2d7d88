use ctxprobe_core::calibration::{
    apply_temperature, argmax, confidence_in, fit_temperature, mean_nll, read_predictions, softmax, write_predictions,
    DEFAULT_BOUNDS, GRID_STEP,
};
use ctxprobe_core::{InputView, Label, PredictionRecord, Task, Temperature};
use proptest::prelude::*;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(id: usize, logits: Vec<f64>, gold: Label) -> PredictionRecord {
    PredictionRecord {
        instance_id: format!("i{id}"),
        model_id: "m".into(),
        view: InputView::Full,
        logits,
        gold,
    }
}

/// Logits drawn at random; gold labels sampled from `softmax(logits)`, so
/// the source is calibrated at tau = 1. The returned logits are multiplied
/// by `scale`, which moves the optimal temperature to `scale`.
fn family(n: usize, scale: f64, seed: u64) -> Vec<PredictionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let logits: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let gold = WeightedIndex::new(softmax(&logits)).unwrap().sample(&mut rng);
            record(i, logits.iter().map(|z| z * scale).collect(), Task::Nli.labels()[gold])
        })
        .collect()
}

fn grid_oracle(records: &[PredictionRecord]) -> f64 {
    (0..=375)
        .map(|i| 0.25 + i as f64 * 0.01)
        .map(|t| (t, mean_nll(records, t)))
        .fold((f64::NAN, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
        .0
}

fn check_family(scale: f64, tolerance: f64, seed: u64) {
    let records = family(4000, scale, seed);
    let fit = fit_temperature(&records, DEFAULT_BOUNDS).unwrap();
    let tau = fit.tau.value();
    let oracle = grid_oracle(&records);
    assert!((tau - oracle).abs() <= GRID_STEP + 1e-9, "tau {tau} vs grid {oracle}");
    assert!((tau - scale).abs() <= tolerance, "tau {tau} for scale {scale}");
    assert!(fit.nll <= fit.nll_at_identity + 1e-9);
}

#[test]
fn calibrated_source_fits_identity() {
    check_family(1.0, 0.05, 1);
}

#[test]
fn doubled_logits_fit_two() {
    check_family(2.0, 0.1, 2);
}

#[test]
fn halved_logits_fit_one_half() {
    check_family(0.5, 0.05, 3);
}

#[test]
fn softmax_reference_examples() {
    let r = record(0, vec![2.0, 0.0, 0.0], Label::Entailment);
    let p = apply_temperature(&r, Temperature::IDENTITY);
    for (got, want) in p.iter().zip([0.7870, 0.1065, 0.1065]) {
        assert!((got - want).abs() < 1e-3);
    }
    let flat = apply_temperature(&r, Temperature::new(1e6).unwrap());
    assert!(flat.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-3));

    let r = record(0, vec![10.0, 0.0, 0.0], Label::Entailment);
    let c = confidence_in(&r, Temperature::IDENTITY, Label::Entailment).unwrap();
    assert!((c - 0.99991).abs() < 1e-5);

    let r = record(0, vec![0.7, 0.7, 0.7], Label::Neutral);
    assert_eq!(confidence_in(&r, Temperature::IDENTITY, Label::Neutral).unwrap(), 1.0 / 3.0);
}

#[test]
fn argmax_invariance_on_random_records() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..10_000 {
        let arity = if i % 2 == 0 { 3 } else { 2 };
        let logits: Vec<f64> = (0..arity).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let gold = Task::from_arity(arity).unwrap().labels()[0];
        let r = record(i, logits, gold);
        let tau = Temperature::new(rng.gen_range(0.01..100.0)).unwrap();
        assert_eq!(argmax(&apply_temperature(&r, tau)), argmax(&r.logits));
    }
}

#[test]
fn degenerate_records_return_identity_with_flag() {
    let records: Vec<_> = (0..5).map(|i| record(i, vec![1.5; 3], Label::Neutral)).collect();
    let fit = fit_temperature(&records, DEFAULT_BOUNDS).unwrap();
    assert!(fit.degenerate);
    assert_eq!(fit.tau, Temperature::IDENTITY);
}

#[test]
fn empty_and_bad_inputs_are_errors() {
    assert!(fit_temperature(&[], DEFAULT_BOUNDS).is_err());
    let r = vec![record(0, vec![1.0, 0.0, 0.0], Label::Entailment)];
    assert!(fit_temperature(&r, (2.0, 1.0)).is_err());
    assert!(fit_temperature(&r, (0.0, 1.0)).is_err());
    assert!(Temperature::new(0.0).is_err());
    assert!(Temperature::new(-1.0).is_err());
    let short = vec![record(0, vec![1.0, 0.0], Label::Entailment)];
    assert!(fit_temperature(&short, DEFAULT_BOUNDS).is_err());
}

#[test]
fn prediction_jsonl_round_trip() {
    let records = family(50, 1.0, 4);
    let mut buf = Vec::new();
    write_predictions(&mut buf, &records).unwrap();
    assert_eq!(read_predictions(buf.as_slice()).unwrap(), records);
    let line = r#"{"instance_id":"x","model_id":"roberta","view":"partial","logits":[0.1,-0.2],"gold":"weakener"}"#;
    let parsed = read_predictions(line.as_bytes()).unwrap();
    assert_eq!(parsed[0].view, InputView::Partial);
    assert_eq!(parsed[0].gold, Label::Weakener);
}

proptest! {
    #[test]
    fn fitted_nll_never_worse_than_identity(
        rows in prop::collection::vec((prop::array::uniform3(-15.0f64..15.0), 0usize..3), 1..40)
    ) {
        let records: Vec<_> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (z, g))| record(i, z.to_vec(), Task::Nli.labels()[g]))
            .collect();
        let fit = fit_temperature(&records, DEFAULT_BOUNDS).unwrap();
        prop_assert!(fit.nll <= mean_nll(&records, 1.0) + 1e-9);
        prop_assert!((fit.nll - mean_nll(&records, fit.tau.value())).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant(z in prop::array::uniform3(-50.0f64..50.0), c in -1e3f64..1e3, tau in 0.05f64..10.0) {
        let a = record(0, z.to_vec(), Label::Entailment);
        let b = record(0, z.iter().map(|v| v + c).collect(), Label::Entailment);
        let t = Temperature::new(tau).unwrap();
        let pa = apply_temperature(&a, t);
        let pb = apply_temperature(&b, t);
        prop_assert!((pa.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (x, y) in pa.iter().zip(&pb) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn prediction_header_is_checked() {
    let body = r#"{"instance_id":"x","model_id":"m","view":"full","logits":[0.1,0.2,0.3],"gold":"neutral"}"#;
    let good = format!("{}\n{body}\n", r#"{"_meta":{"label_order":["entailment","neutral","contradiction"]}}"#);
    assert_eq!(read_predictions(good.as_bytes()).unwrap().len(), 1);
    let bad = format!("{}\n{body}\n", r#"{"_meta":{"label_order":["contradiction","neutral","entailment"]}}"#);
    assert!(read_predictions(bad.as_bytes()).is_err());
}
