//! One function per subcommand. Each reads its inputs, writes artifacts
//! under the output directory and is idempotent for fixed inputs and seeds.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use ctxprobe_core::analytics::{
    confidence_shift_points, post_edit_shift_points, rekey_by_edit, render, stratified_accuracy, summary_accuracy,
    ternary_heatmap, Calibration, ShiftSet,
};
use ctxprobe_core::calibration::{apply_temperature, fit_per_model, read_predictions, write_predictions};
use ctxprobe_core::data::{parse_dataset, render_view_with, validate_split_sizes, ParseOptions, Parsed};
use ctxprobe_core::ngram::train_with_report;
use ctxprobe_core::probe::{
    cohen_kappa, import_edits, read_edited_set, sample_for_editing, select_artifact_candidates, write_edited_set,
    AgreementReport, CandidateSet, EditRegistry, EditedRecord, ImportFormat, ImportMapping,
};
use ctxprobe_core::{
    Dataset, InputView, Instance, Label, NgramModel, PredictionRecord, Split, Task, Temperature, TextField,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifact::{self, InputHash, Workspace, OUT_PREFIX, SIDECAR_SUFFIX};
use crate::config::{Config, DatasetConfig, EditsConfig};
use crate::error::{read_error, CliError, CliResult};

pub struct Ctx {
    pub cfg: Config,
    pub ws: Workspace,
}

impl Ctx {
    pub fn new(cfg: Config) -> Self {
        let ws = Workspace {
            base_dir: cfg.base_dir.clone(),
            out_dir: cfg.out_dir.clone(),
            seed: cfg.seed,
        };
        Ctx { cfg, ws }
    }
}

// Artifact locations, relative to the output directory.

fn ingest_rel(d: &str) -> String {
    format!("ingest/{d}.json")
}

fn edits_rel(e: &str) -> String {
    format!("edits/{e}.jsonl")
}

fn model_rel(d: &str, view: InputView) -> String {
    format!("bow/{d}.{view}.model")
}

fn bow_model_id(view: InputView) -> String {
    format!("bow-{view}")
}

fn bow_predictions_rel(name: &str, view: InputView) -> String {
    format!("predictions/{}/{name}.jsonl", bow_model_id(view))
}

fn calibration_rel(d: &str) -> String {
    format!("calibration/{d}.json")
}

fn candidates_rel(d: &str) -> String {
    format!("probe/{d}.candidates.json")
}

fn assignments_rel(d: &str) -> String {
    format!("probe/{d}.assignments.jsonl")
}

/// Model ids are free text; keep file names portable.
fn file_part(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

// Loading.

fn load_dataset(d: &DatasetConfig) -> CliResult<Parsed> {
    let file = File::open(&d.path.path).map_err(|e| read_error(&d.path.path, e))?;
    let parsed = parse_dataset(BufReader::new(file), &d.name, d.task, ParseOptions { strict: d.strict })
        .map_err(|e| CliError::data(format!("{}: {e}", d.path.label)))?;
    if !parsed.skipped.is_empty() {
        log::warn!("{}: skipped {} malformed lines", d.path.label, parsed.skipped.len());
    }
    Ok(parsed)
}

fn read_prediction_file(path: &Path, label: &str) -> CliResult<Vec<PredictionRecord>> {
    let file = File::open(path).map_err(|e| read_error(path, e))?;
    read_predictions(BufReader::new(file)).map_err(|e| CliError::data(format!("{label}: {e}")))
}

fn read_edits(ctx: &Ctx, e: &str) -> CliResult<(Vec<EditedRecord>, InputHash)> {
    let rel = edits_rel(e);
    let hash = ctx.ws.hash_artifact(&rel)?;
    let path = ctx.ws.out_path(&rel);
    let file = File::open(&path).map_err(|err| read_error(&path, err))?;
    let records = read_edited_set(BufReader::new(file)).map_err(|err| CliError::data(format!("{rel}: {err}")))?;
    Ok((records, hash))
}

fn read_artifact_json(ctx: &Ctx, rel: &str) -> CliResult<(Value, InputHash)> {
    let hash = ctx.ws.hash_artifact(rel)?;
    let path = ctx.ws.out_path(rel);
    let text = std::fs::read_to_string(&path).map_err(|e| read_error(&path, e))?;
    let value = serde_json::from_str(&text).map_err(|e| CliError::data(format!("{rel}: {e}")))?;
    Ok((value, hash))
}

/// The configured (externally produced) predictions for a dataset, with the
/// hashes of the files they came from.
fn configured_predictions(ctx: &Ctx, d: &str) -> CliResult<(Vec<PredictionRecord>, Vec<InputHash>)> {
    let mut records = Vec::new();
    let mut hashes = Vec::new();
    for p in ctx.cfg.predictions_for(d) {
        records.extend(read_prediction_file(&p.path.path, &p.path.label)?);
        hashes.push(ctx.ws.hash_input(&p.path)?);
    }
    Ok((records, hashes))
}

fn read_bow_predictions(ctx: &Ctx, name: &str, view: InputView) -> CliResult<(Vec<PredictionRecord>, InputHash)> {
    let rel = bow_predictions_rel(name, view);
    let hash = ctx.ws.hash_artifact(&rel)?;
    Ok((read_prediction_file(&ctx.ws.out_path(&rel), &rel)?, hash))
}

/// One model per view; two models sharing a view cannot be paired.
fn by_view(records: Vec<PredictionRecord>) -> CliResult<BTreeMap<InputView, (String, Vec<PredictionRecord>)>> {
    let mut out: BTreeMap<InputView, (String, Vec<PredictionRecord>)> = BTreeMap::new();
    for r in records {
        let entry = out.entry(r.view).or_insert_with(|| (r.model_id.clone(), Vec::new()));
        if entry.0 != r.model_id {
            return Err(CliError::usage(format!(
                "models {:?} and {:?} both provide {} predictions; configure one per view",
                entry.0, r.model_id, r.view
            )));
        }
        entry.1.push(r);
    }
    Ok(out)
}

fn by_model(records: Vec<PredictionRecord>) -> BTreeMap<(String, InputView), Vec<PredictionRecord>> {
    let mut out: BTreeMap<(String, InputView), Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        out.entry((r.model_id.clone(), r.view)).or_default().push(r);
    }
    out
}

fn in_split<'a>(records: &'a [PredictionRecord], ds: &'a Dataset, split: Split) -> Vec<PredictionRecord> {
    records
        .iter()
        .filter(|r| ds.get(&r.instance_id).is_some_and(|i| i.split == split))
        .cloned()
        .collect()
}

fn load_calibration(ctx: &Ctx, d: &str) -> CliResult<(Calibration, InputHash)> {
    let rel = calibration_rel(d);
    let (value, hash) = read_artifact_json(ctx, &rel)?;
    let bad = || CliError::data(format!("{rel}: malformed temperature table"));
    let mut calib = Calibration::raw();
    for t in value["temperatures"].as_array().ok_or_else(bad)? {
        let model = t["model_id"].as_str().ok_or_else(bad)?.to_string();
        let view: InputView = serde_json::from_value(t["view"].clone()).map_err(|_| bad())?;
        let tau = Temperature::new(t["tau"].as_f64().ok_or_else(bad)?)?;
        calib.insert((model, view), tau);
    }
    Ok((calib, hash))
}

fn predictions_jsonl(records: &[PredictionRecord]) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_predictions(&mut buf, records).map_err(|e| CliError::internal(e.to_string()))?;
    Ok(buf)
}

// Subcommands.

#[derive(Serialize)]
struct Skipped {
    line: usize,
    reason: String,
}

pub fn ingest(ctx: &Ctx) -> CliResult<()> {
    for d in ctx.cfg.datasets.values() {
        let parsed = load_dataset(d)?;
        let ds = &parsed.dataset;
        let counts = ds.split_counts();
        let check = d.expected.map(|e| validate_split_sizes(ds, e));
        println!(
            "{}: {} instances (train {}, valid {}, test {}), {} lines skipped",
            d.name,
            ds.len(),
            counts.train,
            counts.valid,
            counts.test,
            parsed.skipped.len()
        );
        if let Some(report) = &check {
            for c in &report.checks {
                let verdict = if c.pass { "ok" } else { "MISMATCH" };
                println!("  {:<5} expected {:>7} actual {:>7} {verdict}", c.split.as_str(), c.expected, c.actual);
            }
        }
        let meta = ctx.ws.meta(
            "ingest",
            json!({ "dataset": d.name, "task": d.task, "strict": d.strict, "separator": d.separator, "expected": d.expected }),
            vec![ctx.ws.hash_input(&d.path)?],
        );
        let skipped: Vec<Skipped> = parsed
            .skipped
            .iter()
            .map(|s| Skipped {
                line: s.line,
                reason: s.reason.clone(),
            })
            .collect();
        ctx.ws.write_json(
            &ingest_rel(&d.name),
            &meta,
            json!({
                "dataset": d.name,
                "task": d.task,
                "instances": ds.len(),
                "split_counts": counts,
                "skipped": skipped,
                "split_check": check,
            }),
        )?;
    }
    Ok(())
}

/// The fields an edit must leave untouched, compared with the original.
fn unedited_fields(task: Task) -> &'static [TextField] {
    match task {
        Task::Nli => &[TextField::Hypothesis],
        Task::DefeasibleNli => &[TextField::Premise, TextField::Update],
    }
}

fn record_field(r: &EditedRecord, f: TextField) -> Option<&str> {
    match f {
        TextField::Premise => Some(&r.premise),
        TextField::Hypothesis => Some(&r.hypothesis),
        TextField::Update => r.update.as_deref(),
    }
}

fn check_against_original(e: &EditsConfig, r: &EditedRecord, orig: &Instance) -> CliResult<()> {
    let fail = |m: String| Err(CliError::data(format!("{}: edit {}: {m}", e.path.label, r.edit_id)));
    if orig.gold != r.original_label {
        return fail(format!(
            "original label {} differs from the gold label {} of {}",
            r.original_label, orig.gold, orig.id
        ));
    }
    for &f in unedited_fields(r.task) {
        if record_field(r, f) != orig.field(f) {
            return fail(format!("{f} differs from original {} but only the context may change", orig.id));
        }
    }
    Ok(())
}

pub fn import_edit_sets(ctx: &Ctx) -> CliResult<()> {
    for e in ctx.cfg.edits.values() {
        let d = ctx.cfg.dataset(&e.dataset)?;
        let parsed = load_dataset(d)?;
        let mapping = ImportMapping {
            task: Some(d.task),
            id_prefix: format!("{}-", e.name),
            ..ImportMapping::default()
        };
        let file = File::open(&e.path.path).map_err(|err| read_error(&e.path.path, err))?;
        let records =
            import_edits(file, e.format, &mapping).map_err(|err| CliError::data(format!("{}: {err}", e.path.label)))?;
        let mut missing = 0;
        for r in &records {
            if r.task != d.task {
                return Err(CliError::data(format!("{}: edit {} is a {} edit", e.path.label, r.edit_id, r.task)));
            }
            match parsed.dataset.get(&r.original_id) {
                Some(orig) => check_against_original(e, r, orig)?,
                None => missing += 1,
            }
        }
        if missing > 0 {
            log::warn!("{}: {missing} edits refer to originals absent from {}", e.path.label, d.name);
        }
        let mut body = Vec::new();
        write_edited_set(&mut body, &records).map_err(|err| CliError::internal(err.to_string()))?;
        let format = match e.format {
            ImportFormat::Jsonl => "jsonl",
            ImportFormat::Csv => "csv",
            ImportFormat::Tsv => "tsv",
        };
        let meta = ctx.ws.meta(
            "import-edits",
            json!({ "edit_set": e.name, "dataset": d.name, "format": format, "records": records.len() }),
            vec![ctx.ws.hash_input(&e.path)?, ctx.ws.hash_input(&d.path)?],
        );
        ctx.ws.write_jsonl(&edits_rel(&e.name), &meta, &body)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ModelSidecar<'a> {
    dataset: &'a str,
    model_id: String,
    view: InputView,
    hyperparams: &'a ctxprobe_core::NgramHyperparams,
    train: ctxprobe_core::ngram::TrainReport,
}

pub fn train_bow(ctx: &Ctx) -> CliResult<()> {
    let hp = &ctx.cfg.bow.hyperparams;
    for d in ctx.cfg.datasets.values() {
        let parsed = load_dataset(d)?;
        for &view in &ctx.cfg.bow.views {
            let corpus = parsed
                .dataset
                .split(Split::Train)
                .map(|i| Ok((render_view_with(i, view, &d.separator)?.joined(), i.gold)))
                .collect::<ctxprobe_core::Result<Vec<_>>>()?;
            if corpus.is_empty() {
                return Err(CliError::data(format!("{}: train split is empty", d.name)));
            }
            let (model, report) =
                train_with_report(&corpus, hp).map_err(|e| CliError::data(format!("{} ({view}): {e}", d.name)))?;
            let meta = ctx.ws.meta(
                "train-bow",
                json!({ "dataset": d.name, "view": view, "separator": d.separator, "hyperparams": hp }),
                vec![ctx.ws.hash_input(&d.path)?],
            );
            let sidecar = ModelSidecar {
                dataset: &d.name,
                model_id: bow_model_id(view),
                view,
                hyperparams: hp,
                train: report,
            };
            ctx.ws.write_binary(&model_rel(&d.name, view), &meta, &model.to_bytes(), sidecar)?;
        }
    }
    Ok(())
}

fn predict_instances(
    model: &NgramModel,
    view: InputView,
    separator: &str,
    instances: impl Iterator<Item = Instance>,
) -> CliResult<Vec<PredictionRecord>> {
    let model_id = bow_model_id(view);
    instances
        .map(|inst| {
            let text = render_view_with(&inst, view, separator)?.joined();
            Ok(PredictionRecord {
                instance_id: inst.id,
                model_id: model_id.clone(),
                view,
                logits: model.scores(&text),
                gold: inst.gold,
            })
        })
        .collect()
}

pub fn predict_bow(ctx: &Ctx) -> CliResult<()> {
    for d in ctx.cfg.datasets.values() {
        let parsed = load_dataset(d)?;
        let edit_sets: Vec<&EditsConfig> = ctx.cfg.edits_for(&d.name).collect();
        let edits = edit_sets
            .iter()
            .map(|e| read_edits(ctx, &e.name))
            .collect::<CliResult<Vec<_>>>()?;
        for &view in &ctx.cfg.bow.views {
            let rel = model_rel(&d.name, view);
            let model_hash = ctx.ws.hash_artifact(&rel)?;
            let path = ctx.ws.out_path(&rel);
            let file = File::open(&path).map_err(|e| read_error(&path, e))?;
            let model = NgramModel::read_from(BufReader::new(file)).map_err(|e| CliError::data(format!("{rel}: {e}")))?;
            if model.task() != d.task {
                return Err(CliError::data(format!("{rel}: model is for {}, dataset is {}", model.task(), d.task)));
            }
            let params = |target: &str| json!({ "dataset": d.name, "target": target, "view": view, "model_id": bow_model_id(view) });

            let held_out = parsed.dataset.instances().iter().filter(|i| i.split != Split::Train).cloned();
            let records = predict_instances(&model, view, &d.separator, held_out)?;
            let mut meta = ctx.ws.meta(
                "predict-bow",
                params(&d.name),
                vec![model_hash.clone(), ctx.ws.hash_input(&d.path)?],
            );
            meta.label_order = Some(d.task.labels().to_vec());
            ctx.ws.write_jsonl(&bow_predictions_rel(&d.name, view), &meta, &predictions_jsonl(&records)?)?;

            for (e, (recs, hash)) in edit_sets.iter().zip(&edits) {
                let records = predict_instances(&model, view, &d.separator, recs.iter().map(EditedRecord::instance))?;
                let mut meta = ctx.ws.meta("predict-bow", params(&e.name), vec![model_hash.clone(), hash.clone()]);
                meta.label_order = Some(d.task.labels().to_vec());
                ctx.ws.write_jsonl(&bow_predictions_rel(&e.name, view), &meta, &predictions_jsonl(&records)?)?;
            }
        }
    }
    Ok(())
}

pub fn calibrate(ctx: &Ctx) -> CliResult<()> {
    for d in ctx.cfg.datasets.values() {
        let (records, mut inputs) = configured_predictions(ctx, &d.name)?;
        if records.is_empty() {
            log::info!("{}: no predictions configured, nothing to calibrate", d.name);
            continue;
        }
        let parsed = load_dataset(d)?;
        let valid = in_split(&records, &parsed.dataset, Split::Valid);
        if valid.is_empty() {
            return Err(CliError::data(format!("{}: no predictions on the validation split", d.name)));
        }
        let fits = fit_per_model(&valid, ctx.cfg.bounds)?;
        let temperatures: Vec<Value> = fits
            .iter()
            .map(|((model, view), fit)| {
                let (lo, hi) = ctx.cfg.bounds;
                let tau = fit.tau.value();
                let at_bound = !fit.degenerate && (tau <= lo || tau >= hi);
                if at_bound {
                    log::warn!("{} {model} ({view}): temperature {tau} sits on a search bound", d.name);
                }
                json!({
                    "at_bound": at_bound,
                    "model_id": model,
                    "view": view,
                    "tau": fit.tau.value(),
                    "nll": fit.nll,
                    "nll_at_identity": fit.nll_at_identity,
                    "records": fit.records,
                    "degenerate": fit.degenerate,
                })
            })
            .collect();
        inputs.push(ctx.ws.hash_input(&d.path)?);
        let meta = ctx.ws.meta(
            "calibrate",
            json!({ "dataset": d.name, "bounds": [ctx.cfg.bounds.0, ctx.cfg.bounds.1], "split": "valid" }),
            inputs,
        );
        ctx.ws.write_json(
            &calibration_rel(&d.name),
            &meta,
            json!({ "dataset": d.name, "temperatures": temperatures }),
        )?;
    }
    Ok(())
}

fn test_only(ds: &Dataset) -> CliResult<Dataset> {
    Ok(Dataset::new(ds.name(), ds.task(), ds.split(Split::Test).cloned().collect())?)
}

pub fn subselect(ctx: &Ctx) -> CliResult<()> {
    if !ctx.cfg.bow.views.contains(&InputView::Full) {
        return Err(CliError::usage("subselect needs a full-input BoW model; add \"full\" to [bow] views"));
    }
    for d in ctx.cfg.datasets.values() {
        let (records, mut inputs) = configured_predictions(ctx, &d.name)?;
        let parsed = load_dataset(d)?;
        let Some((partial_model, partial)) = by_view(in_split(&records, &parsed.dataset, Split::Test))?
            .remove(&InputView::Partial)
        else {
            log::info!("{}: no partial-input test predictions, skipping subselection", d.name);
            continue;
        };
        let (bow, bow_hash) = read_bow_predictions(ctx, &d.name, InputView::Full)?;
        let test = test_only(&parsed.dataset)?;
        let bow = in_split(&bow, &parsed.dataset, Split::Test);
        let set = select_artifact_candidates(&partial, &bow, &test)
            .map_err(|e| CliError::data(format!("{}: {e}", d.name)))?;
        let provs: Vec<_> = set.iter().map(|(_, p)| p).collect();
        let summary = json!({
            "test_instances": test.len(),
            "candidates": set.len(),
            "partial_neural_correct": provs.iter().filter(|p| p.partial_neural_correct).count(),
            "bow_full_correct": provs.iter().filter(|p| p.bow_full_correct).count(),
            "both": provs.iter().filter(|p| p.partial_neural_correct && p.bow_full_correct).count(),
        });
        println!("{}: {} of {} test instances are artifact candidates", d.name, set.len(), test.len());
        inputs.extend([bow_hash, ctx.ws.hash_input(&d.path)?]);
        let meta = ctx.ws.meta(
            "subselect",
            json!({ "dataset": d.name, "partial_model": partial_model, "bow_model": bow_model_id(InputView::Full) }),
            inputs,
        );
        let mut body = serde_json::to_value(&set).map_err(|e| CliError::internal(e.to_string()))?;
        body["summary"] = summary;
        ctx.ws.write_json(&candidates_rel(&d.name), &meta, body)?;
    }
    Ok(())
}

fn read_candidates(ctx: &Ctx, d: &str) -> CliResult<Option<(CandidateSet, InputHash)>> {
    let rel = candidates_rel(d);
    if !ctx.ws.out_path(&rel).is_file() {
        return Ok(None);
    }
    let (value, hash) = read_artifact_json(ctx, &rel)?;
    let stored = json!({ "dataset": value["dataset"], "members": value["members"] });
    let set = serde_json::from_value(stored).map_err(|e| CliError::data(format!("{rel}: {e}")))?;
    Ok(Some((set, hash)))
}

pub fn sample_edits(ctx: &Ctx, enqueue: bool) -> CliResult<()> {
    let mut registry = match (&ctx.cfg.registry, enqueue) {
        (Some(r), true) => Some(EditRegistry::open(&r.path, r.policy)?),
        (None, true) => return Err(CliError::usage("--enqueue needs a [registry] section")),
        (_, false) => None,
    };
    for d in ctx.cfg.datasets.values() {
        let Some((set, set_hash)) = read_candidates(ctx, &d.name)? else {
            continue;
        };
        let parsed = load_dataset(d)?;
        let quota = ctx.cfg.sampling.quota_for(d.task)?;
        let seed = ctx.cfg.sampling.seed;
        let assignments = sample_for_editing(&set, &parsed.dataset, &quota, seed)
            .map_err(|e| CliError::data(format!("{}: {e}", d.name)))?;
        let cells: Vec<Value> = d
            .task
            .labels()
            .iter()
            .flat_map(|&l| d.task.labels().iter().filter(move |&&t| t != l).map(move |&t| (l, t)))
            .map(|(l, t)| json!({ "original": l, "target": t, "count": quota.get(l, t) }))
            .collect();
        let meta = ctx.ws.meta(
            "sample-edits",
            json!({ "dataset": d.name, "quota": cells, "sampling_seed": seed }),
            vec![set_hash, ctx.ws.hash_input(&d.path)?],
        );
        let mut body = Vec::new();
        for a in &assignments {
            serde_json::to_writer(&mut body, a).map_err(|e| CliError::internal(e.to_string()))?;
            body.push(b'\n');
        }
        ctx.ws.write_jsonl(&assignments_rel(&d.name), &meta, &body)?;
        println!("{}: {} assignments drawn", d.name, assignments.len());
        if let Some(reg) = registry.as_mut() {
            reg.add_assignments(&assignments, &parsed.dataset)?;
        }
    }
    Ok(())
}

/// Prediction records for an edit set: configured files plus BoW output.
fn edited_predictions(ctx: &Ctx, e: &EditsConfig) -> CliResult<(Vec<PredictionRecord>, Vec<InputHash>)> {
    let mut records = Vec::new();
    let mut hashes = Vec::new();
    for p in &e.predictions {
        records.extend(read_prediction_file(&p.path, &p.label)?);
        hashes.push(ctx.ws.hash_input(p)?);
    }
    for &view in &ctx.cfg.bow.views {
        let (recs, hash) = read_bow_predictions(ctx, &e.name, view)?;
        records.extend(recs);
        hashes.push(hash);
    }
    Ok((records, hashes))
}

pub fn evaluate(ctx: &Ctx) -> CliResult<()> {
    for d in ctx.cfg.datasets.values() {
        let (mut records, mut inputs) = configured_predictions(ctx, &d.name)?;
        for &view in &ctx.cfg.bow.views {
            let (recs, hash) = read_bow_predictions(ctx, &d.name, view)?;
            records.extend(recs);
            inputs.push(hash);
        }
        let parsed = load_dataset(d)?;
        let test = in_split(&records, &parsed.dataset, Split::Test);
        if test.is_empty() {
            continue;
        }
        let rows = summary_accuracy(&test)?;
        inputs.push(ctx.ws.hash_input(&d.path)?);
        let meta = ctx.ws.meta("evaluate", json!({ "dataset": d.name, "split": "test" }), inputs);
        ctx.ws.write_csv(&format!("eval/{}.summary.csv", d.name), &meta, &render::summary_csv(&rows))?;
    }

    for e in ctx.cfg.edits.values() {
        let (edits, edits_hash) = read_edits(ctx, &e.name)?;
        let (records, mut inputs) = edited_predictions(ctx, e)?;
        inputs.push(edits_hash);
        let rows = summary_accuracy(&records)?;
        let meta = ctx.ws.meta("evaluate", json!({ "edit_set": e.name }), inputs.clone());
        ctx.ws.write_csv(&format!("eval/{}.summary.csv", e.name), &meta, &render::summary_csv(&rows))?;
        for ((model, view), recs) in by_model(records) {
            let matrix = stratified_accuracy(&recs, &edits)
                .map_err(|err| CliError::data(format!("{} / {model}: {err}", e.name)))?;
            let overall = matrix.overall();
            println!(
                "{} {model} ({view}): {}/{} correct on edited examples",
                e.name, overall.correct, overall.total
            );
            let stem = format!("eval/{}.{}.{view}", e.name, file_part(&model));
            let meta = ctx.ws.meta(
                "evaluate",
                json!({ "edit_set": e.name, "model_id": model, "view": view }),
                inputs.clone(),
            );
            ctx.ws.write_csv(&format!("{stem}.matrix.csv"), &meta, &render::accuracy_matrix_csv(&matrix))?;
            ctx.ws.write_csv(&format!("{stem}.grid.csv"), &meta, &render::accuracy_matrix_grid_csv(&matrix))?;
        }
    }
    Ok(())
}

fn calibrated_probabilities(record: &PredictionRecord, calib: &Calibration) -> Vec<f64> {
    apply_temperature(record, calib.get(record).unwrap_or(Temperature::IDENTITY))
}

fn write_shift(ctx: &Ctx, stem: &str, meta: &artifact::Meta, set: &ShiftSet, extra: Value, title: &str) -> CliResult<()> {
    let mut body = serde_json::to_value(set).map_err(|e| CliError::internal(e.to_string()))?;
    for (k, v) in extra.as_object().into_iter().flatten() {
        body[k] = v.clone();
    }
    ctx.ws.write_json(&format!("{stem}.json"), meta, body)?;
    ctx.ws.write_commented(&format!("{stem}.svg"), meta, &render::shift_scatter_svg(set, title))?;
    Ok(())
}

pub fn analyze(ctx: &Ctx) -> CliResult<()> {
    let (resolution, sigma) = (ctx.cfg.resolution, ctx.cfg.sigma);
    for d in ctx.cfg.datasets.values() {
        let (records, mut inputs) = configured_predictions(ctx, &d.name)?;
        if records.is_empty() {
            continue;
        }
        let parsed = load_dataset(d)?;
        let (calib, calib_hash) = load_calibration(ctx, &d.name)?;
        inputs.extend([calib_hash, ctx.ws.hash_input(&d.path)?]);
        let views = by_view(in_split(&records, &parsed.dataset, Split::Test))?;

        if let (Some((pm, partial)), Some((fm, full))) = (views.get(&InputView::Partial), views.get(&InputView::Full)) {
            let gold: BTreeMap<String, Label> =
                parsed.dataset.split(Split::Test).map(|i| (i.id.clone(), i.gold)).collect();
            let set = confidence_shift_points(partial, full, &gold, &calib)
                .map_err(|e| CliError::data(format!("{}: {e}", d.name)))?;
            let meta = ctx.ws.meta(
                "analyze",
                json!({ "dataset": d.name, "kind": "shift", "partial_model": pm, "full_model": fm }),
                inputs.clone(),
            );
            write_shift(
                ctx,
                &format!("analytics/{}.shift", d.name),
                &meta,
                &set,
                json!({ "dataset": d.name, "partial_model": pm, "full_model": fm }),
                &format!("{}: {pm} vs {fm}", d.name),
            )?;
        }

        if d.task == Task::Nli {
            for (view, (model, recs)) in &views {
                let points: Vec<[f64; 3]> = recs
                    .iter()
                    .map(|r| {
                        let p = calibrated_probabilities(r, &calib);
                        [p[0], p[1], p[2]]
                    })
                    .collect();
                let grid = ternary_heatmap(&points, resolution, sigma)?;
                let meta = ctx.ws.meta(
                    "analyze",
                    json!({ "dataset": d.name, "kind": "ternary", "model_id": model, "view": view, "resolution": resolution, "sigma": sigma }),
                    inputs.clone(),
                );
                let stem = format!("analytics/{}.ternary.{view}", d.name);
                let mut body = serde_json::to_value(&grid).map_err(|e| CliError::internal(e.to_string()))?;
                body["dataset"] = json!(d.name);
                body["model_id"] = json!(model);
                ctx.ws.write_json(&format!("{stem}.json"), &meta, body)?;
                ctx.ws.write_commented(
                    &format!("{stem}.svg"),
                    &meta,
                    &render::ternary_svg(&grid, &format!("{}: {model} ({view})", d.name)),
                )?;
            }
        }

        let full_by_model = by_model(records);
        for e in ctx.cfg.edits_for(&d.name) {
            let (edits, edits_hash) = read_edits(ctx, &e.name)?;
            let mut post_records = Vec::new();
            let mut post_inputs = Vec::new();
            for p in &e.predictions {
                post_records.extend(read_prediction_file(&p.path, &p.label)?);
                post_inputs.push(ctx.ws.hash_input(p)?);
            }
            for ((model, view), post) in by_model(post_records) {
                let Some(pre_on_originals) = full_by_model.get(&(model.clone(), view)) else {
                    log::warn!("{}: no predictions of {model} on the originals; skipping post-edit shifts", e.name);
                    continue;
                };
                let pre = rekey_by_edit(pre_on_originals, &edits);
                let covered: BTreeSet<&str> = pre.iter().map(|r| r.instance_id.as_str()).collect();
                let labels: BTreeMap<String, Label> = edits
                    .iter()
                    .filter(|r| covered.contains(r.edit_id.as_str()))
                    .map(|r| (r.edit_id.clone(), r.original_label))
                    .collect();
                if labels.len() < edits.len() {
                    log::warn!(
                        "{}: {} edits have no pre-edit prediction from {model}",
                        e.name,
                        edits.len() - labels.len()
                    );
                }
                let set = post_edit_shift_points(&pre, &post, &labels, &calib)
                    .map_err(|err| CliError::data(format!("{} / {model}: {err}", e.name)))?;
                let mut all_inputs = inputs.clone();
                all_inputs.extend(post_inputs.iter().cloned());
                all_inputs.push(edits_hash.clone());
                let meta = ctx.ws.meta(
                    "analyze",
                    json!({ "edit_set": e.name, "kind": "post_edit", "model_id": model, "view": view }),
                    all_inputs,
                );
                write_shift(
                    ctx,
                    &format!("analytics/{}.post_edit.{}", e.name, file_part(&model)),
                    &meta,
                    &set,
                    json!({ "edit_set": e.name, "model_id": model }),
                    &format!("{}: {model} before and after editing", e.name),
                )?;
            }
        }
    }
    Ok(())
}

/// Rater pairs from a CSV whose first two columns hold the labels.
pub fn read_pairs(path: &Path, task: Option<Task>) -> CliResult<Vec<(Label, Label)>> {
    let text = std::fs::read_to_string(path).map_err(|e| read_error(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    lines.next().ok_or_else(|| CliError::data(format!("{}: empty file", path.display())))?;
    let mut task = task;
    let mut pairs = Vec::new();
    for (i, line) in lines {
        let bad = |m: String| CliError::data(format!("{}:{}: {m}", path.display(), i + 1));
        let mut cols = line.split(',').map(str::trim);
        let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
            return Err(bad("expected two columns".into()));
        };
        let parse = |s: &str, task: &mut Option<Task>| -> CliResult<Label> {
            let l: Label = s.parse().map_err(|e| bad(format!("{e}")))?;
            let t = *task.get_or_insert(l.task());
            Label::parse_for(s, t).map_err(|e| bad(e.to_string()))
        };
        let a = parse(a, &mut task)?;
        let b = parse(b, &mut task)?;
        pairs.push((a, b));
    }
    Ok(pairs)
}

pub fn format_agreement(r: &AgreementReport) -> String {
    format!(
        "κ = {:.4} (p_o = {:.4}, p_e = {:.4}, n = {})",
        r.kappa, r.observed, r.expected, r.n
    )
}

pub fn kappa_from_pairs(path: &Path, task: Option<Task>) -> CliResult<AgreementReport> {
    let pairs = read_pairs(path, task)?;
    Ok(cohen_kappa(&pairs)?)
}

pub fn kappa_from_registry(ctx: &Ctx, task: Option<Task>) -> CliResult<Vec<(Task, AgreementReport)>> {
    let r = ctx
        .cfg
        .registry
        .as_ref()
        .ok_or_else(|| CliError::usage("no [registry] section; pass --pairs instead"))?;
    let registry = EditRegistry::open(&r.path, r.policy)?;
    let tasks: Vec<Task> = match task {
        Some(t) => vec![t],
        None => [Task::Nli, Task::DefeasibleNli]
            .into_iter()
            .filter(|t| registry.edits().any(|e| e.task() == *t))
            .collect(),
    };
    if tasks.is_empty() {
        return Err(CliError::data("the registry holds no edits"));
    }
    tasks
        .into_iter()
        .map(|t| Ok((t, registry.agreement(t).map_err(|e| CliError::data(format!("{t}: {e}")))?)))
        .collect()
}

const ARTIFACT_DIRS: &[&str] = &["ingest", "edits", "bow", "predictions", "calibration", "probe", "eval", "analytics"];

fn collect_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> CliResult<()> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Ok(());
    };
    for entry in entries {
        let path = entry.map_err(|e| read_error(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn relative(ws: &Workspace, path: &Path) -> String {
    path.strip_prefix(&ws.out_dir)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

struct Artifact {
    rel: String,
    meta: artifact::Meta,
}

/// Every artifact under the output directory with its header, failing when
/// any recorded input has changed since the artifact was written.
fn verified_artifacts(ws: &Workspace) -> CliResult<Vec<Artifact>> {
    let mut files = Vec::new();
    for d in ARTIFACT_DIRS {
        collect_files(&ws.out_dir.join(d), &mut files)?;
    }
    let mut rels: Vec<(String, std::path::PathBuf)> = files.into_iter().map(|p| (relative(ws, &p), p)).collect();
    rels.sort();
    let names: BTreeSet<&str> = rels.iter().map(|(r, _)| r.as_str()).collect();

    let mut stale = Vec::new();
    let mut artifacts = Vec::new();
    for (rel, path) in &rels {
        let meta = match artifact::read_meta(path)? {
            Some(m) => m,
            None if names.contains(format!("{rel}{SIDECAR_SUFFIX}").as_str()) => continue,
            None => {
                stale.push(format!("{OUT_PREFIX}{rel}: no metadata"));
                continue;
            }
        };
        for s in artifact::stale_inputs(ws, &meta) {
            stale.push(format!("{OUT_PREFIX}{rel}: {s}"));
        }
        artifacts.push(Artifact { rel: rel.clone(), meta });
    }
    if !stale.is_empty() {
        return Err(CliError::data(format!(
            "stale artifacts; rerun the pipeline:\n  {}",
            stale.join("\n  ")
        )));
    }
    if artifacts.is_empty() {
        return Err(CliError::data(format!("no artifacts under {}", ws.out_dir.display())));
    }
    Ok(artifacts)
}

fn csv_as_markdown(csv: &str) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
        if i == 0 {
            out.push_str(&format!("|{}\n", "---|".repeat(cells.len())));
        }
    }
    out
}

fn read_out(ws: &Workspace, rel: &str) -> CliResult<String> {
    let path = ws.out_path(rel);
    std::fs::read_to_string(&path).map_err(|e| read_error(&path, e))
}

fn read_out_json(ws: &Workspace, rel: &str) -> CliResult<Value> {
    serde_json::from_str(&read_out(ws, rel)?).map_err(|e| CliError::data(format!("{rel}: {e}")))
}

fn summary_markdown(ws: &Workspace, artifacts: &[Artifact]) -> CliResult<String> {
    use std::fmt::Write as _;
    let with = |prefix: &str, suffix: &str| -> Vec<&str> {
        artifacts
            .iter()
            .map(|a| a.rel.as_str())
            .filter(|r| r.starts_with(prefix) && r.ends_with(suffix))
            .collect()
    };
    let mut md = String::from("# ctxprobe report\n\n");
    let _ = writeln!(md, "Seed {}, tool version {}.\n", ws.seed, env!("CARGO_PKG_VERSION"));

    md.push_str("## Datasets\n\n| dataset | task | instances | train | valid | test | skipped | split check |\n|---|---|---|---|---|---|---|---|\n");
    for rel in with("ingest/", ".json") {
        let v = read_out_json(ws, rel)?;
        let c = &v["split_counts"];
        let check = match v["split_check"]["checks"].as_array() {
            None => "n/a".to_string(),
            Some(cs) if cs.iter().all(|c| c["pass"] == json!(true)) => "pass".into(),
            Some(_) => "FAIL".into(),
        };
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} | {check} |",
            v["dataset"].as_str().unwrap_or("?"),
            v["task"].as_str().unwrap_or("?"),
            v["instances"],
            c["train"],
            c["valid"],
            c["test"],
            v["skipped"].as_array().map_or(0, Vec::len)
        );
    }

    md.push_str("\n## Calibration\n\n| dataset | model | view | tau | NLL at 1 | NLL at tau |\n|---|---|---|---|---|---|\n");
    for rel in with("calibration/", ".json") {
        let v = read_out_json(ws, rel)?;
        for t in v["temperatures"].as_array().into_iter().flatten() {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {:.4} | {:.4} | {:.4} |",
                v["dataset"].as_str().unwrap_or("?"),
                t["model_id"].as_str().unwrap_or("?"),
                t["view"].as_str().unwrap_or("?"),
                t["tau"].as_f64().unwrap_or(f64::NAN),
                t["nll_at_identity"].as_f64().unwrap_or(f64::NAN),
                t["nll"].as_f64().unwrap_or(f64::NAN)
            );
        }
    }

    md.push_str("\n## Accuracy\n");
    for rel in with("eval/", ".summary.csv") {
        let name = rel.trim_start_matches("eval/").trim_end_matches(".summary.csv");
        let _ = writeln!(md, "\n### {name}\n");
        md.push_str(&csv_as_markdown(artifact::csv_body(&read_out(ws, rel)?)));
    }

    md.push_str("\n## Edited sets by original (rows) and target (columns) label\n");
    for rel in with("eval/", ".grid.csv") {
        let name = rel.trim_start_matches("eval/").trim_end_matches(".grid.csv");
        let _ = writeln!(md, "\n### {name}\n");
        md.push_str(&csv_as_markdown(artifact::csv_body(&read_out(ws, rel)?)));
    }

    md.push_str("\n## Confidence shifts\n\n| plot | n | below | on | above | high-high | high-low | low-high | low-low |\n|---|---|---|---|---|---|---|---|---|\n");
    let mut shifts = with("analytics/", ".shift.json");
    shifts.extend(
        artifacts
            .iter()
            .map(|a| a.rel.as_str())
            .filter(|r| r.starts_with("analytics/") && r.contains(".post_edit.") && r.ends_with(".json")),
    );
    for rel in shifts {
        let s = read_out_json(ws, rel)?["summary"].clone();
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            rel.trim_start_matches("analytics/").trim_end_matches(".json"),
            s["n"],
            s["below_diagonal"],
            s["on_diagonal"],
            s["above_diagonal"],
            s["high_high"],
            s["high_low"],
            s["low_high"],
            s["low_low"]
        );
    }

    md.push_str("\n## Artifact candidates\n\n| dataset | test instances | candidates | partial correct | BoW correct | both |\n|---|---|---|---|---|---|\n");
    for rel in with("probe/", ".candidates.json") {
        let v = read_out_json(ws, rel)?;
        let s = &v["summary"];
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} |",
            v["dataset"].as_str().unwrap_or("?"),
            s["test_instances"],
            s["candidates"],
            s["partial_neural_correct"],
            s["bow_full_correct"],
            s["both"]
        );
    }
    Ok(md)
}

pub fn report(ctx: &Ctx) -> CliResult<()> {
    let ws = &ctx.ws;
    let artifacts = verified_artifacts(ws)?;
    let inputs = artifacts
        .iter()
        .map(|a| ws.hash_artifact(&a.rel))
        .collect::<CliResult<Vec<_>>>()?;
    let manifest: Vec<Value> = artifacts
        .iter()
        .zip(&inputs)
        .map(|(a, h)| json!({ "path": h.path, "sha256": h.sha256, "command": a.meta.command }))
        .collect();
    let meta = ws.meta("report", json!({}), inputs);
    ws.write_json("report/manifest.json", &meta, json!({ "artifacts": manifest }))?;
    ws.write_commented("report/summary.md", &meta, &summary_markdown(ws, &artifacts)?)?;
    println!("report: {} artifacts verified", artifacts.len());
    Ok(())
}

pub fn pipeline(ctx: &Ctx) -> CliResult<()> {
    ingest(ctx)?;
    import_edit_sets(ctx)?;
    train_bow(ctx)?;
    predict_bow(ctx)?;
    calibrate(ctx)?;
    subselect(ctx)?;
    sample_edits(ctx, false)?;
    evaluate(ctx)?;
    analyze(ctx)?;
    report(ctx)
}
