//! Declarative pipeline configuration, read from a TOML file.
//!
//! Relative paths resolve against the directory holding the config file.
//! Every run needs an explicit seed, from the file or from `--seed`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ctxprobe_core::calibration::DEFAULT_BOUNDS;
use ctxprobe_core::data::{known_sizes, SplitCounts, DEFAULT_CONTEXT_SEPARATOR};
use ctxprobe_core::probe::{ImportFormat, Quota, ValidationPolicy};
use ctxprobe_core::{InputView, Label, NgramHyperparams, Task};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const DEFAULT_CONFIG: &str = "ctxprobe.toml";
pub const DEFAULT_SERVE_ADDR: &str = "127.0.0.1:8080";
/// Environment override for the serve address; no other setting reads the
/// environment.
pub const SERVE_ADDR_ENV: &str = "CTXPROBE_SERVE_ADDR";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    out_dir: Option<String>,
    seed: Option<u64>,
    datasets: BTreeMap<String, RawDataset>,
    #[serde(default)]
    predictions: Vec<RawPredictions>,
    #[serde(default)]
    edits: BTreeMap<String, RawEdits>,
    #[serde(default)]
    bow: RawBow,
    #[serde(default)]
    calibration: RawCalibration,
    #[serde(default)]
    sampling: RawSampling,
    #[serde(default)]
    analytics: RawAnalytics,
    registry: Option<RawRegistry>,
    #[serde(default)]
    serve: RawServe,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    task: String,
    path: String,
    #[serde(default)]
    strict: bool,
    expected: Option<RawExpected>,
    separator: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawExpected {
    Known(String),
    Counts { train: usize, valid: usize, test: usize },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPredictions {
    dataset: String,
    path: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdits {
    dataset: String,
    path: String,
    format: Option<String>,
    #[serde(default)]
    predictions: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBow {
    views: Option<Vec<InputView>>,
    max_n: Option<usize>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    embedding_dim: Option<usize>,
    bucket_count: Option<u64>,
    workers: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCalibration {
    lo: Option<f64>,
    hi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampling {
    per_cell: Option<usize>,
    seed: Option<u64>,
    /// Keys look like `"entailment->neutral"`.
    #[serde(default)]
    quota: BTreeMap<String, usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalytics {
    resolution: Option<usize>,
    sigma: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegistry {
    path: String,
    panel: Option<usize>,
    min_agree: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawServe {
    address: Option<String>,
}

/// An input file: where it is and how artifacts refer to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputPath {
    pub path: PathBuf,
    /// The path as written in the config, used in metadata so artifacts do
    /// not depend on where the workspace lives.
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub name: String,
    pub task: Task,
    pub path: InputPath,
    pub strict: bool,
    pub expected: Option<SplitCounts>,
    pub separator: String,
}

#[derive(Debug, Clone)]
pub struct PredictionsConfig {
    pub dataset: String,
    pub path: InputPath,
}

#[derive(Debug, Clone)]
pub struct EditsConfig {
    pub name: String,
    pub dataset: String,
    pub path: InputPath,
    pub format: ImportFormat,
    pub predictions: Vec<InputPath>,
}

#[derive(Debug, Clone)]
pub struct BowConfig {
    pub views: Vec<InputView>,
    pub hyperparams: NgramHyperparams,
}

#[derive(Debug, Clone)]
pub struct SamplingConfig {
    pub per_cell: Option<usize>,
    pub seed: u64,
    pub quota: Vec<(Label, Label, usize)>,
}

impl SamplingConfig {
    pub fn quota_for(&self, task: Task) -> CliResult<Quota> {
        let mut q = match self.per_cell {
            Some(n) => Quota::uniform(task, n),
            None => Quota::default_for(task),
        };
        for &(l, t, n) in self.quota.iter().filter(|(l, _, _)| l.task() == task) {
            q.set(l, t, n).map_err(|e| CliError::usage(e.to_string()))?;
        }
        Ok(q)
    }
}

#[derive(Debug, Clone)]
pub struct RegistryConfig {
    pub path: PathBuf,
    pub policy: ValidationPolicy,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub datasets: BTreeMap<String, DatasetConfig>,
    pub predictions: Vec<PredictionsConfig>,
    pub edits: BTreeMap<String, EditsConfig>,
    pub bow: BowConfig,
    pub bounds: (f64, f64),
    pub sampling: SamplingConfig,
    pub resolution: usize,
    pub sigma: f64,
    pub registry: Option<RegistryConfig>,
    pub serve_address: String,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn resolve(base: &Path, raw: &str, what: &str, must_exist: bool) -> CliResult<InputPath> {
    let path = base.join(raw);
    if must_exist && !path.is_file() {
        return Err(CliError::usage(format!("{what} {raw:?} not found at {}", path.display())));
    }
    Ok(InputPath {
        path,
        label: raw.replace('\\', "/"),
    })
}

fn sanitize_name(kind: &str, name: &str) -> CliResult<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "{kind} name {name:?} may only contain ASCII letters, digits, '-' and '_'"
        )))
    }
}

fn parse_quota_key(key: &str) -> CliResult<(Label, Label)> {
    let (l, t) = key
        .split_once("->")
        .ok_or_else(|| CliError::usage(format!("quota key {key:?} is not of the form \"l->t\"")))?;
    let bad = |e: ctxprobe_core::Error| CliError::usage(format!("quota key {key:?}: {e}"));
    let l: Label = l.parse().map_err(bad)?;
    let t = Label::parse_for(t, l.task()).map_err(bad)?;
    Ok((l, t))
}

impl Config {
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")), overrides)
            .map_err(|e| match e {
                CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
                other => other,
            })
    }

    pub fn parse(text: &str, base_dir: &Path, overrides: &Overrides) -> CliResult<Config> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::usage(e.to_string()))?;
        let base = if base_dir.as_os_str().is_empty() { Path::new(".") } else { base_dir };

        let seed = overrides
            .seed
            .or(raw.seed)
            .ok_or_else(|| CliError::usage("no seed: set `seed` in the config or pass --seed"))?;
        let out_dir = match (&overrides.out_dir, &raw.out_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => base.join(o),
            (None, None) => base.join("out"),
        };

        let mut datasets = BTreeMap::new();
        for (name, d) in raw.datasets {
            sanitize_name("dataset", &name)?;
            let task: Task = d.task.parse().map_err(|e| CliError::usage(format!("dataset {name}: {e}")))?;
            let expected = match d.expected {
                None => None,
                Some(RawExpected::Counts { train, valid, test }) => Some(SplitCounts::new(train, valid, test)),
                Some(RawExpected::Known(k)) => Some(
                    known_sizes::lookup(&k)
                        .ok_or_else(|| CliError::usage(format!("dataset {name}: no known split sizes for {k:?}")))?,
                ),
            };
            let path = resolve(base, &d.path, "dataset file", true)?;
            datasets.insert(
                name.clone(),
                DatasetConfig {
                    name,
                    task,
                    path,
                    strict: d.strict,
                    expected,
                    separator: d.separator.unwrap_or_else(|| DEFAULT_CONTEXT_SEPARATOR.to_string()),
                },
            );
        }
        if datasets.is_empty() {
            return Err(CliError::usage("no datasets configured"));
        }
        let known = |kind: &str, d: &str| {
            if datasets.contains_key(d) {
                Ok(())
            } else {
                Err(CliError::usage(format!("{kind} refers to unknown dataset {d:?}")))
            }
        };

        let mut predictions = Vec::new();
        for p in raw.predictions {
            known("prediction file", &p.dataset)?;
            predictions.push(PredictionsConfig {
                path: resolve(base, &p.path, "prediction file", true)?,
                dataset: p.dataset,
            });
        }

        let mut edits = BTreeMap::new();
        for (name, e) in raw.edits {
            sanitize_name("edit set", &name)?;
            if datasets.contains_key(&name) {
                return Err(CliError::usage(format!("edit set {name:?} shares its name with a dataset")));
            }
            known(&format!("edit set {name}"), &e.dataset)?;
            let path = resolve(base, &e.path, "edit file", true)?;
            let format = match e.format.as_deref() {
                None => ImportFormat::from_extension(&path.path)
                    .ok_or_else(|| CliError::usage(format!("edit set {name}: cannot infer format; set `format`")))?,
                Some("jsonl") => ImportFormat::Jsonl,
                Some("csv") => ImportFormat::Csv,
                Some("tsv") => ImportFormat::Tsv,
                Some(other) => return Err(CliError::usage(format!("edit set {name}: unknown format {other:?}"))),
            };
            let predictions = e
                .predictions
                .iter()
                .map(|p| resolve(base, p, "prediction file", true))
                .collect::<CliResult<_>>()?;
            edits.insert(
                name.clone(),
                EditsConfig {
                    name,
                    dataset: e.dataset,
                    path,
                    format,
                    predictions,
                },
            );
        }

        let defaults = NgramHyperparams::default();
        let hyperparams = NgramHyperparams {
            max_n: raw.bow.max_n.unwrap_or(defaults.max_n),
            epochs: raw.bow.epochs.unwrap_or(defaults.epochs),
            learning_rate: raw.bow.learning_rate.unwrap_or(defaults.learning_rate),
            embedding_dim: raw.bow.embedding_dim.unwrap_or(defaults.embedding_dim),
            bucket_count: raw.bow.bucket_count.unwrap_or(defaults.bucket_count),
            workers: raw.bow.workers.unwrap_or(defaults.workers),
            seed: raw.bow.seed.unwrap_or(seed),
        };
        hyperparams.validate().map_err(|e| CliError::usage(format!("[bow]: {e}")))?;
        let mut views = raw.bow.views.unwrap_or_else(|| vec![InputView::Full]);
        views.sort();
        views.dedup();

        let bounds = (
            raw.calibration.lo.unwrap_or(DEFAULT_BOUNDS.0),
            raw.calibration.hi.unwrap_or(DEFAULT_BOUNDS.1),
        );
        if !(bounds.0 > 0.0 && bounds.0 < bounds.1 && bounds.1.is_finite()) {
            return Err(CliError::usage(format!("[calibration]: invalid bounds {bounds:?}")));
        }

        let quota = raw
            .sampling
            .quota
            .iter()
            .map(|(k, &n)| parse_quota_key(k).map(|(l, t)| (l, t, n)))
            .collect::<CliResult<_>>()?;

        let registry = raw
            .registry
            .map(|r| -> CliResult<RegistryConfig> {
                let policy = ValidationPolicy::new(r.min_agree.unwrap_or(1), r.panel.unwrap_or(1))
                    .map_err(|e| CliError::usage(format!("[registry]: {e}")))?;
                Ok(RegistryConfig {
                    path: base.join(r.path),
                    policy,
                })
            })
            .transpose()?;

        let resolution = raw.analytics.resolution.unwrap_or(ctxprobe_core::analytics::DEFAULT_RESOLUTION);
        let sigma = raw.analytics.sigma.unwrap_or(ctxprobe_core::analytics::DEFAULT_SIGMA);
        if resolution < 2 || !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(CliError::usage("[analytics]: resolution must be >= 2 and sigma >= 0"));
        }

        Ok(Config {
            base_dir: base.to_path_buf(),
            out_dir,
            seed,
            datasets,
            predictions,
            edits,
            bow: BowConfig { views, hyperparams },
            bounds,
            sampling: SamplingConfig {
                per_cell: raw.sampling.per_cell,
                seed: raw.sampling.seed.unwrap_or(seed),
                quota,
            },
            resolution,
            sigma,
            registry,
            serve_address: raw.serve.address.unwrap_or_else(|| DEFAULT_SERVE_ADDR.to_string()),
        })
    }

    pub fn dataset(&self, name: &str) -> CliResult<&DatasetConfig> {
        self.datasets
            .get(name)
            .ok_or_else(|| CliError::usage(format!("unknown dataset {name:?}")))
    }

    pub fn predictions_for<'a>(&'a self, dataset: &'a str) -> impl Iterator<Item = &'a PredictionsConfig> + 'a {
        self.predictions.iter().filter(move |p| p.dataset == dataset)
    }

    pub fn edits_for<'a>(&'a self, dataset: &'a str) -> impl Iterator<Item = &'a EditsConfig> + 'a {
        self.edits.values().filter(move |e| e.dataset == dataset)
    }

    /// The serve address: environment first, then the config file.
    pub fn serve_address(&self) -> String {
        std::env::var(SERVE_ADDR_ENV).unwrap_or_else(|_| self.serve_address.clone())
    }
}
