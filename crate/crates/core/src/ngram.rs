//! Hashed bag-of-word-n-grams linear classifier.
//!
//! Each text is tokenized, every contiguous word n-gram of length
//! `1..=max_n` is hashed into one of `bucket_count` embedding rows, and the
//! mean of those rows feeds a softmax layer. Training is plain SGD on the
//! cross-entropy loss with a learning rate that decays linearly to zero.
//!
//! The embedding table is logically `bucket_count x embedding_dim`, but rows
//! are only materialized once training touches them. An untouched row holds
//! its seeded initial value, which is regenerated on demand, so prediction
//! is identical to a dense table.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Label, Task};
use crate::error::{Error, Result};

/// Joins the tokens of an n-gram before hashing.
pub const NGRAM_SEPARATOR: char = '\x1f';

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

const MODEL_MAGIC: &[u8; 8] = b"CTXNGRAM";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramHyperparams {
    pub max_n: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub embedding_dim: usize,
    pub bucket_count: u64,
    pub seed: u64,
    /// Number of training workers. `1` is bit-reproducible; more workers
    /// train shards independently and average parameters after every epoch.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    1
}

impl Default for NgramHyperparams {
    fn default() -> Self {
        NgramHyperparams {
            max_n: 4,
            epochs: 5,
            learning_rate: 0.1,
            embedding_dim: 100,
            bucket_count: 2_000_000,
            seed: 0,
            workers: 1,
        }
    }
}

impl NgramHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.max_n == 0 {
            return bad("max_n must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be at least 1");
        }
        if self.bucket_count == 0 {
            return bad("bucket_count must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        Ok(())
    }
}

/// Lowercases, splits on Unicode whitespace and trims punctuation from both
/// ends of each token. Tokens that end up empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| raw.trim_matches(is_punctuation).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'..='\u{201f}' | '\u{2010}'..='\u{2015}' | '\u{2026}' | '\u{00ab}' | '\u{00bb}' | '\u{00bf}' | '\u{00a1}'
        )
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn hash_ngram(tokens: &[String]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut buf = [0u8; 4];
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 {
            for &b in NGRAM_SEPARATOR.encode_utf8(&mut buf).as_bytes() {
                h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
            }
        }
        for &b in tok.as_bytes() {
            h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// Hashed ids of every word n-gram of length `1..=max_n`, unigrams first.
pub fn featurize(text: &str, max_n: usize, bucket_count: u64) -> Vec<u64> {
    let tokens = tokenize(text);
    featurize_tokens(&tokens, max_n, bucket_count)
}

pub fn featurize_tokens(tokens: &[String], max_n: usize, bucket_count: u64) -> Vec<u64> {
    let mut out = Vec::new();
    for n in 1..=max_n.min(tokens.len()) {
        for window in tokens.windows(n) {
            out.push(hash_ngram(window) % bucket_count);
        }
    }
    out
}

/// Collapses a feature multiset into sorted `(id, count)` pairs.
fn aggregate(features: &[u64]) -> Vec<(u64, u32)> {
    let mut counts: BTreeMap<u64, u32> = BTreeMap::new();
    for &f in features {
        *counts.entry(f).or_default() += 1;
    }
    counts.into_iter().collect()
}

#[derive(Debug, Clone)]
struct EmbeddingTable {
    dim: usize,
    seed: u64,
    index: HashMap<u64, usize>,
    keys: Vec<u64>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    fn new(dim: usize, seed: u64) -> Self {
        EmbeddingTable {
            dim,
            seed,
            index: HashMap::new(),
            keys: Vec::new(),
            data: Vec::new(),
        }
    }

    fn init_row(&self, bucket: u64, out: &mut [f32]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ bucket.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let bound = 1.0 / self.dim as f32;
        for v in out.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
    }

    fn row(&self, bucket: u64) -> Option<&[f32]> {
        self.index
            .get(&bucket)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    fn row_mut(&mut self, bucket: u64) -> &mut [f32] {
        let dim = self.dim;
        let slot = match self.index.get(&bucket) {
            Some(&i) => i,
            None => {
                let i = self.keys.len();
                let mut fresh = vec![0.0f32; dim];
                self.init_row(bucket, &mut fresh);
                self.data.extend_from_slice(&fresh);
                self.keys.push(bucket);
                self.index.insert(bucket, i);
                i
            }
        };
        &mut self.data[slot * dim..(slot + 1) * dim]
    }

    /// `out += scale * row(bucket)`, regenerating untouched rows.
    fn accumulate(&self, bucket: u64, scale: f64, out: &mut [f64], scratch: &mut [f32]) {
        let row = match self.row(bucket) {
            Some(r) => r,
            None => {
                self.init_row(bucket, scratch);
                &*scratch
            }
        };
        for (o, &v) in out.iter_mut().zip(row) {
            *o += scale * v as f64;
        }
    }

    fn sorted_keys(&self) -> Vec<u64> {
        let mut keys = self.keys.clone();
        keys.sort_unstable();
        keys
    }
}

// Logical equality: materialization order does not matter.
impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.seed == other.seed
            && self.keys.len() == other.keys.len()
            && self.keys.iter().all(|&k| {
                other
                    .row(k)
                    .zip(self.row(k))
                    .is_some_and(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()))
            })
    }
}

/// Trained classifier parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    hyperparams: NgramHyperparams,
    task: Task,
    input: EmbeddingTable,
    /// `arity x dim`, row-major, rows in canonical label order.
    output: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub examples: usize,
    pub skipped_empty: usize,
    pub epochs: Vec<EpochStats>,
}

/// Output of one SGD step, for loss bookkeeping.
struct Step {
    loss: f64,
}

impl NgramModel {
    fn fresh(hp: &NgramHyperparams, task: Task) -> Self {
        NgramModel {
            hyperparams: hp.clone(),
            task,
            input: EmbeddingTable::new(hp.embedding_dim, hp.seed),
            output: vec![0.0; task.arity() * hp.embedding_dim],
        }
    }

    pub fn hyperparams(&self) -> &NgramHyperparams {
        &self.hyperparams
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn labels(&self) -> &'static [Label] {
        self.task.labels()
    }

    /// Number of embedding rows moved away from their initial value.
    pub fn touched_rows(&self) -> usize {
        self.input.keys.len()
    }

    pub fn featurize(&self, text: &str) -> Vec<u64> {
        featurize(text, self.hyperparams.max_n, self.hyperparams.bucket_count)
    }

    fn hidden(&self, feats: &[(u64, u32)], total: u32) -> Vec<f64> {
        let dim = self.hyperparams.embedding_dim;
        let mut hidden = vec![0.0f64; dim];
        if total == 0 {
            return hidden;
        }
        let mut scratch = vec![0.0f32; dim];
        for &(id, count) in feats {
            self.input.accumulate(id, count as f64, &mut hidden, &mut scratch);
        }
        let inv = 1.0 / total as f64;
        hidden.iter_mut().for_each(|h| *h *= inv);
        hidden
    }

    fn logits(&self, hidden: &[f64]) -> Vec<f64> {
        self.output
            .chunks_exact(self.hyperparams.embedding_dim)
            .map(|w| w.iter().zip(hidden).map(|(&a, &b)| a as f64 * b).sum())
            .collect()
    }

    /// Pre-softmax scores for a pre-hashed feature multiset.
    pub fn scores_features(&self, features: &[u64]) -> Vec<f64> {
        let feats = aggregate(features);
        let hidden = self.hidden(&feats, features.len() as u32);
        self.logits(&hidden)
    }

    /// Pre-softmax scores per label in canonical order; these are the
    /// logits written to prediction files.
    pub fn scores(&self, text: &str) -> Vec<f64> {
        self.scores_features(&self.featurize(text))
    }

    /// Class distribution for a pre-hashed feature multiset.
    pub fn predict_features(&self, features: &[u64]) -> Vec<f64> {
        crate::calibration::softmax(&self.scores_features(features))
    }

    /// Probability per label in canonical order.
    pub fn predict(&self, text: &str) -> Vec<f64> {
        self.predict_features(&self.featurize(text))
    }

    /// Most probable label; ties go to the lowest canonical index.
    pub fn predict_label(&self, text: &str) -> Label {
        let probs = self.predict(text);
        self.task
            .label_at(crate::calibration::argmax(&probs))
            .expect("distribution length matches arity")
    }

    fn sgd_step(&mut self, feats: &[(u64, u32)], total: u32, gold: usize, lr: f64) -> Step {
        let dim = self.hyperparams.embedding_dim;
        let hidden = self.hidden(feats, total);
        let probs = crate::calibration::softmax(&self.logits(&hidden));
        let loss = -probs[gold].max(f64::MIN_POSITIVE).ln();

        let mut grad = vec![0.0f64; dim];
        for (j, w) in self.output.chunks_exact_mut(dim).enumerate() {
            let target = if j == gold { 1.0 } else { 0.0 };
            let alpha = lr * (target - probs[j]);
            for ((g, wv), &h) in grad.iter_mut().zip(w.iter_mut()).zip(&hidden) {
                *g += alpha * *wv as f64;
                *wv += (alpha * h) as f32;
            }
        }
        let inv = 1.0 / total as f64;
        for &(id, count) in feats {
            let scale = count as f64 * inv;
            let row = self.input.row_mut(id);
            for (r, &g) in row.iter_mut().zip(&grad) {
                *r += (g * scale) as f32;
            }
        }
        Step { loss }
    }

    /// One pass over pre-featurized `examples`. The learning rate decays
    /// linearly in `progress`, which starts at `start` and grows by `stride`
    /// per update.
    fn run_epoch(&mut self, examples: &[Example], epoch: usize, start: f64, stride: f64) -> Result<f64> {
        let lr0 = self.hyperparams.learning_rate;
        let mut loss_sum = 0.0;
        for (step, ex) in examples.iter().enumerate() {
            let progress = start + step as f64 * stride;
            let lr = lr0 * (1.0 - progress);
            let out = self.sgd_step(&ex.features, ex.total, ex.gold, lr);
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            loss_sum += out.loss;
        }
        Ok(if examples.is_empty() {
            0.0
        } else {
            loss_sum / examples.len() as f64
        })
    }

    /// Element-wise mean of worker replicas trained from `self`.
    fn average_from(&mut self, replicas: &[NgramModel]) {
        let n = replicas.len() as f64;
        let dim = self.hyperparams.embedding_dim;
        let mut keys: Vec<u64> = replicas.iter().flat_map(|r| r.input.keys.iter().copied()).collect();
        keys.sort_unstable();
        keys.dedup();
        let mut scratch = vec![0.0f32; dim];
        for key in keys {
            let mut acc = vec![0.0f64; dim];
            for r in replicas {
                r.input.accumulate(key, 1.0, &mut acc, &mut scratch);
            }
            let row = self.input.row_mut(key);
            for (dst, a) in row.iter_mut().zip(acc) {
                *dst = (a / n) as f32;
            }
        }
        for (i, w) in self.output.iter_mut().enumerate() {
            let sum: f64 = replicas.iter().map(|r| r.output[i] as f64).sum();
            *w = (sum / n) as f32;
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::to_vec(&ModelHeader {
            hyperparams: self.hyperparams.clone(),
            task: self.task,
            labels: self.labels().to_vec(),
            rows: self.input.keys.len() as u64,
        })?;
        out.write_all(MODEL_MAGIC)?;
        out.write_all(&MODEL_VERSION.to_le_bytes())?;
        out.write_all(&(header.len() as u64).to_le_bytes())?;
        out.write_all(&header)?;
        for key in self.input.sorted_keys() {
            out.write_all(&key.to_le_bytes())?;
            for v in self.input.row(key).expect("key from table") {
                out.write_all(&v.to_bits().to_le_bytes())?;
            }
        }
        for v in &self.output {
            out.write_all(&v.to_bits().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::ModelFormat("bad magic".into()));
        }
        let version = read_u32(&mut input)?;
        if version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let header_len = read_u64(&mut input)? as usize;
        let mut header = vec![0u8; header_len];
        input.read_exact(&mut header)?;
        let header: ModelHeader = serde_json::from_slice(&header)?;
        header.hyperparams.validate()?;
        if header.labels != header.task.labels() {
            return Err(Error::ModelFormat("label order does not match task".into()));
        }
        let hp = header.hyperparams;
        let dim = hp.embedding_dim;
        let mut model = NgramModel::fresh(&hp, header.task);
        for _ in 0..header.rows {
            let key = read_u64(&mut input)?;
            if key >= hp.bucket_count {
                return Err(Error::ModelFormat(format!("row {key} outside bucket range")));
            }
            let i = model.input.keys.len();
            model.input.keys.push(key);
            model.input.index.insert(key, i);
            for _ in 0..dim {
                model.input.data.push(f32::from_bits(read_u32(&mut input)?));
            }
        }
        for w in model.output.iter_mut() {
            *w = f32::from_bits(read_u32(&mut input)?);
        }
        let finite = model.input.data.iter().chain(&model.output).all(|v| v.is_finite());
        if !finite {
            return Err(Error::ModelFormat("non-finite parameter".into()));
        }
        Ok(model)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    hyperparams: NgramHyperparams,
    task: Task,
    labels: Vec<Label>,
    rows: u64,
}

struct Example {
    features: Vec<(u64, u32)>,
    total: u32,
    gold: usize,
}

pub fn train(corpus: &[(String, Label)], hp: &NgramHyperparams) -> Result<NgramModel> {
    train_with_report(corpus, hp).map(|(m, _)| m)
}

pub fn train_with_report(
    corpus: &[(String, Label)],
    hp: &NgramHyperparams,
) -> Result<(NgramModel, TrainReport)> {
    hp.validate()?;
    let first = corpus.first().ok_or(Error::EmptyCorpus)?.1;
    let task = first.task();
    if let Some((_, l)) = corpus.iter().find(|(_, l)| l.task() != task) {
        return Err(Error::InvalidLabel {
            label: l.to_string(),
            task,
        });
    }
    if corpus.iter().all(|(_, l)| *l == first) {
        return Err(Error::SingleLabelCorpus(first));
    }

    let mut skipped_empty = 0;
    let examples: Vec<Example> = corpus
        .iter()
        .filter_map(|(text, label)| {
            let raw = featurize(text, hp.max_n, hp.bucket_count);
            if raw.is_empty() {
                skipped_empty += 1;
                return None;
            }
            Some(Example {
                total: raw.len() as u32,
                features: aggregate(&raw),
                gold: label.index(),
            })
        })
        .collect();

    let mut model = NgramModel::fresh(hp, task);
    let mut report = TrainReport {
        examples: examples.len(),
        skipped_empty,
        epochs: Vec::with_capacity(hp.epochs),
    };
    if examples.is_empty() {
        return Ok((model, report));
    }

    let per_epoch = examples.len();
    let total_updates = per_epoch * hp.epochs;
    let workers = hp.workers.min(per_epoch);

    for epoch in 0..hp.epochs {
        let start = (epoch * per_epoch) as f64 / total_updates as f64;
        let mean_loss = if workers <= 1 {
            model.run_epoch(&examples, epoch, start, 1.0 / total_updates as f64)?
        } else {
            let shard = per_epoch.div_ceil(workers);
            let results: Vec<Result<(NgramModel, f64, usize)>> = std::thread::scope(|scope| {
                let handles: Vec<_> = examples
                    .chunks(shard)
                    .map(|chunk| {
                        let mut replica = model.clone();
                        scope.spawn(move || {
                            // Each shard walks the full epoch's share of the schedule.
                            let stride = 1.0 / (chunk.len() * hp.epochs) as f64;
                            let loss = replica.run_epoch(chunk, epoch, start, stride)?;
                            Ok((replica, loss, chunk.len()))
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .collect()
            });
            let mut replicas = Vec::with_capacity(results.len());
            let mut weighted = 0.0;
            for r in results {
                let (replica, loss, n) = r?;
                weighted += loss * n as f64;
                replicas.push(replica);
            }
            model.average_from(&replicas);
            weighted / per_epoch as f64
        };
        log::debug!("epoch {epoch}: mean loss {mean_loss:.5}");
        report.epochs.push(EpochStats { epoch, mean_loss });
    }
    Ok((model, report))
}
