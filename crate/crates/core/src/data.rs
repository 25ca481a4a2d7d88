//! Dataset schemas and the context/target decomposition.
//!
//! NLI instances split as `C = P`, `T = H`; defeasible instances as
//! `C = (P, H)`, `T = U`. A partial-input view sees only `T`.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Separator placed between premise and hypothesis when they form a
/// defeasible context.
pub const DEFAULT_CONTEXT_SEPARATOR: &str = " ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "nli")]
    Nli,
    #[serde(rename = "dnli")]
    DefeasibleNli,
}

impl Task {
    /// Labels in canonical index order.
    pub fn labels(self) -> &'static [Label] {
        match self {
            Task::Nli => &[Label::Entailment, Label::Neutral, Label::Contradiction],
            Task::DefeasibleNli => &[Label::Weakener, Label::Strengthener],
        }
    }

    pub fn arity(self) -> usize {
        self.labels().len()
    }

    pub fn label_at(self, index: usize) -> Option<Label> {
        self.labels().get(index).copied()
    }

    /// Task whose label arity equals `n`, if any.
    pub fn from_arity(n: usize) -> Option<Task> {
        match n {
            3 => Some(Task::Nli),
            2 => Some(Task::DefeasibleNli),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Nli => "nli",
            Task::DefeasibleNli => "dnli",
        }
    }

    /// The field that is rewritten when editing context.
    pub fn context_field(self) -> TextField {
        match self {
            Task::Nli => TextField::Premise,
            Task::DefeasibleNli => TextField::Hypothesis,
        }
    }

    /// The field held constant when editing context.
    pub fn target_field(self) -> TextField {
        match self {
            Task::Nli => TextField::Hypothesis,
            Task::DefeasibleNli => TextField::Update,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nli" | "snli" => Ok(Task::Nli),
            "dnli" | "defeasible" | "defeasible-nli" | "delta-nli" | "dsnli" => {
                Ok(Task::DefeasibleNli)
            }
            other => Err(Error::InvalidParameter(format!("unknown task {other:?}"))),
        }
    }
}

/// Gold label. Canonical indices: entailment=0, neutral=1, contradiction=2;
/// weakener=0, strengthener=1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Entailment,
    Neutral,
    Contradiction,
    Weakener,
    Strengthener,
}

impl Label {
    pub fn task(self) -> Task {
        match self {
            Label::Entailment | Label::Neutral | Label::Contradiction => Task::Nli,
            Label::Weakener | Label::Strengthener => Task::DefeasibleNli,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::Entailment => 0,
            Label::Neutral => 1,
            Label::Contradiction => 2,
            Label::Weakener => 0,
            Label::Strengthener => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Neutral => "neutral",
            Label::Contradiction => "contradiction",
            Label::Weakener => "weakener",
            Label::Strengthener => "strengthener",
        }
    }

    /// Single-letter code used in compact tables (`e`, `n`, `c`, `w`, `s`).
    pub fn short(self) -> char {
        self.as_str().chars().next().unwrap_or('?')
    }

    /// Parses a label name and checks it belongs to `task`.
    pub fn parse_for(s: &str, task: Task) -> Result<Label> {
        let label: Label = s.parse().map_err(|_| Error::InvalidLabel {
            label: s.to_string(),
            task,
        })?;
        if label.task() != task {
            return Err(Error::InvalidLabel {
                label: s.to_string(),
                task,
            });
        }
        Ok(label)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let label = match s.trim().to_ascii_lowercase().as_str() {
            "entailment" | "e" => Label::Entailment,
            "neutral" | "n" => Label::Neutral,
            "contradiction" | "c" => Label::Contradiction,
            "weakener" | "w" => Label::Weakener,
            "strengthener" | "s" => Label::Strengthener,
            _ => {
                return Err(Error::InvalidParameter(format!("unknown label {s:?}")));
            }
        };
        Ok(label)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[serde(alias = "dev", alias = "validation")]
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" | "dev" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidParameter(format!("unknown split {other:?}"))),
        }
    }
}

/// A text field of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextField {
    Premise,
    Hypothesis,
    Update,
}

impl TextField {
    pub fn as_str(self) -> &'static str {
        match self {
            TextField::Premise => "premise",
            TextField::Hypothesis => "hypothesis",
            TextField::Update => "update",
        }
    }
}

impl FromStr for TextField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "premise" => Ok(TextField::Premise),
            "hypothesis" => Ok(TextField::Hypothesis),
            "update" => Ok(TextField::Update),
            other => Err(Error::InvalidParameter(format!("unknown field {other:?}"))),
        }
    }
}

impl fmt::Display for TextField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One dataset example. Serializes as the dataset JSONL record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub task: Task,
    pub premise: String,
    pub hypothesis: String,
    pub update: Option<String>,
    pub gold: Label,
    pub split: Split,
}

impl Instance {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidInstance {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.is_empty() {
            return Err(bad("empty id"));
        }
        if self.premise.is_empty() {
            return Err(bad("empty premise"));
        }
        if self.hypothesis.is_empty() {
            return Err(bad("empty hypothesis"));
        }
        match (self.task, self.update.as_deref()) {
            (Task::Nli, Some(_)) => return Err(bad("NLI instance carries an update")),
            (Task::DefeasibleNli, None) => return Err(Error::MissingUpdate(self.id.clone())),
            (Task::DefeasibleNli, Some("")) => return Err(bad("empty update")),
            _ => {}
        }
        if self.gold.task() != self.task {
            return Err(Error::InvalidLabel {
                label: self.gold.to_string(),
                task: self.task,
            });
        }
        Ok(())
    }

    pub fn field(&self, field: TextField) -> Option<&str> {
        match field {
            TextField::Premise => Some(&self.premise),
            TextField::Hypothesis => Some(&self.hypothesis),
            TextField::Update => self.update.as_deref(),
        }
    }

    pub fn context_text(&self) -> &str {
        self.field(self.task.context_field()).unwrap_or_default()
    }

    /// The sentence held constant under context editing.
    pub fn target_text(&self) -> Option<&str> {
        match self.task {
            Task::Nli => Some(&self.hypothesis),
            Task::DefeasibleNli => self.update.as_deref(),
        }
    }

    /// Copy of this instance with the context field replaced.
    pub fn with_context(&self, text: &str) -> Instance {
        let mut out = self.clone();
        match self.task.context_field() {
            TextField::Hypothesis => out.hypothesis = text.to_string(),
            _ => out.premise = text.to_string(),
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputView {
    Partial,
    Full,
}

impl InputView {
    pub fn as_str(self) -> &'static str {
        match self {
            InputView::Partial => "partial",
            InputView::Full => "full",
        }
    }
}

impl fmt::Display for InputView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "partial" => Ok(InputView::Partial),
            "full" => Ok(InputView::Full),
            other => Err(Error::InvalidParameter(format!("unknown view {other:?}"))),
        }
    }
}

/// Model input as a (context, target) text pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputPair {
    pub context: String,
    pub target: String,
}

impl InputPair {
    /// Single string for lexical models: `context + " " + target`, or just
    /// the target when the context is empty.
    pub fn joined(&self) -> String {
        if self.context.is_empty() {
            self.target.clone()
        } else {
            format!("{} {}", self.context, self.target)
        }
    }
}

pub fn decompose(instance: &Instance) -> Result<InputPair> {
    decompose_with(instance, DEFAULT_CONTEXT_SEPARATOR)
}

/// Splits an instance into context and target, joining premise and
/// hypothesis with `separator` for defeasible instances.
pub fn decompose_with(instance: &Instance, separator: &str) -> Result<InputPair> {
    match instance.task {
        Task::Nli => Ok(InputPair {
            context: instance.premise.clone(),
            target: instance.hypothesis.clone(),
        }),
        Task::DefeasibleNli => {
            let update = instance
                .update
                .as_ref()
                .filter(|u| !u.is_empty())
                .ok_or_else(|| Error::MissingUpdate(instance.id.clone()))?;
            Ok(InputPair {
                context: format!("{}{}{}", instance.premise, separator, instance.hypothesis),
                target: update.clone(),
            })
        }
    }
}

pub fn render_view(instance: &Instance, view: InputView) -> Result<InputPair> {
    render_view_with(instance, view, DEFAULT_CONTEXT_SEPARATOR)
}

pub fn render_view_with(instance: &Instance, view: InputView, separator: &str) -> Result<InputPair> {
    let pair = decompose_with(instance, separator)?;
    Ok(match view {
        InputView::Full => pair,
        InputView::Partial => InputPair {
            context: String::new(),
            target: pair.target,
        },
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl SplitCounts {
    pub const fn new(train: usize, valid: usize, test: usize) -> Self {
        SplitCounts { train, valid, test }
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Valid => self.valid,
            Split::Test => self.test,
        }
    }

    fn bump(&mut self, split: Split) {
        match split {
            Split::Train => self.train += 1,
            Split::Valid => self.valid += 1,
            Split::Test => self.test += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.valid + self.test
    }
}

/// Published split sizes for the supported corpora.
pub mod known_sizes {
    use super::SplitCounts;

    pub const SNLI: SplitCounts = SplitCounts::new(550_152, 10_000, 10_000);
    pub const DELTA_NLI: SplitCounts = SplitCounts::new(200_694, 14_968, 15_414);
    pub const DELTA_SNLI: SplitCounts = SplitCounts::new(88_676, 1_785, 1_837);

    /// Looks up expected sizes by dataset name (case-insensitive).
    pub fn lookup(name: &str) -> Option<SplitCounts> {
        let key: String = name
            .to_lowercase()
            .replace('δ', "delta")
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match key.as_str() {
            "snli" => Some(SNLI),
            "dnli" | "deltanli" => Some(DELTA_NLI),
            "dsnli" | "deltasnli" => Some(DELTA_SNLI),
            _ => None,
        }
    }
}

/// An ingested dataset. Immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    name: String,
    task: Task,
    instances: Vec<Instance>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, task: Task, instances: Vec<Instance>) -> Result<Self> {
        let mut index = HashMap::with_capacity(instances.len());
        for (i, inst) in instances.iter().enumerate() {
            inst.validate()?;
            if inst.task != task {
                return Err(Error::InvalidInstance {
                    id: inst.id.clone(),
                    reason: format!("task {} differs from dataset task {task}", inst.task),
                });
            }
            if index.insert(inst.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(inst.id.clone()));
            }
        }
        Ok(Dataset {
            name: name.into(),
            task,
            instances,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.index.get(id).map(|&i| &self.instances[i])
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(move |i| i.split == split)
    }

    pub fn split_counts(&self) -> SplitCounts {
        let mut counts = SplitCounts::default();
        for inst in &self.instances {
            counts.bump(inst.split);
        }
        counts
    }

    /// Writes one JSON record per line, in dataset order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for inst in &self.instances {
            serde_json::to_writer(&mut out, inst)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Abort on the first bad line instead of skipping it.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Parsed {
    pub dataset: Dataset,
    pub skipped: Vec<SkippedLine>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    task: String,
    premise: String,
    hypothesis: String,
    #[serde(default)]
    update: Option<String>,
    gold: String,
    split: String,
}

fn parse_record(line: &str, task: Task) -> Result<Instance, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let record_task: Task = raw.task.parse().map_err(|e: Error| e.to_string())?;
    if record_task != task {
        return Err(format!("task {record_task} does not match expected {task}"));
    }
    let gold = Label::parse_for(&raw.gold, task).map_err(|e| e.to_string())?;
    let split: Split = raw.split.parse().map_err(|e: Error| e.to_string())?;
    let inst = Instance {
        id: raw.id,
        task,
        premise: raw.premise,
        hypothesis: raw.hypothesis,
        update: raw.update,
        gold,
        split,
    };
    inst.validate().map_err(|e| e.to_string())?;
    Ok(inst)
}

/// Reads a line-delimited dataset. Blank lines and a leading metadata line
/// are ignored. In lenient mode bad lines (including duplicate ids) are
/// skipped and reported.
pub fn parse_dataset<R: BufRead>(
    reader: R,
    name: &str,
    task: Task,
    options: ParseOptions,
) -> Result<Parsed> {
    let mut instances = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut skipped = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if instances.is_empty() && skipped.is_empty() && crate::meta::parse_meta_line(trimmed).is_some() {
            continue;
        }
        let outcome = parse_record(trimmed, task).and_then(|inst| {
            if let Some(first) = seen.get(&inst.id) {
                Err(format!("duplicate id {:?} (first seen on line {first})", inst.id))
            } else {
                Ok(inst)
            }
        });
        match outcome {
            Ok(inst) => {
                seen.insert(inst.id.clone(), line_no);
                instances.push(inst);
            }
            Err(reason) if options.strict => {
                return Err(Error::Malformed {
                    line: line_no,
                    reason,
                });
            }
            Err(reason) => {
                log::warn!("{name}: skipping line {line_no}: {reason}");
                skipped.push(SkippedLine {
                    line: line_no,
                    reason,
                });
            }
        }
    }

    Ok(Parsed {
        dataset: Dataset::new(name, task, instances)?,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitCheck {
    pub split: Split,
    pub expected: usize,
    pub actual: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitReport {
    pub dataset: String,
    pub checks: Vec<SplitCheck>,
}

impl SplitReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn validate_split_sizes(dataset: &Dataset, expected: SplitCounts) -> SplitReport {
    let actual = dataset.split_counts();
    let checks = Split::ALL
        .iter()
        .map(|&split| SplitCheck {
            split,
            expected: expected.get(split),
            actual: actual.get(split),
            pass: expected.get(split) == actual.get(split),
        })
        .collect();
    SplitReport {
        dataset: dataset.name().to_string(),
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nli(id: &str, p: &str, h: &str, gold: Label) -> Instance {
        Instance {
            id: id.into(),
            task: Task::Nli,
            premise: p.into(),
            hypothesis: h.into(),
            update: None,
            gold,
            split: Split::Test,
        }
    }

    fn dnli(id: &str, p: &str, h: &str, u: &str, gold: Label) -> Instance {
        Instance {
            id: id.into(),
            task: Task::DefeasibleNli,
            premise: p.into(),
            hypothesis: h.into(),
            update: Some(u.into()),
            gold,
            split: Split::Test,
        }
    }

    #[test]
    fn label_indices_are_canonical() {
        let idx: Vec<_> = Task::Nli.labels().iter().map(|l| l.index()).collect();
        assert_eq!(idx, vec![0, 1, 2]);
        assert_eq!(Label::Weakener.index(), 0);
        assert_eq!(Label::Strengthener.index(), 1);
        assert_eq!(Task::Nli.arity(), 3);
        assert_eq!(Task::DefeasibleNli.arity(), 2);
    }

    #[test]
    fn label_rejected_under_wrong_task() {
        assert!(Label::parse_for("weakener", Task::Nli).is_err());
        assert!(Label::parse_for("entailment", Task::DefeasibleNli).is_err());
        assert_eq!(
            Label::parse_for("Contradiction", Task::Nli).unwrap(),
            Label::Contradiction
        );
    }

    #[test]
    fn decompose_nli() {
        let inst = nli("1", "A man sits.", "He eats.", Label::Neutral);
        let pair = decompose(&inst).unwrap();
        assert_eq!(pair.context, "A man sits.");
        assert_eq!(pair.target, "He eats.");
    }

    #[test]
    fn decompose_defeasible_joins_with_space() {
        let inst = dnli(
            "1",
            "A man is sitting in a dim restaurant.",
            "He is eating food.",
            "He is browsing a menu.",
            Label::Weakener,
        );
        let pair = decompose(&inst).unwrap();
        assert_eq!(
            pair.context,
            "A man is sitting in a dim restaurant. He is eating food."
        );
        assert_eq!(pair.target, "He is browsing a menu.");

        let pair = decompose_with(&inst, " ||| ").unwrap();
        assert_eq!(
            pair.context,
            "A man is sitting in a dim restaurant. ||| He is eating food."
        );
    }

    #[test]
    fn decompose_missing_update() {
        let mut inst = dnli("x", "p", "h", "u", Label::Weakener);
        inst.update = None;
        assert!(matches!(decompose(&inst), Err(Error::MissingUpdate(id)) if id == "x"));
    }

    #[test]
    fn edit_keeps_target() {
        let inst = dnli("1", "p", "h", "the update", Label::Strengthener);
        let edited = inst.with_context("a different h");
        assert_eq!(
            decompose(&edited).unwrap().target.as_bytes(),
            decompose(&inst).unwrap().target.as_bytes()
        );
        let inst = nli("2", "p", "the hyp", Label::Entailment);
        let edited = inst.with_context("q");
        assert_eq!(edited.premise, "q");
        assert_eq!(decompose(&edited).unwrap().target, "the hyp");
    }

    #[test]
    fn render_views() {
        let inst = nli("1", "P", "H", Label::Neutral);
        let partial = render_view(&inst, InputView::Partial).unwrap();
        assert!(partial.context.is_empty());
        assert_eq!(partial.target, "H");
        let full = render_view(&inst, InputView::Full).unwrap();
        assert_eq!((full.context.as_str(), full.target.as_str()), ("P", "H"));

        let d = dnli("2", "P", "H", "U", Label::Weakener);
        let partial = render_view(&d, InputView::Partial).unwrap();
        assert_eq!((partial.context.as_str(), partial.target.as_str()), ("", "U"));
        assert_eq!(partial.joined(), "U");
        assert_eq!(render_view(&d, InputView::Full).unwrap().joined(), "P H U");
    }

    #[test]
    fn parse_empty_stream() {
        let parsed = parse_dataset("".as_bytes(), "empty", Task::Nli, ParseOptions::default()).unwrap();
        assert!(parsed.dataset.is_empty());
        assert!(parsed.skipped.is_empty());
    }

    #[test]
    fn parse_preserves_order_and_ids() {
        let input = r#"{"id":"b","task":"nli","premise":"p1","hypothesis":"h1","update":null,"gold":"entailment","split":"train"}
{"id":"a","task":"nli","premise":"p2","hypothesis":"h2","gold":"neutral","split":"valid"}
{"id":"c","task":"nli","premise":"p3","hypothesis":"h3","update":null,"gold":"contradiction","split":"test"}
"#;
        let parsed = parse_dataset(input.as_bytes(), "tiny", Task::Nli, ParseOptions::default()).unwrap();
        let ids: Vec<_> = parsed.dataset.instances().iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
        assert_eq!(parsed.dataset.split_counts(), SplitCounts::new(1, 1, 1));
        assert_eq!(parsed.dataset.get("a").unwrap().gold, Label::Neutral);
    }

    #[test]
    fn lenient_parse_skips_and_counts() {
        let input = r#"{"id":"1","task":"nli","premise":"p","hypothesis":"h","gold":"entailment","split":"test"}
not json
{"id":"2","task":"nli","premise":"p","hypothesis":"h","gold":"weakener","split":"test"}
{"id":"1","task":"nli","premise":"p","hypothesis":"h","gold":"neutral","split":"test"}
{"id":"3","task":"nli","premise":"","hypothesis":"h","gold":"neutral","split":"test"}
"#;
        let parsed = parse_dataset(input.as_bytes(), "d", Task::Nli, ParseOptions::default()).unwrap();
        assert_eq!(parsed.dataset.len(), 1);
        let lines: Vec<_> = parsed.skipped.iter().map(|s| s.line).collect();
        assert_eq!(lines, [2, 3, 4, 5]);
        assert!(parsed.skipped[2].reason.contains("duplicate"));
    }

    #[test]
    fn strict_parse_reports_line() {
        let input = "{\"id\":\"1\",\"task\":\"nli\",\"premise\":\"p\",\"hypothesis\":\"h\",\"gold\":\"entailment\",\"split\":\"test\"}\n{\"id\":\"1\"}\n";
        let err = parse_dataset(input.as_bytes(), "d", Task::Nli, ParseOptions { strict: true }).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }));
    }

    #[test]
    fn defeasible_requires_update() {
        let input = r#"{"id":"1","task":"dnli","premise":"p","hypothesis":"h","update":null,"gold":"weakener","split":"test"}"#;
        let err = parse_dataset(input.as_bytes(), "d", Task::DefeasibleNli, ParseOptions { strict: true }).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 1, .. }));
    }

    #[test]
    fn split_report() {
        let ds = Dataset::new("empty", Task::DefeasibleNli, vec![]).unwrap();
        let report = validate_split_sizes(&ds, known_sizes::DELTA_SNLI);
        assert!(!report.all_pass());
        assert!(report.checks.iter().all(|c| !c.pass && c.actual == 0));

        let ds = Dataset::new("zero", Task::Nli, vec![]).unwrap();
        assert!(validate_split_sizes(&ds, SplitCounts::default()).all_pass());
    }

    #[test]
    fn known_size_lookup() {
        assert_eq!(known_sizes::lookup("SNLI"), Some(known_sizes::SNLI));
        assert_eq!(known_sizes::lookup("delta-snli"), Some(known_sizes::DELTA_SNLI));
        assert_eq!(known_sizes::lookup("δ-NLI"), Some(known_sizes::DELTA_NLI));
        assert_eq!(known_sizes::DELTA_SNLI.total(), 88_676 + 1_785 + 1_837);
    }
}
