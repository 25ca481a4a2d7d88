//! Edited-set JSONL I/O and an importer for externally produced edit files.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use super::edits::{EditStatus, EditedRecord};
use crate::data::{Label, Task};
use crate::error::{Error, Result};

/// Reads edited-set JSONL, failing on the first invalid line. A leading
/// metadata line is skipped.
pub fn read_edited_set<R: BufRead>(reader: R) -> Result<Vec<EditedRecord>> {
    let mut out = Vec::new();
    let mut first = true;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if std::mem::take(&mut first) && crate::meta::parse_meta_line(&line).is_some() {
            continue;
        }
        let malformed = |reason: String| Error::Malformed { line: i + 1, reason };
        let rec: EditedRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        rec.validate().map_err(|e| malformed(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_edited_set<W: Write>(mut out: W, records: &[EditedRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImportFormat {
    Jsonl,
    Csv,
    Tsv,
}

impl ImportFormat {
    pub fn from_extension(path: &std::path::Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Some(ImportFormat::Jsonl),
            "csv" => Some(ImportFormat::Csv),
            "tsv" => Some(ImportFormat::Tsv),
            _ => None,
        }
    }
}

/// Column names accepted for each edited-set field, matched
/// case-insensitively; the first present column wins.
#[derive(Debug, Clone)]
pub struct ImportMapping {
    /// Task for files without a task column. When `None` and no column is
    /// present, the task is inferred from the label names.
    pub task: Option<Task>,
    pub edit_id: Vec<String>,
    pub original_id: Vec<String>,
    pub premise: Vec<String>,
    pub hypothesis: Vec<String>,
    pub update: Vec<String>,
    pub original_label: Vec<String>,
    pub target_label: Vec<String>,
    pub task_column: Vec<String>,
    pub status: Vec<String>,
    /// Prefix for generated edit ids when the file has none.
    pub id_prefix: String,
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl Default for ImportMapping {
    fn default() -> Self {
        ImportMapping {
            task: None,
            edit_id: names(&["edit_id", "id", "example_id"]),
            original_id: names(&["original_id", "orig_id", "source_id", "pairid"]),
            premise: names(&["premise", "edited_premise", "new_premise", "sentence1"]),
            hypothesis: names(&["hypothesis", "edited_hypothesis", "new_hypothesis", "sentence2"]),
            update: names(&["update", "edited_update"]),
            original_label: names(&["original_label", "orig_label", "old_label", "label"]),
            target_label: names(&["target_label", "new_label", "induced_label", "edited_label"]),
            task_column: names(&["task"]),
            status: names(&["status"]),
            id_prefix: "imported-".into(),
        }
    }
}

type Row = HashMap<String, String>;

fn pick<'a>(row: &'a Row, candidates: &[String]) -> Option<&'a str> {
    candidates
        .iter()
        .find_map(|c| row.get(&c.to_ascii_lowercase()))
        .map(String::as_str)
        .filter(|s| !s.is_empty())
}

fn rows_from_jsonl<R: Read>(reader: R) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for (i, line) in std::io::BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Malformed {
            line: i + 1,
            reason: "expected a JSON object".into(),
        })?;
        let row = obj
            .iter()
            .filter_map(|(k, v)| {
                let s = match v {
                    serde_json::Value::Null => return None,
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                Some((k.to_ascii_lowercase(), s))
            })
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

fn rows_from_delimited<R: Read>(reader: R, delimiter: u8) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Malformed { line: 1, reason: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Malformed {
            line: i + 2,
            reason: e.to_string(),
        })?;
        rows.push(headers.iter().cloned().zip(rec.iter().map(str::to_string)).collect());
    }
    Ok(rows)
}

/// Maps an external edit file onto edited-set records. Imported edits are
/// taken as already validated unless a status column says otherwise.
pub fn import_edits<R: Read>(reader: R, format: ImportFormat, mapping: &ImportMapping) -> Result<Vec<EditedRecord>> {
    let rows = match format {
        ImportFormat::Jsonl => rows_from_jsonl(reader)?,
        ImportFormat::Csv => rows_from_delimited(reader, b',')?,
        ImportFormat::Tsv => rows_from_delimited(reader, b'\t')?,
    };
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            import_row(row, i, mapping).map_err(|e| Error::Malformed {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

fn import_row(row: &Row, index: usize, m: &ImportMapping) -> Result<EditedRecord> {
    let required = |cands: &[String], what: &str| {
        pick(row, cands)
            .map(str::to_string)
            .ok_or_else(|| Error::InvalidParameter(format!("missing {what} column (tried {})", cands.join(", "))))
    };
    let original_raw = required(&m.original_label, "original label")?;
    let target_raw = required(&m.target_label, "target label")?;
    let original: Label = original_raw.parse()?;

    let task = match pick(row, &m.task_column) {
        Some(t) => t.parse()?,
        None => m.task.unwrap_or(original.task()),
    };
    let original = Label::parse_for(&original_raw, task)?;
    let target = Label::parse_for(&target_raw, task)?;

    let edit_id = pick(row, &m.edit_id)
        .map(str::to_string)
        .unwrap_or_else(|| format!("{}{:04}", m.id_prefix, index + 1));
    let original_id = pick(row, &m.original_id).map(str::to_string).unwrap_or_else(|| edit_id.clone());
    let update = match task {
        Task::Nli => None,
        Task::DefeasibleNli => Some(required(&m.update, "update")?),
    };
    let status = match pick(row, &m.status) {
        Some(s) => serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))?,
        None => EditStatus::Validated,
    };

    let rec = EditedRecord {
        edit_id,
        original_id,
        task,
        premise: required(&m.premise, "premise")?,
        hypothesis: required(&m.hypothesis, "hypothesis")?,
        update,
        edited_field: task.context_field(),
        original_label: original,
        target_label: target,
        status,
    };
    rec.validate()?;
    Ok(rec)
}
