//! Output files and their metadata headers.
//!
//! Every artifact records the tool version, the command, the seed, the
//! parameters and a SHA-256 of every input it read. The header's form
//! depends on the file type:
//!
//! | type   | header                                   |
//! |--------|------------------------------------------|
//! | JSONL  | first line `{"_meta": {...}}`            |
//! | JSON   | top-level `"meta"` key                   |
//! | CSV    | first line `# meta: {...}`               |
//! | SVG/MD | first line `<!-- meta: {...} -->`        |
//! | binary | sidecar `<file>.meta.json`               |
//!
//! Input paths are written relative to the config directory, or as
//! `$out/...` for earlier artifacts, so two runs into different output
//! directories produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use ctxprobe_core::meta::{meta_line, parse_meta_line};
use ctxprobe_core::Label;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::InputPath;
use crate::error::{read_error, write_error, CliError, CliResult};

pub const TOOL: &str = "ctxprobe";
pub const OUT_PREFIX: &str = "$out/";
const CSV_PREFIX: &str = "# meta: ";
const SVG_PREFIX: &str = "<!-- meta: ";
const SVG_SUFFIX: &str = " -->";
pub const SIDECAR_SUFFIX: &str = ".meta.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub params: Value,
    pub inputs: Vec<InputHash>,
    /// Present on prediction files so readers can check the logit order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_order: Option<Vec<Label>>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| read_error(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Resolves artifact paths and builds headers for one run.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Workspace {
    pub fn out_path(&self, rel: &str) -> PathBuf {
        self.out_dir.join(rel)
    }

    /// Turns a recorded input path back into a file path.
    pub fn resolve(&self, label: &str) -> PathBuf {
        match label.strip_prefix(OUT_PREFIX) {
            Some(rel) => self.out_dir.join(rel),
            None => self.base_dir.join(label),
        }
    }

    pub fn hash_input(&self, input: &InputPath) -> CliResult<InputHash> {
        Ok(InputHash {
            path: input.label.clone(),
            sha256: sha256_file(&input.path)?,
        })
    }

    /// An earlier artifact as an input; fails with a hint when it is missing.
    pub fn hash_artifact(&self, rel: &str) -> CliResult<InputHash> {
        let path = self.out_path(rel);
        if !path.is_file() {
            return Err(CliError::data(format!(
                "missing artifact {OUT_PREFIX}{rel}; run the step that produces it first"
            )));
        }
        Ok(InputHash {
            path: format!("{OUT_PREFIX}{rel}"),
            sha256: sha256_file(&path)?,
        })
    }

    pub fn meta(&self, command: &str, params: Value, mut inputs: Vec<InputHash>) -> Meta {
        inputs.sort_by(|a, b| a.path.cmp(&b.path));
        inputs.dedup();
        Meta {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: self.seed,
            params,
            inputs,
            label_order: None,
        }
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.out_path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| write_error(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| write_error(&path, e))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    /// Pretty JSON object with the header under `"meta"`.
    pub fn write_json(&self, rel: &str, meta: &Meta, body: impl Serialize) -> CliResult<PathBuf> {
        let mut value = serde_json::to_value(body).map_err(|e| CliError::internal(e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| CliError::internal(format!("{rel}: artifact body is not an object")))?;
        obj.insert("meta".into(), serde_json::to_value(meta).expect("meta serializes"));
        let mut text = serde_json::to_string_pretty(&value).map_err(|e| CliError::internal(e.to_string()))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    /// `body` holds complete lines, each ending in a newline.
    pub fn write_jsonl(&self, rel: &str, meta: &Meta, body: &[u8]) -> CliResult<PathBuf> {
        let mut bytes = meta_line(&serde_json::to_value(meta).expect("meta serializes")).into_bytes();
        bytes.push(b'\n');
        bytes.extend_from_slice(body);
        self.write(rel, &bytes)
    }

    pub fn write_csv(&self, rel: &str, meta: &Meta, csv: &str) -> CliResult<PathBuf> {
        let header = serde_json::to_string(meta).expect("meta serializes");
        self.write(rel, format!("{CSV_PREFIX}{header}\n{csv}").as_bytes())
    }

    /// SVG or Markdown, with the header in a leading comment.
    pub fn write_commented(&self, rel: &str, meta: &Meta, text: &str) -> CliResult<PathBuf> {
        // "--" may not appear inside an XML comment; it can only occur in
        // JSON strings, where an escaped hyphen decodes to the same text.
        let header = serde_json::to_string(meta).expect("meta serializes").replace("--", "-\\u002d");
        self.write(rel, format!("{SVG_PREFIX}{header}{SVG_SUFFIX}\n{text}").as_bytes())
    }

    pub fn write_binary(&self, rel: &str, meta: &Meta, bytes: &[u8], sidecar: impl Serialize) -> CliResult<PathBuf> {
        let path = self.write(rel, bytes)?;
        self.write_json(&format!("{rel}{SIDECAR_SUFFIX}"), meta, sidecar)?;
        Ok(path)
    }
}

/// Strips a CSV metadata line, returning the table itself.
pub fn csv_body(text: &str) -> &str {
    if text.starts_with(CSV_PREFIX) {
        text.split_once('\n').map(|(_, rest)| rest).unwrap_or("")
    } else {
        text
    }
}

/// Reads the header of an artifact. `Ok(None)` means the file type carries
/// no header of its own (binaries, whose sidecar is read instead).
pub fn read_meta(path: &Path) -> CliResult<Option<Meta>> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if !matches!(ext, "jsonl" | "json" | "csv" | "svg" | "md") {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(|e| read_error(path, e))?;
    let first = text.lines().next().unwrap_or("");
    let value: Option<Value> = match ext {
        "jsonl" => parse_meta_line(first),
        "json" => serde_json::from_str::<Value>(&text)
            .ok()
            .and_then(|mut v| v.as_object_mut().and_then(|o| o.remove("meta"))),
        "csv" => first.strip_prefix(CSV_PREFIX).and_then(|j| serde_json::from_str(j).ok()),
        "svg" | "md" => first
            .strip_prefix(SVG_PREFIX)
            .and_then(|r| r.strip_suffix(SVG_SUFFIX))
            .and_then(|j| serde_json::from_str(j).ok()),
        _ => return Ok(None),
    };
    let value = value.ok_or_else(|| CliError::data(format!("{}: no metadata header", path.display())))?;
    serde_json::from_value(value)
        .map(Some)
        .map_err(|e| CliError::data(format!("{}: bad metadata header: {e}", path.display())))
}

/// Inputs whose current content no longer matches the recorded hash.
pub fn stale_inputs(ws: &Workspace, meta: &Meta) -> Vec<String> {
    meta.inputs
        .iter()
        .filter_map(|input| {
            let path = ws.resolve(&input.path);
            match sha256_file(&path) {
                Ok(h) if h == input.sha256 => None,
                Ok(_) => Some(format!("{} changed", input.path)),
                Err(_) => Some(format!("{} is missing", input.path)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws(dir: &Path) -> Workspace {
        Workspace {
            base_dir: dir.to_path_buf(),
            out_dir: dir.join("out"),
            seed: 3,
        }
    }

    #[test]
    fn headers_round_trip_for_every_format() {
        let dir = std::env::temp_dir().join(format!("ctxprobe-artifact-{}", std::process::id()));
        let ws = ws(&dir);
        let meta = ws.meta("test", serde_json::json!({"title": "a -- b"}), vec![]);
        let paths = [
            ws.write_json("x.json", &meta, serde_json::json!({"k": 1})).unwrap(),
            ws.write_jsonl("x.jsonl", &meta, b"{\"k\":1}\n").unwrap(),
            ws.write_csv("x.csv", &meta, "a,b\n1,2\n").unwrap(),
            ws.write_commented("x.svg", &meta, "<svg></svg>\n").unwrap(),
        ];
        for p in &paths {
            assert_eq!(read_meta(p).unwrap().as_ref(), Some(&meta), "{}", p.display());
        }
        let svg = fs::read_to_string(&paths[3]).unwrap();
        assert!(!svg.lines().next().unwrap()[4..svg.lines().next().unwrap().len() - 3].contains("--"));
        assert_eq!(csv_body(&fs::read_to_string(&paths[2]).unwrap()), "a,b\n1,2\n");
        fs::remove_dir_all(&dir).unwrap();
    }
}
