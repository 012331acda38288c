//! Report files: a JSON summary and a CSV table per run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Git-style content hash: SHA-256 of `"blob <len>\0" + bytes`.
pub fn config_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToleranceCheck {
    pub name: String,
    pub value: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub pass: bool,
}

impl ToleranceCheck {
    pub fn within(name: &str, value: f64, min: Option<f64>, max: Option<f64>) -> Self {
        let pass = value.is_finite() && min.is_none_or(|lo| value >= lo) && max.is_none_or(|hi| value <= hi);
        Self {
            name: name.into(),
            value,
            min,
            max,
            pass,
        }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            min: Some(1.0),
            max: None,
            pass: ok,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StreamRange {
    pub first: u64,
    pub count: u64,
}

/// Rows of numbers under named columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// CSV with a leading timestamp comment; everything after it depends
    /// only on the inputs.
    pub fn to_csv(&self, timestamp: &str, provenance: &str) -> String {
        let mut s = format!("# generated {timestamp}\n# {provenance}\n");
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    pub generated: String,
    pub config: Value,
    pub config_hash: String,
    pub seed: u64,
    pub streams: Option<StreamRange>,
    pub aborted: usize,
    pub metrics: BTreeMap<String, Value>,
    pub checks: Vec<ToleranceCheck>,
    pub verdict: &'static str,
    pub csv_columns: Vec<String>,
    pub files: Vec<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<PathBuf> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_git_blob_sha256() {
        // printf 'blob 6\0hello\n' | sha256sum
        assert_eq!(
            config_hash(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }

    #[test]
    fn csv_has_timestamp_then_header() {
        let mut t = Table::new(&["m", "error"]);
        t.push(vec![16.0, 0.25]);
        let csv = t.to_csv("T0", "seed 1");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines, ["# generated T0", "# seed 1", "m,error", "1.6e1,2.5e-1"]);
    }

    #[test]
    fn tolerance_bounds() {
        assert!(ToleranceCheck::within("s", -0.5, Some(-0.6), Some(-0.4)).pass);
        assert!(!ToleranceCheck::within("s", -0.3, Some(-0.6), Some(-0.4)).pass);
        assert!(!ToleranceCheck::within("s", f64::NAN, None, None).pass);
    }
}
