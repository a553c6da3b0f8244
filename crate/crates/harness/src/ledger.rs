//! Append-only result records with content ids.
//!
//! Wall times live in a sidecar so that the records themselves are a pure
//! function of scenario and seed.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub scenario_id: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub t_or_r: f64,
    pub value: f64,
    pub error: f64,
    pub margin: f64,
    pub pass: bool,
    /// Values from the individual routes ("stokes", "oracle", "dual", ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub routes: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Hash of every other field; filled in by [`Record::seal`].
    #[serde(default)]
    pub content_id: String,
}

impl Record {
    pub fn new(scenario_id: impl Into<String>, t_or_r: f64, value: f64, error: f64, margin: f64, pass: bool) -> Self {
        Self {
            scenario_id: scenario_id.into(),
            scenario_hash: String::new(),
            seed: 0,
            t_or_r,
            value,
            error,
            margin,
            pass,
            routes: BTreeMap::new(),
            note: None,
            content_id: String::new(),
        }
    }

    pub fn route(mut self, name: &str, value: f64) -> Self {
        self.routes.insert(name.to_string(), value);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn origin(mut self, hash: &str, seed: u64) -> Self {
        self.scenario_hash = hash.to_string();
        self.seed = seed;
        self
    }

    /// Git-style id: SHA-256 over "record <len>\0<json>" with the id field blank.
    pub fn seal(mut self) -> Self {
        self.content_id.clear();
        let body = serde_json::to_vec(&self).expect("record serializes");
        let mut h = Sha256::new();
        h.update(format!("record {}\0", body.len()).as_bytes());
        h.update(&body);
        self.content_id = hex::encode(h.finalize())[..40].to_string();
        self
    }

    pub fn verify_id(&self) -> bool {
        self.clone().seal().content_id == self.content_id
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub scenario_id: String,
    pub seconds: f64,
}

/// In-memory ledger; records are only ever appended.
#[derive(Clone, Debug, Default)]
pub struct Ledger {
    records: Vec<Record>,
    timings: Vec<Timing>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, record: Record) {
        self.records.push(record.seal());
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = Record>) {
        for r in records {
            self.append(r);
        }
    }

    pub fn time(&mut self, scenario_id: &str, seconds: f64) {
        self.timings.push(Timing {
            scenario_id: scenario_id.to_string(),
            seconds,
        });
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn timings(&self) -> &[Timing] {
        &self.timings
    }

    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    /// One JSON object per line, in append order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<Record>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| HarnessError::InvalidConfig(format!("ledger line: {e}"))))
            .collect()
    }

    /// Appends the records to `<dir>/ledger.jsonl` and the timings to `<dir>/timing.jsonl`.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        append_lines(&dir.join("ledger.jsonl"), &self.to_jsonl())?;
        let mut t = String::new();
        for timing in &self.timings {
            t.push_str(&serde_json::to_string(timing).expect("timing serializes"));
            t.push('\n');
        }
        append_lines(&dir.join("timing.jsonl"), &t)
    }
}

fn append_lines(path: &Path, text: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| HarnessError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_id_tracks_every_field() {
        let r = Record::new("a", 0.1, 1.0, 0.0, 0.5, true).seal();
        assert!(r.verify_id());
        assert_eq!(r.content_id.len(), 40);
        let mut s = r.clone();
        s.value = f64::from_bits(1.0f64.to_bits() + 1);
        assert!(!s.verify_id());
        assert_ne!(s.seal().content_id, r.content_id);
    }
}
