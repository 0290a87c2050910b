//! The append-only run ledger: one JSON record per line.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{AuditReport, CommitRecord, StatusUpdate};
use crate::hash::json_sha256;
use crate::merge::{AtomicPatch, Conflict};
use crate::scheduler::{Mode, TaskId, TaskStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub format: u32,
    pub intent: String,
    pub mode: Mode,
    pub t_max: u32,
    pub attempt_cap: u32,
    pub model: String,
    pub temperature: f64,
    pub context_limit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisRecord {
    /// `(role, request sha256)` per call.
    pub requests: Vec<(String, String)>,
    pub draft_findings: Vec<String>,
    pub remaining: Vec<String>,
    pub revision: u64,
    pub contract_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchEntry {
    pub task: TaskId,
    pub role: String,
    pub request_sha256: Option<String>,
    /// `response`, `failed` or `unparsable`.
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub layer: u32,
    /// Most dispatches in flight at once.
    pub width: usize,
    /// Number of sequential rounds the layer took.
    pub waves: usize,
    pub snapshot_sha256: String,
    pub dispatches: Vec<DispatchEntry>,
    pub capped: Vec<TaskId>,
    pub transitions: Vec<StatusUpdate>,
    pub commits: Vec<CommitRecord>,
    pub patches: Vec<AtomicPatch>,
    pub conflicts: Vec<Conflict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_rejection: Option<String>,
    pub report: AuditReport,
    pub report_sha256: String,
    pub revision: u64,
    pub contract_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub layers: u32,
    pub best_effort: bool,
    pub statuses: BTreeMap<TaskId, TaskStatus>,
    /// Final path -> sha256.
    pub workspace: BTreeMap<String, String>,
    pub revision: u64,
    pub contract_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LedgerRecord {
    Header(RunHeader),
    Synthesis(SynthesisRecord),
    Layer(Box<LayerRecord>),
    Summary(RunSummary),
}

impl LedgerRecord {
    pub fn sha256(&self) -> String {
        json_sha256(self)
    }
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("ledger io: {0}")]
    Io(#[from] std::io::Error),
    #[error("ledger line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Collects records and, when backed by a file, appends each one as it
/// arrives.
#[derive(Default)]
pub struct Ledger {
    records: Vec<LedgerRecord>,
    file: Option<File>,
}

impl Ledger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn create(path: &Path) -> Result<Self, LedgerError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self { records: Vec::new(), file: Some(File::create(path)?) })
    }

    pub fn append(&mut self, record: LedgerRecord) -> Result<(), LedgerError> {
        if let Some(f) = &mut self.file {
            let line = serde_json::to_string(&record).map_err(std::io::Error::other)?;
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<LedgerRecord> {
        self.records
    }

    pub fn read(path: &Path) -> Result<Vec<LedgerRecord>, LedgerError> {
        let reader = BufReader::new(File::open(path)?);
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(
                serde_json::from_str(&line).map_err(|e| LedgerError::Parse { line: i + 1, message: e.to_string() })?,
            );
        }
        Ok(out)
    }
}

pub fn header(records: &[LedgerRecord]) -> Option<&RunHeader> {
    records.iter().find_map(|r| match r {
        LedgerRecord::Header(h) => Some(h),
        _ => None,
    })
}

pub fn layers(records: &[LedgerRecord]) -> impl Iterator<Item = &LayerRecord> {
    records.iter().filter_map(|r| match r {
        LedgerRecord::Layer(l) => Some(l.as_ref()),
        _ => None,
    })
}

pub fn summary(records: &[LedgerRecord]) -> Option<&RunSummary> {
    records.iter().find_map(|r| match r {
        LedgerRecord::Summary(s) => Some(s),
        _ => None,
    })
}

/// Workspace hashes obtained by replaying every commit event in order.
pub fn fold_commits(records: &[LedgerRecord]) -> BTreeMap<String, String> {
    let mut ws = BTreeMap::new();
    for l in layers(records) {
        for c in &l.commits {
            ws.insert(c.path.clone(), c.sha256.clone());
        }
    }
    ws
}

/// Index of the first record whose hash differs, or None when both ledgers
/// are identical record for record.
pub fn first_divergence(a: &[LedgerRecord], b: &[LedgerRecord]) -> Option<usize> {
    let n = a.len().max(b.len());
    (0..n).find(|&i| a.get(i).map(LedgerRecord::sha256) != b.get(i).map(LedgerRecord::sha256))
}
