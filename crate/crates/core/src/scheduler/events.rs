use std::io::Write;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::audit::Intervention;

/// Structured progress event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SynthesisDone { revision: u64, contract_sha256: String },
    DispatchStart { layer: u32, task: String, role: String },
    DispatchFinish { layer: u32, task: String, role: String, outcome: String },
    Intervention { layer: u32, intervention: Intervention },
    LayerDone { layer: u32, width: usize, verified: usize, total: usize },
}

pub trait EventSink: Send + Sync {
    fn emit(&self, event: &Event);
}

/// One JSON object per line on standard error.
pub struct StderrSink;

impl EventSink for StderrSink {
    fn emit(&self, event: &Event) {
        if let Ok(line) = serde_json::to_string(event) {
            let _ = writeln!(std::io::stderr().lock(), "{line}");
        }
    }
}

pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&self, _event: &Event) {}
}

#[derive(Default)]
pub struct MemorySink(Mutex<Vec<Event>>);

impl MemorySink {
    pub fn events(&self) -> Vec<Event> {
        self.0.lock().map(|e| e.clone()).unwrap_or_default()
    }
}

impl EventSink for MemorySink {
    fn emit(&self, event: &Event) {
        if let Ok(mut events) = self.0.lock() {
            events.push(event.clone());
        }
    }
}
