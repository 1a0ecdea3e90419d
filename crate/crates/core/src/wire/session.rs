//! Distributed session description and the structured message log.

use crate::config::ExperimentConfig;
use crate::wire::WireError;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

fn default_timeout_ms() -> u64 {
    30_000
}

/// Socket addresses of the three processes. All distinct; source and bob
/// listen, alice dials both, bob dials the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoints {
    pub source: String,
    pub alice: String,
    pub bob: String,
}

/// Optional output and log paths. Bob owns the scientific outputs; each
/// role may write a JSONL message log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_json: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_log: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alice_log: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bob_log: Option<PathBuf>,
}

/// Everything a `serve` role needs: the physics, where to connect, how
/// long to wait, where to write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub experiment: ExperimentConfig,
    pub endpoints: Endpoints,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub outputs: OutputPaths,
}

impl SessionConfig {
    pub fn load(path: &Path) -> Result<Self, WireError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| WireError::Session(format!("cannot read {}: {e}", path.display())))?;
        let session: SessionConfig = serde_json::from_str(&text)
            .map_err(|e| WireError::Session(format!("malformed session file: {e}")))?;
        session.validate()?;
        Ok(session)
    }

    pub fn save(&self, path: &Path) -> Result<(), WireError> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| WireError::Session(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text)
            .map_err(|e| WireError::Session(format!("cannot write {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), WireError> {
        let e = &self.endpoints;
        if e.source == e.alice || e.source == e.bob || e.alice == e.bob {
            return Err(WireError::Session("endpoints must be pairwise distinct".into()));
        }
        if !matches!(self.experiment.mode, crate::config::ModeDocument::Sampled) {
            return Err(WireError::Session("distributed sessions must use sampled mode".into()));
        }
        Ok(())
    }

    pub fn config_hash(&self) -> [u8; 32] {
        self.experiment.config_hash()
    }
}

/// One structured log line. The distributed tests reconstruct the trigger
/// discipline from these: a `BobMeasurement` may only follow a `PsOutcome`
/// with bit 1 for the same copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    PsOutcome { k: u32, set: u8, copy: u64, bit: u8 },
    BobMeasurement { k: u32, set: u8, copy: u64, eigenvalue_index: u16 },
    PsBitSent { k: u32, set: u8, copy: u64, bit: u8 },
    MeasRequestSent { k: u32, set: u8, copy: u64 },
    Aborted { reason: String },
}

/// JSONL sink; a no-op when no path is configured.
pub struct MessageLog {
    writer: Option<BufWriter<File>>,
}

impl MessageLog {
    pub fn open(path: Option<&PathBuf>) -> Result<Self, WireError> {
        let writer = match path {
            Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| {
                WireError::Session(format!("cannot create log {}: {e}", p.display()))
            })?)),
            None => None,
        };
        Ok(Self { writer })
    }

    pub fn record(&mut self, event: &LogEvent) {
        if let Some(w) = &mut self.writer {
            // Logging must never take the session down.
            if serde_json::to_writer(&mut *w, event).is_ok() {
                let _ = w.write_all(b"\n");
            }
        }
    }

    pub fn flush(&mut self) {
        if let Some(w) = &mut self.writer {
            let _ = w.flush();
        }
    }
}

/// Parses a JSONL message log back into events.
pub fn read_log(path: &Path) -> Result<Vec<LogEvent>, WireError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| WireError::Session(format!("cannot read log {}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| WireError::Session(format!("bad log line: {e}")))
        })
        .collect()
}
