//! The append-only event log: one JSON object per line.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classification::{DeletionReport, Obligation, OverrideStatus, Verdict};
use crate::contracts::ContractReport;
use crate::descriptor::ProductDescriptor;
use crate::enforcement::Mode;
use crate::mesh::{PortRef, ProductId};
use crate::policy::{Action, Effect, RuleId, Subject};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    LabelDefined {
        name: String,
        obligations: BTreeSet<Obligation>,
        #[serde(default)]
        description: String,
    },
    ProductRegistered {
        descriptor: ProductDescriptor,
    },
    ProductDecommissioned {
        product: ProductId,
        force: bool,
    },
    PortTagged {
        port: PortRef,
        labels: BTreeSet<String>,
    },
    OverrideRequested {
        port: PortRef,
        labels: BTreeSet<String>,
        justification: String,
        /// Outcome at request time; replay recomputes and checks it.
        id: u64,
        status: OverrideStatus,
    },
    OverrideReviewed {
        id: u64,
        verdict: Verdict,
    },
    PolicyApplied {
        name: String,
        text: String,
    },
    AccessDecided {
        subject: Subject,
        port: PortRef,
        action: Action,
        mode: Mode,
        effect: Effect,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matched_rule: Option<RuleId>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        denied_columns: Vec<String>,
        /// Set when the request was refused before policy evaluation.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        refused: Option<String>,
    },
    TokenIssued {
        subject: String,
        port: PortRef,
        action: Action,
        expires_at: u64,
        nonce: String,
    },
    KeyHandedOut {
        subject: String,
        key_id: String,
        port: PortRef,
    },
    ContractRun {
        report: ContractReport,
    },
    SubjectForgotten {
        /// SHA-256 of the subject id, so the log does not keep the identifier.
        subject_sha256: String,
        report: DeletionReport,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::LabelDefined { .. } => "label_defined",
            Event::ProductRegistered { .. } => "product_registered",
            Event::ProductDecommissioned { .. } => "product_decommissioned",
            Event::PortTagged { .. } => "port_tagged",
            Event::OverrideRequested { .. } => "override_requested",
            Event::OverrideReviewed { .. } => "override_reviewed",
            Event::PolicyApplied { .. } => "policy_applied",
            Event::AccessDecided { .. } => "access_decided",
            Event::TokenIssued { .. } => "token_issued",
            Event::KeyHandedOut { .. } => "key_handed_out",
            Event::ContractRun { .. } => "contract_run",
            Event::SubjectForgotten { .. } => "subject_forgotten",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub ts: u64,
    pub actor: String,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("event log I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("event log corrupt at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("event log gap: expected sequence {expected}, found {found}")]
    Gap { expected: u64, found: u64 },
}

impl LogError {
    /// The sequence number or line where the log went wrong.
    pub fn offending_seq(&self) -> Option<u64> {
        match self {
            LogError::Gap { found, .. } => Some(*found),
            LogError::Corrupt { line, .. } => Some(*line as u64),
            LogError::Io { .. } => None,
        }
    }
}

pub const LOG_FILE: &str = "events.jsonl";

/// Parses JSON-lines text and checks that sequence numbers run 1, 2, 3...
pub fn parse_log(text: &str) -> Result<Vec<EventRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord = serde_json::from_str(line).map_err(|e| LogError::Corrupt {
            line: i + 1,
            message: e.to_string(),
        })?;
        let expected = out.len() as u64 + 1;
        if record.seq != expected {
            return Err(LogError::Gap {
                expected,
                found: record.seq,
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn encode_record(record: &EventRecord) -> String {
    let mut line = serde_json::to_string(record).expect("event serializes");
    line.push('\n');
    line
}

/// Append-only log, file-backed or in memory.
#[derive(Debug)]
pub struct EventLog {
    file: Option<(PathBuf, File)>,
    records: Vec<EventRecord>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog {
            file: None,
            records: Vec::new(),
        }
    }

    /// Opens (creating if needed) `events.jsonl` under `dir` and reads it.
    pub fn open(dir: &Path) -> Result<Self, LogError> {
        let path = dir.join(LOG_FILE);
        let io = |source| LogError::Io {
            path: path.clone(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        let mut text = String::new();
        for line in BufReader::new(&file).lines() {
            text.push_str(&line.map_err(io)?);
            text.push('\n');
        }
        let records = parse_log(&text)?;
        Ok(EventLog {
            file: Some((path, file)),
            records,
        })
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    /// Writes and syncs the record before it counts as appended.
    pub fn append(&mut self, record: EventRecord) -> Result<(), LogError> {
        let expected = self.records.len() as u64 + 1;
        if record.seq != expected {
            return Err(LogError::Gap {
                expected,
                found: record.seq,
            });
        }
        if let Some((path, file)) = &mut self.file {
            let io = |source| LogError::Io {
                path: path.clone(),
                source,
            };
            file.write_all(encode_record(&record).as_bytes()).map_err(io)?;
            file.sync_data().map_err(io)?;
        }
        self.records.push(record);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seq: u64) -> EventRecord {
        EventRecord {
            seq,
            ts: 100 + seq,
            actor: "gov".into(),
            event: Event::PortTagged {
                port: "m/a:out".parse().unwrap(),
                labels: ["public".to_string()].into(),
            },
        }
    }

    #[test]
    fn flat_line_shape() {
        let line = encode_record(&record(1));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["kind"], "port_tagged");
        assert_eq!(v["payload"]["port"], "m/a:out");
        assert_eq!(v["seq"], 1);
        assert!(line.ends_with('\n') && !line.trim_end().contains('\n'));
        let back: EventRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, record(1));
    }

    #[test]
    fn gap_is_reported_at_offending_seq() {
        let text = [record(1), record(2), record(4)]
            .iter()
            .map(encode_record)
            .collect::<String>();
        let err = parse_log(&text).unwrap_err();
        assert!(matches!(err, LogError::Gap { expected: 3, found: 4 }));
        assert_eq!(err.offending_seq(), Some(4));
        assert!(parse_log("").unwrap().is_empty());
        assert!(matches!(
            parse_log("{not json}\n"),
            Err(LogError::Corrupt { line: 1, .. })
        ));
    }

    #[test]
    fn file_log_reopens() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = EventLog::open(dir.path()).unwrap();
        log.append(record(1)).unwrap();
        log.append(record(2)).unwrap();
        assert!(log.append(record(5)).is_err());
        drop(log);
        let log = EventLog::open(dir.path()).unwrap();
        assert_eq!(log.len(), 2);
    }
}
