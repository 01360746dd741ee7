//! Append-only JSONL ledger of verdicts and round advances.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Category, Revision, RevisionAction, TriageError};

/// One verdict, with the revision it stages if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictEntry {
    pub rev_id: u64,
    pub timestamp: DateTime<Utc>,
    pub actor: String,
    pub pair_id: String,
    pub category: Category,
    pub action: Option<RevisionAction>,
    #[serde(default)]
    pub note: String,
    /// Round the verdict was recorded in.
    pub round: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

impl VerdictEntry {
    pub fn revision(&self) -> Option<Revision> {
        self.action.clone().map(|action| Revision {
            rev_id: self.rev_id,
            action,
            provenance: self.pair_id.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvanceEvent {
    NextRound,
}

/// Marks the close of a round; `round` is the round it opened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundAdvance {
    pub rev_id: u64,
    pub timestamp: DateTime<Utc>,
    pub actor: String,
    pub event: AdvanceEvent,
    pub round: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LedgerEntry {
    Advance(RoundAdvance),
    Verdict(VerdictEntry),
}

impl LedgerEntry {
    pub fn rev_id(&self) -> u64 {
        match self {
            LedgerEntry::Advance(a) => a.rev_id,
            LedgerEntry::Verdict(v) => v.rev_id,
        }
    }

    pub fn idempotency_key(&self) -> Option<&str> {
        match self {
            LedgerEntry::Advance(a) => a.idempotency_key.as_deref(),
            LedgerEntry::Verdict(v) => v.idempotency_key.as_deref(),
        }
    }
}

/// The entries in memory, optionally mirrored to a file. Appends reach the
/// file before they reach memory.
#[derive(Debug, Default)]
pub struct Ledger {
    path: Option<PathBuf>,
    file: Option<File>,
    entries: Vec<LedgerEntry>,
}

fn io(err: impl std::fmt::Display) -> TriageError {
    TriageError::Ledger(err.to_string())
}

impl Ledger {
    pub fn in_memory() -> Ledger {
        Ledger::default()
    }

    /// Opens (creating if needed) a ledger file and reads its entries.
    pub fn open(path: impl AsRef<Path>) -> Result<Ledger, TriageError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(|e| io(format!("{}: {e}", path.display())))?;
        let entries = Ledger::read(BufReader::new(&file))?;
        Ok(Ledger {
            path: Some(path),
            file: Some(file),
            entries,
        })
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Vec<LedgerEntry>, TriageError> {
        let mut entries: Vec<LedgerEntry> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: LedgerEntry = serde_json::from_str(&line).map_err(|e| io(format!("line {}: {e}", i + 1)))?;
            if let Some(last) = entries.last() {
                if entry.rev_id() <= last.rev_id() {
                    return Err(io(format!(
                        "line {}: rev_id {} does not increase",
                        i + 1,
                        entry.rev_id()
                    )));
                }
            }
            entries.push(entry);
        }
        Ok(entries)
    }

    pub fn from_entries(entries: Vec<LedgerEntry>) -> Ledger {
        Ledger {
            entries,
            ..Ledger::default()
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn next_rev_id(&self) -> u64 {
        self.entries.last().map_or(1, |e| e.rev_id() + 1)
    }

    pub fn find_key(&self, key: &str) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| e.idempotency_key() == Some(key))
    }

    pub fn append(&mut self, entry: LedgerEntry) -> Result<(), TriageError> {
        if entry.rev_id() < self.next_rev_id() {
            return Err(io(format!("rev_id {} is not past the ledger head", entry.rev_id())));
        }
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_string(&entry).map_err(io)?;
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(io)?;
            file.sync_data().map_err(io)?;
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("ledger entries serialize") + "\n")
            .collect()
    }
}
