use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Speaker};

/// One dialog line of corpus JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogRecord {
    pub dialog_id: String,
    pub participants: Vec<String>,
    pub turns: Vec<TurnRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnRecord {
    pub turn_id: String,
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
}

/// Reads one dialog per non-blank line, returning the records and the
/// file line each one came from.
pub(super) fn read_records<R: BufRead>(reader: R) -> Result<(Vec<DialogRecord>, Vec<usize>), CorpusError> {
    let mut records = Vec::new();
    let mut line_of = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DialogRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        records.push(record);
        line_of.push(line_no);
    }
    Ok((records, line_of))
}

/// Validation errors count dialogs; translate them to file lines.
pub(super) fn remap_line(err: CorpusError, line_of: &[usize]) -> CorpusError {
    let fix = |line: usize| line_of.get(line.wrapping_sub(1)).copied().unwrap_or(line);
    match err {
        CorpusError::Parse { line, message } => CorpusError::Parse {
            line: fix(line),
            message,
        },
        CorpusError::DuplicateTurnId { line, turn_id } => CorpusError::DuplicateTurnId {
            line: fix(line),
            turn_id,
        },
        CorpusError::DuplicateDialogId { line, dialog_id } => CorpusError::DuplicateDialogId {
            line: fix(line),
            dialog_id,
        },
        CorpusError::AnnotatedAnswer { line, turn_id } => CorpusError::AnnotatedAnswer {
            line: fix(line),
            turn_id,
        },
        CorpusError::NonContiguousIndex {
            line,
            turn_id,
            expected,
            found,
        } => CorpusError::NonContiguousIndex {
            line: fix(line),
            turn_id,
            expected,
            found,
        },
        CorpusError::EmptyText { line, turn_id } => CorpusError::EmptyText {
            line: fix(line),
            turn_id,
        },
        CorpusError::EmptyLabel { line, turn_id } => CorpusError::EmptyLabel {
            line: fix(line),
            turn_id,
        },
        CorpusError::EmptyId { line, field } => CorpusError::EmptyId { line: fix(line), field },
        other => other,
    }
}
