//! Annotated dialog corpora.
//!
//! A corpus is a set of dialogs whose questioner turns carry a single
//! semantic annotation each. Labels are opaque strings: two questions share
//! a meaning exactly when their trimmed labels are byte-equal.
//!
//! Corpora are immutable. Edits go through [`CorpusRecords`] and produce a
//! new [`Corpus`] whose `version_id` is one past its parent.

mod anonymize;
mod jsonl;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use anonymize::{anonymize, audit_anonymization, AnonymizationReport, Dictionary, Replacement, ReplacementPattern};
pub use jsonl::{DialogRecord, TurnRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate turn_id {turn_id:?}")]
    DuplicateTurnId { line: usize, turn_id: String },
    #[error("line {line}: duplicate dialog_id {dialog_id:?}")]
    DuplicateDialogId { line: usize, dialog_id: String },
    #[error("line {line}: turn {turn_id:?} is an answerer turn but carries an annotation")]
    AnnotatedAnswer { line: usize, turn_id: String },
    #[error("line {line}: turn {turn_id:?} has index {found}, expected {expected}")]
    NonContiguousIndex {
        line: usize,
        turn_id: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: turn {turn_id:?} has empty text")]
    EmptyText { line: usize, turn_id: String },
    #[error("line {line}: turn {turn_id:?} has an empty annotation")]
    EmptyLabel { line: usize, turn_id: String },
    #[error("line {line}: empty {field}")]
    EmptyId { line: usize, field: &'static str },
    #[error("empty annotation label")]
    InvalidLabel,
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CorpusError {
    fn from(err: std::io::Error) -> Self {
        CorpusError::Io(err.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Questioner,
    Answerer,
}

/// A semantic predicate label such as `e.valence==negative`.
///
/// Stored trimmed; equality is exact on the trimmed string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AnnotationLabel(String);

impl AnnotationLabel {
    pub fn new(value: impl AsRef<str>) -> Result<Self, CorpusError> {
        let trimmed = value.as_ref().trim();
        if trimmed.is_empty() {
            return Err(CorpusError::InvalidLabel);
        }
        Ok(AnnotationLabel(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for AnnotationLabel {
    type Error = CorpusError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        AnnotationLabel::new(value)
    }
}

impl From<AnnotationLabel> for String {
    fn from(label: AnnotationLabel) -> Self {
        label.0
    }
}

impl fmt::Display for AnnotationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Turn {
    pub turn_id: String,
    pub dialog_id: String,
    pub index: usize,
    pub speaker: Speaker,
    /// Verbatim; typos and casing are preserved.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialog {
    pub dialog_id: String,
    pub participants: Vec<String>,
    pub turns: Vec<Turn>,
}

/// A questioner turn together with its label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedQuestion {
    pub turn: Turn,
    pub label: AnnotationLabel,
}

impl AnnotatedQuestion {
    pub fn turn_id(&self) -> &str {
        &self.turn.turn_id
    }

    pub fn text(&self) -> &str {
        &self.turn.text
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TurnLoc {
    dialog: usize,
    turn: usize,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    version_id: u64,
    parent_version: Option<u64>,
    dialogs: Vec<Dialog>,
    questions: Vec<AnnotatedQuestion>,
    turn_index: HashMap<String, TurnLoc>,
    question_index: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.version_id == other.version_id
            && self.parent_version == other.parent_version
            && self.dialogs == other.dialogs
            && self.questions == other.questions
    }
}

impl Eq for Corpus {}

/// Mutable, unvalidated form of a corpus used to stage edits.
pub type CorpusRecords = Vec<DialogRecord>;

impl Corpus {
    /// Parses corpus JSONL and validates it. The result is version 1.
    pub fn parse<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
        let (records, line_of) = jsonl::read_records(reader)?;
        Corpus::from_records(records, 1, None).map_err(|e| jsonl::remap_line(e, &line_of))
    }

    pub fn parse_str(input: &str) -> Result<Corpus, CorpusError> {
        Corpus::parse(input.as_bytes())
    }

    pub fn empty() -> Corpus {
        Corpus {
            version_id: 1,
            parent_version: None,
            dialogs: Vec::new(),
            questions: Vec::new(),
            turn_index: HashMap::new(),
            question_index: HashMap::new(),
        }
    }

    /// Validates records into a corpus with the given version bookkeeping.
    ///
    /// Errors carry the 1-based position of the offending dialog, which is
    /// its line number in JSONL form.
    pub fn from_records(
        records: CorpusRecords,
        version_id: u64,
        parent_version: Option<u64>,
    ) -> Result<Corpus, CorpusError> {
        let mut dialogs = Vec::with_capacity(records.len());
        let mut questions = Vec::new();
        let mut turn_index = HashMap::new();
        let mut question_index = HashMap::new();
        let mut dialog_ids = HashMap::new();

        for (d, record) in records.into_iter().enumerate() {
            let line = d + 1;
            if record.dialog_id.is_empty() {
                return Err(CorpusError::EmptyId {
                    line,
                    field: "dialog_id",
                });
            }
            if dialog_ids.insert(record.dialog_id.clone(), d).is_some() {
                return Err(CorpusError::DuplicateDialogId {
                    line,
                    dialog_id: record.dialog_id,
                });
            }
            let mut turns = Vec::with_capacity(record.turns.len());
            for (t, tr) in record.turns.into_iter().enumerate() {
                if tr.turn_id.is_empty() {
                    return Err(CorpusError::EmptyId { line, field: "turn_id" });
                }
                if tr.index != t {
                    return Err(CorpusError::NonContiguousIndex {
                        line,
                        turn_id: tr.turn_id,
                        expected: t,
                        found: tr.index,
                    });
                }
                if tr.text.trim().is_empty() {
                    return Err(CorpusError::EmptyText {
                        line,
                        turn_id: tr.turn_id,
                    });
                }
                if turn_index.contains_key(&tr.turn_id) {
                    return Err(CorpusError::DuplicateTurnId {
                        line,
                        turn_id: tr.turn_id,
                    });
                }
                let turn = Turn {
                    turn_id: tr.turn_id,
                    dialog_id: record.dialog_id.clone(),
                    index: tr.index,
                    speaker: tr.speaker,
                    text: tr.text,
                };
                if let Some(raw) = tr.annotation {
                    if turn.speaker != Speaker::Questioner {
                        return Err(CorpusError::AnnotatedAnswer {
                            line,
                            turn_id: turn.turn_id,
                        });
                    }
                    let label = AnnotationLabel::new(&raw).map_err(|_| CorpusError::EmptyLabel {
                        line,
                        turn_id: turn.turn_id.clone(),
                    })?;
                    question_index.insert(turn.turn_id.clone(), questions.len());
                    questions.push(AnnotatedQuestion {
                        turn: turn.clone(),
                        label,
                    });
                }
                turn_index.insert(turn.turn_id.clone(), TurnLoc { dialog: d, turn: t });
                turns.push(turn);
            }
            dialogs.push(Dialog {
                dialog_id: record.dialog_id,
                participants: record.participants,
                turns,
            });
        }

        Ok(Corpus {
            version_id,
            parent_version,
            dialogs,
            questions,
            turn_index,
            question_index,
        })
    }

    /// Unvalidated copy of the corpus content, for staging edits.
    pub fn to_records(&self) -> CorpusRecords {
        self.dialogs
            .iter()
            .map(|dialog| DialogRecord {
                dialog_id: dialog.dialog_id.clone(),
                participants: dialog.participants.clone(),
                turns: dialog
                    .turns
                    .iter()
                    .map(|turn| TurnRecord {
                        turn_id: turn.turn_id.clone(),
                        index: turn.index,
                        speaker: turn.speaker,
                        text: turn.text.clone(),
                        annotation: self.label_of(&turn.turn_id).map(|l| l.as_str().to_string()),
                    })
                    .collect(),
            })
            .collect()
    }

    /// Builds the next version from edited records.
    pub fn derive(&self, records: CorpusRecords) -> Result<Corpus, CorpusError> {
        Corpus::from_records(records, self.version_id + 1, Some(self.version_id))
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<(), CorpusError> {
        for record in self.to_records() {
            serde_json::to_writer(&mut writer, &record).map_err(|e| CorpusError::Io(e.to_string()))?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn version_id(&self) -> u64 {
        self.version_id
    }

    pub fn parent_version(&self) -> Option<u64> {
        self.parent_version
    }

    /// Same content, different version bookkeeping.
    pub fn with_version(mut self, version_id: u64, parent_version: Option<u64>) -> Corpus {
        self.version_id = version_id;
        self.parent_version = parent_version;
        self
    }

    pub fn dialogs(&self) -> &[Dialog] {
        &self.dialogs
    }

    pub fn questions(&self) -> &[AnnotatedQuestion] {
        &self.questions
    }

    pub fn turn_count(&self) -> usize {
        self.turn_index.len()
    }

    pub fn turn(&self, turn_id: &str) -> Option<&Turn> {
        let loc = self.turn_index.get(turn_id)?;
        Some(&self.dialogs[loc.dialog].turns[loc.turn])
    }

    pub fn dialog(&self, dialog_id: &str) -> Option<&Dialog> {
        self.dialogs.iter().find(|d| d.dialog_id == dialog_id)
    }

    pub fn question(&self, turn_id: &str) -> Option<&AnnotatedQuestion> {
        self.question_index.get(turn_id).map(|&i| &self.questions[i])
    }

    pub fn label_of(&self, turn_id: &str) -> Option<&AnnotationLabel> {
        self.question(turn_id).map(|q| &q.label)
    }

    /// Turns around `turn_id` in its dialog, `radius` on each side.
    pub fn context(&self, turn_id: &str, radius: usize) -> Option<&[Turn]> {
        let loc = self.turn_index.get(turn_id)?;
        let turns = &self.dialogs[loc.dialog].turns;
        let start = loc.turn.saturating_sub(radius);
        let end = (loc.turn + radius + 1).min(turns.len());
        Some(&turns[start..end])
    }
}

/// Occurrence count of every distinct label.
pub fn annotation_histogram(corpus: &Corpus) -> BTreeMap<AnnotationLabel, usize> {
    let mut counts = BTreeMap::new();
    for q in corpus.questions() {
        *counts.entry(q.label.clone()).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_DIALOGS: &str = concat!(
        r#"{"dialog_id":"d1","participants":["p1","p2"],"turns":["#,
        r#"{"turn_id":"d1-0","index":0,"speaker":"questioner","text":"Let me know when you are ready..."},"#,
        r#"{"turn_id":"d1-1","index":1,"speaker":"answerer","text":"ok"},"#,
        r#"{"turn_id":"d1-2","index":2,"speaker":"questioner","text":"is it positive?","annotation":"e.valence==positive"},"#,
        r#"{"turn_id":"d1-3","index":3,"speaker":"answerer","text":"yes"}]}"#,
        "\n",
        r#"{"dialog_id":"d2","participants":["p3","p1"],"turns":["#,
        r#"{"turn_id":"d2-0","index":0,"speaker":"questioner","text":"is it a negative emotion?","annotation":" e.valence==negative "},"#,
        r#"{"turn_id":"d2-1","index":1,"speaker":"answerer","text":"no"}]}"#,
        "\n"
    );

    #[test]
    fn parses_two_dialog_fixture() {
        let corpus = Corpus::parse_str(TWO_DIALOGS).unwrap();
        assert_eq!(corpus.version_id(), 1);
        assert_eq!(corpus.parent_version(), None);
        assert_eq!(corpus.dialogs().len(), 2);
        assert_eq!(corpus.turn_count(), 6);
        assert_eq!(corpus.questions().len(), 2);
        assert_eq!(corpus.label_of("d2-0").unwrap().as_str(), "e.valence==negative");
        assert_eq!(corpus.turn("d2-1").unwrap().dialog_id, "d2");
    }

    #[test]
    fn empty_stream_is_empty_corpus() {
        let corpus = Corpus::parse_str("").unwrap();
        assert_eq!(corpus.version_id(), 1);
        assert!(corpus.dialogs().is_empty());
        assert!(corpus.questions().is_empty());
        assert_eq!(corpus, Corpus::empty());
    }

    #[test]
    fn blank_lines_are_skipped() {
        let input = format!("\n{TWO_DIALOGS}\n\n");
        assert_eq!(Corpus::parse_str(&input).unwrap().questions().len(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let input = format!("{TWO_DIALOGS}{{not json\n");
        match Corpus::parse_str(&input) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_turn_id_rejected() {
        let input = TWO_DIALOGS.replace("\"d2-1\"", "\"d1-1\"");
        assert!(matches!(
            Corpus::parse_str(&input),
            Err(CorpusError::DuplicateTurnId { line: 2, .. })
        ));
    }

    #[test]
    fn annotated_answer_rejected() {
        let input = TWO_DIALOGS.replace(r#""text":"ok"}"#, r#""text":"ok","annotation":"e==ok"}"#);
        assert!(matches!(
            Corpus::parse_str(&input),
            Err(CorpusError::AnnotatedAnswer { line: 1, .. })
        ));
    }

    #[test]
    fn index_gap_rejected() {
        let input = TWO_DIALOGS.replace(r#""turn_id":"d1-3","index":3"#, r#""turn_id":"d1-3","index":4"#);
        assert!(matches!(
            Corpus::parse_str(&input),
            Err(CorpusError::NonContiguousIndex {
                expected: 3,
                found: 4,
                ..
            })
        ));
    }

    #[test]
    fn blank_text_and_label_rejected() {
        let input = TWO_DIALOGS.replace(r#""text":"yes""#, r#""text":"   ""#);
        assert!(matches!(Corpus::parse_str(&input), Err(CorpusError::EmptyText { .. })));
        let input = TWO_DIALOGS.replace(r#""annotation":"e.valence==positive""#, r#""annotation":"  ""#);
        assert!(matches!(Corpus::parse_str(&input), Err(CorpusError::EmptyLabel { .. })));
    }

    #[test]
    fn label_equality_is_trimmed_and_case_sensitive() {
        let a = AnnotationLabel::new("  e==happy ").unwrap();
        assert_eq!(a, AnnotationLabel::new("e==happy").unwrap());
        assert_ne!(a, AnnotationLabel::new("e==Happy").unwrap());
        assert_ne!(a, AnnotationLabel::new("e == happy").unwrap());
        assert!(AnnotationLabel::new(" \t").is_err());
    }

    #[test]
    fn text_is_not_normalized() {
        let input = TWO_DIALOGS.replace("is it positive?", "  jealosy?  ");
        let corpus = Corpus::parse_str(&input).unwrap();
        assert_eq!(corpus.turn("d1-2").unwrap().text, "  jealosy?  ");
    }

    #[test]
    fn serialization_round_trips() {
        let corpus = Corpus::parse_str(TWO_DIALOGS).unwrap();
        let text = corpus.to_jsonl();
        assert_eq!(Corpus::parse_str(&text).unwrap(), corpus);
        // trimmed label is what gets written
        assert!(text.contains(r#""annotation":"e.valence==negative""#));
    }

    #[test]
    fn histogram_counts() {
        let corpus = Corpus::parse_str(TWO_DIALOGS).unwrap();
        let hist = annotation_histogram(&corpus);
        assert_eq!(hist.len(), 2);
        assert_eq!(hist.values().sum::<usize>(), 2);
    }

    #[test]
    fn derive_links_parent() {
        let corpus = Corpus::parse_str(TWO_DIALOGS).unwrap();
        let next = corpus.derive(corpus.to_records()).unwrap();
        assert_eq!(next.version_id(), 2);
        assert_eq!(next.parent_version(), Some(1));
        assert_eq!(next.dialogs(), corpus.dialogs());
    }

    #[test]
    fn context_window_is_clamped() {
        let corpus = Corpus::parse_str(TWO_DIALOGS).unwrap();
        let ctx = corpus.context("d1-0", 2).unwrap();
        assert_eq!(ctx.len(), 3);
        assert_eq!(corpus.context("d2-1", 5).unwrap().len(), 2);
        assert!(corpus.context("nope", 1).is_none());
    }
}
