//! Username scrubbing and post-hoc audit of the replacement tokens.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusRecords};

const BUNDLED_WORDS: &str = include_str!("../../data/common_words.txt");

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Common-vocabulary guard. Lookups are case-insensitive.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    words: HashSet<String>,
}

impl Dictionary {
    /// The 10k most frequent English words.
    pub fn bundled() -> Dictionary {
        Dictionary::from_words(BUNDLED_WORDS.lines())
    }

    pub fn from_words<I, S>(words: I) -> Dictionary
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        Dictionary { words }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub turn_id: String,
    pub original_span: String,
    pub replacement_token: String,
    /// Byte offset of the span in the original text.
    pub offset: usize,
    /// False for dictionary collisions left in place.
    pub applied: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymizationReport {
    pub replacements: Vec<Replacement>,
    pub collisions: Vec<Replacement>,
}

impl AnonymizationReport {
    pub fn applied_count(&self) -> usize {
        self.replacements.iter().filter(|r| r.applied).count()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn at_word_boundary(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back();
    let after = text[end..].chars().next();
    !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char)
}

/// Replaces whole-word, case-sensitive occurrences of each username with
/// `user{index}`. A username that is also a dictionary word is reported as
/// a collision and left alone unless `force` is set.
///
/// Labels, turn ids and turn order are never touched. The corpus version is
/// kept: anonymization is preprocessing, not a revision.
pub fn anonymize(
    corpus: &Corpus,
    usernames: &[String],
    dictionary: &Dictionary,
    force: bool,
) -> (Corpus, AnonymizationReport) {
    let mut report = AnonymizationReport::default();
    // longest first so "bobby" wins over "bob" at the same position
    let mut names: Vec<(usize, &str)> = Vec::new();
    for (i, name) in usernames.iter().enumerate() {
        if !name.is_empty() && !names.iter().any(|(_, n)| *n == name) {
            names.push((i, name.as_str()));
        }
    }
    names.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));

    if names.is_empty() {
        return (corpus.clone(), report);
    }

    let mut records: CorpusRecords = corpus.to_records();
    for dialog in &mut records {
        for turn in &mut dialog.turns {
            let text = &turn.text;
            let mut out = String::with_capacity(text.len());
            let mut pos = 0;
            let mut copied = 0;
            let mut changed = false;
            while pos < text.len() {
                let hit = names
                    .iter()
                    .find(|(_, name)| text[pos..].starts_with(name) && at_word_boundary(text, pos, pos + name.len()));
                match hit {
                    Some(&(idx, name)) => {
                        let collision = dictionary.contains(name);
                        let applied = !collision || force;
                        let rep = Replacement {
                            turn_id: turn.turn_id.clone(),
                            original_span: name.to_string(),
                            replacement_token: format!("user{idx}"),
                            offset: pos,
                            applied,
                        };
                        if applied {
                            out.push_str(&text[copied..pos]);
                            out.push_str(&rep.replacement_token);
                            copied = pos + name.len();
                            changed = true;
                        }
                        if collision {
                            report.collisions.push(rep.clone());
                        }
                        report.replacements.push(rep);
                        pos += name.len();
                    }
                    None => {
                        pos += text[pos..].chars().next().map_or(1, char::len_utf8);
                    }
                }
            }
            if changed {
                out.push_str(&text[copied..]);
                turn.text = out;
            }
        }
    }

    let revised = Corpus::from_records(records, corpus.version_id(), corpus.parent_version())
        .expect("replacing whole words with non-empty tokens keeps the corpus valid");
    (revised, report)
}

/// Shape of the tokens written by [`anonymize`]: a prefix followed by digits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplacementPattern {
    prefix: String,
}

impl ReplacementPattern {
    pub fn new(prefix: impl Into<String>) -> ReplacementPattern {
        ReplacementPattern { prefix: prefix.into() }
    }

    pub fn matches(&self, token: &str) -> bool {
        token
            .strip_prefix(self.prefix.as_str())
            .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
    }
}

impl Default for ReplacementPattern {
    fn default() -> Self {
        ReplacementPattern::new("user")
    }
}

/// Turns where a replacement token sits right after an article, which a
/// name almost never does ("had a user13 the next day").
pub fn audit_anonymization(corpus: &Corpus, pattern: &ReplacementPattern) -> Vec<String> {
    let mut suspects = Vec::new();
    for dialog in corpus.dialogs() {
        for turn in &dialog.turns {
            let words: Vec<&str> = turn
                .text
                .split(|c: char| !is_word_char(c))
                .filter(|w| !w.is_empty())
                .collect();
            let suspect = words
                .windows(2)
                .any(|pair| pattern.matches(pair[1]) && ARTICLES.contains(&pair[0].to_lowercase().as_str()));
            if suspect {
                suspects.push(turn.turn_id.clone());
            }
        }
    }
    suspects
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_turn(text: &str) -> Corpus {
        let line = serde_json::json!({
            "dialog_id": "d1",
            "participants": ["p"],
            "turns": [
                {"turn_id": "t0", "index": 0, "speaker": "questioner", "text": text, "annotation": "situation(e,exam)"},
                {"turn_id": "t1", "index": 1, "speaker": "answerer", "text": "yes"}
            ]
        });
        Corpus::parse_str(&line.to_string()).unwrap()
    }

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bundled_dictionary_has_common_words() {
        let dict = Dictionary::bundled();
        assert_eq!(dict.len(), 10_000);
        assert!(dict.contains("test"));
        assert!(dict.contains("Exam"));
        assert!(!dict.contains("user13"));
    }

    #[test]
    fn dictionary_username_is_flagged_not_replaced() {
        let text = "would you feel it if you had an exam the next day?";
        let corpus = one_turn(text);
        let dict = Dictionary::from_words(["test", "exam"]);
        let (out, report) = anonymize(&corpus, &names(&["test", "exam"]), &dict, false);
        assert_eq!(out.turn("t0").unwrap().text, text);
        assert_eq!(report.collisions.len(), 1);
        assert_eq!(report.collisions[0].original_span, "exam");
        assert!(report.replacements.contains(&report.collisions[0]));
        assert_eq!(report.applied_count(), 0);
    }

    #[test]
    fn force_replaces_collisions() {
        let corpus = one_turn("would you feel it if you had an exam the next day?");
        let dict = Dictionary::from_words(["exam"]);
        let (out, report) = anonymize(&corpus, &names(&["x", "exam"]), &dict, true);
        assert_eq!(
            out.turn("t0").unwrap().text,
            "would you feel it if you had an user1 the next day?"
        );
        assert_eq!(report.collisions.len(), 1);
        assert!(report.collisions[0].applied);
        // and the audit catches exactly this
        assert_eq!(
            audit_anonymization(&out, &ReplacementPattern::default()),
            vec!["t0".to_string()]
        );
    }

    #[test]
    fn single_substitution() {
        let corpus = one_turn("thanks quillon!");
        let (out, report) = anonymize(&corpus, &names(&["quillon"]), &Dictionary::bundled(), false);
        assert_eq!(out.turn("t0").unwrap().text, "thanks user0!");
        assert_eq!(report.replacements.len(), 1);
        assert!(report.collisions.is_empty());
        assert_eq!(report.replacements[0].offset, 7);
    }

    #[test]
    fn whole_word_and_case_sensitive() {
        let corpus = one_turn("Alice and alice and malice and alice_b and alice.");
        let (out, report) = anonymize(&corpus, &names(&["alice"]), &Dictionary::default(), false);
        assert_eq!(
            out.turn("t0").unwrap().text,
            "Alice and user0 and malice and alice_b and user0."
        );
        assert_eq!(report.replacements.len(), 2);
    }

    #[test]
    fn longer_username_wins() {
        let corpus = one_turn("bob met bobby");
        let (out, _) = anonymize(&corpus, &names(&["bob", "bobby"]), &Dictionary::default(), false);
        assert_eq!(out.turn("t0").unwrap().text, "user0 met user1");
    }

    #[test]
    fn empty_username_list_is_identity() {
        let corpus = one_turn("thanks quillon!");
        let (out, report) = anonymize(&corpus, &[], &Dictionary::bundled(), false);
        assert_eq!(out, corpus);
        assert_eq!(report, AnonymizationReport::default());
    }

    #[test]
    fn non_ascii_text_is_safe() {
        let corpus = one_turn("ça va, zoë? zoë!");
        let (out, report) = anonymize(&corpus, &names(&["zoë"]), &Dictionary::default(), false);
        assert_eq!(out.turn("t0").unwrap().text, "ça va, user0? user0!");
        assert_eq!(report.replacements.len(), 2);
    }

    #[test]
    fn audit_flags_token_after_article() {
        let corpus = one_turn("would you feel it if you had a user13 the next day?");
        assert_eq!(
            audit_anonymization(&corpus, &ReplacementPattern::default()),
            vec!["t0".to_string()]
        );
        let corpus = one_turn("The user2 said so");
        assert_eq!(audit_anonymization(&corpus, &ReplacementPattern::default()).len(), 1);
    }

    #[test]
    fn audit_accepts_name_positions() {
        let corpus = one_turn("did user2 seem happy?");
        assert!(audit_anonymization(&corpus, &ReplacementPattern::default()).is_empty());
        let corpus = one_turn("is it a feeling?");
        assert!(audit_anonymization(&corpus, &ReplacementPattern::default()).is_empty());
        // prefix without digits is just a word
        let corpus = one_turn("a user of the site");
        assert!(audit_anonymization(&corpus, &ReplacementPattern::default()).is_empty());
    }

    #[test]
    fn pattern_matching() {
        let p = ReplacementPattern::default();
        assert!(p.matches("user0"));
        assert!(p.matches("user13"));
        assert!(!p.matches("user"));
        assert!(!p.matches("users1"));
        assert!(!p.matches("User1"));
    }
}
