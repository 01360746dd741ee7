//! Synthetic corpora for the acceptance checks.
//!
//! The public dialog corpus is not bundled, so the checks run on corpora
//! generated here with a controlled label-multiplicity profile.

use concord_core::corpus::{DialogRecord, Speaker, TurnRecord};
use concord_core::Corpus;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `(multiplicity, number of labels with it)`: 147 repeated labels over 543
/// questions with Σc(c−1) = 4588.
pub const REPEATED_PROFILE: &[(usize, usize)] = &[
    (41, 1),
    (25, 1),
    (23, 1),
    (13, 1),
    (12, 1),
    (11, 3),
    (10, 1),
    (9, 3),
    (8, 4),
    (7, 3),
    (6, 6),
    (5, 6),
    (4, 2),
    (3, 4),
    (2, 110),
];

pub const HAPAX_COUNT: usize = 553;
pub const DIALOGS: usize = 110;

/// One label string per question, shuffled by `seed`.
pub fn label_sequence(profile: &[(usize, usize)], hapaxes: usize, seed: u64) -> Vec<String> {
    let mut labels = Vec::new();
    let mut next = 0usize;
    for &(multiplicity, count) in profile {
        for _ in 0..count {
            labels.extend(std::iter::repeat_n(format!("e.p{next}==v"), multiplicity));
            next += 1;
        }
    }
    for h in 0..hapaxes {
        labels.push(format!("cause(h{h},e)"));
    }
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    labels
}

/// Spreads the labelled questions round-robin over `dialogs` dialogs, each
/// question followed by an answer turn.
pub fn corpus_from_labels(labels: &[String], dialogs: usize) -> Corpus {
    let dialogs = dialogs.max(1).min(labels.len().max(1));
    let mut records: Vec<DialogRecord> = (0..dialogs)
        .map(|d| DialogRecord {
            dialog_id: format!("game{d:03}"),
            participants: vec![format!("player{}", d % 25), "answerer".into()],
            turns: Vec::new(),
        })
        .collect();
    for (i, label) in labels.iter().enumerate() {
        let dialog = &mut records[i % dialogs];
        let index = dialog.turns.len();
        dialog.turns.push(TurnRecord {
            turn_id: format!("q{i:04}"),
            index,
            speaker: Speaker::Questioner,
            text: format!("is it like feeling number {i}?"),
            annotation: Some(label.clone()),
        });
        dialog.turns.push(TurnRecord {
            turn_id: format!("a{i:04}"),
            index: index + 1,
            speaker: Speaker::Answerer,
            text: if i % 3 == 0 { "no".into() } else { "yes".into() },
            annotation: None,
        });
    }
    Corpus::from_records(records, 1, None).expect("generated records are valid")
}

/// 1096 annotated questions in 110 dialogs; 543 survive hapax filtering.
pub fn paper_shaped_corpus(seed: u64) -> Corpus {
    corpus_from_labels(&label_sequence(REPEATED_PROFILE, HAPAX_COUNT, seed), DIALOGS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_totals() {
        let labels: usize = REPEATED_PROFILE.iter().map(|(_, k)| k).sum();
        let questions: usize = REPEATED_PROFILE.iter().map(|(c, k)| c * k).sum();
        let positives: usize = REPEATED_PROFILE.iter().map(|(c, k)| c * (c - 1) * k).sum();
        assert_eq!((labels, questions, positives), (147, 543, 4588));
        assert_eq!(labels + HAPAX_COUNT, 700);
    }

    #[test]
    fn corpus_shape() {
        let corpus = paper_shaped_corpus(1);
        assert_eq!(corpus.questions().len(), 543 + 553);
        assert_eq!(corpus.dialogs().len(), 110);
    }
}
