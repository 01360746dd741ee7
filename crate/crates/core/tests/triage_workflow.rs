mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{load_fixture, TextScriptedModel};
use concord_core::classifier::OracleBackend;
use concord_core::corpus::annotation_histogram;
use concord_core::pairs::pair_id;
use concord_core::triage::{
    replay_revisions, run_round, Category, EvalScope, Ledger, LedgerEntry, PipelineConfig, RevisionAction, TriageError,
    VerdictRequest, Workflow,
};
use concord_core::Corpus;

const EXAM: &str = "would you feel it if you had an exam the next day?";
const USER13: &str = "would you feel it if you had a user13 the next day?";

/// (sentence 1, sentence 2, annotated, predicted, verdict)
const ROWS: [(&str, &str, u8, u8, &str); 22] = [
    (
        "Do you feel like this when someone close to you dies?",
        "do you feel it when someone dear has passed away?",
        1,
        0,
        "pred",
    ),
    ("jealosy?", "haha, jealousy?", 1, 0, "pred"),
    (
        "id it related to sth disappointing? *is",
        "similar to disappointed?",
        0,
        1,
        "ann",
    ),
    (EXAM, USER13, 1, 0, "prep"),
    (
        "stronger thanoverwhelmed?",
        "is it more intense than overwhelmed?",
        1,
        0,
        "pred",
    ),
    (
        "do you feel it when someone dear has passed away?",
        "would you feel it if someone close to you had died?",
        1,
        0,
        "pred",
    ),
    (
        "is it melancholic?",
        "is it less severe that depressed, sth like melancholic",
        1,
        0,
        "pred",
    ),
    ("is it like misery?", "misery?", 1, 0, "pred"),
    (
        "is it like being optimistic?",
        "is it kinda like being optmistic?",
        1,
        0,
        "pred",
    ),
    (
        "is it kinda like being optmistic?",
        "is it like being optimistic?",
        1,
        0,
        "pred",
    ),
    (
        "id it related to sth disappointing? *is",
        "is it close to being disappointed",
        0,
        1,
        "ann",
    ),
    ("Jealousy?", "jealosy?", 1, 0, "pred"),
    (
        "is it like depression?",
        "so would this be an emotion that might be assimilated to depression",
        0,
        1,
        "ann",
    ),
    ("is it shy?", "is it like being shy?", 1, 0, "pred"),
    (
        "do you feel it when someone dear has passed away?",
        "Do you feel like this when someone close to you dies?",
        1,
        0,
        "pred",
    ),
    ("so more like plain happy?", "is it similar to happy?", 1, 0, "pred"),
    (
        "is it associated with being aggravated?",
        "how about with aggravation?",
        1,
        0,
        "pred",
    ),
    (
        "would you most likely feel this towards someone you don't know?",
        "thanks, do you feel the emotion towards strangers?",
        1,
        0,
        "pred",
    ),
    (
        "is there another person involved?",
        "does it relate to how you feel about other people?",
        0,
        1,
        "ann",
    ),
    (
        "does it relate to how you feel about other people?",
        "is this emotion always related to another persons influence?",
        1,
        0,
        "pred",
    ),
    (
        "felt during betrayal?",
        "are there other situations when you'd feel this emotions besides betrayal?",
        0,
        1,
        "pred",
    ),
    (USER13, EXAM, 1, 0, "prep"),
];

fn config() -> PipelineConfig {
    PipelineConfig {
        eval_scope: EvalScope::All,
        ..PipelineConfig::default()
    }
}

fn model() -> TextScriptedModel {
    TextScriptedModel::new(ROWS.iter().map(|r| (r.0, r.1, r.3 == 1)))
}

fn turn_id_of(corpus: &Corpus, text: &str) -> String {
    let hits: Vec<_> = corpus.questions().iter().filter(|q| q.text() == text).collect();
    assert_eq!(hits.len(), 1, "{text}");
    hits[0].turn_id().to_string()
}

fn row_pair_id(corpus: &Corpus, row: usize) -> String {
    let (a, b, ..) = ROWS[row];
    pair_id(&turn_id_of(corpus, a), &turn_id_of(corpus, b))
}

/// The revision an annotator would attach to each non-model row.
fn revision_for(corpus: &Corpus, row: usize) -> Option<RevisionAction> {
    let merge = |s: &str, t: &str| {
        Some(RevisionAction::MergeLabels {
            source_label: s.into(),
            target_label: t.into(),
        })
    };
    match row + 1 {
        3 | 11 => merge("associated(e,disappointment)", "similar(e,disappointment)"),
        13 => merge("associated(e,depression)", "similar(e,depression)"),
        19 => merge("associated(e,otherPeople)", "associated(e,otherPerson)"),
        4 | 22 => Some(RevisionAction::EditText {
            turn_id: turn_id_of(corpus, USER13),
            new_text: EXAM.into(),
        }),
        _ => None,
    }
}

fn request(corpus: &Corpus, row: usize) -> VerdictRequest {
    VerdictRequest {
        pair_id: row_pair_id(corpus, row),
        category: ROWS[row].4.parse().unwrap(),
        note: format!("row {}", row + 1),
        actor: "annotator".into(),
        action: revision_for(corpus, row),
        idempotency_key: None,
        timestamp: Some("2021-06-01T12:00:00Z".parse().unwrap()),
    }
}

fn triaged_workflow(ledger: Ledger) -> Workflow {
    let base = load_fixture("error_analysis.jsonl");
    let mut wf = Workflow::start(base.clone(), config(), &model(), ledger).unwrap();
    for row in 0..ROWS.len() {
        wf.submit_verdict(request(&base, row)).unwrap();
    }
    wf
}

#[test]
fn fixture_reproduces_the_22_disagreements() {
    let base = load_fixture("error_analysis.jsonl");
    let wf = Workflow::start(base.clone(), config(), &model(), Ledger::in_memory()).unwrap();
    let round = wf.current();
    assert_eq!(round.round(), 1);
    assert_eq!(round.total(), 22);
    assert_eq!(round.open(), 22);
    assert_eq!(round.cursor(), 0);
    // the hapax question is filtered out before pairing
    assert_eq!(round.dataset().n_questions(), 40);
    for (row, (_, _, annotated, predicted, _)) in ROWS.iter().enumerate() {
        let d = round
            .disagreement(&row_pair_id(&base, row))
            .unwrap_or_else(|| panic!("row {}", row + 1));
        assert_eq!(d.gold, *annotated == 1, "row {}", row + 1);
        assert_eq!(d.predicted, *predicted == 1, "row {}", row + 1);
    }
    assert_eq!(round.metrics().errors(), 22);
}

#[test]
fn tallies_match_the_error_analysis() {
    let wf = triaged_workflow(Ledger::in_memory());
    let round = wf.current();
    let t = round.tallies();
    assert_eq!((t.prediction_error, t.annotation_error, t.prep_error), (16, 4, 2));
    assert_eq!(round.open(), 0);
    assert_eq!(round.closed() + round.open(), round.total());
    assert_eq!(round.cursor(), 22);
    // rows 3/11 stage the same merge and rows 4/22 the same edit
    assert_eq!(round.staged_revisions().len(), 4);
    assert_eq!(wf.ledger().entries().len(), 22);
}

#[test]
fn next_round_after_revisions() {
    let mut wf = triaged_workflow(Ledger::in_memory());
    let before = wf.current().dataset().stats().n_positive;
    let next = wf.next_round("annotator", None, &model()).unwrap();
    assert_eq!(next.round(), 2);
    assert_eq!(next.corpus().version_id(), 2);
    assert_eq!(next.corpus().parent_version(), Some(1));

    // only genuine model errors remain
    let base = load_fixture("error_analysis.jsonl");
    let expected: BTreeSet<String> = (0..ROWS.len())
        .filter(|&r| ROWS[r].4 == "pred")
        .map(|r| row_pair_id(&base, r))
        .collect();
    let remaining: BTreeSet<String> = next.disagreements().iter().map(|d| d.pair_id().to_string()).collect();
    assert_eq!(remaining, expected);

    // the repaired exam question now pairs as a positive
    let fixed = next.dataset().get(&row_pair_id(&base, 3)).unwrap();
    assert!(fixed.gold);
    assert_eq!(&*fixed.text2, EXAM);

    // each merge of c_a into c_b adds 2·c_a·c_b positives: three 2-into-2 merges
    assert_eq!(next.dataset().stats().n_positive, before + 3 * 8);

    // an oracle answering from the revised labels has nothing left to disagree about
    let revised = next.corpus().clone();
    let oracle = OracleBackend::from_corpus(&revised);
    let check = run_round(revised, 2, &config(), &oracle).unwrap();
    assert_eq!(check.total(), 0);
}

#[test]
fn open_disagreements_block_the_next_round() {
    let base = load_fixture("error_analysis.jsonl");
    let mut wf = Workflow::start(base.clone(), config(), &model(), Ledger::in_memory()).unwrap();
    wf.submit_verdict(request(&base, 0)).unwrap();
    let err = wf.next_round("annotator", None, &model()).unwrap_err();
    assert!(matches!(err, TriageError::OpenDisagreements(21)), "{err}");
    assert_eq!(wf.current().round(), 1);
}

#[test]
fn only_prediction_errors_leave_gold_unchanged() {
    let base = load_fixture("error_analysis.jsonl");
    let mut wf = Workflow::start(base.clone(), config(), &model(), Ledger::in_memory()).unwrap();
    for row in 0..ROWS.len() {
        let mut req = request(&base, row);
        req.category = Category::PredictionError;
        req.action = None;
        wf.submit_verdict(req).unwrap();
    }
    let gold1: BTreeMap<String, bool> = wf
        .current()
        .dataset()
        .pairs()
        .iter()
        .map(|p| (p.pair_id.to_string(), p.gold))
        .collect();
    let next = wf.next_round("annotator", None, &model()).unwrap();
    let gold2: BTreeMap<String, bool> = next
        .dataset()
        .pairs()
        .iter()
        .map(|p| (p.pair_id.to_string(), p.gold))
        .collect();
    assert_eq!(gold1, gold2);
    assert_eq!(next.total(), 22);
}

#[test]
fn verdict_validation() {
    let base = load_fixture("error_analysis.jsonl");
    let mut wf = Workflow::start(base.clone(), config(), &model(), Ledger::in_memory()).unwrap();

    let mut missing = request(&base, 2);
    missing.action = None;
    assert!(matches!(
        wf.submit_verdict(missing),
        Err(TriageError::MissingRevision(Category::AnnotationError))
    ));

    let mut extra = request(&base, 1);
    extra.action = revision_for(&base, 2);
    assert!(matches!(wf.submit_verdict(extra), Err(TriageError::UnexpectedRevision)));

    let mut unknown = request(&base, 1);
    unknown.pair_id = "nope::nada".into();
    assert!(matches!(wf.submit_verdict(unknown), Err(TriageError::UnknownPair(..))));

    let mut bad_merge = request(&base, 2);
    bad_merge.action = Some(RevisionAction::MergeLabels {
        source_label: "no-such-label".into(),
        target_label: "similar(e,disappointment)".into(),
    });
    assert!(matches!(
        wf.submit_verdict(bad_merge),
        Err(TriageError::Conflict { .. })
    ));

    // a revision that conflicts with one already staged
    wf.submit_verdict(request(&base, 2)).unwrap();
    let mut clash = request(&base, 10);
    clash.action = Some(RevisionAction::MergeLabels {
        source_label: "associated(e,disappointment)".into(),
        target_label: "e==misery".into(),
    });
    assert!(matches!(wf.submit_verdict(clash), Err(TriageError::Conflict { .. })));

    // rejected verdicts leave no trace
    assert_eq!(wf.ledger().entries().len(), 1);
    assert_eq!(wf.current().closed(), 1);
}

#[test]
fn re_verdict_supersedes() {
    let base = load_fixture("error_analysis.jsonl");
    let mut wf = Workflow::start(base.clone(), config(), &model(), Ledger::in_memory()).unwrap();
    let mut first = request(&base, 2);
    first.category = Category::PredictionError;
    first.action = None;
    wf.submit_verdict(first).unwrap();
    assert_eq!(wf.current().tallies().prediction_error, 1);

    wf.submit_verdict(request(&base, 2)).unwrap();
    let round = wf.current();
    assert_eq!(wf.ledger().entries().len(), 2);
    assert_eq!(round.closed(), 1);
    assert_eq!(round.verdicts_recorded(), 2);
    assert_eq!(round.tallies().prediction_error, 0);
    assert_eq!(round.tallies().annotation_error, 1);
    assert_eq!(round.staged_revisions().len(), 1);
}

#[test]
fn idempotency_keys() {
    let base = load_fixture("error_analysis.jsonl");
    let mut wf = Workflow::start(base.clone(), config(), &model(), Ledger::in_memory()).unwrap();
    let mut req = request(&base, 0);
    req.idempotency_key = Some("k1".into());
    let a = wf.submit_verdict(req.clone()).unwrap();
    let b = wf.submit_verdict(req).unwrap();
    assert_eq!(a, b);
    assert_eq!(wf.ledger().entries().len(), 1);
}

#[test]
fn restart_replays_to_the_same_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.jsonl");
    let base = load_fixture("error_analysis.jsonl");
    let (report, corpus2) = {
        let mut wf = triaged_workflow(Ledger::open(&path).unwrap());
        wf.next_round("annotator", Some("advance-1".into()), &model()).unwrap();
        let pending = wf.current().disagreements()[0].pair_id().to_string();
        wf.submit_verdict(VerdictRequest {
            pair_id: pending,
            category: Category::PredictionError,
            note: String::new(),
            actor: "annotator".into(),
            action: None,
            idempotency_key: None,
            timestamp: None,
        })
        .unwrap();
        (wf.current().report(), wf.current().corpus().to_jsonl())
    };

    let mut wf = Workflow::start(base.clone(), config(), &model(), Ledger::open(&path).unwrap()).unwrap();
    assert_eq!(wf.current().report(), report);
    assert_eq!(wf.current().corpus().to_jsonl(), corpus2);
    assert_eq!(wf.rounds().len(), 2);
    assert_eq!(wf.round(1).unwrap().tallies().total(), 22);

    // a retried advance is a no-op
    wf.next_round("annotator", Some("advance-1".into()), &model()).unwrap();
    assert_eq!(wf.current().round(), 2);

    // the ledger alone reproduces every corpus version byte for byte
    let entries = Ledger::open(&path).unwrap().entries().to_vec();
    let replayed = replay_revisions(&base, &entries, false).unwrap();
    assert_eq!(replayed.to_jsonl(), corpus2);
    assert!(matches!(entries.last(), Some(LedgerEntry::Verdict(_))));
}

#[test]
fn tampered_ledger_is_refused() {
    let base = load_fixture("error_analysis.jsonl");
    let wf = triaged_workflow(Ledger::in_memory());
    let mut entries = wf.ledger().entries().to_vec();
    if let LedgerEntry::Verdict(v) = &mut entries[5] {
        v.pair_id = "nope::nada".into();
    }
    let err = Workflow::start(base, config(), &model(), Ledger::from_entries(entries)).unwrap_err();
    assert!(matches!(err, TriageError::Replay { rev_id: 6, .. }), "{err}");
}

#[test]
fn merge_histogram() {
    let base = load_fixture("error_analysis.jsonl");
    let wf = triaged_workflow(Ledger::in_memory());
    let revised = concord_core::triage::apply_revisions(&base, &wf.current().staged_revisions()).unwrap();
    let hist = annotation_histogram(&revised);
    assert_eq!(hist.len(), annotation_histogram(&base).len() - 3);
    let similar = concord_core::AnnotationLabel::new("similar(e,disappointment)").unwrap();
    assert_eq!(hist[&similar], 4);
    assert_eq!(revised.turn_count(), base.turn_count());
    assert_eq!(revised.dialogs().len(), base.dialogs().len());
}
