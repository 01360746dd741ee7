use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use concord_core::classifier::{
    wait_for_job, BackendDescriptor, BackendKind, ClassifierBackend, DecisionThreshold, PredictionRecord,
};
use concord_core::corpus::{annotation_histogram, anonymize, audit_anonymization, Dictionary, ReplacementPattern};
use concord_core::eval::{evaluate, extract_disagreements};
use concord_core::pairs::{
    balance, build_pairs, expected_positives, export_pairs, filter_hapaxes, import_pairs, split,
};
use concord_core::triage::{replay_revisions, run_round, Ledger, RevisionAction, VerdictRequest, Workflow};
use concord_core::{Corpus, PairDataset, Split};
use concord_server::ServiceConfig;
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::settings::{Settings, DEFAULT_ADDR, DEFAULT_REFERENCE_ADDR};

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        // a closed pipe (`| head`) is not a failure of the command
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    let file = File::open(path).with_context(|| format!("opening corpus {}", path.display()))?;
    Corpus::parse(BufReader::new(file)).with_context(|| format!("corpus {}", path.display()))
}

fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut sink = BufWriter::new(file);
    corpus.write_jsonl(&mut sink)?;
    sink.flush()?;
    Ok(())
}

fn read_pairs(path: &Path) -> Result<PairDataset> {
    let file = File::open(path).with_context(|| format!("opening pairs {}", path.display()))?;
    import_pairs(BufReader::new(file)).with_context(|| format!("pairs {}", path.display()))
}

fn write_pairs(dataset: &PairDataset, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut sink = BufWriter::new(file);
    export_pairs(dataset, &mut sink)?;
    sink.flush()?;
    Ok(())
}

fn write_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>, path: &Path) -> Result<usize> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut sink = BufWriter::new(file);
    let mut n = 0;
    for item in items {
        serde_json::to_writer(&mut sink, &item)?;
        sink.write_all(b"\n")?;
        n += 1;
    }
    sink.flush()?;
    Ok(n)
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = File::open(path).with_context(|| format!("opening predictions {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn connect(descriptor: &BackendDescriptor) -> Result<Box<dyn ClassifierBackend>> {
    Ok(descriptor.connect()?)
}

pub fn ingest(settings: &Settings, args: IngestArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let hist = annotation_histogram(&corpus);
    let min = settings.min_label_count(args.min_label_count).max(1);
    let kept: Vec<usize> = hist.values().copied().filter(|&c| c >= min).collect();
    let n_kept: usize = kept.iter().sum();
    let mut top: Vec<_> = hist.iter().collect();
    top.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let top: Vec<_> = top
        .into_iter()
        .take(10)
        .map(|(label, count)| json!({"label": label.as_str(), "count": count}))
        .collect();
    if let Some(out) = &args.out {
        write_corpus(&corpus, out)?;
    }
    print_json(&json!({
        "dialogs": corpus.dialogs().len(),
        "turns": corpus.turn_count(),
        "questions": corpus.questions().len(),
        "labels": hist.len(),
        "hapax_labels": hist.values().filter(|&&c| c == 1).count(),
        "min_label_count": min,
        "questions_kept": n_kept,
        "expected_pairs": n_kept * n_kept.saturating_sub(1),
        "expected_positives": expected_positives(kept),
        "top_labels": top,
        "version_id": corpus.version_id(),
        "out": args.out,
    }))
}

pub fn anonymize_cmd(args: AnonymizeArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let mut names = Vec::new();
    if let Some(path) = &args.names {
        let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        names.extend(raw.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from));
    }
    names.extend(args.name.iter().cloned());
    let dictionary = match &args.dictionary {
        Some(path) => {
            let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Dictionary::from_words(raw.lines())
        }
        None => Dictionary::bundled(),
    };
    let (out, report) = anonymize(&corpus, &names, &dictionary, args.force);
    write_corpus(&out, &args.out)?;
    let mut collided: Vec<&str> = report.collisions.iter().map(|r| r.original_span.as_str()).collect();
    collided.sort_unstable();
    collided.dedup();
    print_json(&json!({
        "usernames": names.len(),
        "applied": report.applied_count(),
        "collisions": report.collisions.len(),
        "collided_names": collided,
        "suspect_turns": audit_anonymization(&out, &ReplacementPattern::default()),
        "out": args.out,
    }))
}

fn pairs_summary(dataset: &PairDataset, seed: Option<u64>, out: &Path) -> Result<()> {
    print_json(&json!({"stats": dataset.stats(), "seed": seed, "out": out}))
}

pub fn pairs(settings: &Settings, command: PairsCommand) -> Result<()> {
    match command {
        PairsCommand::Build(args) => {
            let spec = settings.split_spec(&args.split)?;
            let corpus = read_corpus(&args.corpus)?;
            let questions = filter_hapaxes(&corpus, settings.min_label_count(args.min_label_count));
            let dataset = split(&build_pairs(&questions)?, &spec)?;
            write_pairs(&dataset, &args.out)?;
            pairs_summary(&dataset, Some(spec.seed), &args.out)
        }
        PairsCommand::Split(args) => {
            let spec = settings.split_spec(&args.split)?;
            let dataset = split(&read_pairs(&args.pairs)?, &spec)?;
            write_pairs(&dataset, &args.out)?;
            pairs_summary(&dataset, Some(spec.seed), &args.out)
        }
        PairsCommand::Export(args) => {
            let mut part = read_pairs(&args.pairs)?.subset(args.split)?;
            let mut seed = None;
            if args.balance {
                let s = settings.seed(args.seed);
                part = balance(&part, s).assign_all(args.split);
                seed = Some(s);
            }
            write_pairs(&part, &args.out)?;
            pairs_summary(&part, seed, &args.out)
        }
    }
}

pub fn train(settings: &Settings, args: TrainArgs) -> Result<()> {
    let descriptor = settings.backend(&args.backend)?;
    let config = settings.train_config(args.train_config.as_deref())?;
    let dataset = read_pairs(&args.pairs)?;
    let backend = connect(&descriptor)?;
    let train = dataset.partition(Split::Train)?;
    let val = dataset.partition(Split::Val)?;
    let job = backend.train(&train, &val, &config)?;
    let state = if args.wait {
        let (poll, timeout) = settings.poll();
        wait_for_job(backend.as_ref(), &job, poll, timeout)?
    } else {
        backend.job_status(&job)?
    };
    print_json(&json!({
        "backend": descriptor.kind,
        "job_id": job.job_id,
        "status": state.status,
        "detail": state.detail,
        "n_train": train.len(),
        "n_val": val.len(),
    }))
}

pub fn predict(settings: &Settings, args: PredictArgs) -> Result<()> {
    let descriptor = settings.backend(&args.backend)?;
    let dataset = read_pairs(&args.pairs)?;
    let pairs = args.split.select(&dataset)?;
    let backend = connect(&descriptor)?;
    let predictions = backend.predict(&pairs)?;
    let positive = predictions.iter().filter(|p| p.predicted).count();
    let n = write_jsonl(&predictions, &args.out)?;
    print_json(&json!({
        "backend": descriptor.kind,
        "split": args.split,
        "predictions": n,
        "predicted_positive": positive,
        "out": args.out,
    }))
}

pub fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let predictions = read_predictions(&args.preds)?;
    let gold = args.split.select(&read_pairs(&args.pairs)?)?;
    print_json(&evaluate(&predictions, &gold)?)
}

pub fn disagreements(args: DisagreementArgs) -> Result<()> {
    let predictions = read_predictions(&args.preds)?;
    let gold = args.split.select(&read_pairs(&args.pairs)?)?;
    let corpus = read_corpus(&args.corpus)?;
    let found = extract_disagreements(&predictions, &gold, &corpus)?;
    let n = write_jsonl(found.iter().map(|d| d.to_entry()), &args.out)?;
    print_json(&json!({"disagreements": n, "evaluated": gold.len(), "out": args.out}))
}

struct Loaded {
    workflow: Workflow,
    backend: Box<dyn ClassifierBackend>,
}

fn load_workflow(settings: &Settings, args: &WorkflowArgs) -> Result<Loaded> {
    let descriptor = settings.backend(&args.backend)?;
    let pipeline = settings.pipeline(&args.pipeline)?;
    let corpus = read_corpus(&args.corpus)?;
    let ledger = Ledger::open(&args.ledger).with_context(|| format!("ledger {}", args.ledger.display()))?;
    let backend = connect(&descriptor)?;
    let workflow = Workflow::start(corpus, pipeline, backend.as_ref(), ledger)?;
    Ok(Loaded { workflow, backend })
}

pub fn triage_serve(settings: &Settings, args: ServeArgs) -> Result<()> {
    let config = ServiceConfig {
        corpus: args.workflow.corpus.clone(),
        ledger: args.workflow.ledger.clone(),
        backend: settings.backend(&args.workflow.backend)?,
        pipeline: settings.pipeline(&args.workflow.pipeline)?,
        token: settings.token(args.token),
    };
    let addr = settings.addr(args.addr, DEFAULT_ADDR)?;
    let state = concord_server::load(&config)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = concord_server::bind(addr).await?;
        announce(&listener)?;
        concord_server::serve(state, listener).await?;
        Ok(())
    })
}

/// One JSON line with the bound address, so callers that asked for port 0
/// can find the service.
fn announce(listener: &tokio::net::TcpListener) -> Result<()> {
    let addr = listener.local_addr()?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", json!({"listening": format!("http://{addr}")}))?;
    out.flush()?;
    Ok(())
}

pub fn verdict_add(settings: &Settings, args: VerdictAddArgs) -> Result<()> {
    let action = match (&args.relabel, &args.merge_from, &args.edit) {
        (Some(turn_id), _, _) => Some(RevisionAction::RelabelTurn {
            turn_id: turn_id.clone(),
            new_label: args.label.clone().unwrap_or_default(),
        }),
        (_, Some(source), _) => Some(RevisionAction::MergeLabels {
            source_label: source.clone(),
            target_label: args.merge_into.clone().unwrap_or_default(),
        }),
        (_, _, Some(turn_id)) => Some(RevisionAction::EditText {
            turn_id: turn_id.clone(),
            new_text: args.text.clone().unwrap_or_default(),
        }),
        _ => None,
    };
    let mut loaded = load_workflow(settings, &args.workflow)?;
    let entry = loaded.workflow.submit_verdict(VerdictRequest {
        pair_id: args.pair_id,
        category: args.category,
        note: args.note,
        actor: args.actor,
        action,
        idempotency_key: args.idempotency_key,
        timestamp: None,
    })?;
    print_json(&entry)
}

pub fn apply(args: ApplyArgs) -> Result<()> {
    let base = read_corpus(&args.corpus)?;
    let file = File::open(&args.ledger).with_context(|| format!("opening ledger {}", args.ledger.display()))?;
    let entries = Ledger::read(BufReader::new(file)).with_context(|| format!("ledger {}", args.ledger.display()))?;
    let revised = replay_revisions(&base, &entries, args.include_pending)?;
    write_corpus(&revised, &args.out)?;
    print_json(&json!({
        "version_id": revised.version_id(),
        "parent_version": revised.parent_version(),
        "ledger_entries": entries.len(),
        "questions": revised.questions().len(),
        "labels": annotation_histogram(&revised).len(),
        "out": args.out,
    }))
}

pub fn round_next(settings: &Settings, args: RoundNextArgs) -> Result<()> {
    let mut loaded = load_workflow(settings, &args.workflow)?;
    let round = loaded
        .workflow
        .next_round(&args.actor, args.idempotency_key, loaded.backend.as_ref())?;
    print_json(&round.report())
}

pub fn report(settings: &Settings, args: ReportArgs) -> Result<()> {
    let loaded = load_workflow(settings, &args.workflow)?;
    let rounds: Vec<_> = loaded.workflow.rounds().iter().map(|r| r.report()).collect();
    print_json(&json!({"current": loaded.workflow.current().round(), "rounds": rounds}))
}

pub fn audit(settings: &Settings, args: AuditArgs) -> Result<()> {
    let descriptor = settings.backend(&args.backend)?;
    if descriptor.kind == BackendKind::Oracle {
        bail!(
            "the oracle backend predicts from the annotations under audit, so it can never disagree with them; \
             use --backend lexical or remote"
        );
    }
    let pipeline = settings.pipeline(&args.pipeline)?;
    let corpus = read_corpus(&args.corpus)?;
    let backend = connect(&descriptor)?;
    let round = run_round(Arc::new(corpus), 1, &pipeline, backend.as_ref())?;
    let n = write_jsonl(round.disagreements().iter().map(|d| d.to_entry()), &args.out)?;
    let mut summary = serde_json::to_value(round.report())?;
    summary["queue_written"] = json!(n);
    summary["out"] = json!(args.out);
    summary["split"] = serde_json::to_value(
        round
            .dataset()
            .stats()
            .splits
            .iter()
            .map(|(s, p)| (s.as_str(), p.n_pairs))
            .collect::<BTreeMap<_, _>>(),
    )?;
    print_json(&summary)
}

pub fn reference_backend(settings: &Settings, args: ReferenceArgs) -> Result<()> {
    let threshold = match settings.threshold(args.threshold) {
        Some(t) => DecisionThreshold::new(t)?,
        None => DecisionThreshold::default(),
    };
    let addr = settings.addr(args.addr, DEFAULT_REFERENCE_ADDR)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = concord_server::bind(addr).await?;
        announce(&listener)?;
        concord_server::serve_reference(threshold, listener).await?;
        Ok(())
    })
}
