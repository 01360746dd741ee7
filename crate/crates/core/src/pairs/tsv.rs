use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::sync::Arc;

use super::{pair_id, PairDataset, PairError, PairInstance, Split};

pub const TSV_HEADER: &str = "pair_id\tq1_id\tq2_id\tlabel\tsplit\ttext1\ttext2";

fn escape(field: &str, out: &mut String) {
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
}

fn unescape(field: &str) -> Result<String, String> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => return Err(format!("unknown escape \\{other}")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}

/// Writes the dataset as TSV, one row per pair in dataset order.
pub fn export_pairs<W: Write>(dataset: &PairDataset, mut sink: W) -> Result<(), PairError> {
    if !dataset.is_split() {
        return Err(PairError::Unsplit);
    }
    let mut line = String::new();
    writeln!(sink, "{TSV_HEADER}")?;
    for (pair, split) in dataset.iter_assigned() {
        line.clear();
        for id in [&pair.pair_id, &pair.q1_id, &pair.q2_id] {
            escape(id, &mut line);
            line.push('\t');
        }
        line.push(if pair.gold { '1' } else { '0' });
        line.push('\t');
        line.push_str(split.expect("checked is_split").as_str());
        line.push('\t');
        escape(&pair.text1, &mut line);
        line.push('\t');
        escape(&pair.text2, &mut line);
        line.push('\n');
        sink.write_all(line.as_bytes())?;
    }
    sink.flush()?;
    Ok(())
}

/// Reads a pairs TSV. Row numbers in errors are file line numbers, header
/// included.
pub fn import_pairs<R: BufRead>(mut source: R) -> Result<PairDataset, PairError> {
    let mut buf = Vec::new();
    let mut row = 0usize;
    let mut pairs = Vec::new();
    let mut assignment = Vec::new();
    let mut seen = HashSet::new();
    let mut interned: HashMap<String, Arc<str>> = HashMap::new();
    let mut intern =
        |s: String| -> Arc<str> { interned.entry(s).or_insert_with_key(|k| Arc::from(k.as_str())).clone() };

    loop {
        buf.clear();
        if source.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        row += 1;
        let err = |message: String| PairError::Tsv { row, message };
        if buf.last() == Some(&b'\n') {
            buf.pop();
        }
        let line = std::str::from_utf8(&buf).map_err(|e| err(e.to_string()))?;
        if row == 1 {
            if line != TSV_HEADER {
                return Err(err(format!("expected header {TSV_HEADER:?}")));
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(err(format!("expected 7 columns, got {}", fields.len())));
        }
        let field = |i: usize| unescape(fields[i]).map_err(err);
        let (id, q1, q2) = (field(0)?, field(1)?, field(2)?);
        if q1 == q2 {
            return Err(err("q1_id equals q2_id".into()));
        }
        if id != pair_id(&q1, &q2) {
            return Err(err(format!("pair_id {id:?} does not match {q1:?}::{q2:?}")));
        }
        if !seen.insert(id.clone()) {
            return Err(err(format!("duplicate pair_id {id:?}")));
        }
        let gold = match fields[3] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("label must be 0 or 1, got {other:?}"))),
        };
        let split: Split = fields[4].parse().map_err(err)?;
        let (text1, text2) = (field(5)?, field(6)?);
        pairs.push(PairInstance {
            pair_id: Arc::from(id),
            q1_id: intern(q1),
            q2_id: intern(q2),
            text1: intern(text1),
            text2: intern(text2),
            gold,
        });
        assignment.push(split);
    }
    if row == 0 {
        return Err(PairError::Tsv {
            row: 1,
            message: "missing header".into(),
        });
    }

    let n_questions = pairs
        .iter()
        .flat_map(|p| [&p.q1_id, &p.q2_id])
        .collect::<HashSet<_>>()
        .len();
    Ok(PairDataset::new(pairs, Some(assignment), None, n_questions))
}
