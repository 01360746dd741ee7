//! Seeded, optionally stratified train/val/test assignment.
//!
//! Pairs are first sorted by `pair_id` so the shuffle input does not depend
//! on how the dataset was built. The shuffle is an explicit Fisher–Yates
//! driven by ChaCha8, which is stable across platforms.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PairDataset, PairError, Split};

pub const DEFAULT_SEED: u64 = 20;

/// Roughly 200000 / 14306 / 80000 out of 294306.
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.6795, 0.0486, 0.2719];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Train, val, test.
    pub fractions: [f64; 3],
    /// Exact partition sizes; when set they override `fractions` and must
    /// sum to the number of pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<[usize; 3]>,
    pub seed: u64,
    pub stratified: bool,
    /// Keep every pair of a question inside one partition. Pairs whose two
    /// questions land in different partitions are dropped.
    pub group_by_question: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            fractions: DEFAULT_FRACTIONS,
            counts: None,
            seed: DEFAULT_SEED,
            stratified: true,
            group_by_question: false,
        }
    }
}

impl SplitSpec {
    pub fn with_fractions(fractions: [f64; 3], seed: u64) -> SplitSpec {
        SplitSpec {
            fractions,
            seed,
            ..SplitSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), PairError> {
        if self
            .fractions
            .iter()
            .any(|f| !f.is_finite() || !(0.0..=1.0).contains(f))
        {
            return Err(PairError::InvalidSplitSpec(format!(
                "fractions must lie in [0, 1], got {:?}",
                self.fractions
            )));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PairError::InvalidSplitSpec(format!(
                "fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` items by `weights`.
/// Ties go to the earlier partition.
pub(crate) fn apportion(total: usize, weights: [f64; 3]) -> [usize; 3] {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return [0; 3];
    }
    let quotas = weights.map(|w| total as f64 * w / sum);
    let mut seats = quotas.map(|q| q.floor() as usize);
    let assigned: usize = seats.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        seats[k] += 1;
    }
    seats
}

fn fisher_yates<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

fn assign_pool(pool: &[usize], sizes: [usize; 3], assignment: &mut [Split]) {
    let mut it = pool.iter();
    for (split, size) in Split::ALL.into_iter().zip(sizes) {
        for &i in it.by_ref().take(size) {
            assignment[i] = split;
        }
    }
}

/// Assigns every pair to train, val or test. Deterministic in
/// `(dataset, spec)`.
pub fn split(dataset: &PairDataset, spec: &SplitSpec) -> Result<PairDataset, PairError> {
    spec.validate()?;
    if spec.group_by_question {
        return split_grouped(dataset, spec);
    }

    let n = dataset.len();
    let targets = match spec.counts {
        Some(counts) => {
            if counts.iter().sum::<usize>() != n {
                return Err(PairError::InvalidSplitSpec(format!(
                    "partition sizes {counts:?} do not sum to {n} pairs"
                )));
            }
            counts
        }
        None => apportion(n, spec.fractions),
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dataset.pairs[a].pair_id.cmp(&dataset.pairs[b].pair_id));

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut assignment = vec![Split::Train; n];

    if spec.stratified {
        let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| dataset.pairs[i].gold);
        let weights = targets.map(|t| t as f64);
        let pos_sizes = apportion(pos.len(), weights);
        let neg_sizes = [0, 1, 2].map(|k| targets[k] - pos_sizes[k]);

        for (k, split) in Split::ALL.into_iter().enumerate() {
            if spec.fractions[k] > 0.0 || spec.counts.is_some_and(|c| c[k] > 0) {
                for (class, total, got) in [
                    ("positive", pos.len(), pos_sizes[k]),
                    ("negative", neg.len(), neg_sizes[k]),
                ] {
                    if total > 0 && got == 0 {
                        return Err(PairError::Stratification(format!(
                            "{split} partition would receive none of the {total} {class} pairs"
                        )));
                    }
                }
            }
        }

        fisher_yates(&mut pos, &mut rng);
        fisher_yates(&mut neg, &mut rng);
        assign_pool(&pos, pos_sizes, &mut assignment);
        assign_pool(&neg, neg_sizes, &mut assignment);
    } else {
        fisher_yates(&mut order, &mut rng);
        assign_pool(&order, targets, &mut assignment);
    }

    Ok(PairDataset::new(
        dataset.pairs.clone(),
        Some(assignment),
        Some(spec.seed),
        dataset.n_questions,
    ))
}

fn split_grouped(dataset: &PairDataset, spec: &SplitSpec) -> Result<PairDataset, PairError> {
    if spec.counts.is_some() {
        return Err(PairError::InvalidSplitSpec(
            "exact partition sizes cannot be honored when grouping by question".into(),
        ));
    }
    let questions: BTreeSet<&Arc<str>> = dataset.pairs.iter().flat_map(|p| [&p.q1_id, &p.q2_id]).collect();
    let mut questions: Vec<&Arc<str>> = questions.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    fisher_yates(&mut questions, &mut rng);
    let sizes = apportion(questions.len(), spec.fractions);

    let mut home: HashMap<&str, Split> = HashMap::with_capacity(questions.len());
    let mut it = questions.iter();
    for (split, size) in Split::ALL.into_iter().zip(sizes) {
        for q in it.by_ref().take(size) {
            home.insert(q.as_ref(), split);
        }
    }

    let mut pairs = Vec::new();
    let mut assignment = Vec::new();
    for pair in &dataset.pairs {
        let a = home[pair.q1_id.as_ref()];
        if a == home[pair.q2_id.as_ref()] {
            pairs.push(pair.clone());
            assignment.push(a);
        }
    }
    Ok(PairDataset::new(
        pairs,
        Some(assignment),
        Some(spec.seed),
        dataset.n_questions,
    ))
}

/// Keeps every positive and an equal-sized seeded sample of negatives, in
/// the original order. Any split assignment is dropped.
pub fn balance(dataset: &PairDataset, seed: u64) -> PairDataset {
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| dataset.pairs[a].pair_id.cmp(&dataset.pairs[b].pair_id));
    let (pos, mut neg): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| dataset.pairs[i].gold);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fisher_yates(&mut neg, &mut rng);
    neg.truncate(pos.len());

    let mut keep: Vec<usize> = pos.into_iter().chain(neg).collect();
    keep.sort_unstable();
    let pairs = keep.into_iter().map(|i| dataset.pairs[i].clone()).collect();
    PairDataset::new(pairs, None, Some(seed), dataset.n_questions)
}
