//! Pair-aware stratified splitting and k-fold partitioning.
//!
//! Both operations share one allocator. Partition sizes are apportioned by
//! largest remainder, then each partition's label-1 quota is apportioned by
//! largest remainder over `size * n1 / n` (exact integer arithmetic), which
//! keeps every partition within one item of the global label proportion.
//! Snippets sharing a `pair_id` form one group and always land together.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{label_counts, CorpusError, Snippet};
use crate::seed;

const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self, CorpusError> {
        let spec = SplitSpec {
            train_fraction: train,
            val_fraction: val,
            test_fraction: test,
            seed,
        };
        spec.check()?;
        Ok(spec)
    }

    /// 70/20/10, the proportions behind the 2146/613/307 and 1370/392/196
    /// corpus splits.
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            train_fraction: 0.70,
            val_fraction: 0.20,
            test_fraction: 0.10,
            seed,
        }
    }

    pub fn check(&self) -> Result<(), CorpusError> {
        let fractions = self.fractions();
        if fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(CorpusError::InvalidSplitSpec(format!(
                "every fraction must lie in (0, 1), got {fractions:?}"
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSplitSpec(format!(
                "fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn fractions(&self) -> [f64; 3] {
        [self.train_fraction, self.val_fraction, self.test_fraction]
    }

    /// Partition sizes for `total` items under largest-remainder rounding.
    /// Equal remainders go to the later partition.
    pub fn sizes(&self, total: usize) -> [usize; 3] {
        let sizes = apportion_fractions(total, &self.fractions());
        [sizes[0], sizes[1], sizes[2]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Snippet>,
    pub val: Vec<Snippet>,
    pub test: Vec<Snippet>,
    /// Quota deviations forced by pair groups that could not be placed
    /// exactly. Empty for unpaired data.
    pub deviations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<Snippet>,
    pub holdout: Vec<Snippet>,
}

fn apportion_fractions(total: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|x| (x + TIE_EPS).floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    let remainder = |i: usize| exact[i] - sizes[i] as f64;
    order.sort_by(|&a, &b| {
        let (ra, rb) = (remainder(a), remainder(b));
        if (ra - rb).abs() <= TIE_EPS {
            b.cmp(&a)
        } else {
            rb.total_cmp(&ra)
        }
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Largest-remainder apportionment of `total` over integer weights.
/// Equal remainders go to the later index.
fn apportion_weights(total: usize, weights: &[u128]) -> Vec<usize> {
    let sum: u128 = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let total_w = total as u128;
    let mut sizes: Vec<usize> = weights.iter().map(|w| (total_w * w / sum) as usize).collect();
    let rems: Vec<u128> = weights.iter().map(|w| total_w * w % sum).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| rems[b].cmp(&rems[a]).then(b.cmp(&a)));
    for &i in order.iter().take(total - assigned) {
        sizes[i] += 1;
    }
    sizes
}

struct Group {
    members: Vec<usize>,
    ones: usize,
    zeros: usize,
}

fn groups(dataset: &[Snippet]) -> Vec<Group> {
    let mut out: Vec<Group> = Vec::new();
    let mut by_pair: HashMap<&str, usize> = HashMap::new();
    for (idx, snippet) in dataset.iter().enumerate() {
        let slot = match snippet.pair_id.as_deref() {
            Some(pair) => *by_pair.entry(pair).or_insert_with(|| {
                out.push(Group {
                    members: Vec::new(),
                    ones: 0,
                    zeros: 0,
                });
                out.len() - 1
            }),
            None => {
                out.push(Group {
                    members: Vec::new(),
                    ones: 0,
                    zeros: 0,
                });
                out.len() - 1
            }
        };
        let group = &mut out[slot];
        group.members.push(idx);
        if snippet.label == 1 {
            group.ones += 1;
        } else {
            group.zeros += 1;
        }
    }
    out
}

/// Assigns every snippet index to one of `sizes.len()` bins.
fn allocate(
    dataset: &[Snippet],
    sizes: &[usize],
    mut rng: impl rand::Rng,
) -> (Vec<Vec<usize>>, Vec<String>) {
    let n = dataset.len();
    let (_, n1) = label_counts(dataset);
    let weights: Vec<u128> = sizes.iter().map(|&s| s as u128).collect();
    let ones_quota = apportion_weights(n1, &weights);
    let mut rem_ones: Vec<i64> = ones_quota.iter().map(|&q| q as i64).collect();
    let mut rem_zeros: Vec<i64> = sizes
        .iter()
        .zip(&ones_quota)
        .map(|(&s, &q)| s as i64 - q as i64)
        .collect();

    let mut groups = groups(dataset);
    groups.shuffle(&mut rng);
    // Multi-member groups first; stable, so the shuffled order survives
    // within each size class.
    groups.sort_by_key(|g| std::cmp::Reverse(g.members.len()));

    let mut bins = vec![Vec::new(); sizes.len()];
    let mut deviations = Vec::new();
    for group in &groups {
        let (g1, g0) = (group.ones as i64, group.zeros as i64);
        let fits = |b: usize| rem_ones[b] >= g1 && rem_zeros[b] >= g0;
        // Prefer the bin with the largest remaining share of its size.
        let share = |b: usize| {
            if sizes[b] == 0 {
                f64::NEG_INFINITY
            } else {
                (rem_ones[b] + rem_zeros[b]) as f64 / sizes[b] as f64
            }
        };
        let candidates: Vec<usize> = (0..sizes.len()).filter(|&b| fits(b)).collect();
        let chosen = if candidates.is_empty() {
            let overflow = |b: usize| (g1 - rem_ones[b]).max(0) + (g0 - rem_zeros[b]).max(0);
            let best = (0..sizes.len())
                .min_by(|&a, &b| {
                    overflow(a)
                        .cmp(&overflow(b))
                        .then(share(b).total_cmp(&share(a)))
                        .then(a.cmp(&b))
                })
                .expect("at least one bin");
            let first = &dataset[group.members[0]];
            deviations.push(format!(
                "group of {} (pair `{}`) exceeds quota of partition {} by {}",
                group.members.len(),
                first.pair_id.as_deref().unwrap_or(&first.id),
                best,
                overflow(best)
            ));
            best
        } else {
            *candidates
                .iter()
                .max_by(|&&a, &&b| share(a).total_cmp(&share(b)).then(b.cmp(&a)))
                .expect("non-empty")
        };
        rem_ones[chosen] -= g1;
        rem_zeros[chosen] -= g0;
        bins[chosen].extend_from_slice(&group.members);
    }
    for bin in &mut bins {
        bin.sort_unstable();
    }
    debug_assert_eq!(bins.iter().map(Vec::len).sum::<usize>(), n);
    (bins, deviations)
}

fn require_both_labels(dataset: &[Snippet]) -> Result<(), CorpusError> {
    if dataset.is_empty() {
        return Err(CorpusError::Empty);
    }
    match label_counts(dataset) {
        (_, 0) => Err(CorpusError::SingleClass { label: 0 }),
        (0, _) => Err(CorpusError::SingleClass { label: 1 }),
        _ => Ok(()),
    }
}

fn pick(dataset: &[Snippet], indices: &[usize]) -> Vec<Snippet> {
    indices.iter().map(|&i| dataset[i].clone()).collect()
}

/// Splits a dataset into train/validation/test partitions, stratified by
/// label and deterministic given `spec.seed`. Within each partition the
/// input order is kept.
pub fn stratified_split(dataset: &[Snippet], spec: &SplitSpec) -> Result<Split, CorpusError> {
    spec.check()?;
    require_both_labels(dataset)?;
    let sizes = spec.sizes(dataset.len());
    let (bins, deviations) = allocate(dataset, &sizes, seed::rng(spec.seed, "split", 0));
    Ok(Split {
        train: pick(dataset, &bins[0]),
        val: pick(dataset, &bins[1]),
        test: pick(dataset, &bins[2]),
        deviations,
    })
}

/// Stratified k-fold partition. Holdouts are disjoint and cover the dataset;
/// each fold's train side is the complement of its holdout.
pub fn kfold(dataset: &[Snippet], k: usize, seed: u64) -> Result<Vec<Fold>, CorpusError> {
    if k < 2 {
        return Err(CorpusError::InvalidK(k));
    }
    if dataset.len() < k {
        return Err(CorpusError::TooFewSnippets {
            k,
            size: dataset.len(),
        });
    }
    require_both_labels(dataset)?;
    let sizes = apportion_weights(dataset.len(), &vec![1; k]);
    let (bins, _) = allocate(dataset, &sizes, seed::rng(seed, "kfold", k as u64));
    let mut owner = vec![0usize; dataset.len()];
    for (fold, bin) in bins.iter().enumerate() {
        for &i in bin {
            owner[i] = fold;
        }
    }
    Ok((0..k)
        .map(|fold| {
            let train: Vec<usize> = (0..dataset.len()).filter(|&i| owner[i] != fold).collect();
            Fold {
                train: pick(dataset, &train),
                holdout: pick(dataset, &bins[fold]),
            }
        })
        .collect())
}
