//! Variable ranking, quantile selection, cross-validation folds, metrics and
//! the quantile sweep with its reports.

pub mod report;
pub mod sweep;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::registry::Annotations;
use crate::scalar::Scalar;

pub use report::{export_report, format_improvement, improvement_pct, read_report_table, write_report_table};
pub use report::{curves_svg, long_tail_svg, write_improvement_table, Metric, ReportRow, REPORT_HEADER};
pub use sweep::{run_sweep, sweep, EvalReport, EvalRow, SweepConfig, ThresholdPolicy};

/// Harmonic mean of precision and recall; 0 when either is undefined or
/// both are zero.
pub fn f1_score(y_true: &[u8], y_pred: &[u8]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == 1, p == 1) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("comparable values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half (Mann–Whitney form).
pub fn roc_auc<T: Scalar>(y_true: &[u8], scores: &[T]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let pos = y_true.iter().filter(|&&y| y == 1).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(y_true).filter(|(_, &y)| y == 1).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs two equal-length samples of size >= 2".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidArgument("spearman undefined for constant input".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Stratified folds: each class is shuffled with the seed and dealt round
/// robin, the negatives continuing where the positives stopped. Fold sizes
/// and per-fold positive counts each differ by at most one.
pub fn kfold_split(y: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || y.len() < k {
        return Err(Error::InvalidArgument(format!("k-fold needs 2 <= k <= n, got k = {k}, n = {}", y.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
    let mut neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] != 1).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (slot, i) in pos.into_iter().chain(neg).enumerate() {
        folds[slot % k].push(i);
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Dialogues offering the product with the variable present and outcome 1.
    Frequency,
    /// That count over the dialogues offering the product with the variable.
    Rate,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Frequency => "frequency",
            Criterion::Rate => "rate",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frequency" => Ok(Criterion::Frequency),
            "rate" => Ok(Criterion::Rate),
            other => Err(Error::InvalidArgument(format!("unknown criterion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedVariable {
    pub variable_id: usize,
    pub score: f64,
    /// Offer dialogues with the variable present.
    pub n_with: usize,
    /// Of those, dialogues with outcome 1.
    pub k_with: usize,
    /// Ranked behind every well-supported variable (rate criterion only).
    pub low_support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableRanking {
    pub product_id: String,
    pub criterion: Criterion,
    pub entries: Vec<RankedVariable>,
    /// Variables never co-occurring with the product under the rate criterion.
    pub excluded: Vec<usize>,
}

impl VariableRanking {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.variable_id).collect()
    }
}

/// Per-variable `(n_with, k_with)` over the dialogues offering `product`.
pub fn variable_counts(c: &Corpus, annotations: &Annotations, product: &str) -> Vec<(usize, usize)> {
    let by_dialogue = annotations.by_dialogue();
    let mut counts = vec![(0usize, 0usize); annotations.n_variables];
    for d in &c.dialogues {
        let Some(offer) = d.offer(product) else { continue };
        for &v in by_dialogue.get(d.dialogue_id.as_str()).copied().unwrap_or(&[]) {
            counts[v].0 += 1;
            counts[v].1 += usize::from(offer.accepted());
        }
    }
    counts
}

/// Orders variables by importance for one product.
///
/// Frequency ties break by rate, then by variable id. Under the rate
/// criterion, variables with fewer than `min_rate_support` co-occurring
/// dialogues rank below all others, ties break by frequency then id, and
/// variables that never co-occur are excluded.
pub fn rank_variables(c: &Corpus, annotations: &Annotations, product: &str, criterion: Criterion, min_rate_support: usize) -> VariableRanking {
    let counts = variable_counts(c, annotations, product);
    let rate = |(n, k): (usize, usize)| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    for (v, &(n, k)) in counts.iter().enumerate() {
        match criterion {
            Criterion::Frequency => entries.push(RankedVariable {
                variable_id: v,
                score: k as f64,
                n_with: n,
                k_with: k,
                low_support: false,
            }),
            Criterion::Rate if n == 0 => excluded.push(v),
            Criterion::Rate => entries.push(RankedVariable {
                variable_id: v,
                score: rate((n, k)),
                n_with: n,
                k_with: k,
                low_support: n < min_rate_support,
            }),
        }
    }
    if !excluded.is_empty() {
        log::warn!("{} variables never co-occur with {product}; excluded from the rate ranking", excluded.len());
    }
    entries.sort_by(|a, b| {
        let by_score = b.score.partial_cmp(&a.score).expect("finite scores");
        match criterion {
            Criterion::Frequency => by_score
                .then(rate((b.n_with, b.k_with)).partial_cmp(&rate((a.n_with, a.k_with))).expect("finite rates"))
                .then(a.variable_id.cmp(&b.variable_id)),
            Criterion::Rate => a
                .low_support
                .cmp(&b.low_support)
                .then(by_score)
                .then(b.k_with.cmp(&a.k_with))
                .then(a.variable_id.cmp(&b.variable_id)),
        }
    });
    VariableRanking {
        product_id: product.to_string(),
        criterion,
        entries,
        excluded,
    }
}

/// Number of variables kept at `q` percent of `n`: `⌊q·n/100⌋`.
pub fn quantile_count(q: f64, n: usize) -> usize {
    let q = q.clamp(0.0, 100.0);
    // guard against 0.1·3·100-style representation error
    ((q * n as f64 / 100.0) + 1e-9).floor() as usize
}

/// The top `⌊q·N/100⌋` variable ids of the ranking.
pub fn select_quantile(ranking: &VariableRanking, q: f64) -> Vec<usize> {
    ranking.entries[..quantile_count(q, ranking.len())].iter().map(|e| e.variable_id).collect()
}

/// Sorted variable frequencies for the long-tail histogram, keyed by rank.
pub fn long_tail(ranking: &VariableRanking) -> BTreeMap<usize, f64> {
    ranking.entries.iter().enumerate().map(|(i, e)| (i + 1, e.score)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(&[1, 0, 1], &[1, 0, 1]), 1.0);
        // TP=2, FP=1, FN=1
        let f = f1_score(&[1, 1, 1, 0, 0], &[1, 1, 0, 1, 0]);
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_score(&[0, 0], &[0, 0]), 0.0);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0, 0, 1, 1], &[0.1, 0.2, 0.3, 0.9]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0, 1, 0, 1], &[0.5; 4]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[1, 1], &[0.1, 0.2]), Err(Error::SingleClass)));
    }

    #[test]
    fn kfold_even_split() {
        let y: Vec<u8> = (0..100).map(|i| u8::from(i % 4 == 0)).collect();
        let folds = kfold_split(&y, 10, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 10));
        assert!(kfold_split(&y[..5], 10, 3).is_err());
    }

    #[test]
    fn quantile_floor_rule() {
        assert_eq!(quantile_count(10.0, 216), 21);
        assert_eq!(quantile_count(100.0, 216), 216);
        assert_eq!(quantile_count(0.0, 216), 0);
        assert_eq!(quantile_count(10.0, 30), 3);
    }

    #[test]
    fn spearman_perfect() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.9]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    }
}
