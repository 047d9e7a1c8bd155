//! The quantile sweep: retrain with the top `q` percent of ranked variables
//! under fixed cross-validation folds and compare against `q = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{f1_score, kfold_split, rank_variables, roc_auc, select_quantile, Criterion, VariableRanking};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::models::{
    auto_select, build_features, complement, predict_rows, sub_seed, train, CustomerEmbeddings, FeatureSet, MissingEmbedding,
    ModelKind, ModelSpec,
};
use crate::registry::Annotations;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "policy", content = "value")]
pub enum ThresholdPolicy {
    Fixed(f64),
    /// The F1-maximizing threshold on the training fold's own scores.
    Tuned,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Fixed(0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Percentages; `0` is always added.
    pub q_list: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub threshold: ThresholdPolicy,
    pub min_rate_support: usize,
    pub missing_embedding: MissingEmbedding,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            q_list: (0..=10).map(|i| i as f64 * 10.0).collect(),
            folds: 10,
            seed: 0,
            threshold: ThresholdPolicy::default(),
            min_rate_support: 20,
            missing_embedding: MissingEmbedding::Drop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub q: f64,
    pub n_variables: usize,
    /// `None` when every fold failed.
    pub f1_mean: Option<f64>,
    pub f1_std: Option<f64>,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    pub f1_impr_pct: Option<f64>,
    pub auc_impr_pct: Option<f64>,
    pub folds_ok: usize,
    /// The spec chosen for this `q` when the model is `auto`.
    pub selected: Option<ModelKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub product_id: String,
    pub criterion: Criterion,
    pub model: ModelKind,
    pub seed: u64,
    pub fold_hash: String,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, q: f64) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.q == q)
    }
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

/// Relative change of `m` over the baseline `m0`, in percent.
pub fn relative_pct(m0: Option<f64>, m: Option<f64>) -> Option<f64> {
    match (m0, m) {
        (Some(b), Some(v)) if b != 0.0 => Some((v - b) / b * 100.0),
        _ => None,
    }
}

fn fold_hash(folds: &[Vec<usize>]) -> String {
    let mut h = Sha256::new();
    for (f, rows) in folds.iter().enumerate() {
        h.update((f as u64).to_le_bytes());
        for &r in rows {
            h.update((r as u64).to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}

fn tuned_threshold<T: Scalar>(y: &[u8], scores: &[T]) -> f64 {
    let mut cands: Vec<f64> = scores.iter().map(|s| s.as_f64()).collect();
    cands.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    cands.dedup();
    let mut best = (f64::NEG_INFINITY, 0.5);
    for t in cands {
        let pred: Vec<u8> = scores.iter().map(|s| u8::from(s.as_f64() >= t)).collect();
        let f = f1_score(y, &pred);
        if f > best.0 {
            best = (f, t);
        }
    }
    best.1
}

struct FoldOutcome {
    f1: f64,
    auc: Option<f64>,
}

fn run_fold<T: Scalar>(data: &FeatureSet<T>, test: &[usize], spec: &ModelSpec, threshold: ThresholdPolicy, seed: u64) -> Result<FoldOutcome> {
    let train_set = data.select_rows(&complement(data.len(), test));
    let test_set = data.select_rows(test);
    let model = train(&train_set, spec, seed)?;
    let scores = predict_rows(&model, &test_set)?;
    let t = match threshold {
        ThresholdPolicy::Fixed(t) => t,
        ThresholdPolicy::Tuned => tuned_threshold(&train_set.y, &predict_rows(&model, &train_set)?),
    };
    let pred: Vec<u8> = scores.iter().map(|s| u8::from(s.as_f64() >= t)).collect();
    Ok(FoldOutcome {
        f1: f1_score(&test_set.y, &pred),
        auc: roc_auc(&test_set.y, &scores).ok(),
    })
}

/// Sweeps over `cfg.q_list` on a feature set whose context block holds
/// every registry variable (column `v` = variable `v`).
///
/// The folds are drawn once and shared by every `q`. For the `auto` model the
/// candidate is chosen separately for each `q` by inner cross-validation over
/// all rows, then scored on the shared folds.
pub fn sweep<T: Scalar>(data: &FeatureSet<T>, ranking: &VariableRanking, spec: &ModelSpec, cfg: &SweepConfig) -> Result<EvalReport> {
    let folds = kfold_split(&data.y, cfg.folds, cfg.seed)?;
    let mut qs = cfg.q_list.clone();
    if !qs.contains(&0.0) {
        qs.push(0.0);
    }
    if qs.iter().any(|q| !(0.0..=100.0).contains(q)) {
        return Err(Error::InvalidArgument("q values must lie in [0, 100]".into()));
    }
    qs.sort_by(|a, b| a.partial_cmp(b).expect("finite q"));
    qs.dedup();

    let mut rows = Vec::with_capacity(qs.len());
    for (qi, &q) in qs.iter().enumerate() {
        let cols = select_quantile(ranking, q);
        let data_q = data.select_context(&cols);
        let q_seed = sub_seed(cfg.seed, qi as u64);
        let (fold_spec, selected) = match spec {
            ModelSpec::Auto(p) => match auto_select(&data_q, &p.candidates, p.folds, q_seed) {
                Ok(m) => (m.spec.clone(), Some(m.spec.kind())),
                Err(e) => {
                    log::warn!("auto selection failed at q={q}: {e}");
                    rows.push(EvalRow {
                        q,
                        n_variables: cols.len(),
                        f1_mean: None,
                        f1_std: None,
                        auc_mean: None,
                        auc_std: None,
                        f1_impr_pct: None,
                        auc_impr_pct: None,
                        folds_ok: 0,
                        selected: None,
                    });
                    continue;
                }
            },
            other => (other.clone(), None),
        };
        let outcomes: Vec<Result<FoldOutcome>> = folds
            .par_iter()
            .enumerate()
            .map(|(f, test)| run_fold(&data_q, test, &fold_spec, cfg.threshold, sub_seed(q_seed, f as u64 + 1)))
            .collect();
        let mut f1s = Vec::new();
        let mut aucs = Vec::new();
        for (f, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(o) => {
                    f1s.push(o.f1);
                    if let Some(a) = o.auc {
                        aucs.push(a);
                    }
                }
                Err(e) => log::warn!("fold {f} failed at q={q}: {e}"),
            }
        }
        let (f1_mean, f1_std) = mean_std(&f1s);
        let (auc_mean, auc_std) = mean_std(&aucs);
        rows.push(EvalRow {
            q,
            n_variables: cols.len(),
            f1_mean,
            f1_std,
            auc_mean,
            auc_std,
            f1_impr_pct: None,
            auc_impr_pct: None,
            folds_ok: f1s.len(),
            selected,
        });
    }
    let (f0, a0) = (rows[0].f1_mean, rows[0].auc_mean);
    for r in rows.iter_mut() {
        r.f1_impr_pct = relative_pct(f0, r.f1_mean);
        r.auc_impr_pct = relative_pct(a0, r.auc_mean);
    }
    Ok(EvalReport {
        product_id: ranking.product_id.clone(),
        criterion: ranking.criterion,
        model: spec.kind(),
        seed: cfg.seed,
        fold_hash: fold_hash(&folds),
        rows,
    })
}

/// Builds features and the ranking for one product, then sweeps.
pub fn run_sweep(
    c: &Corpus,
    embeddings: &CustomerEmbeddings,
    annotations: &Annotations,
    product: &str,
    spec: &ModelSpec,
    criterion: Criterion,
    cfg: &SweepConfig,
) -> Result<EvalReport> {
    let data: FeatureSet<f64> = build_features(c, product, embeddings, annotations, cfg.missing_embedding)?;
    let ranking = rank_variables(c, annotations, product, criterion, cfg.min_rate_support);
    sweep(&data, &ranking, spec, cfg)
}
