//! Per-product propensity classifiers over `[embedding ‖ context]` rows.

pub mod features;
pub mod fm;
pub mod logreg;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{kfold_split, roc_auc};
use crate::scalar::{sigmoid, Scalar};

pub use features::{build_features, CustomerEmbeddings, FeatureSet, MissingEmbedding};
pub use fm::{Fm, FmParams};
pub use logreg::{LogReg, LogRegParams};
pub use tree::{Forest, Gbdt, GbdtParams, RfParams, Tree, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logreg,
    #[serde(alias = "rf")]
    RandomForest,
    Gbdt,
    #[serde(alias = "fm")]
    FactorizationMachine,
    Auto,
}

impl ModelKind {
    /// Short name used on the command line and in reports.
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Logreg => "logreg",
            ModelKind::RandomForest => "rf",
            ModelKind::Gbdt => "gbdt",
            ModelKind::FactorizationMachine => "fm",
            ModelKind::Auto => "auto",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "logreg" => ModelKind::Logreg,
            "rf" | "random_forest" => ModelKind::RandomForest,
            "gbdt" => ModelKind::Gbdt,
            "fm" | "factorization_machine" => ModelKind::FactorizationMachine,
            "auto" => ModelKind::Auto,
            other => return Err(Error::InvalidArgument(format!("unknown model kind `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Logreg(LogRegParams),
    RandomForest(RfParams),
    Gbdt(GbdtParams),
    FactorizationMachine(FmParams),
    Auto(AutoParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoParams {
    pub candidates: Vec<ModelSpec>,
    pub folds: usize,
}

impl Default for AutoParams {
    fn default() -> Self {
        Self {
            candidates: vec![
                ModelSpec::Logreg(LogRegParams::default()),
                ModelSpec::Logreg(LogRegParams {
                    l2: 1e-2,
                    ..Default::default()
                }),
                ModelSpec::FactorizationMachine(FmParams::default()),
                ModelSpec::Gbdt(GbdtParams::default()),
                ModelSpec::RandomForest(RfParams {
                    n_trees: 50,
                    ..Default::default()
                }),
            ],
            folds: 3,
        }
    }
}

impl ModelSpec {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Logreg => ModelSpec::Logreg(Default::default()),
            ModelKind::RandomForest => ModelSpec::RandomForest(Default::default()),
            ModelKind::Gbdt => ModelSpec::Gbdt(Default::default()),
            ModelKind::FactorizationMachine => ModelSpec::FactorizationMachine(Default::default()),
            ModelKind::Auto => ModelSpec::Auto(Default::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Logreg(_) => ModelKind::Logreg,
            ModelSpec::RandomForest(_) => ModelKind::RandomForest,
            ModelSpec::Gbdt(_) => ModelKind::Gbdt,
            ModelSpec::FactorizationMachine(_) => ModelKind::FactorizationMachine,
            ModelSpec::Auto(_) => ModelKind::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum ModelParams<T> {
    Logreg(LogReg<T>),
    FactorizationMachine(Fm<T>),
    Gbdt(Gbdt<T>),
    RandomForest(Forest<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub spec: ModelSpec,
    /// `None` when the candidate failed to train on some fold.
    pub mean_auc: Option<f64>,
    pub fold_aucs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub loss_curve: Vec<f64>,
    pub selection: Vec<SelectionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel<T> {
    pub kind: ModelKind,
    /// The fitted specification; for `auto` the selected candidate.
    pub spec: ModelSpec,
    pub feature_dim: usize,
    pub seed: u64,
    pub params: ModelParams<T>,
    pub log: TrainingLog,
}

/// Mixes a stream index into a seed (SplitMix64 finalizer).
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_trainable<T: Scalar>(data: &FeatureSet<T>) -> Result<()> {
    let pos = data.n_positive();
    if data.is_empty() || pos == 0 || pos == data.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

pub fn train<T: Scalar>(data: &FeatureSet<T>, spec: &ModelSpec, seed: u64) -> Result<PropensityModel<T>> {
    check_trainable(data)?;
    let (params, loss_curve) = match spec {
        ModelSpec::Logreg(p) => {
            let (m, c) = logreg::train_logreg(data, p)?;
            (ModelParams::Logreg(m), c)
        }
        ModelSpec::FactorizationMachine(p) => {
            let (m, c) = fm::train_fm(data, p, seed)?;
            (ModelParams::FactorizationMachine(m), c)
        }
        ModelSpec::Gbdt(p) => {
            let (m, c) = tree::train_gbdt(data, p, seed)?;
            (ModelParams::Gbdt(m), c)
        }
        ModelSpec::RandomForest(p) => (ModelParams::RandomForest(tree::train_forest(data, p, seed)?), Vec::new()),
        ModelSpec::Auto(p) => return auto_select(data, &p.candidates, p.folds, seed),
    };
    if loss_curve.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("training loss"));
    }
    Ok(PropensityModel {
        kind: spec.kind(),
        spec: spec.clone(),
        feature_dim: data.dim(),
        seed,
        params,
        log: TrainingLog {
            loss_curve,
            selection: Vec::new(),
        },
    })
}

/// Score of one concatenated feature vector.
pub fn predict_proba<T: Scalar>(model: &PropensityModel<T>, x: &[T]) -> Result<T> {
    if x.len() != model.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: model.feature_dim,
            actual: x.len(),
        });
    }
    Ok(match &model.params {
        ModelParams::Logreg(m) => m.predict(x),
        ModelParams::FactorizationMachine(m) => m.predict(x),
        ModelParams::Gbdt(m) => m.predict(x),
        ModelParams::RandomForest(m) => m.predict(x),
    })
}

/// Scores for every row of a feature set.
pub fn predict_rows<T: Scalar>(model: &PropensityModel<T>, data: &FeatureSet<T>) -> Result<Vec<T>> {
    if data.dim() != model.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: model.feature_dim,
            actual: data.dim(),
        });
    }
    Ok((0..data.len())
        .into_par_iter()
        .map(|i| match &model.params {
            ModelParams::Logreg(m) => sigmoid(m.margin_row(data, i)),
            ModelParams::FactorizationMachine(m) => sigmoid(m.margin_row(data, i)),
            ModelParams::Gbdt(m) => sigmoid(m.margin_row(data, i)),
            ModelParams::RandomForest(m) => m.predict_row(data, i),
        })
        .collect())
}

/// Mean validation AUC of one spec over the given folds.
pub fn cv_auc<T: Scalar>(data: &FeatureSet<T>, spec: &ModelSpec, folds: &[Vec<usize>], seed: u64) -> Result<Vec<f64>> {
    let results: Vec<Result<Option<f64>>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let train_rows = complement(data.len(), test);
            let model = train(&data.select_rows(&train_rows), spec, sub_seed(seed, f as u64))?;
            let test_set = data.select_rows(test);
            let scores = predict_rows(&model, &test_set)?;
            Ok(roc_auc(&test_set.y, &scores).ok())
        })
        .collect();
    let mut aucs = Vec::new();
    for r in results {
        if let Some(a) = r? {
            aucs.push(a);
        }
    }
    Ok(aucs)
}

/// Sorted indices in `0..n` that are not in `subset` (which must be sorted).
pub fn complement(n: usize, subset: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(n - subset.len());
    let mut it = subset.iter().peekable();
    for i in 0..n {
        if it.peek() == Some(&&i) {
            it.next();
        } else {
            out.push(i);
        }
    }
    out
}

/// Cross-validated choice among candidate specs by mean validation AUC
/// (earlier candidates win ties); the winner is refit on all rows.
pub fn auto_select<T: Scalar>(data: &FeatureSet<T>, candidates: &[ModelSpec], folds: usize, seed: u64) -> Result<PropensityModel<T>> {
    check_trainable(data)?;
    let candidates: Vec<&ModelSpec> = candidates.iter().filter(|c| !matches!(c, ModelSpec::Auto(_))).collect();
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("auto selection needs at least one candidate".into()));
    }
    let mut selection = Vec::new();
    let chosen: &ModelSpec = if candidates.len() == 1 {
        candidates[0]
    } else {
        let split = kfold_split(&data.y, folds, seed)?;
        let mut best: Option<(f64, usize)> = None;
        for (ci, spec) in candidates.iter().enumerate() {
            let entry = match cv_auc(data, spec, &split, seed) {
                Ok(aucs) if !aucs.is_empty() => SelectionEntry {
                    spec: (*spec).clone(),
                    mean_auc: Some(aucs.iter().sum::<f64>() / aucs.len() as f64),
                    fold_aucs: aucs,
                },
                Ok(_) | Err(_) => SelectionEntry {
                    spec: (*spec).clone(),
                    mean_auc: None,
                    fold_aucs: Vec::new(),
                },
            };
            if let Some(m) = entry.mean_auc {
                if best.is_none_or(|(b, _)| m > b) {
                    best = Some((m, ci));
                }
            }
            selection.push(entry);
        }
        let (_, ci) = best.ok_or(Error::NoCandidateTrained)?;
        candidates[ci]
    };
    let mut model = train(data, chosen, seed)?;
    model.kind = ModelKind::Auto;
    model.log.selection = selection;
    Ok(model)
}

/// A trained model tied to the registry its context columns came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub product: String,
    pub registry_hash: String,
    /// Context columns used, as registry variable ids.
    pub context_variables: Vec<usize>,
    pub embed_dim: usize,
    pub model: PropensityModel<f64>,
}

impl ModelBundle {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn check_registry(&self, registry_hash: &str) -> Result<()> {
        if self.registry_hash != registry_hash {
            return Err(Error::RegistrySkew {
                expected: self.registry_hash.clone(),
                actual: registry_hash.to_string(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn learnable(n: usize) -> FeatureSet<f64> {
        let mut f = FeatureSet::new(2, 3);
        for i in 0..n {
            let a = ((i * 37) % 101) as f64 / 101.0 - 0.5;
            let b = ((i * 53) % 97) as f64 / 97.0 - 0.5;
            let ctx: Vec<usize> = if i % 5 == 0 { vec![1] } else { vec![] };
            let y = u8::from(a + 0.3 * b + if i % 5 == 0 { 0.8 } else { 0.0 } > 0.1);
            f.push(format!("d{i:05}"), &[a, b], &ctx, y).unwrap();
        }
        f
    }

    #[test]
    fn single_class_is_rejected() {
        let mut f = FeatureSet::<f64>::new(1, 0);
        f.push("a", &[1.0], &[], 1).unwrap();
        f.push("b", &[2.0], &[], 1).unwrap();
        assert!(matches!(train(&f, &ModelSpec::default_for(ModelKind::Logreg), 0), Err(Error::SingleClass)));
    }

    #[test]
    fn dimension_is_checked() {
        let data = learnable(100);
        let m = train(&data, &ModelSpec::default_for(ModelKind::Logreg), 0).unwrap();
        assert!(matches!(predict_proba(&m, &[0.0; 4]), Err(Error::DimensionMismatch { .. })));
        let p = predict_proba(&m, &data.row(0)).unwrap();
        assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn every_family_learns_and_paths_agree() {
        let data = learnable(400);
        for kind in [ModelKind::Logreg, ModelKind::FactorizationMachine, ModelKind::Gbdt, ModelKind::RandomForest] {
            let m = train(&data, &ModelSpec::default_for(kind), 11).unwrap();
            let rows = predict_rows(&m, &data).unwrap();
            for i in 0..data.len() {
                let direct = predict_proba(&m, &data.row(i)).unwrap();
                assert!((rows[i] - direct).abs() < 1e-12, "{kind}");
            }
            let auc = roc_auc(&data.y, &rows).unwrap();
            assert!(auc > 0.9, "{kind}: {auc}");
        }
    }

    #[test]
    fn auto_prefers_the_learnable_candidate() {
        let data = learnable(300);
        let useless = ModelSpec::Logreg(LogRegParams {
            max_iter: 0,
            ..Default::default()
        });
        let gbdt = ModelSpec::Gbdt(GbdtParams::default());
        let m = auto_select(&data, &[useless.clone(), gbdt.clone()], 3, 1).unwrap();
        assert_eq!(m.kind, ModelKind::Auto);
        assert_eq!(m.spec, gbdt);
        assert_eq!(m.log.selection.len(), 2);
        let single = auto_select(&data, &[useless.clone()], 3, 1).unwrap();
        assert_eq!(single.spec, useless);
    }

    #[test]
    fn bundle_guards_registry_hash() {
        let data = learnable(60);
        let model = train(&data, &ModelSpec::default_for(ModelKind::Logreg), 0).unwrap();
        let b = ModelBundle {
            product: "A".into(),
            registry_hash: "abc".into(),
            context_variables: vec![0, 1, 2],
            embed_dim: 2,
            model,
        };
        let back = ModelBundle::from_json(&b.to_json().unwrap()).unwrap();
        assert_eq!(back, b);
        assert!(back.check_registry("abc").is_ok());
        assert!(matches!(back.check_registry("def"), Err(Error::RegistrySkew { .. })));
    }

    #[test]
    fn complement_of_sorted_subset() {
        assert_eq!(complement(6, &[1, 4]), vec![0, 2, 3, 5]);
    }
}
