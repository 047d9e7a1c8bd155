//! Pipeline stages as plain functions, plus the store-backed runner that
//! caches their outputs.

pub mod config;
pub mod curation;
pub mod runner;
pub mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clustering::{
    all_cluster_stats, default_grid, select_clustering_scored, ClusterRecord, DistanceMatrix, PruneOutcome, Selection, StatLexicons,
};
use crate::corpus::Corpus;
use crate::embedding::{embed_phrases, to_matrix, EmbeddingProvider, HashingProvider, PhraseVector, RemoteProvider, VectorCache};
use crate::error::{Error, Result};
use crate::lexicon::StopWords;
use crate::linalg::Matrix;
use crate::pca::{pca_fit, pca_transform, PcaModel};
use crate::phrasing::{annotate_significance, generate_supported, remove_stop_phrases, select_significant, CandidateSet, SignificanceOptions, SignificantPhrase};
use crate::registry::{build_registry, majority_select, NegationConfig, Registry, VoteTable};

pub use config::{CurationMode, PipelineConfig, ProviderKind};
pub use curation::{Curation, CurationServer, ServerHandle};
pub use runner::{Runner, Stage, StageOutcome};
pub use store::{Manifest, StageRecord, Store};

#[derive(Debug, Clone)]
pub struct PhraseOutput {
    /// Supported candidates with their significance tests.
    pub candidates: CandidateSet,
    pub significant: Vec<SignificantPhrase>,
}

/// Support filter, stop-phrase removal and per-product significance.
pub fn mine_phrases(c: &Corpus, cfg: &config::PhrasingSection) -> Result<PhraseOutput> {
    let mut candidates = generate_supported(c, cfg.max_len, cfg.min_support)?;
    if cfg.remove_stop_phrases {
        candidates = remove_stop_phrases(&candidates, &StopWords::default());
    }
    annotate_significance(&mut candidates);
    let opts = SignificanceOptions {
        alpha: cfg.alpha,
        bonferroni: cfg.bonferroni,
    };
    let significant = select_significant(&candidates, opts, &c.product_catalog);
    log::info!("{} supported candidates, {} significant", candidates.len(), significant.len());
    Ok(PhraseOutput { candidates, significant })
}

pub fn embedding_provider(cfg: &PipelineConfig, store_root: Option<&Path>) -> Result<Box<dyn EmbeddingProvider>> {
    let e = &cfg.embedding;
    match e.provider {
        ProviderKind::Hashing => Ok(Box::new(HashingProvider::new(cfg.embedding_seed(), e.dim))),
        ProviderKind::Remote => {
            let url = e.url.clone().ok_or_else(|| Error::Config("embedding.url is required for the remote provider".into()))?;
            let mut p = RemoteProvider::new(url, e.dim);
            p.timeout = Duration::from_secs(e.timeout_secs);
            p.max_attempts = e.max_attempts;
            if let Some(dir) = &e.cache_dir {
                let dir = match store_root {
                    Some(root) if dir.is_relative() => root.join(dir),
                    _ => dir.clone(),
                };
                p = p.with_cache(VectorCache::open(dir)?);
            }
            Ok(Box::new(p))
        }
    }
}

/// Embeds the phrases and fits PCA with `min(k, n, d)` components.
pub fn embed_and_fit(phrases: &[String], provider: &dyn EmbeddingProvider, k: usize) -> Result<(Vec<PhraseVector>, PcaModel<f64>)> {
    let vectors = embed_phrases(phrases, provider)?;
    let m = to_matrix(&vectors)?;
    let k_eff = k.min(m.rows()).min(m.cols());
    if k_eff < k {
        log::warn!("reducing to {k_eff} components instead of {k}: only {} phrases of dimension {}", m.rows(), m.cols());
    }
    let pca = pca_fit(&m, k_eff)?;
    Ok((vectors, pca))
}

pub fn reduce(vectors: &[PhraseVector], pca: &PcaModel<f64>) -> Result<Matrix<f64>> {
    pca_transform(pca, &to_matrix(vectors)?)
}

pub fn cluster_points(points: &Matrix<f64>, cfg: &config::ClusteringSection) -> Result<Selection> {
    if points.rows() < 2 {
        return Err(Error::DegenerateClustering);
    }
    let dm = DistanceMatrix::new(points);
    let configs = if cfg.configs.is_empty() { default_grid(&dm) } else { cfg.configs.clone() };
    let sel = select_clustering_scored(&dm, &configs, cfg.selection)?;
    log::info!(
        "selected {} with {} clusters, silhouette {:.4}, score {:.4}",
        sel.assignment.config,
        sel.assignment.n_clusters,
        sel.silhouette,
        sel.score
    );
    Ok(sel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTable {
    /// Every non-noise cluster with its statistics.
    pub clusters: Vec<ClusterRecord>,
    pub baseline_rate: f64,
    pub prune: PruneOutcome,
}

impl ClusterTable {
    /// The clusters that survived pruning, handed to curation.
    pub fn candidates(&self) -> Vec<ClusterRecord> {
        let kept: BTreeSet<usize> = self.prune.kept.iter().copied().collect();
        self.clusters.iter().filter(|c| kept.contains(&c.cluster_id)).cloned().collect()
    }
}

/// Acceptance rate over all offers in the corpus.
pub fn overall_rate(c: &Corpus) -> f64 {
    let (n, k) = c
        .dialogues
        .iter()
        .flat_map(|d| &d.offers)
        .fold((0usize, 0usize), |(n, k), o| (n + 1, k + usize::from(o.accepted())));
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

/// Groups the significant phrases by cluster label, computes statistics and
/// prunes. Noise phrases form no cluster.
pub fn cluster_table(c: &Corpus, phrases: &[SignificantPhrase], selection: &Selection, cfg: &config::ClusteringSection) -> Result<ClusterTable> {
    let labels = &selection.assignment.labels;
    if labels.len() != phrases.len() {
        return Err(Error::DimensionMismatch {
            expected: phrases.len(),
            actual: labels.len(),
        });
    }
    let members = selection.assignment.members();
    let texts: Vec<Vec<String>> = members.iter().map(|m| m.iter().map(|&i| phrases[i].candidate.text()).collect()).collect();
    let stats = all_cluster_stats(&texts, c, &StatLexicons::default());
    let clusters: Vec<ClusterRecord> = members
        .iter()
        .zip(texts)
        .zip(stats)
        .enumerate()
        .map(|(id, ((m, phrases_text), stats))| ClusterRecord {
            cluster_id: id,
            phrases: phrases_text,
            significant_products: m.iter().flat_map(|&i| phrases[i].significant_products.iter().cloned()).collect(),
            stats,
        })
        .collect();
    let baseline_rate = overall_rate(c);
    let by_id: BTreeMap<usize, _> = clusters.iter().map(|r| (r.cluster_id, r.stats.clone())).collect();
    let prune = crate::clustering::prune_clusters(&by_id, &cfg.prune, baseline_rate);
    Ok(ClusterTable {
        clusters,
        baseline_rate,
        prune,
    })
}

pub fn negation_config(cfg: &config::RegistrySection) -> NegationConfig {
    NegationConfig {
        cues: cfg.negation_cues.clone(),
        window: cfg.negation_window,
        negated_clusters: cfg.negated_clusters.iter().copied().collect(),
    }
}

/// Accepted clusters: all of them in auto-accept mode, the majority choice
/// of the vote table otherwise.
pub fn accepted_clusters(candidates: &[ClusterRecord], votes: Option<&VoteTable>) -> Vec<ClusterRecord> {
    match votes {
        None => candidates.to_vec(),
        Some(t) => {
            let selected = majority_select(t);
            candidates.iter().filter(|c| selected.contains(&c.cluster_id)).cloned().collect()
        }
    }
}

/// Phrases through to the registry with every cluster accepted, for
/// unattended runs on synthetic data.
pub fn mine_registry(c: &Corpus, cfg: &PipelineConfig) -> Result<(Registry, ClusterTable)> {
    let phrases = mine_phrases(c, &cfg.phrasing)?;
    if phrases.significant.is_empty() {
        return Err(Error::InvalidArgument("no significant phrases".into()));
    }
    let texts: Vec<String> = phrases.significant.iter().map(|p| p.candidate.text()).collect();
    let provider = embedding_provider(cfg, None)?;
    let (vectors, pca) = embed_and_fit(&texts, provider.as_ref(), cfg.embedding.pca_components)?;
    let points = reduce(&vectors, &pca)?;
    let selection = cluster_points(&points, &cfg.clustering)?;
    let table = cluster_table(c, &phrases.significant, &selection, &cfg.clustering)?;
    let registry = build_registry(&accepted_clusters(&table.candidates(), None), &negation_config(&cfg.registry));
    Ok((registry, table))
}
