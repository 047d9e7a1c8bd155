//! The run configuration: one TOML file with a section per stage. Every
//! field has a default, so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterConfig, PruneThresholds, SelectionScore};
use crate::corpus::CorpusFormat;
use crate::error::{Error, Result};
use crate::evaluation::{Criterion, ThresholdPolicy};
use crate::lexicon::NegationCues;
use crate::models::{MissingEmbedding, ModelKind, ModelSpec};
use crate::synthgen::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub corpus: CorpusSection,
    pub phrasing: PhrasingSection,
    pub embedding: EmbeddingSection,
    pub clustering: ClusteringSection,
    pub curation: CurationSection,
    pub registry: RegistrySection,
    pub models: ModelsSection,
    pub evaluation: EvaluationSection,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus: CorpusSection::default(),
            phrasing: PhrasingSection::default(),
            embedding: EmbeddingSection::default(),
            clustering: ClusteringSection::default(),
            curation: CurationSection::default(),
            registry: RegistrySection::default(),
            models: ModelsSection::default(),
            evaluation: EvaluationSection::default(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// Raw corpus file. When absent, `ingest` reads the output of `synth`.
    pub path: Option<PathBuf>,
    pub format: CorpusFormat,
    pub min_customer_lines: usize,
    pub concatenate_repeats: bool,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            path: None,
            format: CorpusFormat::JsonLines,
            min_customer_lines: 2,
            concatenate_repeats: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhrasingSection {
    pub max_len: usize,
    pub min_support: usize,
    pub alpha: f64,
    pub bonferroni: bool,
    pub remove_stop_phrases: bool,
}

impl Default for PhrasingSection {
    fn default() -> Self {
        Self {
            max_len: 4,
            min_support: 50,
            alpha: 0.01,
            bonferroni: false,
            remove_stop_phrases: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub provider: ProviderKind,
    pub dim: usize,
    /// Seed of the hashing provider; the run seed when absent.
    pub seed: Option<u64>,
    pub url: Option<String>,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    /// Vector cache of the remote provider, relative to the store.
    pub cache_dir: Option<PathBuf>,
    pub pca_components: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Hashing,
            dim: crate::embedding::DEFAULT_DIM,
            seed: None,
            url: None,
            timeout_secs: 30,
            max_attempts: 4,
            cache_dir: None,
            pca_components: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSection {
    /// Explicit candidate configurations; the default grid when empty.
    pub configs: Vec<ClusterConfig>,
    pub selection: SelectionScore,
    pub prune: PruneThresholds,
}

impl Default for ClusteringSection {
    fn default() -> Self {
        Self {
            configs: Vec::new(),
            selection: SelectionScore::CoverageWeighted,
            prune: PruneThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurationMode {
    /// Every cluster that survives pruning is accepted.
    AutoAccept,
    /// Majority vote over the votes file.
    Votes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationSection {
    pub mode: CurationMode,
    pub roster: Vec<String>,
    /// Votes file; the store's own votes file when absent.
    pub votes: Option<PathBuf>,
    /// Hide cluster statistics from reviewers.
    pub hide_stats: bool,
    pub page_size: usize,
    pub port: u16,
}

impl Default for CurationSection {
    fn default() -> Self {
        Self {
            mode: CurationMode::AutoAccept,
            roster: vec!["expert1".into(), "expert2".into(), "expert3".into()],
            votes: None,
            hide_stats: false,
            page_size: 50,
            port: 8765,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrySection {
    pub negation_cues: NegationCues,
    pub negation_window: usize,
    pub negated_clusters: Vec<usize>,
}

impl Default for RegistrySection {
    fn default() -> Self {
        Self {
            negation_cues: NegationCues::default(),
            negation_window: 3,
            negated_clusters: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsSection {
    /// Customer embeddings file. When absent, the output of `synth`.
    pub embeddings: Option<PathBuf>,
    pub missing_embedding: MissingEmbedding,
    /// Products to model; the whole catalog when empty.
    pub products: Vec<String>,
    pub model: ModelKind,
    /// Overrides the default hyperparameters of `model`.
    pub spec: Option<ModelSpec>,
}

impl Default for ModelsSection {
    fn default() -> Self {
        Self {
            embeddings: None,
            missing_embedding: MissingEmbedding::Drop,
            products: Vec::new(),
            model: ModelKind::Auto,
            spec: None,
        }
    }
}

impl ModelsSection {
    pub fn model_spec(&self) -> ModelSpec {
        match &self.spec {
            Some(s) if s.kind() == self.model => s.clone(),
            _ => ModelSpec::default_for(self.model),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub criteria: Vec<Criterion>,
    pub q_list: Vec<f64>,
    pub folds: usize,
    pub threshold: ThresholdPolicy,
    pub min_rate_support: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            criteria: vec![Criterion::Frequency, Criterion::Rate],
            q_list: (0..=10).map(|i| i as f64 * 10.0).collect(),
            folds: 10,
            threshold: ThresholdPolicy::default(),
            min_rate_support: 20,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn embedding_seed(&self) -> u64 {
        self.embedding.seed.unwrap_or(self.seed)
    }
}
