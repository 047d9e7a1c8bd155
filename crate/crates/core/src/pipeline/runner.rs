//! Runs pipeline stages against a [`Store`], skipping a stage when its
//! inputs, configuration and outputs are unchanged since the last run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use super::config::{CurationMode, PipelineConfig};
use super::store::{sha256_hex, StageRecord, Store, TOOL_VERSION};
use super::{accepted_clusters, cluster_points, cluster_table, embed_and_fit, embedding_provider, mine_phrases, negation_config, reduce, ClusterTable};
use crate::clustering::{write_cluster_report, Selection};
use crate::corpus::{clean_corpus_with, parse_corpus, rejects_to_jsonl, CleaningOptions, Corpus, CorpusFormat};
use crate::embedding::{read_phrase_vectors, write_phrase_vectors};
use crate::error::{Error, Result};
use crate::evaluation::{export_report, rank_variables, run_sweep, EvalReport, SweepConfig, VariableRanking};
use crate::models::{build_features, train, CustomerEmbeddings, FeatureSet, ModelBundle};
use crate::pca::PcaModel;
use crate::phrasing::{write_candidate_table, SignificantPhrase};
use crate::registry::{annotate_corpus, build_registry, ingest_votes, read_votes_csv, Annotations, Registry};
use crate::synthgen::{generate, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Ingest,
    Clean,
    Phrases,
    Embed,
    Cluster,
    Stats,
    Registry,
    Annotate,
    Train,
    Sweep,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 12] = [
        Stage::Synth,
        Stage::Ingest,
        Stage::Clean,
        Stage::Phrases,
        Stage::Embed,
        Stage::Cluster,
        Stage::Stats,
        Stage::Registry,
        Stage::Annotate,
        Stage::Train,
        Stage::Sweep,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Clean => "clean",
            Stage::Phrases => "phrases",
            Stage::Embed => "embed",
            Stage::Cluster => "cluster",
            Stage::Stats => "stats",
            Stage::Registry => "registry",
            Stage::Annotate => "annotate",
            Stage::Train => "train",
            Stage::Sweep => "sweep",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}`")))
    }
}

pub const SYNTH_CORPUS: &str = "synth/corpus.jsonl";
pub const SYNTH_EMBEDDINGS: &str = "synth/customer_embeddings.bin";
pub const SYNTH_TRUTH: &str = "synth/ground_truth.json";
pub const CORPUS: &str = "corpus.jsonl";
pub const REJECTS: &str = "rejects.jsonl";
pub const CLEAN_CORPUS: &str = "clean_corpus.jsonl";
pub const CLEANING_REPORT: &str = "cleaning_report.txt";
pub const CANDIDATES: &str = "candidates.tsv";
pub const SIGNIFICANT: &str = "significant_phrases.json";
pub const PHRASE_VECTORS: &str = "phrase_vectors.bin";
pub const PCA: &str = "pca.json";
pub const CLUSTERS: &str = "clusters.json";
pub const CLUSTER_TABLE: &str = "cluster_table.json";
pub const CLUSTER_REPORT: &str = "cluster_report.tsv";
pub const REGISTRY: &str = "registry.json";
pub const ANNOTATIONS: &str = "annotations.tsv";
pub const EVAL_REPORTS: &str = "eval_reports.json";
pub const RANKINGS: &str = "rankings.json";

/// Artifact name used in error messages: the alias without directory or
/// extension.
fn artifact_name(alias: &str) -> String {
    let file = alias.rsplit('/').next().unwrap_or(alias);
    file.split('.').next().unwrap_or(file).to_string()
}

fn producer(alias: &str) -> Option<Stage> {
    Some(match alias {
        SYNTH_CORPUS | SYNTH_EMBEDDINGS | SYNTH_TRUTH => Stage::Synth,
        CORPUS | REJECTS => Stage::Ingest,
        CLEAN_CORPUS | CLEANING_REPORT => Stage::Clean,
        CANDIDATES | SIGNIFICANT => Stage::Phrases,
        PHRASE_VECTORS | PCA => Stage::Embed,
        CLUSTERS => Stage::Cluster,
        CLUSTER_TABLE | CLUSTER_REPORT => Stage::Stats,
        REGISTRY => Stage::Registry,
        ANNOTATIONS => Stage::Annotate,
        EVAL_REPORTS | RANKINGS => Stage::Sweep,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    /// Up to date from an earlier run.
    pub skipped: bool,
    pub outputs: BTreeMap<String, String>,
}

/// Where an input comes from: a store alias or a file outside the store.
enum Source {
    Alias(&'static str),
    File(PathBuf),
}

struct Input {
    name: String,
    source: Source,
}

pub struct Runner {
    store: Store,
    cfg: PipelineConfig,
    /// Run missing upstream stages instead of failing.
    pub auto: bool,
    ensured: BTreeSet<Stage>,
}

fn json_hash<T: Serialize>(v: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(v)?))
}

fn load_corpus_bytes(bytes: &[u8]) -> Result<Corpus> {
    Ok(parse_corpus(bytes, CorpusFormat::JsonLines, None)?.corpus)
}

impl Runner {
    pub fn new(store: Store, cfg: PipelineConfig) -> Self {
        Self {
            store,
            cfg,
            auto: false,
            ensured: BTreeSet::new(),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn config_mut(&mut self) -> &mut PipelineConfig {
        &mut self.cfg
    }

    /// The votes file read in votes mode and written by the curation server.
    pub fn votes_file(&self) -> PathBuf {
        self.cfg.curation.votes.clone().unwrap_or_else(|| self.store.votes_path())
    }

    fn embeddings_input(&self) -> Input {
        Input {
            name: "customer_embeddings".into(),
            source: match &self.cfg.models.embeddings {
                Some(p) => Source::File(p.clone()),
                None => Source::Alias(SYNTH_EMBEDDINGS),
            },
        }
    }

    fn alias(a: &'static str) -> Input {
        Input {
            name: a.into(),
            source: Source::Alias(a),
        }
    }

    fn inputs(&self, stage: Stage) -> Vec<Input> {
        let a = Self::alias;
        match stage {
            Stage::Synth => vec![],
            Stage::Ingest => vec![Input {
                name: "raw_corpus".into(),
                source: match &self.cfg.corpus.path {
                    Some(p) => Source::File(p.clone()),
                    None => Source::Alias(SYNTH_CORPUS),
                },
            }],
            Stage::Clean => vec![a(CORPUS)],
            Stage::Phrases => vec![a(CLEAN_CORPUS)],
            Stage::Embed => vec![a(SIGNIFICANT)],
            Stage::Cluster => vec![a(PHRASE_VECTORS), a(PCA)],
            Stage::Stats => vec![a(CLEAN_CORPUS), a(SIGNIFICANT), a(CLUSTERS)],
            Stage::Registry => {
                let mut v = vec![a(CLUSTER_TABLE)];
                if self.cfg.curation.mode == CurationMode::Votes {
                    v.push(Input {
                        name: "votes".into(),
                        source: Source::File(self.votes_file()),
                    });
                }
                v
            }
            Stage::Annotate => vec![a(CLEAN_CORPUS), a(REGISTRY)],
            Stage::Train => vec![a(CLEAN_CORPUS), a(REGISTRY), a(ANNOTATIONS), self.embeddings_input()],
            Stage::Sweep => vec![a(CLEAN_CORPUS), a(ANNOTATIONS), self.embeddings_input()],
            Stage::Report => vec![a(EVAL_REPORTS), a(RANKINGS)],
        }
    }

    /// Hash of the configuration the stage reads.
    fn config_hash(&self, stage: Stage) -> Result<String> {
        let c = &self.cfg;
        match stage {
            Stage::Synth => json_hash(&SynthConfig { seed: c.seed, ..c.synth.clone() }),
            Stage::Ingest => json_hash(&c.corpus.format),
            Stage::Clean => json_hash(&(c.corpus.min_customer_lines, c.corpus.concatenate_repeats)),
            Stage::Phrases => json_hash(&c.phrasing),
            Stage::Embed => json_hash(&(&c.embedding, c.embedding_seed())),
            Stage::Cluster => json_hash(&(&c.clustering.configs, c.clustering.selection)),
            Stage::Stats => json_hash(&c.clustering.prune),
            Stage::Registry => json_hash(&(c.curation.mode, &c.curation.roster, &c.registry)),
            Stage::Annotate => json_hash(&c.registry),
            Stage::Train => json_hash(&(&c.models, c.seed)),
            Stage::Sweep => json_hash(&(&c.models, &c.evaluation, c.seed)),
            Stage::Report => json_hash(&c.evaluation.q_list),
        }
    }

    fn read_input(&self, input: &Input, stage: Stage) -> Result<Vec<u8>> {
        match &input.source {
            Source::Alias(a) => self.store.get(a).map_err(|_| Error::MissingArtifact {
                artifact: artifact_name(a),
                stage: producer(a).map_or_else(|| stage.name().to_string(), |s| s.name().to_string()),
            }),
            Source::File(p) => std::fs::read(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound if input.name == "votes" => Error::MissingArtifact {
                    artifact: "votes".into(),
                    stage: "curate-serve".into(),
                },
                _ => Error::io(p, e),
            }),
        }
    }

    /// Runs `stage` unless it is up to date.
    pub fn run(&mut self, stage: Stage) -> Result<StageOutcome> {
        self.ensured.clear();
        self.run_inner(stage)
    }

    fn run_inner(&mut self, stage: Stage) -> Result<StageOutcome> {
        let outcome = self.run_once(stage)?;
        self.ensured.insert(stage);
        Ok(outcome)
    }

    fn run_once(&mut self, stage: Stage) -> Result<StageOutcome> {
        let inputs = self.inputs(stage);
        if self.auto {
            let upstream: BTreeSet<Stage> = inputs
                .iter()
                .filter_map(|i| match i.source {
                    Source::Alias(a) => producer(a),
                    Source::File(_) => None,
                })
                .collect();
            for up in upstream {
                if !self.ensured.contains(&up) {
                    self.run_inner(up)?;
                }
            }
        }
        let mut data = BTreeMap::new();
        let mut hashes = BTreeMap::new();
        for input in &inputs {
            let bytes = self.read_input(input, stage)?;
            hashes.insert(input.name.clone(), sha256_hex(&bytes));
            data.insert(input.name.clone(), bytes);
        }
        let config_hash = self.config_hash(stage)?;

        let mut manifest = self.store.manifest()?;
        if let Some(prev) = manifest.stages.get(stage.name()) {
            let fresh = prev.inputs == hashes
                && prev.config_hash == config_hash
                && prev.outputs.iter().all(|(alias, h)| self.store.hash_of(alias).as_deref() == Some(h) && self.store.verify(h));
            if fresh {
                log::info!("{stage}: up to date");
                return Ok(StageOutcome {
                    stage,
                    skipped: true,
                    outputs: prev.outputs.clone(),
                });
            }
        }

        log::info!("{stage}: running");
        let produced = self.execute(stage, &data)?;
        let mut outputs = BTreeMap::new();
        for (alias, bytes) in produced {
            let h = self.store.put(&alias, &bytes)?;
            outputs.insert(alias, h);
        }
        manifest.stages.insert(
            stage.name().to_string(),
            StageRecord {
                inputs: hashes,
                config_hash,
                outputs: outputs.clone(),
                timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                tool_version: TOOL_VERSION.to_string(),
            },
        );
        self.store.save_manifest(&manifest)?;
        Ok(StageOutcome {
            stage,
            skipped: false,
            outputs,
        })
    }

    fn products(&self, c: &Corpus) -> Vec<String> {
        if self.cfg.models.products.is_empty() {
            c.product_catalog.clone()
        } else {
            self.cfg.models.products.clone()
        }
    }

    fn execute(&self, stage: Stage, data: &BTreeMap<String, Vec<u8>>) -> Result<Vec<(String, Vec<u8>)>> {
        let cfg = &self.cfg;
        let input = |name: &str| data.get(name).map(Vec::as_slice).unwrap_or_default();
        let out = |alias: &str, bytes: Vec<u8>| (alias.to_string(), bytes);
        Ok(match stage {
            Stage::Synth => {
                let synth = SynthConfig {
                    seed: cfg.seed,
                    ..cfg.synth.clone()
                };
                let (corpus, embeddings, truth) = generate(&synth)?;
                vec![
                    out(SYNTH_CORPUS, corpus.to_jsonl()?),
                    out(SYNTH_EMBEDDINGS, embeddings.to_bytes()),
                    out(SYNTH_TRUTH, truth.to_json()?.into_bytes()),
                ]
            }
            Stage::Ingest => {
                let loaded = parse_corpus(input("raw_corpus"), cfg.corpus.format, None)?;
                if !loaded.rejects.is_empty() {
                    log::warn!("{} records rejected", loaded.rejects.len());
                }
                vec![out(CORPUS, loaded.corpus.to_jsonl()?), out(REJECTS, rejects_to_jsonl(&loaded.rejects)?)]
            }
            Stage::Clean => {
                let c = load_corpus_bytes(input(CORPUS))?;
                let (cleaned, report) = clean_corpus_with(
                    &c,
                    CleaningOptions {
                        min_customer_lines: cfg.corpus.min_customer_lines,
                        concatenate_repeats: cfg.corpus.concatenate_repeats,
                    },
                );
                if cleaned.is_empty() {
                    return Err(Error::EmptyCorpus);
                }
                vec![out(CLEAN_CORPUS, cleaned.to_jsonl()?), out(CLEANING_REPORT, report.to_kv().into_bytes())]
            }
            Stage::Phrases => {
                let c = load_corpus_bytes(input(CLEAN_CORPUS))?;
                let phrases = mine_phrases(&c, &cfg.phrasing)?;
                let mut table = Vec::new();
                write_candidate_table(&mut table, &phrases.candidates.products, &phrases.candidates.candidates)?;
                vec![out(CANDIDATES, table), out(SIGNIFICANT, serde_json::to_vec(&phrases.significant)?)]
            }
            Stage::Embed => {
                let significant: Vec<SignificantPhrase> = serde_json::from_slice(input(SIGNIFICANT))?;
                if significant.is_empty() {
                    return Err(Error::InvalidArgument("no significant phrases to embed".into()));
                }
                let texts: Vec<String> = significant.iter().map(|p| p.candidate.text()).collect();
                let provider = embedding_provider(cfg, Some(self.store.root()))?;
                let (vectors, pca) = embed_and_fit(&texts, provider.as_ref(), cfg.embedding.pca_components)?;
                vec![out(PHRASE_VECTORS, write_phrase_vectors(&vectors)), out(PCA, serde_json::to_vec(&pca)?)]
            }
            Stage::Cluster => {
                let vectors = read_phrase_vectors(input(PHRASE_VECTORS))?;
                let pca: PcaModel<f64> = serde_json::from_slice(input(PCA))?;
                let points = reduce(&vectors, &pca)?;
                let selection = cluster_points(&points, &cfg.clustering)?;
                vec![out(CLUSTERS, serde_json::to_vec(&selection)?)]
            }
            Stage::Stats => {
                let c = load_corpus_bytes(input(CLEAN_CORPUS))?;
                let significant: Vec<SignificantPhrase> = serde_json::from_slice(input(SIGNIFICANT))?;
                let selection: Selection = serde_json::from_slice(input(CLUSTERS))?;
                let table = cluster_table(&c, &significant, &selection, &cfg.clustering)?;
                let mut report = Vec::new();
                write_cluster_report(&mut report, &table.clusters)?;
                vec![out(CLUSTER_TABLE, serde_json::to_vec(&table)?), out(CLUSTER_REPORT, report)]
            }
            Stage::Registry => {
                let table: ClusterTable = serde_json::from_slice(input(CLUSTER_TABLE))?;
                let candidates = table.candidates();
                let accepted = match cfg.curation.mode {
                    CurationMode::AutoAccept => accepted_clusters(&candidates, None),
                    CurationMode::Votes => {
                        let votes = read_votes_csv(input("votes"))?;
                        let ids: BTreeSet<usize> = candidates.iter().map(|c| c.cluster_id).collect();
                        let t = ingest_votes(votes, &cfg.curation.roster, &ids)?;
                        accepted_clusters(&candidates, Some(&t))
                    }
                };
                let registry = build_registry(&accepted, &negation_config(&cfg.registry));
                log::info!("registry holds {} variables from {} clusters", registry.len(), accepted.len());
                vec![out(REGISTRY, registry.to_json()?)]
            }
            Stage::Annotate => {
                let c = load_corpus_bytes(input(CLEAN_CORPUS))?;
                let registry = Registry::from_json(input(REGISTRY))?;
                let ann = annotate_corpus(&c, &registry, &negation_config(&cfg.registry));
                let mut bytes = Vec::new();
                ann.write_tsv(&mut bytes)?;
                vec![out(ANNOTATIONS, bytes)]
            }
            Stage::Train => {
                let c = load_corpus_bytes(input(CLEAN_CORPUS))?;
                let registry = Registry::from_json(input(REGISTRY))?;
                let ann = Annotations::read_tsv(input(ANNOTATIONS))?;
                let hash = registry.hash();
                if ann.registry_hash != hash {
                    return Err(Error::RegistrySkew {
                        expected: hash,
                        actual: ann.registry_hash,
                    });
                }
                let embeddings = CustomerEmbeddings::from_bytes(input("customer_embeddings"))?;
                let spec = cfg.models.model_spec();
                let mut outs = Vec::new();
                for product in self.products(&c) {
                    let features: FeatureSet<f64> = build_features(&c, &product, &embeddings, &ann, cfg.models.missing_embedding)?;
                    let model = train(&features, &spec, cfg.seed)?;
                    let bundle = ModelBundle {
                        product: product.clone(),
                        registry_hash: hash.clone(),
                        context_variables: (0..ann.n_variables).collect(),
                        embed_dim: embeddings.dim,
                        model,
                    };
                    outs.push(out(&format!("models/{product}.json"), bundle.to_json()?));
                }
                outs
            }
            Stage::Sweep => {
                let c = load_corpus_bytes(input(CLEAN_CORPUS))?;
                let ann = Annotations::read_tsv(input(ANNOTATIONS))?;
                let embeddings = CustomerEmbeddings::from_bytes(input("customer_embeddings"))?;
                let spec = cfg.models.model_spec();
                let ev = &cfg.evaluation;
                let sweep_cfg = SweepConfig {
                    q_list: ev.q_list.clone(),
                    folds: ev.folds,
                    seed: cfg.seed,
                    threshold: ev.threshold,
                    min_rate_support: ev.min_rate_support,
                    missing_embedding: cfg.models.missing_embedding,
                };
                let mut reports: Vec<EvalReport> = Vec::new();
                let mut rankings: Vec<VariableRanking> = Vec::new();
                for product in self.products(&c) {
                    for &criterion in &ev.criteria {
                        log::info!("sweep {product} / {criterion}");
                        rankings.push(rank_variables(&c, &ann, &product, criterion, ev.min_rate_support));
                        reports.push(run_sweep(&c, &embeddings, &ann, &product, &spec, criterion, &sweep_cfg)?);
                    }
                }
                vec![out(EVAL_REPORTS, serde_json::to_vec(&reports)?), out(RANKINGS, serde_json::to_vec(&rankings)?)]
            }
            Stage::Report => {
                let reports: Vec<EvalReport> = serde_json::from_slice(input(EVAL_REPORTS))?;
                let rankings: Vec<VariableRanking> = serde_json::from_slice(input(RANKINGS))?;
                let dir = self.store.root().join(format!(".report.tmp{}", std::process::id()));
                let _ = std::fs::remove_dir_all(&dir);
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let files = export_report(&reports, &rankings, &dir);
                let mut outs = Vec::new();
                let result = files.and_then(|files| {
                    for f in files {
                        let bytes = std::fs::read(&f).map_err(|e| Error::io(&f, e))?;
                        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
                        outs.push(out(&format!("report/{name}"), bytes));
                    }
                    Ok(())
                });
                let _ = std::fs::remove_dir_all(&dir);
                result?;
                outs
            }
        })
    }
}
