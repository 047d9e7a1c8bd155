//! The staged runner and the curation service, end to end on small inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::net::TcpListener;
use std::thread;

use ltc_core::clustering::{ClusterRecord, ClusterStats, PruneOutcome};
use ltc_core::evaluation::Criterion;
use ltc_core::models::ModelKind;
use ltc_core::pipeline::curation::{error_message, ClusterPage, FinalizeResponse, Progress};
use ltc_core::pipeline::runner::{ANNOTATIONS, CLUSTER_TABLE, EVAL_REPORTS, REGISTRY};
use ltc_core::pipeline::{ClusterTable, Curation, CurationMode, CurationServer, PipelineConfig, Runner, Stage, Store};
use ltc_core::registry::Registry;
use ltc_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.seed = 3;
    cfg.synth.n_dialogues = 1500;
    cfg.synth.n_planted_variables = 12;
    cfg.synth.effect_min = 1.5;
    cfg.synth.effect_max = 2.5;
    cfg.phrasing.min_support = 25;
    cfg.embedding.pca_components = 16;
    cfg.models.model = ModelKind::Logreg;
    cfg.evaluation.q_list = vec![0.0, 50.0, 100.0];
    cfg.evaluation.folds = 3;
    cfg.evaluation.criteria = vec![Criterion::Frequency];
    cfg
}

fn runner(dir: &TempDir, cfg: PipelineConfig) -> Runner {
    Runner::new(Store::open(dir.path()).unwrap(), cfg)
}

fn report_files(r: &Runner) -> BTreeMap<String, Vec<u8>> {
    let manifest = r.store().manifest().unwrap();
    manifest.stages["report"]
        .outputs
        .keys()
        .map(|alias| (alias.clone(), r.store().get(alias).unwrap()))
        .collect()
}

#[test]
fn auto_run_builds_everything_and_reruns_are_skipped() {
    let dir = TempDir::new().unwrap();
    let mut r = runner(&dir, small_config());
    r.auto = true;
    let first = r.run(Stage::Report).unwrap();
    assert!(!first.skipped);
    assert!(first.outputs.keys().any(|a| a.starts_with("report/")));

    let manifest = r.store().manifest().unwrap();
    assert!(!manifest.stages.contains_key("train"));
    for rec in manifest.stages.values() {
        for (alias, hash) in &rec.outputs {
            assert!(r.store().verify(hash), "{alias}");
            assert_eq!(r.store().hash_of(alias).as_deref(), Some(hash.as_str()));
        }
    }

    for stage in [Stage::Report, Stage::Stats, Stage::Synth] {
        assert!(r.run(stage).unwrap().skipped, "{stage}");
    }

    // a sweep-only setting reruns the sweep and report but not mining
    r.config_mut().evaluation.q_list = vec![0.0, 100.0];
    let before = r.store().manifest().unwrap();
    assert!(!r.run(Stage::Report).unwrap().skipped);
    let after = r.store().manifest().unwrap();
    assert_eq!(before.stages["phrases"], after.stages["phrases"]);
    assert_ne!(before.stages["sweep"].outputs, after.stages["sweep"].outputs);
}

#[test]
fn identical_runs_give_identical_reports() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let mut ra = runner(&a, small_config());
    let mut rb = runner(&b, small_config());
    ra.auto = true;
    rb.auto = true;
    ra.run(Stage::Report).unwrap();
    rb.run(Stage::Report).unwrap();
    let (fa, fb) = (report_files(&ra), report_files(&rb));
    assert!(!fa.is_empty());
    assert_eq!(fa, fb);
    assert_eq!(ra.store().get(EVAL_REPORTS).unwrap(), rb.store().get(EVAL_REPORTS).unwrap());
}

#[test]
fn stages_without_inputs_name_their_producer() {
    let dir = TempDir::new().unwrap();
    let mut r = runner(&dir, small_config());
    match r.run(Stage::Train) {
        Err(Error::MissingArtifact { artifact, stage }) => {
            assert_eq!(artifact, "clean_corpus");
            assert_eq!(stage, "clean");
        }
        other => panic!("expected a missing artifact, got {other:?}"),
    }

    for stage in [Stage::Synth, Stage::Ingest, Stage::Clean, Stage::Phrases, Stage::Embed, Stage::Cluster, Stage::Stats, Stage::Registry] {
        r.run(stage).unwrap();
    }
    assert!(!r.store().exists(ANNOTATIONS));
    match r.run(Stage::Train) {
        Err(Error::MissingArtifact { artifact, stage }) => {
            assert_eq!(artifact, "annotations");
            assert_eq!(stage, "annotate");
        }
        other => panic!("expected a missing artifact, got {other:?}"),
    }
}

fn stats(size: usize) -> ClusterStats {
    ClusterStats {
        avg_propensity_rate: 0.3,
        avg_relative_position: 0.5,
        avg_sentence_length: 6.0,
        pct_past_tense: 0.1,
        pct_with_sentiment: 0.2,
        size,
        n_occurrences: 40,
        n_dialogues: 35,
        sample_phrases: Vec::new(),
    }
}

/// A store holding a 50-cluster table, as the stats stage would leave it.
fn review_store(cfg: PipelineConfig) -> (TempDir, Runner) {
    let dir = TempDir::new().unwrap();
    let r = runner(&dir, cfg);
    let clusters: Vec<ClusterRecord> = (0..50)
        .map(|i| ClusterRecord {
            cluster_id: i,
            phrases: vec![format!("topic{i} alpha"), format!("topic{i} beta")],
            significant_products: BTreeSet::from(["p1".to_string()]),
            stats: stats(2),
        })
        .collect();
    let table = ClusterTable {
        clusters,
        baseline_rate: 0.3,
        prune: PruneOutcome { kept: (0..50).collect(), removed: Vec::new() },
    };
    r.store().put(CLUSTER_TABLE, &serde_json::to_vec(&table).unwrap()).unwrap();
    (dir, r)
}

#[test]
fn votes_mode_without_votes_is_a_missing_artifact() {
    let mut cfg = small_config();
    cfg.curation.mode = CurationMode::Votes;
    let (_dir, mut r) = review_store(cfg);
    match r.run(Stage::Registry) {
        Err(Error::MissingArtifact { artifact, .. }) => assert_eq!(artifact, "votes"),
        other => panic!("expected a missing artifact, got {other:?}"),
    }
}

struct Client {
    agent: ureq::Agent,
    base: String,
}

impl Client {
    fn new(port: u16) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Self { agent, base: format!("http://127.0.0.1:{port}") }
    }

    fn get(&self, path: &str) -> (u16, String) {
        let mut resp = self.agent.get(format!("{}{path}", self.base)).call().unwrap();
        (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
    }

    fn post(&self, path: &str, body: &str) -> (u16, String) {
        let mut resp = self.agent.post(format!("{}{path}", self.base)).header("Content-Type", "application/json").send(body).unwrap();
        (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
    }

    fn vote(&self, expert: &str, cluster: usize, accept: bool) -> (u16, String) {
        let decision = if accept { "accept" } else { "reject" };
        self.post("/api/votes", &format!(r#"{{"expert_id":"{expert}","cluster_id":{cluster},"decision":"{decision}"}}"#))
    }
}

#[test]
fn simulated_experts_curate_over_http() {
    let (dir, r) = review_store(small_config());
    let roster = r.config().curation.roster.clone();
    let server = CurationServer::bind(Curation::new(r).unwrap(), 0).unwrap();
    let port = server.port();
    let handle = server.handle();
    let serving = thread::spawn(move || server.serve());
    let client = Client::new(port);

    let (status, html) = client.get("/");
    assert_eq!(status, 200);
    assert!(html.contains("<html"));

    let (status, body) = client.get("/api/clusters?page=0&expert=expert1");
    assert_eq!(status, 200);
    let page: ClusterPage = serde_json::from_str(&body).unwrap();
    assert_eq!(page.total, 50);
    assert!(page.clusters.iter().all(|c| c.stats.is_some() && c.vote.is_none()));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut expected: BTreeMap<(String, usize), bool> = BTreeMap::new();
    for expert in &roster {
        for cluster in 0..50 {
            // leave a few votes missing
            if expert == "expert3" && cluster % 10 == 0 {
                continue;
            }
            let accept = rng.random_bool(0.5);
            assert_eq!(client.vote(expert, cluster, accept).0, 200);
            expected.insert((expert.clone(), cluster), accept);
        }
    }
    // expert2 changes their mind on the first five clusters
    for cluster in 0..5 {
        let flipped = !expected[&("expert2".to_string(), cluster)];
        assert_eq!(client.vote("expert2", cluster, flipped).0, 200);
        expected.insert(("expert2".to_string(), cluster), flipped);
    }

    let (status, body) = client.vote("mallory", 1, true);
    assert_eq!(status, 400);
    let msg = error_message(body.as_bytes()).unwrap();
    assert!(msg.contains("mallory") && msg.contains("expert1"), "{msg}");
    assert_eq!(client.vote("expert1", 999, true).0, 400);
    assert_eq!(client.get("/api/votes").0, 405);
    assert_eq!(client.get("/nope").0, 404);

    let progress: Progress = serde_json::from_str(&client.get("/api/progress").1).unwrap();
    assert!(!progress.complete);
    assert_eq!(progress.experts["expert3"].voted, 45);
    assert_eq!(progress.experts["expert1"].voted, 50);

    let oracle: Vec<usize> = (0..50)
        .filter(|&c| {
            let accepts = roster.iter().filter(|e| expected.get(&((*e).clone(), c)) == Some(&true)).count();
            accepts > roster.len() - accepts
        })
        .collect();

    let (status, body) = client.post("/api/finalize", "");
    assert_eq!(status, 200, "{body}");
    let fin: FinalizeResponse = serde_json::from_str(&body).unwrap();
    assert_eq!(fin.selected, oracle);
    assert_eq!(fin.n_variables, oracle.len());
    assert_eq!(fin.uncovered_clusters, (0..50).step_by(10).collect::<Vec<_>>());
    assert!(fin.warning.is_some());

    let again: FinalizeResponse = serde_json::from_str(&client.post("/api/finalize", "").1).unwrap();
    assert_eq!(again, fin);

    let (status, body) = client.get("/api/clusters?page=0&expert=expert2");
    assert_eq!(status, 200);
    let page: ClusterPage = serde_json::from_str(&body).unwrap();
    let view = page.clusters.iter().find(|c| c.cluster_id == 0).unwrap();
    let latest = expected[&("expert2".to_string(), 0)];
    assert_eq!(view.vote.map(|d| d == ltc_core::registry::Decision::Accept), Some(latest));

    handle.stop();
    let curation = serving.join().unwrap();
    assert_eq!(curation.votes().votes.len(), expected.len());

    // the votes and the registry survive a restart
    drop(curation);
    let r = runner(&dir, small_config());
    let registry = Registry::from_json(&r.store().get(REGISTRY).unwrap()).unwrap();
    assert_eq!(registry.hash(), fin.registry_hash);
    let reopened = Curation::new(r).unwrap();
    assert_eq!(reopened.votes().votes.len(), expected.len());
}

#[test]
fn hidden_stats_are_not_served() {
    let mut cfg = small_config();
    cfg.curation.hide_stats = true;
    let (_dir, r) = review_store(cfg);
    let mut curation = Curation::new(r).unwrap();
    let resp = curation.handle("GET", "/api/clusters?page=0", b"");
    assert_eq!(resp.status, 200);
    let page: ClusterPage = serde_json::from_slice(&resp.body).unwrap();
    assert!(!page.clusters.is_empty());
    assert!(page.clusters.iter().all(|c| c.stats.is_none()));
    assert_eq!(curation.handle("GET", "/api/clusters?page=x", b"").status, 400);
}

#[test]
fn busy_port_is_reported() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port();
    let (_dir, r) = review_store(small_config());
    match CurationServer::bind(Curation::new(r).unwrap(), port) {
        Err(Error::Http(msg)) => assert!(msg.contains(&port.to_string()), "{msg}"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("bound a busy port"),
    }
}

#[test]
fn curation_needs_the_cluster_table() {
    let dir = TempDir::new().unwrap();
    match Curation::new(runner(&dir, small_config())) {
        Err(Error::MissingArtifact { artifact, stage }) => {
            assert_eq!(artifact, "cluster_table");
            assert_eq!(stage, "stats");
        }
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("curation started without clusters"),
    }
}
