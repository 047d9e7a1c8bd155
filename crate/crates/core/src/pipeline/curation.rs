//! HTTP endpoints for expert review of the pruned clusters.
//!
//! | method | path               | body / query                                   |
//! |--------|--------------------|------------------------------------------------|
//! | GET    | `/`                | bundled review page                            |
//! | GET    | `/api/clusters`    | `?page=<n>&expert=<id>`                         |
//! | POST   | `/api/votes`       | `{"expert_id", "cluster_id", "decision", "note"}` |
//! | GET    | `/api/progress`    |                                                |
//! | POST   | `/api/finalize`    |                                                |
//!
//! Every vote is written to the votes file before the response is sent.
//! Errors come back as `{"error": "..."}` with status 400, 404 or 405.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::CurationMode;
use super::runner::{Runner, Stage, CLUSTER_TABLE, REGISTRY};
use super::ClusterTable;
use crate::clustering::{ClusterRecord, ClusterStats};
use crate::error::{Error, Result};
use crate::registry::{majority_select, read_votes_csv, write_votes_csv, Decision, ExpertVote, Registry, VoteTable};

const INDEX_HTML: &str = include_str!("curation.html");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterView {
    pub cluster_id: usize,
    pub phrases: Vec<String>,
    pub significant_products: BTreeSet<String>,
    /// Absent when statistics are hidden from reviewers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<ClusterStats>,
    /// The requesting expert's current vote.
    #[serde(default)]
    pub vote: Option<Decision>,
    pub tally: Tally,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub accepts: usize,
    pub rejects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPage {
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub clusters: Vec<ClusterView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRequest {
    pub expert_id: String,
    pub cluster_id: usize,
    pub decision: Decision,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertProgress {
    pub voted: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub clusters: usize,
    pub experts: BTreeMap<String, ExpertProgress>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub selected: Vec<usize>,
    pub n_variables: usize,
    pub registry_hash: String,
    /// Clusters some expert has not voted on; their missing votes count as
    /// rejections.
    pub uncovered_clusters: Vec<usize>,
    pub warning: Option<String>,
}

/// Review state: the candidate clusters and the vote table, backed by the
/// runner that builds the registry on finalize.
pub struct Curation {
    runner: Runner,
    clusters: Vec<ClusterRecord>,
    table: VoteTable,
    votes_path: PathBuf,
}

pub struct Response {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl Response {
    fn json(status: u16, v: &impl Serialize) -> Self {
        Self {
            status,
            content_type: "application/json",
            body: serde_json::to_vec(v).unwrap_or_default(),
        }
    }

    fn error(status: u16, msg: impl Into<String>) -> Self {
        Self::json(status, &json!({ "error": msg.into() }))
    }
}

fn query_param<'a>(query: &'a str, key: &str) -> Option<&'a str> {
    query.split('&').filter_map(|kv| kv.split_once('=')).find(|(k, _)| *k == key).map(|(_, v)| v)
}

impl Curation {
    /// Loads the pruned clusters from the store and any votes already cast.
    pub fn new(runner: Runner) -> Result<Self> {
        let table: ClusterTable = serde_json::from_slice(&runner.store().get(CLUSTER_TABLE).map_err(|_| Error::MissingArtifact {
            artifact: "cluster_table".into(),
            stage: "stats".into(),
        })?)?;
        let clusters = table.candidates();
        let ids: BTreeSet<usize> = clusters.iter().map(|c| c.cluster_id).collect();
        let votes_path = runner.votes_file();
        let mut votes = VoteTable::new(&runner.config().curation.roster, ids);
        if votes_path.exists() {
            let file = std::fs::File::open(&votes_path).map_err(|e| Error::io(&votes_path, e))?;
            for v in read_votes_csv(file)? {
                if let Err(e) = votes.record(v) {
                    log::warn!("ignoring stored vote: {e}");
                }
            }
        }
        Ok(Self {
            runner,
            clusters,
            table: votes,
            votes_path,
        })
    }

    pub fn votes(&self) -> &VoteTable {
        &self.table
    }

    fn persist(&self) -> Result<()> {
        let mut buf = Vec::new();
        write_votes_csv(&mut buf, &self.table.to_vec())?;
        let tmp = self.votes_path.with_extension("csv.tmp");
        std::fs::write(&tmp, buf).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &self.votes_path).map_err(|e| Error::io(&self.votes_path, e))
    }

    pub fn page(&self, page: usize, expert: Option<&str>) -> ClusterPage {
        let cur = &self.runner.config().curation;
        let size = cur.page_size.max(1);
        let clusters = self
            .clusters
            .iter()
            .skip(page * size)
            .take(size)
            .map(|c| ClusterView {
                cluster_id: c.cluster_id,
                phrases: c.phrases.clone(),
                significant_products: c.significant_products.clone(),
                stats: (!cur.hide_stats).then(|| c.stats.clone()),
                vote: expert.and_then(|e| self.table.votes.get(&(e.to_string(), c.cluster_id)).map(|v| v.decision)),
                tally: {
                    let (accepts, rejects) = self.table.tally(c.cluster_id);
                    Tally { accepts, rejects }
                },
            })
            .collect();
        ClusterPage {
            page,
            page_size: size,
            total: self.clusters.len(),
            clusters,
        }
    }

    pub fn vote(&mut self, req: VoteRequest) -> Result<Progress> {
        if !self.table.roster.contains(&req.expert_id) {
            return Err(Error::UnknownExpert(req.expert_id));
        }
        self.table.record(ExpertVote {
            expert_id: req.expert_id,
            cluster_id: req.cluster_id,
            decision: req.decision,
            timestamp: chrono::Utc::now().naive_utc(),
            note: req.note.filter(|n| !n.is_empty()),
        })?;
        self.persist()?;
        Ok(self.progress())
    }

    pub fn progress(&self) -> Progress {
        let total = self.table.clusters.len();
        let experts: BTreeMap<String, ExpertProgress> = self
            .table
            .roster
            .iter()
            .map(|e| {
                let voted = self.table.votes.keys().filter(|(x, _)| x == e).count();
                (e.clone(), ExpertProgress { voted, total })
            })
            .collect();
        Progress {
            clusters: total,
            complete: experts.values().all(|p| p.voted == total),
            experts,
        }
    }

    /// Majority selection over the votes so far, then the registry stage.
    /// Repeating it without new votes returns the same registry.
    pub fn finalize(&mut self) -> Result<FinalizeResponse> {
        self.persist()?;
        let uncovered: Vec<usize> = self.table.coverage().uncovered_clusters().into_iter().collect();
        {
            let cfg = self.runner.config_mut();
            cfg.curation.mode = CurationMode::Votes;
            cfg.curation.votes = Some(self.votes_path.clone());
        }
        self.runner.run(Stage::Registry)?;
        let registry = Registry::from_json(&self.runner.store().get(REGISTRY)?)?;
        let warning = (!uncovered.is_empty()).then(|| {
            let ids: Vec<String> = uncovered.iter().map(|c| c.to_string()).collect();
            format!("votes missing for clusters {}; missing votes count as rejections", ids.join(", "))
        });
        if let Some(w) = &warning {
            log::warn!("{w}");
        }
        Ok(FinalizeResponse {
            selected: majority_select(&self.table).into_iter().collect(),
            n_variables: registry.len(),
            registry_hash: registry.hash(),
            uncovered_clusters: uncovered,
            warning,
        })
    }

    /// Routes one request. `url` may carry a query string.
    pub fn handle(&mut self, method: &str, url: &str, body: &[u8]) -> Response {
        let (path, query) = url.split_once('?').unwrap_or((url, ""));
        match (method, path) {
            ("GET", "/") | ("GET", "/index.html") => Response {
                status: 200,
                content_type: "text/html; charset=utf-8",
                body: INDEX_HTML.as_bytes().to_vec(),
            },
            ("GET", "/api/clusters") => {
                let page = match query_param(query, "page").map(str::parse::<usize>) {
                    None => 0,
                    Some(Ok(p)) => p,
                    Some(Err(_)) => return Response::error(400, "page must be a non-negative integer"),
                };
                Response::json(200, &self.page(page, query_param(query, "expert")))
            }
            ("GET", "/api/progress") => Response::json(200, &self.progress()),
            ("POST", "/api/votes") => {
                let req: VoteRequest = match serde_json::from_slice(body) {
                    Ok(r) => r,
                    Err(e) => return Response::error(400, format!("malformed vote: {e}")),
                };
                match self.vote(req) {
                    Ok(p) => Response::json(200, &p),
                    Err(Error::UnknownExpert(e)) => Response::error(
                        400,
                        format!("unknown expert `{e}`; the roster is {}", self.table.roster.join(", ")),
                    ),
                    Err(Error::UnknownCluster(c)) => Response::error(400, format!("unknown cluster {c}; it is not among the clusters under review")),
                    Err(e) => Response::error(500, e.to_string()),
                }
            }
            ("POST", "/api/finalize") => match self.finalize() {
                Ok(r) => Response::json(200, &r),
                Err(e) => Response::error(500, e.to_string()),
            },
            (_, "/api/clusters" | "/api/progress" | "/api/votes" | "/api/finalize") => Response::error(405, "method not allowed"),
            _ => Response::error(404, format!("no route for {path}")),
        }
    }
}

/// A bound curation server. [`CurationServer::serve`] blocks until
/// [`ServerHandle::stop`] is called.
pub struct CurationServer {
    server: Arc<tiny_http::Server>,
    curation: Curation,
}

#[derive(Clone)]
pub struct ServerHandle(Arc<tiny_http::Server>);

impl ServerHandle {
    pub fn stop(&self) {
        self.0.unblock();
    }
}

impl CurationServer {
    /// Binds `127.0.0.1:port`; port 0 picks a free port.
    pub fn bind(curation: Curation, port: u16) -> Result<Self> {
        let server = tiny_http::Server::http(("127.0.0.1", port)).map_err(|e| Error::Http(format!("cannot listen on port {port}: {e}")))?;
        Ok(Self {
            server: Arc::new(server),
            curation,
        })
    }

    pub fn port(&self) -> u16 {
        self.server.server_addr().to_ip().map_or(0, |a| a.port())
    }

    pub fn handle(&self) -> ServerHandle {
        ServerHandle(self.server.clone())
    }

    /// Serves until stopped and hands back the review state.
    pub fn serve(mut self) -> Curation {
        for mut req in self.server.incoming_requests() {
            let mut body = Vec::new();
            let resp = match req.as_reader().read_to_end(&mut body) {
                Ok(_) => self.curation.handle(req.method().as_str(), req.url(), &body),
                Err(e) => Response::error(400, format!("unreadable body: {e}")),
            };
            let header = tiny_http::Header::from_bytes("Content-Type", resp.content_type).expect("static header");
            let out = tiny_http::Response::from_data(resp.body).with_status_code(resp.status).with_header(header);
            if let Err(e) = req.respond(out) {
                log::warn!("failed to send response: {e}");
            }
        }
        self.curation
    }
}

/// Parses a JSON error body, for clients.
pub fn error_message(body: &[u8]) -> Option<String> {
    serde_json::from_slice::<Value>(body).ok()?.get("error")?.as_str().map(String::from)
}
