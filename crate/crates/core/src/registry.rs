//! Expert votes, majority selection, the contextual-variable registry and
//! dialogue annotation into binary context vectors.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Read, Write};

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::ClusterRecord;
use crate::corpus::{parse_timestamp, Corpus, Dialogue};
use crate::error::{Error, Result};
use crate::lexicon::NegationCues;
use crate::occurrence::PhraseIndex;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

impl std::str::FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accept" => Ok(Decision::Accept),
            "reject" => Ok(Decision::Reject),
            other => Err(Error::Parse(format!("unknown decision `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertVote {
    pub expert_id: String,
    pub cluster_id: usize,
    pub decision: Decision,
    #[serde(with = "vote_time")]
    pub timestamp: NaiveDateTime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

mod vote_time {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub const FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.f";

    pub fn serialize<S: Serializer>(ts: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.format(FORMAT).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let raw = String::deserialize(d)?;
        crate::corpus::parse_timestamp(&raw).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp `{raw}`")))
    }
}

#[derive(Debug, Deserialize)]
struct VoteRow {
    expert_id: String,
    cluster_id: usize,
    decision: String,
    timestamp: String,
    #[serde(default)]
    note: Option<String>,
}

/// Reads `expert_id,cluster_id,decision,timestamp[,note]` rows.
pub fn read_votes_csv(r: impl Read) -> Result<Vec<ExpertVote>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize::<VoteRow>() {
        let row = row?;
        let timestamp = parse_timestamp(&row.timestamp)
            .ok_or_else(|| Error::Parse(format!("bad vote timestamp `{}`", row.timestamp)))?;
        out.push(ExpertVote {
            expert_id: row.expert_id,
            cluster_id: row.cluster_id,
            decision: row.decision.parse()?,
            timestamp,
            note: row.note.filter(|n| !n.is_empty()),
        });
    }
    Ok(out)
}

pub fn write_votes_csv(w: impl Write, votes: &[ExpertVote]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["expert_id", "cluster_id", "decision", "timestamp", "note"])?;
    for v in votes {
        let decision = match v.decision {
            Decision::Accept => "accept",
            Decision::Reject => "reject",
        };
        wtr.write_record([
            v.expert_id.as_str(),
            &v.cluster_id.to_string(),
            decision,
            &v.timestamp.format(vote_time::FORMAT).to_string(),
            v.note.as_deref().unwrap_or(""),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<votes>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub expected: usize,
    pub recorded: usize,
    /// `(expert, cluster)` pairs without a vote.
    pub missing: Vec<(String, usize)>,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        if self.expected == 0 {
            1.0
        } else {
            self.recorded as f64 / self.expected as f64
        }
    }

    pub fn uncovered_clusters(&self) -> BTreeSet<usize> {
        self.missing.iter().map(|(_, c)| *c).collect()
    }
}

/// Latest vote per `(expert, cluster)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTable {
    pub roster: Vec<String>,
    pub clusters: BTreeSet<usize>,
    pub votes: BTreeMap<(String, usize), ExpertVote>,
}

impl VoteTable {
    pub fn new(roster: &[String], clusters: BTreeSet<usize>) -> Self {
        Self {
            roster: roster.to_vec(),
            clusters,
            votes: BTreeMap::new(),
        }
    }

    /// Records a vote. Later timestamps win; on equal timestamps the vote
    /// recorded last wins.
    pub fn record(&mut self, vote: ExpertVote) -> Result<()> {
        if !self.roster.contains(&vote.expert_id) {
            return Err(Error::UnknownExpert(vote.expert_id));
        }
        if !self.clusters.contains(&vote.cluster_id) {
            return Err(Error::UnknownCluster(vote.cluster_id));
        }
        let key = (vote.expert_id.clone(), vote.cluster_id);
        match self.votes.get(&key) {
            Some(prev) if prev.timestamp > vote.timestamp => {}
            _ => {
                self.votes.insert(key, vote);
            }
        }
        Ok(())
    }

    pub fn coverage(&self) -> Coverage {
        let mut missing = Vec::new();
        for e in &self.roster {
            for &c in &self.clusters {
                if !self.votes.contains_key(&(e.clone(), c)) {
                    missing.push((e.clone(), c));
                }
            }
        }
        Coverage {
            expected: self.roster.len() * self.clusters.len(),
            recorded: self.votes.len(),
            missing,
        }
    }

    pub fn tally(&self, cluster: usize) -> (usize, usize) {
        let mut t = (0, 0);
        for ((_, c), v) in &self.votes {
            if *c == cluster {
                match v.decision {
                    Decision::Accept => t.0 += 1,
                    Decision::Reject => t.1 += 1,
                }
            }
        }
        t
    }

    pub fn to_vec(&self) -> Vec<ExpertVote> {
        self.votes.values().cloned().collect()
    }
}

pub fn ingest_votes(votes: impl IntoIterator<Item = ExpertVote>, roster: &[String], clusters: &BTreeSet<usize>) -> Result<VoteTable> {
    let mut table = VoteTable::new(roster, clusters.clone());
    for v in votes {
        table.record(v)?;
    }
    let cov = table.coverage();
    if !cov.missing.is_empty() {
        log::warn!("vote coverage {}/{}; {} votes missing", cov.recorded, cov.expected, cov.missing.len());
    }
    Ok(table)
}

/// A cluster is selected iff accepts outnumber rejects over the whole roster,
/// with missing votes counted as rejects.
pub fn majority_select(table: &VoteTable) -> BTreeSet<usize> {
    let n = table.roster.len();
    table
        .clusters
        .iter()
        .copied()
        .filter(|&c| {
            let (accepts, _) = table.tally(c);
            accepts > n - accepts
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextualVariable {
    pub variable_id: usize,
    pub source_cluster_id: usize,
    pub phrases: BTreeSet<String>,
    pub polarity: Polarity,
    pub paired_variable: Option<usize>,
    pub significant_products: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegationConfig {
    pub cues: NegationCues,
    /// Tokens preceding the phrase start searched for a cue.
    pub window: usize,
    pub negated_clusters: BTreeSet<usize>,
}

impl Default for NegationConfig {
    fn default() -> Self {
        Self {
            cues: NegationCues::default(),
            window: 3,
            negated_clusters: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Registry {
    pub variables: Vec<ContextualVariable>,
}

impl Registry {
    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    /// Hex SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("registry serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// One positive variable per selected cluster in cluster-id order, each
/// followed by its negated twin when negation is enabled for the cluster.
pub fn build_registry(selected: &[ClusterRecord], negation: &NegationConfig) -> Registry {
    let mut sorted: Vec<&ClusterRecord> = selected.iter().collect();
    sorted.sort_by_key(|c| c.cluster_id);
    let mut variables = Vec::new();
    for c in sorted {
        let phrases: BTreeSet<String> = c.phrases.iter().map(|p| text::normalize_phrase(p)).filter(|p| !p.is_empty()).collect();
        let id = variables.len();
        let negated = negation.negated_clusters.contains(&c.cluster_id);
        variables.push(ContextualVariable {
            variable_id: id,
            source_cluster_id: c.cluster_id,
            phrases: phrases.clone(),
            polarity: Polarity::Positive,
            paired_variable: negated.then_some(id + 1),
            significant_products: c.significant_products.clone(),
        });
        if negated {
            variables.push(ContextualVariable {
                variable_id: id + 1,
                source_cluster_id: c.cluster_id,
                phrases,
                polarity: Polarity::Negated,
                paired_variable: Some(id),
                significant_products: c.significant_products.clone(),
            });
        }
    }
    Registry { variables }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextVector {
    pub dialogue_id: String,
    pub values: Vec<u8>,
}

impl ContextVector {
    pub fn active(&self) -> Vec<usize> {
        self.values.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, _)| i).collect()
    }
}

/// Precompiled matcher for one registry.
#[derive(Debug, Clone)]
pub struct Annotator {
    index: PhraseIndex,
    /// Phrase id → (positive variable, negated twin if any).
    targets: Vec<(usize, Option<usize>)>,
    n_variables: usize,
    cues: NegationCues,
    window: usize,
}

impl Annotator {
    pub fn new(registry: &Registry, negation: &NegationConfig) -> Self {
        let mut phrases = Vec::new();
        let mut targets = Vec::new();
        for v in registry.variables.iter().filter(|v| v.polarity == Polarity::Positive) {
            let twin = v.paired_variable.filter(|&p| {
                registry.variables.get(p).is_some_and(|t| t.polarity == Polarity::Negated)
            });
            for p in &v.phrases {
                phrases.push(p.clone());
                targets.push((v.variable_id, twin));
            }
        }
        Self {
            index: PhraseIndex::new(&phrases),
            targets,
            n_variables: registry.len(),
            cues: negation.cues.clone(),
            window: negation.window,
        }
    }

    /// Ids of the variables set in the dialogue, ascending.
    pub fn active_variables(&self, d: &Dialogue) -> Vec<usize> {
        let mut active = BTreeSet::new();
        for u in d.customer_utterances() {
            let mut flat: Vec<String> = Vec::new();
            for sentence in text::sentences(&u.text) {
                let offset = flat.len();
                for (phrase, start) in self.index.scan_sentence(&sentence) {
                    let pos = offset + start;
                    let from = pos.saturating_sub(self.window);
                    let negated = flat[from.min(offset)..offset].iter().chain(&sentence[from.max(offset) - offset..start]).any(|t| self.cues.is_cue(t));
                    let (positive, twin) = self.targets[phrase];
                    match (negated, twin) {
                        (false, _) => {
                            active.insert(positive);
                        }
                        (true, Some(t)) => {
                            active.insert(t);
                        }
                        (true, None) => {}
                    }
                }
                flat.extend(sentence);
            }
        }
        active.into_iter().collect()
    }

    pub fn annotate(&self, d: &Dialogue) -> ContextVector {
        let mut values = vec![0u8; self.n_variables];
        for v in self.active_variables(d) {
            values[v] = 1;
        }
        ContextVector {
            dialogue_id: d.dialogue_id.clone(),
            values,
        }
    }
}

/// A positive variable is set by a phrase occurrence in a customer turn with
/// no negation cue among the preceding `window` tokens of the same turn. A
/// negated occurrence sets the negated twin instead, or nothing when the
/// cluster has no twin.
pub fn annotate_dialogue(d: &Dialogue, registry: &Registry, negation: &NegationConfig) -> ContextVector {
    Annotator::new(registry, negation).annotate(d)
}

/// Sparse annotations for a whole corpus, in corpus order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotations {
    pub registry_hash: String,
    pub n_variables: usize,
    pub rows: Vec<(String, Vec<usize>)>,
}

impl Annotations {
    pub fn by_dialogue(&self) -> BTreeMap<&str, &[usize]> {
        self.rows.iter().map(|(d, v)| (d.as_str(), v.as_slice())).collect()
    }

    /// `#registry=<hash>` and `#variables=<n>` headers, then
    /// `dialogue_id<TAB>id,id,...` per dialogue.
    pub fn write_tsv(&self, w: &mut impl Write) -> Result<()> {
        let io = |e| Error::io("<annotations>", e);
        writeln!(w, "#registry={}", self.registry_hash).map_err(io)?;
        writeln!(w, "#variables={}", self.n_variables).map_err(io)?;
        for (d, vars) in &self.rows {
            let ids: Vec<String> = vars.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{d}\t{}", ids.join(",")).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_tsv(r: impl BufRead) -> Result<Self> {
        let mut out = Annotations {
            registry_hash: String::new(),
            n_variables: 0,
            rows: Vec::new(),
        };
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("<annotations>", e))?;
            if let Some(h) = line.strip_prefix("#registry=") {
                out.registry_hash = h.to_string();
            } else if let Some(n) = line.strip_prefix("#variables=") {
                out.n_variables = n.parse().map_err(|_| Error::Parse(format!("bad variable count `{n}`")))?;
            } else if !line.is_empty() {
                let (d, ids) = line.split_once('\t').ok_or_else(|| Error::Parse(format!("bad annotation line `{line}`")))?;
                let vars = ids
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad variable id `{s}`"))))
                    .collect::<Result<Vec<_>>>()?;
                if let Some(&bad) = vars.iter().find(|&&v| v >= out.n_variables) {
                    return Err(Error::Parse(format!("variable id {bad} out of range")));
                }
                out.rows.push((d.to_string(), vars));
            }
        }
        Ok(out)
    }
}

pub fn annotate_corpus(c: &Corpus, registry: &Registry, negation: &NegationConfig) -> Annotations {
    let annotator = Annotator::new(registry, negation);
    let rows = c
        .dialogues
        .par_iter()
        .map(|d| (d.dialogue_id.clone(), annotator.active_variables(d)))
        .collect();
    Annotations {
        registry_hash: registry.hash(),
        n_variables: registry.len(),
        rows,
    }
}

/// Share of dialogues offering each product that carry at least one variable.
/// `None` for products never offered.
pub fn context_coverage(c: &Corpus, annotations: &Annotations) -> BTreeMap<String, Option<f64>> {
    let by_dialogue = annotations.by_dialogue();
    let mut counts: BTreeMap<String, (usize, usize)> = c.product_catalog.iter().map(|p| (p.clone(), (0, 0))).collect();
    for d in &c.dialogues {
        let has = by_dialogue.get(d.dialogue_id.as_str()).is_some_and(|v| !v.is_empty());
        for o in &d.offers {
            let e = counts.entry(o.product_id.clone()).or_default();
            e.0 += 1;
            e.1 += usize::from(has);
        }
    }
    counts
        .into_iter()
        .map(|(p, (n, k))| (p, (n > 0).then(|| k as f64 / n as f64)))
        .collect()
}
