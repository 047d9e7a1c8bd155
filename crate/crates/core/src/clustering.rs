//! Density-based and hierarchical clustering of phrase vectors, silhouette
//! scoring and configuration selection, plus the per-cluster statistics used
//! to prune and curate clusters.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::lexicon::{PastTenseLexicon, SentimentLexicon};
use crate::linalg::{euclidean, Matrix};
use crate::occurrence::PhraseIndex;
use crate::scalar::Scalar;

pub const NOISE: i64 = -1;

/// Pairwise Euclidean distances, stored as the strict upper triangle.
#[derive(Debug, Clone)]
pub struct DistanceMatrix<T> {
    n: usize,
    condensed: Vec<T>,
}

impl<T: Scalar> DistanceMatrix<T> {
    pub fn new(points: &Matrix<T>) -> Self {
        let n = points.rows();
        let rows: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|i| ((i + 1)..n).map(|j| euclidean(points.row(i), points.row(j))).collect())
            .collect();
        Self {
            n,
            condensed: rows.into_iter().flatten().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => T::zero(),
            std::cmp::Ordering::Less => self.condensed[self.offset(i, j)],
            std::cmp::Ordering::Greater => self.condensed[self.offset(j, i)],
        }
    }

    fn set(&mut self, i: usize, j: usize, v: T) {
        let k = if i < j { self.offset(i, j) } else { self.offset(j, i) };
        self.condensed[k] = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    Dbscan,
    Agglomerative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Average,
    Complete,
    Ward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum ClusterConfig {
    Dbscan { eps: f64, min_pts: usize },
    Agglomerative { linkage: Linkage, n_clusters: usize },
}

impl ClusterConfig {
    pub fn method(&self) -> ClusterMethod {
        match self {
            ClusterConfig::Dbscan { .. } => ClusterMethod::Dbscan,
            ClusterConfig::Agglomerative { .. } => ClusterMethod::Agglomerative,
        }
    }
}

impl fmt::Display for ClusterConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterConfig::Dbscan { eps, min_pts } => write!(f, "dbscan(eps={eps}, min_pts={min_pts})"),
            ClusterConfig::Agglomerative { linkage, n_clusters } => {
                write!(f, "agglomerative({linkage:?}, n_clusters={n_clusters})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Per point; `-1` marks noise.
    pub labels: Vec<i64>,
    pub n_clusters: usize,
    pub config: ClusterConfig,
}

impl ClusterAssignment {
    pub fn method(&self) -> ClusterMethod {
        self.config.method()
    }

    /// Member indices of each cluster, in label order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }

    pub fn n_noise(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }
}

/// Relabels so that clusters are numbered by their smallest member.
fn canonical_labels(raw: &[i64]) -> (Vec<i64>, usize) {
    let mut map: HashMap<i64, i64> = HashMap::new();
    let labels = raw
        .iter()
        .map(|&l| {
            if l < 0 {
                NOISE
            } else {
                let next = map.len() as i64;
                *map.entry(l).or_insert(next)
            }
        })
        .collect();
    (labels, map.len())
}

const UNVISITED: i64 = i64::MIN;

fn dbscan_labels<T: Scalar>(dm: &DistanceMatrix<T>, eps: T, min_pts: usize) -> Vec<i64> {
    let n = dm.len();
    let region = |p: usize| -> Vec<usize> { (0..n).filter(|&q| dm.get(p, q) <= eps).collect() };
    let mut labels = vec![UNVISITED; n];
    let mut next = 0i64;
    for p in 0..n {
        if labels[p] != UNVISITED {
            continue;
        }
        let neigh = region(p);
        if neigh.len() < min_pts {
            labels[p] = NOISE;
            continue;
        }
        let c = next;
        next += 1;
        labels[p] = c;
        let mut queue: VecDeque<usize> = neigh.into_iter().collect();
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = c;
            }
            if labels[q] != UNVISITED {
                continue;
            }
            labels[q] = c;
            let nq = region(q);
            if nq.len() >= min_pts {
                queue.extend(nq);
            }
        }
    }
    labels
}

/// Density-based clustering with Euclidean neighbourhoods of radius `eps`
/// (inclusive). A point is core when its neighbourhood, itself included,
/// holds at least `min_pts` points. Clusters are expanded in index order, so
/// a border point reachable from several clusters joins the lowest-numbered.
pub fn dbscan<T: Scalar>(points: &Matrix<T>, eps: T, min_pts: usize) -> Result<ClusterAssignment> {
    if points.rows() == 0 {
        return Err(Error::InvalidArgument("dbscan on empty input".into()));
    }
    dbscan_with(&DistanceMatrix::new(points), eps, min_pts)
}

pub fn dbscan_with<T: Scalar>(dm: &DistanceMatrix<T>, eps: T, min_pts: usize) -> Result<ClusterAssignment> {
    if dm.is_empty() {
        return Err(Error::InvalidArgument("dbscan on empty input".into()));
    }
    if !(eps > T::zero()) || min_pts == 0 {
        return Err(Error::InvalidArgument("dbscan needs eps > 0 and min_pts >= 1".into()));
    }
    let (labels, n_clusters) = canonical_labels(&dbscan_labels(dm, eps, min_pts));
    Ok(ClusterAssignment {
        labels,
        n_clusters,
        config: ClusterConfig::Dbscan {
            eps: eps.as_f64(),
            min_pts,
        },
    })
}

/// One agglomeration step. `a < b` are slot indices; the merged cluster
/// keeps slot `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge<T> {
    pub a: usize,
    pub b: usize,
    pub height: T,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram<T> {
    pub n: usize,
    pub linkage: Linkage,
    pub merges: Vec<Merge<T>>,
}

impl<T: Scalar> Dendrogram<T> {
    /// Labels after applying the first `n - n_clusters` merges.
    pub fn cut(&self, n_clusters: usize) -> Result<ClusterAssignment> {
        if n_clusters == 0 || n_clusters > self.n {
            return Err(Error::InvalidArgument(format!(
                "n_clusters must be in 1..={}, got {n_clusters}",
                self.n
            )));
        }
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for m in &self.merges[..self.n - n_clusters] {
            let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
            parent[rb.max(ra)] = ra.min(rb);
        }
        let raw: Vec<i64> = (0..self.n).map(|i| find(&mut parent, i) as i64).collect();
        let (labels, n) = canonical_labels(&raw);
        Ok(ClusterAssignment {
            labels,
            n_clusters: n,
            config: ClusterConfig::Agglomerative {
                linkage: self.linkage,
                n_clusters,
            },
        })
    }
}

fn lance_williams<T: Scalar>(linkage: Linkage, d_ka: T, d_kb: T, d_ab: T, n_a: usize, n_b: usize, n_k: usize) -> T {
    let (na, nb, nk) = (T::of_usize(n_a), T::of_usize(n_b), T::of_usize(n_k));
    match linkage {
        Linkage::Average => (na * d_ka + nb * d_kb) / (na + nb),
        Linkage::Complete => d_ka.max(d_kb),
        Linkage::Ward => {
            let sq = ((na + nk) * d_ka * d_ka + (nb + nk) * d_kb * d_kb - nk * d_ab * d_ab) / (na + nb + nk);
            sq.max(T::zero()).sqrt()
        }
    }
}

/// Builds the full merge tree. Each step merges the closest pair of active
/// clusters; ties go to the lexicographically smallest slot pair.
pub fn dendrogram<T: Scalar>(points: &Matrix<T>, linkage: Linkage) -> Result<Dendrogram<T>> {
    if points.rows() == 0 {
        return Err(Error::InvalidArgument("agglomerative clustering on empty input".into()));
    }
    Ok(dendrogram_with(DistanceMatrix::new(points), linkage))
}

pub fn dendrogram_with<T: Scalar>(mut d: DistanceMatrix<T>, linkage: Linkage) -> Dendrogram<T> {
    let n = d.len();
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut nn = vec![usize::MAX; n];
    let mut nn_dist = vec![T::infinity(); n];

    let nearest = |d: &DistanceMatrix<T>, active: &[bool], i: usize| -> (usize, T) {
        let mut best = (usize::MAX, T::infinity());
        for j in (0..n).filter(|&j| j != i && active[j]) {
            let dij = d.get(i, j);
            if dij < best.1 || (dij == best.1 && j < best.0) {
                best = (j, dij);
            }
        }
        best
    };
    for i in 0..n {
        (nn[i], nn_dist[i]) = nearest(&d, &active, i);
    }

    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut best: Option<(T, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            let (a, b) = (i.min(nn[i]), i.max(nn[i]));
            let cand = (nn_dist[i], a, b);
            let better = match best {
                None => true,
                Some((bd, ba, bb)) => cand.0 < bd || (cand.0 == bd && (a, b) < (ba, bb)),
            };
            if better {
                best = Some(cand);
            }
        }
        let (height, a, b) = best.expect("at least two active clusters");
        let d_ab = d.get(a, b);
        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let v = lance_williams(linkage, d.get(k, a), d.get(k, b), d_ab, size[a], size[b], size[k]);
            d.set(k, a, v);
        }
        active[b] = false;
        size[a] += size[b];
        merges.push(Merge {
            a,
            b,
            height,
            size: size[a],
        });

        for k in (0..n).filter(|&k| active[k]) {
            if k == a || nn[k] == a || nn[k] == b {
                (nn[k], nn_dist[k]) = nearest(&d, &active, k);
            } else {
                let v = d.get(k, a);
                if v < nn_dist[k] || (v == nn_dist[k] && a < nn[k]) {
                    nn[k] = a;
                    nn_dist[k] = v;
                }
            }
        }
    }
    Dendrogram { n, linkage, merges }
}

pub fn agglomerative<T: Scalar>(points: &Matrix<T>, linkage: Linkage, n_clusters: usize) -> Result<ClusterAssignment> {
    dendrogram(points, linkage)?.cut(n_clusters)
}

/// Mean silhouette over non-noise points; noise is excluded entirely.
/// Members of singleton clusters score 0.
pub fn silhouette<T: Scalar>(points: &Matrix<T>, labels: &[i64]) -> Result<T> {
    if points.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: points.rows(),
            actual: labels.len(),
        });
    }
    silhouette_with(&DistanceMatrix::new(points), labels)
}

pub fn silhouette_with<T: Scalar>(dm: &DistanceMatrix<T>, labels: &[i64]) -> Result<T> {
    let clusters: BTreeSet<i64> = labels.iter().copied().filter(|&l| l >= 0).collect();
    if clusters.len() < 2 {
        return Err(Error::SilhouetteUndefined(clusters.len()));
    }
    let index: HashMap<i64, usize> = clusters.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let k = clusters.len();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter().filter(|&&l| l >= 0) {
        sizes[index[&l]] += 1;
    }
    let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] >= 0).collect();
    let scores: Vec<T> = members
        .par_iter()
        .map(|&i| {
            let own = index[&labels[i]];
            if sizes[own] < 2 {
                return T::zero();
            }
            let mut sums = vec![T::zero(); k];
            for &j in &members {
                if j != i {
                    sums[index[&labels[j]]] += dm.get(i, j);
                }
            }
            let a = sums[own] / T::of_usize(sizes[own] - 1);
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / T::of_usize(sizes[c]))
                .fold(T::infinity(), T::min);
            let m = a.max(b);
            if m > T::zero() {
                (b - a) / m
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(scores.iter().copied().sum::<T>() / T::of_usize(scores.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub assignment: ClusterAssignment,
    pub silhouette: f64,
    /// The selection score of the chosen configuration.
    pub score: f64,
    /// Every configuration tried with its selection score (`None` when
    /// degenerate).
    pub evaluated: Vec<(ClusterConfig, Option<f64>)>,
}

/// Default search grid: DBSCAN over ten quantiles of the 5-NN distance with
/// `min_pts ∈ {3, 5, 10}`, and average-linkage cuts giving mean cluster sizes
/// of 5, 10, 20, 30 and 50.
pub fn default_grid<T: Scalar>(dm: &DistanceMatrix<T>) -> Vec<ClusterConfig> {
    let n = dm.len();
    let mut configs = Vec::new();
    if n > 5 {
        let mut knn: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut ds: Vec<T> = (0..n).filter(|&j| j != i).map(|j| dm.get(i, j)).collect();
                ds.sort_by(|a, b| a.partial_cmp(b).expect("finite distance"));
                ds[4].as_f64()
            })
            .collect();
        knn.sort_by(|a, b| a.partial_cmp(b).expect("finite distance"));
        let mut eps_values: Vec<f64> = (1..=10)
            .map(|q| knn[((q * n).div_ceil(10)).clamp(1, n) - 1])
            .filter(|&e| e > 0.0)
            .collect();
        eps_values.dedup();
        for &min_pts in &[3usize, 5, 10] {
            for &eps in &eps_values {
                configs.push(ClusterConfig::Dbscan { eps, min_pts });
            }
        }
    }
    let mut ks: Vec<usize> = [5usize, 10, 20, 30, 50]
        .iter()
        .map(|s| (n / s).max(2))
        .filter(|&k| k < n)
        .collect();
    ks.dedup();
    for k in ks {
        configs.push(ClusterConfig::Agglomerative {
            linkage: Linkage::Average,
            n_clusters: k,
        });
    }
    configs
}

/// Runs every configuration and keeps the best silhouette. Ties prefer more
/// clusters, then DBSCAN over agglomerative, then earlier configurations.
pub fn select_clustering<T: Scalar>(points: &Matrix<T>, configs: &[ClusterConfig]) -> Result<Selection> {
    if points.rows() == 0 {
        return Err(Error::InvalidArgument("clustering on empty input".into()));
    }
    select_clustering_with(&DistanceMatrix::new(points), configs)
}

pub fn select_clustering_with<T: Scalar>(dm: &DistanceMatrix<T>, configs: &[ClusterConfig]) -> Result<Selection> {
    select_clustering_scored(dm, configs, SelectionScore::Silhouette)
}

/// How candidate clusterings are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionScore {
    /// Mean silhouette over non-noise points.
    Silhouette,
    /// Mean silhouette over all points, noise points scoring 0.
    CoverageWeighted,
}

impl SelectionScore {
    pub fn score(self, silhouette: f64, labels: &[i64]) -> f64 {
        match self {
            SelectionScore::Silhouette => silhouette,
            SelectionScore::CoverageWeighted => {
                let clustered = labels.iter().filter(|&&l| l != NOISE).count();
                silhouette * clustered as f64 / labels.len().max(1) as f64
            }
        }
    }
}

pub fn select_clustering_scored<T: Scalar>(dm: &DistanceMatrix<T>, configs: &[ClusterConfig], by: SelectionScore) -> Result<Selection> {
    let linkages: BTreeSet<Linkage> = configs
        .iter()
        .filter_map(|c| match c {
            ClusterConfig::Agglomerative { linkage, .. } => Some(*linkage),
            _ => None,
        })
        .collect();
    let trees: HashMap<Linkage, Dendrogram<T>> = linkages
        .into_par_iter()
        .map(|l| (l, dendrogram_with(dm.clone(), l)))
        .collect();

    let results: Vec<Option<(ClusterAssignment, f64, f64)>> = configs
        .par_iter()
        .map(|cfg| {
            let assignment = match *cfg {
                ClusterConfig::Dbscan { eps, min_pts } => dbscan_with(dm, T::of(eps), min_pts).ok()?,
                ClusterConfig::Agglomerative { linkage, n_clusters } => trees[&linkage].cut(n_clusters).ok()?,
            };
            let s = silhouette_with(dm, &assignment.labels).ok()?.as_f64();
            let score = by.score(s, &assignment.labels);
            Some((assignment, s, score))
        })
        .collect();

    let evaluated = configs
        .iter()
        .zip(&results)
        .map(|(c, r)| (*c, r.as_ref().map(|(_, _, score)| *score)))
        .collect();
    let best = results
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|(a, s, score)| (i, a, s, score)))
        .max_by(|(i, a, _, s), (j, b, _, t)| {
            s.partial_cmp(t)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.n_clusters.cmp(&b.n_clusters))
                .then(b.method().cmp(&a.method()))
                .then(j.cmp(i))
        })
        .ok_or(Error::DegenerateClustering)?;
    Ok(Selection {
        assignment: best.1,
        silhouette: best.2,
        score: best.3,
        evaluated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub avg_propensity_rate: f64,
    pub avg_relative_position: f64,
    pub avg_sentence_length: f64,
    pub pct_past_tense: f64,
    pub pct_with_sentiment: f64,
    pub size: usize,
    /// Sentences containing at least one cluster phrase.
    pub n_occurrences: usize,
    pub n_dialogues: usize,
    pub sample_phrases: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct StatLexicons {
    pub past: PastTenseLexicon,
    pub sentiment: SentimentLexicon,
}

#[derive(Default, Clone)]
struct Accum {
    units: usize,
    position: f64,
    length: f64,
    past: usize,
    sentiment: usize,
    dialogues: usize,
    offers: usize,
    accepted: usize,
}

/// Statistics for many clusters in one corpus pass.
///
/// An occurrence is a customer sentence containing at least one phrase of
/// the cluster. Relative position is the utterance index divided by the last
/// utterance index of the dialogue. The propensity rate averages the outcomes
/// of every offer in the dialogues that contain the cluster.
pub fn all_cluster_stats(clusters: &[Vec<String>], c: &Corpus, lex: &StatLexicons) -> Vec<ClusterStats> {
    let flat: Vec<&String> = clusters.iter().flatten().collect();
    let owner: Vec<usize> = clusters
        .iter()
        .enumerate()
        .flat_map(|(ci, ps)| std::iter::repeat_n(ci, ps.len()))
        .collect();
    let index = PhraseIndex::new(&flat);
    let k = clusters.len();

    struct Unit {
        cluster: usize,
        position: f64,
        length: usize,
        past: bool,
        sentiment: bool,
    }
    struct DialogueHits {
        units: Vec<Unit>,
        phrases: Vec<usize>,
        clusters: BTreeSet<usize>,
        offers: usize,
        accepted: usize,
    }

    // per-dialogue results are collected in order and summed sequentially
    let per_dialogue: Vec<Option<DialogueHits>> = c
        .dialogues
        .par_iter()
        .map(|d| {
            let (occ, sents) = index.scan_dialogue(d);
            if occ.is_empty() {
                return None;
            }
            let sent_lookup: HashMap<(usize, usize), &Vec<String>> = sents.iter().map(|(k, s)| (*k, s)).collect();
            let last = d.utterances.len().saturating_sub(1);
            let cluster_units: BTreeSet<(usize, usize, usize)> =
                occ.iter().map(|o| (owner[o.phrase], o.utterance, o.sentence)).collect();
            let phrase_units: BTreeSet<(usize, usize, usize)> =
                occ.iter().map(|o| (o.phrase, o.utterance, o.sentence)).collect();
            let units: Vec<Unit> = cluster_units
                .into_iter()
                .map(|(cluster, u, s)| {
                    let toks = sent_lookup[&(u, s)];
                    Unit {
                        cluster,
                        position: if last == 0 { 0.0 } else { u as f64 / last as f64 },
                        length: toks.len(),
                        past: lex.past.sentence_is_past(toks),
                        sentiment: lex.sentiment.sentence_has_sentiment(toks),
                    }
                })
                .collect();
            Some(DialogueHits {
                clusters: units.iter().map(|u| u.cluster).collect(),
                units,
                phrases: phrase_units.into_iter().map(|(p, _, _)| p).collect(),
                offers: d.offers.len(),
                accepted: d.offers.iter().filter(|o| o.accepted()).count(),
            })
        })
        .collect();

    let mut acc = vec![Accum::default(); k];
    let mut phrase_hits = vec![0usize; flat.len()];
    for h in per_dialogue.into_iter().flatten() {
        for u in h.units {
            let a = &mut acc[u.cluster];
            a.units += 1;
            a.position += u.position;
            a.length += u.length as f64;
            a.past += usize::from(u.past);
            a.sentiment += usize::from(u.sentiment);
        }
        for p in h.phrases {
            phrase_hits[p] += 1;
        }
        for ci in h.clusters {
            let a = &mut acc[ci];
            a.dialogues += 1;
            a.offers += h.offers;
            a.accepted += h.accepted;
        }
    }
    let mut offset = 0;
    clusters
        .iter()
        .zip(acc)
        .map(|(phrases, a)| {
            let hits = &phrase_hits[offset..offset + phrases.len()];
            offset += phrases.len();
            let mut ranked: Vec<(usize, &String)> = hits.iter().copied().zip(phrases.iter()).collect();
            ranked.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(y.1)));
            let per_unit = |x: f64| if a.units > 0 { x / a.units as f64 } else { 0.0 };
            ClusterStats {
                avg_propensity_rate: if a.offers > 0 { a.accepted as f64 / a.offers as f64 } else { 0.0 },
                avg_relative_position: per_unit(a.position),
                avg_sentence_length: per_unit(a.length),
                pct_past_tense: per_unit(a.past as f64),
                pct_with_sentiment: per_unit(a.sentiment as f64),
                size: phrases.len(),
                n_occurrences: a.units,
                n_dialogues: a.dialogues,
                sample_phrases: ranked.into_iter().take(10).map(|(_, p)| p.clone()).collect(),
            }
        })
        .collect()
}

pub fn cluster_stats(phrases: &[String], c: &Corpus, lex: &StatLexicons) -> ClusterStats {
    all_cluster_stats(&[phrases.to_vec()], c, lex).remove(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PruneThresholds {
    pub min_size: Option<usize>,
    /// Minimum |cluster rate − baseline rate|.
    pub min_rate_deviation: Option<f64>,
    pub max_past_tense: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneRule {
    MinSize,
    RateDeviation,
    PastTense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneOutcome {
    pub kept: Vec<usize>,
    pub removed: Vec<(usize, PruneRule)>,
}

pub fn prune_clusters(stats: &BTreeMap<usize, ClusterStats>, thresholds: &PruneThresholds, baseline_rate: f64) -> PruneOutcome {
    let mut out = PruneOutcome {
        kept: Vec::new(),
        removed: Vec::new(),
    };
    for (&id, s) in stats {
        let violated = if thresholds.min_size.is_some_and(|m| s.size < m) {
            Some(PruneRule::MinSize)
        } else if thresholds
            .min_rate_deviation
            .is_some_and(|m| (s.avg_propensity_rate - baseline_rate).abs() < m)
        {
            Some(PruneRule::RateDeviation)
        } else if thresholds.max_past_tense.is_some_and(|m| s.pct_past_tense > m) {
            Some(PruneRule::PastTense)
        } else {
            None
        };
        match violated {
            Some(rule) => {
                log::info!("pruned cluster {id}: {rule:?}");
                out.removed.push((id, rule));
            }
            None => out.kept.push(id),
        }
    }
    out
}

/// A cluster as handed to curation: its phrases, the products they were
/// significant for, and the statistics shown to reviewers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub cluster_id: usize,
    pub phrases: Vec<String>,
    pub significant_products: BTreeSet<String>,
    pub stats: ClusterStats,
}

pub const CLUSTER_REPORT_HEADER: &str = "cluster_id\tsize\tavg_propensity_rate\tavg_relative_position\tavg_sentence_length\tpct_past_tense\tpct_with_sentiment\tsample_phrases";

pub fn write_cluster_report(w: &mut impl Write, clusters: &[ClusterRecord]) -> Result<()> {
    let io = |e| Error::io("<cluster report>", e);
    writeln!(w, "{CLUSTER_REPORT_HEADER}").map_err(io)?;
    for c in clusters {
        let s = &c.stats;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.cluster_id,
            s.size,
            s.avg_propensity_rate,
            s.avg_relative_position,
            s.avg_sentence_length,
            s.pct_past_tense,
            s.pct_with_sentiment,
            s.sample_phrases.join(" | ")
        )
        .map_err(io)?;
    }
    Ok(())
}
