//! Histogram regression trees and the two ensembles built on them: gradient
//! boosting on the logistic loss and a bagged random forest.
//!
//! Both ensembles share one learner. A split maximizes
//! `G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)` over per-row statistics
//! `(g, h)`. Boosting feeds logistic gradients and hessians; the forest feeds
//! `g = w·y`, `h = w` with `λ = 0`, for which the criterion is the weighted
//! Gini decrease.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{sample_weights, FeatureSet};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode<T> {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        value: T,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<T> {
    pub nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar> Tree<T> {
    fn walk(&self, value: impl Fn(usize) -> T) -> T {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if value(*feature) <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &[T]) -> T {
        self.walk(|j| x[j])
    }

    pub fn predict_row(&self, data: &FeatureSet<T>, i: usize) -> T {
        self.walk(|j| data.value(i, j))
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

/// Quantile bin edges of the dense columns; a value `v` falls in the first
/// bin `b` with `v <= edges[b]`, or in the last bin.
#[derive(Debug, Clone)]
struct Binned<T> {
    edges: Vec<Vec<T>>,
    /// Column-major bin codes of the dense block.
    codes: Vec<Vec<u8>>,
    ctx_cols: Vec<Vec<u32>>,
    embed_dim: usize,
}

impl<T: Scalar> Binned<T> {
    fn new(data: &FeatureSet<T>, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, 256);
        let n = data.len();
        let mut edges = Vec::with_capacity(data.embed_dim);
        let mut codes = Vec::with_capacity(data.embed_dim);
        for c in 0..data.embed_dim {
            let col: Vec<T> = (0..n).map(|i| data.dense(i)[c]).collect();
            let mut sorted = col.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
            let max = sorted.last().copied().unwrap_or_else(T::zero);
            let mut e: Vec<T> = (1..max_bins).map(|q| sorted[q * n / max_bins]).filter(|&v| v < max).collect();
            e.dedup();
            codes.push(col.iter().map(|&v| e.partition_point(|&x| x < v) as u8).collect());
            edges.push(e);
        }
        Self {
            edges,
            codes,
            ctx_cols: data.context_columns(),
            embed_dim: data.embed_dim,
        }
    }

    fn n_features(&self) -> usize {
        self.embed_dim + self.ctx_cols.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LeafRule {
    /// `−G/(H+λ)`, scaled by the shrinkage factor.
    Newton,
    /// `G/H`, the weighted positive fraction.
    Mean,
}

#[derive(Debug, Clone, Copy)]
struct GrowConfig {
    max_depth: usize,
    lambda: f64,
    min_child_weight: f64,
    min_gain: f64,
    features_per_node: Option<usize>,
    leaf: LeafRule,
    shrinkage: f64,
}

struct SplitChoice<T> {
    feature: usize,
    bin: usize,
    gain: T,
    left: (T, T),
    right: (T, T),
}

fn grow_tree<T: Scalar>(b: &Binned<T>, g: &[T], h: &[T], cfg: &GrowConfig, rng: &mut ChaCha8Rng) -> Tree<T> {
    let n = g.len();
    let d = b.embed_dim;
    let n_ctx = b.ctx_cols.len();
    let max_bins = b.edges.iter().map(|e| e.len() + 1).max().unwrap_or(1);
    let lambda = T::of(cfg.lambda);
    let mcw = T::of(cfg.min_child_weight);
    let score = |gs: T, hs: T| gs * gs / (hs + lambda);
    let leaf_value = |gs: T, hs: T| match cfg.leaf {
        LeafRule::Newton => -T::of(cfg.shrinkage) * gs / (hs + lambda),
        LeafRule::Mean => {
            if hs > T::zero() {
                gs / hs
            } else {
                T::zero()
            }
        }
    };

    let active: Vec<usize> = (0..n).filter(|&i| h[i] > T::zero()).collect();
    let mut slot = vec![-1i32; n];
    let (mut g0, mut h0) = (T::zero(), T::zero());
    for &i in &active {
        slot[i] = 0;
        g0 += g[i];
        h0 += h[i];
    }
    let mut nodes = vec![TreeNode::Leaf { value: T::zero() }];
    // (node index, G, H)
    let mut frontier: Vec<(usize, T, T)> = vec![(0, g0, h0)];

    for depth in 0..=cfg.max_depth {
        if frontier.is_empty() {
            break;
        }
        if depth == cfg.max_depth {
            for &(node, gs, hs) in &frontier {
                nodes[node] = TreeNode::Leaf { value: leaf_value(gs, hs) };
            }
            break;
        }
        let f = frontier.len();
        let mut dense_hist = vec![(T::zero(), T::zero()); f * d * max_bins];
        let mut ctx_hist = vec![(T::zero(), T::zero()); f * n_ctx];
        for &i in &active {
            let s = slot[i];
            if s < 0 {
                continue;
            }
            let base = s as usize * d * max_bins;
            for c in 0..d {
                let cell = &mut dense_hist[base + c * max_bins + b.codes[c][i] as usize];
                cell.0 += g[i];
                cell.1 += h[i];
            }
        }
        for (c, rows) in b.ctx_cols.iter().enumerate() {
            for &r in rows {
                let s = slot[r as usize];
                if s >= 0 {
                    let cell = &mut ctx_hist[s as usize * n_ctx + c];
                    cell.0 += g[r as usize];
                    cell.1 += h[r as usize];
                }
            }
        }

        let mut splits: Vec<Option<SplitChoice<T>>> = Vec::with_capacity(f);
        for (s, &(_, gs, hs)) in frontier.iter().enumerate() {
            if hs < mcw + mcw {
                splits.push(None);
                continue;
            }
            let candidates: Vec<usize> = match cfg.features_per_node {
                Some(m) if m < b.n_features() => {
                    let mut v = sample(rng, b.n_features(), m).into_vec();
                    v.sort_unstable();
                    v
                }
                _ => (0..b.n_features()).collect(),
            };
            let parent = score(gs, hs);
            let mut best: Option<SplitChoice<T>> = None;
            let mut consider = |feature: usize, bin: usize, left: (T, T), right: (T, T)| {
                if left.1 < mcw || right.1 < mcw {
                    return;
                }
                let gain = score(left.0, left.1) + score(right.0, right.1) - parent;
                if best.as_ref().is_none_or(|bst| gain > bst.gain) {
                    best = Some(SplitChoice {
                        feature,
                        bin,
                        gain,
                        left,
                        right,
                    });
                }
            };
            for feature in candidates {
                if feature < d {
                    let hist = &dense_hist[(s * d + feature) * max_bins..];
                    let (mut gl, mut hl) = (T::zero(), T::zero());
                    for bin in 0..b.edges[feature].len() {
                        gl += hist[bin].0;
                        hl += hist[bin].1;
                        consider(feature, bin, (gl, hl), (gs - gl, hs - hl));
                    }
                } else {
                    let (gr, hr) = ctx_hist[s * n_ctx + feature - d];
                    consider(feature, 0, (gs - gr, hs - hr), (gr, hr));
                }
            }
            splits.push(best.filter(|bst| bst.gain.as_f64() > cfg.min_gain));
        }

        let mut next = Vec::new();
        // slot → (left slot, right slot) for split nodes
        let mut routes: Vec<Option<(i32, i32)>> = vec![None; f];
        for (s, choice) in splits.iter().enumerate() {
            let (node, gs, hs) = frontier[s];
            match choice {
                None => nodes[node] = TreeNode::Leaf { value: leaf_value(gs, hs) },
                Some(c) => {
                    let (left, right) = (nodes.len(), nodes.len() + 1);
                    nodes.push(TreeNode::Leaf { value: T::zero() });
                    nodes.push(TreeNode::Leaf { value: T::zero() });
                    let threshold = if c.feature < d { b.edges[c.feature][c.bin] } else { T::of(0.5) };
                    nodes[node] = TreeNode::Split {
                        feature: c.feature,
                        threshold,
                        left,
                        right,
                    };
                    routes[s] = Some((next.len() as i32, next.len() as i32 + 1));
                    next.push((left, c.left.0, c.left.1));
                    next.push((right, c.right.0, c.right.1));
                }
            }
        }
        for &i in &active {
            let s = slot[i];
            if s < 0 {
                continue;
            }
            slot[i] = match (routes[s as usize], &splits[s as usize]) {
                (Some((l, r)), Some(c)) if c.feature < d => {
                    if (b.codes[c.feature][i] as usize) <= c.bin {
                        l
                    } else {
                        r
                    }
                }
                (Some((l, _)), Some(_)) => l,
                _ => -1,
            };
        }
        // rows holding a split context feature move right
        for (s, choice) in splits.iter().enumerate() {
            if let (Some((l, r)), Some(c)) = (routes[s], choice) {
                if c.feature >= d {
                    for &row in &b.ctx_cols[c.feature - d] {
                        if slot[row as usize] == l {
                            slot[row as usize] = r;
                        }
                    }
                }
            }
        }
        frontier = next;
    }
    Tree { nodes }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub max_bins: usize,
    pub class_weight: bool,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_trees: 300,
            learning_rate: 0.2,
            max_depth: 2,
            lambda: 1.0,
            min_child_weight: 1.0,
            max_bins: 32,
            class_weight: true,
        }
    }
}

/// Boosted trees; leaf values already include the shrinkage factor, so the
/// margin is `base + Σ leaf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbdt<T> {
    pub base: T,
    pub trees: Vec<Tree<T>>,
}

impl<T: Scalar> Gbdt<T> {
    pub fn margin(&self, x: &[T]) -> T {
        self.trees.iter().fold(self.base, |m, t| m + t.predict(x))
    }

    pub fn predict(&self, x: &[T]) -> T {
        sigmoid(self.margin(x))
    }

    pub fn margin_row(&self, data: &FeatureSet<T>, i: usize) -> T {
        self.trees.iter().fold(self.base, |m, t| m + t.predict_row(data, i))
    }
}

/// Returns the model and the weighted training log-loss after each tree,
/// starting with the loss of the constant model.
pub fn train_gbdt<T: Scalar>(data: &FeatureSet<T>, params: &GbdtParams, seed: u64) -> Result<(Gbdt<T>, Vec<f64>)> {
    let n = data.len();
    let sw: Vec<T> = sample_weights(&data.y, params.class_weight);
    let total_w: T = sw.iter().copied().sum();
    let pos_w: T = sw.iter().zip(&data.y).filter(|(_, &y)| y == 1).map(|(&w, _)| w).sum();
    let p0 = (pos_w / total_w).max(T::of(1e-6)).min(T::of(1.0 - 1e-6));
    let base = (p0 / (T::one() - p0)).ln();
    let binned = Binned::new(data, params.max_bins);
    let cfg = GrowConfig {
        max_depth: params.max_depth,
        lambda: params.lambda,
        min_child_weight: params.min_child_weight,
        min_gain: 1e-12,
        features_per_node: None,
        leaf: LeafRule::Newton,
        shrinkage: params.learning_rate,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margin = vec![base; n];
    let loss = |margin: &[T]| -> f64 {
        let l: T = (0..n)
            .map(|i| {
                let m = if data.y[i] == 1 { -margin[i] } else { margin[i] };
                sw[i] * crate::scalar::softplus(m)
            })
            .sum();
        (l / total_w).as_f64()
    };
    let mut curve = vec![loss(&margin)];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut g = vec![T::zero(); n];
    let mut h = vec![T::zero(); n];
    for _ in 0..params.n_trees {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            let y = if data.y[i] == 1 { T::one() } else { T::zero() };
            g[i] = sw[i] * (p - y);
            h[i] = (sw[i] * p * (T::one() - p)).max(T::of(1e-12));
        }
        let tree = grow_tree(&binned, &g, &h, &cfg, &mut rng);
        for (i, m) in margin.iter_mut().enumerate() {
            *m += tree.predict_row(data, i);
        }
        curve.push(loss(&margin));
        trees.push(tree);
    }
    Ok((Gbdt { base, trees }, curve))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub max_bins: usize,
    /// Features tried per node; `None` means `⌈√dim⌉`.
    pub features_per_node: Option<usize>,
    pub class_weight: bool,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            min_child_weight: 2.0,
            max_bins: 32,
            features_per_node: None,
            class_weight: true,
        }
    }
}

/// Each tree votes for class 1 when its leaf's weighted positive fraction
/// exceeds one half; the score is the share of such votes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest<T> {
    pub trees: Vec<Tree<T>>,
}

impl<T: Scalar> Forest<T> {
    fn vote_share(&self, votes: impl Iterator<Item = T>) -> T {
        let half = T::of(0.5);
        let yes = votes.filter(|&v| v > half).count();
        if self.trees.is_empty() {
            half
        } else {
            T::of_usize(yes) / T::of_usize(self.trees.len())
        }
    }

    pub fn predict(&self, x: &[T]) -> T {
        self.vote_share(self.trees.iter().map(|t| t.predict(x)))
    }

    pub fn predict_row(&self, data: &FeatureSet<T>, i: usize) -> T {
        self.vote_share(self.trees.iter().map(|t| t.predict_row(data, i)))
    }
}

pub fn train_forest<T: Scalar>(data: &FeatureSet<T>, params: &RfParams, seed: u64) -> Result<Forest<T>> {
    let n = data.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let sw: Vec<T> = sample_weights(&data.y, params.class_weight);
    let binned = Binned::new(data, params.max_bins);
    let m = params
        .features_per_node
        .unwrap_or_else(|| (data.dim() as f64).sqrt().ceil() as usize)
        .max(1);
    let cfg = GrowConfig {
        max_depth: params.max_depth,
        lambda: 0.0,
        min_child_weight: params.min_child_weight,
        min_gain: 1e-12,
        features_per_node: Some(m),
        leaf: LeafRule::Mean,
        shrinkage: 1.0,
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64 + 1);
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
            let h: Vec<T> = (0..n).map(|i| sw[i] * T::of(counts[i] as f64)).collect();
            let g: Vec<T> = (0..n).map(|i| if data.y[i] == 1 { h[i] } else { T::zero() }).collect();
            grow_tree(&binned, &g, &h, &cfg, &mut rng)
        })
        .collect();
    Ok(Forest { trees })
}
