//! Brute-force reference implementations shared by the oracle tests and the
//! acceptance run. Each is written directly from its definition and shares
//! no code with the library.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use ltc_core::clustering::Linkage;
use ltc_core::linalg::Matrix;
use ltc_core::models::{FeatureSet, Fm, FmParams, LogReg};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// F1 from an explicit confusion matrix; 0 when there are no true positives.
pub fn f1_oracle(y: &[u8], pred: &[u8]) -> f64 {
    let mut cm = [[0usize; 2]; 2];
    for (&t, &p) in y.iter().zip(pred) {
        cm[t as usize][p as usize] += 1;
    }
    let (tp, fp, fn_) = (cm[1][1] as f64, cm[0][1] as f64, cm[1][0] as f64);
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / (tp + fp);
    let recall = tp / (tp + fn_);
    2.0 * precision * recall / (precision + recall)
}

/// AUC over every positive-negative pair, ties counting one half.
pub fn auc_oracle(y: &[u8], scores: &[f64]) -> f64 {
    let pos: Vec<f64> = (0..y.len()).filter(|&i| y[i] == 1).map(|i| scores[i]).collect();
    let neg: Vec<f64> = (0..y.len()).filter(|&i| y[i] == 0).map(|i| scores[i]).collect();
    let mut credit = 0.0;
    for &p in &pos {
        for &n in &neg {
            credit += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    credit / (pos.len() as f64 * neg.len() as f64)
}

/// Random labelled scores with ties from coarse rounding in half the cases.
pub fn metric_instance(r: &mut ChaCha8Rng) -> (Vec<u8>, Vec<f64>, Vec<u8>) {
    let n = r.random_range(2..=10_000usize);
    let mut y: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.3))).collect();
    y[0] = 1;
    y[1] = 0;
    let coarse = r.random_bool(0.5);
    let scores: Vec<f64> = (0..n)
        .map(|_| {
            let s: f64 = r.random();
            if coarse {
                (s * 20.0).round() / 20.0
            } else {
                s
            }
        })
        .collect();
    let pred: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.4))).collect();
    (y, scores, pred)
}

/// Points drawn around a few random centres.
pub fn blob_fixture(r: &mut ChaCha8Rng, n: usize, dim: usize) -> Matrix<f64> {
    let k = r.random_range(2..=6usize);
    let centres: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| r.random_range(-10.0..10.0)).collect()).collect();
    let sd: f64 = r.random_range(0.3..1.5);
    let noise = Normal::new(0.0, sd).unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let c = &centres[r.random_range(0..k)];
            c.iter().map(|&x| x + noise.sample(r)).collect()
        })
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

pub fn rows(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

/// DBSCAN by definition: clusters are the connected components of core
/// points; a border point joins the component holding the lowest-indexed
/// core point among those adjacent to it. Noise is `None`.
pub fn dbscan_oracle(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let adj: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| dist(&points[i], &points[j]) <= eps).collect()).collect();
    let core: Vec<bool> = (0..n).map(|i| adj[i].iter().filter(|&&b| b).count() >= min_pts).collect();
    let mut comp = vec![usize::MAX; n];
    for s in 0..n {
        if !core[s] || comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = s;
        while let Some(p) = stack.pop() {
            for q in 0..n {
                if core[q] && adj[p][q] && comp[q] == usize::MAX {
                    comp[q] = s;
                    stack.push(q);
                }
            }
        }
    }
    (0..n)
        .map(|i| {
            if core[i] {
                Some(comp[i])
            } else {
                (0..n).filter(|&j| core[j] && adj[i][j]).map(|j| comp[j]).min()
            }
        })
        .collect()
}

fn linkage_distance(points: &[Vec<f64>], a: &[usize], b: &[usize], linkage: Linkage) -> f64 {
    match linkage {
        Linkage::Average => {
            let mut s = 0.0;
            for &i in a {
                for &j in b {
                    s += dist(&points[i], &points[j]);
                }
            }
            s / (a.len() * b.len()) as f64
        }
        Linkage::Complete => {
            let mut m: f64 = 0.0;
            for &i in a {
                for &j in b {
                    m = m.max(dist(&points[i], &points[j]));
                }
            }
            m
        }
        Linkage::Ward => {
            let centroid = |s: &[usize]| -> Vec<f64> {
                let d = points[0].len();
                let mut c = vec![0.0; d];
                for &i in s {
                    for (x, v) in c.iter_mut().zip(&points[i]) {
                        *x += v;
                    }
                }
                c.iter().map(|x| x / s.len() as f64).collect()
            };
            let (na, nb) = (a.len() as f64, b.len() as f64);
            (2.0 * na * nb / (na + nb)).sqrt() * dist(&centroid(a), &centroid(b))
        }
    }
}

/// Naive agglomeration: every step recomputes the linkage of each pair of
/// clusters from the raw points and merges the closest pair. Returns the
/// partition at each requested cluster count.
pub fn agglomerative_oracle(points: &[Vec<f64>], linkage: Linkage, cuts: &[usize]) -> BTreeMap<usize, Vec<Vec<usize>>> {
    let n = points.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut d: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { dist(&points[i], &points[j]) }).collect())
        .collect();
    let mut out = BTreeMap::new();
    let wanted: BTreeSet<usize> = cuts.iter().copied().collect();
    loop {
        if wanted.contains(&clusters.len()) {
            out.insert(clusters.len(), clusters.clone());
        }
        if clusters.len() == 1 {
            break;
        }
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                if d[i][j] < best.0 {
                    best = (d[i][j], i, j);
                }
            }
        }
        let (_, a, b) = best;
        let merged_b = clusters.remove(b);
        clusters[a].extend(merged_b);
        d.remove(b);
        for row in d.iter_mut() {
            row.remove(b);
        }
        for k in 0..clusters.len() {
            if k != a {
                let v = linkage_distance(points, &clusters[a], &clusters[k], linkage);
                d[a][k] = v;
                d[k][a] = v;
            }
        }
    }
    out
}

/// Set partition of the non-noise points, independent of label values.
pub fn partition_of(labels: &[i64]) -> BTreeSet<BTreeSet<usize>> {
    let mut groups: BTreeMap<i64, BTreeSet<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            groups.entry(l).or_default().insert(i);
        }
    }
    groups.into_values().collect()
}

pub fn partition_of_opt(labels: &[Option<usize>]) -> BTreeSet<BTreeSet<usize>> {
    let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            groups.entry(*l).or_default().insert(i);
        }
    }
    groups.into_values().collect()
}

pub fn partition_of_groups(groups: &[Vec<usize>]) -> BTreeSet<BTreeSet<usize>> {
    groups.iter().map(|g| g.iter().copied().collect()).collect()
}

/// Mean silhouette over non-noise points by the textbook double loop.
pub fn silhouette_oracle(points: &[Vec<f64>], labels: &[i64]) -> f64 {
    let clusters: BTreeSet<i64> = labels.iter().copied().filter(|&l| l >= 0).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..points.len() {
        if labels[i] < 0 {
            continue;
        }
        count += 1;
        let own_size = labels.iter().filter(|&&l| l == labels[i]).count();
        if own_size < 2 {
            continue;
        }
        let mut a = 0.0;
        for j in 0..points.len() {
            if j != i && labels[j] == labels[i] {
                a += dist(&points[i], &points[j]);
            }
        }
        a /= (own_size - 1) as f64;
        let mut b = f64::INFINITY;
        for &c in &clusters {
            if c == labels[i] {
                continue;
            }
            let mut s = 0.0;
            let mut m = 0usize;
            for j in 0..points.len() {
                if labels[j] == c {
                    s += dist(&points[i], &points[j]);
                    m += 1;
                }
            }
            b = b.min(s / m as f64);
        }
        if a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / count as f64
}

/// Random feature rows with a sparse context block.
pub fn random_features(r: &mut ChaCha8Rng, n: usize, embed_dim: usize, n_context: usize) -> FeatureSet<f64> {
    let mut f = FeatureSet::new(embed_dim, n_context);
    for i in 0..n {
        let dense: Vec<f64> = (0..embed_dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let ctx: Vec<usize> = (0..n_context).filter(|_| r.random_bool(0.3)).collect();
        f.push(format!("d{i}"), &dense, &ctx, u8::from(r.random_bool(0.35))).unwrap();
    }
    f
}

/// `|a − b| / max(|a|, |b|)`, or the absolute difference when both are
/// below `floor`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < floor {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

pub fn logreg_params(m: &LogReg<f64>) -> Vec<f64> {
    let mut v = m.weights.clone();
    v.push(m.bias);
    v
}

pub fn logreg_from(v: &[f64]) -> LogReg<f64> {
    LogReg {
        weights: v[..v.len() - 1].to_vec(),
        bias: v[v.len() - 1],
    }
}

pub fn fm_params(m: &Fm<f64>) -> Vec<f64> {
    let mut v = vec![m.bias];
    v.extend(&m.linear);
    v.extend(m.factors.as_slice());
    v
}

pub fn fm_from(v: &[f64], dim: usize, k: usize) -> Fm<f64> {
    Fm {
        bias: v[0],
        linear: v[1..1 + dim].to_vec(),
        factors: Matrix::from_vec(dim, k, v[1 + dim..].to_vec()).unwrap(),
    }
}

/// Largest relative error between an analytic gradient and central
/// differences of `f` at `x`.
pub fn max_gradient_error(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = f(&xp);
        xp[i] = x[i] - h;
        let down = f(&xp);
        xp[i] = x[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max(rel_err(analytic[i], fd, 1e-6));
    }
    worst
}

pub fn fm_random_params(r: &mut ChaCha8Rng) -> FmParams {
    FmParams {
        factors: r.random_range(1..=4),
        l2_linear: r.random_range(0.0..0.1),
        l2_factors: r.random_range(0.0..0.1),
        ..FmParams::default()
    }
}
