//! Library results against independent references: frozen values from an
//! external statistics package and brute-force reimplementations.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use common::*;
use ltc_core::clustering::{agglomerative, dbscan, silhouette, Linkage};
use ltc_core::corpus::{corpus_stats, Speaker};
use ltc_core::evaluation::{f1_score, roc_auc};
use ltc_core::linalg::Matrix;
use ltc_core::models::fm::fm_objective;
use ltc_core::models::logreg::logreg_objective;
use ltc_core::pca::{covariance, pca_fit, pca_transform};
use ltc_core::phrasing::{generate_candidates, two_proportion_z};
use ltc_core::synthgen::{generate, SynthConfig};
use nalgebra::DMatrix;
use rand::Rng;

/// `(k1, n1, k2, n2, z, p)` from statsmodels' pooled `proportions_ztest`.
const ZTEST_REFERENCE: [(u32, u32, u32, u32, f64, f64); 7] = [
    (30, 100, 100, 1000, 5.9070248102946845, 3.483413078358968e-09),
    (30, 100, 200, 1000, 2.3446217977134056, 0.019046388550670857),
    (12, 50, 240, 1000, 0.0, 1.0),
    (5, 40, 80, 400, -1.1455761241280862, 0.2519705810181688),
    (70, 120, 3000, 10000, 6.711425969171481, 1.9273156977436583e-11),
    (1, 10, 2, 10, -0.6262242910851495, 0.5311678365460141),
    (400, 1000, 300, 1000, 4.688072309384956, 2.7579057770546713e-06),
];

#[test]
fn z_test_matches_reference_values() {
    for (k1, n1, k2, n2, z_ref, p_ref) in ZTEST_REFERENCE {
        let (z, p) = two_proportion_z(k1, n1, k2, n2);
        assert!((z - z_ref).abs() < 1e-12, "z({k1},{n1},{k2},{n2}) = {z}, expected {z_ref}");
        assert!(rel_err(p, p_ref, 1e-300) < 1e-9, "p({k1},{n1},{k2},{n2}) = {p:e}, expected {p_ref:e}");
    }
}

#[test]
fn z_test_is_antisymmetric_in_its_groups() {
    let mut r = rng(11);
    for _ in 0..500 {
        let n1 = r.random_range(1..500u32);
        let n2 = r.random_range(1..500u32);
        let k1 = r.random_range(0..=n1);
        let k2 = r.random_range(0..=n2);
        let (z, p) = two_proportion_z(k1, n1, k2, n2);
        let (zs, ps) = two_proportion_z(k2, n2, k1, n1);
        assert_eq!(z, -zs);
        assert_eq!(p, ps);
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn metrics_match_brute_force() {
    let mut r = rng(5);
    for _ in 0..100 {
        let (y, scores, pred) = metric_instance(&mut r);
        assert!((f1_score(&y, &pred) - f1_oracle(&y, &pred)).abs() < 1e-12);
        assert!((roc_auc(&y, &scores).unwrap() - auc_oracle(&y, &scores)).abs() < 1e-12);
    }
}

#[test]
fn auc_is_invariant_under_increasing_transforms() {
    let mut r = rng(6);
    for _ in 0..50 {
        let (y, scores, _) = metric_instance(&mut r);
        let t: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        assert_eq!(roc_auc(&y, &scores).unwrap(), roc_auc(&y, &t).unwrap());
    }
}

#[test]
fn clustering_matches_brute_force() {
    let mut r = rng(21);
    for _ in 0..4 {
        let n = r.random_range(20..150usize);
        let m = blob_fixture(&mut r, n, 3);
        let pts = rows(&m);
        let eps = r.random_range(0.5..2.0);
        let min_pts = r.random_range(2..6usize);
        let lib = dbscan(&m, eps, min_pts).unwrap();
        assert_eq!(partition_of(&lib.labels), partition_of_opt(&dbscan_oracle(&pts, eps, min_pts)));
        for linkage in [Linkage::Average, Linkage::Complete, Linkage::Ward] {
            let cuts = [2, 3, 5];
            let oracle = agglomerative_oracle(&pts, linkage, &cuts);
            for k in cuts {
                let lib = agglomerative(&m, linkage, k).unwrap();
                assert_eq!(partition_of(&lib.labels), partition_of_groups(&oracle[&k]), "{linkage:?} k={k}");
                let s = silhouette(&m, &lib.labels).unwrap();
                assert!((s - silhouette_oracle(&pts, &lib.labels)).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn pca_matches_nalgebra_eigendecomposition() {
    let mut r = rng(8);
    for _ in 0..5 {
        let rows: Vec<Vec<f64>> = (0..100).map(|_| (0..20).map(|_| r.random_range(-1.0..1.0) * r.random_range(0.1..3.0)).collect()).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let (_, cov) = covariance(&m);
        let na = DMatrix::from_row_slice(20, 20, cov.as_slice());
        let mut reference: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let pca = pca_fit(&m, 20).unwrap();
        for (a, b) in pca.explained_variance.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-6);
        }
        let back = pca.inverse_transform(&pca_transform(&pca, &m).unwrap()).unwrap();
        let err = back.as_slice().iter().zip(m.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8);
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut r = rng(13);
    for _ in 0..10 {
        let (embed, ctx) = (r.random_range(1..5usize), r.random_range(0..6usize));
        let data = random_features(&mut r, 40, embed, ctx);
        let sw: Vec<f64> = (0..data.len()).map(|_| r.random_range(0.5..2.0)).collect();
        let dim = data.dim();

        let l2 = r.random_range(0.0..0.1);
        let x: Vec<f64> = (0..=dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let (_, g) = logreg_objective(&logreg_from(&x), &data, &sw, l2);
        let err = max_gradient_error(|v| logreg_objective(&logreg_from(v), &data, &sw, l2).0, &x, &logreg_params(&g));
        assert!(err < 1e-5, "logreg gradient error {err}");

        let params = fm_random_params(&mut r);
        let k = params.factors;
        let x: Vec<f64> = (0..1 + dim + dim * k).map(|_| r.random_range(-0.5..0.5)).collect();
        let (_, g) = fm_objective(&fm_from(&x, dim, k), &data, &sw, &params);
        let err = max_gradient_error(|v| fm_objective(&fm_from(v, dim, k), &data, &sw, &params).0, &x, &fm_params(&g));
        assert!(err < 1e-5, "fm gradient error {err}");
    }
}

fn small_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        n_dialogues: 400,
        n_planted_variables: 10,
        seed,
        ..SynthConfig::default()
    }
}

#[test]
fn corpus_stats_equal_a_recount() {
    for seed in 0..3 {
        let (c, _, _) = generate(&small_synth(seed)).unwrap();
        let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for d in &c.dialogues {
            for o in &d.offers {
                let e = counts.entry(&o.product_id).or_default();
                e.0 += 1;
                e.1 += usize::from(o.outcome);
            }
        }
        for s in corpus_stats(&c) {
            let (n, k) = counts.get(s.product_id.as_str()).copied().unwrap_or_default();
            assert_eq!(s.n_dialogues, n);
            assert_eq!(s.propensity_rate, (n > 0).then(|| k as f64 / n as f64));
        }
    }
}

#[test]
fn phrase_counts_equal_a_recount() {
    let (c, _, _) = generate(&small_synth(4)).unwrap();
    let cands = generate_candidates(&c, 3).unwrap();
    let mut support: BTreeMap<String, usize> = BTreeMap::new();
    let mut per_product: BTreeMap<(String, String), (u32, u32)> = BTreeMap::new();
    for d in &c.dialogues {
        let mut seen = HashSet::new();
        for u in d.utterances.iter().filter(|u| u.speaker == Speaker::Customer) {
            for sentence in u.text.split('.') {
                let toks: Vec<&str> = sentence.split_whitespace().collect();
                for len in 1..=3 {
                    for w in toks.windows(len) {
                        seen.insert(w.join(" "));
                    }
                }
            }
        }
        for p in seen {
            *support.entry(p.clone()).or_default() += 1;
            for o in &d.offers {
                let e = per_product.entry((p.clone(), o.product_id.clone())).or_default();
                e.0 += 1;
                e.1 += u32::from(o.outcome);
            }
        }
    }
    assert_eq!(cands.len(), support.len());
    let texts: BTreeSet<String> = cands.candidates.iter().map(|c| c.text()).collect();
    assert_eq!(texts, support.keys().cloned().collect());
    for cand in &cands.candidates {
        let t = cand.text();
        assert_eq!(cand.support, support[&t], "{t}");
        for (product, stat) in &cand.per_product {
            let (n, k) = per_product[&(t.clone(), product.clone())];
            assert_eq!((stat.n_with_phrase, stat.k_with_phrase_and_outcome1), (n, k));
        }
    }
}
