//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any fails. Positional arguments select criteria by name
//! substring, e.g. `cargo test --test acceptance -- metric pca`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use ltc_core::clustering::{agglomerative, dbscan, silhouette, Linkage};
use ltc_core::corpus::clean_corpus;
use ltc_core::evaluation::{f1_score, format_improvement, improvement_pct, kfold_split, quantile_count, roc_auc, run_sweep, select_quantile, spearman, Criterion, RankedVariable, SweepConfig, VariableRanking};
use ltc_core::linalg::Matrix;
use ltc_core::models::fm::fm_objective;
use ltc_core::models::logreg::logreg_objective;
use ltc_core::models::{ModelKind, ModelSpec};
use ltc_core::pca::{covariance, pca_fit, pca_transform};
use ltc_core::pipeline::config::PhrasingSection;
use ltc_core::pipeline::{mine_phrases, PipelineConfig, Runner, Stage, Store};
use ltc_core::registry::{annotate_corpus, ContextualVariable, NegationConfig, Polarity, Registry};
use ltc_core::synthgen::{generate, score_recovery_for, SynthConfig};
use nalgebra::DMatrix;
use rand::Rng;
use tempfile::TempDir;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn metric_oracles() -> Outcome {
    let mut r = rng(1000);
    let (mut f1_err, mut auc_err) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (y, scores, pred) = metric_instance(&mut r);
        f1_err = f1_err.max((f1_score(&y, &pred) - f1_oracle(&y, &pred)).abs());
        auc_err = auc_err.max((roc_auc(&y, &scores).unwrap() - auc_oracle(&y, &scores)).abs());
    }
    outcome(f1_err <= 1e-12 && auc_err <= 1e-12, format!("1000 instances, max |f1 diff| {f1_err:.1e}, max |auc diff| {auc_err:.1e}"))
}

/// `(product, measure, no-context value, [(value, printed improvement %)])`
/// at 10, 20, 50 and 100 percent of context.
const REPORTED_IMPROVEMENTS: [(&str, &str, f64, [(f64, f64); 4]); 8] = [
    ("Business Banking Account", "F1", 0.57, [(0.634, 11.1), (0.645, 13.2), (0.681, 19.4), (0.71, 24.5)]),
    ("Business Banking Account", "AUC", 0.78, [(0.832, 6.68), (0.844, 8.18), (0.881, 13.0), (0.901, 15.5)]),
    ("Acquiring Service", "F1", 0.535, [(0.557, 4.14), (0.562, 4.92), (0.655, 22.3), (0.714, 33.5)]),
    ("Acquiring Service", "AUC", 0.763, [(0.792, 3.9), (0.799, 4.74), (0.863, 13.2), (0.905, 18.7)]),
    ("Salary Service", "F1", 0.65, [(0.662, 1.8), (0.672, 3.33), (0.71, 9.29), (0.744, 14.5)]),
    ("Salary Service", "AUC", 0.711, [(0.744, 4.68), (0.757, 6.41), (0.826, 16.2), (0.853, 20.0)]),
    ("Leasing", "F1", 0.483, [(0.494, 2.31), (0.493, 2.1), (0.529, 9.56), (0.571, 18.2)]),
    ("Leasing", "AUC", 0.757, [(0.762, 0.697), (0.764, 0.952), (0.815, 7.66), (0.851, 12.4)]),
];

fn improvement_table() -> Outcome {
    let mut worst = (0.0f64, String::new());
    let mut n = 0;
    for (product, measure, m0, cells) in REPORTED_IMPROVEMENTS {
        for (m, printed) in cells {
            let text = format_improvement(improvement_pct(m0, m));
            let shown: f64 = text.trim_end_matches('%').parse().unwrap();
            let err = (shown - printed).abs();
            if err >= worst.0 {
                worst = (err, format!("{product} {measure} {m}: {text} vs +{printed}%"));
            }
            n += 1;
        }
    }
    outcome(n == 32 && worst.0 <= 0.15, format!("{n} values, worst {:.3} pp ({})", worst.0, worst.1))
}

const QS: [f64; 11] = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const LONG_TAIL_PRODUCT: &str = "business_banking_account";

fn long_tail() -> Outcome {
    let models = [ModelKind::Gbdt, ModelKind::Auto];
    let criteria = [Criterion::Frequency, Criterion::Rate];
    let mut sums: BTreeMap<(ModelKind, Criterion), Vec<f64>> = BTreeMap::new();
    for seed in SEEDS {
        let t = Instant::now();
        let (c, emb, truth) = generate(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
        let ann = annotate_corpus(&c, &truth.registry(), &NegationConfig::default());
        for model in models {
            for criterion in criteria {
                let cfg = SweepConfig { q_list: QS.to_vec(), folds: 5, seed, ..SweepConfig::default() };
                let report = run_sweep(&c, &emb, &ann, LONG_TAIL_PRODUCT, &ModelSpec::default_for(model), criterion, &cfg).unwrap();
                let acc = sums.entry((model, criterion)).or_insert_with(|| vec![0.0; QS.len()]);
                for (i, q) in QS.iter().enumerate() {
                    acc[i] += report.row(*q).and_then(|r| r.auc_mean).unwrap_or(f64::NAN);
                }
            }
        }
        eprintln!("    long-tail seed {seed} done in {:.0}s", t.elapsed().as_secs_f64());
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for ((model, criterion), sum) in &sums {
        let mean: Vec<f64> = sum.iter().map(|s| s / SEEDS.len() as f64).collect();
        let gain = mean[QS.len() - 1] - mean[1];
        let rho = spearman(&QS, &mean).unwrap_or(f64::NAN);
        pass &= gain >= 0.03 && rho >= 0.9;
        parts.push(format!("{}/{criterion}: gain {gain:+.4}, rho {rho:.3}", model.tag()));
    }
    outcome(pass, parts.join("; "))
}

fn recovery() -> Outcome {
    let section = PhrasingSection::default();
    let (mut hit, mut total) = (0usize, 0usize);
    let mut per_seed = Vec::new();
    for seed in SEEDS {
        let (raw, _, truth) = generate(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
        let (c, _) = clean_corpus(&raw, 2);
        let mined = mine_phrases(&c, &section).unwrap();
        let registry = Registry {
            variables: mined
                .significant
                .iter()
                .enumerate()
                .map(|(i, s)| ContextualVariable {
                    variable_id: i,
                    source_cluster_id: i,
                    phrases: BTreeSet::from([s.candidate.text()]),
                    polarity: Polarity::Positive,
                    paired_variable: None,
                    significant_products: s.significant_products.clone(),
                })
                .collect(),
        };
        let eligible: Vec<usize> = truth.variables.iter().filter(|v| v.max_abs_effect() >= 2f64.ln() && v.support >= 50).map(|v| v.variable_id).collect();
        let rec = score_recovery_for(&registry, &truth, &eligible);
        hit += rec.recovered.len();
        total += eligible.len();
        per_seed.push(format!("{}/{}", rec.recovered.len(), eligible.len()));
    }
    let recall = hit as f64 / total.max(1) as f64;
    outcome(total > 0 && recall >= 0.8, format!("recall {recall:.3} over 5 seeds ({}), min_support {}, alpha {}", per_seed.join(" "), section.min_support, section.alpha))
}

fn clustering() -> Outcome {
    let mut r = rng(2024);
    let mut mismatches = Vec::new();
    let mut sil_err = 0.0f64;
    let mut max_n = 0;
    for fixture in 0..20 {
        let n = r.random_range(30..=500usize);
        max_n = max_n.max(n);
        let dim = r.random_range(2..=5usize);
        let m = blob_fixture(&mut r, n, dim);
        let pts = rows(&m);
        let eps = r.random_range(0.4..2.5);
        let min_pts = r.random_range(2..8usize);
        let lib = dbscan(&m, eps, min_pts).unwrap();
        if partition_of(&lib.labels) != partition_of_opt(&dbscan_oracle(&pts, eps, min_pts)) {
            mismatches.push(format!("dbscan#{fixture}"));
        }
        if lib.n_clusters >= 2 {
            sil_err = sil_err.max((silhouette(&m, &lib.labels).unwrap() - silhouette_oracle(&pts, &lib.labels)).abs());
        }
        let linkage = [Linkage::Average, Linkage::Complete, Linkage::Ward][fixture % 3];
        let cuts = [2, 3, 4, 6];
        let oracle = agglomerative_oracle(&pts, linkage, &cuts);
        for k in cuts {
            let lib = agglomerative(&m, linkage, k).unwrap();
            if partition_of(&lib.labels) != partition_of_groups(&oracle[&k]) {
                mismatches.push(format!("{linkage:?}#{fixture}/k={k}"));
            }
            sil_err = sil_err.max((silhouette(&m, &lib.labels).unwrap() - silhouette_oracle(&pts, &lib.labels)).abs());
        }
    }
    outcome(
        mismatches.is_empty() && sil_err <= 1e-9,
        format!("20 fixtures up to {max_n} points, {} partition mismatches {mismatches:?}, max silhouette diff {sil_err:.1e}", mismatches.len()),
    )
}

fn pca() -> Outcome {
    let mut r = rng(77);
    let (mut recon, mut eig, mut ordered) = (0.0f64, 0.0f64, true);
    for _ in 0..20 {
        let data: Vec<Vec<f64>> = (0..100).map(|_| (0..20).map(|j| r.random_range(-1.0..1.0) * (1.0 + j as f64 / 4.0)).collect()).collect();
        let m = Matrix::from_rows(&data).unwrap();
        let model = pca_fit(&m, 20).unwrap();
        let back = model.inverse_transform(&pca_transform(&model, &m).unwrap()).unwrap();
        recon = back.as_slice().iter().zip(m.as_slice()).fold(recon, |acc, (a, b)| acc.max((a - b).abs()));
        ordered &= model.explained_variance.windows(2).all(|w| w[0] >= w[1]);
        let (_, cov) = covariance(&m);
        let mut reference: Vec<f64> = DMatrix::from_row_slice(20, 20, cov.as_slice()).symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(|a, b| b.partial_cmp(a).unwrap());
        eig = model.explained_variance.iter().zip(&reference).fold(eig, |acc, (a, b)| acc.max((a - b).abs()));
    }
    outcome(
        recon < 1e-8 && eig <= 1e-6 && ordered,
        format!("20 matrices 100x20, max reconstruction error {recon:.1e}, max eigenvalue diff {eig:.1e}, non-increasing {ordered}"),
    )
}

fn gradients() -> Outcome {
    let mut r = rng(31);
    let (mut lr_err, mut fm_err) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let (embed, ctx) = (r.random_range(1..6usize), r.random_range(0..8usize));
        let data = random_features(&mut r, 60, embed, ctx);
        let sw: Vec<f64> = (0..data.len()).map(|_| r.random_range(0.5..2.0)).collect();
        let dim = data.dim();

        let l2 = r.random_range(0.0..0.1);
        let x: Vec<f64> = (0..=dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let (_, g) = logreg_objective(&logreg_from(&x), &data, &sw, l2);
        lr_err = lr_err.max(max_gradient_error(|v| logreg_objective(&logreg_from(v), &data, &sw, l2).0, &x, &logreg_params(&g)));

        let params = fm_random_params(&mut r);
        let k = params.factors;
        let x: Vec<f64> = (0..1 + dim + dim * k).map(|_| r.random_range(-0.5..0.5)).collect();
        let (_, g) = fm_objective(&fm_from(&x, dim, k), &data, &sw, &params);
        fm_err = fm_err.max(max_gradient_error(|v| fm_objective(&fm_from(v, dim, k), &data, &sw, &params).0, &x, &fm_params(&g)));
    }
    outcome(lr_err < 1e-5 && fm_err < 1e-5, format!("50 points, max relative error logreg {lr_err:.1e}, fm {fm_err:.1e}"))
}

fn determinism() -> Outcome {
    let mut cfg = PipelineConfig::default();
    cfg.seed = 11;
    cfg.synth.n_dialogues = 4000;
    cfg.synth.n_planted_variables = 30;
    cfg.phrasing.min_support = 30;
    cfg.models.model = ModelKind::Gbdt;
    cfg.evaluation.q_list = vec![0.0, 10.0, 50.0, 100.0];
    cfg.evaluation.folds = 3;
    let run = || -> BTreeMap<String, Vec<u8>> {
        let dir = TempDir::new().unwrap();
        let mut runner = Runner::new(Store::open(dir.path()).unwrap(), cfg.clone());
        runner.run(Stage::Synth).unwrap();
        runner.auto = true;
        runner.run(Stage::Sweep).unwrap();
        let report = runner.run(Stage::Report).unwrap();
        report.outputs.keys().map(|a| (a.clone(), runner.store().get(a).unwrap())).collect()
    };
    let (a, b) = (run(), run());
    let same = a == b;
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    outcome(same && !a.is_empty(), format!("{} report files, identical {same}, differing {differing:?}", a.len()))
}

fn quantile_laws() -> Outcome {
    let mut r = rng(200);
    let mut failures = Vec::new();
    for case in 0..200 {
        let n = r.random_range(0..400usize);
        let mut scores: Vec<f64> = (0..n).map(|_| r.random_range(0.0..50.0f64).floor()).collect();
        scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let ranking = VariableRanking {
            product_id: "p".into(),
            criterion: Criterion::Frequency,
            entries: scores.iter().enumerate().map(|(i, &s)| RankedVariable { variable_id: i, score: s, n_with: 0, k_with: 0, low_support: false }).collect(),
            excluded: Vec::new(),
        };
        let (q1, q2) = (r.random_range(0..=100u32) as f64, r.random_range(0..=100u32) as f64);
        let (lo, hi) = (q1.min(q2), q1.max(q2));
        let (small, large) = (select_quantile(&ranking, lo), select_quantile(&ranking, hi));
        if !(small.len() <= large.len() && large[..small.len()] == small[..] && large.len() == quantile_count(hi, n)) {
            failures.push(format!("quantile#{case}"));
        }

        let len = r.random_range(2..500usize);
        let rate = r.random_range(0.05..0.6);
        let y: Vec<u8> = (0..len).map(|_| u8::from(r.random_bool(rate))).collect();
        let k = r.random_range(2..=len.min(10));
        let folds = kfold_split(&y, k, r.random()).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        let disjoint_cover = all == (0..len).collect::<Vec<_>>();
        let spread = |v: Vec<usize>| v.iter().max().unwrap() - v.iter().min().unwrap();
        let sizes = spread(folds.iter().map(Vec::len).collect());
        let positives = spread(folds.iter().map(|f| f.iter().filter(|&&i| y[i] == 1).count()).collect());
        if !(disjoint_cover && sizes <= 1 && positives <= 1) {
            failures.push(format!("kfold#{case}"));
        }
    }
    outcome(failures.is_empty(), format!("200 cases, failures {failures:?}"))
}

type Check = (&'static str, fn() -> Outcome);

const CHECKS: [Check; 9] = [
    ("metric-oracles", metric_oracles),
    ("improvement-table", improvement_table),
    ("long-tail", long_tail),
    ("pipeline-recovery", recovery),
    ("clustering-equivalence", clustering),
    ("pca", pca),
    ("gradient-check", gradients),
    ("determinism", determinism),
    ("quantile-laws", quantile_laws),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in CHECKS {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {name}: {} [{:.1}s]", o.detail, t.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
