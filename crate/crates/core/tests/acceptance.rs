//! Acceptance gate. Every criterion runs in order and prints one PASS or
//! FAIL line; the process exits non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use chartsel_core::eval::{score_csi, score_ft, Rating, Report};
use chartsel_core::pipeline::{prepare_all, training_data};
use chartsel_core::regressor::gradcheck::{grad_check_with, kink_margin, CheckLoss, FD_STEP};
use chartsel_core::regressor::{train, Architecture, LayerSpec, Network};
use chartsel_core::render::render;
use chartsel_core::select::{predict_candidates, topk_sum, Candidates, Ensemble, Predictor, DEFAULT_EPS};
use chartsel_core::stats::true_features;
use chartsel_core::synth::{generate, SyntheticSpec, SyntheticTable};
use chartsel_core::table::{normalize, split_dataset, Column, DataTable};
use chartsel_core::{ModelBundle, PlotType, RenderConfig, Scoring, TrainConfig};
use common::{exhaustive_topk, oracle_features, random_table, rel_err};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = (bool, String);

fn timed(limit: Duration, f: impl FnOnce() -> Verdict) -> Verdict {
    let start = Instant::now();
    let (ok, detail) = f();
    let took = start.elapsed();
    (ok && took <= limit, format!("{detail}; {took:.2?} (limit {limit:?})"))
}

fn statistics_oracle() -> Verdict {
    timed(Duration::from_secs(5), || {
        let mut worst = 0.0f64;
        for seed in 0..100 {
            let t = random_table(seed);
            let got = true_features(&t).expect("features");
            let want = oracle_features(&t);
            for i in 0..26 {
                worst = worst.max(rel_err(got[i], want[i]));
            }
        }
        (worst <= 1e-9, format!("100 tables, max relative error {worst:.2e}"))
    })
}

fn reduced_architecture() -> Architecture {
    use LayerSpec::*;
    Architecture {
        input: [1, 12, 12],
        layers: vec![
            Conv2d { filters: 3, kernel: 3, stride: 2 },
            Relu,
            Conv2d { filters: 4, kernel: 3, stride: 1 },
            Relu,
            Dense { units: 10 },
            Relu,
            Dense { units: 26 },
        ],
    }
}

/// Draws are skipped while the point sits within 10 finite-difference
/// steps of a ReLU or smooth-L1 kink, where central differences are
/// meaningless; the number skipped is reported.
fn gradient_correctness() -> Verdict {
    timed(Duration::from_secs(60), || {
        let arch = reduced_architecture();
        let mut rng = ChaCha8Rng::seed_from_u64(1000);
        let (mut worst, mut trials, mut skipped, mut draw) = (0.0f64, 0, 0, 0u64);
        while trials < 20 {
            let net = Network::<f64>::init(arch.clone(), draw).expect("init");
            draw += 1;
            let input: Vec<f64> = (0..arch.input_len()).map(|_| rng.random_range(0.0..1.0)).collect();
            let target: Vec<f64> = (0..26).map(|_| rng.random_range(-1.0..2.0)).collect();
            let loss = CheckLoss {
                weights: (0..26).map(|_| rng.random_range(0.5..10.0)).collect(),
                beta: 1.0,
            };
            if kink_margin(&net, &input, &target, &loss).expect("margin") < 10.0 * FD_STEP {
                skipped += 1;
                continue;
            }
            worst = worst.max(grad_check_with(&net, &input, &target, &loss).expect("grad check"));
            trials += 1;
        }
        (worst <= 1e-4, format!("20 trials ({skipped} draws skipped at kinks), max relative error {worst:.2e}"))
    })
}

fn topk_equivalence() -> Verdict {
    timed(Duration::from_secs(5), || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut mismatches = 0;
        for v in 0..1000 {
            let errors: Vec<f64> = (0..6)
                .map(|_| match v % 3 {
                    0 => rng.random_range(0.0..1.0),
                    // coarse values force ties
                    1 => (rng.random_range(0..4) as f64) * 0.1,
                    _ => rng.random_range(0.0f64..10.0).powi(3) * 1e3,
                })
                .collect();
            for k in 1..=6 {
                let fast = topk_sum(&errors, k).expect("k in range");
                if fast.to_bits() != exhaustive_topk(&errors, k).to_bits() {
                    mismatches += 1;
                }
            }
        }
        (mismatches == 0, format!("6000 comparisons, {mismatches} bitwise mismatches"))
    })
}

fn affine(t: &DataTable, rng: &mut ChaCha8Rng) -> DataTable {
    let columns = t
        .columns()
        .iter()
        .map(|c| {
            let a = 10f64.powf(rng.random_range(-2.0..3.0));
            let b = rng.random_range(-1e3..1e3);
            Column::new(c.name.clone(), c.values.iter().map(|v| a * v + b).collect())
        })
        .collect();
    DataTable::new(t.id.clone(), columns).expect("same shape")
}

fn renderer_invariance() -> Verdict {
    timed(Duration::from_secs(10), || {
        let cfg = RenderConfig::default();
        let tables = generate(&SyntheticSpec { count: 17, seed: 99, ..Default::default() }).expect("synth");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut nondeterministic, mut variant) = (0, 0);
        for s in tables.iter().take(50) {
            let base = normalize(&s.table);
            let moved = normalize(&affine(&s.table, &mut rng));
            for p in PlotType::ALL {
                let first = render(&base, p, &cfg).expect("render").to_pgm();
                if render(&base, p, &cfg).expect("render").to_pgm() != first {
                    nondeterministic += 1;
                }
                if render(&moved, p, &cfg).expect("render").to_pgm() != first {
                    variant += 1;
                }
            }
        }
        (
            nondeterministic == 0 && variant == 0,
            format!("150 images, {nondeterministic} nondeterministic, {variant} changed by rescaling"),
        )
    })
}

fn point_scheme() -> Verdict {
    let ratings = [(Rating::Easiest, 2), (Rating::Doable, 1), (Rating::Impossible, 0)];
    // (estimate, truth, points): within 20% of the truth earns 2, within
    // 40% earns 1, anything further earns 0.
    let grid: &[(f64, f64, u32)] = &[
        (0.5, 0.5, 2),
        (0.55, 0.5, 2),
        (0.45, 0.5, 2),
        (0.59, 0.5, 2),
        (0.41, 0.5, 2),
        (0.61, 0.5, 1),
        (0.39, 0.5, 1),
        (0.69, 0.5, 1),
        (0.31, 0.5, 1),
        (0.71, 0.5, 0),
        (0.29, 0.5, 0),
        (1.0, 0.5, 0),
        (0.0, 0.5, 0),
        (0.25, 0.25, 2),
        (0.29, 0.25, 2),
        (0.34, 0.25, 1),
        (0.16, 0.25, 1),
        (0.36, 0.25, 0),
        (0.14, 0.25, 0),
        (0.8, 1.0, 2),
        (1.2, 1.0, 2),
        (0.75, 1.0, 1),
        (1.25, 1.0, 1),
        (0.6, 1.0, 1),
        (1.4, 1.0, 1),
        (0.59, 1.0, 0),
        (1.41, 1.0, 0),
        (0.09, 0.1, 2),
        (0.13, 0.1, 1),
        (0.15, 0.1, 0),
        (0.0, 0.0, 2),
        (0.01, 0.0, 0),
    ];
    let csi_bad = ratings.iter().filter(|(r, p)| score_csi(*r) != *p).count();
    let ft_bad: Vec<_> = grid.iter().filter(|(e, y, p)| score_ft(*e, *y) != *p).collect();
    (
        csi_bad == 0 && ft_bad.is_empty(),
        format!("3 ratings, {} estimates; mismatches {csi_bad} and {ft_bad:?}", grid.len()),
    )
}

/// Trained bundles shared by the last three criteria.
struct Benchmark {
    bundles: Vec<ModelBundle>,
    train_times: Vec<Duration>,
}

const SEEDS: [u64; 2] = [0, 1];

fn train_benchmark() -> Benchmark {
    let cfg = RenderConfig::default();
    let corpus = generate(&SyntheticSpec { count: 200, seed: 1, ..Default::default() }).expect("synth");
    let tables: Vec<_> = corpus.iter().map(|s| s.table.clone()).collect();
    let prepared = prepare_all(&tables, &cfg).expect("prepare");
    let ids: Vec<String> = tables.iter().map(|t| t.id.clone()).collect();
    let data = training_data(&prepared, &split_dataset(&ids, 1).expect("split"));
    let mut bundles = Vec::new();
    let mut train_times = Vec::new();
    for seed in SEEDS {
        let start = Instant::now();
        bundles.push(train(&data, &TrainConfig { seed, ..TrainConfig::default() }).expect("train"));
        train_times.push(start.elapsed());
    }
    Benchmark { bundles, train_times }
}

fn training_efficacy(b: &Benchmark) -> Verdict {
    let limit = Duration::from_secs(600);
    let mut ok = b.train_times.iter().all(|t| *t <= limit);
    let mut parts = Vec::new();
    for (seed, bundle) in SEEDS.iter().zip(&b.bundles) {
        for (p, h) in &bundle.metadata.history {
            let ratio = h.final_validation_loss().expect("validation set") / h.initial_validation_loss.expect("validation set");
            ok &= ratio <= 0.5 && h.epochs.len() <= 30;
            parts.push(format!("seed{seed}/{p} {ratio:.3}"));
        }
    }
    let times: Vec<String> = b.train_times.iter().map(|t| format!("{t:.1?}")).collect();
    (ok, format!("600 tables, validation loss ratio {}; train time {} (limit {limit:?})", parts.join(", "), times.join(", ")))
}

struct HeldOut {
    tables: Vec<SyntheticTable>,
    models: Vec<(String, ModelBundle)>,
    candidates: Vec<Vec<Candidates>>,
    ensemble_t_bar: chartsel_core::FeatureVector,
}

fn held_out(b: &Benchmark) -> HeldOut {
    let cfg = RenderConfig::default();
    let tables = generate(&SyntheticSpec { count: 50, seed: 1000, ..Default::default() }).expect("synth");
    let ensemble = Ensemble::new(b.bundles.iter().collect()).expect("ensemble");
    let mut predictors: Vec<&dyn Predictor> = b.bundles.iter().map(|m| m as &dyn Predictor).collect();
    predictors.push(&ensemble);
    let candidates = predictors
        .iter()
        .map(|p| tables.iter().map(|s| predict_candidates(&s.table, *p, &cfg).expect("predict")).collect())
        .collect();
    HeldOut {
        models: SEEDS.iter().map(|s| format!("seed{s}")).zip(b.bundles.iter().cloned()).collect(),
        ensemble_t_bar: *ensemble.t_bar(),
        tables,
        candidates,
    }
}

impl HeldOut {
    fn t_bars(&self) -> Vec<(String, &chartsel_core::FeatureVector)> {
        let mut out: Vec<_> = self.models.iter().map(|(n, m)| (n.clone(), &m.t_bar)).collect();
        out.push(("ensemble".into(), &self.ensemble_t_bar));
        out
    }
}

fn end_to_end(h: &HeldOut) -> Verdict {
    let golds: BTreeMap<String, BTreeSet<PlotType>> =
        h.tables.iter().map(|s| (s.table.id.clone(), BTreeSet::from([s.gold()]))).collect();
    let models: Vec<(String, &chartsel_core::FeatureVector, &[Candidates])> = h
        .t_bars()
        .into_iter()
        .zip(&h.candidates)
        .map(|((n, t), c)| (n, t, c.as_slice()))
        .collect();
    let scorings = [Scoring::L1, Scoring::TopK(5), Scoring::TopK(10)];
    let report = Report::evaluate(&models, &golds, &scorings).expect("report");
    println!("{}", report.to_text());
    let text = report.to_text();
    let layout_ok = report.rows.len() == 9
        && text.lines().next().is_some_and(|l| l.contains("Weighted F1"))
        && text.lines().count() == 11;
    let acc = report
        .rows
        .iter()
        .find(|r| r.model == "ensemble" && r.scoring == Scoring::TopK(5))
        .map(|r| r.metrics.accuracy)
        .expect("ensemble top-5 row");
    (
        acc >= 0.6 && layout_ok,
        format!("{} held-out tables, ensemble Top-5 accuracy {acc:.3} (need 0.600), report rows {}", h.tables.len(), report.rows.len()),
    )
}

fn k26_equals_l1(h: &HeldOut) -> Verdict {
    let mut differ = 0;
    let mut total = 0;
    for ((_, t_bar), cands) in h.t_bars().into_iter().zip(&h.candidates) {
        for c in cands {
            let l1 = c.recommend(t_bar, Scoring::L1, DEFAULT_EPS).expect("l1");
            let k26 = c.recommend(t_bar, Scoring::TopK(26), DEFAULT_EPS).expect("k26");
            total += 1;
            let same_scores = l1.scores.iter().zip(&k26.scores).all(|(a, b)| a.1.to_bits() == b.1.to_bits());
            if l1.chosen != k26.chosen || !same_scores {
                differ += 1;
            }
        }
    }
    (differ == 0, format!("{total} model-table pairs, {differ} disagreements"))
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, f: &mut dyn FnMut() -> Verdict| {
        let (ok, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        failed += !ok as usize;
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    };
    report("statistics oracle equivalence", &mut statistics_oracle);
    report("gradient correctness", &mut gradient_correctness);
    report("top-k equivalence", &mut topk_equivalence);
    report("renderer determinism and normalization invariance", &mut renderer_invariance);
    report("point-scheme conformance", &mut point_scheme);

    let bench = catch_unwind(train_benchmark);
    match &bench {
        Ok(b) => {
            report("training efficacy", &mut || training_efficacy(b));
            let held = catch_unwind(AssertUnwindSafe(|| held_out(b)));
            match &held {
                Ok(h) => {
                    report("end-to-end selection", &mut || end_to_end(h));
                    report("k = 26 equals L1", &mut || k26_equals_l1(h));
                }
                Err(_) => {
                    for name in ["end-to-end selection", "k = 26 equals L1"] {
                        report(name, &mut || (false, "held-out prediction panicked".into()));
                    }
                }
            }
        }
        Err(_) => {
            for name in ["training efficacy", "end-to-end selection", "k = 26 equals L1"] {
                report(name, &mut || (false, "training panicked".into()));
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
