//! Trains on a synthetic corpus and reports held-out selection accuracy per
//! archetype. `cargo run --release --example synthetic_benchmark`
//!
//! Hyperparameters come from the environment: EPOCHS, LR, MOMENTUM, BATCH,
//! WEIGHT_EPS, BETA, SEEDS (comma-separated, one bundle each); ERRORS prints
//! mean normalized errors per archetype and plot type.

use std::collections::BTreeMap;
use std::time::Instant;

use chartsel_core::pipeline::{prepare_all, training_data};
use chartsel_core::regressor::train;
use chartsel_core::select::{normalized_errors, predict_candidates, Ensemble, Predictor, DEFAULT_EPS};
use chartsel_core::synth::{generate, SyntheticSpec};
use chartsel_core::table::split_dataset;
use chartsel_core::{PlotType, RenderConfig, Scoring, TrainConfig};

fn env<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key).ok().and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> chartsel_core::Result<()> {
    let d = TrainConfig::default();
    let train_cfg = TrainConfig {
        epochs: env("EPOCHS", d.epochs),
        learning_rate: env("LR", d.learning_rate),
        momentum: env("MOMENTUM", d.momentum),
        batch_size: env("BATCH", d.batch_size),
        weight_epsilon: env("WEIGHT_EPS", d.weight_epsilon),
        smooth_l1_beta: env("BETA", d.smooth_l1_beta),
        ..d
    };
    println!("{train_cfg:?}");
    let cfg = RenderConfig::default();
    let corpus = generate(&SyntheticSpec { count: 200, seed: 1, ..Default::default() })?;
    let tables: Vec<_> = corpus.iter().map(|s| s.table.clone()).collect();
    let prepared = prepare_all(&tables, &cfg)?;
    let ids: Vec<String> = tables.iter().map(|t| t.id.clone()).collect();
    let split = split_dataset(&ids, 1)?;
    let data = training_data(&prepared, &split);

    let start = Instant::now();
    let seeds: Vec<u64> = std::env::var("SEEDS")
        .unwrap_or_else(|_| "0,1".into())
        .split(',')
        .map(|v| v.parse().expect("seed"))
        .collect();
    let bundles = seeds
        .iter()
        .map(|&seed| train(&data, &TrainConfig { seed, ..train_cfg.clone() }))
        .collect::<chartsel_core::Result<Vec<_>>>()?;
    println!("trained {} bundles in {:.1?}", bundles.len(), start.elapsed());
    for b in &bundles {
        for (p, h) in &b.metadata.history {
            let curve: Vec<String> = h.epochs.iter().map(|e| format!("{:.2}", e.validation_loss.unwrap_or(f64::NAN))).collect();
            println!("{p}: init val {:.2?} curve {}", h.initial_validation_loss, curve.join(" "));
        }
    }
    let ensemble = Ensemble::new(bundles.iter().collect())?;
    let mut models: Vec<(String, &dyn Predictor)> =
        seeds.iter().zip(&bundles).map(|(s, b)| (format!("seed{s}"), b as &dyn Predictor)).collect();
    models.push(("ensemble".into(), &ensemble));

    let held = generate(&SyntheticSpec { count: 50, seed: 1000, ..Default::default() })?;
    for (name, predictor) in models {
        let t_bar = *predictor.t_bar();
        let cands: Vec<_> = held
            .iter()
            .map(|s| predict_candidates(&s.table, predictor, &cfg))
            .collect::<chartsel_core::Result<_>>()?;
        if std::env::var("ERRORS").is_ok() {
            let mut errs: BTreeMap<(String, PlotType), [f64; 26]> = BTreeMap::new();
            for (s, c) in held.iter().zip(&cands) {
                for (p, pred) in &c.predicted {
                    let e = normalized_errors(pred, &c.truth, &t_bar, DEFAULT_EPS);
                    let acc = errs.entry((s.archetype.to_string(), *p)).or_insert([0.0; 26]);
                    for i in 0..26 {
                        acc[i] += e[i] / 50.0;
                    }
                }
            }
            for ((a, p), e) in &errs {
                let v: Vec<String> = e.iter().map(|v| format!("{v:5.2}")).collect();
                println!("{a:6} {p:7} {}", v.join(" "));
            }
        }
        for scoring in [Scoring::L1, Scoring::TopK(5), Scoring::TopK(10)] {
            let mut per = BTreeMap::new();
            for (s, c) in held.iter().zip(&cands) {
                let r = c.recommend(&t_bar, scoring, DEFAULT_EPS)?;
                let e = per.entry(s.archetype).or_insert((0, [0usize; 3]));
                e.0 += (r.chosen == s.gold()) as usize;
                e.1[r.chosen.index()] += 1;
            }
            let total: usize = per.values().map(|e| e.0).sum();
            println!("{name:8} {:20} acc {:.3} {:?}", scoring.label(), total as f64 / held.len() as f64, per);
        }
    }
    Ok(())
}
