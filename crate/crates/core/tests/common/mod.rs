//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use chartsel_core::table::{normalize, Column, DataTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

/// Compensated (Neumaier) sum, so the oracle does not share the naive
/// summation of the library.
pub fn neumaier(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// min, max, mean, population std, population skew of one column.
/// Skew is 0 when the variance is below 1e-12.
pub fn oracle_column(values: &[f64]) -> [f64; 5] {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mean = neumaier(sorted.iter().copied()) / n;
    let var = neumaier(sorted.iter().map(|v| (v - mean) * (v - mean))) / n;
    let third = neumaier(sorted.iter().map(|v| (v - mean) * (v - mean) * (v - mean))) / n;
    let skew = if var < 1e-12 { 0.0 } else { third / (var * var.sqrt()) };
    [sorted[0], sorted[sorted.len() - 1], mean, var.sqrt(), skew]
}

/// Brute-force 26-entry feature vector. Entry `5 * a + s` aggregates column
/// statistic `s` with aggregate `a` (min, max, mean, std, mean absolute
/// deviation); the last entry is Pearson's r.
pub fn oracle_features(t: &DataTable) -> [f64; 26] {
    let cols: Vec<[f64; 5]> = t.columns().iter().map(|c| oracle_column(&c.values)).collect();
    let mut out = [0.0; 26];
    for s in 0..5 {
        let v: Vec<f64> = cols.iter().map(|c| c[s]).collect();
        let n = v.len() as f64;
        let mean = neumaier(v.iter().copied()) / n;
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let std = (neumaier(v.iter().map(|x| (x - mean).powi(2))) / n).sqrt();
        let mad = neumaier(v.iter().map(|x| (x - mean).abs())) / n;
        for (a, val) in [lo, hi, mean, std, mad].into_iter().enumerate() {
            out[5 * a + s] = val;
        }
    }
    let (x, y) = (&t.columns()[0].values, &t.columns()[1].values);
    let n = x.len() as f64;
    let mx = neumaier(x.iter().copied()) / n;
    let my = neumaier(y.iter().copied()) / n;
    let sxx = neumaier(x.iter().map(|a| (a - mx) * (a - mx)));
    let syy = neumaier(y.iter().map(|b| (b - my) * (b - my)));
    let sxy = neumaier(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    out[25] = if sxx < 1e-12 || syy < 1e-12 {
        0.0
    } else {
        (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
    };
    out
}

/// `|a - b| / max(|a|, |b|)`, taken as 0 when both values are below 1e-12
/// in magnitude (rounding noise around an exact 0).
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale <= 1e-12 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Seeded raw two-column table mixing several value distributions,
/// including ties, constant columns and large offsets.
pub fn random_raw_table(seed: u64) -> DataTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..300);
    let column = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        match rng.random_range(0..6) {
            0 => (0..n).map(|_| rng.random_range(-10.0..10.0)).collect(),
            1 => {
                let d = Normal::new(rng.random_range(-1e3..1e3), rng.random_range(0.1..50.0)).unwrap();
                (0..n).map(|_| d.sample(rng)).collect()
            }
            2 => {
                let d = Exp::new(rng.random_range(0.1..5.0)).unwrap();
                (0..n).map(|_| d.sample(rng)).collect()
            }
            3 => (0..n).map(|_| rng.random_range(0..5) as f64).collect(),
            4 => (0..n).map(|i| i as f64 * 0.5 + rng.random_range(0.0..1.0)).collect(),
            _ => {
                if rng.random_bool(0.5) {
                    vec![3.25; n]
                } else {
                    (0..n).map(|_| 1e6 + rng.random_range(0.0..1.0)).collect()
                }
            }
        }
    };
    let x = column(&mut rng);
    let y = column(&mut rng);
    DataTable::new(format!("rand-{seed}"), vec![Column::new("x", x), Column::new("y", y)]).unwrap()
}

pub fn random_table(seed: u64) -> DataTable {
    normalize(&random_raw_table(seed))
}

/// Minimum over all `k`-subsets of `errors`, each subset summed in
/// ascending order.
pub fn exhaustive_topk(errors: &[f64], k: usize) -> f64 {
    let n = errors.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let mut subset: Vec<f64> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| errors[i]).collect();
        subset.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let s: f64 = subset.iter().sum();
        if s < best {
            best = s;
        }
    }
    best
}
