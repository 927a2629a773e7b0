//! Seeded synthetic tables in three archetypes, each carrying the plot type
//! that suits it:
//!
//! | archetype | shape                                   | gold     |
//! |-----------|-----------------------------------------|----------|
//! | cloud     | thousands of overlapping points         | density  |
//! | series    | sorted x with a noisy functional trend  | line     |
//! | sparse    | five to nine scattered points           | scatter  |

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{DataTable, PlotType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Archetype {
    Cloud,
    Series,
    Sparse,
}

impl Archetype {
    pub const ALL: [Archetype; 3] = [Archetype::Cloud, Archetype::Series, Archetype::Sparse];

    pub fn gold(self) -> PlotType {
        match self {
            Archetype::Cloud => PlotType::Density,
            Archetype::Series => PlotType::Line,
            Archetype::Sparse => PlotType::Scatter,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::Cloud => "cloud",
            Archetype::Series => "series",
            Archetype::Sparse => "sparse",
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Archetype {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Archetype::ALL
            .into_iter()
            .find(|a| a.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown archetype {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub archetypes: Vec<Archetype>,
    /// Tables per archetype.
    pub count: usize,
    /// Series noise as a fraction of the trend's range.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            archetypes: Archetype::ALL.to_vec(),
            count: 200,
            noise: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTable {
    /// Raw (unnormalized) values.
    pub table: DataTable,
    pub archetype: Archetype,
}

impl SyntheticTable {
    pub fn gold(&self) -> PlotType {
        self.archetype.gold()
    }
}

/// Generates `count` tables per archetype, ordered by archetype then index.
/// Ids are `{archetype}-{index:04}`.
pub fn generate(spec: &SyntheticSpec) -> Result<Vec<SyntheticTable>> {
    if spec.count == 0 {
        return Err(Error::EmptyInput);
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::MalformedInput(format!("noise {} must be >= 0", spec.noise)));
    }
    let mut out = Vec::with_capacity(spec.count * spec.archetypes.len());
    for &a in &spec.archetypes {
        for i in 0..spec.count {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(((a as u64) << 32) | i as u64);
            let (x, y) = match a {
                Archetype::Cloud => cloud(&mut rng),
                Archetype::Series => series(&mut rng, spec.noise),
                Archetype::Sparse => sparse(&mut rng),
            };
            out.push(SyntheticTable {
                table: DataTable::xy(format!("{a}-{i:04}"), x, y)?,
                archetype: a,
            });
        }
    }
    Ok(out)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Unequally weighted mixture of one to three correlated Gaussian blobs,
/// optionally skewed.
fn cloud(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1000..=2500);
    let blobs = rng.random_range(1..=3);
    let params: Vec<[f64; 6]> = (0..blobs)
        .map(|_| {
            [
                rng.random_range(0.2..1.0),   // weight
                rng.random_range(-1.0..1.0),  // center x
                rng.random_range(-1.0..1.0),  // center y
                rng.random_range(0.2..0.6),   // spread x
                rng.random_range(0.2..0.6),   // spread y
                rng.random_range(-0.8..0.8),  // correlation
            ]
        })
        .collect();
    let total: f64 = params.iter().map(|p| p[0]).sum();
    let skew_x = if rng.random_bool(0.6) { rng.random_range(0.3..1.0) } else { 0.0 };
    let skew_y = if rng.random_bool(0.6) { rng.random_range(0.3..1.0) } else { 0.0 };
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick = rng.random_range(0.0..total);
        let mut blob = params[blobs - 1];
        for p in &params {
            if pick < p[0] {
                blob = *p;
                break;
            }
            pick -= p[0];
        }
        let [_, cx, cy, sx, sy, rho] = blob;
        let (z1, z2) = (normal(rng), normal(rng));
        let x = cx + sx * z1;
        let y = cy + sy * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
        xs.push(if skew_x > 0.0 { (skew_x * x).exp() } else { x });
        ys.push(if skew_y > 0.0 { (skew_y * y).exp() } else { y });
    }
    (xs, ys)
}

/// Sorted x and `y = f(x) + noise`, with f one of a few trend families.
fn series(rng: &mut ChaCha8Rng, noise: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(40..=120);
    let mut xs: Vec<f64> = (0..n).map(|i| i as f64 + rng.random_range(-0.3..0.3)).collect();
    xs.sort_by(f64::total_cmp);
    let kind = rng.random_range(0..5);
    let (a, b, c) = (rng.random_range(-2.0..2.0), rng.random_range(0.5..4.0), rng.random_range(0.0..6.3));
    let mut walk = 0.0;
    let trend: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let u = x / n as f64;
            match kind {
                0 => a * u,
                1 => a * (u - 0.5).powi(2) + 0.3 * u,
                2 => (b * 6.283 * u + c).sin(),
                3 => (a.abs() * 3.0 * u).exp() * a.signum(),
                _ => {
                    walk += normal(rng);
                    walk
                }
            }
        })
        .collect();
    let lo = trend.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = trend.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-9);
    let ys = trend.iter().map(|t| t + noise * span * normal(rng)).collect();
    (xs, ys)
}

/// A few uniformly placed points in random order.
fn sparse(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(5..=9);
    let xs = (0..n).map(|_| rng.random::<f64>()).collect();
    let ys = (0..n).map(|_| rng.random::<f64>()).collect();
    (xs, ys)
}
