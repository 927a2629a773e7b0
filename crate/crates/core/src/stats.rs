//! Two-stage statistical features of a table.
//!
//! Each column is summarized by five statistics (min, max, mean, std, skew);
//! each statistic is then aggregated across columns by five aggregators
//! (min, max, mean, std, MAD). With Pearson's r appended this gives the
//! 26-entry [`FeatureVector`]:
//!
//! ```text
//! index = 5 * aggregator + statistic      (0..25)
//! index 25                                pearson_r
//! ```
//!
//! std is the population standard deviation, skew is the Fisher-Pearson
//! coefficient `m3 / m2^1.5`, and MAD is the mean absolute deviation about
//! the mean.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::table::DataTable;

pub const NUM_FEATURES: usize = 26;

/// Variance (or squared-deviation sum) below which skew and correlation
/// are reported as 0.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

pub const COLUMN_STATS: [&str; 5] = ["min", "max", "mean", "std", "skew"];
pub const TABLE_AGGREGATES: [&str; 5] = ["min", "max", "mean", "std", "mad"];
pub const PEARSON_INDEX: usize = 25;

/// Schema names in index order, e.g. `"mad_of_skew"`, ending with
/// `"pearson_r"`.
pub static FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "min_of_min", "min_of_max", "min_of_mean", "min_of_std", "min_of_skew",
    "max_of_min", "max_of_max", "max_of_mean", "max_of_std", "max_of_skew",
    "mean_of_min", "mean_of_max", "mean_of_mean", "mean_of_std", "mean_of_skew",
    "std_of_min", "std_of_max", "std_of_mean", "std_of_std", "std_of_skew",
    "mad_of_min", "mad_of_max", "mad_of_mean", "mad_of_std", "mad_of_skew",
    "pearson_r",
];

pub fn feature_index(aggregate: usize, statistic: usize) -> usize {
    5 * aggregate + statistic
}

/// Fixed-schema vector of 26 statistics. Used for true features,
/// predictions and training-set means alike.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn zeros() -> Self {
        FeatureVector([0.0; NUM_FEATURES])
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; NUM_FEATURES] =
            values.try_into().map_err(|_| Error::ShapeMismatch {
                expected: format!("{NUM_FEATURES} features"),
                got: format!("{} values", values.len()),
            })?;
        Ok(FeatureVector(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.0[i])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Element-wise mean. Returns `None` for an empty input.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a FeatureVector>) -> Option<Self> {
        let mut sum = [0.0; NUM_FEATURES];
        let mut n = 0usize;
        for v in vectors {
            for (s, x) in sum.iter_mut().zip(v.0) {
                *s += x;
            }
            n += 1;
        }
        (n > 0).then(|| FeatureVector(sum.map(|s| s / n as f64)))
    }
}

impl Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for FeatureVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Serialize for FeatureVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(NUM_FEATURES))?;
        for (name, v) in FEATURE_NAMES.iter().zip(self.0) {
            map.serialize_entry(name, &v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = FeatureVector;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "an object with the {NUM_FEATURES} feature names")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = [None; NUM_FEATURES];
                while let Some(key) = map.next_key::<String>()? {
                    let i = FEATURE_NAMES
                        .iter()
                        .position(|n| *n == key)
                        .ok_or_else(|| de::Error::unknown_field(&key, &FEATURE_NAMES))?;
                    out[i] = Some(map.next_value::<f64>()?);
                }
                let mut values = [0.0; NUM_FEATURES];
                for (i, v) in out.into_iter().enumerate() {
                    values[i] = v.ok_or_else(|| de::Error::missing_field(FEATURE_NAMES[i]))?;
                }
                Ok(FeatureVector(values))
            }
        }
        d.deserialize_map(V)
    }
}

/// Per-column summary in schema order: min, max, mean, std, skew.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub skew: f64,
}

impl ColumnStats {
    pub fn to_array(self) -> [f64; 5] {
        [self.min, self.max, self.mean, self.std, self.skew]
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn central_moment(values: &[f64], center: f64, k: i32) -> f64 {
    values.iter().map(|v| (v - center).powi(k)).sum::<f64>() / values.len() as f64
}

pub fn column_stats(values: &[f64]) -> Result<ColumnStats> {
    if values.is_empty() {
        return Err(Error::EmptySequence);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = mean(values);
    let m2 = central_moment(values, mean, 2);
    let skew = if m2 < DEGENERATE_VARIANCE {
        0.0
    } else {
        central_moment(values, mean, 3) / m2.powf(1.5)
    };
    Ok(ColumnStats {
        min,
        max,
        mean,
        std: m2.sqrt(),
        skew,
    })
}

/// Aggregates each column statistic across columns with min, max, mean,
/// std and MAD, returning the first 25 schema entries.
pub fn table_aggregate(stats: &[ColumnStats]) -> Result<[f64; 25]> {
    if stats.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut out = [0.0; 25];
    for s in 0..5 {
        let across: Vec<f64> = stats.iter().map(|c| c.to_array()[s]).collect();
        let mu = mean(&across);
        let aggregates = [
            across.iter().copied().fold(f64::INFINITY, f64::min),
            across.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mu,
            central_moment(&across, mu, 2).sqrt(),
            across.iter().map(|v| (v - mu).abs()).sum::<f64>() / across.len() as f64,
        ];
        for (a, v) in aggregates.into_iter().enumerate() {
            out[feature_index(a, s)] = v;
        }
    }
    Ok(out)
}

/// Pearson's correlation coefficient; 0 when either column is (nearly)
/// constant.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::EmptySequence);
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx < DEGENERATE_VARIANCE || syy < DEGENERATE_VARIANCE {
        return Ok(0.0);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ground-truth feature vector of a normalized two-column table.
pub fn true_features(t: &DataTable) -> Result<FeatureVector> {
    if t.num_columns() != 2 {
        return Err(Error::WrongArity {
            found: t.num_columns(),
        });
    }
    let stats = t
        .columns()
        .iter()
        .map(|c| column_stats(&c.values))
        .collect::<Result<Vec<_>>>()?;
    let mut out = [0.0; NUM_FEATURES];
    out[..25].copy_from_slice(&table_aggregate(&stats)?);
    out[PEARSON_INDEX] = pearson_r(&t.columns()[0].values, &t.columns()[1].values)?;
    Ok(FeatureVector(out))
}
