//! Candidate scoring and argmin recommendation.
//!
//! A plot's score is the normalized L1 distance between the statistics a
//! regressor reads off the plot and the table's true statistics, either
//! over all features or over only the `k` best-recovered ones.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::regressor::{predict_ensemble, ModelBundle};
use crate::render::{render_candidates, PlotImage, RenderConfig};
use crate::stats::{true_features, FeatureVector, NUM_FEATURES};
use crate::table::{normalize, DataTable, PlotType};

/// Denominator clamp for per-feature normalization.
pub const DEFAULT_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scoring {
    L1,
    TopK(usize),
}

impl Default for Scoring {
    fn default() -> Self {
        Scoring::TopK(5)
    }
}

impl Scoring {
    /// Human-readable label used in reports.
    pub fn label(&self) -> String {
        match self {
            Scoring::L1 => "L1-Loss".into(),
            Scoring::TopK(k) => format!("Top-{k} Closest Loss"),
        }
    }
}

impl fmt::Display for Scoring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scoring::L1 => f.write_str("l1"),
            Scoring::TopK(k) => write!(f, "top{k}"),
        }
    }
}

impl FromStr for Scoring {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "l1" {
            return Ok(Scoring::L1);
        }
        let digits = s
            .strip_prefix("top-")
            .or_else(|| s.strip_prefix("top"))
            .ok_or_else(|| format!("unknown scoring {s:?}; use l1 or topK"))?;
        let k: usize = digits.parse().map_err(|_| format!("bad k in {s:?}"))?;
        if !(1..=NUM_FEATURES).contains(&k) {
            return Err(format!("k = {k} outside 1..={NUM_FEATURES}"));
        }
        Ok(Scoring::TopK(k))
    }
}

impl Serialize for Scoring {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scoring {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// `|pred_i - truth_i| / max(|t_bar_i|, eps)` for every feature.
pub fn normalized_errors(pred: &FeatureVector, truth: &FeatureVector, t_bar: &FeatureVector, eps: f64) -> [f64; NUM_FEATURES] {
    std::array::from_fn(|i| (pred[i] - truth[i]).abs() / t_bar[i].abs().max(eps))
}

fn sorted_errors(pred: &FeatureVector, truth: &FeatureVector, t_bar: &FeatureVector, eps: f64) -> [f64; NUM_FEATURES] {
    let mut e = normalized_errors(pred, truth, t_bar, eps);
    e.sort_by(f64::total_cmp);
    e
}

/// Normalized L1 loss over all 26 features. Terms are summed in ascending
/// order, the same order [`topk_loss`] uses, so `topk_loss(.., 26, ..)`
/// reproduces this value bit for bit.
pub fn l1_norm_loss(pred: &FeatureVector, truth: &FeatureVector, t_bar: &FeatureVector, eps: f64) -> f64 {
    sorted_errors(pred, truth, t_bar, eps).iter().sum()
}

/// Sum of the `k` smallest entries of `errors`, added in ascending order.
/// Equals the minimum over all `k`-subsets.
pub fn topk_sum(errors: &[f64], k: usize) -> Result<f64> {
    if !(1..=errors.len()).contains(&k) {
        return Err(Error::KOutOfRange { k, max: errors.len() });
    }
    let mut e = errors.to_vec();
    e.sort_by(f64::total_cmp);
    Ok(e[..k].iter().sum())
}

/// Sum of the `k` smallest normalized errors, which is the minimum over all
/// `k`-subsets of features.
pub fn topk_loss(pred: &FeatureVector, truth: &FeatureVector, t_bar: &FeatureVector, k: usize, eps: f64) -> Result<f64> {
    topk_sum(&normalized_errors(pred, truth, t_bar, eps), k)
}

pub fn score(pred: &FeatureVector, truth: &FeatureVector, t_bar: &FeatureVector, scoring: Scoring, eps: f64) -> Result<f64> {
    match scoring {
        Scoring::L1 => Ok(l1_norm_loss(pred, truth, t_bar, eps)),
        Scoring::TopK(k) => topk_loss(pred, truth, t_bar, k, eps),
    }
}

/// Anything that reads statistics off a plot of a given type.
pub trait Predictor: Sync {
    fn predict(&self, plot_type: PlotType, img: &PlotImage) -> Result<FeatureVector>;
    /// Training-set feature means used to normalize errors.
    fn t_bar(&self) -> &FeatureVector;
}

impl Predictor for ModelBundle {
    fn predict(&self, plot_type: PlotType, img: &PlotImage) -> Result<FeatureVector> {
        self.model(plot_type)?.forward(img)
    }

    fn t_bar(&self) -> &FeatureVector {
        &self.t_bar
    }
}

/// Prediction-averaging ensemble over several bundles. Normalizers come
/// from the first member.
#[derive(Debug, Clone)]
pub struct Ensemble<'a> {
    members: Vec<&'a ModelBundle>,
}

impl<'a> Ensemble<'a> {
    pub fn new(members: Vec<&'a ModelBundle>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        Ok(Ensemble { members })
    }
}

impl Predictor for Ensemble<'_> {
    fn predict(&self, plot_type: PlotType, img: &PlotImage) -> Result<FeatureVector> {
        let models = self
            .members
            .iter()
            .map(|b| b.model(plot_type))
            .collect::<Result<Vec<_>>>()?;
        predict_ensemble(&models, img)
    }

    fn t_bar(&self) -> &FeatureVector {
        &self.members[0].t_bar
    }
}

/// True features and per-type predictions for one table, before scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub table_id: String,
    pub truth: FeatureVector,
    pub predicted: BTreeMap<PlotType, FeatureVector>,
}

/// Normalizes `t`, renders every candidate and lets each type's model read
/// its own image.
pub fn predict_candidates(t: &DataTable, predictor: &dyn Predictor, cfg: &RenderConfig) -> Result<Candidates> {
    let t = normalize(t);
    let truth = true_features(&t)?;
    let images = render_candidates(&t, cfg)?;
    let predicted = images
        .iter()
        .map(|(p, img)| Ok((*p, predictor.predict(*p, img)?)))
        .collect::<Result<_>>()?;
    Ok(Candidates {
        table_id: t.id,
        truth,
        predicted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionScore {
    pub kind: Scoring,
    pub losses: BTreeMap<PlotType, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub table_id: String,
    pub chosen: PlotType,
    pub scoring: Scoring,
    pub scores: BTreeMap<PlotType, f64>,
    pub predicted: BTreeMap<PlotType, FeatureVector>,
    pub true_features: FeatureVector,
}

impl Recommendation {
    pub fn selection_score(&self) -> SelectionScore {
        SelectionScore {
            kind: self.scoring,
            losses: self.scores.clone(),
        }
    }
}

/// Argmin over the losses; ties go to the canonically first plot type.
pub fn choose(losses: &BTreeMap<PlotType, f64>) -> Option<PlotType> {
    let mut best: Option<(PlotType, f64)> = None;
    for (&p, &l) in losses {
        if best.is_none_or(|(_, b)| l < b) {
            best = Some((p, l));
        }
    }
    best.map(|(p, _)| p)
}

impl Candidates {
    pub fn recommend(&self, t_bar: &FeatureVector, scoring: Scoring, eps: f64) -> Result<Recommendation> {
        let scores = self
            .predicted
            .iter()
            .map(|(p, pred)| Ok((*p, score(pred, &self.truth, t_bar, scoring, eps)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let chosen = choose(&scores).ok_or(Error::MissingModel(PlotType::Scatter))?;
        Ok(Recommendation {
            table_id: self.table_id.clone(),
            chosen,
            scoring,
            scores,
            predicted: self.predicted.clone(),
            true_features: self.truth,
        })
    }
}

/// Recommends the plot type whose model best recovers the table's
/// statistics.
pub fn select(t: &DataTable, bundle: &ModelBundle, scoring: Scoring, cfg: &RenderConfig) -> Result<Recommendation> {
    select_with(t, bundle, scoring, cfg)
}

pub fn select_with(t: &DataTable, predictor: &dyn Predictor, scoring: Scoring, cfg: &RenderConfig) -> Result<Recommendation> {
    predict_candidates(t, predictor, cfg)?.recommend(predictor.t_bar(), scoring, DEFAULT_EPS)
}
