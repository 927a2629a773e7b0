//! Seeded mini-batch SGD with momentum, one model per plot type.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::ModelBundle;
use super::loss::{loss_weights, weighted_smooth_l1};
use super::model::ConvRegressor;
use super::network::{Architecture, Network};
use crate::error::{Error, Result};
use crate::render::PlotImage;
use crate::stats::{FeatureVector, NUM_FEATURES};
use crate::table::PlotType;

/// Samples per deterministic gradient partial sum. Partial sums are
/// computed in parallel and added in order, so results do not depend on
/// the thread count.
const CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub smooth_l1_beta: f64,
    pub weight_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            smooth_l1_beta: 1.0,
            // Normalized tables have several features whose mean is exactly
            // 0; a clamp of 1e-3 weights their noise 1000x and stalls SGD.
            weight_epsilon: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTrainConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.smooth_l1_beta > 0.0) {
            return bad("smooth_l1_beta must be positive");
        }
        if !(self.weight_epsilon > 0.0) {
            return bad("weight_epsilon must be positive");
        }
        Ok(())
    }
}

pub type Pair = (PlotImage, FeatureVector);

#[derive(Debug, Clone, Default)]
pub struct TypeData {
    pub train: Vec<Pair>,
    pub validation: Vec<Pair>,
}

pub type TrainingData = BTreeMap<PlotType, TypeData>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

/// Loss trajectory of one plot type's model. Losses are means of the
/// weighted smooth-L1 objective over the respective set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeHistory {
    pub init_seed: u64,
    pub train_size: usize,
    pub validation_size: usize,
    pub initial_train_loss: f64,
    pub initial_validation_loss: Option<f64>,
    pub epochs: Vec<EpochLoss>,
}

impl TypeHistory {
    pub fn final_train_loss(&self) -> f64 {
        self.epochs.last().map_or(self.initial_train_loss, |e| e.train_loss)
    }

    pub fn final_validation_loss(&self) -> Option<f64> {
        match self.epochs.last() {
            Some(e) => e.validation_loss,
            None => self.initial_validation_loss,
        }
    }
}

/// Initialization seed for one plot type's model.
pub fn type_seed(seed: u64, plot_type: PlotType) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(plot_type.index() as u64 + 1)
}

/// Mean true feature vector over the distinct training tables of all
/// plot types.
pub fn training_means(data: &TrainingData) -> Option<FeatureVector> {
    let mut by_table: BTreeMap<&str, &FeatureVector> = BTreeMap::new();
    for d in data.values() {
        for (img, y) in &d.train {
            by_table.entry(img.table_id.as_str()).or_insert(y);
        }
    }
    FeatureVector::mean(by_table.into_values())
}

/// Trains one regressor per plot type with the default architecture.
pub fn train(data: &TrainingData, cfg: &TrainConfig) -> Result<ModelBundle> {
    train_with(data, &Architecture::default_regressor(), cfg)
}

pub fn train_with(data: &TrainingData, arch: &Architecture, cfg: &TrainConfig) -> Result<ModelBundle> {
    cfg.validate()?;
    for p in PlotType::ALL {
        if data.get(&p).is_none_or(|d| d.train.is_empty()) {
            return Err(Error::EmptyTrainingSet(p));
        }
    }
    let t_bar = training_means(data).expect("non-empty training data");
    let mut bundle = ModelBundle::empty(arch.clone(), t_bar, cfg.clone());
    for p in PlotType::ALL {
        let (model, history) = train_model(arch, p, &data[&p], &t_bar, cfg)?;
        bundle.insert(p, model, history);
    }
    Ok(bundle)
}

/// Trains a single plot type's model from scratch.
pub fn train_model(
    arch: &Architecture,
    plot_type: PlotType,
    data: &TypeData,
    t_bar: &FeatureVector,
    cfg: &TrainConfig,
) -> Result<(ConvRegressor, TypeHistory)> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::EmptyTrainingSet(plot_type));
    }
    let seed = type_seed(cfg.seed, plot_type);
    let mut model = ConvRegressor::new(Network::init(arch.clone(), seed)?)?;
    for (img, _) in data.train.iter().chain(&data.validation) {
        model.check_image(img)?;
    }
    let weights = loss_weights(t_bar, cfg.weight_epsilon);
    let beta = cfg.smooth_l1_beta;

    let mut history = TypeHistory {
        init_seed: seed,
        train_size: data.train.len(),
        validation_size: data.validation.len(),
        initial_train_loss: mean_loss(model.network(), &data.train, &weights, beta),
        initial_validation_loss: (!data.validation.is_empty())
            .then(|| mean_loss(model.network(), &data.validation, &weights, beta)),
        epochs: Vec::with_capacity(cfg.epochs),
    };

    let n_params = model.network().num_params();
    let mut velocity = vec![0.0f32; n_params];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let lr = cfg.learning_rate as f32;
    let mu = cfg.momentum as f32;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = batch_gradient(model.network(), &data.train, batch, &weights, beta);
            epoch_loss += loss;
            let scale = 1.0 / batch.len() as f32;
            let params = model.network_mut().params_mut();
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = mu * *v + g * scale;
                *p -= lr * *v;
            }
        }
        let train_loss = epoch_loss / data.train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::InvalidTrainConfig(format!(
                "{plot_type} training diverged in epoch {epoch}; lower the learning rate"
            )));
        }
        history.epochs.push(EpochLoss {
            epoch,
            train_loss,
            validation_loss: (!data.validation.is_empty())
                .then(|| mean_loss(model.network(), &data.validation, &weights, beta)),
        });
    }
    Ok((model, history))
}

fn sample_loss_grad(
    net: &Network<f32>,
    (img, target): &Pair,
    weights: &[f64; NUM_FEATURES],
    beta: f64,
    grad: &mut [f32],
) -> f64 {
    let acts = net.forward_cached(&img.pixels).expect("image size checked");
    let out: Vec<f64> = acts.last().expect("output").iter().map(|&v| v as f64).collect();
    let (loss, g) = weighted_smooth_l1(&out, &target.0, weights, beta);
    let g: Vec<f32> = g.iter().map(|&v| v as f32).collect();
    net.backward(&acts, &g, grad, false);
    loss
}

/// Summed loss and summed parameter gradient over `batch`.
fn batch_gradient(
    net: &Network<f32>,
    pairs: &[Pair],
    batch: &[usize],
    weights: &[f64; NUM_FEATURES],
    beta: f64,
) -> (f64, Vec<f32>) {
    let n = net.num_params();
    let partials: Vec<(f64, Vec<f32>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0f32; n];
            let loss = chunk
                .iter()
                .map(|&i| sample_loss_grad(net, &pairs[i], weights, beta, &mut grad))
                .sum();
            (loss, grad)
        })
        .collect();
    let mut iter = partials.into_iter();
    let (mut loss, mut grad) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (loss, grad)
}

/// Mean objective of `net` over `pairs`.
pub fn mean_loss(net: &Network<f32>, pairs: &[Pair], weights: &[f64; NUM_FEATURES], beta: f64) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let losses: Vec<f64> = pairs
        .par_iter()
        .map(|(img, y)| {
            let out: Vec<f64> = net
                .forward(&img.pixels)
                .expect("image size checked")
                .iter()
                .map(|&v| v as f64)
                .collect();
            weighted_smooth_l1(&out, &y.0, weights, beta).0
        })
        .collect();
    losses.iter().sum::<f64>() / pairs.len() as f64
}
