//! Finite-difference verification of the backward pass, run in double
//! precision.

use super::loss::weighted_smooth_l1;
use super::model::ConvRegressor;
use super::network::{LayerSpec, Network};
use crate::error::{Error, Result};
use crate::render::PlotImage;
use crate::stats::FeatureVector;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Entries whose absolute difference is at most this agree outright;
/// finite differences cannot resolve anything finer in double precision.
pub const ABSOLUTE_AGREEMENT: f64 = 1e-12;

/// Loss used by the checks: smooth L1 with per-output weights.
#[derive(Debug, Clone)]
pub struct CheckLoss {
    pub weights: Vec<f64>,
    pub beta: f64,
}

impl CheckLoss {
    pub fn unit(len: usize) -> Self {
        CheckLoss {
            weights: vec![1.0; len],
            beta: 1.0,
        }
    }

    fn eval(&self, out: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
        weighted_smooth_l1(out, target, &self.weights, self.beta)
    }
}

fn check_len(net: &Network<f64>, target: &[f64], loss: &CheckLoss) -> Result<()> {
    if target.len() != net.output_len() || loss.weights.len() != net.output_len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} outputs", net.output_len()),
            got: format!("{} targets, {} weights", target.len(), loss.weights.len()),
        });
    }
    Ok(())
}

/// Loss value and backpropagated parameter gradient.
pub fn analytic_gradient(net: &Network<f64>, input: &[f64], target: &[f64], loss: &CheckLoss) -> Result<(f64, Vec<f64>)> {
    check_len(net, target, loss)?;
    let acts = net.forward_cached(input)?;
    let (l, g) = loss.eval(acts.last().expect("output"), target);
    let mut grad = vec![0.0; net.num_params()];
    net.backward(&acts, &g, &mut grad, false);
    Ok((l, grad))
}

/// Central finite differences over every parameter.
pub fn numeric_gradient(net: &Network<f64>, input: &[f64], target: &[f64], loss: &CheckLoss, step: f64) -> Result<Vec<f64>> {
    check_len(net, target, loss)?;
    let mut probe = net.clone();
    let mut grad = Vec::with_capacity(net.num_params());
    for i in 0..net.num_params() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + step;
        let hi = loss.eval(&probe.forward(input)?, target).0;
        probe.params_mut()[i] = orig - step;
        let lo = loss.eval(&probe.forward(input)?, target).0;
        probe.params_mut()[i] = orig;
        grad.push((hi - lo) / (2.0 * step));
    }
    Ok(grad)
}

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|)`, skipping entries that agree to
/// within [`ABSOLUTE_AGREEMENT`].
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let diff = (a - n).abs();
            if diff <= ABSOLUTE_AGREEMENT {
                0.0
            } else {
                diff / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}

/// Distance of the point from the nearest kink: the smallest `|z|` over
/// ReLU inputs and the smallest `||d| - beta|` over loss residuals.
/// Central differences straddling a kink average two one-sided slopes and
/// say nothing about the backward pass, so callers should keep this well
/// above [`FD_STEP`].
pub fn kink_margin(net: &Network<f64>, input: &[f64], target: &[f64], loss: &CheckLoss) -> Result<f64> {
    check_len(net, target, loss)?;
    let acts = net.forward_cached(input)?;
    let relu = net
        .architecture()
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, LayerSpec::Relu))
        .flat_map(|(i, _)| acts[i].iter().map(|z| z.abs()));
    let out = acts.last().expect("output");
    let residual = out.iter().zip(target).map(|(o, t)| ((o - t).abs() - loss.beta).abs());
    Ok(relu.chain(residual).fold(f64::INFINITY, f64::min))
}

/// Max relative discrepancy between analytic and finite-difference
/// parameter gradients under unit-weight smooth L1.
pub fn grad_check(net: &Network<f64>, input: &[f64], target: &[f64]) -> Result<f64> {
    grad_check_with(net, input, target, &CheckLoss::unit(target.len()))
}

pub fn grad_check_with(net: &Network<f64>, input: &[f64], target: &[f64], loss: &CheckLoss) -> Result<f64> {
    let (_, analytic) = analytic_gradient(net, input, target, loss)?;
    let numeric = numeric_gradient(net, input, target, loss, FD_STEP)?;
    Ok(max_relative_error(&analytic, &numeric))
}

/// [`grad_check`] on a regressor, promoted to double precision.
pub fn grad_check_model(model: &ConvRegressor, img: &PlotImage, y: &FeatureVector) -> Result<f64> {
    model.check_image(img)?;
    let net = model.network().cast::<f64>();
    let input: Vec<f64> = img.pixels.iter().map(|&p| p as f64).collect();
    grad_check(&net, &input, &y.0)
}
