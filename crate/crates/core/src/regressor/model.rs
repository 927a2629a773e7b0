use serde::{Deserialize, Serialize};

use super::network::{Architecture, Network};
use crate::error::{Error, Result};
use crate::render::PlotImage;
use crate::stats::{FeatureVector, NUM_FEATURES};

/// Single-precision network mapping a plot image to 26 features.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvRegressor {
    net: Network<f32>,
}

impl ConvRegressor {
    pub fn new(net: Network<f32>) -> Result<Self> {
        if net.output_len() != NUM_FEATURES {
            return Err(Error::InvalidArchitecture(format!(
                "regressor must output {NUM_FEATURES} features, architecture gives {}",
                net.output_len()
            )));
        }
        if net.architecture().input[0] != 1 {
            return Err(Error::InvalidArchitecture("regressor input must be single-channel".into()));
        }
        Ok(ConvRegressor { net })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<f32> {
        &mut self.net
    }

    pub fn architecture(&self) -> &Architecture {
        self.net.architecture()
    }

    pub(crate) fn check_image(&self, img: &PlotImage) -> Result<()> {
        let [_, h, w] = self.architecture().input;
        if img.width != w || img.height != h || img.pixels.len() != w * h {
            return Err(Error::ShapeMismatch {
                expected: format!("{w}x{h} image"),
                got: format!("{}x{} image", img.width, img.height),
            });
        }
        Ok(())
    }

    pub fn forward(&self, img: &PlotImage) -> Result<FeatureVector> {
        self.check_image(img)?;
        let out = self.net.forward(&img.pixels)?;
        let values: Vec<f64> = out.iter().map(|&v| v as f64).collect();
        FeatureVector::from_slice(&values)
    }
}

/// Seeded He-initialized regressor with the default architecture.
pub fn init_model(seed: u64) -> ConvRegressor {
    init_model_with(Architecture::default_regressor(), seed).expect("default architecture is valid")
}

pub fn init_model_with(arch: Architecture, seed: u64) -> Result<ConvRegressor> {
    ConvRegressor::new(Network::init(arch, seed)?)
}

pub fn forward(model: &ConvRegressor, img: &PlotImage) -> Result<FeatureVector> {
    model.forward(img)
}

/// Unweighted mean of member predictions.
pub fn predict_ensemble(models: &[&ConvRegressor], img: &PlotImage) -> Result<FeatureVector> {
    if models.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let preds = models
        .iter()
        .map(|m| m.forward(img))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureVector::mean(&preds).expect("non-empty"))
}

/// Flat parameter dump used by the bundle format. Values are widened to
/// `f64`, which is exact and survives a JSON round trip bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub(crate) struct ParamDump(pub Vec<f64>);

impl From<&ConvRegressor> for ParamDump {
    fn from(m: &ConvRegressor) -> Self {
        ParamDump(m.net.params().iter().map(|&p| p as f64).collect())
    }
}

impl ParamDump {
    pub fn into_model(self, arch: Architecture) -> Result<ConvRegressor> {
        let params = self
            .0
            .into_iter()
            .map(|p| {
                let q = p as f32;
                if q as f64 == p {
                    Ok(q)
                } else {
                    Err(Error::CorruptBundle(format!("parameter {p} is not single precision")))
                }
            })
            .collect::<Result<Vec<f32>>>()?;
        ConvRegressor::new(Network::from_params(arch, params)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::PlotType;

    fn image(fill: f32) -> PlotImage {
        let mut img = PlotImage::blank(64, 64, PlotType::Scatter, "t");
        img.pixels.iter_mut().enumerate().for_each(|(i, p)| *p = fill * ((i % 7) as f32 / 7.0));
        img
    }

    #[test]
    fn output_is_always_26_wide() {
        for seed in [0, 7, 99] {
            let m = init_model(seed);
            assert_eq!(m.network().output_len(), NUM_FEATURES);
            assert!(m.forward(&image(1.0)).unwrap().is_finite());
        }
        let bad = Architecture { input: [1, 8, 8], layers: vec![super::super::network::LayerSpec::Dense { units: 3 }] };
        assert!(init_model_with(bad, 0).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let m = init_model(3);
        assert_eq!(m.forward(&image(0.8)).unwrap(), m.forward(&image(0.8)).unwrap());
    }

    #[test]
    fn image_size_is_checked() {
        let m = init_model(3);
        let img = PlotImage::blank(32, 32, PlotType::Line, "t");
        assert!(matches!(m.forward(&img), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn ensemble_examples() {
        let a = init_model(1);
        let img = image(0.5);
        assert_eq!(predict_ensemble(&[&a], &img).unwrap(), a.forward(&img).unwrap());
        assert!(matches!(predict_ensemble(&[], &img), Err(Error::EmptyEnsemble)));

        // negate the output layer to get a member predicting -v
        let mut b = a.clone();
        let n = b.network().num_params();
        let tail = 26 * 128 + 26;
        for p in &mut b.network_mut().params_mut()[n - tail..] {
            *p = -*p;
        }
        let avg = predict_ensemble(&[&a, &b], &img).unwrap();
        assert_eq!(avg, FeatureVector::zeros());
    }
}
