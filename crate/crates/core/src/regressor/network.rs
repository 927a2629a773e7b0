//! A small feed-forward network of valid-padding convolutions, ReLUs and
//! dense layers, with a hand-written backward pass.
//!
//! Tensors are flat `[channels][height][width]` buffers; a dense layer
//! flattens whatever precedes it. All parameters live in one flat vector,
//! laid out layer by layer as weights then biases:
//!
//! ```text
//! conv  weights [filters][in_channels][kernel][kernel], bias [filters]
//! dense weights [units][inputs],                         bias [units]
//! ```

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::NUM_FEATURES;

/// Numeric type a network can run in.
pub trait Scalar: Float + Send + Sync + std::fmt::Debug + std::iter::Sum + 'static {}
impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    Dense {
        units: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// `[channels, height, width]`
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// 1x64x64 -> conv(8, 5x5, /2) -> conv(16, 3x3, /2) -> conv(32, 3x3, /2)
    /// -> dense(128) -> dense(26), ReLU after every hidden layer.
    pub fn default_regressor() -> Self {
        use LayerSpec::*;
        Architecture {
            input: [1, 64, 64],
            layers: vec![
                Conv2d { filters: 8, kernel: 5, stride: 2 },
                Relu,
                Conv2d { filters: 16, kernel: 3, stride: 2 },
                Relu,
                Conv2d { filters: 32, kernel: 3, stride: 2 },
                Relu,
                Dense { units: 128 },
                Relu,
                Dense { units: NUM_FEATURES },
            ],
        }
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    pub fn output_len(&self) -> Result<usize> {
        Ok(self.resolve()?.last().map_or(self.input_len(), |l| l.output_len()))
    }

    pub fn num_params(&self) -> Result<usize> {
        Ok(self.resolve()?.iter().map(Layer::num_params).sum())
    }

    pub(crate) fn resolve(&self) -> Result<Vec<Layer>> {
        let bad = |m: String| Error::InvalidArchitecture(m);
        let [c0, h0, w0] = self.input;
        if c0 == 0 || h0 == 0 || w0 == 0 {
            return Err(bad(format!("empty input shape {:?}", self.input)));
        }
        let mut shape = (c0, h0, w0);
        let mut offset = 0;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, spec) in self.layers.iter().enumerate() {
            let (c, h, w) = shape;
            let layer = match *spec {
                LayerSpec::Conv2d { filters, kernel, stride } => {
                    if filters == 0 || kernel == 0 || stride == 0 {
                        return Err(bad(format!("layer {i}: zero-sized convolution")));
                    }
                    if kernel > h || kernel > w {
                        return Err(bad(format!("layer {i}: kernel {kernel} exceeds input {h}x{w}")));
                    }
                    let conv = Conv {
                        in_c: c,
                        in_h: h,
                        in_w: w,
                        out_c: filters,
                        k: kernel,
                        stride,
                        out_h: (h - kernel) / stride + 1,
                        out_w: (w - kernel) / stride + 1,
                        offset,
                    };
                    shape = (filters, conv.out_h, conv.out_w);
                    Layer::Conv(conv)
                }
                LayerSpec::Relu => Layer::Relu(c * h * w),
                LayerSpec::Dense { units } => {
                    if units == 0 {
                        return Err(bad(format!("layer {i}: zero-width dense layer")));
                    }
                    let d = Dense {
                        n_in: c * h * w,
                        n_out: units,
                        offset,
                    };
                    shape = (units, 1, 1);
                    Layer::Dense(d)
                }
            };
            offset += layer.num_params();
            out.push(layer);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Conv {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    out_h: usize,
    out_w: usize,
    offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dense {
    n_in: usize,
    n_out: usize,
    offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Layer {
    Conv(Conv),
    Relu(usize),
    Dense(Dense),
}

impl Layer {
    fn num_params(&self) -> usize {
        match self {
            Layer::Conv(c) => c.out_c * c.in_c * c.k * c.k + c.out_c,
            Layer::Relu(_) => 0,
            Layer::Dense(d) => d.n_out * d.n_in + d.n_out,
        }
    }

    fn output_len(&self) -> usize {
        match self {
            Layer::Conv(c) => c.out_c * c.out_h * c.out_w,
            Layer::Relu(n) => *n,
            Layer::Dense(d) => d.n_out,
        }
    }

    /// Fan-in of a parametrized layer.
    fn fan_in(&self) -> Option<usize> {
        match self {
            Layer::Conv(c) => Some(c.in_c * c.k * c.k),
            Layer::Relu(_) => None,
            Layer::Dense(d) => Some(d.n_in),
        }
    }

    fn weight_count(&self) -> usize {
        match self {
            Layer::Conv(c) => c.out_c * c.in_c * c.k * c.k,
            Layer::Relu(_) => 0,
            Layer::Dense(d) => d.n_out * d.n_in,
        }
    }

    fn offset(&self) -> usize {
        match self {
            Layer::Conv(c) => c.offset,
            Layer::Relu(_) => 0,
            Layer::Dense(d) => d.offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Scalar> {
    arch: Architecture,
    layers: Vec<Layer>,
    params: Vec<T>,
}

impl<T: Scalar> Network<T> {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        let layers = arch.resolve()?;
        let n = layers.iter().map(Layer::num_params).sum();
        Ok(Network {
            arch,
            layers,
            params: vec![T::zero(); n],
        })
    }

    /// He initialization: weights drawn from `N(0, 2 / fan_in)`, biases 0.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &net.layers {
            let Some(fan_in) = layer.fan_in() else { continue };
            let std = (2.0 / fan_in as f64).sqrt();
            let start = layer.offset();
            for p in &mut net.params[start..start + layer.weight_count()] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *p = T::from(z * std).expect("finite cast");
            }
        }
        Ok(net)
    }

    pub fn from_params(arch: Architecture, params: Vec<T>) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", net.params.len()),
                got: format!("{}", params.len()),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_len()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(self.input_len(), |l| l.output_len())
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            arch: self.arch.clone(),
            layers: self.layers.clone(),
            params: self
                .params
                .iter()
                .map(|p| U::from(*p).expect("finite cast"))
                .collect(),
        }
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(Error::ShapeMismatch {
                expected: format!("input of {:?} = {} values", self.arch.input, self.input_len()),
                got: format!("{} values", input.len()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = self.layer_forward(layer, &x);
        }
        Ok(x)
    }

    /// Forward pass keeping every intermediate: `acts[0]` is the input and
    /// `acts[i + 1]` the output of layer `i`.
    pub fn forward_cached(&self, input: &[T]) -> Result<Vec<Vec<T>>> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for layer in &self.layers {
            let next = self.layer_forward(layer, acts.last().expect("non-empty"));
            acts.push(next);
        }
        Ok(acts)
    }

    /// Backpropagates `grad_out` (gradient of the loss with respect to the
    /// network output) and adds the parameter gradient into `grad_params`.
    /// Returns the gradient with respect to the input when `need_input` is
    /// set, and an empty vector otherwise.
    pub fn backward(&self, acts: &[Vec<T>], grad_out: &[T], grad_params: &mut [T], need_input: bool) -> Vec<T> {
        assert_eq!(acts.len(), self.layers.len() + 1, "activations from forward_cached");
        assert_eq!(grad_params.len(), self.params.len());
        let mut g = grad_out.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            g = self.layer_backward(layer, &acts[i], &g, grad_params, need_input || i > 0);
        }
        g
    }

    fn layer_forward(&self, layer: &Layer, x: &[T]) -> Vec<T> {
        match *layer {
            Layer::Conv(c) => conv_forward(&c, &self.params, x),
            Layer::Relu(_) => x.iter().map(|&v| v.max(T::zero())).collect(),
            Layer::Dense(d) => {
                let (w, b) = self.params[d.offset..d.offset + d.n_out * (d.n_in + 1)].split_at(d.n_out * d.n_in);
                (0..d.n_out)
                    .map(|j| {
                        let row = &w[j * d.n_in..(j + 1) * d.n_in];
                        b[j] + dot(row, x)
                    })
                    .collect()
            }
        }
    }

    fn layer_backward(&self, layer: &Layer, x: &[T], g: &[T], grad: &mut [T], need_input: bool) -> Vec<T> {
        match *layer {
            Layer::Conv(c) => conv_backward(&c, &self.params, x, g, grad, need_input),
            Layer::Relu(_) => x
                .iter()
                .zip(g)
                .map(|(&v, &gi)| if v > T::zero() { gi } else { T::zero() })
                .collect(),
            Layer::Dense(d) => {
                let n_w = d.n_out * d.n_in;
                let w = &self.params[d.offset..d.offset + n_w];
                let (gw, gb) = grad[d.offset..d.offset + n_w + d.n_out].split_at_mut(n_w);
                let mut gx = vec![T::zero(); if need_input { d.n_in } else { 0 }];
                for j in 0..d.n_out {
                    let gj = g[j];
                    gb[j] = gb[j] + gj;
                    if gj == T::zero() {
                        continue;
                    }
                    let row = &mut gw[j * d.n_in..(j + 1) * d.n_in];
                    for (r, &xi) in row.iter_mut().zip(x) {
                        *r = *r + gj * xi;
                    }
                    if need_input {
                        for (o, &wi) in gx.iter_mut().zip(&w[j * d.n_in..(j + 1) * d.n_in]) {
                            *o = *o + gj * wi;
                        }
                    }
                }
                gx
            }
        }
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn conv_forward<T: Scalar>(c: &Conv, params: &[T], x: &[T]) -> Vec<T> {
    let kk = c.k * c.k;
    let weights = &params[c.offset..c.offset + c.out_c * c.in_c * kk];
    let bias = &params[c.offset + weights.len()..c.offset + weights.len() + c.out_c];
    let plane = c.out_h * c.out_w;
    let mut out = vec![T::zero(); c.out_c * plane];
    for (o, out_plane) in out.chunks_exact_mut(plane).enumerate() {
        out_plane.fill(bias[o]);
        for ch in 0..c.in_c {
            let input = &x[ch * c.in_h * c.in_w..(ch + 1) * c.in_h * c.in_w];
            let kernel = &weights[(o * c.in_c + ch) * kk..(o * c.in_c + ch + 1) * kk];
            for ky in 0..c.k {
                for kx in 0..c.k {
                    let w = kernel[ky * c.k + kx];
                    for oy in 0..c.out_h {
                        let row = &input[(oy * c.stride + ky) * c.in_w + kx..];
                        let dst = &mut out_plane[oy * c.out_w..(oy + 1) * c.out_w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            *d = *d + w * row[ox * c.stride];
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward<T: Scalar>(c: &Conv, params: &[T], x: &[T], g: &[T], grad: &mut [T], need_input: bool) -> Vec<T> {
    let kk = c.k * c.k;
    let n_w = c.out_c * c.in_c * kk;
    let weights = &params[c.offset..c.offset + n_w];
    let (gw, gb) = grad[c.offset..c.offset + n_w + c.out_c].split_at_mut(n_w);
    let plane = c.out_h * c.out_w;
    let in_plane = c.in_h * c.in_w;
    let mut gx = vec![T::zero(); if need_input { c.in_c * in_plane } else { 0 }];
    for o in 0..c.out_c {
        let g_plane = &g[o * plane..(o + 1) * plane];
        gb[o] = gb[o] + g_plane.iter().copied().sum::<T>();
        for ch in 0..c.in_c {
            let input = &x[ch * in_plane..(ch + 1) * in_plane];
            let base = (o * c.in_c + ch) * kk;
            for ky in 0..c.k {
                for kx in 0..c.k {
                    let mut acc = T::zero();
                    for oy in 0..c.out_h {
                        let row = &input[(oy * c.stride + ky) * c.in_w + kx..];
                        let gr = &g_plane[oy * c.out_w..(oy + 1) * c.out_w];
                        for (ox, &gv) in gr.iter().enumerate() {
                            acc = acc + gv * row[ox * c.stride];
                        }
                    }
                    gw[base + ky * c.k + kx] = gw[base + ky * c.k + kx] + acc;
                    if need_input {
                        let w = weights[base + ky * c.k + kx];
                        let dst = &mut gx[ch * in_plane..(ch + 1) * in_plane];
                        for oy in 0..c.out_h {
                            let gr = &g_plane[oy * c.out_w..(oy + 1) * c.out_w];
                            let start = (oy * c.stride + ky) * c.in_w + kx;
                            for (ox, &gv) in gr.iter().enumerate() {
                                let d = &mut dst[start + ox * c.stride];
                                *d = *d + w * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape_and_size() {
        let arch = Architecture::default_regressor();
        assert_eq!(arch.output_len().unwrap(), NUM_FEATURES);
        // conv 64 -> 30 -> 14 -> 6; 32 * 6 * 6 = 1152 flattened
        let expected = (8 * 25 + 8) + (16 * 8 * 9 + 16) + (32 * 16 * 9 + 32) + (128 * 1152 + 128) + (26 * 128 + 26);
        assert_eq!(arch.num_params().unwrap(), expected);
    }

    #[test]
    fn rejects_impossible_architectures() {
        let arch = Architecture {
            input: [1, 4, 4],
            layers: vec![LayerSpec::Conv2d { filters: 1, kernel: 5, stride: 1 }],
        };
        assert!(matches!(arch.resolve(), Err(Error::InvalidArchitecture(_))));
        let arch = Architecture { input: [1, 0, 4], layers: vec![] };
        assert!(arch.resolve().is_err());
    }

    #[test]
    fn init_is_seeded() {
        let arch = Architecture::default_regressor();
        let a = Network::<f32>::init(arch.clone(), 7).unwrap();
        let b = Network::<f32>::init(arch.clone(), 7).unwrap();
        let c = Network::<f32>::init(arch, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
        assert_eq!(a.output_len(), NUM_FEATURES);
    }

    #[test]
    fn zero_network_maps_zero_to_zero() {
        let net = Network::<f32>::zeros(Architecture::default_regressor()).unwrap();
        let out = net.forward(&vec![0.0; 64 * 64]).unwrap();
        assert_eq!(out, vec![0.0; NUM_FEATURES]);
    }

    #[test]
    fn toy_convolution_by_hand() {
        // 3x3 input, one 2x2 filter, stride 1:
        // in = [1 2 3; 4 5 6; 7 8 9], w = [1 0; -1 2], b = 0.5
        // out[0][0] = 1 - 4 + 2*5 + .5 = 7.5, out[0][1] = 2 - 5 + 12 + .5 = 9.5
        // out[1][0] = 4 - 7 + 16 + .5 = 13.5, out[1][1] = 5 - 8 + 18 + .5 = 15.5
        let arch = Architecture {
            input: [1, 3, 3],
            layers: vec![LayerSpec::Conv2d { filters: 1, kernel: 2, stride: 1 }],
        };
        let net = Network::<f64>::from_params(arch, vec![1.0, 0.0, -1.0, 2.0, 0.5]).unwrap();
        let out = net.forward(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]).unwrap();
        assert_eq!(out, vec![7.5, 9.5, 13.5, 15.5]);
    }

    #[test]
    fn strided_multichannel_convolution_by_hand() {
        // two 3x3 input channels, one 2x2 filter, stride 2 -> single output
        let arch = Architecture {
            input: [2, 3, 3],
            layers: vec![LayerSpec::Conv2d { filters: 1, kernel: 2, stride: 2 }],
        };
        let params = vec![1.0, 1.0, 1.0, 1.0, 2.0, 0.0, 0.0, 2.0, 0.0];
        let net = Network::<f64>::from_params(arch, params).unwrap();
        let mut input: Vec<f64> = (1..=9).map(f64::from).collect();
        input.extend((1..=9).map(|v| 10.0 * v as f64));
        // ch0 window 1+2+4+5 = 12; ch1 window 2*10 + 2*50 = 120
        assert_eq!(net.forward(&input).unwrap(), vec![132.0]);
    }

    #[test]
    fn dense_and_relu_by_hand() {
        let arch = Architecture {
            input: [1, 1, 2],
            layers: vec![LayerSpec::Dense { units: 2 }, LayerSpec::Relu],
        };
        // y0 = 1*x0 + 2*x1 + 0.5, y1 = -x0 - x1 + 0
        let net = Network::<f64>::from_params(arch, vec![1.0, 2.0, -1.0, -1.0, 0.5, 0.0]).unwrap();
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), vec![3.5, 0.0]);
    }

    #[test]
    fn wrong_input_length() {
        let net = Network::<f32>::zeros(Architecture::default_regressor()).unwrap();
        assert!(matches!(net.forward(&[0.0; 10]), Err(Error::ShapeMismatch { .. })));
    }
}
