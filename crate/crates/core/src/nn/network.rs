//! Forward and backward passes.
//!
//! Samples are flat `channel, row, column` vectors. Convolutions are lowered
//! to a matrix product over an unfolded ("im2col") copy of the input, which
//! is kept in the [`Trace`] for the backward pass.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{LayerSpec, NetworkConfig, Shape};
use crate::error::{Error, Result};

/// Floating-point type the engine runs in. Training uses `f32`, gradient
/// checking `f64`.
pub trait Scalar: Float + Sum + Debug + Default + Send + Sync + 'static {
    fn cast_from(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn cast_from(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn cast_from(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major matrix; used for logits (`batch x classes`) and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    /// Index of the largest value in each row (first one on ties).
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|r| {
                let row = self.row(r);
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Weights and biases of every layer, in layer order. Parameter-free layers
/// hold empty vectors so indices line up with [`NetworkConfig::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Scalar> Parameters<T> {
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        let shapes = config.shapes()?;
        Ok(Self {
            layers: config
                .layers
                .iter()
                .zip(&shapes)
                .map(|(l, &s)| {
                    let (nw, nb) = l.param_counts(s);
                    LayerParams {
                        weights: vec![T::zero(); nw],
                        bias: vec![T::zero(); nb],
                    }
                })
                .collect(),
        })
    }

    /// He initialization: weights ~ N(0, 2 / fan_in), biases zero, seeded by
    /// `config.seed`.
    pub fn init(config: &NetworkConfig) -> Result<Self> {
        let shapes = config.shapes()?;
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for ((layer, p), &s) in config.layers.iter().zip(&mut params.layers).zip(&shapes) {
            if !layer.has_params() {
                continue;
            }
            let std = (2.0 / layer.fan_in(s) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            for w in &mut p.weights {
                *w = T::cast_from(normal.sample(&mut rng));
            }
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: vec![T::zero(); l.weights.len()],
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::cast_from(x.as_f64())).collect();
        Parameters {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: conv(&l.weights),
                    bias: conv(&l.bias),
                })
                .collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.len() == b.weights.len() && a.bias.len() == b.bias.len())
    }

    fn check_against(&self, config: &NetworkConfig) -> Result<()> {
        if !self.same_shape(&Parameters::zeros(config)?) {
            return Err(Error::ShapeMismatch("parameters do not match network config".into()));
        }
        Ok(())
    }
}

/// Whether dropout is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
enum LayerCache<T> {
    Conv { cols: Vec<T> },
    Fc { input: Vec<T> },
    Relu { mask: Vec<bool> },
    MaxPool { argmax: Vec<usize> },
    Dropout { scale: Option<Vec<T>> },
}

/// Per-sample state recorded by a forward pass and consumed by
/// [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Trace<T> {
    samples: Vec<Vec<LayerCache<T>>>,
}

impl<T> Trace<T> {
    pub fn batch_size(&self) -> usize {
        self.samples.len()
    }

    /// ReLU on/off masks and max-pool winners, concatenated. Two forward
    /// passes with equal patterns run through the same linear pieces.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for sample in &self.samples {
            for cache in sample {
                match cache {
                    LayerCache::Relu { mask } => out.extend(mask.iter().map(|&m| m as usize)),
                    LayerCache::MaxPool { argmax } => out.extend_from_slice(argmax),
                    _ => {}
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    config: NetworkConfig,
    shapes: Vec<Shape>,
    params: Parameters<T>,
}

impl<T: Scalar> Network<T> {
    pub fn new(config: NetworkConfig, params: Parameters<T>) -> Result<Self> {
        let shapes = config.shapes()?;
        params.check_against(&config)?;
        Ok(Self { config, shapes, params })
    }

    /// A network with freshly initialized parameters.
    pub fn initialized(config: NetworkConfig) -> Result<Self> {
        let params = Parameters::init(&config)?;
        Self::new(config, params)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &Parameters<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters<T> {
        &mut self.params
    }

    pub fn into_params(self) -> Parameters<T> {
        self.params
    }

    /// Input shape of layer `i` (or the output shape for `i == layers.len()`).
    pub fn shape(&self, i: usize) -> Shape {
        self.shapes[i]
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            shapes: self.shapes.clone(),
            params: self.params.cast(),
        }
    }

    /// Eval-mode forward pass without a trace.
    pub fn predict(&self, inputs: &[Vec<T>]) -> Result<Matrix<T>> {
        self.run::<ChaCha8Rng>(inputs, None).map(|(logits, _)| logits)
    }

    /// Forward pass recording a [`Trace`]. `rng` drives dropout masks in
    /// train mode and is untouched in eval mode.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        inputs: &[Vec<T>],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix<T>, Trace<T>)> {
        match mode {
            Mode::Train => self.run(inputs, Some(rng)),
            Mode::Eval => self.run::<R>(inputs, None),
        }
    }

    /// Eval-mode forward pass recording a [`Trace`].
    pub fn forward_eval(&self, inputs: &[Vec<T>]) -> Result<(Matrix<T>, Trace<T>)> {
        self.run::<ChaCha8Rng>(inputs, None)
    }

    fn run<R: Rng + ?Sized>(
        &self,
        inputs: &[Vec<T>],
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(Matrix<T>, Trace<T>)> {
        let m = self.config.num_classes;
        let mut logits = Matrix::zeros(inputs.len(), m);
        let mut samples = Vec::with_capacity(inputs.len());
        for (r, input) in inputs.iter().enumerate() {
            if input.len() != self.shapes[0].len() {
                return Err(Error::ShapeMismatch(format!(
                    "sample {r} has {} values, network expects {} ({:?})",
                    input.len(),
                    self.shapes[0].len(),
                    self.shapes[0]
                )));
            }
            let (out, caches) = self.forward_sample(input, dropout_rng.as_deref_mut());
            if let Some(v) = out.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("logit {v:?} for sample {r}")));
            }
            logits.row_mut(r).copy_from_slice(&out);
            samples.push(caches);
        }
        Ok((logits, Trace { samples }))
    }

    fn forward_sample<R: Rng + ?Sized>(
        &self,
        input: &[T],
        mut dropout_rng: Option<&mut R>,
    ) -> (Vec<T>, Vec<LayerCache<T>>) {
        let mut x = input.to_vec();
        let mut caches = Vec::with_capacity(self.config.layers.len());
        for (i, layer) in self.config.layers.iter().enumerate() {
            let (ins, outs) = (self.shapes[i], self.shapes[i + 1]);
            let p = &self.params.layers[i];
            let (y, cache) = match *layer {
                LayerSpec::Conv {
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    let cols = im2col(&x, ins, outs, kernel, stride, padding);
                    let y = conv_forward(&cols, &p.weights, &p.bias, outs);
                    (y, LayerCache::Conv { cols })
                }
                LayerSpec::Fc { .. } => {
                    let y = fc_forward(&x, &p.weights, &p.bias);
                    (y, LayerCache::Fc { input: x })
                }
                LayerSpec::Relu => {
                    let mask: Vec<bool> = x.iter().map(|&v| v > T::zero()).collect();
                    let y = x
                        .iter()
                        .zip(&mask)
                        .map(|(&v, &m)| if m { v } else { T::zero() })
                        .collect();
                    (y, LayerCache::Relu { mask })
                }
                LayerSpec::MaxPool { window, stride } => {
                    let (y, argmax) = maxpool_forward(&x, ins, outs, window, stride);
                    (y, LayerCache::MaxPool { argmax })
                }
                LayerSpec::Dropout { rate } => match dropout_rng.as_deref_mut() {
                    Some(rng) if rate > 0.0 => {
                        let keep = T::cast_from(1.0 / (1.0 - rate));
                        let scale: Vec<T> = (0..x.len())
                            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
                            .collect();
                        let y = x.iter().zip(&scale).map(|(&v, &s)| v * s).collect();
                        (y, LayerCache::Dropout { scale: Some(scale) })
                    }
                    _ => (x, LayerCache::Dropout { scale: None }),
                },
            };
            caches.push(cache);
            x = y;
        }
        (x, caches)
    }

    /// Gradients of the loss with respect to every parameter, given the
    /// gradient with respect to the logits of the traced forward pass.
    /// Contributions of the samples are summed in batch order.
    pub fn backward(&self, trace: &Trace<T>, dlogits: &Matrix<T>) -> Result<Parameters<T>> {
        if dlogits.rows() != trace.batch_size() || dlogits.cols() != self.config.num_classes {
            return Err(Error::ShapeMismatch(format!(
                "upstream gradient is {}x{}, trace holds {} samples of {} logits",
                dlogits.rows(),
                dlogits.cols(),
                trace.batch_size(),
                self.config.num_classes
            )));
        }
        let mut grads = self.params.zeros_like();
        for (r, caches) in trace.samples.iter().enumerate() {
            if caches.len() != self.config.layers.len() {
                return Err(Error::ShapeMismatch("trace does not belong to this network".into()));
            }
            let mut d = dlogits.row(r).to_vec();
            for i in (0..self.config.layers.len()).rev() {
                let (ins, outs) = (self.shapes[i], self.shapes[i + 1]);
                let p = &self.params.layers[i];
                let g = &mut grads.layers[i];
                d = match (&self.config.layers[i], &caches[i]) {
                    (
                        &LayerSpec::Conv {
                            kernel,
                            stride,
                            padding,
                            ..
                        },
                        LayerCache::Conv { cols },
                    ) => {
                        let dcols = conv_backward(cols, &p.weights, &d, outs, g);
                        if i == 0 {
                            break;
                        }
                        col2im(&dcols, ins, outs, kernel, stride, padding)
                    }
                    (LayerSpec::Fc { .. }, LayerCache::Fc { input }) => fc_backward(input, &p.weights, &d, g, i > 0),
                    (LayerSpec::Relu, LayerCache::Relu { mask }) => d
                        .iter()
                        .zip(mask)
                        .map(|(&v, &m)| if m { v } else { T::zero() })
                        .collect(),
                    (LayerSpec::MaxPool { .. }, LayerCache::MaxPool { argmax }) => {
                        let mut din = vec![T::zero(); ins.len()];
                        for (&src, &v) in argmax.iter().zip(&d) {
                            din[src] = din[src] + v;
                        }
                        din
                    }
                    (LayerSpec::Dropout { .. }, LayerCache::Dropout { scale }) => match scale {
                        Some(s) => d.iter().zip(s).map(|(&v, &k)| v * k).collect(),
                        None => d,
                    },
                    _ => return Err(Error::ShapeMismatch("trace does not belong to this network".into())),
                };
            }
        }
        Ok(grads)
    }

    /// Outputs of the first layer for one sample, one `height x width` map
    /// per output channel.
    pub fn first_layer_output(&self, input: &[T]) -> Result<(Shape, Vec<T>)> {
        let layer = self
            .config
            .layers
            .first()
            .ok_or_else(|| Error::InvalidConfig("network has no layers".into()))?;
        if input.len() != self.shapes[0].len() {
            return Err(Error::ShapeMismatch(format!(
                "sample has {} values, network expects {}",
                input.len(),
                self.shapes[0].len()
            )));
        }
        match *layer {
            LayerSpec::Conv {
                kernel,
                stride,
                padding,
                ..
            } => {
                let (ins, outs) = (self.shapes[0], self.shapes[1]);
                let cols = im2col(input, ins, outs, kernel, stride, padding);
                let p = &self.params.layers[0];
                Ok((outs, conv_forward(&cols, &p.weights, &p.bias, outs)))
            }
            _ => Err(Error::InvalidConfig(format!(
                "first layer is {}, not conv",
                layer.name()
            ))),
        }
    }
}

/// Unfolds receptive fields into a `(C*K*K) x (OH*OW)` row-major matrix.
/// Padding positions are zero.
fn im2col<T: Scalar>(x: &[T], ins: Shape, outs: Shape, k: usize, stride: usize, pad: usize) -> Vec<T> {
    let npos = outs.height * outs.width;
    let mut cols = vec![T::zero(); ins.channels * k * k * npos];
    for c in 0..ins.channels {
        let plane = &x[c * ins.height * ins.width..(c + 1) * ins.height * ins.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * npos;
                for oy in 0..outs.height {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= ins.height as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * ins.width..(iy as usize + 1) * ins.width];
                    let dst = &mut cols[row + oy * outs.width..row + (oy + 1) * outs.width];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < ins.width as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
fn col2im<T: Scalar>(dcols: &[T], ins: Shape, outs: Shape, k: usize, stride: usize, pad: usize) -> Vec<T> {
    let npos = outs.height * outs.width;
    let mut dx = vec![T::zero(); ins.len()];
    for c in 0..ins.channels {
        let base = c * ins.height * ins.width;
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * npos;
                for oy in 0..outs.height {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= ins.height as isize {
                        continue;
                    }
                    for ox in 0..outs.width {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < ins.width as isize {
                            let at = base + iy as usize * ins.width + ix as usize;
                            dx[at] = dx[at] + dcols[row + oy * outs.width + ox];
                        }
                    }
                }
            }
        }
    }
    dx
}

fn conv_forward<T: Scalar>(cols: &[T], w: &[T], b: &[T], outs: Shape) -> Vec<T> {
    let npos = outs.height * outs.width;
    let ckk = w.len() / outs.channels;
    let mut y = vec![T::zero(); outs.len()];
    for f in 0..outs.channels {
        let out = &mut y[f * npos..(f + 1) * npos];
        out.fill(b[f]);
        for q in 0..ckk {
            let wv = w[f * ckk + q];
            if wv == T::zero() {
                continue;
            }
            for (o, &c) in out.iter_mut().zip(&cols[q * npos..(q + 1) * npos]) {
                *o = *o + wv * c;
            }
        }
    }
    y
}

/// Accumulates weight/bias gradients and returns the column gradient.
fn conv_backward<T: Scalar>(cols: &[T], w: &[T], dout: &[T], outs: Shape, g: &mut LayerParams<T>) -> Vec<T> {
    let npos = outs.height * outs.width;
    let ckk = w.len() / outs.channels;
    let mut dcols = vec![T::zero(); ckk * npos];
    for f in 0..outs.channels {
        let df = &dout[f * npos..(f + 1) * npos];
        g.bias[f] = g.bias[f] + df.iter().copied().sum::<T>();
        for q in 0..ckk {
            let col = &cols[q * npos..(q + 1) * npos];
            let mut acc = T::zero();
            for (&a, &b) in df.iter().zip(col) {
                acc = acc + a * b;
            }
            g.weights[f * ckk + q] = g.weights[f * ckk + q] + acc;
            let wv = w[f * ckk + q];
            for (dc, &d) in dcols[q * npos..(q + 1) * npos].iter_mut().zip(df) {
                *dc = *dc + wv * d;
            }
        }
    }
    dcols
}

fn fc_forward<T: Scalar>(x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let n = x.len();
    b.iter()
        .enumerate()
        .map(|(u, &bias)| {
            let row = &w[u * n..(u + 1) * n];
            row.iter().zip(x).fold(bias, |acc, (&wv, &xv)| acc + wv * xv)
        })
        .collect()
}

fn fc_backward<T: Scalar>(x: &[T], w: &[T], dout: &[T], g: &mut LayerParams<T>, need_input_grad: bool) -> Vec<T> {
    let n = x.len();
    let mut dx = vec![T::zero(); if need_input_grad { n } else { 0 }];
    for (u, &d) in dout.iter().enumerate() {
        g.bias[u] = g.bias[u] + d;
        if d == T::zero() {
            continue;
        }
        let gw = &mut g.weights[u * n..(u + 1) * n];
        for (gv, &xv) in gw.iter_mut().zip(x) {
            *gv = *gv + d * xv;
        }
        if need_input_grad {
            for (dv, &wv) in dx.iter_mut().zip(&w[u * n..(u + 1) * n]) {
                *dv = *dv + d * wv;
            }
        }
    }
    dx
}

fn maxpool_forward<T: Scalar>(x: &[T], ins: Shape, outs: Shape, window: usize, stride: usize) -> (Vec<T>, Vec<usize>) {
    let mut y = Vec::with_capacity(outs.len());
    let mut argmax = Vec::with_capacity(outs.len());
    for c in 0..ins.channels {
        let base = c * ins.height * ins.width;
        for oy in 0..outs.height {
            for ox in 0..outs.width {
                let mut best = base + oy * stride * ins.width + ox * stride;
                for ky in 0..window {
                    for kx in 0..window {
                        let at = base + (oy * stride + ky) * ins.width + ox * stride + kx;
                        if x[at] > x[best] {
                            best = at;
                        }
                    }
                }
                y.push(x[best]);
                argmax.push(best);
            }
        }
    }
    (y, argmax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::config::LayerSpec;

    fn fc_net(inputs: usize, outputs: usize) -> NetworkConfig {
        NetworkConfig {
            input: Shape::new(inputs, 1, 1),
            layers: vec![LayerSpec::Fc { units: outputs }],
            num_classes: outputs,
            seed: 1,
        }
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let cfg = NetworkConfig::mini(32, 4, 3, 0);
        let net = Network::<f32>::new(cfg.clone(), Parameters::zeros(&cfg).unwrap()).unwrap();
        let x = vec![(0..32 * 32 * 4).map(|i| (i % 7) as f32).collect::<Vec<_>>()];
        assert!(net.predict(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_conv_passes_input_through() {
        let cfg = NetworkConfig {
            input: Shape::new(1, 1, 3),
            layers: vec![LayerSpec::Conv {
                filters: 1,
                kernel: 1,
                stride: 1,
                padding: 0,
            }],
            num_classes: 3,
            seed: 0,
        };
        let params = Parameters {
            layers: vec![LayerParams {
                weights: vec![1.0],
                bias: vec![0.0],
            }],
        };
        let net = Network::<f64>::new(cfg, params).unwrap();
        let logits = net.predict(&[vec![0.5, -2.0, 7.25]]).unwrap();
        assert_eq!(logits.data(), &[0.5, -2.0, 7.25]);
    }

    #[test]
    fn fc_forward_matches_hand_product() {
        // 2x2 input flattened to 4, two outputs.
        let cfg = NetworkConfig {
            input: Shape::new(1, 2, 2),
            layers: vec![LayerSpec::Fc { units: 2 }],
            num_classes: 2,
            seed: 0,
        };
        let params = Parameters {
            layers: vec![LayerParams {
                weights: vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.0, 2.0],
                bias: vec![0.5, -1.0],
            }],
        };
        let net = Network::<f64>::new(cfg, params).unwrap();
        let logits = net.predict(&[vec![1.0, 0.0, -1.0, 2.0]]).unwrap();
        // [1+0-3+8+0.5, -1+0+0+4-1]
        assert_eq!(logits.data(), &[6.5, 2.0]);
    }

    #[test]
    fn fc_backward_is_outer_product() {
        let cfg = fc_net(2, 2);
        let params = Parameters {
            layers: vec![LayerParams {
                weights: vec![1.0, 2.0, 3.0, 4.0],
                bias: vec![0.0, 0.0],
            }],
        };
        let net = Network::<f64>::new(cfg, params).unwrap();
        let (_, trace) = net.forward_eval(&[vec![2.0, -1.0]]).unwrap();
        let up = Matrix::from_vec(1, 2, vec![0.5, 3.0]).unwrap();
        let g = net.backward(&trace, &up).unwrap();
        assert_eq!(g.layers[0].weights, vec![1.0, -0.5, 6.0, -3.0]);
        assert_eq!(g.layers[0].bias, vec![0.5, 3.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Network::<f64>::initialized(NetworkConfig::mini(16, 3, 2, 4)).unwrap();
        let x = vec![(0..16 * 16 * 3).map(|i| ((i * 37) % 11) as f64 / 11.0).collect()];
        let (_, trace) = net.forward_eval(&x).unwrap();
        let g = net.backward(&trace, &Matrix::zeros(1, 2)).unwrap();
        assert!(g.values().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_foreign_shapes() {
        let net = Network::<f64>::initialized(fc_net(2, 2)).unwrap();
        let (_, trace) = net.forward_eval(&[vec![1.0, 1.0]]).unwrap();
        assert!(net.backward(&trace, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn eval_is_repeatable_and_train_uses_dropout() {
        let net = Network::<f32>::initialized(NetworkConfig::mini(16, 4, 2, 9)).unwrap();
        let x: Vec<Vec<f32>> = (0..3)
            .map(|s| {
                (0..16 * 16 * 4)
                    .map(|i| ((i * 13 + s * 5) % 17) as f32 / 17.0)
                    .collect()
            })
            .collect();
        let a = net.predict(&x).unwrap();
        let b = net.predict(&x).unwrap();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (t, _) = net.forward(&x, Mode::Train, &mut rng).unwrap();
        assert_ne!(t, a);
    }

    #[test]
    fn input_shape_checked() {
        let net = Network::<f32>::initialized(fc_net(3, 2)).unwrap();
        assert!(matches!(net.predict(&[vec![1.0; 4]]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn maxpool_routes_gradient_to_winner() {
        let cfg = NetworkConfig {
            input: Shape::new(1, 2, 2),
            layers: vec![LayerSpec::MaxPool { window: 2, stride: 2 }],
            num_classes: 1,
            seed: 0,
        };
        let net = Network::<f64>::new(cfg.clone(), Parameters::zeros(&cfg).unwrap()).unwrap();
        let (y, trace) = net.forward_eval(&[vec![0.1, 0.9, -3.0, 0.2]]).unwrap();
        assert_eq!(y.data(), &[0.9]);
        assert_eq!(trace.activation_pattern(), vec![1]);
    }
}
