//! Layer types and their forward/backward maps.
//!
//! Every layer maps a flat row-major slice to a flat row-major slice. Spatial
//! layers read their input as `[channels, height, width]`.

use std::fmt;

use super::DlError;
use crate::des::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Logistic,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    pub fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Logistic => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Logistic => "logistic",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "linear" => Some(Activation::Linear),
            "logistic" => Some(Activation::Logistic),
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fully connected layer, weights stored `outputs x inputs` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    /// Zero-initialised layer.
    pub fn new(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }
}

/// `(x - mean) / std` per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaling {
    /// Identity scaling over `n` features.
    pub fn identity(n: usize) -> Self {
        Scaling {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Per-feature statistics of `rows`. Constant features get `std = 1`.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, DlError> {
        let n = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| DlError::InvalidArgument("no rows to fit".into()))?;
        let count = rows.len() as f64;
        let mut mean = vec![0.0; n];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / count;
            }
        }
        let mut var = vec![0.0; n];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m) / count;
            }
        }
        let std = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Scaling { mean, std })
    }
}

/// `x * std + mean` per feature; the inverse of [`Scaling`].
#[derive(Debug, Clone, PartialEq)]
pub struct Unscaling {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Clamps each feature to `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounding {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// 2-D convolution, valid padding. Kernels are `out x in x kh x kw` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub out_channels: usize,
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub stride: usize,
    pub kernels: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    /// Zero-initialised layer over a `[channels, height, width]` input.
    pub fn new(input: [usize; 3], out_channels: usize, kernel: [usize; 2], stride: usize) -> Self {
        let [c, h, w] = input;
        Conv2d {
            in_channels: c,
            in_height: h,
            in_width: w,
            out_channels,
            kernel_height: kernel[0],
            kernel_width: kernel[1],
            stride,
            kernels: vec![0.0; out_channels * c * kernel[0] * kernel[1]],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn output_dims(&self) -> Option<(usize, usize)> {
        output_extent(self.in_height, self.kernel_height, self.stride).zip(output_extent(
            self.in_width,
            self.kernel_width,
            self.stride,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Average,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pooling {
    pub channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub window: usize,
    pub stride: usize,
    pub mode: PoolMode,
}

impl Pooling {
    pub fn output_dims(&self) -> Option<(usize, usize)> {
        output_extent(self.in_height, self.window, self.stride).zip(output_extent(
            self.in_width,
            self.window,
            self.stride,
        ))
    }

    /// Flat input index of the window maximum; first in row-major order on ties.
    fn argmax(&self, x: &[f64], c: usize, r: usize, col: usize) -> usize {
        let mut best = self.index(c, r * self.stride, col * self.stride);
        for i in 0..self.window {
            for j in 0..self.window {
                let idx = self.index(c, r * self.stride + i, col * self.stride + j);
                if x[idx] > x[best] {
                    best = idx;
                }
            }
        }
        best
    }

    fn index(&self, c: usize, r: usize, col: usize) -> usize {
        (c * self.in_height + r) * self.in_width + col
    }
}

/// `floor((input - window) / stride) + 1`, or `None` if that is below 1.
pub fn output_extent(input: usize, window: usize, stride: usize) -> Option<usize> {
    if stride == 0 || window == 0 || input < window {
        return None;
    }
    Some((input - window) / stride + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Scaling(Scaling),
    Unscaling(Unscaling),
    Bounding(Bounding),
    /// Softmax over `n` inputs.
    Probabilistic(usize),
    Conv2d(Conv2d),
    Pooling(Pooling),
}

/// Gradient of one layer's trainable tensors (empty for parameter-free layers).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "Dense",
            Layer::Scaling(_) => "Scaling",
            Layer::Unscaling(_) => "Unscaling",
            Layer::Bounding(_) => "Bounding",
            Layer::Probabilistic(_) => "Probabilistic",
            Layer::Conv2d(_) => "Conv2d",
            Layer::Pooling(_) => "Pooling",
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            Layer::Dense(d) => vec![d.inputs],
            Layer::Scaling(s) => vec![s.mean.len()],
            Layer::Unscaling(u) => vec![u.mean.len()],
            Layer::Bounding(b) => vec![b.lower.len()],
            Layer::Probabilistic(n) => vec![*n],
            Layer::Conv2d(c) => vec![c.in_channels, c.in_height, c.in_width],
            Layer::Pooling(p) => vec![p.channels, p.in_height, p.in_width],
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self {
            Layer::Dense(d) => vec![d.outputs],
            Layer::Conv2d(c) => {
                let (h, w) = c.output_dims().unwrap_or((0, 0));
                vec![c.out_channels, h, w]
            }
            Layer::Pooling(p) => {
                let (h, w) = p.output_dims().unwrap_or((0, 0));
                vec![p.channels, h, w]
            }
            _ => self.input_shape(),
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape().iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        let nonempty = |n: usize, what: &str| {
            if n == 0 {
                Err(format!("{what} must be >= 1"))
            } else {
                Ok(())
            }
        };
        match self {
            Layer::Dense(d) => {
                nonempty(d.inputs, "inputs")?;
                nonempty(d.outputs, "outputs")?;
                if d.weights.len() != d.inputs * d.outputs || d.bias.len() != d.outputs {
                    return Err("weight rows must equal bias length".into());
                }
            }
            Layer::Scaling(Scaling { mean, std }) | Layer::Unscaling(Unscaling { mean, std }) => {
                nonempty(mean.len(), "features")?;
                if mean.len() != std.len() {
                    return Err("mean and std lengths differ".into());
                }
                if std.iter().any(|s| s.is_nan() || *s <= 0.0) {
                    return Err("std must be > 0 for every feature".into());
                }
            }
            Layer::Bounding(b) => {
                nonempty(b.lower.len(), "features")?;
                if b.lower.len() != b.upper.len() {
                    return Err("bound lengths differ".into());
                }
                if b.lower.iter().zip(&b.upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
                    return Err("lower bound must not exceed upper bound".into());
                }
            }
            Layer::Probabilistic(n) => nonempty(*n, "inputs")?,
            Layer::Conv2d(c) => {
                nonempty(c.in_channels * c.out_channels, "channels")?;
                if c.output_dims().is_none() {
                    return Err(format!(
                        "{}x{} kernel with stride {} does not fit a {}x{} input",
                        c.kernel_height, c.kernel_width, c.stride, c.in_height, c.in_width
                    ));
                }
                let volume = c.out_channels * c.in_channels * c.kernel_height * c.kernel_width;
                if c.kernels.len() != volume || c.bias.len() != c.out_channels {
                    return Err("kernel or bias size inconsistent with shape".into());
                }
            }
            Layer::Pooling(p) => {
                nonempty(p.channels, "channels")?;
                if p.output_dims().is_none() {
                    return Err(format!(
                        "{0}x{0} window with stride {1} does not fit a {2}x{3} input",
                        p.window, p.stride, p.in_height, p.in_width
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Layer::Dense(d) => d
                .weights
                .chunks(d.inputs)
                .zip(&d.bias)
                .map(|(row, b)| d.activation.apply(b + dot(row, x)))
                .collect(),
            Layer::Scaling(s) => x
                .iter()
                .zip(&s.mean)
                .zip(&s.std)
                .map(|((v, m), sd)| (v - m) / sd)
                .collect(),
            Layer::Unscaling(u) => x
                .iter()
                .zip(&u.mean)
                .zip(&u.std)
                .map(|((v, m), sd)| v * sd + m)
                .collect(),
            Layer::Bounding(b) => x
                .iter()
                .zip(b.lower.iter().zip(&b.upper))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
                .collect(),
            Layer::Probabilistic(_) => softmax(x),
            Layer::Conv2d(c) => conv_forward(c, x),
            Layer::Pooling(p) => pool_forward(p, x),
        }
    }

    /// Back-propagates `dy` (gradient w.r.t. this layer's output `y`, produced
    /// from input `x`). Accumulates parameter gradients into `grad` and returns
    /// the gradient w.r.t. `x`.
    pub fn backward(&self, x: &[f64], y: &[f64], dy: &[f64], grad: &mut LayerGradient) -> Vec<f64> {
        match self {
            Layer::Dense(d) => {
                let dz: Vec<f64> = y
                    .iter()
                    .zip(dy)
                    .map(|(yi, g)| g * d.activation.derivative_at_output(*yi))
                    .collect();
                let mut dx = vec![0.0; d.inputs];
                for (i, dzi) in dz.iter().enumerate() {
                    grad.bias[i] += dzi;
                    let row = &d.weights[i * d.inputs..(i + 1) * d.inputs];
                    let grow = &mut grad.weights[i * d.inputs..(i + 1) * d.inputs];
                    for j in 0..d.inputs {
                        grow[j] += dzi * x[j];
                        dx[j] += row[j] * dzi;
                    }
                }
                dx
            }
            Layer::Scaling(s) => dy.iter().zip(&s.std).map(|(g, sd)| g / sd).collect(),
            Layer::Unscaling(u) => dy.iter().zip(&u.std).map(|(g, sd)| g * sd).collect(),
            Layer::Bounding(b) => x
                .iter()
                .zip(dy)
                .zip(b.lower.iter().zip(&b.upper))
                .map(|((v, g), (lo, hi))| if v >= lo && v <= hi { *g } else { 0.0 })
                .collect(),
            Layer::Probabilistic(_) => {
                let inner = dot(dy, y);
                y.iter().zip(dy).map(|(yi, g)| yi * (g - inner)).collect()
            }
            Layer::Conv2d(c) => conv_backward(c, x, dy, grad),
            Layer::Pooling(p) => pool_backward(p, x, dy),
        }
    }

    /// `(weights, bias)` for trainable layers.
    pub fn params(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Dense(d) => Some((&d.weights, &d.bias)),
            Layer::Conv2d(c) => Some((&c.kernels, &c.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut [f64], &mut [f64])> {
        match self {
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            Layer::Conv2d(c) => Some((&mut c.kernels, &mut c.bias)),
            _ => None,
        }
    }

    pub fn zero_gradient(&self) -> LayerGradient {
        match self.params() {
            Some((w, b)) => LayerGradient {
                weights: vec![0.0; w.len()],
                bias: vec![0.0; b.len()],
            },
            None => LayerGradient::default(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub(crate) fn initialize(&mut self, rng: &mut RandomStream) {
        let (fan_in, fan_out) = match self {
            Layer::Dense(d) => (d.inputs, d.outputs),
            Layer::Conv2d(c) => {
                let area = c.kernel_height * c.kernel_width;
                (c.in_channels * area, c.out_channels * area)
            }
            _ => return,
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        if let Some((w, b)) = self.params_mut() {
            w.iter_mut().for_each(|v| *v = rng.uniform(-limit, limit));
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn conv_forward(c: &Conv2d, x: &[f64]) -> Vec<f64> {
    let (oh, ow) = c.output_dims().expect("validated conv");
    let (kh, kw, s) = (c.kernel_height, c.kernel_width, c.stride);
    let mut out = vec![0.0; c.out_channels * oh * ow];
    for o in 0..c.out_channels {
        for r in 0..oh {
            for col in 0..ow {
                let mut acc = c.bias[o];
                for ci in 0..c.in_channels {
                    let kbase = (o * c.in_channels + ci) * kh * kw;
                    for i in 0..kh {
                        let xrow = (ci * c.in_height + r * s + i) * c.in_width + col * s;
                        let krow = kbase + i * kw;
                        acc += dot(&c.kernels[krow..krow + kw], &x[xrow..xrow + kw]);
                    }
                }
                out[(o * oh + r) * ow + col] = acc;
            }
        }
    }
    out
}

fn conv_backward(c: &Conv2d, x: &[f64], dy: &[f64], grad: &mut LayerGradient) -> Vec<f64> {
    let (oh, ow) = c.output_dims().expect("validated conv");
    let (kh, kw, s) = (c.kernel_height, c.kernel_width, c.stride);
    let mut dx = vec![0.0; x.len()];
    for o in 0..c.out_channels {
        for r in 0..oh {
            for col in 0..ow {
                let g = dy[(o * oh + r) * ow + col];
                grad.bias[o] += g;
                if g == 0.0 {
                    continue;
                }
                for ci in 0..c.in_channels {
                    let kbase = (o * c.in_channels + ci) * kh * kw;
                    for i in 0..kh {
                        let xrow = (ci * c.in_height + r * s + i) * c.in_width + col * s;
                        let krow = kbase + i * kw;
                        for j in 0..kw {
                            grad.weights[krow + j] += g * x[xrow + j];
                            dx[xrow + j] += g * c.kernels[krow + j];
                        }
                    }
                }
            }
        }
    }
    dx
}

fn pool_forward(p: &Pooling, x: &[f64]) -> Vec<f64> {
    let (oh, ow) = p.output_dims().expect("validated pooling");
    let area = (p.window * p.window) as f64;
    let mut out = Vec::with_capacity(p.channels * oh * ow);
    for c in 0..p.channels {
        for r in 0..oh {
            for col in 0..ow {
                let v = match p.mode {
                    PoolMode::Max => x[p.argmax(x, c, r, col)],
                    PoolMode::Average => {
                        let mut sum = 0.0;
                        for i in 0..p.window {
                            for j in 0..p.window {
                                sum += x[p.index(c, r * p.stride + i, col * p.stride + j)];
                            }
                        }
                        sum / area
                    }
                };
                out.push(v);
            }
        }
    }
    out
}

fn pool_backward(p: &Pooling, x: &[f64], dy: &[f64]) -> Vec<f64> {
    let (oh, ow) = p.output_dims().expect("validated pooling");
    let area = (p.window * p.window) as f64;
    let mut dx = vec![0.0; x.len()];
    for c in 0..p.channels {
        for r in 0..oh {
            for col in 0..ow {
                let g = dy[(c * oh + r) * ow + col];
                match p.mode {
                    PoolMode::Max => dx[p.argmax(x, c, r, col)] += g,
                    PoolMode::Average => {
                        for i in 0..p.window {
                            for j in 0..p.window {
                                dx[p.index(c, r * p.stride + i, col * p.stride + j)] += g / area;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}
