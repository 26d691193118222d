//! Versioned little-endian binary model format.
//!
//! ```text
//! "EDNN" | version u16 | input rank u32 | input dims u32... | layer count u32 | layers...
//! ```
//!
//! Each layer is a tag byte, its shape as `u32`s, then parameters as `f64`s in
//! row-major order.

use super::layer::{
    Activation, Bounding, Conv2d, Dense, Layer, PoolMode, Pooling, Scaling, Unscaling,
};
use super::{DlError, NeuralNetwork};
use crate::des::fnv1a64;

pub const MODEL_FORMAT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"EDNN";

const TAG_DENSE: u8 = 1;
const TAG_SCALING: u8 = 2;
const TAG_UNSCALING: u8 = 3;
const TAG_BOUNDING: u8 = 4;
const TAG_PROBABILISTIC: u8 = 5;
const TAG_CONV: u8 = 6;
const TAG_POOL: u8 = 7;

pub fn to_bytes(net: &NeuralNetwork) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    let shape = net.input_shape();
    w.u32(shape.len());
    for d in shape {
        w.u32(d);
    }
    w.u32(net.layers().len());
    for layer in net.layers() {
        match layer {
            Layer::Dense(d) => {
                w.0.push(TAG_DENSE);
                w.u32(d.inputs);
                w.u32(d.outputs);
                w.0.push(activation_code(d.activation));
                w.floats(&d.weights);
                w.floats(&d.bias);
            }
            Layer::Scaling(Scaling { mean, std }) | Layer::Unscaling(Unscaling { mean, std }) => {
                w.0.push(if matches!(layer, Layer::Scaling(_)) {
                    TAG_SCALING
                } else {
                    TAG_UNSCALING
                });
                w.u32(mean.len());
                w.floats(mean);
                w.floats(std);
            }
            Layer::Bounding(b) => {
                w.0.push(TAG_BOUNDING);
                w.u32(b.lower.len());
                w.floats(&b.lower);
                w.floats(&b.upper);
            }
            Layer::Probabilistic(n) => {
                w.0.push(TAG_PROBABILISTIC);
                w.u32(*n);
            }
            Layer::Conv2d(c) => {
                w.0.push(TAG_CONV);
                for v in [
                    c.in_channels,
                    c.in_height,
                    c.in_width,
                    c.out_channels,
                    c.kernel_height,
                    c.kernel_width,
                    c.stride,
                ] {
                    w.u32(v);
                }
                w.floats(&c.kernels);
                w.floats(&c.bias);
            }
            Layer::Pooling(p) => {
                w.0.push(TAG_POOL);
                for v in [p.channels, p.in_height, p.in_width, p.window, p.stride] {
                    w.u32(v);
                }
                w.0.push(match p.mode {
                    PoolMode::Max => 0,
                    PoolMode::Average => 1,
                });
            }
        }
    }
    w.0
}

pub fn from_bytes(bytes: &[u8]) -> Result<NeuralNetwork, DlError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(DlError::Malformed("bad magic".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
    if version != MODEL_FORMAT_VERSION {
        return Err(DlError::Malformed(format!("unsupported version {version}")));
    }
    let rank = r.u32()?;
    let shape: Vec<usize> = (0..rank).map(|_| r.u32()).collect::<Result<_, _>>()?;
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let layer = match r.u8()? {
            TAG_DENSE => {
                let (inputs, outputs) = (r.u32()?, r.u32()?);
                let activation = match r.u8()? {
                    0 => Activation::Linear,
                    1 => Activation::Logistic,
                    2 => Activation::Tanh,
                    3 => Activation::Relu,
                    a => return Err(DlError::Malformed(format!("unknown activation {a}"))),
                };
                let weights = r.floats(inputs.checked_mul(outputs).ok_or_else(too_large)?)?;
                let bias = r.floats(outputs)?;
                Layer::Dense(Dense {
                    inputs,
                    outputs,
                    weights,
                    bias,
                    activation,
                })
            }
            tag @ (TAG_SCALING | TAG_UNSCALING) => {
                let n = r.u32()?;
                let (mean, std) = (r.floats(n)?, r.floats(n)?);
                if tag == TAG_SCALING {
                    Layer::Scaling(Scaling { mean, std })
                } else {
                    Layer::Unscaling(Unscaling { mean, std })
                }
            }
            TAG_BOUNDING => {
                let n = r.u32()?;
                Layer::Bounding(Bounding {
                    lower: r.floats(n)?,
                    upper: r.floats(n)?,
                })
            }
            TAG_PROBABILISTIC => Layer::Probabilistic(r.u32()?),
            TAG_CONV => {
                let dims: Vec<usize> = (0..7).map(|_| r.u32()).collect::<Result<_, _>>()?;
                let volume = dims[3]
                    .checked_mul(dims[0])
                    .and_then(|v| v.checked_mul(dims[4]))
                    .and_then(|v| v.checked_mul(dims[5]))
                    .ok_or_else(too_large)?;
                Layer::Conv2d(Conv2d {
                    in_channels: dims[0],
                    in_height: dims[1],
                    in_width: dims[2],
                    out_channels: dims[3],
                    kernel_height: dims[4],
                    kernel_width: dims[5],
                    stride: dims[6],
                    kernels: r.floats(volume)?,
                    bias: r.floats(dims[3])?,
                })
            }
            TAG_POOL => {
                let dims: Vec<usize> = (0..5).map(|_| r.u32()).collect::<Result<_, _>>()?;
                let mode = match r.u8()? {
                    0 => PoolMode::Max,
                    1 => PoolMode::Average,
                    m => return Err(DlError::Malformed(format!("unknown pooling mode {m}"))),
                };
                Layer::Pooling(Pooling {
                    channels: dims[0],
                    in_height: dims[1],
                    in_width: dims[2],
                    window: dims[3],
                    stride: dims[4],
                    mode,
                })
            }
            t => return Err(DlError::Malformed(format!("unknown layer tag {t}"))),
        };
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(DlError::Malformed(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    NeuralNetwork::new(layers)
        .and_then(|n| n.with_input_shape(shape))
        .map_err(|e| DlError::Malformed(e.to_string()))
}

/// FNV-1a over the serialized model.
pub fn digest(net: &NeuralNetwork) -> u64 {
    fnv1a64(&to_bytes(net))
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Linear => 0,
        Activation::Logistic => 1,
        Activation::Tanh => 2,
        Activation::Relu => 3,
    }
}

fn too_large() -> DlError {
    DlError::Malformed("layer size overflows".into())
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("layer dimension fits in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn floats(&mut self, values: &[f64]) {
        for v in values {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DlError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| DlError::Malformed("truncated model".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, DlError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, DlError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>, DlError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(too_large)?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
