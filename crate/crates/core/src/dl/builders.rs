use super::layer::{output_extent, Activation, Conv2d, Dense, Layer, PoolMode, Pooling, Scaling};
use super::{DlError, NeuralNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    Linear,
    Logistic,
    /// Linear dense layer followed by a softmax.
    Softmax,
}

/// A recipe for a freshly initialised network.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkSpec {
    Mlp {
        inputs: usize,
        hidden: Vec<(usize, Activation)>,
        outputs: usize,
        output: OutputKind,
        /// Prepend a scaling layer (identity until fitted).
        scaling: bool,
    },
    LeNet {
        height: usize,
        width: usize,
        channels: usize,
        classes: usize,
    },
}

impl NetworkSpec {
    /// Builds the network and draws its parameters from `seed`.
    pub fn build(&self, seed: u64) -> Result<NeuralNetwork, DlError> {
        let mut net = match self {
            NetworkSpec::Mlp {
                inputs,
                hidden,
                outputs,
                output,
                scaling,
            } => {
                let mut layers = Vec::new();
                if *scaling {
                    layers.push(Layer::Scaling(Scaling::identity(*inputs)));
                }
                let mut width = *inputs;
                for &(n, act) in hidden {
                    layers.push(Layer::Dense(Dense::new(width, n, act)));
                    width = n;
                }
                let act = match output {
                    OutputKind::Logistic => Activation::Logistic,
                    OutputKind::Linear | OutputKind::Softmax => Activation::Linear,
                };
                layers.push(Layer::Dense(Dense::new(width, *outputs, act)));
                if *output == OutputKind::Softmax {
                    layers.push(Layer::Probabilistic(*outputs));
                }
                NeuralNetwork::new(layers)?
            }
            NetworkSpec::LeNet {
                height,
                width,
                channels,
                classes,
            } => build_lenet(*height, *width, *channels, *classes)?,
        };
        net.initialize(seed);
        Ok(net)
    }

    pub fn input_len(&self) -> usize {
        match self {
            NetworkSpec::Mlp { inputs, .. } => *inputs,
            NetworkSpec::LeNet {
                height,
                width,
                channels,
                ..
            } => height * width * channels,
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            NetworkSpec::Mlp { outputs, .. } => *outputs,
            NetworkSpec::LeNet { classes, .. } => *classes,
        }
    }
}

/// LeNet-5 style classifier over a `channels x height x width` input:
/// scaling, two 5x5 convolution + 2x2 average-pooling stages, dense layers of
/// 120 and 84 tanh units, a linear class layer and a softmax.
///
/// Parameters are left at zero; call [`NeuralNetwork::initialize`].
pub fn build_lenet(
    height: usize,
    width: usize,
    channels: usize,
    classes: usize,
) -> Result<NeuralNetwork, DlError> {
    if channels == 0 || classes == 0 {
        return Err(DlError::InvalidArgument(
            "channels and classes must be >= 1".into(),
        ));
    }
    let stage = |name: &str, (h, w): (usize, usize), window: usize, stride: usize| {
        output_extent(h, window, stride)
            .zip(output_extent(w, window, stride))
            .ok_or_else(|| {
                DlError::InvalidArgument(format!(
                    "input {height}x{width} too small for LeNet: {name} receives {h}x{w}, needs {window}x{window}"
                ))
            })
    };
    let c1 = stage("conv1", (height, width), 5, 1)?;
    let p1 = stage("pool1", c1, 2, 2)?;
    let c2 = stage("conv2", p1, 5, 1)?;
    let p2 = stage("pool2", c2, 2, 2)?;
    let pool = |channels, (h, w): (usize, usize)| {
        Layer::Pooling(Pooling {
            channels,
            in_height: h,
            in_width: w,
            window: 2,
            stride: 2,
            mode: PoolMode::Average,
        })
    };
    let flat = 16 * p2.0 * p2.1;
    NeuralNetwork::new(vec![
        Layer::Scaling(Scaling::identity(channels * height * width)),
        Layer::Conv2d(Conv2d::new([channels, height, width], 6, [5, 5], 1)),
        pool(6, c1),
        Layer::Conv2d(Conv2d::new([6, p1.0, p1.1], 16, [5, 5], 1)),
        pool(16, c2),
        Layer::Dense(Dense::new(flat, 120, Activation::Tanh)),
        Layer::Dense(Dense::new(120, 84, Activation::Tanh)),
        Layer::Dense(Dense::new(84, classes, Activation::Linear)),
        Layer::Probabilistic(classes),
    ])?
    .with_input_shape(vec![channels, height, width])
}
