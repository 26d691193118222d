use super::layer::{Layer, LayerGradient, Scaling};
use super::loss::{check_probabilities, loss_gradient, LossIndex};
use super::{DlError, Tensor};
use crate::des::RandomStream;

/// An ordered stack of shape-compatible layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNetwork {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
}

impl NeuralNetwork {
    /// Validates every layer and the shape hand-off between neighbours.
    pub fn new(layers: Vec<Layer>) -> Result<Self, DlError> {
        if layers.is_empty() {
            return Err(DlError::InvalidArgument(
                "a network needs at least one layer".into(),
            ));
        }
        for (i, layer) in layers.iter().enumerate() {
            layer.validate().map_err(|msg| {
                DlError::InvalidArgument(format!("layer {i} ({}): {msg}", layer.kind()))
            })?;
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_len() != pair[1].input_len() {
                return Err(DlError::ShapeMismatch {
                    layer: i + 1,
                    kind: pair[1].kind(),
                    expected: pair[1].input_shape(),
                    actual: pair[0].output_shape(),
                });
            }
        }
        let input_shape = layers[0].input_shape();
        Ok(NeuralNetwork {
            layers,
            input_shape,
        })
    }

    /// Declares the shape callers pass to [`forward`](Self::forward), e.g.
    /// `[channels, height, width]` in front of a flat scaling layer.
    pub fn with_input_shape(mut self, shape: Vec<usize>) -> Result<Self, DlError> {
        if shape.is_empty() || shape.iter().product::<usize>() != self.input_len() {
            return Err(DlError::Shape(format!(
                "input shape {shape:?} does not hold {} values",
                self.input_len()
            )));
        }
        self.input_shape = shape;
        Ok(self)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> Vec<usize> {
        self.input_shape.clone()
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].input_len()
    }

    pub fn output_len(&self) -> usize {
        self.layers[self.layers.len() - 1].output_len()
    }

    /// True when the last layer is a softmax.
    pub fn is_classifier(&self) -> bool {
        matches!(self.layers.last(), Some(Layer::Probabilistic(_)))
    }

    /// Accepts one sample shaped like [`input_shape`](Self::input_shape), or a batch
    /// with a leading sample axis.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, DlError> {
        let expected = self.input_shape();
        let shape = input.shape();
        let out_shape = self.layers[self.layers.len() - 1].output_shape();
        if shape == expected.as_slice() {
            return Tensor::new(out_shape, self.run(input.data()));
        }
        if shape.len() == expected.len() + 1 && shape[1..] == expected[..] {
            let width = self.input_len();
            let mut data = Vec::with_capacity(shape[0] * self.output_len());
            for row in input.data().chunks(width) {
                data.extend(self.run(row));
            }
            let mut batch_shape = vec![shape[0]];
            batch_shape.extend(out_shape);
            return Tensor::new(batch_shape, data);
        }
        Err(DlError::ShapeMismatch {
            layer: 0,
            kind: self.layers[0].kind(),
            expected,
            actual: shape.to_vec(),
        })
    }

    /// Forward pass over one flat sample.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, DlError> {
        if input.len() != self.input_len() {
            return Err(DlError::ShapeMismatch {
                layer: 0,
                kind: self.layers[0].kind(),
                expected: self.input_shape(),
                actual: vec![input.len()],
            });
        }
        Ok(self.run(input))
    }

    fn run(&self, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = layer.forward(&x);
        }
        x
    }

    /// Input followed by every layer's output.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for layer in &self.layers {
            let next = layer.forward(acts.last().expect("non-empty"));
            acts.push(next);
        }
        acts
    }

    /// Glorot-uniform weights and zero biases, drawn from the `init` stream.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = RandomStream::new(seed, "init");
        for layer in &mut self.layers {
            layer.initialize(&mut rng);
        }
    }

    /// Replaces a leading scaling layer with statistics fitted to `rows`.
    /// Returns false when the network does not start with one.
    pub fn fit_scaling(&mut self, rows: &[Vec<f64>]) -> Result<bool, DlError> {
        let Some(Layer::Scaling(s)) = self.layers.first_mut() else {
            return Ok(false);
        };
        let fitted = Scaling::fit(rows)?;
        if fitted.mean.len() != s.mean.len() {
            return Err(DlError::Shape(format!(
                "scaling over {} features fitted to rows of width {}",
                s.mean.len(),
                fitted.mean.len()
            )));
        }
        *s = fitted;
        Ok(true)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Trainable parameters flattened layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (w, b) in self.layers.iter().filter_map(Layer::params) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    /// Inverse of [`parameters`](Self::parameters).
    pub fn set_parameters(&mut self, values: &[f64]) -> Result<(), DlError> {
        if values.len() != self.parameter_count() {
            return Err(DlError::Shape(format!(
                "network has {} parameters, got {}",
                self.parameter_count(),
                values.len()
            )));
        }
        let mut rest = values;
        for (w, b) in self.layers.iter_mut().filter_map(Layer::params_mut) {
            let (head, tail) = rest.split_at(w.len());
            w.copy_from_slice(head);
            let (head, tail) = tail.split_at(b.len());
            b.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
}

/// Per-layer gradients, congruent with the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros(net: &NeuralNetwork) -> Self {
        Gradients {
            layers: net.layers.iter().map(Layer::zero_gradient).collect(),
        }
    }

    /// Same ordering as [`NeuralNetwork::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend_from_slice(&g.weights);
            out.extend_from_slice(&g.bias);
        }
        out
    }
}

/// Analytic gradient of the mean batch loss with respect to every trainable
/// parameter.
pub fn backward(
    net: &NeuralNetwork,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    index: LossIndex,
) -> Result<Gradients, DlError> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(DlError::Shape(format!(
            "{} input rows against {} target rows",
            inputs.len(),
            targets.len()
        )));
    }
    let mut grads = Gradients::zeros(net);
    let batch = inputs.len();
    for (x, t) in inputs.iter().zip(targets) {
        if x.len() != net.input_len() || t.len() != net.output_len() {
            return Err(DlError::Shape(format!(
                "sample widths {}/{} against network {}/{}",
                x.len(),
                t.len(),
                net.input_len(),
                net.output_len()
            )));
        }
        let acts = net.activations(x);
        let prediction = &acts[acts.len() - 1];
        if index == LossIndex::CrossEntropy {
            check_probabilities(prediction)?;
        }
        let mut dy = loss_gradient(index, prediction, t, batch);
        for (i, layer) in net.layers.iter().enumerate().rev() {
            dy = layer.backward(&acts[i], &acts[i + 1], &dy, &mut grads.layers[i]);
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::super::layer::{Activation, Bounding, Conv2d, Dense, PoolMode, Pooling, Unscaling};
    use super::super::loss::loss_rows;
    use super::*;
    use proptest::prelude::*;

    fn dense(inputs: usize, outputs: usize, act: Activation) -> Layer {
        Layer::Dense(Dense::new(inputs, outputs, act))
    }

    #[test]
    fn identity_dense_is_identity() {
        let mut d = Dense::new(3, 3, Activation::Linear);
        for i in 0..3 {
            d.weights[i * 3 + i] = 1.0;
        }
        let net = NeuralNetwork::new(vec![Layer::Dense(d)]).unwrap();
        let x = Tensor::vector(vec![0.5, -2.0, 7.0]);
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn incompatible_neighbours_are_rejected() {
        let err = NeuralNetwork::new(vec![
            dense(2, 3, Activation::Tanh),
            dense(4, 1, Activation::Linear),
        ])
        .unwrap_err();
        assert!(matches!(
            err,
            DlError::ShapeMismatch {
                layer: 1,
                kind: "Dense",
                ..
            }
        ));
    }

    #[test]
    fn wrong_input_shape_names_first_layer() {
        let net = NeuralNetwork::new(vec![dense(2, 1, Activation::Linear)]).unwrap();
        let err = net
            .forward(&Tensor::vector(vec![1.0, 2.0, 3.0]))
            .unwrap_err();
        assert_eq!(
            err,
            DlError::ShapeMismatch {
                layer: 0,
                kind: "Dense",
                expected: vec![2],
                actual: vec![3]
            }
        );
    }

    #[test]
    fn batch_forward_keeps_leading_axis() {
        let mut net =
            NeuralNetwork::new(vec![dense(2, 3, Activation::Tanh), Layer::Probabilistic(3)])
                .unwrap();
        net.initialize(1);
        let x = Tensor::new(vec![4, 2], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]).unwrap();
        let y = net.forward(&x).unwrap();
        assert_eq!(y.shape(), &[4, 3]);
        for row in y.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_dense_mse_gradient_closed_form() {
        let mut d = Dense::new(3, 2, Activation::Linear);
        d.weights = vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6];
        d.bias = vec![0.05, -0.05];
        let net = NeuralNetwork::new(vec![Layer::Dense(d)]).unwrap();
        let x = vec![1.0, 2.0, -1.0];
        let y = vec![0.5, -0.5];
        let yhat = net.predict(&x).unwrap();
        let g = backward(
            &net,
            std::slice::from_ref(&x),
            std::slice::from_ref(&y),
            LossIndex::MeanSquaredError,
        )
        .unwrap();
        for i in 0..2 {
            for (j, xj) in x.iter().enumerate() {
                let want = 2.0 / 2.0 * (yhat[i] - y[i]) * xj;
                assert!((g.layers[0].weights[i * 3 + j] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_weight_gradient() {
        let mut net = NeuralNetwork::new(vec![dense(3, 2, Activation::Logistic)]).unwrap();
        net.initialize(4);
        let g = backward(
            &net,
            &[vec![0.0; 3]],
            &[vec![1.0, 0.0]],
            LossIndex::MeanSquaredError,
        )
        .unwrap();
        assert!(g.layers[0].weights.iter().all(|w| *w == 0.0));
        assert!(g.layers[0].bias.iter().any(|b| *b != 0.0));
    }

    #[test]
    fn scaling_then_unscaling_is_identity() {
        let mean = vec![1.5, -3.0, 0.25];
        let std = vec![0.5, 2.0, 7.0];
        let net = NeuralNetwork::new(vec![
            Layer::Scaling(Scaling {
                mean: mean.clone(),
                std: std.clone(),
            }),
            Layer::Unscaling(Unscaling { mean, std }),
        ])
        .unwrap();
        let x = vec![10.0, -4.0, 0.3];
        for (a, b) in net.predict(&x).unwrap().iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn parameters_round_trip() {
        let mut net = NeuralNetwork::new(vec![
            dense(2, 3, Activation::Relu),
            dense(3, 1, Activation::Linear),
        ])
        .unwrap();
        net.initialize(9);
        let p = net.parameters();
        assert_eq!(p.len(), 13);
        let mut other = net.clone();
        other.set_parameters(&[0.0; 13]).unwrap();
        other.set_parameters(&p).unwrap();
        assert_eq!(other, net);
        assert!(other.set_parameters(&p[1..]).is_err());
    }

    fn mean_loss(net: &NeuralNetwork, xs: &[Vec<f64>], ts: &[Vec<f64>], index: LossIndex) -> f64 {
        let preds: Vec<_> = xs.iter().map(|x| net.predict(x).unwrap()).collect();
        loss_rows(index, &preds, ts).unwrap()
    }

    /// Largest relative error between analytic and central-difference gradients.
    fn worst_relative_error(
        net: &NeuralNetwork,
        xs: &[Vec<f64>],
        ts: &[Vec<f64>],
        index: LossIndex,
    ) -> f64 {
        let analytic = backward(net, xs, ts, index).unwrap().flatten();
        let base = net.parameters();
        let h = 1e-5;
        let mut probe = net.clone();
        let mut worst: f64 = 0.0;
        for (k, a) in analytic.iter().enumerate() {
            let mut p = base.clone();
            p[k] = base[k] + h;
            probe.set_parameters(&p).unwrap();
            let up = mean_loss(&probe, xs, ts, index);
            p[k] = base[k] - h;
            probe.set_parameters(&p).unwrap();
            let down = mean_loss(&probe, xs, ts, index);
            let numeric = (up - down) / (2.0 * h);
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
        worst
    }

    fn inputs(rng: &mut RandomStream, n: usize, width: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..width).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn mlp_gradients_match_finite_differences(seed in any::<u64>(), hidden in 1usize..5, act in 0usize..3) {
            let act = [Activation::Tanh, Activation::Logistic, Activation::Linear][act];
            let mut net = NeuralNetwork::new(vec![
                Layer::Scaling(Scaling { mean: vec![0.1, -0.2, 0.3], std: vec![1.5, 0.7, 1.1] }),
                dense(3, hidden, act),
                dense(hidden, 2, Activation::Logistic),
                Layer::Unscaling(Unscaling { mean: vec![0.5, -0.5], std: vec![2.0, 0.5] }),
            ]).unwrap();
            net.initialize(seed);
            let mut rng = RandomStream::new(seed, "fd");
            let xs = inputs(&mut rng, 3, 3);
            let ts = inputs(&mut rng, 3, 2);
            prop_assert!(worst_relative_error(&net, &xs, &ts, LossIndex::MeanSquaredError) < 1e-5);
        }

        #[test]
        fn conv_pool_softmax_gradients_match_finite_differences(seed in any::<u64>(), max_pool in any::<bool>()) {
            let mode = if max_pool { PoolMode::Max } else { PoolMode::Average };
            let mut net = NeuralNetwork::new(vec![
                Layer::Conv2d(Conv2d::new([2, 6, 6], 2, [3, 3], 1)),
                Layer::Pooling(Pooling { channels: 2, in_height: 4, in_width: 4, window: 2, stride: 2, mode }),
                Layer::Bounding(Bounding { lower: vec![-5.0; 8], upper: vec![5.0; 8] }),
                dense(8, 3, Activation::Tanh),
                Layer::Probabilistic(3),
            ]).unwrap();
            net.initialize(seed);
            let mut rng = RandomStream::new(seed, "fd");
            let xs = inputs(&mut rng, 2, 72);
            let ts = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
            prop_assert!(worst_relative_error(&net, &xs, &ts, LossIndex::CrossEntropy) < 1e-5);
        }
    }
}
