use super::{DlError, Gradients, NeuralNetwork};

/// `p <- p - learning_rate * g`, elementwise.
pub fn sgd_step(params: &mut [f64], grads: &[f64], learning_rate: f64) {
    assert_eq!(
        params.len(),
        grads.len(),
        "parameter and gradient lengths differ"
    );
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= learning_rate * g;
    }
}

/// Mini-batch stochastic gradient descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Sgd {
    pub fn step(&self, net: &mut NeuralNetwork, grads: &Gradients) -> Result<(), DlError> {
        if grads.layers.len() != net.layers().len() {
            return Err(DlError::Shape(
                "gradients do not match the network's layers".into(),
            ));
        }
        for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
            match layer.params_mut() {
                Some((w, b)) => {
                    if w.len() != g.weights.len() || b.len() != g.bias.len() {
                        return Err(DlError::Shape(
                            "gradient size differs from parameter size".into(),
                        ));
                    }
                    sgd_step(w, &g.weights, self.learning_rate);
                    sgd_step(b, &g.bias, self.learning_rate);
                }
                None if !g.weights.is_empty() || !g.bias.is_empty() => {
                    return Err(DlError::Shape(
                        "gradient given for a parameter-free layer".into(),
                    ));
                }
                None => {}
            }
        }
        Ok(())
    }
}
