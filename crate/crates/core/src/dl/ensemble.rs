use super::{DlError, NeuralNetwork, Predictor};

/// Index of the largest component; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Elementwise mean of equal-length output vectors.
pub fn soft_vote(outputs: &[Vec<f64>]) -> Result<Vec<f64>, DlError> {
    let first = outputs
        .first()
        .ok_or_else(|| DlError::InvalidArgument("soft vote over no outputs".into()))?;
    if outputs.iter().any(|o| o.len() != first.len()) {
        return Err(DlError::Shape(
            "soft vote over outputs of different lengths".into(),
        ));
    }
    let n = outputs.len() as f64;
    Ok((0..first.len())
        .map(|i| outputs.iter().map(|o| o[i]).sum::<f64>() / n)
        .collect())
}

/// Uniform soft-voting ensemble of networks with a shared output width.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    members: Vec<NeuralNetwork>,
}

impl EnsembleModel {
    pub fn new(members: Vec<NeuralNetwork>) -> Result<Self, DlError> {
        let first = members
            .first()
            .ok_or_else(|| DlError::InvalidArgument("ensemble needs at least one member".into()))?;
        if members
            .iter()
            .any(|m| m.input_len() != first.input_len() || m.output_len() != first.output_len())
        {
            return Err(DlError::Shape(
                "ensemble members differ in input or output width".into(),
            ));
        }
        Ok(EnsembleModel { members })
    }

    pub fn members(&self) -> &[NeuralNetwork] {
        &self.members
    }
}

impl Predictor for EnsembleModel {
    fn predict(&self, input: &[f64]) -> Result<Vec<f64>, DlError> {
        let outs = self
            .members
            .iter()
            .map(|m| m.predict(input))
            .collect::<Result<Vec<_>, _>>()?;
        soft_vote(&outs)
    }

    fn is_classifier(&self) -> bool {
        self.members.iter().all(NeuralNetwork::is_classifier)
    }
}
