use super::loss::loss_rows;
use super::{argmax, DataSet, DlError, LossIndex, NeuralNetwork, Split};

/// Anything that maps one flat input row to an output row.
pub trait Predictor {
    fn predict(&self, input: &[f64]) -> Result<Vec<f64>, DlError>;

    /// Whether outputs are class probabilities.
    fn is_classifier(&self) -> bool;
}

impl Predictor for NeuralNetwork {
    fn predict(&self, input: &[f64]) -> Result<Vec<f64>, DlError> {
        NeuralNetwork::predict(self, input)
    }

    fn is_classifier(&self) -> bool {
        NeuralNetwork::is_classifier(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestingReport {
    pub loss: f64,
    /// Classifiers only.
    pub accuracy: Option<f64>,
    /// `confusion[actual][predicted]`; classifiers only.
    pub confusion: Option<Vec<Vec<u64>>>,
}

/// Scores the TEST rows, with cross-entropy for classifiers and mean squared
/// error otherwise.
pub fn evaluate<P: Predictor + ?Sized>(
    model: &P,
    data: &DataSet,
) -> Result<TestingReport, DlError> {
    let index = if model.is_classifier() {
        LossIndex::CrossEntropy
    } else {
        LossIndex::MeanSquaredError
    };
    evaluate_with(model, data, index)
}

pub fn evaluate_with<P: Predictor + ?Sized>(
    model: &P,
    data: &DataSet,
    index: LossIndex,
) -> Result<TestingReport, DlError> {
    let (xs, ts) = data.xy(Split::Test);
    if xs.is_empty() {
        return Err(DlError::InvalidArgument("dataset has no TEST rows".into()));
    }
    let preds = xs
        .iter()
        .map(|x| model.predict(x))
        .collect::<Result<Vec<_>, _>>()?;
    let loss = loss_rows(index, &preds, &ts)?;
    if !model.is_classifier() {
        return Ok(TestingReport {
            loss,
            accuracy: None,
            confusion: None,
        });
    }
    let classes = ts[0].len();
    let mut confusion = vec![vec![0u64; classes]; classes];
    for (p, t) in preds.iter().zip(&ts) {
        confusion[argmax(t)][argmax(p)] += 1;
    }
    let correct: u64 = (0..classes).map(|c| confusion[c][c]).sum();
    Ok(TestingReport {
        loss,
        accuracy: Some(correct as f64 / ts.len() as f64),
        confusion: Some(confusion),
    })
}
