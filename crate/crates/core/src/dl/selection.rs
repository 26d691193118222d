//! Model selection over an explicit candidate set.
//!
//! Neuron selection is expressed as candidates of different widths, input
//! selection as candidates with different input columns.

use super::loss::loss_rows;
use super::{
    train, DataSet, DlError, NetworkSpec, NeuralNetwork, Split, TrainingReport, TrainingStrategy,
};

#[derive(Debug, Clone, PartialEq)]
pub enum CandidateModel {
    /// Built, scaled and trained from the strategy.
    Spec(NetworkSpec),
    /// Evaluated as given, without training.
    Fixed(NeuralNetwork),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub model: CandidateModel,
    /// Overrides the dataset's input columns.
    pub input_columns: Option<Vec<usize>>,
}

impl Candidate {
    pub fn spec(spec: NetworkSpec) -> Self {
        Candidate {
            model: CandidateModel::Spec(spec),
            input_columns: None,
        }
    }

    pub fn fixed(net: NeuralNetwork) -> Self {
        Candidate {
            model: CandidateModel::Fixed(net),
            input_columns: None,
        }
    }

    pub fn with_input_columns(mut self, columns: Vec<usize>) -> Self {
        self.input_columns = Some(columns);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateReport {
    /// `None` for fixed candidates.
    pub training: Option<TrainingReport>,
    pub validation_loss: f64,
    pub network: NeuralNetwork,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: usize,
    pub reports: Vec<CandidateReport>,
}

/// Trains candidate `i` with seed `strategy.seed + i` and picks the lowest
/// VALIDATION loss, ties to the lowest index.
pub fn select_model(
    candidates: &[Candidate],
    data: &DataSet,
    strategy: &TrainingStrategy,
) -> Result<Selection, DlError> {
    if candidates.is_empty() {
        return Err(DlError::InvalidArgument("no candidates".into()));
    }
    if data.count(Split::Validation) == 0 {
        return Err(DlError::InvalidArgument(
            "dataset has no VALIDATION rows".into(),
        ));
    }
    let mut reports = Vec::with_capacity(candidates.len());
    for (i, candidate) in candidates.iter().enumerate() {
        let view = match &candidate.input_columns {
            Some(cols) => data.with_input_columns(cols.clone())?,
            None => data.clone(),
        };
        let (network, training) = match &candidate.model {
            CandidateModel::Fixed(net) => (net.clone(), None),
            CandidateModel::Spec(spec) => {
                let seed = strategy.seed.wrapping_add(i as u64);
                let mut net = spec.build(seed)?;
                net.fit_scaling(&view.xy(Split::Train).0)?;
                let s = TrainingStrategy {
                    seed,
                    ..strategy.clone()
                };
                let report = train(&mut net, &view, &s)?;
                (net, Some(report))
            }
        };
        let (xs, ts) = view.xy(Split::Validation);
        let preds = xs
            .iter()
            .map(|x| network.predict(x))
            .collect::<Result<Vec<_>, _>>()?;
        reports.push(CandidateReport {
            training,
            validation_loss: loss_rows(strategy.loss, &preds, &ts)?,
            network,
        });
    }
    let mut best = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.validation_loss < reports[best].validation_loss {
            best = i;
        }
    }
    Ok(Selection { best, reports })
}
