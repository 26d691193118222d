use std::fmt;

use super::loss::loss_rows;
use super::{backward, digest, DataSet, DlError, LossIndex, NeuralNetwork, Sgd, Split};
use crate::des::RandomStream;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingStrategy {
    pub loss: LossIndex,
    pub optimizer: Sgd,
    pub max_epochs: usize,
    pub loss_goal: f64,
    /// Seeds the `shuffle` stream.
    pub seed: u64,
}

impl TrainingStrategy {
    pub fn validate(&self) -> Result<(), DlError> {
        let lr = self.optimizer.learning_rate;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(DlError::InvalidArgument(format!(
                "learning rate must be > 0, got {lr}"
            )));
        }
        if self.optimizer.batch_size == 0 {
            return Err(DlError::InvalidArgument("batch size must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(DlError::InvalidArgument("max epochs must be >= 1".into()));
        }
        if self.loss_goal.is_nan() {
            return Err(DlError::InvalidArgument("loss goal is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    LossGoalReached,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::LossGoalReached => "LOSS_GOAL_REACHED",
            StopReason::MaxEpochs => "MAX_EPOCHS",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "LOSS_GOAL_REACHED" => Some(StopReason::LossGoalReached),
            "MAX_EPOCHS" => Some(StopReason::MaxEpochs),
            _ => None,
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    /// Full-TRAIN-split loss after each epoch's updates.
    pub epoch_losses: Vec<f64>,
    pub stop_reason: StopReason,
    pub final_parameters_digest: u64,
}

impl TrainingReport {
    pub fn epochs_run(&self) -> usize {
        self.epoch_losses.len()
    }

    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }
}

/// Shuffled mini-batch SGD over the TRAIN rows. The network is trained from
/// its current parameters.
pub fn train(
    net: &mut NeuralNetwork,
    data: &DataSet,
    strategy: &TrainingStrategy,
) -> Result<TrainingReport, DlError> {
    strategy.validate()?;
    let (xs, ts) = data.xy(Split::Train);
    if xs.is_empty() {
        return Err(DlError::InvalidArgument("dataset has no TRAIN rows".into()));
    }
    if xs[0].len() != net.input_len() || ts[0].len() != net.output_len() {
        return Err(DlError::Shape(format!(
            "dataset has {} inputs and {} targets, network expects {} and {}",
            xs[0].len(),
            ts[0].len(),
            net.input_len(),
            net.output_len()
        )));
    }
    let mut rng = RandomStream::new(strategy.seed, "shuffle");
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut epoch_losses = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut bx = Vec::with_capacity(strategy.optimizer.batch_size);
    let mut bt = Vec::with_capacity(strategy.optimizer.batch_size);
    for _ in 0..strategy.max_epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(strategy.optimizer.batch_size) {
            bx.clear();
            bt.clear();
            bx.extend(batch.iter().map(|&i| xs[i].clone()));
            bt.extend(batch.iter().map(|&i| ts[i].clone()));
            let grads = backward(net, &bx, &bt, strategy.loss)?;
            strategy.optimizer.step(net, &grads)?;
        }
        let preds = xs
            .iter()
            .map(|x| net.predict(x))
            .collect::<Result<Vec<_>, _>>()?;
        let epoch_loss = loss_rows(strategy.loss, &preds, &ts)?;
        epoch_losses.push(epoch_loss);
        if epoch_loss <= strategy.loss_goal {
            stop_reason = StopReason::LossGoalReached;
            break;
        }
    }
    Ok(TrainingReport {
        epoch_losses,
        stop_reason,
        final_parameters_digest: digest(net),
    })
}
