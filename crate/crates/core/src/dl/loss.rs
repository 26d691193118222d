use super::{DlError, Tensor};

/// Predictions are clamped to this floor before taking a logarithm.
pub const CROSS_ENTROPY_FLOOR: f64 = 1e-12;

const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossIndex {
    /// Mean over every element of the squared error.
    MeanSquaredError,
    /// Mean over samples of `-sum(target * ln(predicted))`.
    CrossEntropy,
}

impl LossIndex {
    pub fn name(self) -> &'static str {
        match self {
            LossIndex::MeanSquaredError => "mse",
            LossIndex::CrossEntropy => "cross_entropy",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "mse" => Some(LossIndex::MeanSquaredError),
            "cross_entropy" => Some(LossIndex::CrossEntropy),
            _ => None,
        }
    }
}

/// Loss of `predicted` against `target`. Rank-1 tensors are one sample;
/// otherwise the leading axis indexes samples.
pub fn loss(index: LossIndex, predicted: &Tensor, target: &Tensor) -> Result<f64, DlError> {
    if predicted.shape() != target.shape() {
        return Err(DlError::Shape(format!(
            "predicted shape {:?} differs from target shape {:?}",
            predicted.shape(),
            target.shape()
        )));
    }
    loss_rows(index, &predicted.rows(), &target.rows())
}

pub(crate) fn loss_rows(
    index: LossIndex,
    predicted: &[Vec<f64>],
    target: &[Vec<f64>],
) -> Result<f64, DlError> {
    if predicted.len() != target.len() || predicted.is_empty() {
        return Err(DlError::Shape(format!(
            "{} predicted rows against {} target rows",
            predicted.len(),
            target.len()
        )));
    }
    let mut total = 0.0;
    let mut elements = 0usize;
    for (p, t) in predicted.iter().zip(target) {
        if p.len() != t.len() {
            return Err(DlError::Shape(format!(
                "row width {} against {}",
                p.len(),
                t.len()
            )));
        }
        match index {
            LossIndex::MeanSquaredError => {
                total += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                elements += p.len();
            }
            LossIndex::CrossEntropy => {
                check_probabilities(p)?;
                total -= p
                    .iter()
                    .zip(t)
                    .map(|(a, b)| b * a.max(CROSS_ENTROPY_FLOOR).ln())
                    .sum::<f64>();
                elements += 1;
            }
        }
    }
    Ok(total / elements as f64)
}

/// Gradient of the batch loss with respect to one prediction row, where the
/// batch holds `batch` rows.
pub(crate) fn loss_gradient(
    index: LossIndex,
    predicted: &[f64],
    target: &[f64],
    batch: usize,
) -> Vec<f64> {
    match index {
        LossIndex::MeanSquaredError => {
            let scale = 2.0 / (batch * predicted.len()) as f64;
            predicted
                .iter()
                .zip(target)
                .map(|(p, t)| scale * (p - t))
                .collect()
        }
        LossIndex::CrossEntropy => predicted
            .iter()
            .zip(target)
            .map(|(p, t)| {
                if *p > CROSS_ENTROPY_FLOOR {
                    -t / (p * batch as f64)
                } else {
                    0.0
                }
            })
            .collect(),
    }
}

pub(crate) fn check_probabilities(row: &[f64]) -> Result<(), DlError> {
    if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(DlError::InvalidArgument(
            "cross-entropy needs predictions in [0, 1]".into(),
        ));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(DlError::InvalidArgument(format!(
            "cross-entropy needs prediction rows summing to 1, got {sum}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn mse_examples() {
        let y = t(&[&[0.3, -1.0], &[2.0, 4.0]]);
        assert_eq!(loss(LossIndex::MeanSquaredError, &y, &y).unwrap(), 0.0);
        let p = Tensor::vector(vec![1.0, 0.0]);
        let z = Tensor::vector(vec![0.0, 0.0]);
        assert_eq!(loss(LossIndex::MeanSquaredError, &p, &z).unwrap(), 0.5);
    }

    #[test]
    fn cross_entropy_of_exact_match_is_near_zero() {
        let y = t(&[&[0.0, 1.0, 0.0]]);
        assert!(loss(LossIndex::CrossEntropy, &y, &y).unwrap() <= 1e-11);
    }

    #[test]
    fn cross_entropy_is_mean_over_samples() {
        let p = t(&[&[0.5, 0.5], &[0.25, 0.75]]);
        let y = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let want = -(0.5f64.ln() + 0.75f64.ln()) / 2.0;
        assert!((loss(LossIndex::CrossEntropy, &p, &y).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_rejects_non_distributions() {
        let p = Tensor::vector(vec![0.6, 0.6]);
        let y = Tensor::vector(vec![1.0, 0.0]);
        assert!(matches!(
            loss(LossIndex::CrossEntropy, &p, &y),
            Err(DlError::InvalidArgument(_))
        ));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = Tensor::vector(vec![1.0, 0.0]);
        let y = Tensor::vector(vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            loss(LossIndex::MeanSquaredError, &p, &y),
            Err(DlError::Shape(_))
        ));
    }
}
