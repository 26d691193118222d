use std::collections::BTreeSet;

use super::DlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// A sample matrix with disjoint input and target column sets and one split
/// tag per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    columns: usize,
    data: Vec<f64>,
    input_columns: Vec<usize>,
    target_columns: Vec<usize>,
    splits: Vec<Split>,
}

impl DataSet {
    pub fn new(
        columns: usize,
        data: Vec<f64>,
        input_columns: Vec<usize>,
        target_columns: Vec<usize>,
        splits: Vec<Split>,
    ) -> Result<Self, DlError> {
        if columns == 0 || !data.len().is_multiple_of(columns) {
            return Err(DlError::Shape(format!(
                "{} values do not fill rows of {columns} columns",
                data.len()
            )));
        }
        let rows = data.len() / columns;
        if splits.len() != rows {
            return Err(DlError::InvalidArgument(format!(
                "{rows} rows but {} split tags",
                splits.len()
            )));
        }
        check_columns(columns, &input_columns, &target_columns)?;
        Ok(DataSet {
            columns,
            data,
            input_columns,
            target_columns,
            splits,
        })
    }

    /// Rows laid out as inputs followed by targets, all tagged `split`.
    pub fn from_samples(samples: &[(Vec<f64>, Vec<f64>)], split: Split) -> Result<Self, DlError> {
        let (first_x, first_t) = samples
            .first()
            .ok_or_else(|| DlError::InvalidArgument("no samples".into()))?;
        let (ni, nt) = (first_x.len(), first_t.len());
        let mut data = Vec::with_capacity(samples.len() * (ni + nt));
        for (x, t) in samples {
            if x.len() != ni || t.len() != nt {
                return Err(DlError::Shape("samples differ in width".into()));
            }
            data.extend_from_slice(x);
            data.extend_from_slice(t);
        }
        DataSet::new(
            ni + nt,
            data,
            (0..ni).collect(),
            (ni..ni + nt).collect(),
            vec![split; samples.len()],
        )
    }

    /// The four XOR rows, all TRAIN.
    pub fn xor() -> Self {
        let rows = [
            (0.0, 0.0, 0.0),
            (0.0, 1.0, 1.0),
            (1.0, 0.0, 1.0),
            (1.0, 1.0, 0.0),
        ];
        let samples: Vec<_> = rows
            .iter()
            .map(|&(a, b, y)| (vec![a, b], vec![y]))
            .collect();
        DataSet::from_samples(&samples, Split::Train).expect("static rows")
    }

    /// The same rows with a different input column set.
    pub fn with_input_columns(&self, input_columns: Vec<usize>) -> Result<Self, DlError> {
        check_columns(self.columns, &input_columns, &self.target_columns)?;
        Ok(DataSet {
            input_columns,
            ..self.clone()
        })
    }

    pub fn with_splits(mut self, splits: Vec<Split>) -> Result<Self, DlError> {
        if splits.len() != self.rows() {
            return Err(DlError::InvalidArgument(format!(
                "{} rows but {} split tags",
                self.rows(),
                splits.len()
            )));
        }
        self.splits = splits;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.splits.len()
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn input_columns(&self) -> &[usize] {
        &self.input_columns
    }

    pub fn target_columns(&self) -> &[usize] {
        &self.target_columns
    }

    pub fn split(&self, row: usize) -> Split {
        self.splits[row]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.columns..(row + 1) * self.columns]
    }

    pub fn inputs(&self, row: usize) -> Vec<f64> {
        let r = self.row(row);
        self.input_columns.iter().map(|&c| r[c]).collect()
    }

    pub fn targets(&self, row: usize) -> Vec<f64> {
        let r = self.row(row);
        self.target_columns.iter().map(|&c| r[c]).collect()
    }

    /// Indices of rows tagged `split`, ascending.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.rows())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.iter().filter(|s| **s == split).count()
    }

    /// `(inputs, targets)` of every row tagged `split`.
    pub fn xy(&self, split: Split) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        self.indices(split)
            .into_iter()
            .map(|i| (self.inputs(i), self.targets(i)))
            .unzip()
    }
}

fn check_columns(columns: usize, inputs: &[usize], targets: &[usize]) -> Result<(), DlError> {
    if inputs.is_empty() || targets.is_empty() {
        return Err(DlError::InvalidArgument(
            "input and target columns must be non-empty".into(),
        ));
    }
    if let Some(c) = inputs.iter().chain(targets).find(|&&c| c >= columns) {
        return Err(DlError::InvalidArgument(format!(
            "column {c} out of range ({columns} columns)"
        )));
    }
    let ins: BTreeSet<_> = inputs.iter().collect();
    if ins.len() != inputs.len() || targets.iter().collect::<BTreeSet<_>>().len() != targets.len() {
        return Err(DlError::InvalidArgument("duplicate column index".into()));
    }
    if let Some(c) = targets.iter().find(|c| ins.contains(c)) {
        return Err(DlError::InvalidArgument(format!(
            "column {c} is both an input and a target"
        )));
    }
    Ok(())
}
