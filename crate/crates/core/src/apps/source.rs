//! Labelled-sample sources for terminal devices.

use std::path::Path;
use std::sync::Arc;

use crate::des::RandomStream;
use crate::dl::{DataSet, DlError, Split};

/// Where terminals draw their rows from. Cloning shares file-backed rows.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Isotropic Gaussian blobs, one per class, with one-hot targets.
    Gaussians { means: Vec<Vec<f64>>, spread: f64 },
    /// XOR corners plus Gaussian jitter of `noise`, target in `{0, 1}`.
    Xor { noise: f64 },
    /// Fixed rows drawn uniformly with replacement.
    Rows(Arc<Vec<(Vec<f64>, Vec<f64>)>>),
}

impl DataSource {
    /// Class means drawn uniformly from `[-2, 2]` per feature, from the
    /// `dataset` stream of `seed`; every terminal of a run shares them.
    pub fn gaussians(seed: u64, features: usize, classes: usize, spread: f64) -> Self {
        let mut rng = RandomStream::new(seed, "dataset");
        let means = (0..classes)
            .map(|_| (0..features).map(|_| rng.uniform(-2.0, 2.0)).collect())
            .collect();
        DataSource::Gaussians { means, spread }
    }

    /// Rows of `features + targets` comma-separated numbers. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn parse_csv(text: &str, features: usize, targets: usize) -> Result<Self, String> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let values = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| format!("line {}: {e}", n + 1))?;
            if values.len() != features + targets {
                return Err(format!(
                    "line {}: expected {} values, found {}",
                    n + 1,
                    features + targets,
                    values.len()
                ));
            }
            let (x, t) = values.split_at(features);
            rows.push((x.to_vec(), t.to_vec()));
        }
        if rows.is_empty() {
            return Err("no data rows".into());
        }
        Ok(DataSource::Rows(Arc::new(rows)))
    }

    pub fn from_csv_file(path: &Path, features: usize, targets: usize) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        DataSource::parse_csv(&text, features, targets)
            .map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn feature_count(&self) -> usize {
        match self {
            DataSource::Gaussians { means, .. } => means[0].len(),
            DataSource::Xor { .. } => 2,
            DataSource::Rows(rows) => rows[0].0.len(),
        }
    }

    pub fn target_count(&self) -> usize {
        match self {
            DataSource::Gaussians { means, .. } => means.len(),
            DataSource::Xor { .. } => 1,
            DataSource::Rows(rows) => rows[0].1.len(),
        }
    }

    /// Draws one `(features, targets)` row.
    pub fn draw(&self, rng: &mut RandomStream) -> (Vec<f64>, Vec<f64>) {
        match self {
            DataSource::Gaussians { means, spread } => {
                let class = rng.below(means.len() as u64) as usize;
                let x = means[class]
                    .iter()
                    .map(|m| rng.normal(*m, *spread))
                    .collect();
                let t = (0..means.len())
                    .map(|c| if c == class { 1.0 } else { 0.0 })
                    .collect();
                (x, t)
            }
            DataSource::Xor { noise } => {
                let corner = rng.below(4);
                let (a, b) = ((corner >> 1) as f64, (corner & 1) as f64);
                let mut jitter = |v: f64| {
                    if *noise > 0.0 {
                        rng.normal(v, *noise)
                    } else {
                        v
                    }
                };
                let x = vec![jitter(a), jitter(b)];
                (
                    x,
                    vec![if (corner >> 1) != (corner & 1) {
                        1.0
                    } else {
                        0.0
                    }],
                )
            }
            DataSource::Rows(rows) => rows[rng.below(rows.len() as u64) as usize].clone(),
        }
    }

    /// `n` rows tagged TEST, drawn from `rng`.
    pub fn test_set(&self, rng: &mut RandomStream, n: usize) -> Result<DataSet, DlError> {
        let rows: Vec<_> = (0..n).map(|_| self.draw(rng)).collect();
        DataSet::from_samples(&rows, Split::Test)
    }
}
