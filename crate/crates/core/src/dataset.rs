use crate::error::{Error, Result};

/// A dense `N x d` matrix of finite reals, stored row-major, with optional
/// binary labels (`1` = anomaly).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(values: Vec<f64>, n_cols: usize) -> Result<Self> {
        if n_cols == 0 {
            return Err(Error::InvalidDataset("dataset needs at least one feature".into()));
        }
        if values.is_empty() {
            return Err(Error::InvalidDataset("dataset needs at least one row".into()));
        }
        if values.len() % n_cols != 0 {
            return Err(Error::InvalidDataset(format!(
                "{} values do not fill rows of width {n_cols}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row: pos / n_cols, col: pos % n_cols });
        }
        let n_rows = values.len() / n_cols;
        Ok(Self { values, n_rows, n_cols, labels: None })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(Error::RaggedRows { row: i, expected: n_cols, found: row.len() });
            }
            values.extend_from_slice(row);
        }
        Self::new(values, n_cols)
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.n_rows {
            return Err(Error::LengthMismatch { left: self.n_rows, right: labels.len() });
        }
        if let Some(row) = labels.iter().position(|&l| l > 1) {
            return Err(Error::LabelNotBinary { row, value: f64::from(labels[row]) });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Copies the selected rows into a new row-major buffer.
    pub fn gather_rows(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            out.extend_from_slice(self.row(i));
        }
        out
    }
}
