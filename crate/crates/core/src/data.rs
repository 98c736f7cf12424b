use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("batch has no rows")]
    Empty,
    #[error("batch has no columns")]
    NoColumns,
    #[error("buffer of {len} values cannot hold {rows} x {cols}")]
    BadLength { len: usize, rows: usize, cols: usize },
    #[error("row {row} has {got} values, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("column count mismatch: {0} vs {1}")]
    ColumnMismatch(usize, usize),
}

/// A block of samples: rows are realizations, columns are variables.
/// Stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBatch {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DataBatch {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DataError> {
        if rows == 0 {
            return Err(DataError::Empty);
        }
        if cols == 0 {
            return Err(DataError::NoColumns);
        }
        if data.len() != rows * cols {
            return Err(DataError::BadLength { len: data.len(), rows, cols });
        }
        Ok(DataBatch { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, DataError> {
        let first = rows.first().ok_or(DataError::Empty)?.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * first);
        for (k, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != first {
                return Err(DataError::Ragged { row: k, got: r.len(), expected: first });
            }
            data.extend_from_slice(r);
        }
        DataBatch::new(rows.len(), first, data)
    }

    /// Single-column batch.
    pub fn from_column(values: &[f64]) -> Result<Self, DataError> {
        DataBatch::new(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    /// Rows `start..end` as a new batch.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self, DataError> {
        DataBatch::new(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        )
    }

    /// Row-wise concatenation `[self; other]`.
    pub fn vstack(&self, other: &DataBatch) -> Result<Self, DataError> {
        if self.cols != other.cols {
            return Err(DataError::ColumnMismatch(self.cols, other.cols));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        DataBatch::new(self.rows + other.rows, self.cols, data)
    }

    /// Multiplies column `j` by `alpha`.
    pub fn scale_column(&mut self, j: usize, alpha: f64) {
        for i in 0..self.rows {
            self.data[i * self.cols + j] *= alpha;
        }
    }

    /// Column-major copy, `cols` vectors of length `rows`.
    pub(crate) fn transposed(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        for (i, row) in self.data.chunks_exact(self.cols).enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out[j * self.rows + i] = v;
            }
        }
        out
    }
}
