//! Coordinate-format sparse matrix with canonical entry order.

use super::LinalgError;

/// Sparse matrix in coordinate form. Entries are kept sorted by
/// `(row, col)` with duplicates summed and exact zeros dropped, so two
/// matrices with the same action compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self, LinalgError> {
        for &(r, c, v) in &entries {
            if r >= rows || c >= cols {
                return Err(LinalgError::BadIndex { row: r, col: c, rows, cols });
            }
            if !v.is_finite() {
                return Err(LinalgError::NonFinite);
            }
        }
        let mut m = Self { rows, cols, entries };
        m.canonicalize();
        Ok(m)
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: Vec::new() }
    }

    /// Dense row-major constructor, mostly for tests and tiny fixtures.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(LinalgError::ShapeMismatch("ragged dense rows"));
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Self::new(nrows, ncols, entries)
    }

    fn canonicalize(&mut self) {
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        for &(r, c, v) in &self.entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|&(_, _, v)| v != 0.0);
        self.entries = merged;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// A·x
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.cols {
            return Err(LinalgError::ShapeMismatch("matvec operand length"));
        }
        let mut y = vec![0.0; self.rows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        Ok(y)
    }

    /// Aᵀ·y
    pub fn matvec_t(&self, y: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if y.len() != self.rows {
            return Err(LinalgError::ShapeMismatch("transposed matvec operand length"));
        }
        let mut x = vec![0.0; self.cols];
        for &(r, c, v) in &self.entries {
            x[c] += v * y[r];
        }
        Ok(x)
    }

    /// Entries regrouped per column: `cols()` lists of `(row, value)`.
    pub fn by_cols(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.cols];
        for &(r, c, v) in &self.entries {
            cols[c].push((r, v));
        }
        cols
    }

    /// New matrix with one extra row appended at the bottom.
    pub fn with_row_appended(&self, row: &[f64]) -> Result<Self, LinalgError> {
        if row.len() != self.cols {
            return Err(LinalgError::ShapeMismatch("appended row length"));
        }
        let mut entries = self.entries.clone();
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                entries.push((self.rows, j, v));
            }
        }
        Self::new(self.rows + 1, self.cols, entries)
    }

    /// New matrix keeping only the listed rows, renumbered in list order.
    pub fn select_rows(&self, keep: &[usize]) -> Result<Self, LinalgError> {
        let mut map = vec![usize::MAX; self.rows];
        for (new, &old) in keep.iter().enumerate() {
            if old >= self.rows {
                return Err(LinalgError::BadIndex {
                    row: old,
                    col: 0,
                    rows: self.rows,
                    cols: self.cols,
                });
            }
            map[old] = new;
        }
        let entries = self
            .entries
            .iter()
            .filter(|&&(r, _, _)| map[r] != usize::MAX)
            .map(|&(r, c, v)| (map[r], c, v))
            .collect();
        Self::new(keep.len(), self.cols, entries)
    }

    /// New matrix with column `j` multiplied by `factors[j]`.
    pub fn scale_cols(&self, factors: &[f64]) -> Result<Self, LinalgError> {
        if factors.len() != self.cols {
            return Err(LinalgError::ShapeMismatch("column scaling length"));
        }
        let entries = self
            .entries
            .iter()
            .map(|&(r, c, v)| (r, c, v * factors[c]))
            .collect();
        Self::new(self.rows, self.cols, entries)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for &(r, c, v) in &self.entries {
            d[r][c] = v;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalizes_duplicates_and_zeros() {
        let m = SparseMatrix::new(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 1, 0.0)]).unwrap();
        assert_eq!(m.entries(), &[(0, 0, 3.0)]);
        assert_eq!(m.nnz(), 1);
    }

    #[test]
    fn rejects_out_of_range_and_non_finite() {
        assert!(matches!(
            SparseMatrix::new(1, 1, vec![(1, 0, 1.0)]),
            Err(LinalgError::BadIndex { .. })
        ));
        assert!(matches!(
            SparseMatrix::new(1, 1, vec![(0, 0, f64::NAN)]),
            Err(LinalgError::NonFinite)
        ));
    }

    #[test]
    fn matvec_roundtrip() {
        let m = SparseMatrix::from_dense(&[vec![1.0, 2.0], vec![0.0, -1.0]]).unwrap();
        assert_eq!(m.matvec(&[1.0, 1.0]).unwrap(), vec![3.0, -1.0]);
        assert_eq!(m.matvec_t(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn select_rows_renumbers() {
        let m = SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 3.0]])
            .unwrap();
        let s = m.select_rows(&[2, 0]).unwrap();
        assert_eq!(s.rows(), 2);
        assert_eq!(s.entries(), &[(0, 0, 3.0), (0, 1, 3.0), (1, 0, 1.0)]);
    }
}
