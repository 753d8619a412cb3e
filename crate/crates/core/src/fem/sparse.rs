//! Compressed sparse row matrices with a shareable sparsity pattern.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, PartialEq, Eq)]
pub struct Pattern {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl Pattern {
    /// Builds a pattern from unsorted, possibly repeated column lists.
    pub fn from_rows(ncols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        Pattern {
            nrows,
            ncols,
            row_ptr,
            col_idx,
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn find(&self, r: usize, c: usize) -> Option<usize> {
        let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[s..e].binary_search(&c).ok().map(|k| s + k)
    }
}

#[derive(Clone, Debug)]
pub struct SparseMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    /// Sums duplicate entries.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); nrows];
        for &(r, c, _) in triplets {
            if r >= nrows {
                return Err(Error::IndexOutOfRange { index: r, len: nrows });
            }
            if c >= ncols {
                return Err(Error::IndexOutOfRange { index: c, len: ncols });
            }
            rows[r].push(c);
        }
        let mut m = Self::zeros(Arc::new(Pattern::from_rows(ncols, rows)));
        for &(r, c, v) in triplets {
            m.add(r, c, v)?;
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let p = Pattern {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
        };
        Self {
            pattern: Arc::new(p),
            values: vec![1.0; n],
        }
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `(col, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.pattern.row_ptr[r], self.pattern.row_ptr[r + 1]);
        self.pattern.col_idx[s..e]
            .iter()
            .copied()
            .zip(self.values[s..e].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pattern.find(r, c).map_or(0.0, |k| self.values[k])
    }

    /// Adds to an entry that must be part of the pattern.
    pub fn add(&mut self, r: usize, c: usize, v: f64) -> Result<()> {
        if r >= self.nrows() {
            return Err(Error::IndexOutOfRange {
                index: r,
                len: self.nrows(),
            });
        }
        match self.pattern.find(r, c) {
            Some(k) => {
                self.values[k] += v;
                Ok(())
            }
            None => Err(Error::IndexOutOfRange {
                index: c,
                len: self.ncols(),
            }),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        (0..self.nrows())
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `Aᵀ x`
    pub fn tmatvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows());
        let mut y = vec![0.0; self.ncols()];
        for (r, &xr) in x.iter().enumerate() {
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        let (m, n) = (self.nrows(), self.ncols());
        let mut count = vec![0usize; n + 1];
        for &c in &self.pattern.col_idx {
            count[c + 1] += 1;
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let row_ptr = count.clone();
        let mut next = count;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..m {
            for (c, v) in self.row(r) {
                let k = next[c];
                col_idx[k] = r;
                values[k] = v;
                next[c] += 1;
            }
        }
        SparseMatrix {
            pattern: Arc::new(Pattern {
                nrows: n,
                ncols: m,
                row_ptr,
                col_idx,
            }),
            values,
        }
    }

    /// Submatrix with the given rows; `col_map[c]` gives the new column of
    /// old column `c` (dropped when `None`).
    pub fn extract(&self, rows: &[usize], col_map: &[Option<usize>], ncols: usize) -> SparseMatrix {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut entries: Vec<(usize, f64)> = Vec::new();
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &r in rows {
            entries.clear();
            entries.extend(self.row(r).filter_map(|(c, v)| col_map[c].map(|nc| (nc, v))));
            entries.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &entries {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix {
            pattern: Arc::new(Pattern {
                nrows: rows.len(),
                ncols,
                row_ptr,
                col_idx,
            }),
            values,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        d
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows()).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }
}

/// Imposes `x[dofs[i]] = values[i]` by symmetric elimination: constrained
/// columns are moved to the right-hand side, constrained rows and columns
/// become identity. Listing a dof twice with the same value is allowed.
pub fn apply_dirichlet(a: &mut SparseMatrix, rhs: &mut [f64], dofs: &[usize], values: &[f64]) -> Result<()> {
    if dofs.len() != values.len() {
        return Err(Error::LengthMismatch {
            what: "Dirichlet values",
            expected: dofs.len(),
            got: values.len(),
        });
    }
    let n = a.nrows();
    if rhs.len() != n {
        return Err(Error::LengthMismatch {
            what: "right-hand side",
            expected: n,
            got: rhs.len(),
        });
    }
    let mut fixed: Vec<Option<f64>> = vec![None; a.ncols().max(n)];
    for (&d, &g) in dofs.iter().zip(values) {
        if d >= n || d >= a.ncols() {
            return Err(Error::IndexOutOfRange { index: d, len: n });
        }
        match fixed[d] {
            Some(prev) if prev != g => {
                return Err(Error::ConflictingConstraint {
                    dof: d,
                    first: prev,
                    second: g,
                })
            }
            _ => fixed[d] = Some(g),
        }
    }
    if dofs.is_empty() {
        return Ok(());
    }
    let pattern = a.pattern.clone();
    for r in 0..n {
        let (s, e) = (pattern.row_ptr[r], pattern.row_ptr[r + 1]);
        if let Some(g) = fixed[r] {
            for k in s..e {
                a.values[k] = if pattern.col_idx[k] == r { 1.0 } else { 0.0 };
            }
            rhs[r] = g;
            if pattern.find(r, r).is_none() {
                return Err(Error::Singular(format!("constrained dof {r} has no diagonal entry")));
            }
        } else {
            for k in s..e {
                if let Some(g) = fixed[pattern.col_idx[k]] {
                    rhs[r] -= a.values[k] * g;
                    a.values[k] = 0.0;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_and_transpose() {
        let m = SparseMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (1, 0, 2.0), (0, 2, 0.5)]).unwrap();
        assert_eq!(m.get(0, 2), 1.5);
        let t = m.transpose();
        assert_eq!(t.get(2, 0), 1.5);
        assert_eq!(t.get(0, 1), 2.0);
        assert_eq!(m.matvec(&[1.0, 1.0, 2.0]), vec![3.0, 2.0]);
        assert_eq!(m.tmatvec(&[1.0, 1.0]), t.matvec(&[1.0, 1.0]));
    }

    #[test]
    fn conflicting_constraints() {
        let mut m = SparseMatrix::identity(2);
        let mut rhs = vec![0.0; 2];
        let err = apply_dirichlet(&mut m, &mut rhs, &[1, 1], &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::ConflictingConstraint { dof: 1, .. }));
        apply_dirichlet(&mut m, &mut rhs, &[1, 1], &[3.0, 3.0]).unwrap();
        assert_eq!(rhs, vec![0.0, 3.0]);
    }
}
