//! Sparse direct solves (faer's supernodal LU with partial pivoting).
//!
//! Rows or columns with a large share of nonzeros (the scalar constraint
//! multipliers couple to every displacement dof) are split off and handled
//! by a small dense Schur complement: left in the sparse matrix, they make
//! the `AᵀA` structure used by the symbolic LU dense and the factorization
//! cubic.

use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::sparse::linalg::colamd;
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuSymbolicParams, NumericLu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{get_global_parallelism, Conj, Mat, MatMut};

use super::sparse::{Pattern, SparseMatrix};
use crate::error::{Error, Result};

// COLAMD's default sets rows aside as dense above 0.5·√n entries, which
// catches ordinary rows of the coupled systems (dozens of entries per row).
const COLAMD_DENSE: f64 = 10.0;
const DENSE_MIN: usize = 256;

fn dense_indices(p: &Pattern) -> Vec<usize> {
    let n = p.nrows;
    let limit = DENSE_MIN.max(n / 20);
    let mut col_counts = vec![0usize; p.ncols];
    for &c in &p.col_idx {
        col_counts[c] += 1;
    }
    (0..n)
        .filter(|&i| p.row_ptr[i + 1] - p.row_ptr[i] > limit || col_counts[i] > limit)
        .collect()
}

struct Structure {
    pattern: Arc<Pattern>,
    dense: Vec<usize>,
    /// Position of each index in the sparse part, `None` for dense ones.
    sparse_pos: Vec<Option<usize>>,
    sparse_rows: Vec<usize>,
    symbolic: Option<(Arc<Pattern>, Arc<SymbolicLu<usize>>)>,
}

/// LU solver that keeps the symbolic factorization while the sparsity
/// pattern stays the same (Newton loops reassemble on a fixed pattern).
#[derive(Default)]
pub struct LuSolver {
    structure: Option<Structure>,
    context: &'static str,
}

impl LuSolver {
    pub fn new(context: &'static str) -> Self {
        Self {
            structure: None,
            context,
        }
    }

    fn singular(&self, msg: String) -> Error {
        Error::Singular(format!("{}: {msg}", self.context))
    }

    pub fn solve(&mut self, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n {
            return Err(Error::LengthMismatch {
                what: "linear system",
                expected: n,
                got: if a.ncols() != n { a.ncols() } else { b.len() },
            });
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let p = a.pattern();
        let fresh = match &self.structure {
            Some(s) => !(Arc::ptr_eq(&s.pattern, p) || *s.pattern == **p),
            None => true,
        };
        if fresh {
            let dense = dense_indices(p);
            let mut sparse_pos = vec![None; n];
            let mut sparse_rows = Vec::with_capacity(n - dense.len());
            for i in 0..n {
                if dense.binary_search(&i).is_err() {
                    sparse_pos[i] = Some(sparse_rows.len());
                    sparse_rows.push(i);
                }
            }
            if !dense.is_empty() {
                log::debug!("{}: {} dense rows split off", self.context, dense.len());
            }
            self.structure = Some(Structure {
                pattern: p.clone(),
                dense,
                sparse_pos,
                sparse_rows,
                symbolic: None,
            });
        }
        let context = self.context;
        let st = self.structure.as_mut().expect("set above");
        let fail = |msg: String| Error::Singular(format!("{context}: {msg}"));

        let k = if st.dense.is_empty() {
            a.clone()
        } else {
            a.extract(&st.sparse_rows, &st.sparse_pos, st.sparse_rows.len())
        };
        let nk = k.nrows();
        let kp = k.pattern().clone();
        let symbolic = match &st.symbolic {
            Some((cached, s)) if *cached == kp => s.clone(),
            _ => {
                let sym = SymbolicSparseColMatRef::new_checked(nk, nk, &kp.row_ptr, None, &kp.col_idx);
                let params = LuSymbolicParams {
                    colamd_params: colamd::Control {
                        dense_row: COLAMD_DENSE,
                        dense_col: COLAMD_DENSE,
                        aggressive: true,
                    },
                    ..Default::default()
                };
                let s = Arc::new(factorize_symbolic_lu(sym, params).map_err(|e| fail(format!("{e:?}")))?);
                st.symbolic = Some((kp.clone(), s.clone()));
                s
            }
        };
        // CSR arrays of K read as CSC arrays of Kᵀ
        let sym = SymbolicSparseColMatRef::new_checked(nk, nk, &kp.row_ptr, None, &kp.col_idx);
        let kt = SparseColMatRef::new(sym, k.values());
        let par = get_global_parallelism();
        let mut numeric = NumericLu::new();
        let mut mem = MemBuffer::try_new(
            symbolic
                .factorize_numeric_lu_scratch::<f64>(par, Default::default())
                .or(symbolic.solve_transpose_in_place_scratch::<f64>(1, par)),
        )
        .map_err(|_| fail("out of memory".into()))?;
        let lu = symbolic
            .factorize_numeric_lu(&mut numeric, kt, par, MemStack::new(&mut mem), Default::default())
            .map_err(|e| fail(format!("{e:?}")))?;
        let mut ksolve = |x: &mut [f64]| {
            lu.solve_transpose_in_place_with_conj(
                Conj::No,
                MatMut::from_column_major_slice_mut(x, nk, 1),
                par,
                MemStack::new(&mut mem),
            )
        };

        // bordering: A = [K U; V D] over (sparse, dense) indices
        let s = st.dense.len();
        let mut ku: Vec<Vec<f64>> = Vec::with_capacity(s);
        let mut v = vec![vec![0.0; nk]; s];
        let mut d = Mat::<f64>::zeros(s, s);
        if s > 0 {
            let dense_pos = |i: usize| st.dense.binary_search(&i).ok();
            let mut u = vec![vec![0.0; nk]; s];
            for (ri, &r) in st.sparse_rows.iter().enumerate() {
                for (c, val) in a.row(r) {
                    if let Some(j) = dense_pos(c) {
                        u[j][ri] = val;
                    }
                }
            }
            for (j, &r) in st.dense.iter().enumerate() {
                for (c, val) in a.row(r) {
                    match st.sparse_pos[c] {
                        Some(ci) => v[j][ci] = val,
                        None => d[(j, dense_pos(c).expect("dense column"))] = val,
                    }
                }
            }
            for mut col in u {
                ksolve(&mut col);
                ku.push(col);
            }
            for i in 0..s {
                for j in 0..s {
                    let vku: f64 = v[i].iter().zip(&ku[j]).map(|(a, b)| a * b).sum();
                    d[(i, j)] -= vku;
                }
            }
        }
        let schur: Option<PartialPivLu<f64>> = (s > 0).then(|| d.partial_piv_lu());
        let sparse_rows = &st.sparse_rows;
        let dense = &st.dense;
        let mut apply = |rhs: &[f64]| -> Vec<f64> {
            let mut z: Vec<f64> = sparse_rows.iter().map(|&i| rhs[i]).collect();
            ksolve(&mut z);
            let mut out = vec![0.0; n];
            if let Some(schur) = &schur {
                let mut r2 = Mat::<f64>::from_fn(s, 1, |j, _| {
                    rhs[dense[j]] - v[j].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()
                });
                schur.solve_in_place(r2.as_mut());
                for j in 0..s {
                    out[dense[j]] = r2[(j, 0)];
                    for (zi, kuj) in z.iter_mut().zip(&ku[j]) {
                        *zi -= kuj * r2[(j, 0)];
                    }
                }
            }
            for (zi, &i) in z.iter().zip(sparse_rows) {
                out[i] = *zi;
            }
            out
        };

        let mut x = apply(b);
        // one step of iterative refinement
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
        for (xi, ri) in x.iter_mut().zip(apply(&r)) {
            *xi += ri;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(self.singular("non-finite solution".into()));
        }
        Ok(x)
    }
}

pub fn solve_sparse(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    LuSolver::new("linear solve").solve(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_border_is_split_off() {
        // tridiagonal block bordered by a full row and column
        let n = 600;
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.push((i, i, 4.0 + i as f64 * 1e-3));
            if i + 1 < n - 1 {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.5));
            }
            t.push((i, n - 1, 0.5));
            t.push((n - 1, i, 0.25 + (i % 3) as f64));
        }
        let a = SparseMatrix::from_triplets(n, n, &t).unwrap();
        assert_eq!(dense_indices(a.pattern()), vec![n - 1]);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = solve_sparse(&a, &a.matvec(&x)).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-10, "{u} {v}");
        }
    }

    #[test]
    fn small_unsymmetric_system() {
        let a = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 0.0), (0, 1, 2.0), (1, 0, 1.0), (1, 2, 1.0), (2, 2, 4.0), (2, 1, -1.0)],
        )
        .unwrap();
        let x = [1.0, -2.0, 0.5];
        let b = a.matvec(&x);
        let y = solve_sparse(&a, &b).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-14);
        }
    }
}
