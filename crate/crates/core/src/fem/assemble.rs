//! Element-loop driver.
//!
//! Kernels run (possibly in parallel) over fixed-size batches of elements;
//! their local blocks are then scattered into the global operator in
//! element order, so the result does not depend on the execution mode.

use std::sync::Arc;

use super::p1::ElementGeometry;
use super::sparse::{Pattern, SparseMatrix};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::par::{map_indexed, Execution};

/// Local row/column index that is dropped on scatter.
pub const SKIP: usize = usize::MAX;

const BATCH: usize = 2048;

/// Local contribution of one element: dense row-major `rows × cols`
/// matrix (empty when no matrix was requested) and a vector over `rows`.
#[derive(Clone, Debug, Default)]
pub struct ElementBlock {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vector: Vec<f64>,
    pub matrix: Vec<f64>,
}

pub trait ElementKernel: Sync {
    fn num_elements(&self) -> usize;

    /// Global row and column indices touched by element `t`.
    fn dofs(&self, t: usize, rows: &mut Vec<usize>, cols: &mut Vec<usize>);

    /// Local block of element `t`; `None` if it contributes nothing.
    fn eval(&self, t: usize, want_matrix: bool) -> Option<ElementBlock>;
}

pub struct Assembled {
    pub matrix: Option<SparseMatrix>,
    pub vector: Vec<f64>,
}

/// Sparsity pattern of a kernel (cache it across Newton iterations).
pub fn kernel_pattern<K: ElementKernel>(kernel: &K, nrows: usize, ncols: usize) -> Result<Arc<Pattern>> {
    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); nrows];
    let (mut r, mut c) = (Vec::new(), Vec::new());
    for t in 0..kernel.num_elements() {
        r.clear();
        c.clear();
        kernel.dofs(t, &mut r, &mut c);
        for &i in r.iter().filter(|&&i| i != SKIP) {
            if i >= nrows {
                return Err(Error::IndexOutOfRange { index: i, len: nrows });
            }
            for &j in c.iter().filter(|&&j| j != SKIP) {
                if j >= ncols {
                    return Err(Error::IndexOutOfRange { index: j, len: ncols });
                }
                rows_of[i].push(j);
            }
        }
        // keep memory bounded on large meshes
        if t % BATCH == BATCH - 1 {
            for row in rows_of.iter_mut() {
                row.sort_unstable();
                row.dedup();
            }
        }
    }
    Ok(Arc::new(Pattern::from_rows(ncols, rows_of)))
}

/// Sums all element blocks. With `want_matrix`, `pattern` (if given) must
/// contain every entry the kernel touches.
pub fn assemble_volume<K: ElementKernel>(
    kernel: &K,
    nrows: usize,
    ncols: usize,
    want_matrix: bool,
    pattern: Option<&Arc<Pattern>>,
    exec: Execution,
) -> Result<Assembled> {
    let mut matrix = if want_matrix {
        let p = match pattern {
            Some(p) => p.clone(),
            None => kernel_pattern(kernel, nrows, ncols)?,
        };
        Some(SparseMatrix::zeros(p))
    } else {
        None
    };
    let mut vector = vec![0.0; nrows];
    let ne = kernel.num_elements();
    let mut start = 0;
    while start < ne {
        let end = (start + BATCH).min(ne);
        let blocks = map_indexed(exec, end - start, |i| kernel.eval(start + i, want_matrix));
        for blk in blocks.into_iter().flatten() {
            let nc = blk.cols.len();
            for (li, &gi) in blk.rows.iter().enumerate() {
                if gi == SKIP {
                    continue;
                }
                if gi >= nrows {
                    return Err(Error::IndexOutOfRange { index: gi, len: nrows });
                }
                if let Some(v) = blk.vector.get(li) {
                    vector[gi] += v;
                }
                if let Some(m) = matrix.as_mut() {
                    if blk.matrix.is_empty() {
                        continue;
                    }
                    for (lj, &gj) in blk.cols.iter().enumerate() {
                        if gj == SKIP {
                            continue;
                        }
                        let v = blk.matrix[li * nc + lj];
                        if v != 0.0 {
                            m.add(gi, gj, v)?;
                        }
                    }
                }
            }
        }
        start = end;
    }
    Ok(Assembled { matrix, vector })
}

/// Scalar P1 bilinear form over a subset of triangles, given as a local
/// 3x3 kernel of the element geometry.
pub struct ScalarKernel<'a, F> {
    pub geometry: &'a [ElementGeometry],
    pub include: Option<&'a [bool]>,
    pub local: F,
}

impl<F> ElementKernel for ScalarKernel<'_, F>
where
    F: Fn(&ElementGeometry) -> [[f64; 3]; 3] + Sync,
{
    fn num_elements(&self) -> usize {
        self.geometry.len()
    }

    fn dofs(&self, t: usize, rows: &mut Vec<usize>, cols: &mut Vec<usize>) {
        if self.include.is_some_and(|m| !m[t]) {
            return;
        }
        rows.extend(self.geometry[t].vertices);
        cols.extend(self.geometry[t].vertices);
    }

    fn eval(&self, t: usize, want_matrix: bool) -> Option<ElementBlock> {
        if self.include.is_some_and(|m| !m[t]) {
            return None;
        }
        let g = &self.geometry[t];
        let k = (self.local)(g);
        Some(ElementBlock {
            rows: g.vertices.to_vec(),
            cols: g.vertices.to_vec(),
            vector: Vec::new(),
            matrix: if want_matrix { k.iter().flatten().copied().collect() } else { Vec::new() },
        })
    }
}

pub fn local_mass(g: &ElementGeometry) -> [[f64; 3]; 3] {
    let mut m = [[g.area / 12.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = g.area / 6.0;
    }
    m
}

pub fn local_stiffness(g: &ElementGeometry) -> [[f64; 3]; 3] {
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = g.area * (g.grads[i][0] * g.grads[j][0] + g.grads[i][1] * g.grads[j][1]);
        }
    }
    k
}

fn scalar_matrix(
    mesh: &Mesh,
    geometry: &[ElementGeometry],
    include: Option<&[bool]>,
    local: fn(&ElementGeometry) -> [[f64; 3]; 3],
) -> Result<SparseMatrix> {
    let n = mesh.num_vertices();
    let k = ScalarKernel { geometry, include, local };
    Ok(assemble_volume(&k, n, n, true, None, Execution::Sequential)?
        .matrix
        .expect("matrix requested"))
}

/// Consistent P1 mass matrix over the triangles flagged in `include` (all
/// when `None`).
pub fn mass_matrix(mesh: &Mesh, geometry: &[ElementGeometry], include: Option<&[bool]>) -> Result<SparseMatrix> {
    scalar_matrix(mesh, geometry, include, local_mass)
}

pub fn stiffness_matrix(mesh: &Mesh, geometry: &[ElementGeometry], include: Option<&[bool]>) -> Result<SparseMatrix> {
    scalar_matrix(mesh, geometry, include, local_stiffness)
}
