//! Per-element algebra of `F = id + w` and the determinant penalty
//! `β/2 ∫ ((η_det − det DF)₊)²`.

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::fem::{p1_gradients, ElementGeometry, SparseMatrix};
use crate::mesh::Mesh;
use crate::scalar::{det2, inv2, Dual, Mat2, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementTransform {
    pub df: Mat2<f64>,
    pub det: f64,
    /// Not finite when `det == 0`.
    pub dfinv: Mat2<f64>,
}

fn grad_w<R: Real>(grads: &[[f64; 2]; 3], w: &[[R; 2]; 3]) -> Mat2<R> {
    let mut dw = [[R::zero(); 2]; 2];
    for a in 0..3 {
        for i in 0..2 {
            for j in 0..2 {
                dw[i][j] += w[a][i] * grads[a][j];
            }
        }
    }
    dw
}

fn det_of<R: Real>(grads: &[[f64; 2]; 3], w: &[[R; 2]; 3]) -> R {
    let dw = grad_w(grads, w);
    det2(&[[dw[0][0] + 1.0, dw[0][1]], [dw[1][0], dw[1][1] + 1.0]])
}

pub fn element_transform(mesh: &Mesh, w: &[[f64; 2]], t: usize) -> Result<ElementTransform> {
    if t >= mesh.num_triangles() {
        return Err(Error::IndexOutOfRange {
            index: t,
            len: mesh.num_triangles(),
        });
    }
    if w.len() != mesh.num_vertices() {
        return Err(Error::LengthMismatch {
            what: "displacement",
            expected: mesh.num_vertices(),
            got: w.len(),
        });
    }
    let grads = p1_gradients(mesh.triangle_points(t)).map_err(|_| Error::Degenerate {
        entity: "triangle",
        index: t,
    })?;
    let tri = mesh.triangles()[t];
    let dw = grad_w(&grads, &tri.map(|v| w[v]));
    let df = [[dw[0][0] + 1.0, dw[0][1]], [dw[1][0], dw[1][1] + 1.0]];
    let det = det2(&df);
    Ok(ElementTransform {
        df,
        det,
        dfinv: inv2(&df, det),
    })
}

/// `det DF` on every element of the mesh.
pub fn element_dets(domain: &Domain, w: &[[f64; 2]]) -> Vec<f64> {
    domain
        .geometry
        .iter()
        .map(|g| det_of(&g.grads, &g.vertices.map(|v| w[v])))
        .collect()
}

/// Smallest `det DF` over the cells of the deformation domain.
pub fn min_det(domain: &Domain, w: &[[f64; 2]]) -> f64 {
    element_dets(domain, w)
        .into_iter()
        .zip(&domain.deform_cell)
        .filter(|(_, &d)| d)
        .map(|(j, _)| j)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyParams {
    pub eta_det: f64,
    pub beta: f64,
}

fn element_penalty<R: Real>(g: &ElementGeometry, w: &[[R; 2]; 3], p: &PenaltyParams) -> R {
    let gap = (-det_of(&g.grads, w) + p.eta_det).pos();
    gap * gap * (0.5 * p.beta * g.area)
}

/// Penalty value over the cells of the deformation domain.
pub fn det_penalty(domain: &Domain, w: &[[f64; 2]], p: &PenaltyParams) -> f64 {
    domain
        .geometry
        .iter()
        .zip(&domain.deform_cell)
        .filter(|(_, &d)| d)
        .map(|(g, _)| element_penalty(g, &g.vertices.map(|v| w[v]), p))
        .sum()
}

fn seeded(w: &[[f64; 2]; 3]) -> [[Dual<6>; 2]; 3] {
    std::array::from_fn(|a| std::array::from_fn(|k| Dual::variable(w[a][k], 2 * a + k)))
}

/// Element gradient `∂P/∂w_{a,k} = −β |T| (η − J)₊ J (DF⁻ᵀ ∇φ_a)_k`, with
/// `J·DF⁻ᵀ` formed as the cofactor matrix.
fn element_penalty_gradient<R: Real>(g: &ElementGeometry, w: &[[R; 2]; 3], p: &PenaltyParams) -> [[R; 2]; 3] {
    let dw = grad_w(&g.grads, w);
    let df = [[dw[0][0] + 1.0, dw[0][1]], [dw[1][0], dw[1][1] + 1.0]];
    let jac = det2(&df);
    let gap = (-jac + p.eta_det).pos() * (p.beta * g.area);
    let cof = [[df[1][1], -df[1][0]], [-df[0][1], df[0][0]]];
    std::array::from_fn(|a| {
        let ga = g.grads[a];
        std::array::from_fn(|k| -gap * (cof[k][0] * ga[0] + cof[k][1] * ga[1]))
    })
}

/// Gradient of [`det_penalty`] as a nodal field.
pub fn det_penalty_gradient(domain: &Domain, w: &[[f64; 2]], p: &PenaltyParams) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; domain.num_vertices()];
    for (g, _) in domain.geometry.iter().zip(&domain.deform_cell).filter(|(_, &d)| d) {
        let gr = element_penalty_gradient(g, &g.vertices.map(|v| w[v]), p);
        for a in 0..3 {
            for k in 0..2 {
                out[g.vertices[a]][k] += gr[a][k];
            }
        }
    }
    out
}

/// An element of the generalized Hessian of [`det_penalty`] (active set
/// `η_det > det DF`, ties inactive), on the interleaved `w` layout.
pub fn det_penalty_hessian(domain: &Domain, w: &[[f64; 2]], p: &PenaltyParams) -> Result<SparseMatrix> {
    let n = 2 * domain.num_vertices();
    let mut trip = Vec::new();
    for (g, _) in domain.geometry.iter().zip(&domain.deform_cell).filter(|(_, &d)| d) {
        let wl = g.vertices.map(|v| w[v]);
        let gr = element_penalty_gradient(g, &seeded(&wl), p);
        for a in 0..3 {
            for k in 0..2 {
                let row = 2 * g.vertices[a] + k;
                for b in 0..3 {
                    for l in 0..2 {
                        trip.push((row, 2 * g.vertices[b] + l, gr[a][k].eps[2 * b + l]));
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &trip)
}

pub fn det_penalty_hessian_action(
    domain: &Domain,
    w: &[[f64; 2]],
    direction: &[[f64; 2]],
    p: &PenaltyParams,
) -> Result<Vec<[f64; 2]>> {
    let h = det_penalty_hessian(domain, w, p)?;
    let flat: Vec<f64> = direction.iter().flatten().copied().collect();
    Ok(h.matvec(&flat).chunks(2).map(|c| [c[0], c[1]]).collect())
}
