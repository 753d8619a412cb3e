//! 1D P1 operators on the closed obstacle polyline, indexed by loop position.

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh, ObstacleSegment};

use super::sparse::SparseMatrix;

/// Local 2x2 matrix and 2-vector of one curve segment.
pub type CurveLocal = ([[f64; 2]; 2], [f64; 2]);

pub fn segment_mass(len: f64) -> [[f64; 2]; 2] {
    [[len / 3.0, len / 6.0], [len / 6.0, len / 3.0]]
}

pub fn segment_stiffness(len: f64) -> [[f64; 2]; 2] {
    [[1.0 / len, -1.0 / len], [-1.0 / len, 1.0 / len]]
}

/// Assembles a segment kernel over the closed polyline with tag `tag`.
/// Only the obstacle tag is a closed polyline; the outer tags are open.
pub fn assemble_boundary_curve<F>(mesh: &Mesh, tag: BoundaryTag, kernel: F) -> Result<(SparseMatrix, Vec<f64>)>
where
    F: Fn(&ObstacleSegment) -> CurveLocal,
{
    if tag != BoundaryTag::Obstacle {
        return Err(Error::MeshInvariant {
            entity: "boundary",
            index: 0,
            msg: format!("{tag:?} is not a closed polyline"),
        });
    }
    if !mesh.has_obstacle() {
        return Err(Error::NoObstacle);
    }
    let n = mesh.obstacle_loop().len();
    let mut trip = Vec::with_capacity(4 * n);
    let mut vec = vec![0.0; n];
    for seg in mesh.obstacle_segments() {
        let (m, f) = kernel(seg);
        for i in 0..2 {
            vec[seg.ends[i]] += f[i];
            for j in 0..2 {
                trip.push((seg.ends[i], seg.ends[j], m[i][j]));
            }
        }
    }
    Ok((SparseMatrix::from_triplets(n, n, &trip)?, vec))
}

pub fn curve_mass(mesh: &Mesh) -> Result<SparseMatrix> {
    Ok(assemble_boundary_curve(mesh, BoundaryTag::Obstacle, |s| (segment_mass(s.length), [0.0; 2]))?.0)
}

pub fn curve_stiffness(mesh: &Mesh) -> Result<SparseMatrix> {
    Ok(assemble_boundary_curve(mesh, BoundaryTag::Obstacle, |s| (segment_stiffness(s.length), [0.0; 2]))?.0)
}

/// Curve mass plus stiffness, the Laplace-Beltrami operator `I − Δ_Γ`.
pub fn curve_operator(mesh: &Mesh) -> Result<SparseMatrix> {
    Ok(assemble_boundary_curve(mesh, BoundaryTag::Obstacle, |s| {
        let (m, k) = (segment_mass(s.length), segment_stiffness(s.length));
        ([[m[0][0] + k[0][0], m[0][1] + k[0][1]], [m[1][0] + k[1][0], m[1][1] + k[1][1]]], [0.0; 2])
    })?
    .0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures;

    #[test]
    fn mass_row_sums_are_half_lengths() {
        let m = fixtures::annulus(0.5, 1.0, 16, 1);
        let mass = curve_mass(&m).unwrap();
        let total: f64 = mass.row_sums().iter().sum();
        let len: f64 = m.obstacle_segments().iter().map(|s| s.length).sum();
        assert!((total - len).abs() < 1e-14);
        let k = curve_stiffness(&m).unwrap();
        assert!(k.matvec(&vec![2.5; 16]).iter().all(|v| v.abs() < 1e-13));
        assert!(assemble_boundary_curve(&m, BoundaryTag::Wall, |_| ([[0.0; 2]; 2], [0.0; 2])).is_err());
    }
}
