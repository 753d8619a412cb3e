use super::Mesh;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NormalAveraging {
    #[default]
    Unweighted,
    LengthWeighted,
}

/// Unit normals on the obstacle vertices, indexed like
/// [`Mesh::obstacle_loop`], pointing out of the fluid.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryNormalField {
    pub normals: Vec<[f64; 2]>,
}

pub fn boundary_normals(mesh: &Mesh, averaging: NormalAveraging) -> Result<BoundaryNormalField> {
    if !mesh.has_obstacle() {
        return Err(Error::NoObstacle);
    }
    let n = mesh.obstacle_loop().len();
    let mut acc = vec![[0.0; 2]; n];
    for seg in mesh.obstacle_segments() {
        let w = match averaging {
            NormalAveraging::Unweighted => 1.0,
            NormalAveraging::LengthWeighted => seg.length,
        };
        for &e in &seg.ends {
            acc[e][0] += w * seg.normal[0];
            acc[e][1] += w * seg.normal[1];
        }
    }
    let mut normals = Vec::with_capacity(n);
    for (i, a) in acc.into_iter().enumerate() {
        let len = a[0].hypot(a[1]);
        // a cusp where the two segments fold back onto each other
        if len < 1e-14 {
            return Err(Error::Degenerate {
                entity: "obstacle vertex",
                index: mesh.obstacle_loop()[i],
            });
        }
        normals.push([a[0] / len, a[1] / len]);
    }
    Ok(BoundaryNormalField { normals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures;

    #[test]
    fn circle_normals_point_to_center() {
        let m = fixtures::annulus(0.5, 1.0, 64, 2);
        let nf = boundary_normals(&m, NormalAveraging::Unweighted).unwrap();
        for (i, &v) in m.obstacle_loop().iter().enumerate() {
            let x = m.vertices()[v];
            let r = x[0].hypot(x[1]);
            let n = nf.normals[i];
            assert!((n[0] + x[0] / r).abs() < 1e-3 && (n[1] + x[1] / r).abs() < 1e-3);
            assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-12);
        }
    }
}
