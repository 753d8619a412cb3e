use crate::error::{Error, Result};
use crate::mesh::{signed_area, Mesh, Point};
use crate::par::{map_indexed, Execution};

/// Gradients of the three hat functions on a triangle.
pub fn p1_gradients(tri: [Point; 3]) -> Result<[[f64; 2]; 3]> {
    let [a, b, c] = tri;
    let area = signed_area(a, b, c);
    if area == 0.0 || !area.is_finite() {
        return Err(Error::Degenerate {
            entity: "triangle",
            index: 0,
        });
    }
    let s = 1.0 / (2.0 * area);
    Ok([
        [(b[1] - c[1]) * s, (c[0] - b[0]) * s],
        [(c[1] - a[1]) * s, (a[0] - c[0]) * s],
        [(a[1] - b[1]) * s, (b[0] - a[0]) * s],
    ])
}

/// Reference-element data reused by every kernel.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub vertices: [usize; 3],
    pub points: [Point; 3],
    pub area: f64,
    pub grads: [[f64; 2]; 3],
    /// Longest edge.
    pub h: f64,
    pub centroid: Point,
}

impl ElementGeometry {
    pub fn new(mesh: &Mesh, t: usize) -> Result<Self> {
        let vertices = mesh.triangles()[t];
        let points = mesh.triangle_points(t);
        let area = mesh.triangle_area(t);
        let grads = p1_gradients(points).map_err(|_| Error::Degenerate {
            entity: "triangle",
            index: t,
        })?;
        let mut h: f64 = 0.0;
        for k in 0..3 {
            let (p, q) = (points[k], points[(k + 1) % 3]);
            h = h.max((q[0] - p[0]).hypot(q[1] - p[1]));
        }
        let centroid = [
            (points[0][0] + points[1][0] + points[2][0]) / 3.0,
            (points[0][1] + points[1][1] + points[2][1]) / 3.0,
        ];
        Ok(Self {
            vertices,
            points,
            area,
            grads,
            h,
            centroid,
        })
    }
}

pub fn element_geometry(mesh: &Mesh, exec: Execution) -> Result<Vec<ElementGeometry>> {
    map_indexed(exec, mesh.num_triangles(), |t| ElementGeometry::new(mesh, t))
        .into_iter()
        .collect()
}
