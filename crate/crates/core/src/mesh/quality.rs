use super::{signed_area, Mesh, Point};
use crate::error::{Error, Result};

/// Circumradius over inradius, `R/r = abc·s / (4 A²)`. Two for an
/// equilateral triangle, larger is worse.
pub fn triangle_quality(a: Point, b: Point, c: Point) -> Result<f64> {
    let area = signed_area(a, b, c);
    if area <= 0.0 || !area.is_finite() {
        return Err(Error::InvertedElement { triangle: 0, area });
    }
    let la = (b[0] - c[0]).hypot(b[1] - c[1]);
    let lb = (a[0] - c[0]).hypot(a[1] - c[1]);
    let lc = (a[0] - b[0]).hypot(a[1] - b[1]);
    let s = 0.5 * (la + lb + lc);
    Ok(la * lb * lc * s / (4.0 * area * area))
}

fn check_len(mesh: &Mesh, w: &[[f64; 2]]) -> Result<()> {
    if w.len() != mesh.num_vertices() {
        return Err(Error::LengthMismatch {
            what: "displacement",
            expected: mesh.num_vertices(),
            got: w.len(),
        });
    }
    Ok(())
}

fn moved(mesh: &Mesh, w: &[[f64; 2]]) -> Vec<Point> {
    mesh.vertices()
        .iter()
        .zip(w)
        .map(|(x, d)| [x[0] + d[0], x[1] + d[1]])
        .collect()
}

/// Worst (largest) [`triangle_quality`] over the mesh moved by `id + w`.
pub fn worst_quality(mesh: &Mesh, w: &[[f64; 2]]) -> Result<f64> {
    check_len(mesh, w)?;
    let x = moved(mesh, w);
    let mut worst: f64 = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let q = triangle_quality(x[tri[0]], x[tri[1]], x[tri[2]]).map_err(|e| match e {
            Error::InvertedElement { area, .. } => Error::InvertedElement { triangle: t, area },
            e => e,
        })?;
        worst = worst.max(q);
    }
    Ok(worst)
}

/// Number of triangles with non-positive signed area after moving by `w`.
pub fn inverted_elements(mesh: &Mesh, w: &[[f64; 2]]) -> Result<usize> {
    check_len(mesh, w)?;
    let x = moved(mesh, w);
    Ok(mesh
        .triangles()
        .iter()
        .filter(|tri| {
            let a = signed_area(x[tri[0]], x[tri[1]], x[tri[2]]);
            !(a > 0.0)
        })
        .count())
}

/// Moves every vertex by `w`; connectivity and tags are kept.
pub fn deform_mesh(mesh: &Mesh, w: &[[f64; 2]]) -> Result<Mesh> {
    check_len(mesh, w)?;
    let x = moved(mesh, w);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = signed_area(x[tri[0]], x[tri[1]], x[tri[2]]);
        if area <= 0.0 || !area.is_finite() {
            return Err(Error::InvertedElement { triangle: t, area });
        }
    }
    Ok(mesh.with_vertices(x))
}
