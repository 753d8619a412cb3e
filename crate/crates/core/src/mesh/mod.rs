//! Triangulated reference domain with tagged boundary polylines.

mod msh;
mod normals;
mod quality;
mod vtk;

use std::collections::HashMap;

pub use msh::{load_msh, load_msh_with, parse_msh, PhysicalRole, TagTable};
pub use normals::{boundary_normals, BoundaryNormalField, NormalAveraging};
pub use quality::{deform_mesh, inverted_elements, triangle_quality, worst_quality};
pub use vtk::{read_vtk, write_vtk, NodalField, VtkData};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Inflow,
    Wall,
    Outflow,
    Obstacle,
}

impl BoundaryTag {
    pub fn is_outer(self) -> bool {
        !matches!(self, BoundaryTag::Obstacle)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundarySegment {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Which cells the deformation lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DomainMode {
    /// Extension, penalty and state all live on the fluid cells.
    #[default]
    FluidOnly,
    /// Extension and penalty run over fluid plus obstacle-interior cells;
    /// the state stays on the fluid cells.
    Holdall,
}

/// One segment of the closed obstacle polyline, in loop order.
#[derive(Clone, Copy, Debug)]
pub struct ObstacleSegment {
    /// Positions in [`Mesh::obstacle_loop`].
    pub ends: [usize; 2],
    /// Unit normal pointing out of the fluid domain.
    pub normal: Point,
    pub length: f64,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    segments: Vec<BoundarySegment>,
    obstacle_cell: Vec<bool>,
    has_obstacle_cells: bool,
    obstacle_loop: Vec<usize>,
    obstacle_segments: Vec<ObstacleSegment>,
    obstacle_position: Vec<Option<usize>>,
    flipped: usize,
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Builds a mesh and checks every invariant. Negatively oriented
    /// triangles are flipped; zero-area triangles are rejected.
    ///
    /// `obstacle_cells` lists triangles discretizing the obstacle interior
    /// (holdall meshes); pass an empty slice for a hollow obstacle.
    pub fn new(
        vertices: Vec<Point>,
        mut triangles: Vec<[usize; 3]>,
        segments: Vec<BoundarySegment>,
        obstacle_cells: &[usize],
    ) -> Result<Self> {
        let nv = vertices.len();
        for (i, v) in vertices.iter().enumerate() {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::MeshInvariant {
                    entity: "vertex",
                    index: i,
                    msg: "non-finite coordinate".into(),
                });
            }
        }
        let mut flipped = 0;
        let mut used = vec![false; nv];
        for (t, tri) in triangles.iter_mut().enumerate() {
            for &v in tri.iter() {
                if v >= nv {
                    return Err(Error::MeshInvariant {
                        entity: "triangle",
                        index: t,
                        msg: format!("vertex index {v} out of range"),
                    });
                }
                used[v] = true;
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area == 0.0 || !area.is_finite() {
                return Err(Error::MeshInvariant {
                    entity: "triangle",
                    index: t,
                    msg: "zero area".into(),
                });
            }
            if area < 0.0 {
                tri.swap(1, 2);
                flipped += 1;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::MeshInvariant {
                entity: "vertex",
                index: v,
                msg: "not referenced by any triangle".into(),
            });
        }

        let mut obstacle_cell = vec![false; triangles.len()];
        for &c in obstacle_cells {
            if c >= triangles.len() {
                return Err(Error::MeshInvariant {
                    entity: "obstacle cell",
                    index: c,
                    msg: "triangle index out of range".into(),
                });
            }
            obstacle_cell[c] = true;
        }
        let has_obstacle_cells = !obstacle_cells.is_empty();

        // edge -> adjacent triangles
        let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                edges
                    .entry(edge_key(tri[k], tri[(k + 1) % 3]))
                    .or_default()
                    .push(t);
            }
        }
        for (e, ts) in &edges {
            if ts.len() > 2 {
                return Err(Error::MeshInvariant {
                    entity: "edge",
                    index: e.0,
                    msg: format!("edge ({}, {}) shared by {} triangles", e.0, e.1, ts.len()),
                });
            }
        }

        // every boundary edge and every fluid/obstacle interface edge needs
        // exactly one tagged segment
        let mut claimed: HashMap<(usize, usize), usize> = HashMap::new();
        for (s, seg) in segments.iter().enumerate() {
            let [a, b] = seg.vertices;
            if a >= nv || b >= nv || a == b {
                return Err(Error::MeshInvariant {
                    entity: "segment",
                    index: s,
                    msg: "invalid vertex pair".into(),
                });
            }
            let key = edge_key(a, b);
            let Some(adj) = edges.get(&key) else {
                return Err(Error::MeshInvariant {
                    entity: "segment",
                    index: s,
                    msg: "not an edge of any triangle".into(),
                });
            };
            let is_boundary = adj.len() == 1;
            let is_interface = adj.len() == 2 && obstacle_cell[adj[0]] != obstacle_cell[adj[1]];
            let ok = match seg.tag {
                BoundaryTag::Obstacle => {
                    if has_obstacle_cells {
                        is_interface
                    } else {
                        is_boundary
                    }
                }
                _ => is_boundary,
            };
            if !ok {
                return Err(Error::MeshInvariant {
                    entity: "segment",
                    index: s,
                    msg: format!("{:?} segment is not on the domain boundary", seg.tag),
                });
            }
            if let Some(prev) = claimed.insert(key, s) {
                return Err(Error::MeshInvariant {
                    entity: "segment",
                    index: s,
                    msg: format!("duplicates segment {prev}"),
                });
            }
        }
        for (key, adj) in &edges {
            let is_boundary = adj.len() == 1;
            let is_interface = adj.len() == 2 && obstacle_cell[adj[0]] != obstacle_cell[adj[1]];
            if (is_boundary || is_interface) && !claimed.contains_key(key) {
                return Err(Error::MeshInvariant {
                    entity: "edge",
                    index: key.0,
                    msg: format!("boundary edge ({}, {}) carries no tag", key.0, key.1),
                });
            }
        }

        // obstacle tag must not touch the outer tags
        let mut outer_vertex = vec![false; nv];
        for seg in segments.iter().filter(|s| s.tag.is_outer()) {
            outer_vertex[seg.vertices[0]] = true;
            outer_vertex[seg.vertices[1]] = true;
        }
        let obstacle: Vec<(usize, &BoundarySegment)> = segments
            .iter()
            .enumerate()
            .filter(|(_, s)| s.tag == BoundaryTag::Obstacle)
            .collect();
        for (s, seg) in &obstacle {
            if seg.vertices.iter().any(|&v| outer_vertex[v]) {
                return Err(Error::MeshInvariant {
                    entity: "segment",
                    index: *s,
                    msg: "obstacle boundary touches the outer boundary".into(),
                });
            }
        }
        if has_obstacle_cells && obstacle.is_empty() {
            return Err(Error::MeshInvariant {
                entity: "obstacle cell",
                index: obstacle_cells[0],
                msg: "obstacle cells without an obstacle boundary".into(),
            });
        }

        let (obstacle_loop, loop_segments) = order_loop(&vertices, &obstacle)?;
        let mut obstacle_position = vec![None; nv];
        for (i, &v) in obstacle_loop.iter().enumerate() {
            obstacle_position[v] = Some(i);
        }

        let mut obstacle_segments = Vec::with_capacity(loop_segments.len());
        for (i, &(s, [pa, pb])) in loop_segments.iter().enumerate() {
            let (a, b) = (obstacle_loop[pa], obstacle_loop[pb]);
            let (xa, xb) = (vertices[a], vertices[b]);
            let t = [xb[0] - xa[0], xb[1] - xa[1]];
            let length = (t[0] * t[0] + t[1] * t[1]).sqrt();
            if length == 0.0 {
                return Err(Error::Degenerate {
                    entity: "segment",
                    index: s,
                });
            }
            let mut normal = [t[1] / length, -t[0] / length];
            // the opposite vertex of the adjacent fluid triangle lies inside
            // the fluid, so the outward normal points away from it
            let adj = &edges[&edge_key(a, b)];
            let fluid_tri = adj
                .iter()
                .copied()
                .find(|&t| !obstacle_cell[t])
                .ok_or_else(|| Error::MeshInvariant {
                    entity: "segment",
                    index: s,
                    msg: "obstacle segment has no adjacent fluid triangle".into(),
                })?;
            let c = triangles[fluid_tri]
                .iter()
                .copied()
                .find(|&v| v != a && v != b)
                .expect("triangle has a third vertex");
            let xc = vertices[c];
            if normal[0] * (xc[0] - xa[0]) + normal[1] * (xc[1] - xa[1]) > 0.0 {
                normal = [-normal[0], -normal[1]];
            }
            let _ = i;
            obstacle_segments.push(ObstacleSegment {
                ends: [pa, pb],
                normal,
                length,
            });
        }

        Ok(Mesh {
            vertices,
            triangles,
            segments,
            obstacle_cell,
            has_obstacle_cells,
            obstacle_loop,
            obstacle_segments,
            obstacle_position,
            flipped,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn segments(&self) -> &[BoundarySegment] {
        &self.segments
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Number of triangles whose orientation was repaired on construction.
    pub fn flipped_triangles(&self) -> usize {
        self.flipped
    }

    pub fn has_obstacle(&self) -> bool {
        !self.obstacle_loop.is_empty()
    }

    pub fn has_obstacle_cells(&self) -> bool {
        self.has_obstacle_cells
    }

    pub fn is_obstacle_cell(&self, t: usize) -> bool {
        self.obstacle_cell[t]
    }

    /// Triangle indices of the obstacle interior (empty for hollow meshes).
    pub fn obstacle_cells(&self) -> Vec<usize> {
        (0..self.triangles.len())
            .filter(|&t| self.obstacle_cell[t])
            .collect()
    }

    /// Whether triangle `t` takes part in the deformation in `mode`.
    pub fn in_deformation_domain(&self, t: usize, mode: DomainMode) -> bool {
        match mode {
            DomainMode::FluidOnly => !self.obstacle_cell[t],
            DomainMode::Holdall => true,
        }
    }

    /// Vertices of the closed obstacle polyline in traversal order.
    pub fn obstacle_loop(&self) -> &[usize] {
        &self.obstacle_loop
    }

    pub fn obstacle_segments(&self) -> &[ObstacleSegment] {
        &self.obstacle_segments
    }

    /// Position of vertex `v` in [`Self::obstacle_loop`].
    pub fn obstacle_position(&self, v: usize) -> Option<usize> {
        self.obstacle_position[v]
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    /// Vertices lying on a segment with one of the given tags.
    pub fn tagged_vertices(&self, tags: &[BoundaryTag]) -> Vec<bool> {
        let mut mark = vec![false; self.vertices.len()];
        for seg in self.segments.iter().filter(|s| tags.contains(&s.tag)) {
            mark[seg.vertices[0]] = true;
            mark[seg.vertices[1]] = true;
        }
        mark
    }

    /// Vertices touched by at least one cell of the given domain.
    pub fn vertices_in_domain(&self, mode: DomainMode) -> Vec<bool> {
        let mut mark = vec![false; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            if self.in_deformation_domain(t, mode) {
                for &v in tri {
                    mark[v] = true;
                }
            }
        }
        mark
    }

    /// Vertices of fluid cells.
    pub fn fluid_vertices(&self) -> Vec<bool> {
        self.vertices_in_domain(DomainMode::FluidOnly)
    }

    /// Total area of the fluid cells.
    pub fn fluid_area(&self) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| !self.obstacle_cell[t])
            .map(|t| self.triangle_area(t))
            .sum()
    }

    /// Signed-area-corrected area enclosed by the obstacle polyline.
    pub fn obstacle_polygon_area(&self) -> f64 {
        let (area, _) = self.obstacle_polygon_moments();
        area
    }

    /// `(area, ∫ x dx)` of the polygon enclosed by the obstacle polyline.
    pub fn obstacle_polygon_moments(&self) -> (f64, Point) {
        let n = self.obstacle_loop.len();
        if n == 0 {
            return (0.0, [0.0, 0.0]);
        }
        let mut area = 0.0;
        let mut mx = 0.0;
        let mut my = 0.0;
        for i in 0..n {
            let p = self.vertices[self.obstacle_loop[i]];
            let q = self.vertices[self.obstacle_loop[(i + 1) % n]];
            let cross = p[0] * q[1] - q[0] * p[1];
            area += 0.5 * cross;
            mx += (p[0] + q[0]) * cross / 6.0;
            my += (p[1] + q[1]) * cross / 6.0;
        }
        let s = area.signum();
        (area * s, [mx * s, my * s])
    }

    /// First moment `∫_G x dx` of the holdall (fluid cells, obstacle cells
    /// and, for hollow meshes, the polygon enclosed by the obstacle).
    pub fn holdall_moment(&self) -> Point {
        let mut m = [0.0, 0.0];
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_points(t);
            let area = signed_area(a, b, c);
            m[0] += area * (a[0] + b[0] + c[0]) / 3.0;
            m[1] += area * (a[1] + b[1] + c[1]) / 3.0;
        }
        if !self.has_obstacle_cells {
            let (_, mo) = self.obstacle_polygon_moments();
            m[0] += mo[0];
            m[1] += mo[1];
        }
        m
    }

    /// Area of the holdall.
    pub fn holdall_area(&self) -> f64 {
        let cells: f64 = (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .sum();
        if self.has_obstacle_cells {
            cells
        } else {
            cells + self.obstacle_polygon_area()
        }
    }

    /// Same connectivity and tags, new coordinates.
    pub(crate) fn with_vertices(&self, vertices: Vec<Point>) -> Mesh {
        let mut m = self.clone();
        m.vertices = vertices;
        m
    }

    pub fn min_edge_length(&self) -> f64 {
        let mut h = f64::INFINITY;
        for t in 0..self.triangles.len() {
            let p = self.triangle_points(t);
            for k in 0..3 {
                let (a, b) = (p[k], p[(k + 1) % 3]);
                h = h.min(((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt());
            }
        }
        h
    }
}

type LoopSegments = Vec<(usize, [usize; 2])>;

/// Orders the obstacle segments into one closed loop.
fn order_loop(
    vertices: &[Point],
    obstacle: &[(usize, &BoundarySegment)],
) -> Result<(Vec<usize>, LoopSegments)> {
    if obstacle.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut adj: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for &(s, seg) in obstacle {
        let [a, b] = seg.vertices;
        adj.entry(a).or_default().push((b, s));
        adj.entry(b).or_default().push((a, s));
    }
    for (v, nb) in &adj {
        if nb.len() != 2 {
            return Err(Error::MeshInvariant {
                entity: "vertex",
                index: *v,
                msg: format!(
                    "obstacle polyline is not closed ({} incident obstacle segments)",
                    nb.len()
                ),
            });
        }
    }
    let start = obstacle.iter().map(|(_, s)| s.vertices[0]).min().unwrap();
    let mut order = vec![start];
    let mut seg_ids = Vec::new();
    let mut prev_seg = usize::MAX;
    let mut cur = start;
    loop {
        let nb = &adj[&cur];
        let &(next, s) = nb
            .iter()
            .find(|&&(_, s)| s != prev_seg)
            .expect("degree two");
        seg_ids.push(s);
        if next == start {
            break;
        }
        order.push(next);
        prev_seg = s;
        cur = next;
        if order.len() > obstacle.len() {
            break;
        }
    }
    if order.len() != obstacle.len() {
        return Err(Error::MeshInvariant {
            entity: "segment",
            index: obstacle[0].0,
            msg: format!(
                "obstacle boundary splits into several polylines ({} of {} segments reachable)",
                order.len(),
                obstacle.len()
            ),
        });
    }
    // counter-clockwise traversal
    let n = order.len();
    let mut area = 0.0;
    for i in 0..n {
        let p = vertices[order[i]];
        let q = vertices[order[(i + 1) % n]];
        area += p[0] * q[1] - q[0] * p[1];
    }
    if area < 0.0 {
        order[1..].reverse();
        seg_ids.reverse();
    }
    let segs = seg_ids
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, [i, (i + 1) % n]))
        .collect();
    Ok((order, segs))
}

/// Small hand-built meshes shared by unit and integration tests.
pub mod fixtures {
    use super::*;

    /// Structured triangulation of `[x0, x1] x [y0, y1]` with `nx * ny`
    /// squares split along alternating diagonals. Left edge inflow, right
    /// edge outflow, top/bottom walls.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Mesh {
        let mut vertices = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([
                    x0 + (x1 - x0) * i as f64 / nx as f64,
                    y0 + (y1 - y0) * j as f64 / ny as f64,
                ]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                if (i + j) % 2 == 0 {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                } else {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                }
            }
        }
        let mut segments = Vec::new();
        for i in 0..nx {
            segments.push(BoundarySegment {
                vertices: [id(i, 0), id(i + 1, 0)],
                tag: BoundaryTag::Wall,
            });
            segments.push(BoundarySegment {
                vertices: [id(i, ny), id(i + 1, ny)],
                tag: BoundaryTag::Wall,
            });
        }
        for j in 0..ny {
            segments.push(BoundarySegment {
                vertices: [id(0, j), id(0, j + 1)],
                tag: BoundaryTag::Inflow,
            });
            segments.push(BoundarySegment {
                vertices: [id(nx, j), id(nx, j + 1)],
                tag: BoundaryTag::Outflow,
            });
        }
        Mesh::new(vertices, triangles, segments, &[]).expect("valid rectangle")
    }

    /// Annulus between a regular `n`-gon of radius `r_in` (obstacle) and a
    /// concentric `n`-gon of radius `r_out` (tagged wall), with `layers`
    /// radial layers. Handy for normal and curve-operator checks.
    pub fn annulus(r_in: f64, r_out: f64, n: usize, layers: usize) -> Mesh {
        let mut vertices = Vec::new();
        for l in 0..=layers {
            let r = r_in + (r_out - r_in) * l as f64 / layers as f64;
            for k in 0..n {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                vertices.push([r * th.cos(), r * th.sin()]);
            }
        }
        let id = |l: usize, k: usize| l * n + (k % n);
        let mut triangles = Vec::new();
        for l in 0..layers {
            for k in 0..n {
                triangles.push([id(l, k), id(l, k + 1), id(l + 1, k + 1)]);
                triangles.push([id(l, k), id(l + 1, k + 1), id(l + 1, k)]);
            }
        }
        let mut segments = Vec::new();
        for k in 0..n {
            segments.push(BoundarySegment {
                vertices: [id(0, k), id(0, k + 1)],
                tag: BoundaryTag::Obstacle,
            });
            segments.push(BoundarySegment {
                vertices: [id(layers, k), id(layers, k + 1)],
                tag: BoundaryTag::Wall,
            });
        }
        Mesh::new(vertices, triangles, segments, &[]).expect("valid annulus")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flips_clockwise_triangles() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let segs = vec![
            BoundarySegment {
                vertices: [0, 1],
                tag: BoundaryTag::Wall,
            },
            BoundarySegment {
                vertices: [1, 2],
                tag: BoundaryTag::Outflow,
            },
            BoundarySegment {
                vertices: [2, 0],
                tag: BoundaryTag::Inflow,
            },
        ];
        let m = Mesh::new(v, vec![[0, 2, 1]], segs, &[]).unwrap();
        assert_eq!(m.flipped_triangles(), 1);
        assert!(m.triangle_area(0) > 0.0);
        assert_eq!((m.num_vertices(), m.num_triangles(), m.segments().len()), (3, 1, 3));
    }

    #[test]
    fn rejects_untagged_boundary() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let segs = vec![BoundarySegment {
            vertices: [0, 1],
            tag: BoundaryTag::Wall,
        }];
        let err = Mesh::new(v, vec![[0, 1, 2]], segs, &[]).unwrap_err();
        assert!(matches!(err, Error::MeshInvariant { .. }), "{err}");
    }

    #[test]
    fn annulus_obstacle_loop_is_closed_and_ccw() {
        let m = fixtures::annulus(0.5, 1.0, 32, 2);
        assert_eq!(m.obstacle_loop().len(), 32);
        let (area, moment) = m.obstacle_polygon_moments();
        let exact = 0.5 * 32.0 * 0.25 * (2.0 * std::f64::consts::PI / 32.0).sin();
        assert!((area - exact).abs() < 1e-12);
        assert!(moment[0].abs() < 1e-12 && moment[1].abs() < 1e-12);
        // outward from the fluid = towards the origin
        for s in m.obstacle_segments() {
            let p = m.vertices()[m.obstacle_loop()[s.ends[0]]];
            assert!(s.normal[0] * p[0] + s.normal[1] * p[1] < 0.0);
        }
    }

    #[test]
    fn rectangle_partition() {
        let m = fixtures::rectangle(0.0, 2.0, 0.0, 1.0, 4, 3);
        assert_eq!(m.num_triangles(), 24);
        assert!((m.fluid_area() - 2.0).abs() < 1e-14);
        assert!(!m.has_obstacle());
    }
}
