//! Legacy ASCII VTK (3.0) unstructured-grid output, plus a reader for the
//! subset this writer produces.

use std::fmt::Write as _;
use std::path::Path;

use super::{Mesh, Point};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum NodalField {
    Scalar(Vec<f64>),
    Vector(Vec<[f64; 2]>),
}

impl NodalField {
    fn len(&self) -> usize {
        match self {
            NodalField::Scalar(v) => v.len(),
            NodalField::Vector(v) => v.len(),
        }
    }
}

pub fn write_vtk(mesh: &Mesh, fields: &[(&str, NodalField)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let nv = mesh.num_vertices();
    for (name, f) in fields {
        if f.len() != nv {
            return Err(Error::LengthMismatch {
                what: "nodal field",
                expected: nv,
                got: f.len(),
            });
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::invalid("field name", format!("{name:?} is not a VTK identifier")));
        }
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nmapshape\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {nv} double");
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} 0", p[0], p[1]);
    }
    let nt = mesh.num_triangles();
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {nv}");
        for (name, f) in fields {
            match f {
                NodalField::Scalar(v) => {
                    let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                    for x in v {
                        let _ = writeln!(s, "{x}");
                    }
                }
                NodalField::Vector(v) => {
                    let _ = writeln!(s, "VECTORS {name} double");
                    for x in v {
                        let _ = writeln!(s, "{} {} 0", x[0], x[1]);
                    }
                }
            }
        }
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Default)]
pub struct VtkData {
    pub points: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub fields: Vec<(String, NodalField)>,
}

pub fn read_vtk(path: impl AsRef<Path>) -> Result<VtkData> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    };
    let lines: Vec<&str> = text.lines().collect();
    let mut out = VtkData::default();
    let num = |i: usize, s: &str| s.parse::<f64>().map_err(|_| perr(i + 1, "bad number"));
    let mut i = 0;
    while i < lines.len() {
        let f: Vec<&str> = lines[i].split_whitespace().collect();
        match f.first().copied() {
            Some("POINTS") => {
                let n: usize = f.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| perr(i + 1, "bad POINTS"))?;
                for k in 0..n {
                    let j = i + 1 + k;
                    let c: Vec<&str> = lines.get(j).ok_or_else(|| perr(j, "truncated"))?.split_whitespace().collect();
                    if c.len() < 2 {
                        return Err(perr(j + 1, "bad point"));
                    }
                    out.points.push([num(j, c[0])?, num(j, c[1])?]);
                }
                i += n + 1;
            }
            Some("CELLS") => {
                let n: usize = f.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| perr(i + 1, "bad CELLS"))?;
                for k in 0..n {
                    let j = i + 1 + k;
                    let c: Vec<usize> = lines
                        .get(j)
                        .ok_or_else(|| perr(j, "truncated"))?
                        .split_whitespace()
                        .map(|s| s.parse())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| perr(j + 1, "bad cell"))?;
                    if c.len() != 4 || c[0] != 3 {
                        return Err(perr(j + 1, "only triangles are supported"));
                    }
                    out.triangles.push([c[1], c[2], c[3]]);
                }
                i += n + 1;
            }
            Some("SCALARS") | Some("VECTORS") => {
                let name = f.get(1).ok_or_else(|| perr(i + 1, "missing name"))?.to_string();
                let n = out.points.len();
                if f[0] == "SCALARS" {
                    i += 2; // LOOKUP_TABLE
                    let mut v = Vec::with_capacity(n);
                    for k in 0..n {
                        let l = lines.get(i + k).ok_or_else(|| perr(i + k, "truncated"))?;
                        v.push(num(i + k, l.trim())?);
                    }
                    out.fields.push((name, NodalField::Scalar(v)));
                } else {
                    i += 1;
                    let mut v = Vec::with_capacity(n);
                    for k in 0..n {
                        let c: Vec<&str> = lines.get(i + k).ok_or_else(|| perr(i + k, "truncated"))?.split_whitespace().collect();
                        if c.len() < 2 {
                            return Err(perr(i + k + 1, "bad vector"));
                        }
                        v.push([num(i + k, c[0])?, num(i + k, c[1])?]);
                    }
                    out.fields.push((name, NodalField::Vector(v)));
                }
                i += n;
            }
            _ => i += 1,
        }
    }
    Ok(out)
}
