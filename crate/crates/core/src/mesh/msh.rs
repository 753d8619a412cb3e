//! Gmsh MSH 2.2 ASCII reader.

use std::collections::HashMap;
use std::path::Path;

use super::{BoundarySegment, BoundaryTag, Mesh};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhysicalRole {
    Boundary(BoundaryTag),
    Fluid,
    /// Triangles discretizing the obstacle interior (holdall meshes).
    Solid,
}

/// Maps physical group ids to roles. Built from `$PhysicalNames` when the
/// file has it, otherwise the default numbering 1..=6
/// (inflow, wall, outflow, obstacle, fluid, solid).
#[derive(Clone, Debug, Default)]
pub struct TagTable {
    pub roles: HashMap<i64, PhysicalRole>,
}

impl TagTable {
    pub fn default_numbering() -> Self {
        let roles = [
            (1, PhysicalRole::Boundary(BoundaryTag::Inflow)),
            (2, PhysicalRole::Boundary(BoundaryTag::Wall)),
            (3, PhysicalRole::Boundary(BoundaryTag::Outflow)),
            (4, PhysicalRole::Boundary(BoundaryTag::Obstacle)),
            (5, PhysicalRole::Fluid),
            (6, PhysicalRole::Solid),
        ]
        .into_iter()
        .collect();
        TagTable { roles }
    }

    pub fn role_for_name(name: &str) -> Option<PhysicalRole> {
        Some(match name.to_ascii_lowercase().as_str() {
            "inflow" | "inlet" => PhysicalRole::Boundary(BoundaryTag::Inflow),
            "wall" | "walls" => PhysicalRole::Boundary(BoundaryTag::Wall),
            "outflow" | "outlet" => PhysicalRole::Boundary(BoundaryTag::Outflow),
            "obstacle" => PhysicalRole::Boundary(BoundaryTag::Obstacle),
            "fluid" => PhysicalRole::Fluid,
            "solid" | "obstacle_interior" => PhysicalRole::Solid,
            _ => return None,
        })
    }
}

pub fn load_msh(path: impl AsRef<Path>) -> Result<Mesh> {
    load_msh_with(path, None)
}

/// Loads with an explicit tag table; `None` means "names from the file,
/// default numbering otherwise".
pub fn load_msh_with(path: impl AsRef<Path>, table: Option<&TagTable>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_msh(&text, path, table)
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        loop {
            match self.it.next() {
                Some((i, l)) => {
                    self.line = i + 1;
                    let l = l.trim();
                    if !l.is_empty() {
                        return Ok(l);
                    }
                }
                None => return Err(self.err("unexpected end of file")),
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn expect(&mut self, tag: &str) -> Result<()> {
        let l = self.next()?;
        if l == tag {
            Ok(())
        } else {
            Err(self.err(format!("expected {tag}, found {l:?}")))
        }
    }

    fn count(&mut self) -> Result<usize> {
        let l = self.next()?;
        l.parse().map_err(|_| self.err(format!("expected a count, found {l:?}")))
    }
}

pub fn parse_msh(text: &str, path: &Path, table: Option<&TagTable>) -> Result<Mesh> {
    let mut lines = Lines {
        it: text.lines().enumerate(),
        path,
        line: 0,
    };
    lines.expect("$MeshFormat")?;
    let header = lines.next()?;
    let mut hf = header.split_whitespace();
    match (hf.next(), hf.next()) {
        (Some(v), Some("0")) if v.starts_with("2.2") => {}
        (Some(v), Some(_)) if v.starts_with("2.2") => {
            return Err(lines.err("binary MSH files are not supported"))
        }
        _ => return Err(lines.err(format!("unsupported MSH version {header:?}"))),
    }
    lines.expect("$EndMeshFormat")?;

    let mut names: Option<TagTable> = None;
    let mut node_ids: HashMap<i64, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut raw_lines: Vec<(usize, i64, [i64; 2])> = Vec::new();
    let mut raw_tris: Vec<(usize, i64, [i64; 3])> = Vec::new();
    let mut have_nodes = false;
    let mut have_elements = false;

    loop {
        let section = match lines.it.next() {
            Some((i, l)) => {
                lines.line = i + 1;
                let l = l.trim();
                if l.is_empty() {
                    continue;
                }
                l
            }
            None => break,
        };
        match section {
            "$PhysicalNames" => {
                let n = lines.count()?;
                let mut t = TagTable::default();
                for _ in 0..n {
                    let l = lines.next()?;
                    let mut f = l.splitn(3, char::is_whitespace);
                    let _dim = f.next();
                    let id: i64 = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| lines.err("malformed physical name"))?;
                    let name = f
                        .next()
                        .map(|s| s.trim().trim_matches('"'))
                        .ok_or_else(|| lines.err("malformed physical name"))?;
                    let role = TagTable::role_for_name(name)
                        .ok_or_else(|| lines.err(format!("unknown physical group {name:?}")))?;
                    t.roles.insert(id, role);
                }
                lines.expect("$EndPhysicalNames")?;
                names = Some(t);
            }
            "$Nodes" => {
                let n = lines.count()?;
                vertices.reserve(n);
                for _ in 0..n {
                    let l = lines.next()?;
                    let f: Vec<&str> = l.split_whitespace().collect();
                    if f.len() < 3 {
                        return Err(lines.err("malformed node"));
                    }
                    let id: i64 = f[0].parse().map_err(|_| lines.err("bad node id"))?;
                    let x: f64 = f[1].parse().map_err(|_| lines.err("bad coordinate"))?;
                    let y: f64 = f[2].parse().map_err(|_| lines.err("bad coordinate"))?;
                    if node_ids.insert(id, vertices.len()).is_some() {
                        return Err(lines.err(format!("duplicate node id {id}")));
                    }
                    vertices.push([x, y]);
                }
                lines.expect("$EndNodes")?;
                have_nodes = true;
            }
            "$Elements" => {
                let n = lines.count()?;
                for _ in 0..n {
                    let l = lines.next()?;
                    let f: Vec<i64> = l
                        .split_whitespace()
                        .map(|s| s.parse())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| lines.err("malformed element"))?;
                    if f.len() < 3 {
                        return Err(lines.err("malformed element"));
                    }
                    let (ty, ntags) = (f[1], f[2] as usize);
                    let nodes = &f[(3 + ntags).min(f.len())..];
                    let phys = if ntags > 0 { f[3] } else { 0 };
                    match ty {
                        1 if nodes.len() == 2 => raw_lines.push((lines.line, phys, [nodes[0], nodes[1]])),
                        2 if nodes.len() == 3 => {
                            raw_tris.push((lines.line, phys, [nodes[0], nodes[1], nodes[2]]))
                        }
                        15 => {}
                        1 | 2 => return Err(lines.err("wrong node count for element")),
                        _ => return Err(lines.err(format!("unsupported element type {ty}"))),
                    }
                }
                lines.expect("$EndElements")?;
                have_elements = true;
            }
            s if s.starts_with('$') => {
                // skip unknown sections
                let end = format!("$End{}", &s[1..]);
                while lines.next()? != end {}
            }
            other => return Err(lines.err(format!("unexpected line {other:?}"))),
        }
    }
    if !have_nodes || !have_elements {
        return Err(lines.err("missing $Nodes or $Elements section"));
    }

    let table = match (table, names.as_ref()) {
        (Some(t), _) => t.clone(),
        (None, Some(t)) => t.clone(),
        (None, None) => TagTable::default_numbering(),
    };
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let node = |line: usize, id: i64| {
        node_ids
            .get(&id)
            .copied()
            .ok_or_else(|| parse_err(line, format!("unknown node id {id}")))
    };

    let mut triangles = Vec::with_capacity(raw_tris.len());
    let mut solid = Vec::new();
    for (line, phys, n) in raw_tris {
        match table.roles.get(&phys) {
            Some(PhysicalRole::Fluid) => {}
            Some(PhysicalRole::Solid) => solid.push(triangles.len()),
            _ => return Err(parse_err(line, format!("triangle with unknown physical tag {phys}"))),
        }
        triangles.push([node(line, n[0])?, node(line, n[1])?, node(line, n[2])?]);
    }
    let mut segments = Vec::with_capacity(raw_lines.len());
    for (line, phys, n) in raw_lines {
        let tag = match table.roles.get(&phys) {
            Some(PhysicalRole::Boundary(t)) => *t,
            _ => return Err(parse_err(line, format!("line with unknown physical tag {phys}"))),
        };
        segments.push(BoundarySegment {
            vertices: [node(line, n[0])?, node(line, n[1])?],
            tag,
        });
    }
    let mesh = Mesh::new(vertices, triangles, segments, &solid)?;
    if mesh.flipped_triangles() > 0 {
        log::debug!(
            "{}: repaired orientation of {} triangles",
            path.display(),
            mesh.flipped_triangles()
        );
    }
    Ok(mesh)
}
