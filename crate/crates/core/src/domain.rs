//! A mesh prepared for the solvers: element geometry, domain flags, the
//! unknown layout and the boundary-condition masks.

use crate::error::{Error, Result};
use crate::fem::{element_geometry, ElementGeometry, DofMap};
use crate::mesh::{boundary_normals, BoundaryNormalField, BoundaryTag, DomainMode, Mesh, NormalAveraging};
use crate::par::Execution;

/// Boundary role of a vertex for the velocity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VelocityBc {
    Free,
    Inflow,
    /// Wall, obstacle, or a vertex outside the fluid. Wins over inflow at
    /// shared corners.
    Zero,
}

#[derive(Clone, Debug)]
pub struct Domain {
    pub mesh: Mesh,
    pub mode: DomainMode,
    pub geometry: Vec<ElementGeometry>,
    pub dofs: DofMap,
    /// `None` for meshes without an obstacle.
    pub normals: Option<BoundaryNormalField>,
    pub fluid_cell: Vec<bool>,
    pub deform_cell: Vec<bool>,
    /// `∫_G x dx` of the holdall.
    pub holdall_moment: [f64; 2],
    pub exec: Execution,
    /// Vertices where `w` and `λw` vanish.
    pub w_pinned: Vec<bool>,
    pub velocity_bc: Vec<VelocityBc>,
    /// Vertices not touched by a fluid cell (`p` and `λp` pinned to zero).
    pub pressure_pinned: Vec<bool>,
}

impl Domain {
    pub fn new(mesh: Mesh, mode: DomainMode, averaging: NormalAveraging) -> Result<Self> {
        if mode == DomainMode::Holdall && !mesh.has_obstacle_cells() {
            return Err(Error::invalid(
                "mode",
                "holdall mode needs a mesh with obstacle-interior cells",
            ));
        }
        let geometry = element_geometry(&mesh, Execution::default())?;
        let normals = if mesh.has_obstacle() {
            Some(boundary_normals(&mesh, averaging)?)
        } else {
            None
        };
        let nt = mesh.num_triangles();
        let fluid_cell: Vec<bool> = (0..nt).map(|t| !mesh.is_obstacle_cell(t)).collect();
        let deform_cell: Vec<bool> = (0..nt).map(|t| mesh.in_deformation_domain(t, mode)).collect();

        let outer = mesh.tagged_vertices(&[BoundaryTag::Inflow, BoundaryTag::Wall, BoundaryTag::Outflow]);
        let in_deform = mesh.vertices_in_domain(mode);
        let w_pinned = outer.iter().zip(&in_deform).map(|(&o, &d)| o || !d).collect();

        let inflow = mesh.tagged_vertices(&[BoundaryTag::Inflow]);
        let zero = mesh.tagged_vertices(&[BoundaryTag::Wall, BoundaryTag::Obstacle]);
        let fluid = mesh.fluid_vertices();
        let velocity_bc = (0..mesh.num_vertices())
            .map(|v| {
                if zero[v] || !fluid[v] {
                    VelocityBc::Zero
                } else if inflow[v] {
                    VelocityBc::Inflow
                } else {
                    VelocityBc::Free
                }
            })
            .collect();
        let pressure_pinned = fluid.iter().map(|f| !f).collect();
        let dofs = DofMap::new(mesh.num_vertices(), mesh.obstacle_loop().len());
        let holdall_moment = mesh.holdall_moment();
        Ok(Self {
            mesh,
            mode,
            geometry,
            dofs,
            normals,
            fluid_cell,
            deform_cell,
            holdall_moment,
            exec: Execution::default(),
            w_pinned,
            velocity_bc,
            pressure_pinned,
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn num_vertices(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn num_boundary(&self) -> usize {
        self.mesh.obstacle_loop().len()
    }

    pub fn require_obstacle(&self) -> Result<&BoundaryNormalField> {
        self.normals.as_ref().ok_or(Error::NoObstacle)
    }
}
