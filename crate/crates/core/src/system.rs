//! Global residuals, Jacobians and damped Newton solves for the optimality
//! system and its subsystems (state, adjoint, extension, shape).
//!
//! All vectors use the full [`DofMap`] layout. A subsystem is a list of
//! equation blocks and a list of unknown blocks of matching sizes; equation
//! position `j` pairs with unknown position `j`, which is how boundary
//! conditions pick the row they replace.

use std::collections::HashMap;
use std::sync::Arc;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::fem::{
    apply_dirichlet, assemble_volume, kernel_pattern, segment_mass, segment_stiffness, Block, ElementBlock,
    ElementKernel, LuSolver, Pattern, SparseMatrix,
};
use crate::forms::{element_residual, Coefficients, ElementLoad, Parts, NLOC};
use crate::scalar::Dual;

#[derive(Clone, Debug)]
pub struct SystemParams {
    pub co: Coefficients,
    pub alpha: f64,
    /// Per-element verification load, indexed by triangle.
    pub load: Option<Arc<Vec<ElementLoad>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Subsystem {
    pub name: &'static str,
    pub eq: &'static [Block],
    pub unk: &'static [Block],
}

use Block::*;

pub const FULL: Subsystem = Subsystem {
    name: "kkt",
    eq: &Block::ALL,
    unk: &Block::ALL,
};
/// Navier-Stokes: the multiplier-derivative rows, solved for `(v, p)`.
pub const STATE: Subsystem = Subsystem {
    name: "state",
    eq: &[LV, LP],
    unk: &[V, P],
};
/// Adjoint flow: `(v, p)`-derivative rows, solved for `(λv, λp)`.
pub const ADJOINT: Subsystem = Subsystem {
    name: "adjoint",
    eq: &[V, P],
    unk: &[LV, LP],
};
/// Extension operator for fixed boundary datum `b`.
pub const EXTENSION: Subsystem = Subsystem {
    name: "extension",
    eq: &[LW],
    unk: &[W],
};
/// Control, boundary datum, deformation and the geometric multipliers with
/// the flow frozen.
pub const SHAPE: Subsystem = Subsystem {
    name: "shape",
    eq: &[W, B, C, LW, LB, LVol, LBc],
    unk: &[W, B, C, LW, LB, LVol, LBc],
};

fn local_block(l: usize) -> Block {
    match l {
        0..=5 => W,
        6..=11 => V,
        12..=14 => P,
        15..=20 => LW,
        21..=26 => LV,
        27..=29 => LP,
        30 => LVol,
        _ => LBc,
    }
}

pub(crate) fn local_to_global(domain: &Domain, tri: &[usize; 3], l: usize) -> usize {
    let d = &domain.dofs;
    match local_block(l) {
        W => d.dof(W, tri[l / 2], l % 2),
        V => d.dof(V, tri[(l - 6) / 2], l % 2),
        P => d.dof(P, tri[l - 12], 0),
        LW => d.dof(LW, tri[(l - 15) / 2], (l - 15) % 2),
        LV => d.dof(LV, tri[(l - 21) / 2], (l - 21) % 2),
        LP => d.dof(LP, tri[l - 27], 0),
        LVol => d.offset(LVol),
        _ => d.dof(LBc, 0, l - 31),
    }
}

fn parts_for(eq: &[Block]) -> Parts {
    Parts {
        fluid: eq.iter().any(|b| matches!(b, W | V | P | LV | LP | LVol | LBc)),
        deform: eq.iter().any(|b| matches!(b, W | LW)),
    }
}

struct SystemKernel<'a> {
    domain: &'a Domain,
    y: &'a [f64],
    params: &'a SystemParams,
    parts: Parts,
    rows: Vec<usize>,
    seeds: Vec<usize>,
}

impl SystemKernel<'_> {
    fn element_parts(&self, t: usize) -> Parts {
        Parts {
            fluid: self.parts.fluid && self.domain.fluid_cell[t],
            deform: self.parts.deform && self.domain.deform_cell[t],
        }
    }

    fn gather(&self, t: usize) -> [f64; NLOC] {
        let tri = &self.domain.geometry[t].vertices;
        std::array::from_fn(|l| self.y[local_to_global(self.domain, tri, l)])
    }

    fn eval_dual<const N: usize>(&self, t: usize, x: &[f64; NLOC], parts: Parts) -> (Vec<f64>, Vec<f64>) {
        let mut xd = x.map(Dual::<N>::constant);
        for (k, &l) in self.seeds.iter().enumerate() {
            xd[l] = Dual::variable(x[l], k);
        }
        let load = self.params.load.as_ref().map(|v| &v[t]);
        let r = element_residual(&self.domain.geometry[t], &xd, &self.params.co, parts, load);
        let vector = self.rows.iter().map(|&l| r[l].re).collect();
        let mut matrix = Vec::with_capacity(self.rows.len() * N);
        for &l in &self.rows {
            matrix.extend_from_slice(&r[l].eps);
        }
        (vector, matrix)
    }
}

impl ElementKernel for SystemKernel<'_> {
    fn num_elements(&self) -> usize {
        self.domain.geometry.len()
    }

    fn dofs(&self, t: usize, rows: &mut Vec<usize>, cols: &mut Vec<usize>) {
        let p = self.element_parts(t);
        if !p.fluid && !p.deform {
            return;
        }
        let tri = &self.domain.geometry[t].vertices;
        rows.extend(self.rows.iter().map(|&l| local_to_global(self.domain, tri, l)));
        cols.extend(self.seeds.iter().map(|&l| local_to_global(self.domain, tri, l)));
    }

    fn eval(&self, t: usize, want_matrix: bool) -> Option<ElementBlock> {
        let parts = self.element_parts(t);
        if !parts.fluid && !parts.deform {
            return None;
        }
        let tri = &self.domain.geometry[t].vertices;
        let x = self.gather(t);
        let rows = self.rows.iter().map(|&l| local_to_global(self.domain, tri, l)).collect();
        let (vector, matrix, cols) = if want_matrix && !self.seeds.is_empty() {
            let (v, m) = match self.seeds.len() {
                6 => self.eval_dual::<6>(t, &x, parts),
                9 => self.eval_dual::<9>(t, &x, parts),
                15 => self.eval_dual::<15>(t, &x, parts),
                33 => self.eval_dual::<33>(t, &x, parts),
                n => unreachable!("no dual instantiation for {n} seeds"),
            };
            let cols = self.seeds.iter().map(|&l| local_to_global(self.domain, tri, l)).collect();
            (v, m, cols)
        } else {
            let load = self.params.load.as_ref().map(|v| &v[t]);
            let r = element_residual(&self.domain.geometry[t], &x, &self.params.co, parts, load);
            (self.rows.iter().map(|&l| r[l]).collect(), Vec::new(), Vec::new())
        };
        Some(ElementBlock {
            rows,
            cols,
            vector,
            matrix,
        })
    }
}

fn kernel<'a>(domain: &'a Domain, y: &'a [f64], params: &'a SystemParams, sys: &Subsystem) -> SystemKernel<'a> {
    let rows = (0..NLOC).filter(|&l| sys.eq.contains(&local_block(l))).collect();
    let seeds = (0..NLOC).filter(|&l| sys.unk.contains(&local_block(l))).collect();
    SystemKernel {
        domain,
        y,
        params,
        parts: parts_for(sys.eq),
        rows,
        seeds,
    }
}

/// Entries `(row, col, value)` of the (linear) obstacle-boundary terms.
fn boundary_entries(domain: &Domain, alpha: f64, sys: &Subsystem) -> Vec<(usize, usize, f64)> {
    let Some(normals) = domain.normals.as_ref() else {
        return Vec::new();
    };
    let d = &domain.dofs;
    let lp = domain.mesh.obstacle_loop();
    let mut out = Vec::new();
    let mut push = |rb: Block, r: usize, cb: Block, c: usize, v: f64| {
        if sys.eq.contains(&rb) && sys.unk.contains(&cb) {
            out.push((r, c, v));
        }
    };
    for seg in domain.mesh.obstacle_segments() {
        let m = segment_mass(seg.length);
        let k = segment_stiffness(seg.length);
        for (ii, &i) in seg.ends.iter().enumerate() {
            for (jj, &j) in seg.ends.iter().enumerate() {
                let (mij, aij) = (m[ii][jj], m[ii][jj] + k[ii][jj]);
                let (ni, nj) = (normals.normals[i], normals.normals[j]);
                for c in 0..2 {
                    push(B, d.dof(B, i, c), LB, d.dof(LB, j, c), -aij);
                    push(B, d.dof(B, i, c), LW, d.dof(LW, lp[j], c), mij);
                    push(LB, d.dof(LB, i, c), B, d.dof(B, j, c), -aij);
                    push(LB, d.dof(LB, i, c), C, d.dof(C, j, 0), mij * nj[c]);
                    push(C, d.dof(C, i, 0), LB, d.dof(LB, j, c), mij * ni[c]);
                    push(LW, d.dof(LW, lp[i], c), B, d.dof(B, j, c), mij);
                }
                push(C, d.dof(C, i, 0), C, d.dof(C, j, 0), alpha * mij);
            }
        }
    }
    out
}

/// Residual of the equation blocks of `sys` (global layout; other entries
/// are zero). Boundary-condition rows are *not* masked here.
pub fn system_residual(domain: &Domain, y: &[f64], params: &SystemParams, sys: &Subsystem) -> Result<Vec<f64>> {
    let n = domain.dofs.len();
    check_len(y, n)?;
    let k = kernel(domain, y, params, sys);
    let mut r = assemble_volume(&k, n, n, false, None, domain.exec)?.vector;
    // boundary terms are linear: apply the full-column operator to y
    let all = Subsystem {
        name: sys.name,
        eq: sys.eq,
        unk: &Block::ALL,
    };
    for (row, col, v) in boundary_entries(domain, params.alpha, &all) {
        r[row] += v * y[col];
    }
    if sys.eq.contains(&LBc) {
        for k in 0..2 {
            r[domain.dofs.dof(LBc, 0, k)] += domain.holdall_moment[k];
        }
    }
    Ok(r)
}

fn check_len(y: &[f64], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::LengthMismatch {
            what: "unknown vector",
            expected: n,
            got: y.len(),
        });
    }
    Ok(())
}

fn system_pattern(domain: &Domain, params: &SystemParams, sys: &Subsystem) -> Result<Arc<Pattern>> {
    let n = domain.dofs.len();
    let zeros = vec![0.0; n];
    let k = kernel(domain, &zeros, params, sys);
    let p = kernel_pattern(&k, n, n)?;
    let extra = boundary_entries(domain, params.alpha, sys);
    if extra.is_empty() {
        return Ok(p);
    }
    let mut rows: Vec<Vec<usize>> = (0..n)
        .map(|r| p.col_idx[p.row_ptr[r]..p.row_ptr[r + 1]].to_vec())
        .collect();
    for (r, c, _) in extra {
        rows[r].push(c);
    }
    Ok(Arc::new(Pattern::from_rows(n, rows)))
}

/// Jacobian `∂(eq rows)/∂(unk columns)` in the global layout.
pub fn system_matrix(
    domain: &Domain,
    y: &[f64],
    params: &SystemParams,
    sys: &Subsystem,
    pattern: Option<&Arc<Pattern>>,
) -> Result<SparseMatrix> {
    let n = domain.dofs.len();
    check_len(y, n)?;
    let pattern = match pattern {
        Some(p) => p.clone(),
        None => system_pattern(domain, params, sys)?,
    };
    let k = kernel(domain, y, params, sys);
    let mut m = assemble_volume(&k, n, n, true, Some(&pattern), domain.exec)?
        .matrix
        .expect("matrix requested");
    for (r, c, v) in boundary_entries(domain, params.alpha, sys) {
        m.add(r, c, v)?;
    }
    Ok(m)
}

/// Global dofs of the blocks, in order.
pub fn block_dofs(domain: &Domain, blocks: &[Block]) -> Vec<usize> {
    blocks.iter().flat_map(|&b| domain.dofs.range(b)).collect()
}

/// Dofs carrying boundary conditions (`w`, `λw` on the outer boundary,
/// `v`, `λv` on Dirichlet boundaries, everything flow-related outside the
/// fluid).
pub fn pinned_dofs(domain: &Domain) -> Vec<bool> {
    use crate::domain::VelocityBc;
    let d = &domain.dofs;
    let mut pinned = vec![false; d.len()];
    for v in 0..domain.num_vertices() {
        if domain.w_pinned[v] {
            for k in 0..2 {
                pinned[d.dof(W, v, k)] = true;
                pinned[d.dof(LW, v, k)] = true;
            }
        }
        if domain.velocity_bc[v] != VelocityBc::Free {
            for k in 0..2 {
                pinned[d.dof(V, v, k)] = true;
                pinned[d.dof(LV, v, k)] = true;
            }
        }
        if domain.pressure_pinned[v] {
            pinned[d.dof(P, v, 0)] = true;
            pinned[d.dof(LP, v, 0)] = true;
        }
    }
    pinned
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Undamped steps allowed without improving on the best residual before
    /// falling back to the monotone line search from the best iterate; 0
    /// uses the line search throughout.
    pub watchdog: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Residual norm before each step and after the last one.
    pub history: Vec<f64>,
}

/// Cached sparsity patterns and symbolic factorizations keyed by subsystem.
#[derive(Default)]
pub struct Workspace {
    patterns: HashMap<&'static str, Arc<Pattern>>,
    solvers: HashMap<&'static str, LuSolver>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn pattern(&mut self, domain: &Domain, params: &SystemParams, sys: &Subsystem) -> Result<Arc<Pattern>> {
        if let Some(p) = self.patterns.get(sys.name) {
            return Ok(p.clone());
        }
        let p = system_pattern(domain, params, sys)?;
        self.patterns.insert(sys.name, p.clone());
        Ok(p)
    }
}

fn masked_norm(r: &[f64], rows: &[usize], pinned: &[bool], unk: &[usize]) -> f64 {
    rows.iter()
        .zip(unk)
        .filter(|(_, &u)| !pinned[u])
        .map(|(&i, _)| r[i] * r[i])
        .sum::<f64>()
        .sqrt()
}

struct Watchdog {
    norm: f64,
    y: Vec<f64>,
    stalled: usize,
}

/// Newton's method on the subsystem. Boundary-condition entries of `y` are
/// left untouched; the corresponding equations are dropped. With a watchdog,
/// undamped steps are taken while they keep improving on the best residual
/// within the window; otherwise (and after the watchdog fires) the step is
/// halved until the residual norm decreases.
pub fn newton(
    domain: &Domain,
    y: &mut [f64],
    params: &SystemParams,
    sys: &Subsystem,
    opts: &NewtonOptions,
    ws: &mut Workspace,
) -> Result<NewtonReport> {
    let pinned = pinned_dofs(domain);
    let rows = block_dofs(domain, sys.eq);
    let unk = block_dofs(domain, sys.unk);
    debug_assert_eq!(rows.len(), unk.len());
    let n = domain.dofs.len();
    let mut col_map = vec![None; n];
    for (j, &u) in unk.iter().enumerate() {
        col_map[u] = Some(j);
    }
    let fixed: Vec<usize> = (0..unk.len()).filter(|&j| pinned[unk[j]]).collect();
    let zeros = vec![0.0; fixed.len()];

    let mut report = NewtonReport::default();
    let mut r = system_residual(domain, y, params, sys)?;
    let mut norm = masked_norm(&r, &rows, &pinned, &unk);
    report.history.push(norm);
    let mut watchdog = (opts.watchdog > 0).then(|| Watchdog {
        norm,
        y: unk.iter().map(|&u| y[u]).collect(),
        stalled: 0,
    });
    loop {
        if !norm.is_finite() {
            return Err(Error::Divergence {
                solver: sys.name,
                iterations: report.iterations,
                residual: norm,
                history: report.history,
            });
        }
        if norm <= opts.tol {
            return Ok(report);
        }
        if report.iterations >= opts.max_iter {
            if let Some(wd) = watchdog.filter(|wd| wd.norm < norm) {
                for (j, &u) in unk.iter().enumerate() {
                    y[u] = wd.y[j];
                }
                norm = wd.norm;
            }
            return Err(Error::Divergence {
                solver: sys.name,
                iterations: report.iterations,
                residual: norm,
                history: report.history,
            });
        }
        let pattern = ws.pattern(domain, params, sys)?;
        let jac = system_matrix(domain, y, params, sys, Some(&pattern))?;
        let mut a = jac.extract(&rows, &col_map, unk.len());
        let mut rhs: Vec<f64> = rows.iter().map(|&i| -r[i]).collect();
        apply_dirichlet(&mut a, &mut rhs, &fixed, &zeros)?;
        let solver = ws.solvers.entry(sys.name).or_insert_with(|| LuSolver::new(sys.name));
        let delta = solver.solve(&a, &rhs)?;

        let base: Vec<f64> = unk.iter().map(|&u| y[u]).collect();
        if let Some(wd) = watchdog.as_mut() {
            for (j, &u) in unk.iter().enumerate() {
                y[u] = base[j] + delta[j];
            }
            let rt = system_residual(domain, y, params, sys)?;
            let nt = masked_norm(&rt, &rows, &pinned, &unk);
            report.iterations += 1;
            if nt.is_finite() {
                r = rt;
                norm = nt;
                report.history.push(norm);
                log::trace!("{} newton {}: |r| = {:.3e} (full step)", sys.name, report.iterations, norm);
                if nt < wd.norm {
                    wd.norm = nt;
                    wd.y = unk.iter().map(|&u| y[u]).collect();
                    wd.stalled = 0;
                    continue;
                }
                wd.stalled += 1;
                if wd.stalled < opts.watchdog {
                    continue;
                }
            }
            log::debug!("{}: full steps stalled, damping from the best iterate", sys.name);
            for (j, &u) in unk.iter().enumerate() {
                y[u] = wd.y[j];
            }
            r = system_residual(domain, y, params, sys)?;
            norm = wd.norm;
            report.history.push(norm);
            watchdog = None;
            continue;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            for (j, &u) in unk.iter().enumerate() {
                y[u] = base[j] + t * delta[j];
            }
            let rt = system_residual(domain, y, params, sys)?;
            let nt = masked_norm(&rt, &rows, &pinned, &unk);
            if nt < norm {
                r = rt;
                norm = nt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        report.iterations += 1;
        report.history.push(norm);
        if !accepted {
            for (j, &u) in unk.iter().enumerate() {
                y[u] = base[j];
            }
            // a full step that cannot reduce a residual already at round-off
            // level is not a divergence
            if norm <= opts.tol * 10.0 {
                return Ok(report);
            }
            return Err(Error::Divergence {
                solver: sys.name,
                iterations: report.iterations,
                residual: norm,
                history: report.history,
            });
        }
        log::trace!("{} newton {}: |r| = {:.3e} (step {t})", sys.name, report.iterations, norm);
    }
}
