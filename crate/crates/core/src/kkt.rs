//! The coupled first-order optimality system: residual, Lagrangian value,
//! geometric constraints and the monolithic semismooth Newton solve.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{Domain, VelocityBc};
use crate::error::{Error, Result};
use crate::fem::{curve_mass, segment_mass, segment_stiffness, Block, DofMap, SparseMatrix};
use crate::flow::{dirichlet_velocity, FlowParams};
use crate::forms::{element_lagrangian, Coefficients, Parts, NLOC};
use crate::par::map_indexed;
use crate::scalar::{Real, TwoF64};
use crate::system::{self, local_to_global, NewtonOptions, NewtonReport, SystemParams, Workspace, FULL};
use crate::transform::{det_penalty, element_dets, PenaltyParams};

/// All unknowns and multipliers in the [`DofMap`] layout.
#[derive(Clone, Debug, PartialEq)]
pub struct KktVector {
    dofs: DofMap,
    data: Vec<f64>,
}

impl KktVector {
    pub fn zeros(domain: &Domain) -> Self {
        Self {
            dofs: domain.dofs,
            data: vec![0.0; domain.dofs.len()],
        }
    }

    pub fn from_vec(domain: &Domain, data: Vec<f64>) -> Result<Self> {
        if data.len() != domain.dofs.len() {
            return Err(Error::LengthMismatch {
                what: "KKT vector",
                expected: domain.dofs.len(),
                got: data.len(),
            });
        }
        Ok(Self {
            dofs: domain.dofs,
            data,
        })
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, b: Block) -> &[f64] {
        &self.data[self.dofs.range(b)]
    }

    pub fn block_mut(&mut self, b: Block) -> &mut [f64] {
        let r = self.dofs.range(b);
        &mut self.data[r]
    }

    /// A vector-valued block as nodal pairs.
    pub fn nodal(&self, b: Block) -> Vec<[f64; 2]> {
        self.block(b).chunks(2).map(|c| [c[0], c[1]]).collect()
    }

    pub fn w(&self) -> Vec<[f64; 2]> {
        self.nodal(Block::W)
    }

    pub fn c(&self) -> &[f64] {
        self.block(Block::C)
    }
}

#[derive(Clone, Debug)]
pub struct KktParams {
    pub flow: FlowParams,
    pub alpha: f64,
    pub beta: f64,
    pub eta_det: f64,
    pub eta_ext: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub max_halvings: usize,
}

impl Default for KktParams {
    fn default() -> Self {
        Self {
            flow: FlowParams::default(),
            alpha: 1e-4,
            beta: 10.0,
            eta_det: 5e-2,
            eta_ext: 3.0,
            newton_tol: 1e-9,
            newton_max_iter: 50,
            max_halvings: 30,
        }
    }
}

impl KktParams {
    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", "must be positive"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", "must be >= 0"));
        }
        if !(self.eta_det > 0.0 && self.eta_det.is_finite()) {
            return Err(Error::invalid("eta_det", "must be positive"));
        }
        if !(self.eta_ext >= 0.0 && self.eta_ext.is_finite()) {
            return Err(Error::invalid("eta_ext", "must be >= 0"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::invalid("newton_tol", "must be positive"));
        }
        Ok(())
    }

    pub fn coefficients(&self) -> Coefficients {
        Coefficients {
            nu: self.flow.nu,
            mu: self.flow.mu,
            beta: self.beta,
            eta_det: self.eta_det,
            eta_ext: self.eta_ext,
        }
    }

    pub fn penalty(&self) -> PenaltyParams {
        PenaltyParams {
            eta_det: self.eta_det,
            beta: self.beta,
        }
    }

    pub(crate) fn system_params(&self) -> SystemParams {
        SystemParams {
            co: self.coefficients(),
            alpha: self.alpha,
            load: self.flow.body_force.clone(),
        }
    }

    pub(crate) fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
            max_halvings: self.max_halvings,
            watchdog: KKT_WATCHDOG,
        }
    }
}

/// Full Newton steps tolerated without progress before damping kicks in:
/// after a decrease of α the first steps typically raise the residual by
/// orders of magnitude before converging quadratically.
const KKT_WATCHDOG: usize = 8;

/// The zero vector with the inflow velocity in place.
pub fn initial_vector(domain: &Domain, params: &KktParams) -> KktVector {
    let mut y = KktVector::zeros(domain);
    apply_dirichlet_values(domain, params, &mut y);
    y
}

pub(crate) fn apply_dirichlet_values(domain: &Domain, params: &KktParams, y: &mut KktVector) {
    let bc = dirichlet_velocity(domain, params.flow.inflow);
    let d = domain.dofs;
    for v in 0..domain.num_vertices() {
        if domain.velocity_bc[v] != VelocityBc::Free {
            for k in 0..2 {
                y.data[d.dof(Block::V, v, k)] = bc[v][k];
                y.data[d.dof(Block::LV, v, k)] = 0.0;
            }
        }
        if domain.w_pinned[v] {
            for k in 0..2 {
                y.data[d.dof(Block::W, v, k)] = 0.0;
                y.data[d.dof(Block::LW, v, k)] = 0.0;
            }
        }
        if domain.pressure_pinned[v] {
            y.data[d.dof(Block::P, v, 0)] = 0.0;
            y.data[d.dof(Block::LP, v, 0)] = 0.0;
        }
    }
}

fn check(domain: &Domain, y: &KktVector) -> Result<()> {
    if y.dofs != domain.dofs {
        return Err(Error::LengthMismatch {
            what: "KKT vector",
            expected: domain.dofs.len(),
            got: y.data.len(),
        });
    }
    Ok(())
}

/// Derivative of the Lagrangian with respect to every variable, without
/// boundary-condition masking.
pub fn lagrangian_gradient(domain: &Domain, y: &KktVector, params: &KktParams) -> Result<Vec<f64>> {
    check(domain, y)?;
    system::system_residual(domain, &y.data, &params.system_params(), &FULL)
}

/// [`lagrangian_gradient`] with the rows of boundary-condition dofs zeroed.
pub fn kkt_residual(domain: &Domain, y: &KktVector, params: &KktParams) -> Result<Vec<f64>> {
    let mut r = lagrangian_gradient(domain, y, params)?;
    for (ri, p) in r.iter_mut().zip(system::pinned_dofs(domain)) {
        if p {
            *ri = 0.0;
        }
    }
    Ok(r)
}

pub fn residual_norm(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// The Lagrangian: dissipation, control regularization and determinant
/// penalty, plus the pairings of every constraint with its multiplier.
pub fn lagrangian_value<R: Real>(domain: &Domain, y: &[R], params: &KktParams) -> Result<R> {
    if y.len() != domain.dofs.len() {
        return Err(Error::LengthMismatch {
            what: "KKT vector",
            expected: domain.dofs.len(),
            got: y.len(),
        });
    }
    let co = params.coefficients();
    let load = params.flow.body_force.as_deref();
    let per_element = map_indexed(domain.exec, domain.geometry.len(), |t| {
        let parts = Parts {
            fluid: domain.fluid_cell[t],
            deform: domain.deform_cell[t],
        };
        let g = &domain.geometry[t];
        let x: [R; NLOC] = std::array::from_fn(|l| y[local_to_global(domain, &g.vertices, l)]);
        element_lagrangian(g, &x, &co, parts, load.map(|v| &v[t]))
    });
    let mut total = R::zero();
    for e in per_element {
        total += e;
    }

    let d = &domain.dofs;
    for k in 0..2 {
        total += y[d.dof(Block::LBc, 0, k)] * domain.holdall_moment[k];
    }
    if let Some(normals) = domain.normals.as_ref() {
        let lp = domain.mesh.obstacle_loop();
        for seg in domain.mesh.obstacle_segments() {
            let m = segment_mass(seg.length);
            let kk = segment_stiffness(seg.length);
            for (ii, &i) in seg.ends.iter().enumerate() {
                for (jj, &j) in seg.ends.iter().enumerate() {
                    let (mij, aij) = (m[ii][jj], m[ii][jj] + kk[ii][jj]);
                    let ci = y[d.dof(Block::C, i, 0)];
                    let cj = y[d.dof(Block::C, j, 0)];
                    total += ci * cj * (0.5 * params.alpha * mij);
                    for c in 0..2 {
                        let bi = y[d.dof(Block::B, i, c)];
                        total += bi * y[d.dof(Block::LW, lp[j], c)] * mij;
                        total -= bi * y[d.dof(Block::LB, j, c)] * aij;
                        total += ci * y[d.dof(Block::LB, j, c)] * (mij * normals.normals[i][c]);
                    }
                }
            }
        }
    }
    Ok(total)
}

/// Jacobian of [`lagrangian_gradient`] (the Hessian of the Lagrangian, with
/// the generalized derivative of the penalty's positive part).
pub fn kkt_matrix(domain: &Domain, y: &KktVector, params: &KktParams) -> Result<SparseMatrix> {
    check(domain, y)?;
    system::system_matrix(domain, &y.data, &params.system_params(), &FULL, None)
}

/// Semismooth Newton on the full system, warm-started from `y`.
pub fn solve_kkt(domain: &Domain, y: &mut KktVector, params: &KktParams, ws: &mut Workspace) -> Result<NewtonReport> {
    params.validate()?;
    check(domain, y)?;
    let report = system::newton(domain, &mut y.data, &params.system_params(), &FULL, &params.newton_options(), ws)?;
    log::debug!(
        "kkt (alpha = {:.3e}): {} Newton steps, |r| = {:.3e}",
        params.alpha,
        report.iterations,
        report.history.last().unwrap()
    );
    Ok(report)
}

/// `∫_Ω det DF − 1`.
pub fn volume_residual(domain: &Domain, w: &[[f64; 2]]) -> f64 {
    element_dets(domain, w)
        .iter()
        .zip(&domain.geometry)
        .zip(&domain.fluid_cell)
        .filter(|(_, &f)| f)
        .map(|((j, g), _)| (j - 1.0) * g.area)
        .sum()
}

/// `∫_Ω (x + w) det DF` minus the first moment of the holdall.
pub fn barycenter_residual(domain: &Domain, w: &[[f64; 2]]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for ((j, g), _) in element_dets(domain, w)
        .iter()
        .zip(&domain.geometry)
        .zip(&domain.fluid_cell)
        .filter(|(_, &f)| f)
    {
        for k in 0..2 {
            let wbar = g.vertices.iter().map(|&v| w[v][k]).sum::<f64>() / 3.0;
            out[k] += (g.centroid[k] + wbar) * j * g.area;
        }
    }
    [out[0] - domain.holdall_moment[0], out[1] - domain.holdall_moment[1]]
}

/// Summary of the optimization problem at `y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub dissipation: f64,
    pub regularization: f64,
    pub penalty: f64,
}

impl Objective {
    pub fn total(&self) -> f64 {
        self.dissipation + self.regularization + self.penalty
    }
}

pub fn objective(domain: &Domain, y: &KktVector, params: &KktParams) -> Result<Objective> {
    check(domain, y)?;
    let w = y.w();
    let state = crate::flow::FlowState {
        v: y.nodal(Block::V),
        p: y.block(Block::P).to_vec(),
    };
    let dissipation = crate::flow::dissipation(domain, &w, &state, params.flow.nu);
    let regularization = if domain.normals.is_some() {
        let c = y.c();
        0.5 * params.alpha * c.iter().zip(curve_mass(&domain.mesh)?.matvec(c)).map(|(a, b)| a * b).sum::<f64>()
    } else {
        0.0
    };
    Ok(Objective {
        dissipation,
        regularization,
        penalty: det_penalty(domain, &w, &params.penalty()),
    })
}

/// Directional finite-difference check of one block of the gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockCheck {
    pub block: Block,
    pub directions: usize,
    /// Smallest observed convergence slope among directions whose error is
    /// above the round-off floor (`None` if every direction is exact).
    pub min_slope: Option<f64>,
    /// Largest error over all directions and steps, relative to `|∇L·d|`.
    pub max_relative_error: f64,
    pub passed: bool,
}

pub const FD_STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];
pub const MIN_SLOPE: f64 = 1.9;
/// Relative error below which a difference quotient is exact up to round-off
/// and no slope is fitted.
pub const ROUNDOFF_FLOOR: f64 = 1e-9;

/// A random point for gradient checks: moderate multipliers and states,
/// and a displacement small against the mesh size so `det DF` stays near 1.
pub fn random_point(domain: &Domain, seed: u64) -> KktVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = KktVector::zeros(domain);
    let hmin = domain.mesh.min_edge_length();
    for b in Block::ALL {
        let scale = if b == Block::W { 0.05 * hmin } else { 1.0 };
        for x in y.block_mut(b) {
            *x = scale * rng.random_range(-1.0..1.0);
        }
    }
    y
}

/// A bound above every element determinant at `y`: the penalty is then
/// active and smooth on every cell, away from its kink.
pub fn active_eta_det(domain: &Domain, y: &KktVector) -> f64 {
    element_dets(domain, &y.w()).into_iter().fold(f64::NEG_INFINITY, f64::max) + 0.05
}

/// Compares `∇L·d` from the assembled gradient with central differences of
/// [`lagrangian_value`], evaluated in double-double arithmetic, for random
/// directions supported on each block.
pub fn gradient_check(
    domain: &Domain,
    y: &KktVector,
    params: &KktParams,
    directions: usize,
    seed: u64,
) -> Result<Vec<BlockCheck>> {
    check(domain, y)?;
    let grad = lagrangian_gradient(domain, y, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for block in Block::ALL {
        let range = domain.dofs.range(block);
        let mut min_slope: Option<f64> = None;
        let mut max_rel: f64 = 0.0;
        let mut passed = true;
        for _ in 0..directions {
            let dir: Vec<f64> = range.clone().map(|_| rng.random_range(-1.0..1.0)).collect();
            let exact: f64 = range.clone().zip(&dir).map(|(i, d)| grad[i] * d).sum();
            let magnitude: f64 = range.clone().zip(&dir).map(|(i, d)| (grad[i] * d).abs()).sum();
            let mut errs = Vec::new();
            for &h in &FD_STEPS {
                let at = |s: f64| -> Result<TwoF64> {
                    let mut yt: Vec<TwoF64> = y.data.iter().map(|&v| TwoF64::new(v)).collect();
                    for (i, d) in range.clone().zip(&dir) {
                        yt[i] = yt[i] + TwoF64::prod(s, *d);
                    }
                    lagrangian_value(domain, &yt, params)
                };
                let fd = ((at(h)? - at(-h)?) / (2.0 * h)).value();
                errs.push((fd - exact).abs());
            }
            max_rel = max_rel.max(errs.iter().copied().fold(0.0, f64::max) / exact.abs().max(f64::MIN_POSITIVE));
            // f64 assembly of ∇L·d cannot be trusted below this level: the
            // constraint rows are small differences of O(|Ω|·|x|) moments
            let floor = ROUNDOFF_FLOOR * magnitude.max(f64::MIN_POSITIVE);
            if errs.iter().all(|&e| e <= floor) {
                continue;
            }
            let slope = fitted_slope(&FD_STEPS, &errs);
            min_slope = Some(min_slope.map_or(slope, |m: f64| m.min(slope)));
            if slope < MIN_SLOPE {
                passed = false;
            }
        }
        out.push(BlockCheck {
            block,
            directions,
            min_slope,
            max_relative_error: max_rel,
            passed,
        });
    }
    Ok(out)
}

/// Least-squares slope of `log e` against `log h`.
pub fn fitted_slope(h: &[f64], e: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
