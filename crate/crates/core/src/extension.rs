//! Control-to-deformation map: scalar boundary control `c` → boundary datum
//! `b` (Laplace-Beltrami on the obstacle curve) → displacement `w`
//! (advective extension into the domain).

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::fem::{curve_mass, curve_operator, solve_sparse, Block, SparseMatrix};
use crate::forms::Coefficients;
use crate::system::{self, NewtonOptions, NewtonReport, SystemParams, Workspace, EXTENSION};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtensionParams {
    pub eta_ext: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub max_halvings: usize,
}

impl Default for ExtensionParams {
    fn default() -> Self {
        Self {
            eta_ext: 0.0,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            max_halvings: 30,
        }
    }
}

impl ExtensionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_ext >= 0.0 && self.eta_ext.is_finite()) {
            return Err(Error::invalid("eta_ext", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Solves `∫ b·b̃ + D_Γ b : D_Γ b̃ = ∫ c n·b̃` on the obstacle curve, with
/// `c n` interpolated nodally. Returns `b` per obstacle-loop vertex.
pub fn solve_laplace_beltrami(domain: &Domain, c: &[f64]) -> Result<Vec<[f64; 2]>> {
    let normals = domain.require_obstacle()?;
    let nb = domain.num_boundary();
    if c.len() != nb {
        return Err(Error::LengthMismatch {
            what: "boundary control",
            expected: nb,
            got: c.len(),
        });
    }
    let a = curve_operator(&domain.mesh)?;
    let m = curve_mass(&domain.mesh)?;
    let mut b = vec![[0.0; 2]; nb];
    for k in 0..2 {
        let cn: Vec<f64> = c.iter().zip(&normals.normals).map(|(c, n)| c * n[k]).collect();
        let x = solve_sparse(&a, &m.matvec(&cn))?;
        for (bi, xi) in b.iter_mut().zip(x) {
            bi[k] = xi;
        }
    }
    Ok(b)
}

fn coefficients(eta_ext: f64) -> Coefficients {
    Coefficients {
        nu: 0.0,
        mu: 0.0,
        beta: 0.0,
        eta_det: 0.0,
        eta_ext,
    }
}

fn pack(domain: &Domain, w: &[[f64; 2]], b: &[[f64; 2]]) -> Result<Vec<f64>> {
    let d = &domain.dofs;
    if w.len() != domain.num_vertices() {
        return Err(Error::LengthMismatch {
            what: "displacement",
            expected: domain.num_vertices(),
            got: w.len(),
        });
    }
    if b.len() != domain.num_boundary() {
        return Err(Error::LengthMismatch {
            what: "boundary datum",
            expected: domain.num_boundary(),
            got: b.len(),
        });
    }
    let mut y = vec![0.0; d.len()];
    for (v, wv) in w.iter().enumerate() {
        for k in 0..2 {
            y[d.dof(Block::W, v, k)] = if domain.w_pinned[v] { 0.0 } else { wv[k] };
        }
    }
    for (i, bi) in b.iter().enumerate() {
        for k in 0..2 {
            y[d.dof(Block::B, i, k)] = bi[k];
        }
    }
    Ok(y)
}

pub(crate) fn unpack_vector(domain: &Domain, y: &[f64], block: Block) -> Vec<[f64; 2]> {
    y[domain.dofs.range(block)].chunks(2).map(|c| [c[0], c[1]]).collect()
}

/// Weak extension residual
/// `∫ (Dw + Dwᵀ):Dw̃ + η (Dw w)·w̃ − ∫_Γ b·w̃` per vertex (rows on the outer
/// boundary included).
pub fn extension_residual(domain: &Domain, w: &[[f64; 2]], b: &[[f64; 2]], eta_ext: f64) -> Result<Vec<[f64; 2]>> {
    let y = pack(domain, w, b)?;
    let params = SystemParams {
        co: coefficients(eta_ext),
        alpha: 0.0,
        load: None,
    };
    let r = system::system_residual(domain, &y, &params, &EXTENSION)?;
    Ok(unpack_vector(domain, &r, Block::LW).into_iter().map(|v| [-v[0], -v[1]]).collect())
}

/// Newton solve of the extension equation with `w = 0` on the outer
/// boundary. Starts from `initial` (zero when `None`).
pub fn solve_extension(
    domain: &Domain,
    b: &[[f64; 2]],
    params: &ExtensionParams,
    initial: Option<&[[f64; 2]]>,
) -> Result<(Vec<[f64; 2]>, NewtonReport)> {
    params.validate()?;
    let zero = vec![[0.0; 2]; domain.num_vertices()];
    let mut y = pack(domain, initial.unwrap_or(&zero), b)?;
    let sp = SystemParams {
        co: coefficients(params.eta_ext),
        alpha: 0.0,
        load: None,
    };
    let opts = NewtonOptions {
        tol: params.newton_tol,
        max_iter: params.newton_max_iter,
        max_halvings: params.max_halvings,
        watchdog: 0,
    };
    let report = system::newton(domain, &mut y, &sp, &EXTENSION, &opts, &mut Workspace::new())?;
    Ok((unpack_vector(domain, &y, Block::W), report))
}

/// `S(c)`: Laplace-Beltrami followed by the extension.
pub fn control_to_displacement(
    domain: &Domain,
    c: &[f64],
    params: &ExtensionParams,
) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    let b = solve_laplace_beltrami(domain, c)?;
    let (w, _) = solve_extension(domain, &b, params, None)?;
    Ok((b, w))
}

/// Fréchet derivatives of the extension residual.
pub struct ExtensionLinearization {
    /// `∂R/∂w`, `2N × 2N` on the interleaved vertex layout.
    pub dw: SparseMatrix,
    /// `∂R/∂b`, `2N × 2N_b`.
    pub db: SparseMatrix,
}

pub fn extension_linearization(domain: &Domain, w: &[[f64; 2]], eta_ext: f64) -> Result<ExtensionLinearization> {
    let nb = domain.num_boundary();
    let y = pack(domain, w, &vec![[0.0; 2]; nb])?;
    let params = SystemParams {
        co: coefficients(eta_ext),
        alpha: 0.0,
        load: None,
    };
    let d = &domain.dofs;
    let rows: Vec<usize> = d.range(Block::LW).collect();
    let mut map = vec![None; d.len()];
    for (j, i) in d.range(Block::W).enumerate() {
        map[i] = Some(j);
    }
    let jw = system::system_matrix(domain, &y, &params, &EXTENSION, None)?;
    let mut dw = jw.extract(&rows, &map, 2 * domain.num_vertices());
    let sub_b = system::Subsystem {
        name: "extension-b",
        eq: &[Block::LW],
        unk: &[Block::B],
    };
    let jb = system::system_matrix(domain, &y, &params, &sub_b, None)?;
    let mut map_b = vec![None; d.len()];
    for (j, i) in d.range(Block::B).enumerate() {
        map_b[i] = Some(j);
    }
    let mut db = jb.extract(&rows, &map_b, 2 * nb);
    // R = −L_λw
    for v in dw.values_mut() {
        *v = -*v;
    }
    for v in db.values_mut() {
        *v = -*v;
    }
    Ok(ExtensionLinearization { dw, db })
}
