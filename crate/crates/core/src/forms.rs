//! Element-level weak forms of the reduced Lagrangian.
//!
//! [`element_residual`] returns the derivative of the element Lagrangian
//! with respect to every local unknown. Its blocks were derived by hand
//! from [`element_lagrangian`] using
//! `δJ = J tr(A δDF)` and `δA = −A δDF A` with `A = DF⁻¹`;
//! the two functions share no intermediate code, so finite differences of
//! the latter check the former. Both are generic over [`Real`] so the same
//! code yields exact element Jacobians through [`Dual`](crate::scalar::Dual).
//!
//! Local unknowns of a triangle (vector fields interleaved per vertex):
//!
//! | range  | field |
//! |--------|-------|
//! | 0..6   | w     |
//! | 6..12  | v     |
//! | 12..15 | p     |
//! | 15..21 | λw    |
//! | 21..27 | λv    |
//! | 27..30 | λp    |
//! | 30     | λvol  |
//! | 31..33 | λbc   |

use crate::fem::{quadrature_triangle, ElementGeometry};
use crate::scalar::{ddot2, det2, dot2, inv2, matmul2, matvec2, tmatvec2, trace2, Mat2, Real, Vec2};

pub const NLOC: usize = 33;
pub const W: usize = 0;
pub const V: usize = 6;
pub const P: usize = 12;
pub const LW: usize = 15;
pub const LV: usize = 21;
pub const LP: usize = 27;
pub const LVOL: usize = 30;
pub const LBC: usize = 31;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub nu: f64,
    /// PSPG weight.
    pub mu: f64,
    pub beta: f64,
    pub eta_det: f64,
    pub eta_ext: f64,
}

/// Which parts of the element Lagrangian to evaluate. `fluid` covers the
/// flow terms and the geometric constraints, `deform` the extension
/// operator and the determinant penalty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Parts {
    pub fluid: bool,
    pub deform: bool,
}

impl Parts {
    pub const ALL: Parts = Parts {
        fluid: true,
        deform: true,
    };
}

/// `∫_T f φ_a` for each vertex of a triangle (verification body force).
pub type ElementLoad = [[f64; 2]; 3];

#[inline]
fn mass_weight(area: f64, b: usize, c: usize) -> f64 {
    if b == c {
        area / 6.0
    } else {
        area / 12.0
    }
}

#[inline]
fn vec2<R: Real>(x: &[R; NLOC], off: usize, a: usize) -> Vec2<R> {
    [x[off + 2 * a], x[off + 2 * a + 1]]
}

#[inline]
fn grad_matrix<R: Real>(x: &[R; NLOC], off: usize, g: &[[f64; 2]; 3]) -> Mat2<R> {
    let mut m = [[R::zero(); 2]; 2];
    for (a, ga) in g.iter().enumerate() {
        for i in 0..2 {
            let u = x[off + 2 * a + i];
            m[i][0] += u * ga[0];
            m[i][1] += u * ga[1];
        }
    }
    m
}

#[inline]
fn deformation_gradient<R: Real>(dw: &Mat2<R>) -> Mat2<R> {
    [[dw[0][0] + 1.0, dw[0][1]], [dw[1][0], dw[1][1] + 1.0]]
}

/// Derivative of the element Lagrangian with respect to all local unknowns.
pub fn element_residual<R: Real>(
    g: &ElementGeometry,
    x: &[R; NLOC],
    co: &Coefficients,
    parts: Parts,
    load: Option<&ElementLoad>,
) -> [R; NLOC] {
    let mut out = [R::zero(); NLOC];
    if !parts.fluid && !parts.deform {
        return out;
    }
    let area = g.area;
    let ga: [Vec2<R>; 3] = g.grads.map(|v| [R::cst(v[0]), R::cst(v[1])]);
    let dw = grad_matrix(x, W, &g.grads);
    let df = deformation_gradient(&dw);
    let jac = det2(&df);

    if parts.fluid {
        let ainv = inv2(&df, jac);
        let s: [Vec2<R>; 3] = [0, 1, 2].map(|a| tmatvec2(&ainv, &ga[a]));
        let v = [0, 1, 2].map(|a| vec2(x, V, a));
        let lv = [0, 1, 2].map(|a| vec2(x, LV, a));
        let mut gv = [[R::zero(); 2]; 2];
        let mut gl = [[R::zero(); 2]; 2];
        let mut ap = [R::zero(); 2];
        let mut al = [R::zero(); 2];
        for a in 0..3 {
            for i in 0..2 {
                for j in 0..2 {
                    gv[i][j] += v[a][i] * s[a][j];
                    gl[i][j] += lv[a][i] * s[a][j];
                }
                ap[i] += x[P + a] * s[a][i];
                al[i] += x[LP + a] * s[a][i];
            }
        }
        let pm = (x[P] + x[P + 1] + x[P + 2]) * (area / 3.0);
        let lm = (x[LP] + x[LP + 1] + x[LP + 2]) * (area / 3.0);
        let trv = trace2(&gv);
        let trl = trace2(&gl);
        let gvgv = ddot2(&gv, &gv);
        let gvgl = ddot2(&gv, &gl);
        let gv_v = [0, 1, 2].map(|b| matvec2(&gv, &v[b]));
        let gvt_l = [0, 1, 2].map(|c| tmatvec2(&gv, &lv[c]));
        let mut conv = R::zero();
        for b in 0..3 {
            for c in 0..3 {
                conv += dot2(&gv_v[b], &lv[c]) * mass_weight(area, b, c);
            }
        }
        let nuj = jac * (co.nu * area);
        let tau = co.mu * g.h * g.h * area;
        let wbar = [
            (x[W] + x[W + 2] + x[W + 4]) / 3.0,
            (x[W + 1] + x[W + 3] + x[W + 5]) / 3.0,
        ];
        let lbc = [x[LBC], x[LBC + 1]];
        let lbc_pos = lbc[0] * (wbar[0] + g.centroid[0]) + lbc[1] * (wbar[1] + g.centroid[1]);
        let load_l = match load {
            Some(f) => {
                let mut acc = R::zero();
                for c in 0..3 {
                    acc += lv[c][0] * f[c][0] + lv[c][1] * f[c][1];
                }
                acc
            }
            None => R::zero(),
        };

        for a in 0..3 {
            let sa = s[a];
            let gvs = matvec2(&gv, &sa);
            let gls = matvec2(&gl, &sa);
            let gvt_gvs = tmatvec2(&gv, &gvs);
            let gvt_gls = tmatvec2(&gv, &gls);
            let glt_gvs = tmatvec2(&gl, &gvs);
            let glt_s = tmatvec2(&gl, &sa);
            let gvt_s = tmatvec2(&gv, &sa);
            let sa_al = dot2(&sa, &al);
            let sa_ap = dot2(&sa, &ap);
            let sv = [0, 1, 2].map(|b| dot2(&sa, &v[b]));

            for k in 0..2 {
                let mut cv = R::zero();
                let mut cl = R::zero();
                let mut adv_v = R::zero();
                let mut adv_l = R::zero();
                for b in 0..3 {
                    for c in 0..3 {
                        let m = mass_weight(area, b, c);
                        cv += sv[b] * gvt_l[c][k] * m;
                        cl += sv[b] * lv[c][k] * m;
                    }
                    let m = mass_weight(area, a, b);
                    adv_v += gvt_l[b][k] * m;
                    adv_l += gv_v[b][k] * m;
                }

                let lw_ak = nuj * (-gvt_gvs[k] + gvgv * sa[k] * 0.5 + gvt_gls[k] + glt_gvs[k] - gvgl * sa[k])
                    + jac * (cv - sa[k] * conv)
                    + pm * jac * (trl * sa[k] - glt_s[k])
                    + lm * jac * (trv * sa[k] - gvt_s[k])
                    - (sa_al * ap[k] + sa_ap * al[k]) * tau
                    - jac * lbc[k] * (area / 3.0)
                    - sa[k] * jac * lbc_pos * area
                    - x[LVOL] * sa[k] * jac * area
                    + jac * sa[k] * load_l;
                out[W + 2 * a + k] += lw_ak;

                out[V + 2 * a + k] += nuj * (gvs[k] - gls[k]) - jac * (cl + adv_v) + lm * jac * sa[k];

                let mut lv_ak = -nuj * gvs[k] - jac * adv_l + pm * jac * sa[k];
                if let Some(f) = load {
                    lv_ak += jac * f[a][k];
                }
                out[LV + 2 * a + k] += lv_ak;
            }
            out[P + a] += jac * trl * (area / 3.0) + sa_al * tau;
            out[LP + a] += jac * trv * (area / 3.0) + sa_ap * tau;
        }
        out[LVOL] += -(jac - 1.0) * area;
        for k in 0..2 {
            out[LBC + k] += -jac * (wbar[k] + g.centroid[k]) * area;
        }
    }

    if parts.deform {
        let w = [0, 1, 2].map(|a| vec2(x, W, a));
        let lw = [0, 1, 2].map(|a| vec2(x, LW, a));
        let dl = grad_matrix(x, LW, &g.grads);
        let sym = [
            [dw[0][0] + dw[0][0], dw[0][1] + dw[1][0]],
            [dw[1][0] + dw[0][1], dw[1][1] + dw[1][1]],
        ];
        let dw_w = [0, 1, 2].map(|b| matvec2(&dw, &w[b]));
        let dwt_l = [0, 1, 2].map(|c| tmatvec2(&dw, &lw[c]));
        let pen = (-jac + co.eta_det).pos() * co.beta;
        // J·DF⁻ᵀ = cofactor matrix, avoids dividing by J
        let cof = [[df[1][1], -df[1][0]], [-df[0][1], df[0][0]]];
        let eta = co.eta_ext;
        for a in 0..3 {
            let dl_g = matvec2(&dl, &ga[a]);
            let dlt_g = tmatvec2(&dl, &ga[a]);
            let sym_g = matvec2(&sym, &ga[a]);
            let js = matvec2(&cof, &ga[a]);
            let gw = [0, 1, 2].map(|b| dot2(&ga[a], &w[b]));
            for k in 0..2 {
                let mut adv = R::zero();
                let mut res = R::zero();
                for b in 0..3 {
                    let mab = mass_weight(area, a, b);
                    for c in 0..3 {
                        adv += gw[b] * lw[c][k] * mass_weight(area, b, c);
                    }
                    adv += dwt_l[b][k] * mab;
                    res += dw_w[b][k] * mab;
                }
                out[W + 2 * a + k] += -pen * js[k] * area - (dl_g[k] + dlt_g[k]) * area - adv * eta;
                out[LW + 2 * a + k] += -sym_g[k] * area - res * eta;
            }
        }
    }
    out
}

/// Element Lagrangian evaluated by fourth-order quadrature, written directly
/// from the functional (no derived quantities shared with
/// [`element_residual`]).
pub fn element_lagrangian<R: Real>(
    g: &ElementGeometry,
    x: &[R; NLOC],
    co: &Coefficients,
    parts: Parts,
    load: Option<&ElementLoad>,
) -> R {
    let mut total = R::zero();
    if !parts.fluid && !parts.deform {
        return total;
    }
    let quad = quadrature_triangle(4).expect("order 4 is supported");
    let area = g.area;
    let dw = grad_matrix(x, W, &g.grads);
    let df = deformation_gradient(&dw);
    let jac = det2(&df);
    let at_point = |off: usize, bary: &[f64; 3]| -> Vec2<R> {
        let mut u = [R::zero(); 2];
        for a in 0..3 {
            u[0] += x[off + 2 * a] * bary[a];
            u[1] += x[off + 2 * a + 1] * bary[a];
        }
        u
    };
    let scalar_at = |off: usize, bary: &[f64; 3]| x[off] * bary[0] + x[off + 1] * bary[1] + x[off + 2] * bary[2];

    if parts.fluid {
        let a = inv2(&df, jac);
        let gv = matmul2(&grad_matrix(x, V, &g.grads), &a);
        let gl = matmul2(&grad_matrix(x, LV, &g.grads), &a);
        let grad_scalar = |off: usize| -> Vec2<R> {
            let mut d = [R::zero(); 2];
            for (k, ga) in g.grads.iter().enumerate() {
                d[0] += x[off + k] * ga[0];
                d[1] += x[off + k] * ga[1];
            }
            // (Dp · DF⁻¹)ᵀ
            tmatvec2(&a, &d)
        };
        let (gp, glp) = (grad_scalar(P), grad_scalar(LP));
        for q in quad {
            let vq = at_point(V, &q.bary);
            let lvq = at_point(LV, &q.bary);
            let wq = at_point(W, &q.bary);
            let pq = scalar_at(P, &q.bary);
            let lpq = scalar_at(LP, &q.bary);
            let mut xq = [0.0; 2];
            for (k, pt) in g.points.iter().enumerate() {
                xq[0] += pt[0] * q.bary[k];
                xq[1] += pt[1] * q.bary[k];
            }
            let conv = dot2(&matvec2(&gv, &vq), &lvq);
            let flow = ddot2(&gv, &gv) * (0.5 * co.nu) - ddot2(&gv, &gl) * co.nu - conv
                + pq * trace2(&gl)
                + lpq * trace2(&gv);
            let bary_term = x[LBC] * (wq[0] + xq[0]) + x[LBC + 1] * (wq[1] + xq[1]);
            let integrand = flow * jac - x[LVOL] * (jac - 1.0) - bary_term * jac;
            total += integrand * (q.weight * area);
        }
        total += dot2(&gp, &glp) * (co.mu * g.h * g.h * area);
        if let Some(f) = load {
            let mut acc = R::zero();
            for a in 0..3 {
                acc += x[LV + 2 * a] * f[a][0] + x[LV + 2 * a + 1] * f[a][1];
            }
            total += jac * acc;
        }
    }

    if parts.deform {
        let dl = grad_matrix(x, LW, &g.grads);
        let sym = [
            [dw[0][0] * 2.0, dw[0][1] + dw[1][0]],
            [dw[1][0] + dw[0][1], dw[1][1] * 2.0],
        ];
        let pen = (-jac + co.eta_det).pos();
        total += pen * pen * (0.5 * co.beta * area) - ddot2(&sym, &dl) * area;
        for q in quad {
            let wq = at_point(W, &q.bary);
            let lwq = at_point(LW, &q.bary);
            total -= dot2(&matvec2(&dw, &wq), &lwq) * (co.eta_ext * q.weight * area);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{Dual, TwoF64};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geometry() -> ElementGeometry {
        let points = [[0.1, 0.2], [0.9, 0.0], [0.3, 0.7]];
        let area = crate::mesh::signed_area(points[0], points[1], points[2]);
        ElementGeometry {
            vertices: [0, 1, 2],
            points,
            area,
            grads: crate::fem::p1_gradients(points).unwrap(),
            h: 0.9f64.hypot(0.7) - 0.3,
            centroid: [1.3 / 3.0, 0.9 / 3.0],
        }
    }

    fn coefficients() -> Coefficients {
        Coefficients {
            nu: 0.3,
            mu: 0.2,
            beta: 7.0,
            eta_det: 1.2,
            eta_ext: 0.8,
        }
    }

    fn random_state(seed: u64, scale_w: f64) -> [f64; NLOC] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        std::array::from_fn(|l| {
            let s = if l < 6 { scale_w } else { 1.0 };
            s * rng.random_range(-1.0..1.0)
        })
    }

    fn lagrangian_gradient(x: &[f64; NLOC], parts: Parts, load: Option<&ElementLoad>) -> [f64; NLOC] {
        let xd: [Dual<NLOC>; NLOC] = std::array::from_fn(|l| Dual::variable(x[l], l));
        element_lagrangian(&geometry(), &xd, &coefficients(), parts, load).eps
    }

    #[test]
    fn residual_is_lagrangian_gradient() {
        let load = [[0.3, -0.1], [0.05, 0.2], [-0.4, 0.1]];
        for seed in 0..20 {
            let x = random_state(seed, 0.15);
            for parts in [
                Parts::ALL,
                Parts { fluid: true, deform: false },
                Parts { fluid: false, deform: true },
            ] {
                for ld in [None, Some(&load)] {
                    let hand = element_residual(&geometry(), &x, &coefficients(), parts, ld);
                    let ad = lagrangian_gradient(&x, parts, ld);
                    for l in 0..NLOC {
                        let scale = 1.0 + ad[l].abs();
                        assert!(
                            (hand[l] - ad[l]).abs() < 1e-11 * scale,
                            "seed {seed} {parts:?} entry {l}: {} vs {}",
                            hand[l],
                            ad[l]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn residual_matches_double_double_differences() {
        let x = random_state(99, 0.2);
        let co = coefficients();
        let g = geometry();
        let hand = element_residual(&g, &x, &co, Parts::ALL, None);
        let h = 1e-7;
        for l in 0..NLOC {
            let at = |s: f64| {
                let xt: [TwoF64; NLOC] =
                    std::array::from_fn(|m| if m == l { TwoF64::sum(x[m], s) } else { TwoF64::new(x[m]) });
                element_lagrangian(&g, &xt, &co, Parts::ALL, None)
            };
            let fd = (at(h) - at(-h)).value() / (2.0 * h);
            assert!((fd - hand[l]).abs() < 1e-8 * (1.0 + hand[l].abs()), "entry {l}: {fd} vs {}", hand[l]);
        }
    }

    #[test]
    fn jacobian_is_symmetric() {
        let x = random_state(7, 0.1);
        let xd: [Dual<NLOC>; NLOC] = std::array::from_fn(|l| Dual::variable(x[l], l));
        let r = element_residual(&geometry(), &xd, &coefficients(), Parts::ALL, None);
        for i in 0..NLOC {
            for j in 0..i {
                let (a, b) = (r[i].eps[j], r[j].eps[i]);
                assert!((a - b).abs() < 1e-11 * (1.0 + a.abs()), "({i},{j}): {a} vs {b}");
            }
        }
    }
}
