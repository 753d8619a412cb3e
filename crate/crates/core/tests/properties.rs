use std::path::PathBuf;
use std::sync::OnceLock;

use mapshape::domain::Domain;
use mapshape::fem::{curve_operator, quadrature_triangle};
use mapshape::mesh::{
    deform_mesh, fixtures, load_msh, signed_area, triangle_quality, DomainMode, Mesh, NormalAveraging,
};
use mapshape::optimizer::ContinuationSchedule;
use mapshape::transform::{element_dets, element_transform};
use proptest::prelude::*;

fn mesh_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../meshes").join(name)
}

fn annulus() -> &'static Domain {
    static D: OnceLock<Domain> = OnceLock::new();
    D.get_or_init(|| {
        Domain::new(fixtures::annulus(0.5, 1.5, 24, 4), DomainMode::FluidOnly, NormalAveraging::Unweighted).unwrap()
    })
}

fn holdall() -> &'static Domain {
    static D: OnceLock<Domain> = OnceLock::new();
    D.get_or_init(|| {
        Domain::new(load_msh(mesh_path("ellipse_holdall.msh")).unwrap(), DomainMode::Holdall, NormalAveraging::Unweighted)
            .unwrap()
    })
}

fn seeds() -> impl Strategy<Value = [f64; 4]> {
    [0.5..3.0f64, 0.5..3.0f64, 0.5..3.0f64, 0.5..3.0f64]
}

fn point() -> impl Strategy<Value = [f64; 2]> {
    [-2.0..2.0f64, -2.0..2.0f64]
}

/// A displacement from a seed: smooth, and small against the mesh size so
/// that no element inverts.
fn small_displacement(mesh: &Mesh, seed: [f64; 4], pinned: &[bool]) -> Vec<[f64; 2]> {
    let h = mesh.min_edge_length();
    mesh.vertices()
        .iter()
        .zip(pinned)
        .map(|(x, &p)| {
            if p {
                [0.0; 2]
            } else {
                [
                    0.2 * h * (seed[0] * x[0] + seed[1] * x[1]).sin(),
                    0.2 * h * (seed[2] * x[0] - seed[3] * x[1]).cos(),
                ]
            }
        })
        .collect()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quality_is_at_least_two(a in point(), b in point(), c in point()) {
        prop_assume!(signed_area(a, b, c).abs() > 1e-6);
        let (b, c) = if signed_area(a, b, c) > 0.0 { (b, c) } else { (c, b) };
        prop_assert!(triangle_quality(a, b, c).unwrap() >= 2.0 - 1e-12);
    }

    #[test]
    fn order_four_rule_is_exact_on_quartics(a in point(), b in point(), c in point(), e in (0usize..=4, 0usize..=4)) {
        // ∫_T λ₁^i λ₂^j = 2|T| i! j! / (i + j + 2)!
        let (i, j) = e;
        prop_assume!(i + j <= 4);
        let area = signed_area(a, b, c).abs();
        prop_assume!(area > 1e-6);
        let rule = quadrature_triangle(4).unwrap();
        let q: f64 = rule.iter().map(|p| p.weight * area * p.bary[0].powi(i as i32) * p.bary[1].powi(j as i32)).sum();
        let exact = 2.0 * area * factorial(i) * factorial(j) / factorial(i + j + 2);
        prop_assert!((q - exact).abs() <= 1e-14 * area.max(1.0), "{q} vs {exact}");
    }

    #[test]
    fn det_derivative_is_trace_identity(seed in seeds(), dir in seeds(), t in 0usize..192) {
        let d = annulus();
        let m = &d.mesh;
        let w = small_displacement(m, seed, &d.w_pinned);
        let wt = small_displacement(m, dir, &vec![false; m.num_vertices()]);
        let base = element_transform(m, &w, t).unwrap();
        // Dw̃ on this element, from the transform of w̃ alone
        let dwt = element_transform(m, &wt, t).unwrap().df;
        let dwt = [[dwt[0][0] - 1.0, dwt[0][1]], [dwt[1][0], dwt[1][1] - 1.0]];
        let a = base.dfinv;
        let mut trace = 0.0;
        for i in 0..2 {
            for k in 0..2 {
                trace += a[i][k] * dwt[k][i];
            }
        }
        let predicted_det = trace * base.det;
        let mut errs = Vec::new();
        let mut inv_errs = Vec::new();
        for h in [1e-2, 1e-3] {
            let moved: Vec<[f64; 2]> = w.iter().zip(&wt).map(|(p, q)| [p[0] + h * q[0], p[1] + h * q[1]]).collect();
            let tr = element_transform(m, &moved, t).unwrap();
            errs.push(((tr.det - base.det) / h - predicted_det).abs());
            // −A Dw̃ A
            let mut worst: f64 = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let mut pred = 0.0;
                    for k in 0..2 {
                        for l in 0..2 {
                            pred -= a[i][k] * dwt[k][l] * a[l][j];
                        }
                    }
                    worst = worst.max(((tr.dfinv[i][j] - a[i][j]) / h - pred).abs());
                }
            }
            inv_errs.push(worst);
        }
        // first-order differences: the error falls by ≈ 10 per decade of h,
        // unless it is already at round-off
        prop_assert!(errs[1] <= 0.2 * errs[0] || errs[1] < 1e-12, "{errs:?}");
        prop_assert!(inv_errs[1] <= 0.2 * inv_errs[0] || inv_errs[1] < 1e-12, "{inv_errs:?}");
    }

    #[test]
    fn volume_is_transported_exactly(seed in seeds()) {
        let d = annulus();
        let m = &d.mesh;
        let w = small_displacement(m, seed, &d.w_pinned);
        let dets = element_dets(d, &w);
        let pulled: f64 = dets.iter().zip(&d.geometry).map(|(j, g)| j * g.area).sum();
        let moved = deform_mesh(m, &w).unwrap();
        let direct: f64 = (0..moved.num_triangles()).map(|t| moved.triangle_area(t)).sum();
        prop_assert!((pulled - direct).abs() < 1e-12, "{pulled} vs {direct}");
    }

    #[test]
    fn deformation_round_trips(seed in seeds()) {
        let d = annulus();
        let m = &d.mesh;
        let w = small_displacement(m, seed, &d.w_pinned);
        let moved = deform_mesh(m, &w).unwrap();
        let back: Vec<[f64; 2]> = w.iter().map(|v| [-v[0], -v[1]]).collect();
        let restored = deform_mesh(&moved, &back).unwrap();
        for (p, q) in restored.vertices().iter().zip(m.vertices()) {
            prop_assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn holdall_volume_is_invariant(seed in seeds()) {
        // w = 0 on ∂G keeps |F(G)| = |G|: fluid and obstacle changes cancel
        let d = holdall();
        let w = small_displacement(&d.mesh, seed, &d.w_pinned);
        let change: f64 = element_dets(d, &w).iter().zip(&d.geometry).map(|(j, g)| (j - 1.0) * g.area).sum();
        prop_assert!(change.abs() < 1e-10, "{change}");
    }

    #[test]
    fn curve_operator_is_positive_definite(x in prop::collection::vec(-1.0..1.0f64, 24)) {
        let a = curve_operator(&annulus().mesh).unwrap();
        prop_assume!(x.iter().any(|v| v.abs() > 1e-3));
        let ax = a.matvec(&x);
        let q: f64 = x.iter().zip(&ax).map(|(p, q)| p * q).sum();
        prop_assert!(q > 0.0);
    }

    #[test]
    fn schedule_is_geometric(init in -6.0..0.0f64, dec in 0.05..0.95f64, steps in 0u32..30) {
        let alpha_init = 10f64.powf(init);
        let s = ContinuationSchedule { alpha_init, alpha_dec: dec, alpha_target: alpha_init * dec.powi(steps as i32) };
        let a = s.alphas();
        prop_assert_eq!(a.len(), steps as usize + 1);
        prop_assert_eq!(a[0], alpha_init);
        for p in a.windows(2) {
            prop_assert!(p[1] < p[0]);
            prop_assert!((p[1] / p[0] - dec).abs() < 1e-12);
        }
    }
}

#[test]
fn tunnel_and_obstacle_partition_the_holdall() {
    let m = load_msh(mesh_path("circle_2k.msh")).unwrap();
    let total = m.fluid_area() + m.obstacle_polygon_area();
    assert!((total - 84.0).abs() < 84.0 * 1e-8, "{total}");
    let g = &holdall().mesh;
    let all: f64 = (0..g.num_triangles()).map(|t| g.triangle_area(t)).sum();
    assert!((all - 84.0).abs() < 84.0 * 1e-8, "{all}");
}

#[test]
fn obstacle_polyline_is_closed() {
    for name in ["circle_2k.msh", "ellipse_holdall.msh"] {
        let m = load_msh(mesh_path(name)).unwrap();
        let mut s = [0.0; 2];
        for seg in m.obstacle_segments() {
            s[0] += seg.length * seg.normal[0];
            s[1] += seg.length * seg.normal[1];
        }
        assert!(s[0].abs() < 1e-12 && s[1].abs() < 1e-12, "{name}: {s:?}");
    }
}

#[test]
fn curve_operator_is_symmetric() {
    let a = curve_operator(&annulus().mesh).unwrap();
    for r in 0..a.nrows() {
        for (c, v) in a.row(r) {
            assert!((v - a.get(c, r)).abs() < 1e-14);
        }
    }
}
