// End-to-end acceptance checks. Runs as a plain binary so that every
// criterion prints exactly one PASS/FAIL line, even under `cargo test`.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mapshape::domain::{Domain, VelocityBc};
use mapshape::extension::solve_laplace_beltrami;
use mapshape::fem::quadrature_triangle;
use mapshape::flow::{
    dissipation, element_loads, reduced_gradient, solve_adjoint, solve_state, solve_state_with, FlowParams,
    InflowProfile,
};
use mapshape::kkt::*;
use mapshape::mesh::{fixtures, inverted_elements, load_msh, DomainMode, NormalAveraging};
use mapshape::optimizer::*;
use mapshape::system::Workspace;
use mapshape::transform::min_det;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20;

fn domain(name: &str, mode: DomainMode) -> Domain {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../meshes").join(name);
    Domain::new(load_msh(path).unwrap(), mode, NormalAveraging::Unweighted).unwrap()
}

fn circle() -> Domain {
    domain("circle_2k.msh", DomainMode::FluidOnly)
}

/// Outcome of one criterion: pass flag and a one-line measurement summary.
struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e < limit, format!("{:.0}s of {}s", e.as_secs_f64(), limit.as_secs()))
}

fn gradient_consistency() -> Verdict {
    let t = Instant::now();
    let d = circle();
    let y = random_point(&d, SEED);
    // bound above every det: the penalty is smooth and active on all cells
    let params = KktParams {
        eta_det: active_eta_det(&d, &y),
        ..KktParams::default()
    };
    let checks = gradient_check(&d, &y, &params, 20, SEED).unwrap();
    let worst = checks.iter().filter_map(|c| c.min_slope).fold(f64::INFINITY, f64::min);
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| format!("{:?}", c.block)).collect();
    let (fast, time) = within(t, Duration::from_secs(120));
    verdict(
        checks.len() == 11 && failed.is_empty() && fast,
        format!("{} blocks, min slope {worst:.3}, failing {failed:?}, {time}", checks.len()),
    )
}

fn adjoint_gradient() -> Verdict {
    let t = Instant::now();
    let d = circle();
    let params = FlowParams {
        nu: 0.1,
        newton_tol: 1e-12,
        ..FlowParams::default()
    };
    let w0 = vec![[0.0; 2]; d.num_vertices()];
    let mut ws = Workspace::new();
    let (s0, _) = solve_state_with(&d, &w0, &params, None, &mut ws).unwrap();
    let a = solve_adjoint(&d, &w0, &s0, &params).unwrap();
    let g = reduced_gradient(&d, &w0, &s0, &a, &params).unwrap();
    // random free dofs in the first ring around the obstacle, where the
    // sensitivity is well above round-off
    let lp = d.mesh.obstacle_loop().to_vec();
    let mut ring: Vec<usize> = Vec::new();
    for tri in d.mesh.triangles() {
        if tri.iter().any(|v| lp.contains(v)) {
            for &v in tri {
                if !d.w_pinned[v] && !lp.contains(&v) && !ring.contains(&v) {
                    ring.push(v);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut dofs: Vec<(usize, usize)> = ring.iter().flat_map(|&v| [(v, 0), (v, 1)]).collect();
    dofs.shuffle(&mut rng);
    let mut worst: f64 = 0.0;
    for &(v, k) in dofs.iter().take(5) {
        let mut best = f64::INFINITY;
        for h in [1e-3, 1e-4, 1e-5] {
            let mut j_at = |s: f64| {
                let mut w = w0.clone();
                w[v][k] += s;
                let (st, _) = solve_state_with(&d, &w, &params, Some(&s0), &mut ws).unwrap();
                dissipation(&d, &w, &st, params.nu)
            };
            let fd = (j_at(h) - j_at(-h)) / (2.0 * h);
            best = best.min((fd - g[v][k]).abs() / g[v][k].abs());
        }
        worst = worst.max(best);
    }
    let (fast, time) = within(t, Duration::from_secs(180));
    verdict(worst < 1e-4 && fast, format!("worst relative error {worst:.2e} (< 1e-4), {time}"))
}

// stream function sin²(πx) sin²(πy): divergence free, zero on the boundary
fn mms_velocity(x: [f64; 2]) -> [f64; 2] {
    let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
    [PI * sx * sx * (2.0 * PI * x[1]).sin(), -PI * (2.0 * PI * x[0]).sin() * sy * sy]
}

// with pressure sin(πx) cos(πy)
fn mms_forcing(x: [f64; 2], nu: f64) -> [f64; 2] {
    let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
    let (s2x, s2y) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin());
    let (c2x, c2y) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos());
    let [v1, v2] = mms_velocity(x);
    let (d1x, d1y) = (PI * PI * s2x * s2y, 2.0 * PI * PI * sx * sx * c2y);
    let (d2x, d2y) = (-2.0 * PI * PI * c2x * sy * sy, -PI * PI * s2x * s2y);
    let lap1 = 2.0 * PI.powi(3) * c2x * s2y - 4.0 * PI.powi(3) * sx * sx * s2y;
    let lap2 = 4.0 * PI.powi(3) * s2x * sy * sy - 2.0 * PI.powi(3) * s2x * c2y;
    let px = PI * (PI * x[0]).cos() * (PI * x[1]).cos();
    let py = -PI * sx * sy;
    [
        -nu * lap1 + v1 * d1x + v2 * d1y + px,
        -nu * lap2 + v1 * d2x + v2 * d2y + py,
    ]
}

fn mms_error(n: usize) -> f64 {
    let nu = 0.1;
    let mut d = Domain::new(
        fixtures::rectangle(0.0, 1.0, 0.0, 1.0, n, n),
        DomainMode::FluidOnly,
        NormalAveraging::Unweighted,
    )
    .unwrap();
    let on_boundary: Vec<bool> = d
        .mesh
        .vertices()
        .iter()
        .map(|x| x[0] == 0.0 || x[0] == 1.0 || x[1] == 0.0 || x[1] == 1.0)
        .collect();
    for (bc, &b) in d.velocity_bc.iter_mut().zip(&on_boundary) {
        if b {
            *bc = VelocityBc::Zero;
        }
    }
    // closed cavity: fix the pressure constant at the origin, where p = 0
    let origin = d.mesh.vertices().iter().position(|x| x == &[0.0, 0.0]).unwrap();
    d.pressure_pinned[origin] = true;
    let params = FlowParams {
        nu,
        inflow: InflowProfile::Zero,
        body_force: Some(Arc::new(element_loads(&d, |x| mms_forcing(x, nu)))),
        ..FlowParams::default()
    };
    let w = vec![[0.0; 2]; d.num_vertices()];
    let s = solve_state(&d, &w, &params).unwrap();
    let quad = quadrature_triangle(4).unwrap();
    let mut err = 0.0;
    for g in &d.geometry {
        for q in quad {
            let mut x = [0.0; 2];
            let mut vh = [0.0; 2];
            for a in 0..3 {
                for k in 0..2 {
                    x[k] += q.bary[a] * g.points[a][k];
                    vh[k] += q.bary[a] * s.v[g.vertices[a]][k];
                }
            }
            let v = mms_velocity(x);
            err += q.weight * g.area * ((vh[0] - v[0]).powi(2) + (vh[1] - v[1]).powi(2));
        }
    }
    err.sqrt()
}

fn mms_convergence() -> Verdict {
    let t = Instant::now();
    let errs: Vec<f64> = [8, 16, 32, 64].iter().map(|&n| mms_error(n)).collect();
    let rates: Vec<f64> = errs.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
    let (fast, time) = within(t, Duration::from_secs(300));
    verdict(
        rates.iter().all(|r| (r - 2.0).abs() <= 0.2) && fast,
        format!("rates {rates:.3?} (2.0 ± 0.2), {time}"),
    )
}

fn circle_closed_form() -> Verdict {
    // b − Δ_Γ b = n on the circle of radius r: b = r²/(r² + 1) n
    let r = 0.5;
    let gamma = r * r / (r * r + 1.0);
    let mut errs = Vec::new();
    for n in [64, 128, 256, 512] {
        let d = Domain::new(fixtures::annulus(r, 2.0, n, 4), DomainMode::FluidOnly, NormalAveraging::Unweighted)
            .unwrap();
        let b = solve_laplace_beltrami(&d, &vec![1.0; d.num_boundary()]).unwrap();
        let x = d.mesh.vertices();
        let discrete = &d.require_obstacle().unwrap().normals;
        let err = d
            .mesh
            .obstacle_loop()
            .iter()
            .zip(&b)
            .zip(discrete)
            .map(|((&v, b), nd)| {
                // exact radial normal, oriented like the domain's convention
                let radial = [x[v][0] / r, x[v][1] / r];
                let sign = (radial[0] * nd[0] + radial[1] * nd[1]).signum();
                let nrm = [sign * radial[0], sign * radial[1]];
                (b[0] - gamma * nrm[0]).abs().max((b[1] - gamma * nrm[1]).abs())
            })
            .fold(0.0, f64::max);
        errs.push(err);
    }
    let decreasing = errs.windows(2).all(|e| e[1] < e[0]);
    verdict(
        decreasing && errs[3] < 1e-3,
        format!("max nodal error {} at 64..512 segments (< 1e-3 at 512)", sci(&errs)),
    )
}

fn geometric_constraints(outcome: &RunResult, d: &Domain, t: Duration) -> Verdict {
    match outcome {
        Ok(out) => {
            let w = out.y.w();
            let vol = volume_residual(d, &w);
            let bc = barycenter_residual(d, &w);
            verdict(
                vol.abs() < 1e-7 && bc.iter().all(|b| b.abs() < 1e-7) && t < Duration::from_secs(900),
                format!("volume {vol:.2e}, barycenter {} (< 1e-7), {:.0}s of 900s", sci(&bc), t.as_secs_f64()),
            )
        }
        Err(e) => verdict(false, format!("run failed: {e}")),
    }
}

fn penalty_activity(outcome: &RunResult, d: &Domain) -> Verdict {
    let inactive = match outcome {
        Ok(out) => min_det(d, &out.y.w()),
        Err(e) => return verdict(false, format!("default run failed: {e}")),
    };
    let params = KktParams {
        eta_det: 0.5,
        ..KktParams::default()
    };
    match run(d, &params, &ContinuationSchedule::DIRECT, Algorithm::Direct) {
        Ok(out) => {
            let obj = objective(d, &out.y, &params).unwrap();
            verdict(
                inactive > 5e-2 && obj.penalty > 0.0,
                format!(
                    "eta_det 5e-2: min det {inactive:.3} (> 5e-2); eta_det 0.5: penalty {:.2e} (> 0)",
                    obj.penalty
                ),
            )
        }
        Err(e) => verdict(false, format!("eta_det 0.5 run failed: {e}")),
    }
}

fn quality_trend() -> Verdict {
    let t = Instant::now();
    let d = circle();
    let etas = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0];
    let rows = quality_sweep(&d, &KktParams::default(), &ContinuationSchedule::DIRECT, Algorithm::Direct, &etas).unwrap();
    let q: Option<Vec<f64>> = rows.iter().map(|r| r.worst_quality).collect();
    let Some(q) = q else {
        return verdict(false, format!("sweep point failed: {rows:?}"));
    };
    let strict = q[3] < q[0];
    let monotone = q.windows(2).all(|p| p[1] <= 1.05 * p[0]);
    let saturated = (q[4] - q[5]).abs() < 0.15 * q[5];
    let (fast, time) = within(t, Duration::from_secs(3600));
    verdict(
        strict && monotone && saturated && fast,
        format!("worst quality {q:.2?} over eta_ext {etas:?}, {time}"),
    )
}

fn iterative_behaviour() -> Verdict {
    let d = domain("circle_6k.msh", DomainMode::FluidOnly);
    let mut params = KktParams::default();
    params.flow.nu = 0.1;
    params.flow.inflow = InflowProfile::Channel;
    params.eta_ext = 1.5;
    let w0 = vec![[0.0; 2]; d.num_vertices()];
    let j0 = dissipation(&d, &w0, &solve_state(&d, &w0, &params.flow).unwrap(), params.flow.nu);
    let schedule = ContinuationSchedule::ITERATIVE;
    let alg = Algorithm::Iterative {
        eps: 1e-2,
        inner_cap: DEFAULT_INNER_CAP,
    };
    match run(&d, &params, &schedule, alg) {
        Ok(out) => {
            let last = out.log.last().unwrap();
            let decrease = 1.0 - last.dissipation / j0;
            let levels = out.log.alpha_levels();
            let expected = schedule.alphas();
            let staircase = levels.len() == expected.len()
                && levels.iter().zip(&expected).all(|(a, b)| (a - b).abs() <= 1e-12 * b);
            verdict(
                (30..=110).contains(&last.l) && decrease >= 0.10 && staircase,
                format!(
                    "{} inner iterations ([30, 110]), dissipation {j0:.4} -> {:.4} ({:.2}% decrease, >= 10%), \
                     staircase {}",
                    last.l,
                    last.dissipation,
                    100.0 * decrease,
                    if staircase { "exact" } else { "mismatch" }
                ),
            )
        }
        Err(e) => verdict(false, format!("run failed: {e}")),
    }
}

fn cross_algorithm() -> Verdict {
    let t = Instant::now();
    let d = circle();
    let mut params = KktParams::default();
    params.flow.nu = 0.1;
    params.flow.inflow = InflowProfile::Channel;
    params.eta_ext = 1.5;
    // both algorithms walk the same staircase down to 1e-6
    let schedule = ContinuationSchedule {
        alpha_init: 1e-6 * 2f64.powi(20),
        alpha_dec: 0.5,
        alpha_target: 1e-6,
    };
    let eps = 1e-2;
    let direct = run(&d, &params, &schedule, Algorithm::Direct);
    let iterative = run(
        &d,
        &params,
        &schedule,
        Algorithm::Iterative {
            eps,
            inner_cap: DEFAULT_INNER_CAP,
        },
    );
    match (direct, iterative) {
        (Ok(a), Ok(b)) => {
            let diff = relative_control_difference(&d, a.y.c(), b.y.c()).unwrap();
            let (fast, time) = within(t, Duration::from_secs(1800));
            verdict(diff < 5.0 * eps && fast, format!("relative control difference {diff:.2e} (< {:.0e}), {time}", 5.0 * eps))
        }
        (a, b) => verdict(
            false,
            format!("direct {:?}, iterative {:?}", a.err().map(|e| e.to_string()), b.err().map(|e| e.to_string())),
        ),
    }
}

fn holdall_injectivity() -> Verdict {
    let d = domain("ellipse_holdall.msh", DomainMode::Holdall);
    let params = KktParams::default();
    let schedule = ContinuationSchedule {
        alpha_init: 1e-4,
        alpha_dec: 0.5,
        alpha_target: 1e-10,
    };
    match run(&d, &params, &schedule, Algorithm::Direct) {
        Ok(out) => {
            let w = out.y.w();
            let md = min_det(&d, &w);
            let inverted = inverted_elements(&d.mesh, &w).unwrap();
            verdict(
                md > params.eta_det && inverted == 0,
                format!("min det over G {md:.3} (> {}), inverted elements {inverted}", params.eta_det),
            )
        }
        Err(e) => verdict(false, format!("run failed: {e}")),
    }
}

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    // the default-configuration run is shared by the two criteria that inspect it
    let shared = std::cell::OnceCell::new();
    let default_run = || {
        shared.get_or_init(|| {
            let d = circle();
            let t = Instant::now();
            let out = run(&d, &KktParams::default(), &ContinuationSchedule::DIRECT, Algorithm::Direct);
            (d, out, t.elapsed())
        })
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("gradient consistency of all KKT blocks", Box::new(gradient_consistency)),
        ("adjoint reduced gradient", Box::new(adjoint_gradient)),
        ("manufactured-solution flow convergence", Box::new(mms_convergence)),
        ("Laplace-Beltrami circle closed form", Box::new(circle_closed_form)),
        (
            "volume and barycenter constraints at the optimum",
            Box::new(|| {
                let (d, out, t) = default_run();
                geometric_constraints(out, d, *t)
            }),
        ),
        (
            "det penalty inactive at 5e-2, active at 0.5",
            Box::new(|| {
                let (d, out, _) = default_run();
                penalty_activity(out, d)
            }),
        ),
        ("mesh quality trend over eta_ext", Box::new(quality_trend)),
        ("iterative algorithm on the fixed-point schedule", Box::new(iterative_behaviour)),
        ("direct and iterative controls agree", Box::new(cross_algorithm)),
        ("holdall deformation stays injective", Box::new(holdall_injectivity)),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.passed {
            failures += 1;
        }
        println!(
            "criterion {:>2}: {} {name}: {} [{:.0}s]",
            i + 1,
            if v.passed { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
