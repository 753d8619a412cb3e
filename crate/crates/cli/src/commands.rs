use std::path::Path;

use anyhow::{anyhow, Context};
use log::info;
use mapshape::domain::Domain;
use mapshape::fem::Block;
use mapshape::flow::{dissipation, solve_state};
use mapshape::kkt::{active_eta_det, gradient_check, objective, random_point, KktVector};
use mapshape::mesh::{
    deform_mesh, inverted_elements, load_msh, read_vtk, worst_quality, write_vtk, NodalField,
};
use mapshape::optimizer::{
    det_sweep, quality_sweep, run, write_det_csv, write_obstacle_polyline, write_quality_csv, RunLog,
};
use mapshape::transform::min_det;

use crate::config::RunConfig;
use crate::Command;

/// Failure classes with fixed exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Mesh(anyhow::Error),
    Solver(anyhow::Error),
    Verification(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Mesh(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Verification(_) => 4,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Mesh(e) | Failure::Solver(e) | Failure::Verification(e) => e,
        }
    }
}

/// Errors from a solve: bad parameters are configuration errors, the rest
/// are solver failures.
fn solver(e: mapshape::Error) -> Failure {
    match e {
        mapshape::Error::InvalidParameter { .. } => Failure::Config(e.into()),
        _ => Failure::Solver(e.into()),
    }
}

/// Output I/O problems are configuration problems: the directory is unusable.
fn output(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

pub fn dispatch(cfg: &RunConfig, cmd: &Command) -> Result<(), Failure> {
    let domain = load_domain(cfg)?;
    match cmd {
        Command::CheckMesh => check_mesh(&domain),
        Command::SolveFlow => solve_flow(cfg, &domain),
        Command::Optimize => optimize(cfg, &domain),
        Command::QualitySweep { eta_ext } => sweep_quality(cfg, &domain, eta_ext),
        Command::DetSweep { eta_det } => sweep_det(cfg, &domain, eta_det),
        Command::GradCheck => grad_check(cfg, &domain),
        Command::Deform { input } => deform(cfg, &domain, input.as_deref()),
    }
}

fn load_domain(cfg: &RunConfig) -> Result<Domain, Failure> {
    let mesh = load_msh(&cfg.mesh).map_err(|e| Failure::Mesh(e.into()))?;
    Domain::new(mesh, cfg.mode, cfg.normals)
        .with_context(|| format!("setting up {}", cfg.mesh.display()))
        .map_err(Failure::Mesh)
}

fn output_dir(cfg: &RunConfig) -> Result<&Path, Failure> {
    std::fs::create_dir_all(&cfg.output)
        .with_context(|| format!("creating output directory {}", cfg.output.display()))
        .map_err(output)?;
    Ok(&cfg.output)
}

fn check_mesh(d: &Domain) -> Result<(), Failure> {
    let m = &d.mesh;
    let zero = vec![[0.0; 2]; m.num_vertices()];
    let q = worst_quality(m, &zero).map_err(|e| Failure::Mesh(e.into()))?;
    println!("vertices {}", m.num_vertices());
    println!("triangles {}", m.num_triangles());
    println!("boundary_segments {}", m.segments().len());
    println!("obstacle_vertices {}", m.obstacle_loop().len());
    println!("obstacle_cells {}", m.obstacle_cells().len());
    println!("fluid_area {:.6}", m.fluid_area());
    println!("worst_quality {q:.6}");
    Ok(())
}

fn solve_flow(cfg: &RunConfig, d: &Domain) -> Result<(), Failure> {
    let out = output_dir(cfg)?;
    let params = cfg.flow_params();
    let w = vec![[0.0; 2]; d.num_vertices()];
    let s = solve_state(d, &w, &params).map_err(solver)?;
    let j = dissipation(d, &w, &s, params.nu);
    write_vtk(
        &d.mesh,
        &[("velocity", NodalField::Vector(s.v)), ("pressure", NodalField::Scalar(s.p))],
        out.join("flow.vtk"),
    )
    .map_err(output)?;
    println!("dissipation {j:e}");
    Ok(())
}

fn solution_fields(y: &KktVector) -> Vec<(&'static str, NodalField)> {
    vec![
        ("w", NodalField::Vector(y.w())),
        ("velocity", NodalField::Vector(y.nodal(Block::V))),
        ("pressure", NodalField::Scalar(y.block(Block::P).to_vec())),
    ]
}

fn write_log(log: &RunLog, out: &Path) -> Result<(), Failure> {
    log.write_files(&out.join("run_log.csv"), Some(&out.join("timing.csv")))
        .map_err(output)
}

fn optimize(cfg: &RunConfig, d: &Domain) -> Result<(), Failure> {
    let out = output_dir(cfg)?;
    let params = cfg.kkt_params();
    let schedule = cfg.schedule();
    info!("schedule {schedule:?}, algorithm {:?}", cfg.algorithm);
    let outcome = match run(d, &params, &schedule, cfg.algorithm()) {
        Ok(o) => o,
        Err(e) => {
            write_log(&e.log, out)?;
            return Err(solver(e.source).context_step(e.step, e.alpha));
        }
    };
    write_log(&outcome.log, out)?;
    let y = &outcome.y;
    let w = y.w();
    write_vtk(&d.mesh, &solution_fields(y), out.join("solution.vtk")).map_err(output)?;
    write_obstacle_polyline(d, &w, &out.join("obstacle.csv")).map_err(output)?;
    let last = outcome.log.last().expect("a completed run logs at least one step");
    let final_params = mapshape::kkt::KktParams {
        alpha: last.alpha,
        ..params
    };
    let obj = objective(d, y, &final_params).map_err(solver)?;
    println!("alpha {:e}", last.alpha);
    println!("iterations {}", last.l);
    println!("objective {:e}", obj.total());
    println!("dissipation {:e}", obj.dissipation);
    println!("penalty {:e}", obj.penalty);
    println!("min_det {:.6}", min_det(d, &w));
    println!("volume_residual {:e}", last.volume_residual);
    println!("barycenter_residual {:e} {:e}", last.barycenter_residual[0], last.barycenter_residual[1]);
    // the deformed mesh is only exported if it is a valid mesh
    let moved = deform_mesh(&d.mesh, &w).map_err(|e| Failure::Verification(e.into()))?;
    write_vtk(&moved, &solution_fields(y), out.join("deformed.vtk")).map_err(output)?;
    println!("worst_quality {:.6}", worst_quality(&d.mesh, &w).map_err(|e| Failure::Verification(e.into()))?);
    Ok(())
}

trait StepContext {
    fn context_step(self, step: usize, alpha: f64) -> Self;
}

impl StepContext for Failure {
    fn context_step(self, step: usize, alpha: f64) -> Self {
        let wrap = |e: anyhow::Error| e.context(format!("continuation step {step} (alpha = {alpha:e})"));
        match self {
            Failure::Config(e) => Failure::Config(wrap(e)),
            Failure::Mesh(e) => Failure::Mesh(wrap(e)),
            Failure::Solver(e) => Failure::Solver(wrap(e)),
            Failure::Verification(e) => Failure::Verification(wrap(e)),
        }
    }
}

fn sweep_quality(cfg: &RunConfig, d: &Domain, eta_ext: &[f64]) -> Result<(), Failure> {
    let out = output_dir(cfg)?;
    let rows = quality_sweep(d, &cfg.kkt_params(), &cfg.schedule(), cfg.algorithm(), eta_ext).map_err(solver)?;
    write_quality_csv(&rows, &out.join("quality.csv")).map_err(output)?;
    for r in &rows {
        match r.worst_quality {
            Some(q) => println!("eta_ext {} worst_quality {q:.6}", r.eta_ext),
            None => println!("eta_ext {} failed", r.eta_ext),
        }
    }
    Ok(())
}

fn sweep_det(cfg: &RunConfig, d: &Domain, eta_det: &[f64]) -> Result<(), Failure> {
    let out = output_dir(cfg)?;
    let rows = det_sweep(d, &cfg.kkt_params(), &cfg.schedule(), cfg.algorithm(), eta_det, out).map_err(solver)?;
    write_det_csv(&rows, &out.join("det.csv")).map_err(output)?;
    for r in &rows {
        match (r.active, r.min_det) {
            (Some(a), Some(m)) => println!("eta_det {} active {a} min_det {m:.6}", r.eta_det),
            _ => println!("eta_det {} failed", r.eta_det),
        }
    }
    Ok(())
}

fn grad_check(cfg: &RunConfig, d: &Domain) -> Result<(), Failure> {
    let y = random_point(d, cfg.seed);
    // a bound above every det keeps the penalty smooth and active everywhere
    let params = mapshape::kkt::KktParams {
        eta_det: active_eta_det(d, &y),
        ..cfg.kkt_params()
    };
    let checks = gradient_check(d, &y, &params, cfg.grad_directions, cfg.seed).map_err(solver)?;
    let mut failed = 0;
    for c in &checks {
        let slope = c.min_slope.map_or("exact".to_string(), |s| format!("{s:.3}"));
        println!(
            "{:<5} {} slope {slope} max_rel_error {:.2e}",
            format!("{:?}", c.block),
            if c.passed { "PASS" } else { "FAIL" },
            c.max_relative_error
        );
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        return Err(Failure::Verification(anyhow!("{failed} of {} gradient blocks failed", checks.len())));
    }
    Ok(())
}

fn deform(cfg: &RunConfig, d: &Domain, input: Option<&Path>) -> Result<(), Failure> {
    let default = cfg.output.join("solution.vtk");
    let input = input.unwrap_or(&default);
    let data = read_vtk(input).map_err(|e| Failure::Config(e.into()))?;
    if data.points.len() != d.num_vertices() || data.triangles.as_slice() != d.mesh.triangles() {
        return Err(Failure::Mesh(anyhow!(
            "{} does not belong to mesh {}",
            input.display(),
            cfg.mesh.display()
        )));
    }
    let w = data
        .fields
        .iter()
        .find_map(|(name, f)| match f {
            NodalField::Vector(v) if name == "w" => Some(v.clone()),
            _ => None,
        })
        .ok_or_else(|| Failure::Config(anyhow!("{} has no vector field `w`", input.display())))?;
    let inverted = inverted_elements(&d.mesh, &w).map_err(|e| Failure::Mesh(e.into()))?;
    println!("inverted_elements {inverted}");
    if inverted > 0 {
        return Err(Failure::Verification(anyhow!("deformation inverts {inverted} elements")));
    }
    let out = output_dir(cfg)?;
    let moved = deform_mesh(&d.mesh, &w).map_err(|e| Failure::Verification(e.into()))?;
    write_vtk(&moved, &[("w", NodalField::Vector(w.clone()))], out.join("deformed.vtk")).map_err(output)?;
    println!("min_det {:.6}", min_det(d, &w));
    println!("worst_quality {:.6}", worst_quality(&d.mesh, &w).map_err(|e| Failure::Verification(e.into()))?);
    Ok(())
}
