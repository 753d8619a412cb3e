//! Continuation in the control regularization `α`: the direct algorithm
//! solves the coupled system at each `α`, the iterative one alternates
//! state, adjoint and shape solves until the control settles.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::fem::curve_mass;
use crate::kkt::{barycenter_residual, initial_vector, objective, solve_kkt, volume_residual, KktParams, KktVector};
use crate::mesh::worst_quality;
use crate::system::{self, Workspace, ADJOINT, SHAPE, STATE};
use crate::transform::min_det;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuationSchedule {
    pub alpha_init: f64,
    pub alpha_dec: f64,
    pub alpha_target: f64,
}

impl ContinuationSchedule {
    pub const DIRECT: Self = Self {
        alpha_init: 1e-4,
        alpha_dec: 1e-1,
        alpha_target: 1e-10,
    };
    pub const ITERATIVE: Self = Self {
        alpha_init: 1.0,
        alpha_dec: 0.5,
        alpha_target: 2e-7,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_init > 0.0 && self.alpha_init.is_finite()) {
            return Err(Error::invalid("alpha_init", "must be positive"));
        }
        if !(self.alpha_dec > 0.0 && self.alpha_dec < 1.0) {
            return Err(Error::invalid("alpha_dec", "must lie in (0, 1)"));
        }
        if !(self.alpha_target > 0.0 && self.alpha_target <= self.alpha_init) {
            return Err(Error::invalid("alpha_target", "must lie in (0, alpha_init]"));
        }
        Ok(())
    }

    /// `α_k = α_init α_dec^k` while `α_k ≥ α_target` (up to rounding of the
    /// powers).
    pub fn alphas(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let a = self.alpha_init * self.alpha_dec.powi(k);
            if a < self.alpha_target * (1.0 - 1e-9) {
                return out;
            }
            out.push(a);
            k += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    /// Continuation step.
    pub k: usize,
    /// Agglomerated inner iteration.
    pub l: usize,
    pub alpha: f64,
    pub objective: f64,
    pub dissipation: f64,
    pub penalty: f64,
    /// `‖c‖` in `L²(Γ_obs)`.
    pub c_norm: f64,
    pub volume_residual: f64,
    pub barycenter_residual: [f64; 2],
    pub newton_iterations: usize,
    /// Seconds since the start of the run.
    pub wall_time: f64,
}

impl RunRecord {
    /// Columns of [`RunRecord::to_line`]. Wall time is kept out so that
    /// repeated runs produce identical logs; see [`RunLog::write_timing`].
    pub const HEADER: &'static str = "k,l,alpha,objective,dissipation,penalty,c_norm,volume_residual,\
barycenter_residual_x,barycenter_residual_y,newton_iterations";
    pub const TIMING_HEADER: &'static str = "k,l,wall_time";

    pub fn to_line(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.k,
            self.l,
            self.alpha,
            self.objective,
            self.dissipation,
            self.penalty,
            self.c_norm,
            self.volume_residual,
            self.barycenter_residual[0],
            self.barycenter_residual[1],
            self.newton_iterations,
        )
    }

    pub fn timing_line(&self) -> String {
        format!("{},{},{:.3}", self.k, self.l, self.wall_time)
    }
}

/// Append-only iteration log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    records: Vec<RunRecord>,
}

impl RunLog {
    pub fn push(&mut self, r: RunRecord) {
        if let Some(last) = self.records.last() {
            assert!(r.l > last.l && r.k >= last.k, "run log indices must increase");
        }
        self.records.push(r);
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&RunRecord> {
        self.records.last()
    }

    /// Distinct `α` values in order of appearance.
    pub fn alpha_levels(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.alpha) {
                out.push(r.alpha);
            }
        }
        out
    }

    pub fn write(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", RunRecord::HEADER)?;
        for r in &self.records {
            writeln!(out, "{}", r.to_line())?;
        }
        Ok(())
    }

    pub fn write_timing(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", RunRecord::TIMING_HEADER)?;
        for r in &self.records {
            writeln!(out, "{}", r.timing_line())?;
        }
        Ok(())
    }

    /// Writes the log to `path` and, if given, the wall times to `timing`.
    pub fn write_files(&self, path: &Path, timing: Option<&Path>) -> Result<()> {
        let create = |p: &Path| std::fs::File::create(p).map(std::io::BufWriter::new).map_err(|e| Error::io(p, e));
        let mut f = create(path)?;
        self.write(&mut f).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))?;
        if let Some(t) = timing {
            let mut f = create(t)?;
            self.write_timing(&mut f).and_then(|_| f.flush()).map_err(|e| Error::io(t, e))?;
        }
        Ok(())
    }
}

/// A failed run: where it stopped, why, and everything logged before.
#[derive(Debug)]
pub struct RunError {
    pub step: usize,
    pub alpha: f64,
    pub source: Error,
    pub log: RunLog,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "continuation step {} (alpha = {:e}): {}", self.step, self.alpha, self.source)
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub y: KktVector,
    pub log: RunLog,
}

pub type RunResult = std::result::Result<RunOutcome, RunError>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Algorithm {
    Direct,
    Iterative { eps: f64, inner_cap: usize },
}

pub const DEFAULT_INNER_CAP: usize = 50;

fn c_norm(domain: &Domain, c: &[f64]) -> Result<f64> {
    if domain.normals.is_none() {
        return Ok(0.0);
    }
    let m = curve_mass(&domain.mesh)?;
    Ok(c.iter().zip(m.matvec(c)).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
}

/// `‖a − b‖ / ‖a‖` in `L²(Γ_obs)`.
pub fn relative_control_difference(domain: &Domain, a: &[f64], b: &[f64]) -> Result<f64> {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(c_norm(domain, &diff)? / c_norm(domain, a)?)
}

fn record(
    domain: &Domain,
    y: &KktVector,
    params: &KktParams,
    k: usize,
    l: usize,
    newton_iterations: usize,
    start: Instant,
) -> Result<RunRecord> {
    let obj = objective(domain, y, params)?;
    let w = y.w();
    Ok(RunRecord {
        k,
        l,
        alpha: params.alpha,
        objective: obj.total(),
        dissipation: obj.dissipation,
        penalty: obj.penalty,
        c_norm: c_norm(domain, y.c())?,
        volume_residual: volume_residual(domain, &w),
        barycenter_residual: barycenter_residual(domain, &w),
        newton_iterations,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Runs `level` at `α_k`; on a solver failure retries once, first solving
/// at the geometric mean of `α_{k−1}` and `α_k`, then at `α_k` again.
fn with_retry<T>(
    k: usize,
    alphas: &[f64],
    y: &KktVector,
    mut level: impl FnMut(f64, &mut KktVector) -> Result<T>,
) -> Result<(KktVector, T)> {
    let mut trial = y.clone();
    match level(alphas[k], &mut trial) {
        Ok(t) => Ok((trial, t)),
        Err(e) if e.is_solver_failure() && k > 0 => {
            let mid = (alphas[k - 1] * alphas[k]).sqrt();
            log::warn!("step {k} failed ({e}); retrying through alpha = {mid:e}");
            let mut trial = y.clone();
            level(mid, &mut trial)?;
            let t = level(alphas[k], &mut trial)?;
            Ok((trial, t))
        }
        Err(e) => Err(e),
    }
}

/// Direct algorithm: from `y = 0` (with the inflow data), solve the coupled
/// optimality system for each `α` of the schedule, warm-starting from the
/// previous solution.
pub fn run_direct(domain: &Domain, params: &KktParams, schedule: &ContinuationSchedule) -> RunResult {
    let fail = |step, alpha, source, log| RunError {
        step,
        alpha,
        source,
        log,
    };
    let mut log = RunLog::default();
    if let Err(e) = params.validate().and_then(|_| schedule.validate()) {
        return Err(fail(0, schedule.alpha_init, e, log));
    }
    let start = Instant::now();
    let alphas = schedule.alphas();
    let mut ws = Workspace::new();
    let mut y = initial_vector(domain, params);
    for (k, &alpha) in alphas.iter().enumerate() {
        let step = with_retry(k, &alphas, &y, |a, yt| {
            let p = KktParams {
                alpha: a,
                ..params.clone()
            };
            solve_kkt(domain, yt, &p, &mut ws)
        });
        let (next, report) = match step {
            Ok(s) => s,
            Err(e) => return Err(fail(k, alpha, e, log)),
        };
        y = next;
        let p = KktParams {
            alpha,
            ..params.clone()
        };
        match record(domain, &y, &p, k, k, report.iterations, start) {
            Ok(r) => {
                log::info!(
                    "direct k={k} alpha={alpha:.3e} J={:.6e} newton={}",
                    r.objective,
                    r.newton_iterations
                );
                log.push(r)
            }
            Err(e) => return Err(fail(k, alpha, e, log)),
        }
    }
    Ok(RunOutcome { y, log })
}

/// Iterative algorithm: for each `α`, repeat (state solve, adjoint solve, shape
/// solve with the flow frozen) until the relative change of the control
/// drops below `eps`, at most `inner_cap` passes per `α`.
pub fn run_iterative(
    domain: &Domain,
    params: &KktParams,
    schedule: &ContinuationSchedule,
    eps: f64,
    inner_cap: usize,
) -> RunResult {
    let fail = |step, alpha, source, log| RunError {
        step,
        alpha,
        source,
        log,
    };
    let mut log = RunLog::default();
    let checked = params.validate().and_then(|_| schedule.validate()).and_then(|_| {
        if eps > 0.0 && eps.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("eps", "must be positive"))
        }
    });
    if let Err(e) = checked {
        return Err(fail(0, schedule.alpha_init, e, log));
    }
    let start = Instant::now();
    let alphas = schedule.alphas();
    let mut ws = Workspace::new();
    let mut y = initial_vector(domain, params);
    let mut l = 0;
    for (k, &alpha) in alphas.iter().enumerate() {
        let mut pending: Vec<RunRecord> = Vec::new();
        let step = with_retry(k, &alphas, &y, |a, yt| {
            pending.clear();
            let p = KktParams {
                alpha: a,
                ..params.clone()
            };
            let sp = p.system_params();
            let opts = p.newton_options();
            for pass in 0.. {
                if pass >= inner_cap {
                    return Err(Error::Divergence {
                        solver: "fixpoint",
                        iterations: pass,
                        residual: f64::NAN,
                        history: Vec::new(),
                    });
                }
                let c_old = yt.c().to_vec();
                let data = yt.as_mut_slice();
                let mut its = system::newton(domain, data, &sp, &STATE, &opts, &mut ws)?.iterations;
                its += system::newton(domain, data, &sp, &ADJOINT, &opts, &mut ws)?.iterations;
                its += system::newton(domain, data, &sp, &SHAPE, &opts, &mut ws)?.iterations;
                let c_new = yt.c();
                let diff: Vec<f64> = c_new.iter().zip(&c_old).map(|(a, b)| a - b).collect();
                let (dn, cn) = (c_norm(domain, &diff)?, c_norm(domain, c_new)?);
                // relative change, absolute when the control vanishes
                let change = if cn > 0.0 { dn / cn } else { dn };
                pending.push(record(domain, yt, &p, k, 0, its, start)?);
                log::debug!("iterative k={k} pass={pass} alpha={a:.3e} change={change:.3e}");
                if change < eps {
                    break;
                }
            }
            Ok(())
        });
        match step {
            Ok((next, ())) => y = next,
            Err(e) => return Err(fail(k, alpha, e, log)),
        }
        for mut r in pending {
            l += 1;
            r.l = l;
            log.push(r);
        }
        if let Some(r) = log.last() {
            log::info!("iterative k={k} alpha={alpha:.3e} J={:.6e} l={l}", r.objective);
        }
    }
    Ok(RunOutcome { y, log })
}

pub fn run(domain: &Domain, params: &KktParams, schedule: &ContinuationSchedule, algorithm: Algorithm) -> RunResult {
    match algorithm {
        Algorithm::Direct => run_direct(domain, params, schedule),
        Algorithm::Iterative { eps, inner_cap } => run_iterative(domain, params, schedule, eps, inner_cap),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QualityRow {
    pub eta_ext: f64,
    /// `None` when the run or the deformed mesh failed.
    pub worst_quality: Option<f64>,
}

/// Worst element quality of the optimal deformation for each `η_ext`.
pub fn quality_sweep(
    domain: &Domain,
    params: &KktParams,
    schedule: &ContinuationSchedule,
    algorithm: Algorithm,
    eta_ext: &[f64],
) -> Result<Vec<QualityRow>> {
    for &e in eta_ext {
        if !(e >= 0.0 && e.is_finite()) {
            return Err(Error::invalid("eta_ext", "sweep values must be >= 0"));
        }
    }
    Ok(eta_ext
        .iter()
        .map(|&e| {
            let p = KktParams {
                eta_ext: e,
                ..params.clone()
            };
            let q = run(domain, &p, schedule, algorithm)
                .map_err(|err| err.source)
                .and_then(|out| worst_quality(&domain.mesh, &out.y.w()));
            if let Err(err) = &q {
                log::warn!("quality sweep point eta_ext = {e}: {err}");
            }
            QualityRow {
                eta_ext: e,
                worst_quality: q.ok(),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetRow {
    pub eta_det: f64,
    /// Whether `det DF < η_det` somewhere at the optimum; `None` on failure.
    pub active: Option<bool>,
    pub min_det: Option<f64>,
    pub path: Option<PathBuf>,
}

/// Penalty activity at the optimum for each `η_det`; the deformed obstacle
/// polyline of every successful point is written to `out_dir`.
pub fn det_sweep(
    domain: &Domain,
    params: &KktParams,
    schedule: &ContinuationSchedule,
    algorithm: Algorithm,
    eta_det: &[f64],
    out_dir: &Path,
) -> Result<Vec<DetRow>> {
    if eta_det.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("eta_det", "sweep values must be decreasing"));
    }
    let mut rows = Vec::new();
    for (i, &e) in eta_det.iter().enumerate() {
        let p = KktParams {
            eta_det: e,
            ..params.clone()
        };
        let outcome = run(domain, &p, schedule, algorithm).map_err(|err| err.source);
        let row = outcome.and_then(|out| {
            let w = out.y.w();
            let md = min_det(domain, &w);
            let path = out_dir.join(format!("shape_{i:02}.csv"));
            write_obstacle_polyline(domain, &w, &path)?;
            Ok(DetRow {
                eta_det: e,
                active: Some(md < e),
                min_det: Some(md),
                path: Some(path),
            })
        });
        rows.push(row.unwrap_or_else(|err| {
            log::warn!("det sweep point eta_det = {e}: {err}");
            DetRow {
                eta_det: e,
                active: None,
                min_det: None,
                path: None,
            }
        }));
    }
    Ok(rows)
}

/// `x,y` of the deformed obstacle boundary, closed.
pub fn write_obstacle_polyline(domain: &Domain, w: &[[f64; 2]], path: &Path) -> Result<()> {
    let lp = domain.mesh.obstacle_loop();
    let x = domain.mesh.vertices();
    let mut s = String::from("x,y\n");
    for &v in lp.iter().chain(lp.first()) {
        s.push_str(&format!("{:e},{:e}\n", x[v][0] + w[v][0], x[v][1] + w[v][1]));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_quality_csv(rows: &[QualityRow], path: &Path) -> Result<()> {
    let mut s = String::from("eta_ext,worst_quality\n");
    for r in rows {
        match r.worst_quality {
            Some(q) => s.push_str(&format!("{},{:e}\n", r.eta_ext, q)),
            None => s.push_str(&format!("{},failed\n", r.eta_ext)),
        }
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_det_csv(rows: &[DetRow], path: &Path) -> Result<()> {
    let mut s = String::from("eta_det,active,path\n");
    for r in rows {
        let active = r.active.map_or("failed".to_string(), |a| a.to_string());
        let p = r.path.as_ref().map_or(String::new(), |p| p.display().to_string());
        s.push_str(&format!("{},{},{}\n", r.eta_det, active, p));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
