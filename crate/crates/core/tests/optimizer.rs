use std::path::PathBuf;

use mapshape::domain::Domain;
use mapshape::flow::InflowProfile;
use mapshape::kkt::{kkt_residual, residual_norm, KktParams};
use mapshape::mesh::{inverted_elements, load_msh, DomainMode, NormalAveraging};
use mapshape::optimizer::*;

fn circle() -> Domain {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../meshes/circle_2k.msh");
    Domain::new(load_msh(path).unwrap(), DomainMode::FluidOnly, NormalAveraging::Unweighted).unwrap()
}

fn params() -> KktParams {
    let mut p = KktParams::default();
    p.flow.nu = 0.1;
    p.flow.inflow = InflowProfile::Channel;
    p.eta_ext = 1.5;
    p
}

const SHORT: ContinuationSchedule = ContinuationSchedule {
    alpha_init: 1e-2,
    alpha_dec: 0.5,
    alpha_target: 1.25e-3,
};

fn check_log(log: &RunLog, s: &ContinuationSchedule) {
    let r = log.records();
    for p in r.windows(2) {
        assert!(p[1].l > p[0].l);
        assert!(p[1].alpha == p[0].alpha || (p[1].alpha / p[0].alpha - s.alpha_dec).abs() < 1e-12);
    }
    assert_eq!(log.alpha_levels(), s.alphas());
}

#[test]
fn direct_run_logs_the_schedule_and_converges_each_step() {
    let d = circle();
    let p = params();
    let out = run_direct(&d, &p, &SHORT).unwrap();
    check_log(&out.log, &SHORT);
    assert_eq!(out.log.records().len(), 4);
    let last = out.log.last().unwrap();
    // constraints hold to the Newton tolerance at every converged step
    for r in out.log.records() {
        assert!(r.volume_residual.abs() < 10.0 * p.newton_tol);
        assert!(r.barycenter_residual.iter().all(|b| b.abs() < 10.0 * p.newton_tol));
    }
    let at_end = KktParams { alpha: last.alpha, ..p };
    assert!(residual_norm(&kkt_residual(&d, &out.y, &at_end).unwrap()) < 10.0 * at_end.newton_tol);
    assert_eq!(inverted_elements(&d.mesh, &out.y.w()).unwrap(), 0);
}

#[test]
fn iterative_run_counts_inner_passes() {
    let d = circle();
    let out = run_iterative(&d, &params(), &SHORT, 1e-2, DEFAULT_INNER_CAP).unwrap();
    check_log(&out.log, &SHORT);
    assert!(out.log.records().len() >= 4);
    assert_eq!(out.log.last().unwrap().l, out.log.records().len());
    assert_eq!(inverted_elements(&d.mesh, &out.y.w()).unwrap(), 0);
}

#[test]
fn single_level_schedule_runs_once() {
    let d = circle();
    let s = ContinuationSchedule {
        alpha_init: 1e-2,
        alpha_dec: 0.5,
        alpha_target: 1e-2,
    };
    let out = run_direct(&d, &params(), &s).unwrap();
    assert_eq!(out.log.records().len(), 1);
}

#[test]
fn single_point_quality_sweep_is_one_run() {
    let d = circle();
    let s = ContinuationSchedule {
        alpha_init: 1e-2,
        alpha_dec: 0.5,
        alpha_target: 1e-2,
    };
    let p = params();
    let rows = quality_sweep(&d, &p, &s, Algorithm::Direct, &[p.eta_ext]).unwrap();
    let out = run_direct(&d, &p, &s).unwrap();
    let q = mapshape::mesh::worst_quality(&d.mesh, &out.y.w()).unwrap();
    assert_eq!(rows[0].worst_quality, Some(q));
}
