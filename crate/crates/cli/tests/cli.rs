use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mesh(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../meshes").join(name)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.conf");
    let text = format!("mesh = {}\noutput = out\n{body}", mesh("circle_2k.msh").display());
    std::fs::write(&path, text).unwrap();
    path
}

fn mapshape(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapshape"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env("MAPSHAPE_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

// one cheap continuation step at a viscosity where the state solve is easy
const ONE_STEP: &str = "nu = 0.1\nalpha_init = 1e-3\nalpha_target = 1e-3\n";

#[test]
fn check_mesh_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = mapshape(&write_config(dir.path(), ""), &["check-mesh"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("triangles ") && s.contains("worst_quality "), "{s}");
}

#[test]
fn unknown_key_is_a_config_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = mapshape(&write_config(dir.path(), "# comment\nviscosity = 1\n"), &["check-mesh"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run.conf:4"), "{}", stderr(&o));
}

#[test]
fn out_of_range_value_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = mapshape(&write_config(dir.path(), "alpha_dec = 1.5\n"), &["check-mesh"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alpha_dec"), "{}", stderr(&o));
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mapshape(&dir.path().join("absent.conf"), &["check-mesh"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn broken_mesh_is_a_mesh_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.msh"), "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n3\n").unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "mesh = bad.msh\n").unwrap();
    let o = mapshape(&cfg, &["check-mesh"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn zero_inflow_gives_zero_fields() {
    let dir = tempfile::tempdir().unwrap();
    let o = mapshape(&write_config(dir.path(), "inflow = zero\n"), &["solve-flow"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let data = mapshape::mesh::read_vtk(dir.path().join("out/flow.vtk")).unwrap();
    assert_eq!(data.fields.len(), 2);
    for (_, f) in &data.fields {
        match f {
            mapshape::mesh::NodalField::Scalar(v) => assert!(v.iter().all(|x| *x == 0.0)),
            mapshape::mesh::NodalField::Vector(v) => assert!(v.iter().all(|x| x == &[0.0, 0.0])),
        }
    }
}

#[test]
fn newton_failure_is_a_solver_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mapshape(&write_config(dir.path(), "newton_max_iter = 1\n"), &["solve-flow"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn optimize_is_deterministic_and_deform_reuses_the_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ONE_STEP);
    let first = mapshape(&cfg, &["optimize"]);
    assert!(first.status.success(), "{}", stderr(&first));
    let out = dir.path().join("out");
    for f in ["run_log.csv", "timing.csv", "solution.vtk", "deformed.vtk", "obstacle.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let log = std::fs::read_to_string(out.join("run_log.csv")).unwrap();
    assert!(log.starts_with("k,l,alpha,objective,dissipation,penalty,c_norm,"), "{log}");
    assert_eq!(log.lines().count(), 2);

    let again = mapshape(&cfg, &["--output", dir.path().join("again").to_str().unwrap(), "optimize"]);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(log, std::fs::read_to_string(dir.path().join("again/run_log.csv")).unwrap());

    let d = mapshape(&cfg, &["deform"]);
    assert!(d.status.success(), "{}", stderr(&d));
    assert!(stdout(&d).contains("inverted_elements 0"), "{}", stdout(&d));
}

#[test]
fn deform_rejects_an_inverting_displacement() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let m = mapshape::mesh::load_msh(mesh("circle_2k.msh")).unwrap();
    // a reflection through the y axis flips every triangle
    let w: Vec<[f64; 2]> = m.vertices().iter().map(|x| [-2.0 * x[0], 0.0]).collect();
    let path = dir.path().join("flip.vtk");
    mapshape::mesh::write_vtk(&m, &[("w", mapshape::mesh::NodalField::Vector(w))], &path).unwrap();
    let o = mapshape(&cfg, &["deform", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn sweeps_write_csv_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ONE_STEP);
    let o = mapshape(&cfg, &["quality-sweep", "--eta-ext", "0,1.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let q = std::fs::read_to_string(dir.path().join("out/quality.csv")).unwrap();
    let lines: Vec<&str> = q.lines().collect();
    assert_eq!(lines[0], "eta_ext,worst_quality");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,") && lines[2].starts_with("1.5,"));

    let o = mapshape(&cfg, &["det-sweep", "--eta-det", "0.5,0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = std::fs::read_to_string(dir.path().join("out/det.csv")).unwrap();
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines[0], "eta_det,active,path");
    assert_eq!(lines.len(), 3);
    for l in &lines[1..] {
        let path = l.split(',').nth(2).unwrap();
        assert!(Path::new(path).starts_with(dir.path().join("out")), "{l}");
    }
}

#[test]
fn increasing_det_sweep_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mapshape(&write_config(dir.path(), ONE_STEP), &["det-sweep", "--eta-det", "0.1,0.5"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn grad_check_passes_every_block() {
    let dir = tempfile::tempdir().unwrap();
    let o = mapshape(&write_config(dir.path(), "grad_directions = 3\nseed = 7\n"), &["grad-check"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let s = stdout(&o);
    assert_eq!(s.lines().filter(|l| l.contains(" PASS ")).count(), 11, "{s}");
}
