use std::path::Path;

use krsbm::io;
use krsbm::spectral::{renormalization_constant, MultiplierSpec};
use krsbm::LatticeSpec;
use krsbm_cli::{run, Command, ConfigSource, RunConfig};

fn config(command: Command, dir: &Path, text: &str) -> RunConfig {
    let mut src = ConfigSource::parse(text).unwrap();
    src.set("output-dir", dir.display().to_string()).unwrap();
    RunConfig::resolve(command, &src).unwrap()
}

#[test]
fn gen_env_is_deterministic_and_complete() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = "n = 8,16\nseeds = 4,5,6\n";
    let ra = run(&config(Command::GenEnv, a.path(), text)).unwrap();
    let rb = run(&config(Command::GenEnv, b.path(), text)).unwrap();
    assert_eq!(ra.manifest.outputs.len(), 6);
    assert_eq!(ra.manifest.outputs, rb.manifest.outputs);
    for e in &ra.manifest.outputs {
        let x = std::fs::read(a.path().join(&e.path)).unwrap();
        let y = std::fs::read(b.path().join(&e.path)).unwrap();
        assert_eq!(x, y, "{}", e.path);
    }
    for dc in &ra.manifest.derived {
        let k = renormalization_constant(&LatticeSpec::new(dc.n, 2, 2).unwrap(), &MultiplierSpec::cutoff()).unwrap();
        assert_eq!(dc.kappa_n, k);
        assert_eq!(dc.c_n, k);
    }
}

#[test]
fn zero_environment_solve_is_heat_flow() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(Command::Solve, dir.path(), "n = 8\nseeds = 0\nzero-env = true\nT = 0.1\ntimes = 0,0.1\nd = 1\n");
    let summary = run(&cfg).unwrap();
    assert!(summary.manifest.derived.is_empty());
    let traj = io::trajectory_from_text(&std::fs::read_to_string(dir.path().join("solve/traj_n8_zero_L2.txt")).unwrap()).unwrap();
    assert_eq!(traj.times, vec![0.0, 0.1]);
    // the initial profile 1 − (2x)² expanded in sines, each mode decaying at its lattice rate
    let spec = LatticeSpec::new(8, 2, 1).unwrap();
    let big_m = spec.m();
    let w0 = &traj.states[0];
    let mut expected = vec![0.0; spec.num_sites()];
    for k in 1..big_m {
        let mode = |i: usize| (std::f64::consts::PI * (k * i) as f64 / big_m as f64).sin();
        let coef: f64 = (0..=big_m).map(|i| w0.get(i) * mode(i)).sum::<f64>() * 2.0 / big_m as f64;
        let rate = 2.0 * 64.0 * ((std::f64::consts::PI * k as f64 / big_m as f64).cos() - 1.0);
        for (i, e) in expected.iter_mut().enumerate() {
            *e += coef * (rate * 0.1).exp() * mode(i);
        }
    }
    for (i, e) in expected.iter().enumerate() {
        assert!((traj.states[1].get(i) - e).abs() < 1e-4, "site {i}");
    }
}

#[test]
fn simulate_uses_archived_constants() {
    let dir = tempfile::tempdir().unwrap();
    run(&config(Command::GenEnv, dir.path(), "n = 8\nseeds = 2\n")).unwrap();
    let path = dir.path().join("env/env_n8_seed2.txt");
    let mut env = io::load_environment(&path).unwrap();
    env.kappa_n = 0.25;
    env.c_n = 0.25;
    io::save_environment(&path, &env).unwrap();
    let summary = run(&config(Command::Simulate, dir.path(), "n = 8\nseeds = 2\nreplicas = 3\n")).unwrap();
    assert_eq!(summary.manifest.derived[0].c_n, 0.25);
    assert_eq!(summary.manifest.cap.as_ref().unwrap().runs, 3);
    let events = io::load_events(&dir.path().join("simulate/events_n8_seed2_rep1.bin")).unwrap();
    assert!(!events.is_empty());
    let csv = std::fs::read_to_string(dir.path().join("simulate/measure_n8_seed2_rep0.csv")).unwrap();
    assert!(csv.starts_with("t,L,site,mass\n0,2,0:0,"));
}

#[test]
fn missing_or_mismatched_archives_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let err = run(&config(Command::Verify, dir.path(), "n = 8\nseeds = 1\n")).unwrap_err();
    assert!(format!("{err:#}").contains("missing environment archive"));
    run(&config(Command::GenEnv, dir.path(), "n = 8\nseeds = 1\n")).unwrap();
    let err = run(&config(Command::Solve, dir.path(), "n = 8\nseeds = 1\nphi = rademacher\n")).unwrap_err();
    assert!(format!("{err:#}").contains("config asks for"));
}

#[test]
fn verify_reports_carry_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    run(&config(Command::GenEnv, dir.path(), "n = 8\nseeds = 1\nd = 1\n")).unwrap();
    let cfg = config(Command::Verify, dir.path(), "n = 8\nseeds = 1\nd = 1\nreplicas = 50\n");
    let summary = run(&cfg).unwrap();
    assert_eq!(summary.reports.len(), 8);
    let text = std::fs::read_to_string(dir.path().join("verify/reports.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 8);
    for line in text.lines() {
        let r: krsbm::verify::TestReport = serde_json::from_str(line).unwrap();
        assert_eq!(r.config_hash, cfg.hash());
    }
    let manifest = krsbm_cli::RunManifest::load(&summary.manifest_path).unwrap();
    assert_eq!(manifest, summary.manifest);
}
