//! Drives the `lpv` binary: exit codes, file layouts and determinism.

use std::path::Path;
use std::process::{Command, Output};

use lpv_cli::config::RunConfig;
use lpv_cli::gainfile::GainRecord;
use lpv_cli::output::{SWEEP_HEADER, TRACE_HEADER};

fn lpv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpv"))
        .args(args)
        .output()
        .expect("spawn lpv")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// A reduced problem (16 vertices, short maneuver) that synthesizes in well under a second.
fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut c = RunConfig {
        output_dir: dir.join("out").display().to_string(),
        ..RunConfig::default()
    };
    c.linearization.parameter_count = 2;
    c.sweep = lpv_cli::config::SweepConfig {
        dv_min_m_per_s: -0.2,
        dv_max_m_per_s: 0.2,
        du_min_m_per_s: -0.2,
        du_max_m_per_s: 0.2,
        step_m_per_s: 0.2,
    };
    let path = dir.join("small.toml");
    std::fs::write(&path, c.to_canonical()).unwrap();
    path
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&lpv(&[])), 2);
    assert_eq!(code(&lpv(&["frobnicate"])), 2);
    assert_eq!(code(&lpv(&["synthesize", "--mode", "sideways"])), 2);
    assert_eq!(code(&lpv(&["reference", "--config", "/definitely/missing.toml"])), 2);
    assert_eq!(code(&lpv(&["--help"])), 0);
}

#[test]
fn bad_config_and_missing_gain_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "output_dir = 3\n").unwrap();
    assert_eq!(code(&lpv(&["reference", "--config", bad.to_str().unwrap()])), 2);

    let cfg = small_config(dir.path());
    let missing = dir.path().join("nope.toml");
    let out = lpv(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--gain",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gain file"));
}

#[test]
fn infeasible_synthesis_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::parse(&std::fs::read_to_string(small_config(dir.path())).unwrap()).unwrap();
    // decay faster than the actuators can enforce on the heading error
    c.synthesis.mode = lpv_cli::config::ModeKind::Contractivity;
    c.synthesis.beta_per_s = 1e4;
    c.synthesis.max_iterations = 100;
    let path = dir.path().join("fast.toml");
    std::fs::write(&path, c.to_canonical()).unwrap();
    let out = lpv(&["synthesize", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!Path::new(&c.output_dir).join("gain.toml").exists());
}

#[test]
fn full_workflow_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out_dir = dir.path().join("out");

    assert_eq!(code(&lpv(&["reference", "--config", cfg])), 0);
    assert_eq!(header(&out_dir.join("reference.csv")), TRACE_HEADER.join(","));

    let synth = lpv(&["synthesize", "--config", cfg, "--seed", "42"]);
    assert_eq!(code(&synth), 0, "{}", String::from_utf8_lossy(&synth.stderr));
    let gain = GainRecord::load(&out_dir.join("gain.toml")).unwrap();
    assert_eq!(gain.seed, 42);
    assert_eq!(gain.mode, "dstab");
    assert!(gain.certification.passed);
    assert_eq!(gain.certification.vertex_count, 16);
    assert_eq!(header(&out_dir.join("sectors.csv")), "channel,t,slope");

    let sim = lpv(&["simulate", "--config", cfg, "--offset", "0.1,-0.1"]);
    assert_eq!(code(&sim), 0);
    let trace = out_dir.join("trace_dv+0.100_du-0.100.csv");
    assert_eq!(header(&trace), TRACE_HEADER.join(","));
    let rows = std::fs::read_to_string(&trace).unwrap().lines().count();
    assert_eq!(rows, 6002);

    assert_eq!(code(&lpv(&["sweep", "--config", cfg, "--threads", "2"])), 0);
    let sweep = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = sweep.lines();
    assert_eq!(lines.next().unwrap(), SWEEP_HEADER.join(","));
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 9);
    for line in &body {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 4);
        assert!(f[2] == "0" || f[2] == "1");
    }
    assert!(body.iter().any(|l| l.starts_with("0,0,1,")), "origin must converge");
}

#[test]
fn synthesis_and_sweep_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let out = out.to_str().unwrap();
        assert_eq!(code(&lpv(&["synthesize", "--config", cfg, "--out", out])), 0);
        assert_eq!(
            code(&lpv(&["sweep", "--config", cfg, "--out", out, "--threads", threads])),
            0
        );
        assert_eq!(
            code(&lpv(&[
                "simulate", "--config", cfg, "--out", out, "--offset", "0.2,0.1"
            ])),
            0
        );
    }
    for name in [
        "gain.toml",
        "sweep.csv",
        "report.txt",
        "sectors.csv",
        "simulate_report.txt",
        "trace_dv+0.200_du+0.100.csv",
    ] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn mode_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = lpv(&[
        "synthesize",
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "contractivity",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let gain = GainRecord::load(&dir.path().join("out/gain.toml")).unwrap();
    assert_eq!(gain.mode, "contractivity");
    assert_eq!(gain.region_per_s, vec![2.0]);
}

#[test]
fn config_file_round_trips_through_disk() {
    let shipped = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml");
    let c = RunConfig::load(Path::new(shipped)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.toml");
    std::fs::write(&path, c.to_canonical()).unwrap();
    let back = RunConfig::load(&path).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.to_canonical(), c.to_canonical());
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut RunConfig)) -> std::path::PathBuf {
    let mut c = RunConfig::load(&small_config(dir)).unwrap();
    edit(&mut c);
    let path = dir.join("edited.toml");
    std::fs::write(&path, c.to_canonical()).unwrap();
    path
}

#[test]
fn zero_steering_reference_stays_on_the_x_axis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |c| {
        c.maneuver.steering = lpv_cli::config::SteeringKind::Zero
    });
    assert_eq!(code(&lpv(&["reference", "--config", cfg.to_str().unwrap()])), 0);
    let text = std::fs::read_to_string(dir.path().join("out/reference.csv")).unwrap();
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().unwrap().split(',').collect();
    let y = head.iter().position(|h| *h == "y").unwrap();
    let delta = head.iter().position(|h| *h == "delta_f").unwrap();
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(f[y].abs() < 1e-9, "{line}");
        assert_eq!(f[delta], 0.0);
    }
}

#[test]
fn narrow_strip_is_infeasible_and_reports_a_residual() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |c| {
        c.synthesis.strip_max_per_s = -2.9;
        c.synthesis.strip_min_per_s = -3.0;
        c.synthesis.max_iterations = 100;
    });
    let out = lpv(&["synthesize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(!dir.path().join("out/gain.toml").exists());
    let report = std::fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
    assert!(report.contains("no feasible point"), "{report}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("best residual"));
}

#[test]
fn single_parameter_gives_eight_vertices_and_origin_only_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |c| {
        c.linearization.parameter_count = 1;
        c.sweep = lpv_cli::config::SweepConfig {
            dv_min_m_per_s: 0.0,
            dv_max_m_per_s: 0.0,
            du_min_m_per_s: 0.0,
            du_max_m_per_s: 0.0,
            step_m_per_s: 0.05,
        };
    });
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&lpv(&["synthesize", "--config", cfg])), 0);
    let gain = GainRecord::load(&dir.path().join("out/gain.toml")).unwrap();
    assert_eq!(gain.certification.vertex_count, 8);
    assert_eq!(code(&lpv(&["sweep", "--config", cfg])), 0);
    let sweep = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let body: Vec<&str> = sweep.lines().skip(1).collect();
    assert_eq!(body.len(), 1);
    assert!(body[0].starts_with("0,0,1,"), "{}", body[0]);
}
