use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qtensor_core::grid::io::write_tensor_snapshot;
use qtensor_core::grid::{Boundary, Grid, TensorField};
use qtensorflow::commands::{analyze, decay_csv, RunReport, SNAPSHOT_INDEX};
use qtensorflow::config::KEYS;
use qtensorflow::verify::{format_table, run_suites, synthetic_ledger};
use qtensorflow::{cmd_analyze, cmd_relax, exit, RunConfig};

fn bin(args: &[&str], dir: &Path, config: &str) -> Output {
    let cfg = dir.join("test.cfg");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_qtensorflow"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn small(extra: &str, out: &Path) -> RunConfig {
    let mut c = RunConfig::parse(&format!("nx = 8\nny = 8\nh = 0.125\n{extra}")).unwrap();
    c.out = out.to_path_buf();
    c
}

#[test]
fn zero_horizon_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["run"], dir.path(), "t_end = 0\n");
    assert_eq!(out.status.code(), Some(exit::OK));
    let csv = fs::read_to_string(dir.path().join("out/energy.csv")).unwrap();
    assert_eq!(
        csv,
        "t,kinetic,elastic,bulk,total,dissipation,law_residual,monotone\n"
    );
}

#[test]
fn short_smoke_run_decreases_energy_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(
        &["run", "--snapshots", "50", "--seed", "9"],
        dir.path(),
        "t_end = 0.2\n",
    );
    assert_eq!(
        out.status.code(),
        Some(exit::OK),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("out/energy.csv")).unwrap();
    let totals: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(totals.len(), 200);
    assert!(totals.windows(2).all(|w| w[1] < w[0]));
    let report: RunReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report.config.seed, 9);
    assert_eq!(report.config.snapshot_every, 50);
    assert_eq!(report.config.mu, Some(0.5));
    assert_eq!(report.steps_taken, 200);
    assert_eq!(report.stability, "stable");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(json["config"].as_object().unwrap().len(), KEYS.len());
    let index = fs::read_to_string(dir.path().join("out").join(SNAPSHOT_INDEX)).unwrap();
    let lines: Vec<&str> = index.lines().collect();
    assert_eq!(lines[0], "step,t,file");
    assert_eq!(lines.len(), 1 + 5);
}

#[test]
fn large_step_exits_two_naming_dt() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(
        &["run"],
        dir.path(),
        "nx = 8\nny = 8\nh = 0.125\ndt = 5\nt_end = 1000\n",
    );
    assert_eq!(out.status.code(), Some(exit::UNSTABLE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt = 5"));
    let report = fs::read_to_string(dir.path().join("out/report.json")).unwrap();
    assert!(report.contains("\"stability\": \"unstable\""));
}

#[test]
fn config_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        bin(&["run"], dir.path(), "colour = blue\n").status.code(),
        Some(exit::CONFIG)
    );
    assert_eq!(
        bin(&["run"], dir.path(), "c = -1\n").status.code(),
        Some(exit::CONFIG)
    );
    fs::write(dir.path().join("out"), "not a directory").unwrap();
    assert_eq!(
        bin(&["run"], dir.path(), "t_end = 0\n").status.code(),
        Some(exit::IO)
    );
}

#[test]
fn thread_cap_is_respected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, "t_end = 0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qtensorflow"))
        .args(["run", "--out"])
        .arg(dir.path().join("out"))
        .arg("--config")
        .arg(&cfg)
        .env("QTF_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(exit::OK));
    let report: RunReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report.workers, 2);
}

#[test]
fn relax_examples() {
    let dir = tempfile::tempdir().unwrap();
    // a > 0, b = 0: the only critical point is Q = 0
    let cfg = small("a = 1\ndt = 0.05\nt_end = 40\n", &dir.path().join("pos"));
    assert_eq!(cmd_relax(&cfg), exit::OK);
    let report: RunReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("pos/report.json")).unwrap())
            .unwrap();
    let fin = report.final_state.unwrap();
    assert!(fin.q_norm < 1e-6, "{}", fin.q_norm);
    assert_eq!(report.relaxed, Some(true));

    let cfg = small("dt = 0.01\nt_end = 0.05\n", &dir.path().join("short"));
    assert_eq!(cmd_relax(&cfg), exit::NOT_RELAXED);

    // |Q| = 1 uniaxial is a minimiser of the a = -1, c = 1 potential
    let s = 1.5f64.sqrt();
    let cfg = small(
        &format!("init = uniaxial\ninit_s = {s}\nt_end = 0.1\ndt = 0.01\n"),
        &dir.path().join("eq"),
    );
    assert_eq!(cmd_relax(&cfg), exit::OK);
}

#[test]
fn analyze_examples() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        cmd_analyze(&dir.path().join("missing"), None),
        exit::MISSING
    );

    let relaxed = dir.path().join("relaxed");
    let cfg = small(
        "a = 1\ndt = 0.05\nt_end = 40\nsnapshot_every = 20\n",
        &relaxed,
    );
    assert_eq!(cmd_relax(&cfg), exit::OK);
    assert_eq!(cmd_analyze(&relaxed, None), exit::OK);
    assert!(relaxed.join("equilibrium.json").exists() && relaxed.join("decay.csv").exists());

    let truncated = dir.path().join("truncated");
    let cfg = small("dt = 0.01\nt_end = 0.3\nsnapshot_every = 5\n", &truncated);
    assert_eq!(cmd_relax(&cfg), exit::NOT_RELAXED);
    assert_eq!(cmd_analyze(&truncated, None), exit::NOT_CONVERGED);

    let few = dir.path().join("few");
    let cfg = small("dt = 0.01\nt_end = 0.02\nsnapshot_every = 0\n", &few);
    cmd_relax(&cfg);
    assert_eq!(cmd_analyze(&few, None), exit::MISSING);
}

#[test]
fn exponential_ledger_gives_affine_log_decay() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::new_2d(8, 8, 0.125, Boundary::Box).unwrap();
    // the tail sits on the limit to machine precision, so the tail median is exact
    let ledger = synthetic_ledger(|t| 2.0 * (-0.8 * t).exp(), 1.0, 60.0, 600);
    fs::write(dir.path().join("energy.csv"), ledger.to_csv()).unwrap();
    fs::create_dir(dir.path().join("snapshots")).unwrap();
    let mut index = String::from("step,t,file\n");
    for k in 0..3 {
        let name = format!("snapshots/s{k}.qtf");
        write_tensor_snapshot(&dir.path().join(&name), &TensorField::zeros(grid)).unwrap();
        index.push_str(&format!("{k},{},{name}\n", 58 + k));
    }
    fs::write(dir.path().join("snapshots.csv"), index).unwrap();
    let cfg = small("a = 1\n", dir.path());
    let out = analyze(dir.path(), Some(&cfg)).unwrap();
    assert!(out.report.decay.is_some());
    let csv = fs::read_to_string(dir.path().join("decay.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,gap,log_gap"));
    let pts: Vec<(f64, f64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (v[0], v[1], v[2])
        })
        .filter(|p| p.1 > 1e-6)
        .collect();
    assert!(pts.len() > 100);
    // totals carry rounding ~eps(1 + E_inf), so the slope error is below 2 eps 2 / (1e-6 * 0.1) ~ 1e-8
    for w in pts.windows(2) {
        let slope = (w[1].2 - w[0].2) / (w[1].0 - w[0].0);
        assert!((slope + 0.8).abs() < 1e-7, "{slope}");
    }
    assert_eq!(out.report.e_infinity, 1.0);
    assert_eq!(decay_csv(&ledger, 1.0), csv);
}

#[test]
fn verify_is_deterministic_and_passes() {
    let a = format_table(&run_suites(5));
    let b = format_table(&run_suites(5));
    assert_eq!(a, b);
    for name in [
        "sigma_s_cancellation",
        "summation_by_parts",
        "mu_certificate",
    ] {
        assert!(a.contains(name));
    }
    let run = |seed: &str| {
        Command::new(env!("CARGO_BIN_EXE_qtensorflow"))
            .args(["verify", "--seed", seed])
            .output()
            .unwrap()
    };
    let (x, y) = (run("11"), run("11"));
    assert_eq!(
        x.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&x.stdout)
    );
    assert_eq!(x.stdout, y.stdout);
}
