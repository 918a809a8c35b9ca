use std::path::Path;
use std::process::{Command, Output};

fn thermobj(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermobj"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_BACKTRACE")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = thermobj(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

/// Parses the `label: value` line of a report.
fn value(text: &str, label: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(label))
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| panic!("no `{label}` in {text}"))
}

#[test]
fn certify_states() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "cq.txt", "dim 4\n0.5 0 0 0\n0 0 0 0\n0 0 0 0\n0 0 0 0.5\n");
    write(d, "bell.txt", "dim 4\n0.5 0 0 0.5\n0 0 0 0\n0 0 0 0\n0.5 0 0 0.5\n");
    let out = ok(&["certify", "--state", "cq.txt", "--dims", "2,2"], d);
    assert!(out.starts_with("yes\n"));
    let out = ok(&["certify", "--state", "bell.txt", "--dims", "2,2"], d);
    assert!(out.starts_with("no\n"));
    assert!(out.contains("witness: non-diagonal system block"));

    write(
        d,
        "sbs.txt",
        "sbs 2 1\ndims 2 2\nprobs 0.25 0.75\ndim 2\n1 0\n0 1\ndim 2\n1 0\n0 0\ndim 2\n0 0\n0 1\n",
    );
    assert!(ok(&["certify", "--sbs", "sbs.txt"], d).starts_with("yes\n"));

    assert!(!thermobj(&["certify", "--state", "cq.txt"], d).status.success());
    assert!(!thermobj(&["certify", "--state", "cq.txt", "--dims", "3,2"], d).status.success());
}

#[test]
fn channel_apply() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "zero.txt", "dim 2\n1 0\n0 0\n");
    ok(
        &[
            "channel", "apply", "--kind", "gad", "--p", "0.7", "--eta", "0.5", "--iters", "200",
            "--input", "zero.txt", "--output", "fixed.txt",
        ],
        d,
    );
    let text = std::fs::read_to_string(d.join("fixed.txt")).unwrap();
    let rho = thermobj::io::parse_state(&text).unwrap();
    assert!((rho.matrix()[(0, 0)].re - 0.7).abs() < 1e-10);

    let out = ok(
        &[
            "channel", "apply", "--kind", "affine", "--a", "0.5,0,0,0,0.5,0,0,0,0.5", "--t",
            "0,0,-0.2", "--input", "zero.txt",
        ],
        d,
    );
    let rho = thermobj::io::parse_state(&out).unwrap();
    // z = 0.5 − 0.2, so ρ00 = (1 + z)/2
    assert!((rho.matrix()[(0, 0)].re - 0.65).abs() < 1e-12);

    write(d, "mm.txt", "dim 2\n0.5 0\n0 0.5\n");
    let out = ok(&["channel", "apply", "--kind", "point", "--target", "mm.txt", "--input", "zero.txt"], d);
    assert!((thermobj::io::parse_state(&out).unwrap().matrix()[(1, 1)].re - 0.5).abs() < 1e-15);

    write(d, "plus0.txt", "dim 4\n0.5 0 0.5 0\n0 0 0 0\n0.5 0 0.5 0\n0 0 0 0\n");
    let out = ok(&["channel", "apply", "--kind", "cnot", "--input", "plus0.txt"], d);
    let rho = thermobj::io::parse_state(&out).unwrap();
    assert!((rho.matrix()[(0, 3)].re - 0.5).abs() < 1e-12);

    let bad = thermobj(&["channel", "apply", "--kind", "gad", "--p", "1.5", "--eta", "0.5", "--input", "zero.txt"], d);
    assert!(!bad.status.success());
    let bad = thermobj(&["channel", "apply", "--kind", "affine", "--a", "2,0,0,0,2,0,0,0,2", "--t", "0,0,0", "--input", "zero.txt"], d);
    assert!(!bad.status.success());
}

#[test]
fn bound_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "dev.txt", "beta = 1\nenergies = 0, 1\ndeviations = 0, 0.1\n");
    let out = ok(&["bound", "--kind", "deviation", "dev.txt"], d);
    assert!((value(&out, "bound:") - 0.038403053930225584).abs() < 1e-12);
    let out = ok(&["oracle", "--kind", "deviation", "dev.txt"], d);
    assert!(value(&out, "gap:") < 1e-12);

    write(d, "mac.txt", "energies = 0, 1\ndeviations = 0, 0.1; 0.05, -0.05\n");
    let out = ok(&["bound", "--kind", "macrofraction", "mac.txt"], d);
    for v in ["as_printed:", "product_form:", "grouped_greedy:"] {
        assert!(value(&out, v) >= 0.0);
    }
    let out = ok(&["oracle", "--kind", "macrofraction", "--variant", "product_form", "mac.txt"], d);
    assert!(value(&out, "gap:") < 1e-12);
    let out = ok(&["oracle", "--kind", "macrofraction", "--variant", "grouped_greedy", "mac.txt"], d);
    assert!(value(&out, "oracle:") <= value(&out, "tested:"));
    assert!(!thermobj(&["oracle", "--kind", "macrofraction", "--variant", "as_printed", "mac.txt"], d).status.success());

    write(d, "g.txt", "probs = 0.5, 0.5\nenv_energies = 0, 0.1, 0.5, 1.2, 2\n");
    let out = ok(&["bound", "--kind", "greedy", "g.txt"], d);
    assert!(out.contains("assignment: {"));
    let greedy = value(&out, "bound:");
    let out = ok(&["oracle", "--kind", "greedy", "g.txt"], d);
    assert_eq!(value(&out, "tested:"), greedy);
    assert!(value(&out, "oracle:") <= greedy);
    let t1 = value(&ok(&["bound", "--kind", "theorem1", "g.txt"], d), "bound:");
    assert!(greedy <= t1);

    assert!(!thermobj(&["bound", "--kind", "deviation", "g.txt"], d).status.success());
    assert!(!thermobj(&["bound", "--kind", "greedy", "missing.txt"], d).status.success());
}

#[test]
fn experiments_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "cfg.txt", "kind = sigma_sweep\ngrid = 0, 0.1\ntrials = 30\nseed = 5\n");
    ok(&["experiments", "run", "--config", "cfg.txt", "--out", "res"], d);
    let csv = std::fs::read_to_string(d.join("res/sigma_sweep.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("grid_value,mean,stderr,variant,trials,beta,seed"));
    assert_eq!(csv.lines().count(), 3);
    assert!(d.join("res/sigma_sweep.svg").exists());
    let again = d.join("again");
    ok(&["experiments", "run", "--config", "cfg.txt", "--out", again.to_str().unwrap()], d);
    assert_eq!(std::fs::read_to_string(again.join("sigma_sweep.csv")).unwrap(), csv);

    write(d, "bad.txt", "kind = sigma_sweep\ntrials = 0\n");
    assert!(!thermobj(&["experiments", "run", "--config", "bad.txt", "--out", "res"], d).status.success());
}

#[test]
fn gibbs_command() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "h.txt", "dim 2\n0 1\ndim 2\n1 0\n0 1\n");
    let rho = thermobj::io::parse_state(&ok(&["gibbs", "--hamiltonian", "h.txt", "--beta", "1"], d)).unwrap();
    let p0 = 1.0 / (1.0 + (-1.0f64).exp());
    assert!((rho.matrix()[(0, 0)].re - p0).abs() < 1e-15);
    let rho = thermobj::io::parse_state(&ok(&["gibbs", "--hamiltonian", "h.txt", "--beta", "inf"], d)).unwrap();
    assert_eq!(rho.matrix()[(0, 0)].re, 1.0);
}
