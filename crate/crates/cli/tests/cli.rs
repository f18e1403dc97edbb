use std::fs;
use std::process::Command;

fn nudge() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nudge"))
}

#[test]
fn props_exit_status_follows_hard_failures() {
    let ok = nudge().args(["props", "--count", "8"]).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("PASS explicit-implicit-equivalence"));

    let bad = nudge().args(["props", "--count", "8", "--tamper-gain", "1e-3"]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL explicit-implicit-equivalence"));
}

#[test]
fn horizon_reads_an_error_series() {
    let d = tempfile::tempdir().unwrap();
    let series = d.path().join("errors_demo.csv");
    let mut text = String::from("t,e_l2\n");
    for i in 0..=20 {
        let t = i as f64 * 0.1;
        text.push_str(&format!("{t},{}\n", 1e-3 * (0.5 * t).exp()));
    }
    fs::write(&series, text).unwrap();
    let out = nudge()
        .args(["horizon", series.to_str().unwrap(), "--eps", "0.1", "--window", "0,2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let row = stdout.lines().nth(1).unwrap();
    let cells: Vec<&str> = row.split(',').collect();
    assert_eq!(cells[0], "errors_demo");
    let lambda: f64 = cells[4].parse().unwrap();
    assert!((lambda - 0.5).abs() < 1e-9, "{row}");
}

#[test]
fn config_is_printed_and_reloaded() {
    let d = tempfile::tempdir().unwrap();
    let out = nudge().args(["converge", "--print-config"]).output().unwrap();
    assert!(out.status.success());
    let path = d.path().join("m.toml");
    fs::write(&path, &out.stdout).unwrap();
    let again = nudge()
        .args(["converge", "--print-config", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    let toml = "[condlab]\nfine_n = 32\ncoarse_m = 4\ngains = [0.0, 10.0]\n";
    fs::write(&cfg, toml).unwrap();
    let out_dir = d.path().join("out");
    let out = nudge()
        .args(["condlab", "--config", cfg.to_str().unwrap()])
        .env("NUDGE_OUTPUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("condlab.csv")).unwrap();
    assert!(csv.starts_with("n,m,space,k_chi,"));
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
}

#[test]
fn bad_scheme_is_reported() {
    let out = nudge().args(["twin", "--runs", "bogus:1", "--print-config"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown scheme"));
}
