use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nudge_core::condlab::{assemble, estimate_condition, CoarseSpace};
use nudge_core::harness::condsweep::crouzeix_sweep;
use nudge_core::harness::twin::write_twin_outputs;
use nudge_core::harness::{run_props, run_twin, OutputSink, PropsOptions, RunConfig, RunSpec};
use nudge_core::observers::ObserverSpec;
use nudge_core::timestepper::SchemeKind;

fn small_twin() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.n = 32;
    cfg.t_end = 0.3;
    cfg.observer = ObserverSpec::SpectralProjection { cutoff: 6 };
    cfg.twin.initial_peak = 3.0;
    cfg.twin.average_window = (0.1, 0.3);
    cfg.twin.runs = vec![
        RunSpec {
            scheme: SchemeKind::None,
            chi: 0.0,
        },
        RunSpec {
            scheme: SchemeKind::TwoStepB,
            chi: 100.0,
        },
        RunSpec {
            scheme: SchemeKind::Standard,
            chi: 100.0,
        },
    ];
    cfg
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn identical_configs_give_identical_outputs() {
    let cfg = small_twin();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let report = run_twin(&cfg).unwrap();
        write_twin_outputs(&report, &OutputSink::new(d.path(), true).unwrap()).unwrap();
    }
    let (a, b) = (read_dir(dirs[0].path()), read_dir(dirs[1].path()));
    assert!(a.contains_key("twin_summary.csv") && a.contains_key("horizon.csv"));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(bytes == &b[name], "{name} differs between runs");
    }
}

#[test]
fn csv_outputs_have_a_single_header_line() {
    let report = run_twin(&small_twin()).unwrap();
    let d = tempfile::tempdir().unwrap();
    write_twin_outputs(&report, &OutputSink::new(d.path(), false).unwrap()).unwrap();
    for (name, bytes) in read_dir(d.path()) {
        if !name.ends_with(".csv") {
            continue;
        }
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        let cols = lines.next().unwrap().split(',').count();
        assert!(lines.all(|l| l.split(',').count() == cols), "{name} has ragged rows");
    }
}

#[test]
fn config_file_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("run.toml");
    let cfg = small_twin();
    fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(RunConfig::from_file(&path).unwrap(), cfg);
}

#[test]
fn explicit_update_with_filter_is_rejected_with_reason() {
    let mut cfg = RunConfig::default();
    cfg.observer = ObserverSpec::DifferentialFilter { width: 0.1 };
    cfg.scheme = SchemeKind::TwoStepAExplicit;
    let msg = cfg.validate().unwrap_err().to_string();
    assert!(msg.contains("idempotent"), "{msg}");
    cfg.scheme = SchemeKind::TwoStepAImplicit;
    assert!(cfg.validate().is_ok());
}

#[test]
fn property_suites_pass_and_catch_a_tampered_gain() {
    let opts = PropsOptions {
        count: 30,
        ..PropsOptions::default()
    };
    let report = run_props(&opts);
    for o in &report.outcomes {
        assert!(o.passed || !o.hard, "{o}");
    }
    let tampered = run_props(&PropsOptions {
        tamper_gain: 1e-3,
        ..opts
    });
    assert!(!tampered.passed());
    assert!(!tampered.get("explicit-implicit-equivalence").unwrap().passed);
}

#[test]
fn condition_estimate_agrees_with_dense_eigenvalues() {
    for space in [CoarseSpace::NestedLinear, CoarseSpace::PiecewiseConstant] {
        let ops = assemble::<f64>(60, 6, space).unwrap().with_gain(30.0).unwrap();
        let est = estimate_condition(&ops).unwrap();
        let cols = ops.dense_reduced().unwrap();
        let n = cols.len();
        let a = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (cols[j][i] + cols[i][j]));
        let eig = nalgebra::SymmetricEigen::new(a).eigenvalues;
        let oracle = eig.max() / eig.min();
        assert!((est.cond - oracle).abs() <= 1e-6 * oracle, "{space}: {} vs {oracle}", est.cond);
    }
}

#[test]
fn closed_form_deviation_on_fine_piecewise_constants_scales_with_h() {
    // H = h with piecewise constants: nonzero deviation, bounded by C H |grad e|
    let reports = crouzeix_sweep(&[32, 64, 128, 256], 10.0).unwrap();
    let ratios: Vec<f64> = reports.iter().map(|r| r.ratio).collect();
    for r in &reports {
        assert!(r.deviation > 1e-10, "{r:?}");
    }
    // one constant, fitted on the coarsest mesh, covers the whole sweep
    let c = ratios[0];
    assert!(ratios.iter().all(|&r| r <= c * (1.0 + 1e-9)), "fitted constants {ratios:?}");
}
