//! Twin experiment: a BDF2 truth run observed through `I_H` and
//! assimilated into perturbed runs, all stepped in lockstep so the truth is
//! never stored.

use std::fs::File;
use std::io::BufWriter;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assimilate::{
    check_gradient_monotonicity, check_polarization_identity, check_step2b_energy_identity, form_b_terms,
    validate_hypotheses, AnalysisConstants, HypothesisReport, IdentityResiduals, LedgerRow, StabilityLedger,
    LEDGER_HEADER,
};
use crate::error::{Error, Result};
use crate::observers::ObservationOperator;
use crate::predictability::{
    epsilon_horizon, ftle_from_norms, microscale_condition, taylor_microscale, ErrorSeries, HorizonReport,
    MicroscaleCondition, NormKind, HORIZON_HEADER,
};
use crate::spectral::{h1_seminorm, SpectralVectorField, TorusGrid};
use crate::timestepper::{ForecastState, SchemeConfig, SchemeKind, TruthIntegrator};

use super::config::{InitialCondition, RunConfig, RunSpec};
use super::output::OutputSink;
use super::{advance, forcing_pattern, perturbation_field, ramp, random_initial_field};

type Vf = SpectralVectorField<f64>;

/// Threshold on `||I_H e||` above which the analysis must strictly
/// decrease the error.
pub const OBSERVED_ERROR_FLOOR: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub spec: RunSpec,
    /// Error norms (configured kind) at every assimilation time, from `t = 0`.
    pub series: ErrorSeries<f64>,
    pub times: Vec<f64>,
    pub relative: Vec<f64>,
    pub e_l2: Vec<f64>,
    pub e_h1: Vec<f64>,
    /// Per-step identity ledger (steps `1..=N`).
    pub ledger: Vec<LedgerRow<f64>>,
    /// `||I_H e^{n+1}||` per step.
    pub observed_error: Vec<f64>,
    pub mean_relative_error: f64,
    pub final_relative_error: f64,
    pub max_polarization: Option<f64>,
    pub max_form_b: Option<f64>,
    pub max_gradient_monotonicity: Option<f64>,
    pub decrease_checked: usize,
    pub decrease_violations: usize,
    /// Per-step (window, epsilon) pairs with both one-step FTLEs positive.
    pub horizon_checked: usize,
    pub horizon_violations: usize,
    pub horizons: Vec<HorizonReport<f64>>,
    pub hypotheses: HypothesisReport,
    pub microscale: Option<MicroscaleCondition>,
    /// Final `rhs - lhs` of the finite-time stability bound (2A runs).
    pub stability_margin: Option<f64>,
    pub max_forecast_iterations: usize,
    pub final_state: ForecastState<f64>,
}

impl RunSummary {
    pub fn label(&self) -> String {
        self.spec.label()
    }
}

#[derive(Clone, Debug)]
pub struct TwinReport {
    pub runs: Vec<RunSummary>,
    pub times: Vec<f64>,
    pub truth_l2: Vec<f64>,
    pub truth_h1: Vec<f64>,
    pub c1_estimate: f64,
    pub epsilons: Vec<f64>,
    pub truth_final: Vf,
}

impl TwinReport {
    pub fn run(&self, scheme: SchemeKind, chi: f64) -> Option<&RunSummary> {
        self.runs.iter().find(|r| r.spec.scheme == scheme && r.spec.chi == chi)
    }
}

struct RunState {
    spec: RunSpec,
    state: ForecastState<f64>,
    e_l2: Vec<f64>,
    e_h1: Vec<f64>,
    relative: Vec<f64>,
    ledger: Vec<LedgerRow<f64>>,
    /// Forecast error norms (configured kind) per step.
    etilde_kind: Vec<f64>,
    /// Raw analysis error norms (configured kind) per step.
    eraw_kind: Vec<f64>,
    observed_error: Vec<f64>,
    decrease_checked: usize,
    decrease_violations: usize,
    stability: Option<StabilityLedger<f64>>,
    max_iters: usize,
    last_error: Vf,
}

fn max_opt(acc: Option<f64>, x: Option<f64>) -> Option<f64> {
    match (acc, x) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    }
}

fn measure(kind: NormKind, w: &Vf) -> f64 {
    kind.measure(w)
}

/// Runs every configured assimilation variant against one truth.
pub fn run_twin(cfg: &RunConfig) -> Result<TwinReport> {
    cfg.validate()?;
    let grid = TorusGrid::new(cfg.n)?;
    let op = ObservationOperator::from_spec(&grid, cfg.observer)?;
    let tw = &cfg.twin;
    let pattern = forcing_pattern(&grid, tw.forcing_radius, tw.forcing_amplitude, cfg.seed);
    let forcing_of = {
        let p = pattern.clone();
        move |t: f64| p.scaled(ramp(t))
    };
    let u0 = match tw.initial {
        InitialCondition::Rest => SpectralVectorField::zeros(&grid),
        InitialCondition::Random => random_initial_field(&grid, tw.initial_peak, tw.initial_rms, cfg.seed),
    };
    let mut v0 = u0.clone();
    v0.axpy(tw.perturbation * cfg.k, &perturbation_field(&grid));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(17));
    let c1_estimate = op
        .estimate_c1(20, &mut rng)
        .map(|c| c.c1_estimate)
        .unwrap_or_else(|_| op.analytic_c1());
    let h = op.h_scale();

    let mut truth = TruthIntegrator::new(u0.clone(), 0.0, cfg.k_truth(), cfg.nu, forcing_of.clone())?
        .with_solver(cfg.solver_tol.min(1e-11), cfg.solver_maxit);
    let substeps = cfg.truth_substeps();
    let kind = cfg.horizon.norm;

    let mut runs: Vec<RunState> = Vec::new();
    for spec in cfg.runs() {
        let mut sc = SchemeConfig::new(cfg.k, cfg.nu, spec.chi, spec.scheme)?;
        sc.solver_tol = cfg.solver_tol;
        sc.solver_maxit = cfg.solver_maxit;
        sc.analysis_tol = cfg.analysis_tol;
        let e0 = u0.sub(&v0);
        let stability = matches!(spec.scheme, SchemeKind::TwoStepAExplicit | SchemeKind::TwoStepAImplicit)
            .then(|| StabilityLedger::new(&v0, cfg.k, cfg.nu, spec.chi, c1_estimate, h));
        let unorm = u0.norm();
        runs.push(RunState {
            spec,
            state: ForecastState::new(0.0, v0.clone(), sc)?,
            e_l2: vec![e0.norm()],
            e_h1: vec![h1_seminorm(&e0)],
            relative: vec![if unorm > 0.0 { e0.norm() / unorm } else { f64::NAN }],
            ledger: Vec::new(),
            etilde_kind: Vec::new(),
            eraw_kind: Vec::new(),
            observed_error: Vec::new(),
            decrease_checked: 0,
            decrease_violations: 0,
            stability,
            max_iters: 0,
            last_error: e0,
        });
    }

    let steps = cfg.steps();
    let mut times = vec![0.0];
    let mut truth_l2 = vec![u0.norm()];
    let mut truth_h1 = vec![h1_seminorm(&u0)];
    let mut max_grad_u = truth_h1[0];
    for n in 0..steps {
        let t_next = (n + 1) as f64 * cfg.k;
        for _ in 0..substeps {
            truth.step()?;
        }
        let u = truth.velocity();
        let f = forcing_of(t_next);
        let obs = op.apply(u)?;
        let unorm = u.norm();
        times.push(t_next);
        truth_l2.push(unorm);
        truth_h1.push(h1_seminorm(u));
        max_grad_u = max_grad_u.max(*truth_h1.last().unwrap());

        for run in runs.iter_mut() {
            let out = advance(&run.state, &f, &obs, &op)?;
            run.max_iters = run.max_iters.max(out.forecast_iterations);
            let (k, chi) = (cfg.k, run.spec.chi);
            if let (Some(vt), Some(an)) = (&out.vtilde, &out.analysis) {
                let et = u.sub(vt);
                let e_raw = u.sub(&an.v_next);
                let ih_e = op.apply(&e_raw)?.norm();
                run.observed_error.push(ih_e);
                let mut res = IdentityResiduals::default();
                if op.is_l2_projection() {
                    if run.spec.scheme == SchemeKind::TwoStepB {
                        res.polarization = Some(check_step2b_energy_identity(&e_raw, &et, &op, k, chi, cfg.nu)?);
                    } else {
                        res.polarization = Some(check_polarization_identity(&e_raw, &et, &op, k, chi)?);
                        res.gradient_monotonicity = Some(check_gradient_monotonicity(&e_raw, &et, &op, k, chi)?);
                    }
                    if ih_e > OBSERVED_ERROR_FLOOR {
                        run.decrease_checked += 1;
                        if !(e_raw.norm() < et.norm()) {
                            run.decrease_violations += 1;
                        }
                    }
                }
                if run.spec.scheme != SchemeKind::TwoStepB {
                    res.form_b = Some(form_b_terms(vt, &obs, &an.v_next, &op, k, chi)?.residual);
                }
                run.ledger.push(LedgerRow::new(n + 1, t_next, &e_raw, &et, res));
                run.etilde_kind.push(measure(kind, &et));
                run.eraw_kind.push(measure(kind, &e_raw));
                if let Some(st) = run.stability.as_mut() {
                    st.record(vt, &an.v_next, u, &f, &op)?;
                }
            }
            run.state.velocity = out.v_next;
            run.state.time = t_next;
            let e = u.sub(&run.state.velocity);
            if !e.is_finite() {
                return Err(Error::NonFinite("twin run error"));
            }
            run.e_l2.push(e.norm());
            run.e_h1.push(h1_seminorm(&e));
            run.relative.push(if unorm > 0.0 { e.norm() / unorm } else { f64::NAN });
            run.last_error = e;
        }
        if (n + 1) % 500 == 0 {
            log::info!("twin: step {}/{steps}, t = {t_next:.2}", n + 1);
        }
    }

    let truth_series = match kind {
        NormKind::L2 => &truth_l2,
        NormKind::H1Semi => &truth_h1,
    };
    let epsilons = if cfg.horizon.epsilons.is_empty() {
        let avg = trapezoid_mean(&times, truth_series);
        vec![0.1 * avg]
    } else {
        cfg.horizon.epsilons.clone()
    };

    let truth_final = truth.velocity().clone();
    let grad_u_final = h1_seminorm(&truth_final);
    let consts = AnalysisConstants {
        c1: c1_estimate,
        ..AnalysisConstants::default()
    };
    let mut summaries = Vec::new();
    for run in runs {
        let norms = match kind {
            NormKind::L2 => run.e_l2.clone(),
            NormKind::H1Semi => run.e_h1.clone(),
        };
        let series = ErrorSeries::from_parts(times.clone(), norms.clone(), kind)?;
        let (a, b) = cfg.twin.average_window;
        let rel = ErrorSeries::from_parts(times.clone(), run.relative.clone(), kind)?;
        let mean_relative_error = rel.time_average(a, b)?;
        let window = match cfg.horizon.window {
            Some(w) => w,
            None => series.default_window()?,
        };
        let mut horizons = Vec::new();
        for &eps in &epsilons {
            match HorizonReport::compute(&series, window.0, window.1, eps) {
                Ok(h) => horizons.push(h),
                Err(e) => log::warn!("{}: no horizon for window {window:?}: {e}", run.spec.label()),
            }
        }
        let (mut horizon_checked, mut horizon_violations) = (0, 0);
        for (i, (&off_n, &on_n)) in run.etilde_kind.iter().zip(&run.eraw_kind).enumerate() {
            let e_prev = norms[i];
            let (Ok(off), Ok(on)) = (ftle_from_norms(e_prev, off_n, cfg.k), ftle_from_norms(e_prev, on_n, cfg.k)) else {
                continue;
            };
            if !(off > 0.0 && on > 0.0) {
                continue;
            }
            for &eps in &epsilons {
                let t_off = epsilon_horizon(off, e_prev, eps)?;
                let t_on = epsilon_horizon(on, e_prev, eps)?;
                horizon_checked += 1;
                if t_on < t_off {
                    horizon_violations += 1;
                }
            }
        }
        let microscale = taylor_microscale(&run.last_error)
            .ok()
            .map(|lt| microscale_condition(lt, run.spec.chi, c1_estimate, h, cfg.nu, grad_u_final));
        let fold = |f: fn(&IdentityResiduals<f64>) -> Option<f64>| {
            run.ledger.iter().fold(None, |acc, row| max_opt(acc, f(&row.residuals)))
        };
        summaries.push(RunSummary {
            spec: run.spec,
            final_relative_error: *run.relative.last().unwrap(),
            mean_relative_error,
            max_polarization: fold(|r| r.polarization),
            max_form_b: fold(|r| r.form_b),
            max_gradient_monotonicity: fold(|r| r.gradient_monotonicity),
            decrease_checked: run.decrease_checked,
            decrease_violations: run.decrease_violations,
            horizon_checked,
            horizon_violations,
            horizons,
            hypotheses: validate_hypotheses(cfg.k, cfg.nu, run.spec.chi, h, consts, max_grad_u),
            microscale,
            stability_margin: run.stability.as_ref().map(|s| s.worst_margin),
            max_forecast_iterations: run.max_iters,
            series,
            times: times.clone(),
            relative: run.relative,
            e_l2: run.e_l2,
            e_h1: run.e_h1,
            ledger: run.ledger,
            observed_error: run.observed_error,
            final_state: run.state,
        });
    }
    Ok(TwinReport {
        runs: summaries,
        times,
        truth_l2,
        truth_h1,
        c1_estimate,
        epsilons,
        truth_final,
    })
}

fn trapezoid_mean(t: &[f64], y: &[f64]) -> f64 {
    if t.len() < 2 {
        return y.first().copied().unwrap_or(0.0);
    }
    let mut acc = 0.0;
    for i in 0..t.len() - 1 {
        acc += 0.5 * (y[i] + y[i + 1]) * (t[i + 1] - t[i]);
    }
    acc / (t[t.len() - 1] - t[0])
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), |v| format!("{v:e}"))
}

pub const SUMMARY_HEADER: &str = "run,scheme,chi,mean_rel_error,final_rel_error,max_polarization_res,max_formb_res,\
max_gradmono_res,decrease_violations,horizon_violations,stability_margin,hypotheses_hold";

/// Writes error series, ledgers, horizon rows, the run summary, final
/// checkpoints and (when enabled) plot curves.
pub fn write_twin_outputs(report: &TwinReport, sink: &OutputSink) -> Result<()> {
    sink.write_csv(
        "truth.csv",
        "t,u_l2,u_h1semi",
        report
            .times
            .iter()
            .zip(report.truth_l2.iter().zip(&report.truth_h1))
            .map(|(t, (a, b))| format!("{t},{a:e},{b:e}")),
    )?;
    let mut horizon_rows = Vec::new();
    let mut summary_rows = Vec::new();
    for run in &report.runs {
        let label = run.label();
        sink.write_csv(
            &format!("errors_{label}.csv"),
            "n,t,rel_error,e_l2,e_h1semi",
            (0..run.times.len()).map(|i| {
                format!("{i},{},{:e},{:e},{:e}", run.times[i], run.relative[i], run.e_l2[i], run.e_h1[i])
            }),
        )?;
        if !run.ledger.is_empty() {
            sink.write_csv(&format!("ledger_{label}.csv"), LEDGER_HEADER, run.ledger.iter().map(|r| r.to_csv()))?;
        }
        horizon_rows.extend(run.horizons.iter().map(|h| h.to_csv(&label)));
        summary_rows.push(format!(
            "{label},{},{},{:e},{:e},{},{},{},{},{},{},{}",
            run.spec.scheme.label(),
            run.spec.chi,
            run.mean_relative_error,
            run.final_relative_error,
            fmt_opt(run.max_polarization),
            fmt_opt(run.max_form_b),
            fmt_opt(run.max_gradient_monotonicity),
            run.decrease_violations,
            run.horizon_violations,
            fmt_opt(run.stability_margin),
            run.hypotheses.all_hold(),
        ));
        let curve: Vec<(f64, f64)> = run.times.iter().copied().zip(run.relative.iter().copied()).collect();
        sink.write_curve(&format!("plot_relerr_{label}.dat"), &curve)?;
        let snap = run.final_state.to_snapshot();
        snap.write_binary(BufWriter::new(File::create(sink.dir().join(format!("checkpoint_{label}.bin")))?))?;
    }
    sink.write_csv("horizon.csv", HORIZON_HEADER, horizon_rows)?;
    sink.write_csv("twin_summary.csv", SUMMARY_HEADER, summary_rows)?;
    let last = *report.times.last().unwrap_or(&0.0);
    crate::spectral::Snapshot::new(last, report.truth_final.clone())
        .write_binary(BufWriter::new(File::create(sink.dir().join("truth_final.bin"))?))?;
    Ok(())
}

