use nudge_core::assimilate::{step2a_explicit, StabilityLedger};
use nudge_core::harness::converge::manufactured_error;
use nudge_core::harness::{manufactured_forcing, manufactured_velocity, RunConfig};
use nudge_core::spectral::random::random_solenoidal_field;
use nudge_core::spectral::SpectralVectorField;
use nudge_core::timestepper::{step1_forecast, step_standard_nudging, SchemeKind, TruthIntegrator};
use nudge_core::{Grid, Observer, Scheme, State};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn forecast_local_error(k: f64) -> f64 {
    let g = Grid::new(16).unwrap();
    let nu = 1.0;
    let t0 = 0.5;
    let cfg = Scheme::new(k, nu, 0.0, SchemeKind::None).unwrap();
    let state = State::new(t0, manufactured_velocity(&g, t0), cfg).unwrap();
    let (vt, _) = step1_forecast(&state, &manufactured_forcing(&g, nu, t0 + k)).unwrap();
    vt.sub(&manufactured_velocity(&g, t0 + k)).norm()
}

#[test]
fn forecast_local_error_is_second_order() {
    let (e1, e2) = (forecast_local_error(0.02), forecast_local_error(0.01));
    let rate = (e1 / e2).log2();
    assert!((1.8..=2.2).contains(&rate), "local rate {rate}");
}

#[test]
fn standard_nudging_copies_observed_modes_at_huge_gain() {
    let g = Grid::new(32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v = random_solenoidal_field(&g, &mut rng, 10, 1.0);
    let u = random_solenoidal_field(&g, &mut rng, 10, 1.0);
    let op = Observer::spectral_projection(&g, 4).unwrap();
    let obs = op.apply(&u).unwrap();
    let k = 0.01;
    let cfg = Scheme::new(k, 0.1, 1e8 / k, SchemeKind::Standard).unwrap();
    let state = State::new(0.0, v, cfg).unwrap();
    let zero = SpectralVectorField::zeros(&g);
    let (next, _) = step_standard_nudging(&state, &zero, &obs, &op).unwrap();
    let dev = op.apply(&next).unwrap().sub(&obs).norm() / obs.norm();
    assert!(dev <= 1e-6, "{dev}");
}

fn bdf2_error(k: f64) -> f64 {
    let g = Grid::new(16).unwrap();
    let nu = 1.0;
    let f = {
        let g = g.clone();
        move |t: f64| manufactured_forcing(&g, nu, t)
    };
    let mut truth = TruthIntegrator::new(manufactured_velocity(&g, 0.0), 0.0, k, nu, f)
        .unwrap()
        .with_solver(1e-13, 500);
    truth.advance_to(1.0).unwrap();
    truth.velocity().sub(&manufactured_velocity(&g, 1.0)).norm()
}

#[test]
fn truth_integrator_is_second_order() {
    let (e1, e2) = (bdf2_error(1.0 / 32.0), bdf2_error(1.0 / 64.0));
    let rate = (e1 / e2).log2();
    assert!((1.8..=2.2).contains(&rate), "BDF2 rate {rate}");
}

#[test]
fn unforced_truth_loses_energy() {
    let g = Grid::new(32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u0 = random_solenoidal_field(&g, &mut rng, 10, 0.5);
    let zero = {
        let g = g.clone();
        move |_: f64| SpectralVectorField::zeros(&g)
    };
    let mut truth = TruthIntegrator::new(u0, 0.0, 0.01, 0.01, zero).unwrap();
    let mut last = truth.velocity().norm();
    for _ in 0..40 {
        truth.step().unwrap();
        let now = truth.velocity().norm();
        assert!(now <= last * (1.0 + 1e-12), "{now} > {last}");
        last = now;
    }
}

#[test]
fn unforced_forecast_is_energy_stable_for_any_step() {
    let g = Grid::new(32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let zero = SpectralVectorField::zeros(&g);
    for i in 0..50 {
        let mut v = random_solenoidal_field(&g, &mut rng, 10, 0.0);
        // unit rms velocity
        v.scale(2.0 * std::f64::consts::PI / v.norm());
        let k = [0.001, 0.1, 1.0, 10.0, 100.0][i % 5];
        let mut cfg = Scheme::new(k, 1e-3, 0.0, SchemeKind::None).unwrap();
        // advection-dominated at large k: the Krylov solve needs many iterations
        cfg.solver_maxit = 5000;
        let state = State::new(0.0, v.clone(), cfg).unwrap();
        let (vt, _) = step1_forecast(&state, &zero).unwrap();
        assert!(vt.norm() <= v.norm() * (1.0 + 1e-10), "k = {k}: {} > {}", vt.norm(), v.norm());
    }
}

#[test]
fn stability_ledger_holds_on_manufactured_run() {
    let g = Grid::new(32).unwrap();
    let (k, nu, chi) = (0.05, 1.0, 1.0);
    let op = Observer::spectral_projection(&g, 8).unwrap();
    let cfg = Scheme::new(k, nu, chi, SchemeKind::TwoStepAExplicit).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut v = manufactured_velocity(&g, 0.0);
    v.axpy(0.1, &random_solenoidal_field(&g, &mut rng, 10, 1.0));
    let mut ledger = StabilityLedger::new(&v, k, nu, chi, 1.0 / std::f64::consts::PI, op.h_scale());
    for n in 0..40 {
        let t = (n + 1) as f64 * k;
        let f = manufactured_forcing(&g, nu, t);
        let truth = manufactured_velocity(&g, t);
        let state = State::new(t - k, v, cfg).unwrap();
        let (vt, _) = step1_forecast(&state, &f).unwrap();
        let obs = op.apply(&truth).unwrap();
        let next = step2a_explicit(&vt, &obs, &op, k, chi).unwrap().v_next;
        ledger.record(&vt, &next, &truth, &f, &op).unwrap();
        v = next;
    }
    assert_eq!(ledger.steps, 40);
    assert!(ledger.worst_margin >= 0.0, "margin {}", ledger.worst_margin);
}

#[test]
fn standard_nudging_error_comparable_to_two_step() {
    let cfg = RunConfig::manufactured();
    let k = 1.0 / 16.0;
    let standard = manufactured_error(&cfg, SchemeKind::Standard, 1e4, k).unwrap();
    let two_step = manufactured_error(&cfg, SchemeKind::TwoStepAExplicit, 1e4, k).unwrap();
    assert!(standard <= 2.0 * two_step, "{standard} vs {two_step}");
}
