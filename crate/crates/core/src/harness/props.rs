//! Property suites: exact identities and inequalities checked on
//! randomized instances.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assimilate::{
    check_gradient_monotonicity, check_polarization_identity, check_step2b_energy_identity, form_b_terms,
    step2a_explicit, step2a_implicit, step2b,
};
use crate::condlab::{assemble, reduced_apply, CoarseSpace};
use crate::error::Result;
use crate::krylov::KrylovVector;
use crate::observers::ObservationOperator;
use crate::predictability::{ftle_from_norms, ErrorSeries, NormKind};
use crate::spectral::random::{random_bump_field, random_solenoidal_field};
use crate::spectral::{check_ladyzhenskaya, gradient, leray_project, ScalarField, SpectralVectorField, TorusGrid};
use crate::timestepper::{step1_forecast, ForecastState, SchemeConfig, SchemeKind};

type Grid = Arc<TorusGrid<f64>>;
type Vf = SpectralVectorField<f64>;

/// `2^{1/4}` with 5% quadrature slack.
pub const LADYZHENSKAYA_LIMIT: f64 = 1.189_207_115_002_721 * 1.05;

#[derive(Clone, Debug)]
pub struct PropsOptions {
    pub seed: u64,
    /// Instances per suite.
    pub count: usize,
    /// Relative perturbation of the explicit gain (mutation check); 0 for none.
    pub tamper_gain: f64,
}

impl Default for PropsOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            count: 100,
            tamper_gain: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the suite's statistic.
    pub worst: f64,
    pub limit: f64,
    /// Hard suites make the run fail; soft ones are reported only.
    pub hard: bool,
    pub detail: String,
}

impl fmt::Display for PropOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match (self.passed, self.hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "WARN",
        };
        write!(f, "{tag} {:<34} worst={:.3e} limit={:.3e} {}", self.name, self.worst, self.limit, self.detail)
    }
}

#[derive(Clone, Debug, Default)]
pub struct PropsReport {
    pub outcomes: Vec<PropOutcome>,
}

impl PropsReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed || !o.hard)
    }

    pub fn get(&self, name: &str) -> Option<&PropOutcome> {
        self.outcomes.iter().find(|o| o.name == name)
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.outcomes
            .iter()
            .map(|o| format!("{},{},{},{:e},{:e}", o.name, o.passed, o.hard, o.worst, o.limit))
            .collect()
    }
}

pub const PROPS_HEADER: &str = "property,passed,hard,worst,limit";

fn outcome(name: &'static str, worst: f64, limit: f64, hard: bool, detail: String) -> PropOutcome {
    PropOutcome {
        name,
        passed: worst <= limit,
        worst,
        limit,
        hard,
        detail,
    }
}

fn random_gain(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let k = 10f64.powf(rng.gen_range(-3.0..0.0));
    let chi = 10f64.powf(rng.gen_range(-2.0..6.0));
    (k, chi)
}

fn pair(g: &Grid, rng: &mut ChaCha8Rng) -> (Vf, Vf) {
    (random_solenoidal_field(g, rng, 12, 1.0), random_solenoidal_field(g, rng, 12, 1.0))
}

/// Ratio `||w||_4 / (||w||^{1/2} ||grad w||^{1/2})` on bump-localized fields.
pub fn ladyzhenskaya_suite(count: usize, seed: u64) -> Result<PropOutcome> {
    let g = TorusGrid::new(64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let radius = rng.gen_range(0.4..1.6);
        let w = random_bump_field(&g, &mut rng, radius);
        worst = worst.max(check_ladyzhenskaya(&w)?.ratio);
    }
    Ok(outcome("ladyzhenskaya-l4-ratio", worst, LADYZHENSKAYA_LIMIT, false, format!("{count} bump fields")))
}

pub fn filter_suite(count: usize, seed: u64) -> Result<PropOutcome> {
    let g = TorusGrid::new(32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst = 0.0f64;
    for _ in 0..count {
        let op = ObservationOperator::differential_filter(&g, rng.gen_range(0.05..1.5))?;
        let decay = rng.gen_range(0.0..2.0);
        let w = random_solenoidal_field(&g, &mut rng, 15, decay);
        let r = op.check_filter_properties(&w)?;
        if !r.all_hold() {
            failures += 1;
        }
        worst = worst.max(r.norm_ratio - 1.0).max(r.grad_ratio - 1.0).max(r.approx_ratio - 0.5);
    }
    let mut o = outcome("filter-properties", failures as f64, 0.0, true, format!("{count} fields"));
    o.detail = format!("{count} fields, worst excess over bound {worst:.2e}");
    Ok(o)
}

/// Max relative gap between closed-form and solved analysis for both
/// idempotent operators.
pub fn equivalence_suite(count: usize, seed: u64, tamper: f64) -> Result<PropOutcome> {
    let g = TorusGrid::new(32)?;
    let ops = [
        ObservationOperator::spectral_projection(&g, 6)?,
        ObservationOperator::cell_average(&g, 8)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..count {
        let op = &ops[i % 2];
        let (vt, u) = pair(&g, &mut rng);
        let obs = op.apply(&u)?;
        let (k, chi) = random_gain(&mut rng);
        let mut explicit = step2a_explicit(&vt, &obs, op, k, chi)?.v_next;
        if tamper != 0.0 {
            let kc = k * chi;
            let mut innov = obs.clone();
            innov.axpy(-1.0, &op.apply(&vt)?);
            explicit.axpy(tamper * kc / (1.0 + kc), &innov);
        }
        let implicit = step2a_implicit(&vt, &obs, op, k, chi, 1e-13)?.v_next;
        worst = worst.max(explicit.sub(&implicit).norm() / implicit.norm());
    }
    Ok(outcome("explicit-implicit-equivalence", worst, 1e-10, true, format!("{count} instances")))
}

/// Form-b residual on the filter; also counts instances whose correction
/// term exceeds `1e-6` relative.
pub fn form_b_suite(count: usize, seed: u64, tol: f64) -> Result<(PropOutcome, usize)> {
    let g = TorusGrid::new(32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut nonzero = 0;
    for _ in 0..count {
        let op = ObservationOperator::differential_filter(&g, rng.gen_range(0.1..1.0))?;
        let (vt, u) = pair(&g, &mut rng);
        let obs = op.apply(&u)?;
        let (k, chi) = (rng.gen_range(0.01..0.5), 10f64.powf(rng.gen_range(0.0..3.0)));
        let v = step2a_implicit(&vt, &obs, &op, k, chi, tol)?.v_next;
        let terms = form_b_terms(&vt, &obs, &v, &op, k, chi)?;
        worst = worst.max(terms.residual);
        if terms.correction.norm() > 1e-6 * v.norm() {
            nonzero += 1;
        }
    }
    let o = outcome(
        "form-b-identity",
        worst,
        10.0 * tol,
        true,
        format!("{count} filter instances, {nonzero} with nonzero correction"),
    );
    Ok((o, nonzero))
}

pub fn polarization_suite(count: usize, seed: u64) -> Result<PropOutcome> {
    let g = TorusGrid::new(32)?;
    let ops = [
        ObservationOperator::spectral_projection(&g, 5)?,
        ObservationOperator::cell_average(&g, 8)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut violations) = (0.0f64, 0);
    for i in 0..count {
        let op = &ops[i % 2];
        let (vt, u) = pair(&g, &mut rng);
        let (k, chi) = random_gain(&mut rng);
        let v = step2a_explicit(&vt, &op.apply(&u)?, op, k, chi)?.v_next;
        let (e, et) = (u.sub(&v), u.sub(&vt));
        worst = worst.max(check_polarization_identity(&e, &et, op, k, chi)?);
        if op.apply(&e)?.norm() > 1e-14 && !(e.norm() < et.norm()) {
            violations += 1;
        }
    }
    let mut o = outcome("polarization-identity", worst, 1e-10, true, format!("{count} steps"));
    if violations > 0 {
        o.passed = false;
        o.detail = format!("{violations} steps without strict error decrease");
    }
    Ok(o)
}

pub fn gradient_monotonicity_suite(count: usize, seed: u64) -> Result<PropOutcome> {
    let g = TorusGrid::new(32)?;
    let op = ObservationOperator::spectral_projection(&g, 5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut increases = 0;
    for _ in 0..count {
        let (vt, u) = pair(&g, &mut rng);
        let (k, chi) = random_gain(&mut rng);
        let v = step2a_explicit(&vt, &op.apply(&u)?, &op, k, chi)?.v_next;
        let (e, et) = (u.sub(&v), u.sub(&vt));
        worst = worst.max(check_gradient_monotonicity(&e, &et, &op, k, chi)?);
        if crate::spectral::h1_seminorm(&e) > crate::spectral::h1_seminorm(&et) {
            increases += 1;
        }
    }
    let mut o = outcome("gradient-monotonicity", worst, 1e-10, true, format!("{count} steps"));
    if increases > 0 {
        o.passed = false;
        o.detail = format!("{increases} steps with gradient error growth");
    }
    Ok(o)
}

pub fn step2b_suite(count: usize, seed: u64) -> Result<PropOutcome> {
    let g = TorusGrid::new(32)?;
    let ops = [
        ObservationOperator::spectral_projection(&g, 5)?,
        ObservationOperator::cell_average(&g, 8)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..count {
        let op = &ops[i % 2];
        let (vt, u) = pair(&g, &mut rng);
        let (k, chi) = random_gain(&mut rng);
        let nu = 10f64.powf(rng.gen_range(-3.0..0.0));
        let v = step2b(&vt, &op.apply(&u)?, op, k, chi, nu, 1e-13)?.v_next;
        worst = worst.max(check_step2b_energy_identity(&u.sub(&v), &u.sub(&vt), op, k, chi, nu)?);
    }
    Ok(outcome("step2b-energy-identity", worst, 1e-10, true, format!("{count} steps")))
}

pub fn commutation_suite(count: usize, seed: u64) -> Result<PropOutcome> {
    let g = TorusGrid::new(32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let op = ObservationOperator::spectral_projection(&g, rng.gen_range(1..15))?;
        let s = ScalarField::from_fn(&g, |x: f64, y: f64| (x + 2.0 * y).sin() + (3.0 * x).cos() * (5.0 * y).sin());
        let s = {
            let w = random_solenoidal_field(&g, &mut rng, 14, 1.0);
            let mut c = s;
            c.axpy(1.0, w.component(0));
            c
        };
        let a = op.apply(&gradient(&s))?;
        let b = gradient(&op.apply_scalar(&s)?);
        worst = worst.max(a.sub(&b).norm() / gradient(&s).norm());
    }
    Ok(outcome("projection-gradient-commutation", worst, 1e-12, true, format!("{count} fields")))
}

pub fn idempotency_suite(count: usize, seed: u64) -> Result<PropOutcome> {
    let g = TorusGrid::new(32)?;
    let ops = [
        ObservationOperator::spectral_projection(&g, 7)?,
        ObservationOperator::cell_average(&g, 4)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..count {
        let w = random_solenoidal_field(&g, &mut rng, 15, 0.5);
        worst = worst.max(ops[i % 2].check_idempotency(&w)?);
        let p = leray_project(&w);
        worst = worst.max(leray_project(&p).sub(&p).norm() / p.norm());
    }
    Ok(outcome("projection-idempotency", worst, 1e-12, true, format!("{count} fields")))
}

/// Unforced forecast never gains energy.
pub fn energy_stability_suite(count: usize, seed: u64) -> Result<PropOutcome> {
    let g = TorusGrid::new(32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = SpectralVectorField::zeros(&g);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..count {
        let (decay, amp) = (rng.gen_range(0.0..1.5), rng.gen_range(0.1..3.0));
        let v = random_solenoidal_field(&g, &mut rng, 10, decay).scaled(amp);
        let k = 10f64.powf(rng.gen_range(-3.0..0.0));
        let nu = 10f64.powf(rng.gen_range(-3.0..0.0));
        let mut sc = SchemeConfig::new(k, nu, 0.0, SchemeKind::None)?;
        // strongly advective draws need more than the default iteration cap
        sc.solver_maxit = 4000;
        let st = ForecastState::new(0.0, v.clone(), sc)?;
        let (vt, _) = step1_forecast(&st, &zero)?;
        worst = worst.max((vt.norm() - v.norm()) / v.norm());
    }
    Ok(outcome("forecast-energy-stability", worst, 1e-12, true, format!("{count} fields")))
}

pub fn ftle_suite(count: usize, seed: u64) -> Result<PropOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let t: Vec<f64> = {
            let mut t = vec![0.0, rng.gen_range(0.1..3.0)];
            t.push(t[1] + rng.gen_range(0.1..3.0));
            t
        };
        let e: Vec<f64> = (0..3).map(|_| 10f64.powf(rng.gen_range(-6.0..1.0))).collect();
        let s = ErrorSeries::from_parts(t.clone(), e.clone(), NormKind::L2)?;
        let l13 = crate::predictability::ftle(&s, t[0], t[2])?;
        let l12 = crate::predictability::ftle(&s, t[0], t[1])?;
        let l23 = crate::predictability::ftle(&s, t[1], t[2])?;
        let avg = (l12 * (t[1] - t[0]) + l23 * (t[2] - t[1])) / (t[2] - t[0]);
        worst = worst.max((l13 - avg).abs() / l13.abs().max(1.0));
        let c = 10f64.powf(rng.gen_range(-5.0..5.0));
        let scaled = ftle_from_norms(c * e[0], c * e[2], t[2] - t[0])?;
        worst = worst.max((scaled - l13).abs() / l13.abs().max(1.0));
    }
    Ok(outcome("ftle-composition-and-scaling", worst, 1e-12, true, format!("{count} series")))
}

pub fn reduced_symmetry_suite(count: usize, seed: u64) -> Result<PropOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for (i, space) in [CoarseSpace::NestedLinear, CoarseSpace::PiecewiseConstant].into_iter().enumerate() {
        let ops = assemble::<f64>(64, 8, space)?.with_gain(10f64.powi(i as i32 * 2 + 1))?;
        for _ in 0..count / 2 {
            let c: Vec<f64> = (0..63).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d: Vec<f64> = (0..63).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let acd = KrylovVector::dot(&reduced_apply(&ops, &c)?, &d);
            let cad = KrylovVector::dot(&c, &reduced_apply(&ops, &d)?);
            let scale = KrylovVector::norm(&reduced_apply(&ops, &c)?) * KrylovVector::norm(&d);
            worst = worst.max((acd - cad).abs() / scale);
        }
    }
    Ok(outcome("reduced-operator-symmetry", worst, 1e-12, true, format!("{count} pairs")))
}

/// Coefficient-space projection is idempotent for the nested coarse space
/// and not for piecewise constants.
pub fn nested_idempotency_suite(count: usize, seed: u64) -> Result<PropOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nested = assemble::<f64>(64, 8, CoarseSpace::NestedLinear)?;
    let p0 = assemble::<f64>(64, 8, CoarseSpace::PiecewiseConstant)?;
    let (mut worst_nested, mut best_p0) = (0.0f64, f64::INFINITY);
    for _ in 0..count.max(2) / 2 {
        let c: Vec<f64> = (0..63).map(|_| rng.gen_range(-1.0..1.0)).collect();
        worst_nested = worst_nested.max(nested.idempotency_defect(&c)?);
        best_p0 = best_p0.min(p0.idempotency_defect(&c)?);
    }
    let mut o = outcome(
        "coarse-projection-idempotent-iff-nested",
        worst_nested,
        1e-10,
        true,
        format!("non-nested min defect {best_p0:.2e}"),
    );
    if !(best_p0 > 1e-6) {
        o.passed = false;
    }
    Ok(o)
}

/// Runs every suite.
pub fn run_props(opts: &PropsOptions) -> PropsReport {
    let (n, s) = (opts.count, opts.seed);
    let suites: Vec<(&'static str, Box<dyn Fn() -> Result<PropOutcome>>)> = vec![
        ("ladyzhenskaya-l4-ratio", Box::new(move || ladyzhenskaya_suite(n, s))),
        ("filter-properties", Box::new(move || filter_suite(n, s + 1))),
        ("explicit-implicit-equivalence", Box::new({
            let t = opts.tamper_gain;
            move || equivalence_suite(n, s + 2, t)
        })),
        ("form-b-identity", Box::new(move || form_b_suite(n, s + 3, 1e-12).map(|o| o.0))),
        ("polarization-identity", Box::new(move || polarization_suite(n, s + 4))),
        ("gradient-monotonicity", Box::new(move || gradient_monotonicity_suite(n, s + 5))),
        ("step2b-energy-identity", Box::new(move || step2b_suite(n, s + 6))),
        ("projection-gradient-commutation", Box::new(move || commutation_suite(n, s + 7))),
        ("projection-idempotency", Box::new(move || idempotency_suite(n, s + 8))),
        ("forecast-energy-stability", Box::new(move || energy_stability_suite(n.min(50), s + 9))),
        ("ftle-composition-and-scaling", Box::new(move || ftle_suite(n, s + 10))),
        ("reduced-operator-symmetry", Box::new(move || reduced_symmetry_suite(n, s + 11))),
        ("coarse-projection-idempotent-iff-nested", Box::new(move || nested_idempotency_suite(n, s + 12))),
    ];
    let outcomes = suites
        .into_iter()
        .map(|(name, run)| {
            run().unwrap_or_else(|e| PropOutcome {
                name,
                passed: false,
                worst: f64::NAN,
                limit: f64::NAN,
                hard: true,
                detail: format!("error: {e}"),
            })
        })
        .collect();
    PropsReport { outcomes }
}
