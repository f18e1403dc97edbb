//! Experiment drivers behind the command-line tool: temporal convergence,
//! twin experiments, horizon reports, the conditioning sweep and the
//! property suites. All drivers run in `f64`.

pub mod condsweep;
pub mod config;
pub mod converge;
pub mod output;
pub mod props;
pub mod twin;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use condsweep::{run_condlab, CondRow, CONDLAB_HEADER};
pub use config::{InitialCondition, Mode, RunConfig, RunSpec, OUTPUT_DIR_ENV};
pub use converge::{run_converge, ConvergenceRow, ConvergenceTable};
pub use output::OutputSink;
pub use props::{run_props, PropOutcome, PropsOptions, PropsReport};
pub use twin::{run_twin, RunSummary, TwinReport};

use crate::assimilate::{step2a_explicit, step2a_implicit, step2b, AnalysisResult};
use crate::error::Result;
use crate::observers::{ObservationOperator, ObserverKind};
use crate::spectral::{leray_project_in_place, perp_gradient, ScalarField, SpectralVectorField, TorusGrid};
use crate::timestepper::{step1_forecast, step_standard_nudging, ForecastState, SchemeKind};
use num_complex::Complex;
use rand::Rng;

type Vf = SpectralVectorField<f64>;

/// `e^t (cos y, sin x)`: solves the forced equations with the forcing
/// [`manufactured_forcing`], since its advection is a pure gradient.
pub fn manufactured_velocity(grid: &Arc<TorusGrid<f64>>, t: f64) -> Vf {
    let a = t.exp();
    SpectralVectorField::from_fn(grid, |x, y| (a * y.cos(), a * x.sin()))
}

/// `(1 + nu) e^t (cos y, sin x)`
pub fn manufactured_forcing(grid: &Arc<TorusGrid<f64>>, nu: f64, t: f64) -> Vf {
    manufactured_velocity(grid, t).scaled(1.0 + nu)
}

/// Static rotational forcing pattern `grad_perp psi` with random phases on
/// `1 <= |k| <= radius`, scaled to root-mean-square `amplitude`.
pub fn forcing_pattern(grid: &Arc<TorusGrid<f64>>, radius: f64, amplitude: f64, seed: u64) -> Vf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf0_4c_e5);
    let mut psi = ScalarField::zeros(grid);
    let r = radius.floor() as i64;
    for m2 in 0..=r {
        for m1 in -r..=r {
            let k2 = (m1 * m1 + m2 * m2) as f64;
            if k2 == 0.0 || k2.sqrt() > radius || (m2 == 0 && m1 < 0) {
                continue;
            }
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let c = Complex::from_polar(1.0 / k2, phase);
            psi.set_coeff(m1, m2, c);
            psi.set_coeff(-m1, -m2, c.conj());
        }
    }
    let f = perp_gradient(&psi);
    let rms = f.norm() / grid.area().sqrt();
    if rms > 0.0 {
        f.scaled(amplitude / rms)
    } else {
        f
    }
}

/// Forcing ramp `min(1, t)`.
pub fn ramp(t: f64) -> f64 {
    t.min(1.0)
}

/// Random solenoidal field with spectrum `|k|^4 exp(-2 (|k|/peak)^2)`
/// (energy peaked near `peak`), scaled to root-mean-square `rms`.
pub fn random_initial_field(grid: &Arc<TorusGrid<f64>>, peak: f64, rms: f64, seed: u64) -> Vf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi = ScalarField::zeros(grid);
    let kmax = (grid.n() / 3) as i64;
    for m2 in 0..=kmax {
        for m1 in -kmax..=kmax {
            let k2 = (m1 * m1 + m2 * m2) as f64;
            if k2 == 0.0 || (m2 == 0 && m1 < 0) {
                continue;
            }
            let kk = k2.sqrt();
            // velocity amplitude ~ k |psi|; energy shell ~ k |u|^2
            let energy = kk.powi(4) * (-2.0 * (kk / peak).powi(2)).exp();
            let amp = (energy / (kk * kk * kk)).sqrt();
            let c = Complex::from_polar(amp, rng.gen_range(0.0..std::f64::consts::TAU));
            psi.set_coeff(m1, m2, c);
            psi.set_coeff(-m1, -m2, c.conj());
        }
    }
    let u = perp_gradient(&psi);
    let now = u.norm() / grid.area().sqrt();
    u.scaled(rms / now)
}

/// Fixed smooth solenoidal perturbation `(sin x cos y, -cos x sin y)`.
pub fn perturbation_field(grid: &Arc<TorusGrid<f64>>) -> Vf {
    SpectralVectorField::from_fn(grid, |x, y| (x.sin() * y.cos(), -x.cos() * y.sin()))
}

/// Everything one assimilation step produced.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// State carried to the next step.
    pub v_next: Vf,
    /// Forecast, for two-step schemes.
    pub vtilde: Option<Vf>,
    /// Analysis before any re-projection.
    pub analysis: Option<AnalysisResult<f64>>,
    pub forecast_iterations: usize,
}

/// Advances `state` by one step of its scheme.
pub fn advance(
    state: &ForecastState<f64>,
    forcing: &Vf,
    observation: &Vf,
    op: &ObservationOperator<f64>,
) -> Result<StepOutcome> {
    let cfg = &state.config;
    let (k, chi) = (cfg.k, cfg.chi);
    match cfg.scheme {
        SchemeKind::None => {
            let (v, stats) = step1_forecast(state, forcing)?;
            Ok(StepOutcome {
                v_next: v,
                vtilde: None,
                analysis: None,
                forecast_iterations: stats.iterations,
            })
        }
        SchemeKind::Standard => {
            let (v, stats) = step_standard_nudging(state, forcing, observation, op)?;
            Ok(StepOutcome {
                v_next: v,
                vtilde: None,
                analysis: None,
                forecast_iterations: stats.iterations,
            })
        }
        two_step => {
            let (vt, stats) = step1_forecast(state, forcing)?;
            let analysis = match two_step {
                SchemeKind::TwoStepAExplicit => step2a_explicit(&vt, observation, op, k, chi)?,
                SchemeKind::TwoStepAImplicit => step2a_implicit(&vt, observation, op, k, chi, cfg.analysis_tol)?,
                _ => step2b(&vt, observation, op, k, chi, cfg.nu, cfg.analysis_tol)?,
            };
            let mut v_next = analysis.v_next.clone();
            if matches!(op.kind(), ObserverKind::CellAverage { .. }) {
                leray_project_in_place(&mut v_next);
            }
            Ok(StepOutcome {
                v_next,
                vtilde: Some(vt),
                analysis: Some(analysis),
                forecast_iterations: stats.iterations,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{advect, divergence, leray_project};

    #[test]
    fn manufactured_advection_is_a_gradient() {
        let g = TorusGrid::new(16).unwrap();
        let u = manufactured_velocity(&g, 0.3);
        let adv = advect(&u, &u).unwrap();
        assert!(leray_project(&adv).norm() < 1e-13 * adv.norm());
    }

    #[test]
    fn patterns_are_solenoidal_and_scaled() {
        let g = TorusGrid::new(32).unwrap();
        for f in [forcing_pattern(&g, 2.0, 0.3, 1), random_initial_field(&g, 5.0, 1.0, 2), perturbation_field(&g)] {
            assert!(divergence(&f).norm() < 1e-12);
            assert!(f.norm() > 0.0);
        }
        let f = forcing_pattern(&g, 2.0, 0.3, 1);
        assert!((f.norm() / g.area().sqrt() - 0.3).abs() < 1e-12);
    }
}
