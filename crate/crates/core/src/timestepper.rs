//! Forecast step (semi-implicit backward Euler), fused standard nudging and
//! the BDF2 truth integrator.
//!
//! All three solve a Leray-projected linear system of the form
//!
//! ```text
//! a w + P[adv(b, w)] - nu Lap w + chi P I_H w = rhs
//! ```
//!
//! with the advecting field `b` frozen, by right-preconditioned GMRES with
//! the diagonal preconditioner `(a + nu |k|^2 + chi sigma_H(k))^-1`, where
//! `sigma_H` is the Fourier symbol of `I_H` when it has one.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::{gmres, KrylovOptions, SolveStats};
use crate::observers::ObservationOperator;
use crate::scalar::Real;
use crate::spectral::{leray_project, leray_project_in_place, Advector, Snapshot, SpectralVectorField};

/// Which assimilation scheme a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// Forecast only.
    None,
    /// One-step nudging with the nudging term inside the momentum solve.
    Standard,
    /// Forecast + closed-form analysis update (idempotent `I_H` only).
    #[serde(rename = "2a-explicit")]
    TwoStepAExplicit,
    /// Forecast + analysis solve `(I + k chi I_H) v = rhs`.
    #[serde(rename = "2a-implicit")]
    TwoStepAImplicit,
    /// Forecast + analysis with the extra `-nu Lap (v - vtilde)` term.
    #[serde(rename = "2b")]
    TwoStepB,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::None,
        SchemeKind::Standard,
        SchemeKind::TwoStepAExplicit,
        SchemeKind::TwoStepAImplicit,
        SchemeKind::TwoStepB,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SchemeKind::None => "none",
            SchemeKind::Standard => "standard",
            SchemeKind::TwoStepAExplicit => "2a-explicit",
            SchemeKind::TwoStepAImplicit => "2a-implicit",
            SchemeKind::TwoStepB => "2b",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == s)
    }

    pub fn is_two_step(&self) -> bool {
        matches!(
            self,
            SchemeKind::TwoStepAExplicit | SchemeKind::TwoStepAImplicit | SchemeKind::TwoStepB
        )
    }
}

/// Time step, viscosity, gain and solver controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig<T> {
    pub k: T,
    pub nu: T,
    pub chi: T,
    pub scheme: SchemeKind,
    /// Relative residual target of the momentum (GMRES) solves.
    pub solver_tol: T,
    pub solver_maxit: usize,
    /// Relative residual target of the SPD analysis solves.
    pub analysis_tol: T,
}

impl<T: Real> SchemeConfig<T> {
    pub fn new(k: T, nu: T, chi: T, scheme: SchemeKind) -> Result<Self> {
        let cfg = Self {
            k,
            nu,
            chi,
            scheme,
            solver_tol: T::lit(1e-10),
            solver_maxit: 500,
            analysis_tol: T::lit(1e-12),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > T::zero()) || !self.k.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {}", self.k)));
        }
        if !(self.nu > T::zero()) || !self.nu.is_finite() {
            return Err(Error::Config(format!("viscosity must be positive, got {}", self.nu)));
        }
        if !(self.chi >= T::zero()) || !self.chi.is_finite() {
            return Err(Error::Config(format!("gain chi must be >= 0, got {}", self.chi)));
        }
        for (name, tol) in [("solver", self.solver_tol), ("analysis", self.analysis_tol)] {
            if !(tol > T::zero() && tol <= T::lit(1e-4)) {
                return Err(Error::Config(format!("{name} tolerance must lie in (0, 1e-4], got {tol}")));
            }
        }
        if self.solver_maxit == 0 {
            return Err(Error::Config("solver iteration cap must be positive".into()));
        }
        Ok(())
    }

    pub fn gain(&self) -> T {
        self.k * self.chi
    }
}

/// Velocity `v^n` at time `t^n` together with the scheme driving it.
#[derive(Clone, Debug)]
pub struct ForecastState<T: Real> {
    pub time: T,
    pub velocity: SpectralVectorField<T>,
    pub config: SchemeConfig<T>,
}

impl<T: Real> ForecastState<T> {
    pub fn new(time: T, velocity: SpectralVectorField<T>, config: SchemeConfig<T>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            time,
            velocity,
            config,
        })
    }

    /// Checkpoint: field snapshot with the scheme parameters as metadata.
    pub fn to_snapshot(&self) -> Snapshot<T> {
        let mut snap = Snapshot::new(self.time, self.velocity.clone());
        let c = &self.config;
        let meta = &mut snap.metadata;
        meta.insert("k".into(), c.k.to_f64_lossy().to_string());
        meta.insert("nu".into(), c.nu.to_f64_lossy().to_string());
        meta.insert("chi".into(), c.chi.to_f64_lossy().to_string());
        meta.insert("scheme".into(), c.scheme.label().to_string());
        meta.insert("solver_tol".into(), c.solver_tol.to_f64_lossy().to_string());
        meta.insert("solver_maxit".into(), c.solver_maxit.to_string());
        meta.insert("analysis_tol".into(), c.analysis_tol.to_f64_lossy().to_string());
        snap
    }

    pub fn from_snapshot(snap: Snapshot<T>) -> Result<Self> {
        let get = |key: &str| -> Result<f64> {
            snap.metadata
                .get(key)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks `{key}`")))?
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("{key}: {e}")))
        };
        let scheme = snap
            .metadata
            .get("scheme")
            .and_then(|s| SchemeKind::parse(s))
            .ok_or_else(|| Error::Format("checkpoint lacks a valid `scheme`".into()))?;
        let mut config = SchemeConfig::new(T::lit(get("k")?), T::lit(get("nu")?), T::lit(get("chi")?), scheme)?;
        config.solver_tol = T::lit(get("solver_tol")?);
        config.solver_maxit = get("solver_maxit")? as usize;
        config.analysis_tol = T::lit(get("analysis_tol")?);
        Self::new(snap.time, snap.field, config)
    }
}

/// Implicit momentum system `a w + P adv(b, w) + nu(-Lap) w + chi P I_H w`.
pub struct MomentumOperator<'a, T: Real> {
    pub mass: T,
    pub nu: T,
    pub nudging: Option<(T, &'a ObservationOperator<T>)>,
    advector: Advector<T>,
}

impl<'a, T: Real> MomentumOperator<'a, T> {
    pub fn new(
        mass: T,
        nu: T,
        advecting: &SpectralVectorField<T>,
        nudging: Option<(T, &'a ObservationOperator<T>)>,
    ) -> Self {
        Self {
            mass,
            nu,
            nudging,
            advector: Advector::new(advecting),
        }
    }

    pub fn apply(&self, w: &SpectralVectorField<T>) -> Result<SpectralVectorField<T>> {
        let g = Arc::clone(w.grid());
        let mut out = self.advector.apply(w)?;
        if let Some((chi, op)) = self.nudging {
            if chi > T::zero() {
                out.axpy(chi, &op.apply(w)?);
            }
        }
        leray_project_in_place(&mut out);
        let (mass, nu) = (self.mass, self.nu);
        out.axpy(T::one(), &w.map_symbol(|idx| mass + nu * g.k2(idx)));
        Ok(out)
    }

    fn precondition(&self, r: &SpectralVectorField<T>) -> SpectralVectorField<T> {
        let g = Arc::clone(r.grid());
        let (mass, nu) = (self.mass, self.nu);
        let nudge = self.nudging.filter(|(_, op)| op.is_diagonal());
        r.map_symbol(|idx| {
            let mut d = mass + nu * g.k2(idx);
            if let Some((chi, op)) = nudge {
                d = d + chi * op.symbol(idx).unwrap();
            }
            T::one() / d
        })
    }

    pub fn solve(
        &self,
        rhs: &SpectralVectorField<T>,
        guess: Option<SpectralVectorField<T>>,
        tol: T,
        max_iter: usize,
    ) -> Result<(SpectralVectorField<T>, SolveStats<T>)> {
        if !rhs.is_finite() {
            return Err(Error::NonFinite("momentum right-hand side"));
        }
        let (mut w, stats) = gmres(
            |x: &SpectralVectorField<T>| self.apply(x),
            |r: &SpectralVectorField<T>| self.precondition(r),
            rhs,
            guess,
            KrylovOptions::new(tol, max_iter),
        )?;
        log::debug!("momentum solve: {} iterations, residual {:e}", stats.iterations, stats.residual.to_f64().unwrap_or(f64::NAN));
        leray_project_in_place(&mut w);
        if !w.is_finite() {
            return Err(Error::NonFinite("momentum solve"));
        }
        Ok((w, stats))
    }
}

/// Step 1: `(vt - v)/k + P[v . grad vt] - nu Lap vt = P f`.
pub fn step1_forecast<T: Real>(
    state: &ForecastState<T>,
    forcing: &SpectralVectorField<T>,
) -> Result<(SpectralVectorField<T>, SolveStats<T>)> {
    let cfg = &state.config;
    let v = &state.velocity;
    v.check_same_grid(forcing)?;
    let inv_k = T::one() / cfg.k;
    let op = MomentumOperator::new(inv_k, cfg.nu, v, None);
    let mut rhs = leray_project(forcing);
    rhs.axpy(inv_k, v);
    op.solve(&rhs, Some(v.clone()), cfg.solver_tol, cfg.solver_maxit)
}

/// One-step nudging: Step 1 with `+chi I_H v` on the left and
/// `+chi I_H u(t^{n+1})` on the right.
pub fn step_standard_nudging<T: Real>(
    state: &ForecastState<T>,
    forcing: &SpectralVectorField<T>,
    observation: &SpectralVectorField<T>,
    op: &ObservationOperator<T>,
) -> Result<(SpectralVectorField<T>, SolveStats<T>)> {
    let cfg = &state.config;
    let v = &state.velocity;
    v.check_same_grid(forcing)?;
    v.check_same_grid(observation)?;
    let inv_k = T::one() / cfg.k;
    let nudging = if cfg.chi > T::zero() { Some((cfg.chi, op)) } else { None };
    let mop = MomentumOperator::new(inv_k, cfg.nu, v, nudging);
    let mut rhs = forcing.clone();
    if cfg.chi > T::zero() {
        rhs.axpy(cfg.chi, observation);
    }
    leray_project_in_place(&mut rhs);
    rhs.axpy(inv_k, v);
    mop.solve(&rhs, Some(v.clone()), cfg.solver_tol, cfg.solver_maxit)
}

/// Reference solution integrator: BDF2 after one backward Euler start-up
/// step, advecting with the extrapolation `2u^n - u^{n-1}`.
pub struct TruthIntegrator<T: Real, F> {
    u: SpectralVectorField<T>,
    u_prev: Option<SpectralVectorField<T>>,
    time: T,
    step: usize,
    k: T,
    nu: T,
    forcing: F,
    tol: T,
    max_iter: usize,
}

impl<T: Real, F: Fn(T) -> SpectralVectorField<T>> TruthIntegrator<T, F> {
    pub fn new(u0: SpectralVectorField<T>, t0: T, k: T, nu: T, forcing: F) -> Result<Self> {
        if !(k > T::zero()) || !(nu > T::zero()) {
            return Err(Error::Config("truth step and viscosity must be positive".into()));
        }
        Ok(Self {
            u: u0,
            u_prev: None,
            time: t0,
            step: 0,
            k,
            nu,
            forcing,
            tol: T::lit(1e-11),
            max_iter: 500,
        })
    }

    pub fn with_solver(mut self, tol: T, max_iter: usize) -> Self {
        self.tol = tol;
        self.max_iter = max_iter;
        self
    }

    pub fn time(&self) -> T {
        self.time
    }

    /// Time at step `n` computed from the step count, free of drift.
    fn time_at(&self, n: usize) -> T {
        self.time_origin() + self.k * T::from_usize_lossy(n)
    }

    fn time_origin(&self) -> T {
        self.time - self.k * T::from_usize_lossy(self.step)
    }

    pub fn velocity(&self) -> &SpectralVectorField<T> {
        &self.u
    }

    pub fn step(&mut self) -> Result<SolveStats<T>> {
        let t_next = self.time_at(self.step + 1);
        let f = (self.forcing)(t_next);
        let (mass, advecting, mut rhs) = match &self.u_prev {
            None => {
                let mut rhs = self.u.clone();
                rhs.scale(T::one() / self.k);
                (T::one() / self.k, self.u.clone(), rhs)
            }
            Some(prev) => {
                let two_k = T::lit(2.0) * self.k;
                let mut rhs = self.u.scaled(T::lit(4.0) / two_k);
                rhs.axpy(-T::one() / two_k, prev);
                let mut adv = self.u.scaled(T::lit(2.0));
                adv.axpy(-T::one(), prev);
                (T::lit(3.0) / two_k, adv, rhs)
            }
        };
        rhs.axpy(T::one(), &leray_project(&f));
        let op = MomentumOperator::new(mass, self.nu, &advecting, None);
        let (next, stats) = op.solve(&rhs, Some(self.u.clone()), self.tol, self.max_iter)?;
        self.u_prev = Some(std::mem::replace(&mut self.u, next));
        self.step += 1;
        self.time = t_next;
        Ok(stats)
    }

    /// Steps until `time >= target` (within a tenth of a step).
    pub fn advance_to(&mut self, target: T) -> Result<()> {
        while self.time < target - self.k * T::lit(0.1) {
            self.step()?;
        }
        Ok(())
    }
}

/// Sampled truth trajectory.
#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<SpectralVectorField<T>>,
}

/// Integrates the truth with BDF2 on `[0, t_end]`, sampling every
/// `sample_every` truth steps (including `t = 0`).
pub fn truth_integrate<T: Real, F: Fn(T) -> SpectralVectorField<T>>(
    u0: SpectralVectorField<T>,
    forcing: F,
    nu: T,
    k_truth: T,
    t_end: T,
    sample_every: usize,
) -> Result<Trajectory<T>> {
    if sample_every == 0 {
        return Err(Error::Config("sample stride must be positive".into()));
    }
    let steps = (t_end / k_truth).round().to_usize().unwrap_or(0);
    let mut integ = TruthIntegrator::new(u0, T::zero(), k_truth, nu, forcing)?;
    let mut traj = Trajectory {
        times: vec![T::zero()],
        states: vec![integ.velocity().clone()],
    };
    for s in 1..=steps {
        integ.step()?;
        if s % sample_every == 0 {
            traj.times.push(integ.time());
            traj.states.push(integ.velocity().clone());
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{random::random_solenoidal_field, TorusGrid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(k: f64, nu: f64, chi: f64) -> SchemeConfig<f64> {
        SchemeConfig::new(k, nu, chi, SchemeKind::TwoStepAExplicit).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SchemeConfig::new(0.0, 1.0, 1.0, SchemeKind::None).is_err());
        assert!(SchemeConfig::new(0.1, -1.0, 1.0, SchemeKind::None).is_err());
        assert!(SchemeConfig::new(0.1, 1.0, -1.0, SchemeKind::None).is_err());
        let mut c = cfg(0.1, 1.0, 0.0);
        c.solver_tol = 1e-3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_state_zero_forcing_stays_zero() {
        let g = TorusGrid::new(16).unwrap();
        let z = SpectralVectorField::zeros(&g);
        let st = ForecastState::new(0.0, z.clone(), cfg(0.1, 1.0, 1.0)).unwrap();
        let (vt, _) = step1_forecast(&st, &z).unwrap();
        assert_eq!(vt.norm(), 0.0);
    }

    #[test]
    fn forecast_ignores_chi() {
        let g = TorusGrid::new(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_solenoidal_field(&g, &mut rng, 5, 1.0);
        let f = random_solenoidal_field(&g, &mut rng, 3, 1.0);
        let a = step1_forecast(&ForecastState::new(0.0, v.clone(), cfg(0.05, 0.1, 0.0)).unwrap(), &f)
            .unwrap()
            .0;
        let b = step1_forecast(&ForecastState::new(0.0, v, cfg(0.05, 0.1, 1e5)).unwrap(), &f)
            .unwrap()
            .0;
        assert_eq!(a.sub(&b).norm(), 0.0);
    }

    #[test]
    fn forecast_satisfies_its_equation() {
        let g = TorusGrid::new(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_solenoidal_field(&g, &mut rng, 6, 1.0);
        let f = random_solenoidal_field(&g, &mut rng, 4, 1.0);
        let c = cfg(0.05, 0.01, 0.0);
        let st = ForecastState::new(0.0, v.clone(), c).unwrap();
        let (vt, stats) = step1_forecast(&st, &f).unwrap();
        assert!(vt.divergence_defect() < 1e-12);
        let op = MomentumOperator::new(1.0 / c.k, c.nu, &v, None);
        let mut rhs = leray_project(&f);
        rhs.axpy(1.0 / c.k, &v);
        let res = op.apply(&vt).unwrap().sub(&rhs).norm() / rhs.norm();
        assert!(res <= c.solver_tol, "{res} ({stats:?})");
    }

    #[test]
    fn standard_nudging_with_zero_gain_is_forecast() {
        let g = TorusGrid::new(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_solenoidal_field(&g, &mut rng, 5, 1.0);
        let f = random_solenoidal_field(&g, &mut rng, 3, 1.0);
        let obs = random_solenoidal_field(&g, &mut rng, 3, 1.0);
        let op = ObservationOperator::spectral_projection(&g, 3).unwrap();
        let st = ForecastState::new(0.0, v, cfg(0.05, 0.1, 0.0)).unwrap();
        let a = step1_forecast(&st, &f).unwrap().0;
        let b = step_standard_nudging(&st, &f, &obs, &op).unwrap().0;
        assert!(a.sub(&b).norm() <= 1e-14 * a.norm());
    }

    #[test]
    fn checkpoint_round_trip() {
        let g = TorusGrid::new(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let st = ForecastState::new(0.7, random_solenoidal_field(&g, &mut rng, 5, 1.0), cfg(0.05, 0.1, 3.0)).unwrap();
        let mut bytes = Vec::new();
        st.to_snapshot().write_binary(&mut bytes).unwrap();
        let back = ForecastState::from_snapshot(Snapshot::read_binary(&bytes[..]).unwrap()).unwrap();
        assert_eq!(back.config, st.config);
        assert_eq!(back.time, st.time);
        assert_eq!(back.velocity.sub(&st.velocity).norm(), 0.0);
    }

    #[test]
    fn zero_truth_stays_zero() {
        let g = TorusGrid::new(16).unwrap();
        let z = SpectralVectorField::zeros(&g);
        let gz = g.clone();
        let traj = truth_integrate(z, move |_| SpectralVectorField::zeros(&gz), 0.1, 0.01, 0.1, 2).unwrap();
        assert_eq!(traj.states.len(), 6);
        assert!(traj.states.iter().all(|s| s.norm() == 0.0));
    }
}
