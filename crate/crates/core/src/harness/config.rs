//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::condlab::CoarseSpace;
use crate::error::{Error, Result};
use crate::observers::ObserverSpec;
use crate::predictability::NormKind;
use crate::timestepper::SchemeKind;

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "NUDGE_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Exact solution `u = e^t (cos y, sin x)`.
    Manufactured,
    /// Synthetic truth from the BDF2 integrator.
    #[default]
    Twin,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    /// `u0 = 0`, the flow spins up from the forcing.
    Rest,
    /// Random solenoidal field with energy near `initial_peak`.
    #[default]
    Random,
}

/// One assimilation run of a twin experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub scheme: SchemeKind,
    pub chi: f64,
}

impl RunSpec {
    pub fn label(&self) -> String {
        format!("{}_chi{}", self.scheme.label(), self.chi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinOptions {
    /// Root-mean-square of the static forcing pattern.
    pub forcing_amplitude: f64,
    /// Forcing acts on wavevectors with `1 <= |k| <= forcing_radius`.
    pub forcing_radius: f64,
    pub initial: InitialCondition,
    /// Root-mean-square velocity of a random initial field.
    pub initial_rms: f64,
    /// Wavenumber where a random initial field carries most energy.
    pub initial_peak: f64,
    /// `v0 = u0 + perturbation * k * w` for a fixed smooth solenoidal `w`.
    pub perturbation: f64,
    /// Window for the time-averaged relative error.
    pub average_window: (f64, f64),
    /// Runs to perform. Empty means the scheme comparison at the top-level
    /// `chi`: no assimilation, standard nudging, 2A (the top-level scheme if
    /// it is a 2A variant) and 2B.
    pub runs: Vec<RunSpec>,
}

impl Default for TwinOptions {
    fn default() -> Self {
        Self {
            forcing_amplitude: 0.1,
            forcing_radius: 2.0,
            initial: InitialCondition::Random,
            initial_rms: 1.0,
            initial_peak: 5.0,
            perturbation: 1.0,
            average_window: (15.0, 25.0),
            runs: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonOptions {
    /// Thresholds; empty means `0.1 * time-averaged ||u||`.
    pub epsilons: Vec<f64>,
    /// Summary window; `None` means `(T/2, T)`.
    pub window: Option<(f64, f64)>,
    pub norm: NormKind,
}

impl Default for HorizonOptions {
    fn default() -> Self {
        Self {
            epsilons: Vec::new(),
            window: None,
            norm: NormKind::L2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeOptions {
    /// Step counts per unit time; `k = 1 / steps`.
    pub steps_per_unit: Vec<u32>,
    pub schemes: Vec<SchemeKind>,
    /// Also run the `chi = 0` baseline.
    pub baseline: bool,
}

impl Default for ConvergeOptions {
    fn default() -> Self {
        Self {
            steps_per_unit: vec![4, 8, 16, 32, 64],
            schemes: vec![
                SchemeKind::TwoStepAExplicit,
                SchemeKind::TwoStepAImplicit,
                SchemeKind::TwoStepB,
                SchemeKind::Standard,
            ],
            baseline: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CondlabOptions {
    pub fine_n: usize,
    pub coarse_m: usize,
    pub spaces: Vec<CoarseSpace>,
    pub gains: Vec<f64>,
}

impl Default for CondlabOptions {
    fn default() -> Self {
        Self {
            fine_n: 256,
            coarse_m: 16,
            spaces: vec![CoarseSpace::NestedLinear, CoarseSpace::PiecewiseConstant],
            gains: vec![0.0, 1.0, 10.0, 100.0, 1000.0, 10000.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub n: usize,
    pub nu: f64,
    pub k: f64,
    pub t_end: f64,
    pub chi: f64,
    pub scheme: SchemeKind,
    pub observer: ObserverSpec,
    /// Truth step; defaults to `k / 4`.
    pub k_truth: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    pub solver_tol: f64,
    pub solver_maxit: usize,
    pub analysis_tol: f64,
    pub twin: TwinOptions,
    pub horizon: HorizonOptions,
    pub converge: ConvergeOptions,
    pub condlab: CondlabOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Twin,
            n: 128,
            nu: 1e-3,
            k: 0.01,
            t_end: 25.0,
            chi: 1e4,
            scheme: SchemeKind::TwoStepAExplicit,
            observer: ObserverSpec::SpectralProjection { cutoff: 16 },
            k_truth: None,
            output_dir: None,
            seed: 20_240_601,
            solver_tol: 1e-10,
            solver_maxit: 500,
            analysis_tol: 1e-12,
            twin: TwinOptions::default(),
            horizon: HorizonOptions::default(),
            converge: ConvergeOptions::default(),
            condlab: CondlabOptions::default(),
        }
    }
}

impl RunConfig {
    /// Manufactured-solution convergence setup.
    pub fn manufactured() -> Self {
        Self {
            mode: Mode::Manufactured,
            n: 64,
            nu: 1.0,
            k: 0.25,
            t_end: 2.0,
            chi: 1e3,
            observer: ObserverSpec::SpectralProjection { cutoff: 8 },
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn k_truth(&self) -> f64 {
        self.k_truth.unwrap_or(self.k / 4.0)
    }

    /// Truth sub-steps per assimilation step.
    pub fn truth_substeps(&self) -> usize {
        (self.k / self.k_truth()).round() as usize
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.k).round() as usize
    }

    /// Output directory: environment override, then config, then `out`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn runs(&self) -> Vec<RunSpec> {
        if !self.twin.runs.is_empty() {
            return self.twin.runs.clone();
        }
        let two_a = match self.scheme {
            SchemeKind::TwoStepAExplicit | SchemeKind::TwoStepAImplicit => self.scheme,
            _ if self.observer.is_idempotent() => SchemeKind::TwoStepAExplicit,
            _ => SchemeKind::TwoStepAImplicit,
        };
        let run = |scheme, chi| RunSpec { scheme, chi };
        vec![
            run(SchemeKind::None, 0.0),
            run(SchemeKind::Standard, self.chi),
            run(two_a, self.chi),
            run(SchemeKind::TwoStepB, self.chi),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("nu", self.nu), ("k", self.k), ("t_end", self.t_end)];
        for (name, x) in positive {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {x}")));
            }
        }
        if self.n < 8 || !self.n.is_power_of_two() {
            return Err(Error::Config(format!("grid n must be a power of two >= 8, got {}", self.n)));
        }
        let steps = self.t_end / self.k;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::Config(format!("t_end = {} is not a multiple of k = {}", self.t_end, self.k)));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol <= 1e-4) || !(self.analysis_tol > 0.0 && self.analysis_tol <= 1e-4) {
            return Err(Error::Config("solver tolerances must lie in (0, 1e-4]".into()));
        }
        let kt = self.k_truth();
        if !(kt > 0.0) || kt > self.k / 4.0 * (1.0 + 1e-12) {
            return Err(Error::Config(format!("k_truth = {kt} must satisfy 0 < k_truth <= k/4 = {}", self.k / 4.0)));
        }
        let ratio = self.k / kt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!("k = {} is not a multiple of k_truth = {kt}", self.k)));
        }
        match self.observer {
            ObserverSpec::SpectralProjection { cutoff } if cutoff < 1 || cutoff as usize >= self.n / 2 => {
                return Err(Error::Config(format!("spectral cutoff {cutoff} must lie in 1..{}", self.n / 2)))
            }
            ObserverSpec::CellAverage { cells } if cells == 0 || self.n % cells != 0 => {
                return Err(Error::Config(format!("cell count {cells} must divide n = {}", self.n)))
            }
            ObserverSpec::DifferentialFilter { width } if !(width > 0.0) => {
                return Err(Error::Config(format!("filter width must be positive, got {width}")))
            }
            _ => {}
        }
        let mut schemes: Vec<(SchemeKind, f64)> = self.runs().iter().map(|r| (r.scheme, r.chi)).collect();
        if self.mode == Mode::Manufactured {
            schemes.extend(self.converge.schemes.iter().map(|&s| (s, self.chi)));
        }
        for (scheme, chi) in schemes {
            if !(chi >= 0.0) || !chi.is_finite() {
                return Err(Error::Config(format!("chi must be finite and >= 0, got {chi}")));
            }
            if scheme == SchemeKind::TwoStepAExplicit && !self.observer.is_idempotent() {
                return Err(Error::Config(format!(
                    "the explicit analysis update needs an idempotent observer, but {} is not; \
                     use scheme = \"2a-implicit\"",
                    self.observer
                )));
            }
        }
        let (a, b) = self.twin.average_window;
        if self.mode == Mode::Twin && !(a < b && b <= self.t_end + 1e-12 && a >= 0.0) {
            return Err(Error::Config(format!("average window ({a}, {b}) must lie inside [0, {}]", self.t_end)));
        }
        if self.horizon.epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config("horizon thresholds must be positive".into()));
        }
        if self.converge.steps_per_unit.is_empty() {
            return Err(Error::Config("convergence study needs at least one step size".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn explicit_with_filter_is_rejected() {
        let text = r#"
            scheme = "2a-explicit"
            [observer]
            kind = "differential-filter"
            width = 0.2
        "#;
        let err = RunConfig::from_toml_str(text).unwrap_err().to_string();
        assert!(err.contains("idempotent"), "{err}");
    }

    #[test]
    fn truth_step_must_be_fine_enough() {
        let text = "k = 0.01\nk_truth = 0.005\n";
        assert!(RunConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn default_runs_compare_all_schemes() {
        let mut cfg = RunConfig::default();
        let kinds: Vec<SchemeKind> = cfg.runs().iter().map(|r| r.scheme).collect();
        assert_eq!(
            kinds,
            [SchemeKind::None, SchemeKind::Standard, SchemeKind::TwoStepAExplicit, SchemeKind::TwoStepB]
        );
        cfg.scheme = SchemeKind::TwoStepB;
        cfg.observer = ObserverSpec::DifferentialFilter { width: 0.1 };
        assert_eq!(cfg.runs()[2].scheme, SchemeKind::TwoStepAImplicit);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("grid = 64\n").is_err());
    }
}
