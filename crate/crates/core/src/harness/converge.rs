//! Temporal convergence against the manufactured solution.

use crate::error::Result;
use crate::observers::ObservationOperator;
use crate::spectral::TorusGrid;
use crate::timestepper::{ForecastState, SchemeConfig, SchemeKind};

use super::config::RunConfig;
use super::{advance, manufactured_forcing, manufactured_velocity};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub k: f64,
    pub error: f64,
    /// `log2(err_prev / err)` against the previous (twice larger) step.
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub scheme: SchemeKind,
    pub chi: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Step sizes whose run failed, with the reason.
    pub failures: Vec<(f64, String)>,
}

pub const CONVERGENCE_HEADER: &str = "scheme,chi,k,error,rate";

impl ConvergenceTable {
    pub fn finest_rate(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.rate)
    }

    /// `err_i / err_{i+1}` for the finest pair.
    pub fn finest_ratio(&self) -> Option<f64> {
        let n = self.rows.len();
        (n >= 2).then(|| self.rows[n - 2].error / self.rows[n - 1].error)
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{:e},{}",
                    self.scheme.label(),
                    self.chi,
                    r.k,
                    r.error,
                    r.rate.map_or_else(|| "nan".to_string(), |x| format!("{x:.4}"))
                )
            })
            .collect()
    }
}

/// L2 error at `t_end` of one manufactured-solution run with step `k`.
pub fn manufactured_error(cfg: &RunConfig, scheme: SchemeKind, chi: f64, k: f64) -> Result<f64> {
    let grid = TorusGrid::new(cfg.n)?;
    let op = ObservationOperator::from_spec(&grid, cfg.observer)?;
    let mut scheme_cfg = SchemeConfig::new(k, cfg.nu, chi, scheme)?;
    scheme_cfg.solver_tol = cfg.solver_tol;
    scheme_cfg.solver_maxit = cfg.solver_maxit;
    scheme_cfg.analysis_tol = cfg.analysis_tol;
    let steps = (cfg.t_end / k).round() as usize;
    let mut state = ForecastState::new(0.0, manufactured_velocity(&grid, 0.0), scheme_cfg)?;
    for n in 0..steps {
        let t_next = (n + 1) as f64 * k;
        let f = manufactured_forcing(&grid, cfg.nu, t_next);
        let obs = op.apply(&manufactured_velocity(&grid, t_next))?;
        let out = advance(&state, &f, &obs, &op)?;
        state.velocity = out.v_next;
        state.time = t_next;
    }
    Ok(manufactured_velocity(&grid, state.time).sub(&state.velocity).norm())
}

fn table(cfg: &RunConfig, scheme: SchemeKind, chi: f64) -> ConvergenceTable {
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    let mut failures = Vec::new();
    for &s in &cfg.converge.steps_per_unit {
        let k = 1.0 / s as f64;
        match manufactured_error(cfg, scheme, chi, k) {
            Ok(error) => {
                // rates only across exact halvings
                let rate = rows
                    .last()
                    .filter(|p| (p.k / k - 2.0).abs() < 1e-12)
                    .map(|p| (p.error / error).log2());
                rows.push(ConvergenceRow { k, error, rate });
            }
            Err(e) => {
                log::warn!("{} k={k}: {e}", scheme.label());
                failures.push((k, e.to_string()));
            }
        }
    }
    ConvergenceTable {
        scheme,
        chi,
        rows,
        failures,
    }
}

/// One table per configured scheme at the configured `chi`, plus the
/// `chi = 0` baseline when requested.
pub fn run_converge(cfg: &RunConfig) -> Result<Vec<ConvergenceTable>> {
    cfg.validate()?;
    let mut out: Vec<ConvergenceTable> = cfg
        .converge
        .schemes
        .iter()
        .map(|&s| table(cfg, s, cfg.chi))
        .collect();
    if cfg.converge.baseline {
        out.push(table(cfg, SchemeKind::None, 0.0));
    }
    Ok(out)
}
