//! Conditioning sweep of the reduced analysis system.

use crate::condlab::{assemble, estimate_condition, explicit_deviation, CoarseSpace, DeviationReport, FemOperatorSet};
use crate::error::Result;

use super::config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CondRow {
    pub n: usize,
    pub m: usize,
    pub space: CoarseSpace,
    pub k_chi: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub cond: f64,
    pub normalized: f64,
    /// `||v_implicit - v_explicit||` for a smooth test pair.
    pub deviation: f64,
}

pub const CONDLAB_HEADER: &str = "n,m,space,k_chi,cond,cond_over_1_plus_kchi,explicit_deviation,lambda_min,lambda_max";

impl CondRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:e},{:e},{:e},{:e},{:e}",
            self.n,
            self.m,
            self.space,
            self.k_chi,
            self.cond,
            self.normalized,
            self.deviation,
            self.lambda_min,
            self.lambda_max
        )
    }
}

/// Smooth truth and forecast nodal values on the interior fine nodes.
pub fn smooth_pair(fine_n: usize) -> (Vec<f64>, Vec<f64>) {
    use std::f64::consts::PI;
    let x: Vec<f64> = (1..fine_n).map(|i| i as f64 / fine_n as f64).collect();
    let u = x.iter().map(|t| (PI * t).sin() + 0.3 * (3.0 * PI * t).sin()).collect();
    let vt = x.iter().map(|t| 0.6 * (PI * t).sin() + 0.2 * (2.0 * PI * t).sin()).collect();
    (u, vt)
}

pub fn condition_row(ops: FemOperatorSet<f64>, k_chi: f64) -> Result<CondRow> {
    let ops = ops.with_gain(k_chi)?;
    let est = estimate_condition(&ops)?;
    let (u, vt) = smooth_pair(ops.mesh.elements());
    let dev = explicit_deviation(&ops, &vt, &u)?;
    Ok(CondRow {
        n: ops.mesh.elements(),
        m: ops.coarse_cells,
        space: ops.space,
        k_chi,
        lambda_min: est.lambda_min.value,
        lambda_max: est.lambda_max.value,
        cond: est.cond,
        normalized: est.normalized,
        deviation: dev.deviation,
    })
}

pub fn run_condlab(cfg: &RunConfig) -> Result<Vec<CondRow>> {
    let c = &cfg.condlab;
    let mut rows = Vec::new();
    for &space in &c.spaces {
        let ops = assemble::<f64>(c.fine_n, c.coarse_m, space)?;
        for &g in &c.gains {
            rows.push(condition_row(ops.clone(), g)?);
        }
    }
    Ok(rows)
}

/// Deviation of the closed-form update from the implicit solve for
/// piecewise constants on the fine mesh itself (`H = h`), over a mesh sweep.
pub fn crouzeix_sweep(fine_ns: &[usize], k_chi: f64) -> Result<Vec<DeviationReport<f64>>> {
    fine_ns
        .iter()
        .map(|&n| {
            let ops = assemble::<f64>(n, n, CoarseSpace::PiecewiseConstant)?.with_gain(k_chi)?;
            let (u, vt) = smooth_pair(n);
            explicit_deviation(&ops, &vt, &u)
        })
        .collect()
}
