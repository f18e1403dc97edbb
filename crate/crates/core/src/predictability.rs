//! Finite-time Lyapunov exponents, doubling times and epsilon-horizons of
//! an error time series.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::{h1_seminorm, SpectralVectorField};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    #[default]
    #[serde(rename = "l2")]
    L2,
    #[serde(rename = "h1-semi")]
    H1Semi,
}

impl NormKind {
    pub fn measure<T: Real>(&self, w: &SpectralVectorField<T>) -> T {
        match self {
            NormKind::L2 => w.norm(),
            NormKind::H1Semi => h1_seminorm(w),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "l2" | "L2" => Some(NormKind::L2),
            "h1" | "h1-semi" | "H1" => Some(NormKind::H1Semi),
            _ => None,
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::L2 => "l2",
            NormKind::H1Semi => "h1-semi",
        })
    }
}

/// Error norms `||u(t^n) - v^n||` at strictly increasing times.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorSeries<T> {
    times: Vec<T>,
    norms: Vec<T>,
    pub norm_kind: NormKind,
}

impl<T: Real> ErrorSeries<T> {
    pub fn new(norm_kind: NormKind) -> Self {
        Self {
            times: Vec::new(),
            norms: Vec::new(),
            norm_kind,
        }
    }

    pub fn from_parts(times: Vec<T>, norms: Vec<T>, norm_kind: NormKind) -> Result<Self> {
        if times.len() != norms.len() {
            return Err(Error::SizeMismatch {
                expected: times.len(),
                got: norms.len(),
            });
        }
        let mut s = Self::new(norm_kind);
        for (t, e) in times.into_iter().zip(norms) {
            s.push(t, e)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, time: T, norm: T) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(time > last) {
                return Err(Error::Config(format!("series times must increase: {time} after {last}")));
            }
        }
        if !(norm >= T::zero()) {
            return Err(Error::NonFinite("error norm"));
        }
        self.times.push(time);
        self.norms.push(norm);
        Ok(())
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn norms(&self) -> &[T] {
        &self.norms
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the sample nearest to `t`, if one lies within half a
    /// sampling interval.
    pub fn index_of(&self, t: T) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t);
        let candidates = [i.checked_sub(1), Some(i)];
        let best = candidates
            .into_iter()
            .flatten()
            .filter(|&j| j < self.len())
            .min_by(|&a, &b| {
                (self.times[a] - t)
                    .abs()
                    .partial_cmp(&(self.times[b] - t).abs())
                    .unwrap()
            })?;
        let spacing = if self.len() > 1 {
            (self.times[self.len() - 1] - self.times[0]) / T::from_usize_lossy(self.len() - 1)
        } else {
            T::zero()
        };
        ((self.times[best] - t).abs() <= T::lit(0.5) * spacing + T::epsilon()).then_some(best)
    }

    pub fn norm_at(&self, t: T) -> Result<T> {
        self.index_of(t)
            .map(|i| self.norms[i])
            .ok_or_else(|| Error::Config(format!("time {t} not in series")))
    }

    /// Time average of the norms over `[t1, t2]` (trapezoidal rule).
    pub fn time_average(&self, t1: T, t2: T) -> Result<T> {
        let (a, b) = (self.require(t1)?, self.require(t2)?);
        if a >= b {
            return Err(Error::Config(format!("empty averaging window [{t1}, {t2}]")));
        }
        let mut acc = T::zero();
        for i in a..b {
            acc = acc + T::lit(0.5) * (self.norms[i] + self.norms[i + 1]) * (self.times[i + 1] - self.times[i]);
        }
        Ok(acc / (self.times[b] - self.times[a]))
    }

    fn require(&self, t: T) -> Result<usize> {
        self.index_of(t)
            .ok_or_else(|| Error::Config(format!("time {t} not in series")))
    }

    /// `lambda(t^n, t^{n+1})` for each consecutive pair with positive norms.
    pub fn step_ftles(&self) -> Vec<(T, T, T)> {
        self.times
            .windows(2)
            .zip(self.norms.windows(2))
            .filter(|(_, e)| e[0] > T::zero() && e[1] > T::zero())
            .map(|(t, e)| (t[0], t[1], (e[1] / e[0]).ln() / (t[1] - t[0])))
            .collect()
    }

    /// Default summary window `(T/2, T)` snapped to samples.
    pub fn default_window(&self) -> Result<(T, T)> {
        let (&t0, &t_end) = self
            .times
            .first()
            .zip(self.times.last())
            .ok_or_else(|| Error::Config("empty error series".into()))?;
        let mid = self.index_of(t0 + T::lit(0.5) * (t_end - t0)).unwrap_or(0);
        Ok((self.times[mid], t_end))
    }
}

/// `ln(e2/e1) / (t2 - t1)`.
pub fn ftle_from_norms<T: Real>(e1: T, e2: T, span: T) -> Result<T> {
    if !(span > T::zero()) {
        return Err(Error::Config(format!("FTLE window must have positive length, got {span}")));
    }
    for e in [e1, e2] {
        if !(e > T::zero()) {
            return Err(Error::ZeroNorm(e.to_f64_lossy()));
        }
    }
    Ok((e2 / e1).ln() / span)
}

pub fn ftle<T: Real>(series: &ErrorSeries<T>, t1: T, t2: T) -> Result<T> {
    if !(t1 < t2) {
        return Err(Error::Config(format!("FTLE needs T1 < T2, got ({t1}, {t2})")));
    }
    let (i, j) = (series.require(t1)?, series.require(t2)?);
    ftle_from_norms(series.norms[i], series.norms[j], series.times[j] - series.times[i])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrowthKind {
    Doubling,
    HalfLife,
}

impl fmt::Display for GrowthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrowthKind::Doubling => "doubling",
            GrowthKind::HalfLife => "error-half-life",
        })
    }
}

/// `ln 2 / |lambda|`, labelled a half-life when the error decays.
/// `lambda = 0` gives an infinite time.
pub fn doubling_time<T: Real>(lambda: T) -> (T, GrowthKind) {
    let kind = if lambda < T::zero() {
        GrowthKind::HalfLife
    } else {
        GrowthKind::Doubling
    };
    if lambda == T::zero() {
        return (T::infinity(), kind);
    }
    (T::LN_2() / lambda.abs(), kind)
}

/// Time for an error of size `e1` growing at rate `lambda` to reach
/// `epsilon`: `ln(epsilon/e1)/lambda`.
///
/// If the threshold is already reached (`epsilon <= e1`) the horizon is 0;
/// if the error does not grow (`lambda <= 0`) it is infinite.
pub fn epsilon_horizon<T: Real>(lambda: T, e1: T, epsilon: T) -> Result<T> {
    if !(epsilon > T::zero()) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(e1 > T::zero()) {
        return Err(Error::ZeroNorm(e1.to_f64_lossy()));
    }
    if epsilon <= e1 {
        return Ok(T::zero());
    }
    if !(lambda > T::zero()) {
        return Ok(T::infinity());
    }
    Ok((epsilon / e1).ln() / lambda)
}

/// `||w|| / ||grad w||`.
pub fn taylor_microscale<T: Real>(w: &SpectralVectorField<T>) -> Result<T> {
    let g = h1_seminorm(w);
    if !(g > T::zero()) {
        return Err(Error::ZeroField("Taylor microscale of a constant field"));
    }
    Ok(w.norm() / g)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MicroscaleCondition {
    pub microscale: f64,
    pub h_over_microscale: f64,
    pub margin: f64,
    pub holds: bool,
}

/// `chi (1 - C1^2 (H/lambda_T)^2) - (2048/19683) nu^-3 ||grad u||^4 > 0`,
/// the gain condition with the error's own length scale substituted.
pub fn microscale_condition(
    microscale: f64,
    chi: f64,
    c1: f64,
    h: f64,
    nu: f64,
    truth_grad_norm: f64,
) -> MicroscaleCondition {
    let r = h / microscale;
    let margin = chi * (1.0 - c1 * c1 * r * r) - 2048.0 / 19683.0 * truth_grad_norm.powi(4) / nu.powi(3);
    MicroscaleCondition {
        microscale,
        h_over_microscale: r,
        margin,
        holds: margin > 0.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HorizonReport<T> {
    pub window: (T, T),
    pub lambda: T,
    pub doubling: T,
    pub growth: GrowthKind,
    pub epsilon: T,
    pub epsilon_horizon: T,
}

pub const HORIZON_HEADER: &str = "run,t1,t2,epsilon,lambda,doubling,growth,epsilon_horizon";

impl<T: Real> HorizonReport<T> {
    pub fn from_norms(window: (T, T), e1: T, e2: T, epsilon: T) -> Result<Self> {
        let lambda = ftle_from_norms(e1, e2, window.1 - window.0)?;
        let (doubling, growth) = doubling_time(lambda);
        Ok(Self {
            window,
            lambda,
            doubling,
            growth,
            epsilon,
            epsilon_horizon: epsilon_horizon(lambda, e1, epsilon)?,
        })
    }

    pub fn compute(series: &ErrorSeries<T>, t1: T, t2: T, epsilon: T) -> Result<Self> {
        let lambda = ftle(series, t1, t2)?;
        let (i, j) = (series.require(t1)?, series.require(t2)?);
        let (doubling, growth) = doubling_time(lambda);
        Ok(Self {
            window: (series.times[i], series.times[j]),
            lambda,
            doubling,
            growth,
            epsilon,
            epsilon_horizon: epsilon_horizon(lambda, series.norms[i], epsilon)?,
        })
    }

    pub fn to_csv(&self, run: &str) -> String {
        format!(
            "{run},{},{},{:e},{:e},{:e},{},{:e}",
            self.window.0.to_f64_lossy(),
            self.window.1.to_f64_lossy(),
            self.epsilon.to_f64_lossy(),
            self.lambda.to_f64_lossy(),
            self.doubling.to_f64_lossy(),
            self.growth,
            self.epsilon_horizon.to_f64_lossy(),
        )
    }
}
