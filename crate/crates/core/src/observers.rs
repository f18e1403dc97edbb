//! Observation operators `I_H`: the coarse-scale view of a field that the
//! assimilation step nudges towards.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::{
    h1_seminorm, random::random_vector_field, ScalarField, SpectralVectorField, TorusGrid,
};

/// Serializable operator description, as it appears in run configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObserverSpec {
    /// Keep modes with `max(|m1|,|m2|) <= cutoff`.
    SpectralProjection { cutoff: i64 },
    /// Average over `cells x cells` coarse squares.
    CellAverage { cells: usize },
    /// Solve `-H^2 Lap wbar + wbar = w`.
    DifferentialFilter { width: f64 },
}

impl ObserverSpec {
    pub fn is_idempotent(&self) -> bool {
        !matches!(self, ObserverSpec::DifferentialFilter { .. })
    }
}

impl fmt::Display for ObserverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObserverSpec::SpectralProjection { cutoff } => write!(f, "spectral-projection(K={cutoff})"),
            ObserverSpec::CellAverage { cells } => write!(f, "cell-average(m={cells})"),
            ObserverSpec::DifferentialFilter { width } => write!(f, "differential-filter(H={width})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObserverKind<T> {
    SpectralProjection { cutoff: i64 },
    CellAverage { cells: usize },
    DifferentialFilter { width: T },
}

/// An observation operator bound to a grid.
#[derive(Clone, Debug)]
pub struct ObservationOperator<T: Real> {
    grid: Arc<TorusGrid<T>>,
    kind: ObserverKind<T>,
    h_scale: T,
}

impl<T: Real> ObservationOperator<T> {
    /// `H = length / (2 K)`, i.e. `pi / K` on the standard box.
    pub fn spectral_projection(grid: &Arc<TorusGrid<T>>, cutoff: i64) -> Result<Self> {
        if cutoff < 1 {
            return Err(Error::Config(format!("spectral cutoff must be >= 1, got {cutoff}")));
        }
        let h = grid.length() / T::from_i64(2 * cutoff).unwrap();
        Ok(Self {
            grid: Arc::clone(grid),
            kind: ObserverKind::SpectralProjection { cutoff },
            h_scale: h,
        })
    }

    /// `H = length / cells`; `cells` must divide the grid size.
    pub fn cell_average(grid: &Arc<TorusGrid<T>>, cells: usize) -> Result<Self> {
        if cells == 0 || grid.n() % cells != 0 {
            return Err(Error::Incompatible(format!(
                "{cells} coarse cells do not divide {} grid points",
                grid.n()
            )));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            kind: ObserverKind::CellAverage { cells },
            h_scale: grid.length() / T::from_usize_lossy(cells),
        })
    }

    pub fn differential_filter(grid: &Arc<TorusGrid<T>>, width: T) -> Result<Self> {
        if !(width > T::zero()) || !width.is_finite() {
            return Err(Error::Config(format!("filter width must be positive, got {width}")));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            kind: ObserverKind::DifferentialFilter { width },
            h_scale: width,
        })
    }

    pub fn from_spec(grid: &Arc<TorusGrid<T>>, spec: ObserverSpec) -> Result<Self> {
        match spec {
            ObserverSpec::SpectralProjection { cutoff } => Self::spectral_projection(grid, cutoff),
            ObserverSpec::CellAverage { cells } => Self::cell_average(grid, cells),
            ObserverSpec::DifferentialFilter { width } => Self::differential_filter(grid, T::lit(width)),
        }
    }

    pub fn kind(&self) -> ObserverKind<T> {
        self.kind
    }

    pub fn grid(&self) -> &Arc<TorusGrid<T>> {
        &self.grid
    }

    /// Observation scale `H`.
    pub fn h_scale(&self) -> T {
        self.h_scale
    }

    pub fn is_idempotent(&self) -> bool {
        !matches!(self.kind, ObserverKind::DifferentialFilter { .. })
    }

    /// Whether the operator is an L2-orthogonal projection.
    pub fn is_l2_projection(&self) -> bool {
        self.is_idempotent()
    }

    /// Whether `grad I_H = I_H grad` holds exactly.
    pub fn commutes_with_gradient(&self) -> bool {
        !matches!(self.kind, ObserverKind::CellAverage { .. })
    }

    pub fn name(&self) -> String {
        match self.kind {
            ObserverKind::SpectralProjection { cutoff } => format!("spectral-projection(K={cutoff})"),
            ObserverKind::CellAverage { cells } => format!("cell-average(m={cells})"),
            ObserverKind::DifferentialFilter { width } => format!("differential-filter(H={width})"),
        }
    }

    /// Fourier multiplier of the operator at flat index `idx`, when it is diagonal.
    pub fn symbol(&self, idx: usize) -> Option<T> {
        match self.kind {
            ObserverKind::SpectralProjection { cutoff } => Some(if self.grid.mode_inf(idx) > cutoff {
                T::zero()
            } else {
                T::one()
            }),
            ObserverKind::DifferentialFilter { width } => {
                Some(T::one() / (T::one() + width * width * self.grid.k2(idx)))
            }
            ObserverKind::CellAverage { .. } => None,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.symbol(0).is_some()
    }

    pub fn apply_scalar(&self, s: &ScalarField<T>) -> Result<ScalarField<T>> {
        if !self.grid.same_as(s.grid()) {
            return Err(Error::GridMismatch {
                left: self.grid.n(),
                right: s.grid().n(),
            });
        }
        match self.kind {
            ObserverKind::CellAverage { cells } => Ok(self.cell_mean(s, cells)),
            _ => Ok(s.map_symbol(|idx| self.symbol(idx).unwrap())),
        }
    }

    pub fn apply(&self, w: &SpectralVectorField<T>) -> Result<SpectralVectorField<T>> {
        SpectralVectorField::from_components(
            self.apply_scalar(w.component(0))?,
            self.apply_scalar(w.component(1))?,
        )
    }

    fn cell_mean(&self, s: &ScalarField<T>, cells: usize) -> ScalarField<T> {
        let n = self.grid.n();
        let b = n / cells;
        let vals = s.to_grid_values();
        let mut out = vec![T::zero(); vals.len()];
        let inv = T::one() / T::from_usize_lossy(b * b);
        for cj in 0..cells {
            for ci in 0..cells {
                let mut sum = T::zero();
                for j in cj * b..(cj + 1) * b {
                    for i in ci * b..(ci + 1) * b {
                        sum = sum + vals[j * n + i];
                    }
                }
                let mean = sum * inv;
                for j in cj * b..(cj + 1) * b {
                    for i in ci * b..(ci + 1) * b {
                        out[j * n + i] = mean;
                    }
                }
            }
        }
        ScalarField::from_grid_values(&self.grid, &out).expect("grid sized")
    }

    /// `||I_H(I_H w) - I_H w|| / ||w||`
    pub fn check_idempotency(&self, w: &SpectralVectorField<T>) -> Result<T> {
        let wn = w.norm();
        if wn == T::zero() {
            return Ok(T::zero());
        }
        let once = self.apply(w)?;
        let twice = self.apply(&once)?;
        Ok(twice.sub(&once).norm() / wn)
    }

    /// Checks the four filter inequalities on `w`.
    pub fn check_filter_properties(&self, w: &SpectralVectorField<T>) -> Result<FilterReport<T>> {
        if !matches!(self.kind, ObserverKind::DifferentialFilter { .. }) {
            return Err(Error::Config(format!(
                "filter properties apply to the differential filter, not {}",
                self.name()
            )));
        }
        let wn = w.norm();
        if wn == T::zero() {
            return Err(Error::ZeroField("filter property check"));
        }
        let wbar = self.apply(w)?;
        let grad_w = h1_seminorm(w);
        let slack = T::lit(1e-12);
        let norm_ratio = wbar.norm() / wn;
        let grad_ratio = if grad_w > T::zero() {
            h1_seminorm(&wbar) / grad_w
        } else {
            T::zero()
        };
        let diff = w.sub(&wbar).norm();
        let approx_ratio = if grad_w > T::zero() {
            diff / (self.h_scale * grad_w)
        } else {
            T::zero()
        };
        let inner = w.dot(&wbar);
        let holds = [
            norm_ratio <= T::one() + slack,
            grad_ratio <= T::one() + slack,
            approx_ratio <= T::lit(0.5) + slack,
            inner > T::zero(),
        ];
        Ok(FilterReport {
            norm_ratio,
            grad_ratio,
            approx_ratio,
            inner,
            holds,
        })
    }

    /// Empirical `max ||(I - I_H) w|| / (H ||grad w||)` over random smooth fields.
    pub fn estimate_c1<R: Rng + ?Sized>(&self, ensemble: usize, rng: &mut R) -> Result<ApproxConstants<T>> {
        if ensemble < 10 {
            return Err(Error::Config(format!("C1 ensemble needs >= 10 fields, got {ensemble}")));
        }
        let maxm = (self.grid.n() / 2 - 1) as i64;
        let mut worst = T::zero();
        for s in 0..ensemble {
            let decay = 0.5 + 2.5 * (s as f64) / (ensemble as f64);
            let w = random_vector_field(&self.grid, rng, maxm, decay);
            worst = worst.max(approximation_ratio(self, &w)?);
        }
        Ok(ApproxConstants {
            c1_estimate: worst,
            analytic_bound: self.analytic_c1(),
        })
    }

    /// Known upper bound for `C1`: `1/pi` for the projections, `1/2` for the filter.
    pub fn analytic_c1(&self) -> T {
        match self.kind {
            ObserverKind::SpectralProjection { .. } | ObserverKind::CellAverage { .. } => T::FRAC_1_PI(),
            ObserverKind::DifferentialFilter { .. } => T::lit(0.5),
        }
    }
}

/// `||(I - I_H) w|| / (H ||grad w||)` for one field.
pub fn approximation_ratio<T: Real>(op: &ObservationOperator<T>, w: &SpectralVectorField<T>) -> Result<T> {
    let g = h1_seminorm(w);
    if g == T::zero() {
        return Err(Error::ZeroField("approximation ratio"));
    }
    Ok(w.sub(&op.apply(w)?).norm() / (op.h_scale() * g))
}

#[derive(Clone, Copy, Debug)]
pub struct FilterReport<T> {
    /// `||wbar|| / ||w||`
    pub norm_ratio: T,
    /// `||grad wbar|| / ||grad w||`
    pub grad_ratio: T,
    /// `||w - wbar|| / (H ||grad w||)`
    pub approx_ratio: T,
    /// `(w, wbar)`
    pub inner: T,
    pub holds: [bool; 4],
}

impl<T> FilterReport<T> {
    pub fn all_hold(&self) -> bool {
        self.holds.iter().all(|h| *h)
    }
}

/// Measured approximation constant of an observation operator.
#[derive(Clone, Copy, Debug)]
pub struct ApproxConstants<T> {
    pub c1_estimate: T,
    pub analytic_bound: T,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{gradient, random::random_vector_field};
    use num_complex::Complex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Arc<TorusGrid<f64>> {
        TorusGrid::new(n).unwrap()
    }

    fn single_mode(g: &Arc<TorusGrid<f64>>, m1: i64, m2: i64) -> SpectralVectorField<f64> {
        let mut s = ScalarField::zeros(g);
        s.set_coeff(m1, m2, Complex::new(0.5, 0.0));
        s.set_coeff(-m1, -m2, Complex::new(0.5, 0.0));
        SpectralVectorField::from_components(s, ScalarField::zeros(g)).unwrap()
    }

    #[test]
    fn filter_scales_single_mode() {
        let g = grid(16);
        let h = 0.3;
        let op = ObservationOperator::differential_filter(&g, h).unwrap();
        let w = single_mode(&g, 3, 1);
        let out = op.apply(&w).unwrap();
        let expect = 0.5 / (1.0 + h * h * 10.0);
        assert!((out.component(0).coeff(3, 1).re - expect).abs() < 1e-15);
    }

    #[test]
    fn wide_spectral_projection_is_identity() {
        let g = grid(16);
        let op = ObservationOperator::spectral_projection(&g, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_vector_field(&g, &mut rng, 8, 0.0);
        assert_eq!(op.apply(&w).unwrap().sub(&w).norm(), 0.0);
    }

    #[test]
    fn cell_average_keeps_cellwise_constants() {
        let g = grid(16);
        let op = ObservationOperator::cell_average(&g, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = op.apply(&random_vector_field(&g, &mut rng, 7, 0.0)).unwrap();
        let again = op.apply(&w).unwrap();
        assert!(again.sub(&w).norm() <= 1e-13 * w.norm());
    }

    #[test]
    fn cell_average_requires_divisor() {
        assert!(ObservationOperator::cell_average(&grid(16), 3).is_err());
        assert!(ObservationOperator::cell_average(&grid(16), 0).is_err());
    }

    #[test]
    fn idempotency_deviations() {
        let g = grid(32);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_vector_field(&g, &mut rng, 15, 0.5);
        let sp = ObservationOperator::spectral_projection(&g, 5).unwrap();
        assert!(sp.check_idempotency(&w).unwrap() <= 1e-13);
        let ca = ObservationOperator::cell_average(&g, 8).unwrap();
        assert!(ca.check_idempotency(&w).unwrap() <= 1e-12);

        let h = 0.4;
        let filt = ObservationOperator::differential_filter(&g, h).unwrap();
        let one = single_mode(&g, 2, 0);
        let a = 1.0 / (1.0 + h * h * 4.0);
        let expect = (a - a * a) * one.norm() / one.norm();
        let dev = filt.check_idempotency(&one).unwrap();
        assert!((dev - expect).abs() < 1e-14, "{dev} vs {expect}");
        assert!(filt.check_idempotency(&w).unwrap() > 0.0);
    }

    #[test]
    fn filter_single_mode_approximation_ratio() {
        let g = grid(32);
        for (h, m) in [(0.25, 4i64), (0.1, 3), (1.0, 1), (0.5, 6)] {
            let op = ObservationOperator::differential_filter(&g, h).unwrap();
            let r = approximation_ratio(&op, &single_mode(&g, m, 0)).unwrap();
            let hk = h * m as f64;
            assert!((r - hk / (1.0 + hk * hk)).abs() < 1e-14);
            assert!(r <= 0.5 + 1e-15);
        }
    }

    #[test]
    fn filter_properties_on_high_mode() {
        let g = grid(32);
        let h = 0.5;
        let op = ObservationOperator::differential_filter(&g, h).unwrap();
        let w = single_mode(&g, 12, 0);
        let rep = op.check_filter_properties(&w).unwrap();
        assert!(rep.all_hold());
        assert!((rep.norm_ratio - 1.0 / (1.0 + h * h * 144.0)).abs() < 1e-14);
    }

    #[test]
    fn filter_properties_reject_zero_and_wrong_kind() {
        let g = grid(16);
        let op = ObservationOperator::differential_filter(&g, 0.3).unwrap();
        assert!(op.check_filter_properties(&SpectralVectorField::zeros(&g)).is_err());
        let sp = ObservationOperator::spectral_projection(&g, 3).unwrap();
        assert!(sp.check_filter_properties(&single_mode(&g, 1, 0)).is_err());
    }

    #[test]
    fn spectral_c1_single_mode() {
        let g = grid(32);
        let kc = 5;
        let op = ObservationOperator::spectral_projection(&g, kc).unwrap();
        let r = approximation_ratio(&op, &single_mode(&g, kc + 1, 0)).unwrap();
        let h = op.h_scale();
        assert!((r - 1.0 / (h * (kc + 1) as f64)).abs() < 1e-14);
        assert!(r < std::f64::consts::FRAC_1_PI);
    }

    #[test]
    fn c1_estimates_below_analytic_bounds() {
        let g = grid(32);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for op in [
            ObservationOperator::spectral_projection(&g, 4).unwrap(),
            ObservationOperator::cell_average(&g, 8).unwrap(),
            ObservationOperator::differential_filter(&g, 0.3).unwrap(),
        ] {
            let c = op.estimate_c1(20, &mut rng).unwrap();
            assert!(c.c1_estimate > 0.0);
            assert!(c.c1_estimate <= c.analytic_bound, "{}: {:?}", op.name(), c);
        }
        assert!(ObservationOperator::spectral_projection(&g, 4)
            .unwrap()
            .estimate_c1(5, &mut rng)
            .is_err());
    }

    #[test]
    fn cell_average_c1_on_linear_profile() {
        // Brute force over one coarse cell: a sawtooth that is linear inside
        // each cell has ||w - avg|| / (H ||w'||) = 1/sqrt(12) < 1/pi, the
        // per-cell Poincare constant.
        let n = 256;
        let m = 8;
        let h = 1.0 / m as f64;
        let pts = n / m;
        let dx = h / pts as f64;
        let vals: Vec<f64> = (0..pts).map(|i| (i as f64 + 0.5) * dx - h / 2.0).collect();
        let mean: f64 = vals.iter().sum::<f64>() / pts as f64;
        let l2 = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * dx).sqrt();
        let grad = (h as f64).sqrt();
        let ratio = l2 / (h * grad);
        assert!((ratio - 1.0 / 12f64.sqrt()).abs() < 1e-3);
        assert!(ratio <= std::f64::consts::FRAC_1_PI);
    }

    #[test]
    fn spectral_projection_commutes_with_gradient() {
        let g = grid(32);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let op = ObservationOperator::spectral_projection(&g, 6).unwrap();
        let s = random_vector_field(&g, &mut rng, 15, 0.0).into_components()[0].clone();
        let lhs = gradient(&op.apply_scalar(&s).unwrap());
        let rhs = op.apply(&gradient(&s)).unwrap();
        for (a, b) in lhs.component(0).coeffs().iter().zip(rhs.component(0).coeffs()) {
            assert!((a - b).norm() <= 1e-13);
        }
    }
}
