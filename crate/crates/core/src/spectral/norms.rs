use super::field::{ScalarField, SpectralVectorField};
use super::grid::TorusGrid;
use super::ops::inverse_pair;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Norms of a vector field used by the analysis checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormBundle<T> {
    pub l2: T,
    pub h1semi: T,
    pub l4: T,
    pub l6: T,
    pub hminus1: T,
}

impl<T: Real> NormBundle<T> {
    pub fn of(w: &SpectralVectorField<T>) -> Self {
        Self {
            l2: w.norm(),
            h1semi: h1_seminorm(w),
            l4: lp_norm(w, 4),
            l6: lp_norm(w, 6),
            hminus1: hminus1_norm(w),
        }
    }
}

/// `||grad w||`, summing over both components and both derivatives.
pub fn h1_seminorm<T: Real>(w: &SpectralVectorField<T>) -> T {
    weighted_norm_sq(w, |k2| k2).sqrt()
}

/// `||(-Lap)^(-1/2) w||` over the non-constant modes.
pub fn hminus1_norm<T: Real>(w: &SpectralVectorField<T>) -> T {
    weighted_norm_sq(w, |k2| if k2 > T::zero() { T::one() / k2 } else { T::zero() }).sqrt()
}

pub fn scalar_h1_seminorm<T: Real>(s: &ScalarField<T>) -> T {
    let g = s.grid();
    let sum: T = s
        .coeffs()
        .iter()
        .enumerate()
        .map(|(idx, c)| g.k2(idx) * c.norm_sqr())
        .sum();
    (sum * g.area()).sqrt()
}

fn weighted_norm_sq<T: Real>(w: &SpectralVectorField<T>, weight: impl Fn(T) -> T) -> T {
    let g = w.grid();
    let mut sum = T::zero();
    for comp in w.components() {
        for (idx, c) in comp.coeffs().iter().enumerate() {
            sum = sum + weight(g.k2(idx)) * c.norm_sqr();
        }
    }
    sum * g.area()
}

/// `(int |w|^p)^(1/p)` by quadrature on a 2x zero-padded grid.
pub fn lp_norm<T: Real>(w: &SpectralVectorField<T>, p: i32) -> T {
    let g = w.grid();
    let fine = TorusGrid::with_length(2 * g.n(), g.length()).expect("valid refinement");
    let up = w.resample(&fine);
    let mut a = vec![T::zero(); fine.len()];
    let mut b = vec![T::zero(); fine.len()];
    inverse_pair(&fine, up.component(0).coeffs(), up.component(1).coeffs(), &mut a, &mut b);
    let h = fine.spacing();
    let sum: T = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (*x * *x + *y * *y).powi(p / 2))
        .sum();
    (sum * h * h).powf(T::one() / T::from_i32(p).unwrap())
}

/// Result of the 2D Ladyzhenskaya ratio check.
#[derive(Clone, Copy, Debug)]
pub struct LadyzhenskayaReport<T> {
    /// `||w||_L4 / (||w||^(1/2) ||grad w||^(1/2))`
    pub ratio: T,
    /// `2^(1/4)`
    pub bound: T,
    pub exceeds: bool,
}

pub fn check_ladyzhenskaya<T: Real>(w: &SpectralVectorField<T>) -> Result<LadyzhenskayaReport<T>> {
    let l2 = w.norm();
    let grad = h1_seminorm(w);
    if l2 == T::zero() || grad == T::zero() {
        return Err(Error::ZeroField("Ladyzhenskaya ratio"));
    }
    let ratio = lp_norm(w, 4) / (l2 * grad).sqrt();
    let bound = T::lit(2f64.powf(0.25));
    Ok(LadyzhenskayaReport {
        ratio,
        bound,
        exceeds: ratio > bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::random::{random_bump_field, random_vector_field};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parseval_matches_quadrature() {
        let g = TorusGrid::<f64>::new(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_vector_field(&g, &mut rng, 15, 0.5);
        for c in w.components() {
            let rel = (c.norm() - c.grid_norm()).abs() / c.norm();
            assert!(rel < 1e-12, "{rel}");
        }
    }

    #[test]
    fn single_mode_norms() {
        let g = TorusGrid::<f64>::new(16).unwrap();
        // w = (cos 3x, 0): ||w||^2 = 2 pi^2, ||grad w||^2 = 9 * 2 pi^2
        let w = SpectralVectorField::from_fn(&g, |x, _| ((3.0 * x).cos(), 0.0));
        let nb = NormBundle::of(&w);
        let l2 = (2.0 * std::f64::consts::PI.powi(2)).sqrt();
        assert!((nb.l2 - l2).abs() < 1e-12);
        assert!((nb.h1semi - 3.0 * l2).abs() < 1e-12);
        assert!((nb.hminus1 - l2 / 3.0).abs() < 1e-12);
        // int cos^4 = 3/8 * area
        let l4 = (0.375 * (2.0 * std::f64::consts::PI).powi(2)).powf(0.25);
        assert!((nb.l4 - l4).abs() < 1e-12);
    }

    #[test]
    fn ladyzhenskaya_ratio_scale_invariant() {
        let g = TorusGrid::<f64>::new(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = random_bump_field(&g, &mut rng, 1.2);
        let r1 = check_ladyzhenskaya(&w).unwrap();
        let r2 = check_ladyzhenskaya(&w.scaled(-7.5)).unwrap();
        assert!((r1.ratio - r2.ratio).abs() < 1e-12);
        assert!(!r1.exceeds);
    }

    #[test]
    fn ladyzhenskaya_rejects_zero() {
        let g = TorusGrid::<f64>::new(16).unwrap();
        assert!(check_ladyzhenskaya(&SpectralVectorField::zeros(&g)).is_err());
    }
}
