use std::sync::Arc;

use num_complex::Complex;

use super::grid::TorusGrid;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub(crate) fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Real scalar field on the torus, stored as normalized Fourier coefficients
/// `u(x) = sum_k c_k exp(i k.x)`.
#[derive(Clone, Debug)]
pub struct ScalarField<T: Real> {
    grid: Arc<TorusGrid<T>>,
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: &Arc<TorusGrid<T>>) -> Self {
        Self {
            grid: Arc::clone(grid),
            coeffs: vec![czero(); grid.len()],
        }
    }

    /// Forward transform of real grid values (length `n^2`, row-major in y).
    pub fn from_grid_values(grid: &Arc<TorusGrid<T>>, values: &[T]) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        let mut coeffs: Vec<Complex<T>> =
            values.iter().map(|&v| Complex::new(v, T::zero())).collect();
        grid.forward(&mut coeffs);
        let mut field = Self {
            grid: Arc::clone(grid),
            coeffs,
        };
        field.symmetrize();
        Ok(field)
    }

    /// Samples `f(x, y)` on the grid.
    pub fn from_fn(grid: &Arc<TorusGrid<T>>, f: impl Fn(T, T) -> T) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..n {
            let y = grid.coord(j);
            for i in 0..n {
                values.push(f(grid.coord(i), y));
            }
        }
        Self::from_grid_values(grid, &values).expect("length matches grid")
    }

    pub fn from_coeffs(grid: &Arc<TorusGrid<T>>, coeffs: Vec<Complex<T>>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self {
            grid: Arc::clone(grid),
            coeffs,
        })
    }

    pub fn to_grid_values(&self) -> Vec<T> {
        let mut buf = self.coeffs.clone();
        self.grid.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    #[inline]
    pub fn grid(&self) -> &Arc<TorusGrid<T>> {
        &self.grid
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex<T>> {
        self.coeffs
    }

    /// Coefficient of mode `(m1, m2)`.
    pub fn coeff(&self, m1: i64, m2: i64) -> Complex<T> {
        self.coeffs[self.grid.index_of(m1, m2)]
    }

    pub fn set_coeff(&mut self, m1: i64, m2: i64, value: Complex<T>) {
        let idx = self.grid.index_of(m1, m2);
        self.coeffs[idx] = value;
    }

    /// Mean value over the box (the zero mode).
    pub fn mean(&self) -> T {
        self.coeffs[0].re
    }

    /// Projects onto real fields: averages each coefficient with the
    /// conjugate of its mirror and forces self-conjugate modes real.
    pub fn symmetrize(&mut self) {
        let n = self.grid.n();
        let half = T::lit(0.5);
        for j in 0..n {
            let jm = (n - j) % n;
            for i in 0..n {
                let im = (n - i) % n;
                let a = j * n + i;
                let b = jm * n + im;
                if a < b {
                    let avg = (self.coeffs[a] + self.coeffs[b].conj()).scale(half);
                    self.coeffs[a] = avg;
                    self.coeffs[b] = avg.conj();
                } else if a == b {
                    self.coeffs[a].im = T::zero();
                }
            }
        }
    }

    /// Largest violation of `c(-k) = conj(c(k))`.
    pub fn hermitian_defect(&self) -> T {
        let n = self.grid.n();
        let mut worst = T::zero();
        for j in 0..n {
            for i in 0..n {
                let a = j * n + i;
                let b = ((n - j) % n) * n + (n - i) % n;
                worst = worst.max((self.coeffs[a] - self.coeffs[b].conj()).norm());
            }
        }
        worst
    }

    /// L2 inner product over the box, `area * sum conj(a_k) b_k`.
    pub fn dot(&self, other: &Self) -> T {
        let s: T = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        s * self.grid.area()
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    /// L2 norm evaluated by grid quadrature instead of Parseval.
    pub fn grid_norm(&self) -> T {
        let h = self.grid.spacing();
        let s: T = self.to_grid_values().iter().map(|&v| v * v).sum();
        (s * h * h).sqrt()
    }

    pub fn scale(&mut self, a: T) {
        for c in &mut self.coeffs {
            *c = c.scale(a);
        }
    }

    pub fn scaled(&self, a: T) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: T, x: &Self) {
        for (c, d) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *c = *c + d.scale(a);
        }
    }

    /// Multiplies each coefficient by a real symbol evaluated on its flat index.
    pub fn map_symbol(&self, symbol: impl Fn(usize) -> T) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| c.scale(symbol(idx)))
            .collect();
        Self {
            grid: Arc::clone(&self.grid),
            coeffs,
        }
    }

    /// Zeros every mode with `max(|m1|,|m2|) > cutoff`.
    pub fn truncate(&mut self, cutoff: i64) {
        for (idx, c) in self.coeffs.iter_mut().enumerate() {
            if self.grid.mode_inf(idx) > cutoff {
                *c = czero();
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.grid.n(),
                right: other.grid.n(),
            })
        }
    }

    /// Zero-pads (or truncates) the spectrum onto another grid with the same period.
    pub fn resample(&self, target: &Arc<TorusGrid<T>>) -> Self {
        let mut out = Self::zeros(target);
        let src = &self.grid;
        let lim = (src.n().min(target.n()) / 2) as i64;
        for idx in 0..src.len() {
            let (m1, m2) = src.mode_pair(idx);
            if m1.abs() < lim && m2.abs() < lim {
                let t = target.index_of(m1, m2);
                out.coeffs[t] = self.coeffs[idx];
            }
        }
        out
    }
}

/// Two-component real vector field on the torus (velocities, errors, forcing).
#[derive(Clone, Debug)]
pub struct SpectralVectorField<T: Real> {
    pub(crate) c: [ScalarField<T>; 2],
}

impl<T: Real> SpectralVectorField<T> {
    pub fn zeros(grid: &Arc<TorusGrid<T>>) -> Self {
        Self {
            c: [ScalarField::zeros(grid), ScalarField::zeros(grid)],
        }
    }

    pub fn from_components(u1: ScalarField<T>, u2: ScalarField<T>) -> Result<Self> {
        u1.check_same_grid(&u2)?;
        Ok(Self { c: [u1, u2] })
    }

    /// Samples `f(x, y) -> (u1, u2)` on the grid.
    pub fn from_fn(grid: &Arc<TorusGrid<T>>, f: impl Fn(T, T) -> (T, T)) -> Self {
        let u1 = ScalarField::from_fn(grid, |x, y| f(x, y).0);
        let u2 = ScalarField::from_fn(grid, |x, y| f(x, y).1);
        Self { c: [u1, u2] }
    }

    #[inline]
    pub fn grid(&self) -> &Arc<TorusGrid<T>> {
        self.c[0].grid()
    }

    #[inline]
    pub fn component(&self, i: usize) -> &ScalarField<T> {
        &self.c[i]
    }

    #[inline]
    pub fn component_mut(&mut self, i: usize) -> &mut ScalarField<T> {
        &mut self.c[i]
    }

    pub fn components(&self) -> &[ScalarField<T>; 2] {
        &self.c
    }

    pub fn into_components(self) -> [ScalarField<T>; 2] {
        self.c
    }

    pub fn dot(&self, other: &Self) -> T {
        self.c[0].dot(&other.c[0]) + self.c[1].dot(&other.c[1])
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    /// L2 norm over the box.
    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn scale(&mut self, a: T) {
        self.c[0].scale(a);
        self.c[1].scale(a);
    }

    pub fn scaled(&self, a: T) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn axpy(&mut self, a: T, x: &Self) {
        self.c[0].axpy(a, &x.c[0]);
        self.c[1].axpy(a, &x.c[1]);
    }

    /// `self - other`
    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-T::one(), other);
        out
    }

    /// `self + other`
    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(T::one(), other);
        out
    }

    pub fn map_symbol(&self, symbol: impl Fn(usize) -> T + Copy) -> Self {
        Self {
            c: [self.c[0].map_symbol(symbol), self.c[1].map_symbol(symbol)],
        }
    }

    pub fn truncate(&mut self, cutoff: i64) {
        self.c[0].truncate(cutoff);
        self.c[1].truncate(cutoff);
    }

    pub fn symmetrize(&mut self) {
        self.c[0].symmetrize();
        self.c[1].symmetrize();
    }

    /// Zero mode of both components.
    pub fn mean(&self) -> (T, T) {
        (self.c[0].mean(), self.c[1].mean())
    }

    pub fn remove_mean(&mut self) {
        self.c[0].coeffs_mut()[0] = czero();
        self.c[1].coeffs_mut()[0] = czero();
    }

    pub fn is_finite(&self) -> bool {
        self.c[0].is_finite() && self.c[1].is_finite()
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        self.c[0].check_same_grid(&other.c[0])
    }

    /// Largest `|k . u(k)|` relative to the field's coefficient magnitude.
    pub fn divergence_defect(&self) -> T {
        let g = self.grid();
        let mut worst = T::zero();
        let mut scale = T::zero();
        for idx in 0..g.len() {
            let (k1, k2) = g.kvec(idx);
            let a = self.c[0].coeffs()[idx];
            let b = self.c[1].coeffs()[idx];
            worst = worst.max((a.scale(k1) + b.scale(k2)).norm());
            scale = scale.max(a.norm().max(b.norm()));
        }
        if scale > T::zero() {
            worst / scale
        } else {
            T::zero()
        }
    }

    pub fn resample(&self, target: &Arc<TorusGrid<T>>) -> Self {
        Self {
            c: [self.c[0].resample(target), self.c[1].resample(target)],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_is_dc_mode() {
        let g = TorusGrid::<f64>::new(8).unwrap();
        let f = ScalarField::from_fn(&g, |_, _| 1.0);
        assert!((f.coeff(0, 0).re - 1.0).abs() < 1e-15);
        for (idx, c) in f.coeffs().iter().enumerate().skip(1) {
            assert!(c.norm() < 1e-15, "mode {idx} = {c}");
        }
    }

    #[test]
    fn cosine_splits_into_two_modes() {
        let g = TorusGrid::<f64>::new(8).unwrap();
        let f = ScalarField::from_fn(&g, |x, _| x.cos());
        assert!((f.coeff(1, 0).re - 0.5).abs() < 1e-15);
        assert!((f.coeff(-1, 0).re - 0.5).abs() < 1e-15);
        let others: f64 = f
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(idx, _)| {
                let m = g.mode_pair(*idx);
                m != (1, 0) && m != (-1, 0)
            })
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        assert!(others < 1e-15);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let g = TorusGrid::<f64>::new(8).unwrap();
        let err = ScalarField::from_grid_values(&g, &[0.0; 10]).unwrap_err();
        assert!(matches!(err, Error::SizeMismatch { expected: 64, got: 10 }));
    }

    #[test]
    fn grid_mismatch_detected() {
        let a = SpectralVectorField::<f64>::zeros(&TorusGrid::new(8).unwrap());
        let b = SpectralVectorField::<f64>::zeros(&TorusGrid::new(16).unwrap());
        assert!(a.check_same_grid(&b).is_err());
    }
}
