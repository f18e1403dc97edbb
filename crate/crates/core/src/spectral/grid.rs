use std::fmt;
use std::sync::{Arc, Mutex};

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform `n x n` periodic grid on `[0, length)^2` with cached FFT plans.
///
/// Flat storage is row-major in `y`: entry `j * n + i` holds the value at
/// `(x_i, y_j)` in grid space and the mode `(m(i), m(j))` in spectral space,
/// where `m(i) = i` for `i <= n/2` and `i - n` above.
pub struct TorusGrid<T: Real> {
    n: usize,
    length: T,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    modes: Vec<i64>,
    deriv: Vec<T>,
    wave: Vec<T>,
    // (fft scratch, transpose buffer), reused across transforms
    work: Mutex<(Vec<Complex<T>>, Vec<Complex<T>>)>,
}

impl<T: Real> fmt::Debug for TorusGrid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl<T: Real> TorusGrid<T> {
    /// Grid with `n` points per side on a `2*pi` periodic box.
    pub fn new(n: usize) -> Result<Arc<Self>> {
        Self::with_length(n, T::TAU())
    }

    pub fn with_length(n: usize, length: T) -> Result<Arc<Self>> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per side must be a power of two >= 8, got {n}"
            )));
        }
        if !(length > T::zero()) || !length.is_finite() {
            return Err(Error::InvalidGrid(format!("period must be positive, got {length}")));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let base = T::TAU() / length;
        let half = n / 2;
        let modes: Vec<i64> = (0..n)
            .map(|i| if i <= half { i as i64 } else { i as i64 - n as i64 })
            .collect();
        let wave: Vec<T> = modes
            .iter()
            .map(|&m| base * T::from_i64(m).unwrap())
            .collect();
        // First derivatives of the Nyquist mode are dropped so real fields stay real.
        let deriv: Vec<T> = (0..n)
            .map(|i| if i == half { T::zero() } else { wave[i] })
            .collect();
        Ok(Arc::new(Self {
            n,
            length,
            forward,
            inverse,
            modes,
            deriv,
            wave,
            work: Mutex::new((Vec::new(), Vec::new())),
        }))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn length(&self) -> T {
        self.length
    }

    /// Grid spacing `length / n`.
    pub fn spacing(&self) -> T {
        self.length / T::from_usize_lossy(self.n)
    }

    /// Area of the periodic box.
    pub fn area(&self) -> T {
        self.length * self.length
    }

    /// Integer mode number along one axis for storage index `i`.
    #[inline]
    pub fn mode(&self, i: usize) -> i64 {
        self.modes[i]
    }

    /// Physical wavenumber used by first derivatives (zero at Nyquist).
    #[inline]
    pub fn deriv_wavenumber(&self, i: usize) -> T {
        self.deriv[i]
    }

    /// Physical wavenumber `2*pi*m/length`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> T {
        self.wave[i]
    }

    /// `|k|^2` as seen by the Laplacian, i.e. `div(grad)`.
    #[inline]
    pub fn k2(&self, idx: usize) -> T {
        let (i, j) = (idx % self.n, idx / self.n);
        self.deriv[i] * self.deriv[i] + self.deriv[j] * self.deriv[j]
    }

    /// Derivative wavevector of flat index `idx`.
    #[inline]
    pub fn kvec(&self, idx: usize) -> (T, T) {
        (self.deriv[idx % self.n], self.deriv[idx / self.n])
    }

    /// Integer mode pair of flat index `idx`.
    #[inline]
    pub fn mode_pair(&self, idx: usize) -> (i64, i64) {
        (self.modes[idx % self.n], self.modes[idx / self.n])
    }

    /// `max(|m1|, |m2|)` for flat index `idx`.
    #[inline]
    pub fn mode_inf(&self, idx: usize) -> i64 {
        let (a, b) = self.mode_pair(idx);
        a.abs().max(b.abs())
    }

    /// Flat index of mode `(m1, m2)`, wrapping negative modes.
    pub fn index_of(&self, m1: i64, m2: i64) -> usize {
        let n = self.n as i64;
        let wrap = |m: i64| m.rem_euclid(n) as usize;
        wrap(m2) * self.n + wrap(m1)
    }

    /// Whether flat index `idx` touches a Nyquist row or column.
    #[inline]
    pub fn is_nyquist(&self, idx: usize) -> bool {
        let half = self.n / 2;
        idx % self.n == half || idx / self.n == half
    }

    /// Largest mode kept by the 2/3 dealiasing rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    /// Grid coordinate of index `i` along one axis.
    pub fn coord(&self, i: usize) -> T {
        self.spacing() * T::from_usize_lossy(i)
    }

    pub fn same_as(&self, other: &Self) -> bool {
        std::ptr::eq(self, other) || (self.n == other.n && self.length == other.length)
    }

    /// Grid values -> normalized Fourier coefficients, in place.
    pub fn forward(&self, buf: &mut [Complex<T>]) {
        self.transform_2d(buf, &*self.forward);
        let scale = T::one() / T::from_usize_lossy(self.len());
        for c in buf.iter_mut() {
            *c = c.scale(scale);
        }
    }

    /// Fourier coefficients -> grid values, in place.
    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        self.transform_2d(buf, &*self.inverse);
    }

    fn transform_2d(&self, buf: &mut [Complex<T>], plan: &dyn Fft<T>) {
        debug_assert_eq!(buf.len(), self.len());
        let n = self.n;
        let zero = Complex::new(T::zero(), T::zero());
        // A poisoned lock only means another thread panicked mid-transform;
        // the buffers are overwritten before being read either way.
        let mut guard = self.work.lock().unwrap_or_else(|e| e.into_inner());
        let (scratch, t) = &mut *guard;
        scratch.resize(plan.get_inplace_scratch_len(), zero);
        t.resize(buf.len(), zero);
        plan.process_with_scratch(buf, scratch);
        transpose(buf, t, n);
        plan.process_with_scratch(t, scratch);
        transpose(t, buf, n);
    }
}

fn transpose<T: Copy>(src: &[T], dst: &mut [T], n: usize) {
    const BLOCK: usize = 16;
    for jb in (0..n).step_by(BLOCK) {
        for ib in (0..n).step_by(BLOCK) {
            for j in jb..(jb + BLOCK).min(n) {
                for i in ib..(ib + BLOCK).min(n) {
                    dst[i * n + j] = src[j * n + i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(TorusGrid::<f64>::new(6).is_err());
        assert!(TorusGrid::<f64>::new(12).is_err());
        assert!(TorusGrid::<f64>::new(4).is_err());
        assert!(TorusGrid::<f64>::with_length(8, -1.0).is_err());
        assert!(TorusGrid::<f64>::new(16).is_ok());
    }

    #[test]
    fn mode_layout() {
        let g = TorusGrid::<f64>::new(8).unwrap();
        assert_eq!(g.mode(3), 3);
        assert_eq!(g.mode(4), 4);
        assert_eq!(g.mode(5), -3);
        assert_eq!(g.deriv_wavenumber(4), 0.0);
        let idx = g.index_of(-1, 2);
        assert_eq!(g.mode_pair(idx), (-1, 2));
        assert!(g.is_nyquist(g.index_of(4, 1)));
    }
}
