//! Differential operators, Leray projection and the dealiased nonlinearity.

use std::sync::{Arc, Mutex};

use num_complex::Complex;

use super::field::{czero, ScalarField, SpectralVectorField};
use super::grid::TorusGrid;
use crate::error::Result;
use crate::scalar::Real;

#[inline]
fn times_ik<T: Real>(c: Complex<T>, k: T) -> Complex<T> {
    Complex::new(-c.im * k, c.re * k)
}

/// `(d/dx, d/dy) s`
pub fn gradient<T: Real>(s: &ScalarField<T>) -> SpectralVectorField<T> {
    let g = s.grid().clone();
    let mut out = SpectralVectorField::zeros(&g);
    for (idx, c) in s.coeffs().iter().enumerate() {
        let (k1, k2) = g.kvec(idx);
        out.c[0].coeffs_mut()[idx] = times_ik(*c, k1);
        out.c[1].coeffs_mut()[idx] = times_ik(*c, k2);
    }
    out
}

pub fn divergence<T: Real>(w: &SpectralVectorField<T>) -> ScalarField<T> {
    let g = w.grid().clone();
    let mut out = ScalarField::zeros(&g);
    let (a, b) = (w.c[0].coeffs(), w.c[1].coeffs());
    for (idx, o) in out.coeffs_mut().iter_mut().enumerate() {
        let (k1, k2) = g.kvec(idx);
        *o = times_ik(a[idx], k1) + times_ik(b[idx], k2);
    }
    out
}

/// Scalar curl `d u2/dx - d u1/dy`.
pub fn curl<T: Real>(w: &SpectralVectorField<T>) -> ScalarField<T> {
    let g = w.grid().clone();
    let mut out = ScalarField::zeros(&g);
    let (a, b) = (w.c[0].coeffs(), w.c[1].coeffs());
    for (idx, o) in out.coeffs_mut().iter_mut().enumerate() {
        let (k1, k2) = g.kvec(idx);
        *o = times_ik(b[idx], k1) - times_ik(a[idx], k2);
    }
    out
}

/// Divergence-free velocity `(d psi/dy, -d psi/dx)` from a stream function.
pub fn perp_gradient<T: Real>(psi: &ScalarField<T>) -> SpectralVectorField<T> {
    let mut g = gradient(psi);
    let [gx, gy] = std::mem::replace(&mut g.c, [ScalarField::zeros(psi.grid()), ScalarField::zeros(psi.grid())]);
    g.c = [gy, gx.scaled(-T::one())];
    g
}

pub fn laplacian<T: Real>(s: &ScalarField<T>) -> ScalarField<T> {
    let g = s.grid().clone();
    s.map_symbol(|idx| -g.k2(idx))
}

pub fn vector_laplacian<T: Real>(w: &SpectralVectorField<T>) -> SpectralVectorField<T> {
    let g = w.grid().clone();
    w.map_symbol(|idx| -g.k2(idx))
}

/// L2-orthogonal projection onto divergence-free fields. Modes whose
/// derivative wavevector vanishes (the mean and pure Nyquist modes) pass
/// through unchanged.
pub fn leray_project<T: Real>(w: &SpectralVectorField<T>) -> SpectralVectorField<T> {
    let mut out = w.clone();
    leray_project_in_place(&mut out);
    out
}

pub fn leray_project_in_place<T: Real>(w: &mut SpectralVectorField<T>) {
    let g = w.grid().clone();
    let [a, b] = &mut w.c;
    let (a, b) = (a.coeffs_mut(), b.coeffs_mut());
    for idx in 0..g.len() {
        let (k1, k2) = g.kvec(idx);
        let kk = k1 * k1 + k2 * k2;
        if kk == T::zero() {
            continue;
        }
        let kdotw = (a[idx].scale(k1) + b[idx].scale(k2)).unscale(kk);
        a[idx] = a[idx] - kdotw.scale(k1);
        b[idx] = b[idx] - kdotw.scale(k2);
    }
}

/// Inverse transforms two real fields with a single complex FFT.
pub(crate) fn inverse_pair<T: Real>(
    g: &TorusGrid<T>,
    a: &[Complex<T>],
    b: &[Complex<T>],
    out_a: &mut [T],
    out_b: &mut [T],
) {
    let i = Complex::new(T::zero(), T::one());
    let mut z: Vec<Complex<T>> = a.iter().zip(b).map(|(&x, &y)| x + i * y).collect();
    g.inverse(&mut z);
    for ((z, oa), ob) in z.iter().zip(out_a.iter_mut()).zip(out_b.iter_mut()) {
        *oa = z.re;
        *ob = z.im;
    }
}

/// Dealiased skew-symmetric advection `1/2 [a.grad w + div(a (x) w)]`
/// with a fixed advecting field. Grid values of `a` are computed once, so
/// repeated applications (Krylov iterations) cost six FFTs each.
#[derive(Debug)]
pub struct Advector<T: Real> {
    grid: Arc<TorusGrid<T>>,
    a1: Vec<T>,
    a2: Vec<T>,
    cutoff: i64,
    zero: bool,
    work: Mutex<[Vec<Complex<T>>; 3]>,
}

impl<T: Real> Clone for Advector<T> {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            a1: self.a1.clone(),
            a2: self.a2.clone(),
            cutoff: self.cutoff,
            zero: self.zero,
            work: Mutex::new(Default::default()),
        }
    }
}

/// Splits the spectrum of `x + i y` (x, y real) at `idx` into those of x and y.
#[inline]
fn unpack<T: Real>(z: &[Complex<T>], idx: usize, mirror: usize) -> (Complex<T>, Complex<T>) {
    let half = T::lit(0.5);
    let zm = z[mirror].conj();
    let d = (z[idx] - zm).scale(half);
    ((z[idx] + zm).scale(half), Complex::new(d.im, -d.re))
}

impl<T: Real> Advector<T> {
    pub fn new(a: &SpectralVectorField<T>) -> Self {
        let g = a.grid().clone();
        let cutoff = g.dealias_cutoff();
        let mut at = a.clone();
        at.truncate(cutoff);
        let zero = at.norm_sq() == T::zero();
        let mut a1 = vec![T::zero(); g.len()];
        let mut a2 = vec![T::zero(); g.len()];
        inverse_pair(&g, at.c[0].coeffs(), at.c[1].coeffs(), &mut a1, &mut a2);
        Self {
            grid: g,
            a1,
            a2,
            cutoff,
            zero,
            work: Mutex::new(Default::default()),
        }
    }

    pub fn grid(&self) -> &Arc<TorusGrid<T>> {
        &self.grid
    }

    pub fn apply(&self, w: &SpectralVectorField<T>) -> Result<SpectralVectorField<T>> {
        let g = &*self.grid;
        if !g.same_as(w.grid()) {
            return Err(crate::Error::GridMismatch {
                left: g.n(),
                right: w.grid().n(),
            });
        }
        let mut out = SpectralVectorField::zeros(&self.grid);
        if self.zero {
            return Ok(out);
        }
        let (n, len) = (g.n(), g.len());
        let mut guard = self.work.lock().unwrap_or_else(|e| e.into_inner());
        let [za, zb, zc] = &mut *guard;
        for z in [&mut *za, &mut *zb, &mut *zc] {
            z.clear();
            z.resize(len, czero());
        }

        // za = w1 + i w2, zb = d1 w1 + i d2 w1, zc = d1 w2 + i d2 w2
        let (w1, w2) = (w.c[0].coeffs(), w.c[1].coeffs());
        let i = Complex::new(T::zero(), T::one());
        for idx in 0..len {
            if g.mode_inf(idx) > self.cutoff {
                continue;
            }
            let (k1, k2) = g.kvec(idx);
            za[idx] = w1[idx] + i * w2[idx];
            zb[idx] = times_ik(w1[idx], k1) + i * times_ik(w1[idx], k2);
            zc[idx] = times_ik(w2[idx], k1) + i * times_ik(w2[idx], k2);
        }
        g.inverse(za);
        g.inverse(zb);
        g.inverse(zc);

        // za = (a.grad w1) + i (a.grad w2), zb = a w1, zc = a w2
        let (a1, a2) = (&self.a1, &self.a2);
        for p in 0..len {
            let (u, v) = (za[p], (zb[p], zc[p]));
            let (x, y) = (a1[p], a2[p]);
            za[p] = Complex::new(x * v.0.re + y * v.0.im, x * v.1.re + y * v.1.im);
            zb[p] = Complex::new(x * u.re, y * u.re);
            zc[p] = Complex::new(x * u.im, y * u.im);
        }
        g.forward(za);
        g.forward(zb);
        g.forward(zc);

        let half = T::lit(0.5);
        let [o1, o2] = &mut out.c;
        let (o1, o2) = (o1.coeffs_mut(), o2.coeffs_mut());
        for idx in 0..len {
            if g.mode_inf(idx) > self.cutoff {
                continue;
            }
            let (i1, j1) = (idx % n, idx / n);
            let mirror = ((n - j1) % n) * n + (n - i1) % n;
            let (c1, c2) = unpack(za, idx, mirror);
            let (h11, h12) = unpack(zb, idx, mirror);
            let (h21, h22) = unpack(zc, idx, mirror);
            let (k1, k2) = g.kvec(idx);
            o1[idx] = (c1 + times_ik(h11, k1) + times_ik(h12, k2)).scale(half);
            o2[idx] = (c2 + times_ik(h21, k1) + times_ik(h22, k2)).scale(half);
        }
        Ok(out)
    }
}

/// One-shot skew-symmetric advection of `w` by `a`.
pub fn advect<T: Real>(
    a: &SpectralVectorField<T>,
    w: &SpectralVectorField<T>,
) -> Result<SpectralVectorField<T>> {
    a.check_same_grid(w)?;
    Advector::new(a).apply(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::random::random_vector_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Arc<TorusGrid<f64>> {
        TorusGrid::new(n).unwrap()
    }

    #[test]
    fn laplacian_of_cosine() {
        let g = grid(16);
        let f = ScalarField::from_fn(&g, |x, _| x.cos());
        let mut lap = laplacian(&f);
        lap.axpy(1.0, &f);
        assert!(lap.norm() < 1e-13);
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = grid(16);
        let f = ScalarField::from_fn(&g, |_, _| 3.5);
        assert!(gradient(&f).norm() < 1e-14);
    }

    #[test]
    fn manufactured_velocity_is_solenoidal() {
        let g = grid(32);
        let e = 1.7f64.exp();
        let u = SpectralVectorField::from_fn(&g, |x, y| (e * y.cos(), e * x.sin()));
        assert!(divergence(&u).norm() < 1e-13);
    }

    #[test]
    fn div_grad_is_laplacian() {
        let g = grid(16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_vector_field(&g, &mut rng, 8, 0.0).into_components()[0].clone();
        let mut d = divergence(&gradient(&f));
        d.axpy(-1.0, &laplacian(&f));
        assert!(d.norm() <= 1e-13 * f.norm());
    }

    #[test]
    fn leray_kills_gradients_and_keeps_solenoidal() {
        let g = grid(16);
        let phi = ScalarField::from_fn(&g, |x, y| x.cos() * y.sin());
        assert!(leray_project(&gradient(&phi)).norm() < 1e-14);
        let u = SpectralVectorField::from_fn(&g, |x, y| (y.cos(), x.sin()));
        assert!(leray_project(&u).sub(&u).norm() < 1e-14);
    }

    #[test]
    fn leray_is_idempotent_on_random_fields() {
        let g = grid(32);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let w = random_vector_field(&g, &mut rng, 15, 1.0);
            let p = leray_project(&w);
            let pp = leray_project(&p);
            assert!(pp.sub(&p).norm() <= 1e-13 * w.norm().max(1.0));
            assert!(p.divergence_defect() < 1e-12);
        }
    }

    #[test]
    fn advection_by_zero_is_zero() {
        let g = grid(16);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_vector_field(&g, &mut rng, 5, 1.0);
        let z = SpectralVectorField::zeros(&g);
        assert_eq!(advect(&z, &w).unwrap().norm(), 0.0);
    }

    #[test]
    fn advection_grid_mismatch() {
        let a = SpectralVectorField::<f64>::zeros(&grid(16));
        let w = SpectralVectorField::<f64>::zeros(&grid(32));
        assert!(advect(&a, &w).is_err());
    }

    #[test]
    fn pair_transforms_round_trip() {
        let g = grid(16);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = random_vector_field(&g, &mut rng, 8, 0.5);
        let mut a = vec![0.0; g.len()];
        let mut b = vec![0.0; g.len()];
        inverse_pair(&g, w.c[0].coeffs(), w.c[1].coeffs(), &mut a, &mut b);
        let direct = w.c[0].to_grid_values();
        for (x, y) in a.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-13);
        }
        let mut z: Vec<_> = a.iter().zip(&b).map(|(&x, &y)| Complex::new(x, y)).collect();
        g.forward(&mut z);
        let n = g.n();
        for idx in 0..g.len() {
            let (i1, j1) = (idx % n, idx / n);
            let (fa, fb) = unpack(&z, idx, ((n - j1) % n) * n + (n - i1) % n);
            assert!((fa - w.c[0].coeffs()[idx]).norm() < 1e-14);
            assert!((fb - w.c[1].coeffs()[idx]).norm() < 1e-14);
        }
    }
}
