//! Matrix-free Krylov solvers shared by the spectral steppers and the
//! finite-element lab.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::SpectralVectorField;

/// Real inner-product space the solvers iterate in.
///
/// Spectral fields qualify because every operator here preserves Hermitian
/// symmetry, which makes their coefficient inner product real.
pub trait KrylovVector<T: Real>: Clone {
    fn dot(&self, other: &Self) -> T;
    /// `self += a * x`
    fn axpy(&mut self, a: T, x: &Self);
    fn scale(&mut self, a: T);

    fn norm(&self) -> T {
        self.dot(self).sqrt()
    }
}

impl<T: Real> KrylovVector<T> for Vec<T> {
    fn dot(&self, other: &Self) -> T {
        self.iter().zip(other).map(|(a, b)| *a * *b).sum()
    }

    fn axpy(&mut self, a: T, x: &Self) {
        for (s, v) in self.iter_mut().zip(x) {
            *s = *s + a * *v;
        }
    }

    fn scale(&mut self, a: T) {
        for s in self.iter_mut() {
            *s = *s * a;
        }
    }
}

impl<T: Real> KrylovVector<T> for SpectralVectorField<T> {
    fn dot(&self, other: &Self) -> T {
        SpectralVectorField::dot(self, other)
    }

    fn axpy(&mut self, a: T, x: &Self) {
        SpectralVectorField::axpy(self, a, x)
    }

    fn scale(&mut self, a: T) {
        SpectralVectorField::scale(self, a)
    }
}

/// Iteration count and final relative residual `||b - A x|| / ||b||`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats<T> {
    pub iterations: usize,
    pub residual: T,
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    /// GMRES restart length; ignored by CG.
    pub restart: usize,
}

impl<T: Real> KrylovOptions<T> {
    pub fn new(tol: T, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            restart: 40,
        }
    }
}

fn zero_like<T: Real, V: KrylovVector<T>>(b: &V) -> V {
    let mut z = b.clone();
    z.scale(T::zero());
    z
}

/// Preconditioned conjugate gradients for SPD operators.
pub fn conjugate_gradient<T, V, A, M>(
    mut apply: A,
    mut precond: M,
    b: &V,
    x0: Option<V>,
    opts: KrylovOptions<T>,
) -> Result<(V, SolveStats<T>)>
where
    T: Real,
    V: KrylovVector<T>,
    A: FnMut(&V) -> Result<V>,
    M: FnMut(&V) -> V,
{
    let bnorm = b.norm();
    if !bnorm.is_finite() {
        return Err(Error::NonFinite("CG right-hand side"));
    }
    if bnorm == T::zero() {
        return Ok((
            zero_like(b),
            SolveStats {
                iterations: 0,
                residual: T::zero(),
            },
        ));
    }
    let mut x = x0.unwrap_or_else(|| zero_like(b));
    let mut r = b.clone();
    r.axpy(-T::one(), &apply(&x)?);
    let mut rel = r.norm() / bnorm;
    if rel <= opts.tol {
        return Ok((x, SolveStats { iterations: 0, residual: rel }));
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for it in 1..=opts.max_iter {
        let ap = apply(&p)?;
        let pap = p.dot(&ap);
        if !(pap > T::zero()) {
            if !pap.is_finite() {
                return Err(Error::NonFinite("CG"));
            }
            return Err(Error::NotConverged {
                solver: "CG (operator not positive definite)",
                iterations: it,
                residual: rel.to_f64_lossy(),
            });
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        rel = r.norm() / bnorm;
        if !rel.is_finite() {
            return Err(Error::NonFinite("CG"));
        }
        if rel <= opts.tol {
            return Ok((x, SolveStats { iterations: it, residual: rel }));
        }
        z = precond(&r);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.scale(beta);
        p.axpy(T::one(), &z);
    }
    Err(Error::NotConverged {
        solver: "CG",
        iterations: opts.max_iter,
        residual: rel.to_f64_lossy(),
    })
}

/// Restarted GMRES with right preconditioning, so the monitored residual is
/// the true residual of the original system.
pub fn gmres<T, V, A, M>(
    mut apply: A,
    mut precond: M,
    b: &V,
    x0: Option<V>,
    opts: KrylovOptions<T>,
) -> Result<(V, SolveStats<T>)>
where
    T: Real,
    V: KrylovVector<T>,
    A: FnMut(&V) -> Result<V>,
    M: FnMut(&V) -> V,
{
    let bnorm = b.norm();
    if !bnorm.is_finite() {
        return Err(Error::NonFinite("GMRES right-hand side"));
    }
    if bnorm == T::zero() {
        return Ok((
            zero_like(b),
            SolveStats {
                iterations: 0,
                residual: T::zero(),
            },
        ));
    }
    let m = opts.restart.max(1);
    let mut x = x0.unwrap_or_else(|| zero_like(b));
    let mut total = 0usize;
    loop {
        let mut r = b.clone();
        r.axpy(-T::one(), &apply(&x)?);
        let beta = r.norm();
        let rel = beta / bnorm;
        if !rel.is_finite() {
            return Err(Error::NonFinite("GMRES"));
        }
        if rel <= opts.tol {
            return Ok((x, SolveStats { iterations: total, residual: rel }));
        }
        if total >= opts.max_iter {
            return Err(Error::NotConverged {
                solver: "GMRES",
                iterations: total,
                residual: rel.to_f64_lossy(),
            });
        }
        r.scale(T::one() / beta);
        let mut basis: Vec<V> = vec![r];
        // Hessenberg columns after Givens rotation (upper triangular part).
        let mut h: Vec<Vec<T>> = Vec::with_capacity(m);
        let mut cs: Vec<T> = Vec::with_capacity(m);
        let mut sn: Vec<T> = Vec::with_capacity(m);
        let mut g = vec![beta];
        for j in 0..m {
            let z = precond(&basis[j]);
            let mut w = apply(&z)?;
            let mut col = Vec::with_capacity(j + 2);
            for v in &basis {
                let hij = w.dot(v);
                w.axpy(-hij, v);
                col.push(hij);
            }
            let hnext = w.norm();
            col.push(hnext);
            for i in 0..j {
                let (a, bb) = (col[i], col[i + 1]);
                col[i] = cs[i] * a + sn[i] * bb;
                col[i + 1] = -sn[i] * a + cs[i] * bb;
            }
            let (a, bb) = (col[j], col[j + 1]);
            let rho = a.hypot(bb);
            let (c, s) = if rho == T::zero() {
                (T::one(), T::zero())
            } else {
                (a / rho, bb / rho)
            };
            cs.push(c);
            sn.push(s);
            col[j] = rho;
            col[j + 1] = T::zero();
            let gj = g[j];
            g[j] = c * gj;
            g.push(-s * gj);
            h.push(col);
            total += 1;
            let res = g[j + 1].abs() / bnorm;
            if !res.is_finite() {
                return Err(Error::NonFinite("GMRES"));
            }
            if res <= opts.tol || total >= opts.max_iter || hnext == T::zero() {
                break;
            }
            w.scale(T::one() / hnext);
            basis.push(w);
        }
        let k = h.len();
        let mut y = vec![T::zero(); k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for jj in (i + 1)..k {
                s = s - h[jj][i] * y[jj];
            }
            y[i] = s / h[i][i];
        }
        let mut update = zero_like(b);
        for (yi, v) in y.iter().zip(&basis) {
            update.axpy(*yi, v);
        }
        x.axpy(T::one(), &precond(&update));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, d: f64, o: f64, skew: f64) -> impl Fn(&Vec<f64>) -> Result<Vec<f64>> {
        move |x: &Vec<f64>| {
            let mut y = vec![0.0; n];
            for i in 0..n {
                y[i] = d * x[i];
                if i > 0 {
                    y[i] += (o - skew) * x[i - 1];
                }
                if i + 1 < n {
                    y[i] += (o + skew) * x[i + 1];
                }
            }
            Ok(y)
        }
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 50;
        let a = tridiag(n, 4.0, -1.0, 0.0);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (x, stats) =
            conjugate_gradient(&a, |r: &Vec<f64>| r.clone(), &b, None, KrylovOptions::new(1e-12, 200))
                .unwrap();
        let mut r = a(&x).unwrap();
        r.axpy(-1.0, &b);
        assert!(r.norm() <= 1e-11 * b.norm());
        assert!(stats.iterations > 0);
    }

    #[test]
    fn gmres_solves_nonsymmetric_system_with_restarts() {
        let n = 80;
        let a = tridiag(n, 4.0, -1.0, 0.7);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.3).cos()).collect();
        let mut opts = KrylovOptions::new(1e-11, 500);
        opts.restart = 5;
        let (x, _) = gmres(&a, |r: &Vec<f64>| r.iter().map(|v| v / 4.0).collect(), &b, None, opts)
            .unwrap();
        let mut r = a(&x).unwrap();
        r.axpy(-1.0, &b);
        assert!(r.norm() <= 1e-10 * b.norm());
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = tridiag(4, 2.0, 0.0, 0.0);
        let b = vec![0.0; 4];
        let (x, s) = gmres(&a, |r: &Vec<f64>| r.clone(), &b, None, KrylovOptions::new(1e-10, 5)).unwrap();
        assert_eq!(x, b);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn reports_non_convergence() {
        let n = 60;
        let a = tridiag(n, 2.0, -1.0, 0.0);
        let b = vec![1.0; n];
        let err = conjugate_gradient(&a, |r: &Vec<f64>| r.clone(), &b, None, KrylovOptions::new(1e-14, 3))
            .unwrap_err();
        assert!(matches!(err, Error::NotConverged { iterations: 3, .. }));
    }
}
