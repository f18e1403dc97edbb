//! Extreme eigenvalues of matrix-free SPD operators.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::krylov::{conjugate_gradient, KrylovOptions, KrylovVector};
use crate::scalar::Real;

/// Eigenvalue estimate with the relative residual `||A x - theta x|| / theta`
/// of its eigenvector, which bounds the relative eigenvalue error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenEstimate<T> {
    pub value: T,
    pub residual: T,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for EigenOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-8),
            max_iter: 20_000,
        }
    }
}

fn normalized<T: Real>(mut x: Vec<T>) -> Result<Vec<T>> {
    let n = KrylovVector::norm(&x);
    if !(n > T::zero()) || !n.is_finite() {
        return Err(Error::ZeroNorm(n.to_f64_lossy()));
    }
    KrylovVector::scale(&mut x, T::one() / n);
    Ok(x)
}

fn rayleigh<T: Real>(x: &[T], ax: &[T]) -> (T, T) {
    let theta: T = x.iter().zip(ax).map(|(a, b)| *a * *b).sum();
    let r: T = x
        .iter()
        .zip(ax)
        .map(|(a, b)| {
            let d = *b - theta * *a;
            d * d
        })
        .sum();
    (theta, r.sqrt() / theta.abs())
}

/// Largest eigenvalue by power iteration.
pub fn power_iteration<T, A>(mut apply: A, x0: Vec<T>, opts: EigenOptions<T>) -> Result<EigenEstimate<T>>
where
    T: Real,
    A: FnMut(&[T]) -> Result<Vec<T>>,
{
    let mut x = normalized(x0)?;
    let mut ax = apply(&x)?;
    let mut last = (T::zero(), T::infinity());
    for it in 1..=opts.max_iter {
        let (theta, res) = rayleigh(&x, &ax);
        last = (theta, res);
        if res <= opts.tol {
            return Ok(EigenEstimate {
                value: theta,
                residual: res,
                iterations: it,
            });
        }
        x = normalized(ax)?;
        ax = apply(&x)?;
    }
    Err(Error::NotConverged {
        solver: "power iteration",
        iterations: opts.max_iter,
        residual: last.1.to_f64_lossy(),
    })
}

/// Smallest eigenvalue by inverse iteration, each step a warm-started CG solve.
pub fn inverse_iteration<T, A>(mut apply: A, x0: Vec<T>, opts: EigenOptions<T>) -> Result<EigenEstimate<T>>
where
    T: Real,
    A: FnMut(&[T]) -> Result<Vec<T>>,
{
    let mut x = normalized(x0)?;
    let mut last = (T::zero(), T::infinity());
    let mut guess: Option<Vec<T>> = None;
    for it in 1..=opts.max_iter {
        let ax = apply(&x)?;
        let (theta, res) = rayleigh(&x, &ax);
        last = (theta, res);
        if res <= opts.tol {
            return Ok(EigenEstimate {
                value: theta,
                residual: res,
                iterations: it,
            });
        }
        // A y = x has solution close to x / theta
        let warm = guess.take().unwrap_or_else(|| x.iter().map(|&v| v / theta).collect());
        let (y, _) = conjugate_gradient(
            |v: &Vec<T>| apply(v),
            |r: &Vec<T>| r.clone(),
            &x,
            Some(warm),
            KrylovOptions::new(T::lit(1e-3) * opts.tol, 10_000),
        )?;
        let ynorm = KrylovVector::norm(&y);
        x = normalized(y)?;
        guess = Some(x.iter().map(|&v| v / ynorm).collect());
    }
    Err(Error::NotConverged {
        solver: "inverse iteration",
        iterations: opts.max_iter,
        residual: last.1.to_f64_lossy(),
    })
}

/// Both extreme eigenvalues by Lanczos with full reorthogonalization.
/// Ritz values are accepted once their residual estimates `beta |s_last|`
/// fall below `tol * theta`.
pub fn lanczos_extremes<T, A>(
    mut apply: A,
    x0: Vec<T>,
    opts: EigenOptions<T>,
) -> Result<(EigenEstimate<T>, EigenEstimate<T>)>
where
    T: Real,
    A: FnMut(&[T]) -> Result<Vec<T>>,
{
    let dim = x0.len();
    let max_steps = opts.max_iter.min(dim);
    let mut basis: Vec<Vec<T>> = vec![normalized(x0)?];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let tol = opts.tol.to_f64_lossy();
    let mut last_res = f64::INFINITY;
    for j in 0..max_steps {
        let mut w = apply(&basis[j])?;
        let a = KrylovVector::dot(&w, &basis[j]);
        alpha.push(a.to_f64_lossy());
        // two passes of Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for q in &basis {
                let c = KrylovVector::dot(&w, q);
                KrylovVector::axpy(&mut w, -c, q);
            }
        }
        let b = KrylovVector::norm(&w).to_f64_lossy();
        let steps = j + 1;
        let exhausted = b <= 1e-14 * alpha.iter().fold(0.0f64, |m, x| m.max(x.abs())) || steps == dim;
        if steps % 5 == 0 || exhausted || steps == max_steps {
            let mut t = DMatrix::<f64>::zeros(steps, steps);
            for i in 0..steps {
                t[(i, i)] = alpha[i];
                if i + 1 < steps {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let (mut imin, mut imax) = (0, 0);
            for i in 0..steps {
                if eig.eigenvalues[i] < eig.eigenvalues[imin] {
                    imin = i;
                }
                if eig.eigenvalues[i] > eig.eigenvalues[imax] {
                    imax = i;
                }
            }
            let est = |i: usize| {
                let theta = eig.eigenvalues[i];
                let r = if exhausted { 0.0 } else { b * eig.eigenvectors[(steps - 1, i)].abs() / theta.abs() };
                EigenEstimate {
                    value: T::lit(theta),
                    residual: T::lit(r),
                    iterations: steps,
                }
            };
            let (lo, hi) = (est(imin), est(imax));
            last_res = lo.residual.max(hi.residual).to_f64_lossy();
            if last_res <= tol || exhausted {
                return Ok((lo, hi));
            }
        }
        if exhausted {
            break;
        }
        beta.push(b);
        KrylovVector::scale(&mut w, T::lit(1.0 / b));
        basis.push(w);
    }
    Err(Error::NotConverged {
        solver: "Lanczos",
        iterations: max_steps,
        residual: last_res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_apply(d: &[f64]) -> impl FnMut(&[f64]) -> Result<Vec<f64>> + '_ {
        move |x: &[f64]| Ok(x.iter().zip(d).map(|(a, b)| a * b).collect())
    }

    #[test]
    fn extremes_of_a_diagonal() {
        let d: Vec<f64> = (1..=40).map(|i| i as f64 * 0.5).collect();
        let x0 = vec![1.0; 40];
        let (lo, hi) = lanczos_extremes(diag_apply(&d), x0.clone(), EigenOptions::default()).unwrap();
        assert!((lo.value - 0.5).abs() < 1e-10);
        assert!((hi.value - 20.0).abs() < 1e-9);
        let p = power_iteration(diag_apply(&d), x0.clone(), EigenOptions { tol: 1e-6, max_iter: 100_000 }).unwrap();
        assert!((p.value - 20.0).abs() < 1e-6 * 20.0);
        let q = inverse_iteration(diag_apply(&d), x0, EigenOptions { tol: 1e-6, max_iter: 10_000 }).unwrap();
        assert!((q.value - 0.5).abs() < 1e-6 * 0.5);
    }
}
