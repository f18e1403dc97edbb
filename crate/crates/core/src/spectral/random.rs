//! Seeded random fields for property suites and experiment setup.

use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;

use super::field::{ScalarField, SpectralVectorField};
use super::grid::TorusGrid;
use super::ops::{leray_project, perp_gradient};
use crate::scalar::Real;

/// Random real scalar field supported on `max(|m1|,|m2|) <= max_mode`, zero
/// mean, with coefficient amplitudes decaying like `(1+|m|^2)^(-decay/2)`.
pub fn random_scalar_field<T: Real, R: Rng + ?Sized>(
    grid: &Arc<TorusGrid<T>>,
    rng: &mut R,
    max_mode: i64,
    decay: f64,
) -> ScalarField<T> {
    let mut f = ScalarField::zeros(grid);
    let half = (grid.n() / 2) as i64;
    let lim = max_mode.min(half - 1);
    for idx in 0..grid.len() {
        let (m1, m2) = grid.mode_pair(idx);
        if (m1, m2) == (0, 0) || m1.abs() > lim || m2.abs() > lim {
            continue;
        }
        let amp = (1.0 + (m1 * m1 + m2 * m2) as f64).powf(-decay / 2.0);
        let re: f64 = rng.gen_range(-1.0..1.0);
        let im: f64 = rng.gen_range(-1.0..1.0);
        f.coeffs_mut()[idx] = Complex::new(T::lit(re * amp), T::lit(im * amp));
    }
    f.symmetrize();
    f
}

/// Random zero-mean vector field (not divergence-free).
pub fn random_vector_field<T: Real, R: Rng + ?Sized>(
    grid: &Arc<TorusGrid<T>>,
    rng: &mut R,
    max_mode: i64,
    decay: f64,
) -> SpectralVectorField<T> {
    let a = random_scalar_field(grid, rng, max_mode, decay);
    let b = random_scalar_field(grid, rng, max_mode, decay);
    SpectralVectorField::from_components(a, b).expect("same grid")
}

/// Random zero-mean divergence-free field.
pub fn random_solenoidal_field<T: Real, R: Rng + ?Sized>(
    grid: &Arc<TorusGrid<T>>,
    rng: &mut R,
    max_mode: i64,
    decay: f64,
) -> SpectralVectorField<T> {
    leray_project(&random_vector_field(grid, rng, max_mode, decay))
}

/// Smooth compactly supported bump `exp(1 - 1/(1 - r^2))` of radius `radius`
/// centred at `(cx, cy)`, evaluated with periodic distance.
pub fn bump<T: Real>(grid: &Arc<TorusGrid<T>>, cx: f64, cy: f64, radius: f64) -> ScalarField<T> {
    let len = grid.length().to_f64_lossy();
    let wrap = |d: f64| {
        let d = d.rem_euclid(len);
        if d > len / 2.0 {
            d - len
        } else {
            d
        }
    };
    ScalarField::from_fn(grid, |x, y| {
        let dx = wrap(x.to_f64_lossy() - cx);
        let dy = wrap(y.to_f64_lossy() - cy);
        let r2 = (dx * dx + dy * dy) / (radius * radius);
        if r2 < 1.0 {
            T::lit((1.0 - 1.0 / (1.0 - r2)).exp())
        } else {
            T::zero()
        }
    })
}

/// Divergence-free field `perp_grad(bump * modulation)`: supported inside a
/// disc of the given radius, hence inside a sub-square of the torus.
pub fn random_bump_field<T: Real, R: Rng + ?Sized>(
    grid: &Arc<TorusGrid<T>>,
    rng: &mut R,
    radius: f64,
) -> SpectralVectorField<T> {
    let len = grid.length().to_f64_lossy();
    let cx = rng.gen_range(0.0..len);
    let cy = rng.gen_range(0.0..len);
    let b = bump(grid, cx, cy, radius);
    let kx: f64 = rng.gen_range(0.0..3.0);
    let ky: f64 = rng.gen_range(0.0..3.0);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let modulation = ScalarField::from_fn(grid, |x, y| {
        T::lit(1.0 + 0.8 * (kx * x.to_f64_lossy() + ky * y.to_f64_lossy() + phase).cos())
    });
    let vb = b.to_grid_values();
    let vm = modulation.to_grid_values();
    let prod: Vec<T> = vb.iter().zip(&vm).map(|(a, b)| *a * *b).collect();
    let psi = ScalarField::from_grid_values(grid, &prod).expect("grid sized");
    perp_gradient(&psi)
}
