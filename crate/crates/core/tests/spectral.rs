use std::f64::consts::PI;

use nudge_core::spectral::random::{random_solenoidal_field, random_vector_field};
use nudge_core::spectral::{advect, divergence, leray_project, ScalarField, SpectralVectorField, TorusGrid};
use nudge_core::{Grid, GridF32, VectorFieldF32};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn transform_round_trip() {
    let g = Grid::new(64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let w = random_vector_field(&g, &mut rng, 31, 0.5);
        let vals = w.component(0).to_grid_values();
        let back = ScalarField::from_grid_values(&g, &vals).unwrap();
        assert!(max_abs_diff(&back.to_grid_values(), &vals) <= 1e-12);
    }
}

#[test]
fn advection_of_manufactured_field_matches_pointwise_formula() {
    let g = Grid::new(32).unwrap();
    let u = SpectralVectorField::from_fn(&g, |x: f64, y: f64| (y.cos(), x.sin()));
    let adv = advect(&u, &u).unwrap();
    // u.grad u = (-sin x sin y, cos x cos y)
    let want = SpectralVectorField::from_fn(&g, |x: f64, y: f64| (-x.sin() * y.sin(), x.cos() * y.cos()));
    assert!(adv.sub(&want).norm() <= 1e-12 * want.norm());
}

#[test]
fn single_precision_grid_round_trips() {
    let g = GridF32::new(32).unwrap();
    let w: VectorFieldF32 = SpectralVectorField::from_fn(&g, |x: f32, y: f32| ((2.0 * y).sin(), (3.0 * x).cos()));
    let vals = w.component(1).to_grid_values();
    let back = ScalarField::from_grid_values(&g, &vals).unwrap().to_grid_values();
    let err = vals.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    assert!(err <= 1e-5, "{err}");
    assert!((w.norm() - (2.0 * PI as f32)).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn leray_is_an_idempotent_divergence_free_projection(seed in any::<u64>()) {
        let g = TorusGrid::<f64>::new(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_vector_field(&g, &mut rng, 15, 0.0);
        let p = leray_project(&w);
        let pp = leray_project(&p);
        prop_assert!(pp.sub(&p).norm() <= 1e-13 * w.norm().max(1.0));
        prop_assert!(divergence(&p).norm() <= 1e-12 * w.norm().max(1.0));
        // orthogonal: (w - Pw, Pw) = 0
        prop_assert!(w.sub(&p).dot(&p).abs() <= 1e-12 * w.norm_sq());
    }

    #[test]
    fn skew_symmetric_advection_conserves_energy(seed in any::<u64>()) {
        let g = TorusGrid::<f64>::new(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_solenoidal_field(&g, &mut rng, 14, 0.5);
        let w = random_vector_field(&g, &mut rng, 14, 0.5);
        let b = advect(&a, &w).unwrap();
        let scale = a.norm() * w.norm() * w.norm();
        prop_assert!(b.dot(&w).abs() <= 1e-12 * scale);
    }
}
