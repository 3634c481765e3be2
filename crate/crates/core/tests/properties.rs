//! Randomized invariants across the spectral, norm and normal-form layers.

use nfnls::harness::checks::random_state;
use nfnls::modulation::{box_project, modulation_norm, SharpIndicator};
use nfnls::normal_form::{BoxedState, Ops};
use nfnls::resonance::Threshold;
use nfnls::spectral::{forward, free_propagate, inverse, make_grid, Direction, Grid, Spectrum};
use nfnls::C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn state(grid: Grid, seed: u64) -> BoxedState {
    let (lo, hi) = grid.box_bounds();
    let boxes: Vec<i64> = (lo..hi).collect();
    random_state(grid, &boxes, 1.0, 2.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn rel(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn grids() -> impl Strategy<Value = Grid> {
    (1usize..=8, 1usize..=8).prop_map(|(b, n)| make_grid(b, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_round_trip_and_parseval(g in grids(), seed in any::<u64>()) {
        let s = state(g, seed).spectrum;
        let f = inverse(&s);
        prop_assert!(rel(&forward(&f).coeffs, &s.coeffs) < 1e-12);
        prop_assert!((f.l2_norm() - s.l2_norm()).abs() <= 1e-12 * s.l2_norm());
    }

    #[test]
    fn propagator_group_law(g in grids(), seed in any::<u64>(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let s = state(g, seed).spectrum;
        let two = free_propagate(&free_propagate(&s, a, Direction::Interaction), b, Direction::Interaction);
        let one = free_propagate(&s, a + b, Direction::Interaction);
        prop_assert!(rel(&two.coeffs, &one.coeffs) < 1e-12);
        let back = free_propagate(&one, a + b, Direction::Physical);
        prop_assert!(rel(&back.coeffs, &s.coeffs) < 1e-12);
    }

    #[test]
    fn sharp_boxes_are_orthogonal_and_split_energy(g in grids(), seed in any::<u64>()) {
        let s = state(g, seed).spectrum;
        let (lo, hi) = g.box_bounds();
        let bands: Vec<Spectrum> = (lo..hi).map(|n| box_project(&s, n, &SharpIndicator).unwrap().to_spectrum()).collect();
        for (i, x) in bands.iter().enumerate() {
            for y in &bands[i + 1..] {
                let ip: C64 = x.coeffs.iter().zip(&y.coeffs).map(|(p, q)| p * q.conj()).sum();
                prop_assert!(ip.norm() < 1e-12);
            }
        }
        let split: f64 = bands.iter().map(|b| b.l2_norm().powi(2)).sum();
        prop_assert!((split - s.l2_norm().powi(2)).abs() < 1e-10 * s.l2_norm().powi(2));
    }

    #[test]
    fn modulation_norm_decreases_in_q(g in grids(), seed in any::<u64>(), q1 in 1.0f64..8.0, dq in 0.0f64..8.0) {
        let s = state(g, seed).spectrum;
        let a = modulation_norm(&s, 0.0, q1, &SharpIndicator).unwrap();
        let b = modulation_norm(&s, 0.0, q1 + dq, &SharpIndicator).unwrap();
        prop_assert!(a >= b * (1.0 - 1e-12));
        let sup = state(g, seed).sup_norm();
        prop_assert!(sup <= b * (1.0 + 1e-12));
    }

    #[test]
    fn modulation_norm_ignores_free_flow(g in grids(), seed in any::<u64>(), q in 1.0f64..6.0, t in -10.0f64..10.0) {
        let s = state(g, seed).spectrum;
        let a = modulation_norm(&s, 0.0, q, &SharpIndicator).unwrap();
        let b = modulation_norm(&free_propagate(&s, t, Direction::Physical), 0.0, q, &SharpIndicator).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn split_recombines_to_the_cubic_term(seed in any::<u64>(), n in 1.0f64..40.0, t in 0.0f64..1.0) {
        let g = make_grid(2, 6).unwrap();
        let v = state(g, seed);
        let ops = Ops::new(Threshold::new(n).unwrap(), 1.0).unwrap();
        let parts = ops.r2_minus_r1(&v, t).unwrap().add(&ops.n11(&v, t).unwrap()).add(&ops.n12(&v, t).unwrap());
        let direct = ops.direct_cubic(&v, t).unwrap();
        prop_assert!(parts.sub(&direct).max_abs() <= 1e-8 * direct.max_abs());
    }

    #[test]
    fn cubic_sum_is_multilinear_under_scaling(seed in any::<u64>(), re in -2.0f64..2.0, im in -2.0f64..2.0) {
        // N(λv) = λ|λ|² N(v) for the cubic nonlinearity.
        let g = make_grid(2, 6).unwrap();
        let v = state(g, seed);
        let lam = C64::new(re, im);
        let ops = Ops::new(Threshold::new(8.0).unwrap(), 1.0).unwrap();
        let a = ops.direct_cubic(&v.scaled(lam), 0.3).unwrap();
        let b = ops.direct_cubic(&v, 0.3).unwrap().scaled(lam * lam.norm_sqr());
        prop_assert!(a.sub(&b).max_abs() <= 1e-10 * b.max_abs().max(1e-300));
    }
}
