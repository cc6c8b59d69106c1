//! Property tests for the operator invariants.

use c3a_core::{block, circulant, spectral, BlockCircularKernel, CircularKernel};
use num_complex::Complex64;
use proptest::prelude::*;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dft_round_trip(n in 1usize..300, seed in any::<u64>()) {
        let v: Vec<Complex64> = {
            let mut s = seed;
            (0..n).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let re = ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let im = ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
                Complex64::new(re, im)
            }).collect()
        };
        let back = spectral::idft(&spectral::dft(&v).unwrap()).unwrap();
        let max_in = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let diff = v.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-10 * (1.0 + max_in));
    }

    #[test]
    fn dft_parseval(n in 1usize..200, v in prop::collection::vec(-5.0..5.0f64, 1..200)) {
        let v = &v[..v.len().min(n).max(1)];
        let f = spectral::dft_real(v).unwrap();
        let time: f64 = v.iter().map(|&x| x * x).sum();
        let freq: f64 = f.iter().map(|c| c.norm_sqr()).sum::<f64>() / v.len() as f64;
        prop_assert!((time - freq).abs() <= 1e-10 * (1.0 + time));
    }

    #[test]
    fn circulant_fast_matches_naive(d in 1usize..40, seed in any::<u64>()) {
        let mk = |off: u64| -> Vec<f64> {
            let mut s = seed.wrapping_add(off);
            (0..d).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            }).collect()
        };
        let k = CircularKernel::new(mk(1)).unwrap();
        let x = mk(2);
        let fast = k.apply(&x).unwrap();
        let slow = k.apply_naive(&x).unwrap();
        let scale = 1.0 + slow.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(max_abs_diff(&fast, &slow) <= 1e-9 * scale);
    }

    #[test]
    fn circulant_swap_is_cyclic_reversal(d in 1usize..24) {
        // Under the first-row layout, C(w)x equals C(x)w after reversing
        // the output cyclically; the matrices themselves commute as a
        // product. Both facts are checked here.
        let w: Vec<f64> = (0..d).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let x: Vec<f64> = (0..d).map(|i| ((i * 5 + 1) % 13) as f64 - 6.0).collect();
        let kw = CircularKernel::new(w.clone()).unwrap();
        let kx = CircularKernel::new(x.clone()).unwrap();
        let wx = kw.apply_naive(&x).unwrap();
        let xw = kx.apply_naive(&w).unwrap();
        for i in 0..d {
            let j = (d - i) % d;
            prop_assert!((wx[i] - xw[j]).abs() <= 1e-10);
        }
        let prod_a = kw.materialize().matmul(&kx.materialize()).unwrap();
        let prod_b = kx.materialize().matmul(&kw.materialize()).unwrap();
        prop_assert!(max_abs_diff(prod_a.data(), prod_b.data()) <= 1e-9);
    }

    #[test]
    fn circulant_linear_in_each_argument(d in 1usize..20, alpha in -3.0..3.0f64) {
        let u: Vec<f64> = (0..d).map(|i| (i as f64 * 0.37).sin()).collect();
        let v: Vec<f64> = (0..d).map(|i| (i as f64 * 0.73).cos()).collect();
        let x: Vec<f64> = (0..d).map(|i| (i as f64 * 1.1).sin()).collect();

        // kernel argument
        let sum: Vec<f64> = u.iter().zip(&v).map(|(&a, &b)| a + alpha * b).collect();
        let lhs = CircularKernel::new(sum).unwrap().apply(&x).unwrap();
        let zu = CircularKernel::new(u.clone()).unwrap().apply(&x).unwrap();
        let zv = CircularKernel::new(v.clone()).unwrap().apply(&x).unwrap();
        let rhs: Vec<f64> = zu.iter().zip(&zv).map(|(&a, &b)| a + alpha * b).collect();
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-9);

        // input argument
        let k = CircularKernel::new(x.clone()).unwrap();
        let sum: Vec<f64> = u.iter().zip(&v).map(|(&a, &b)| a + alpha * b).collect();
        let lhs = k.apply(&sum).unwrap();
        let zu = k.apply(&u).unwrap();
        let zv = k.apply(&v).unwrap();
        let rhs: Vec<f64> = zu.iter().zip(&zv).map(|(&a, &b)| a + alpha * b).collect();
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn block_fast_matches_materialized(
        mi in 1usize..4, ni in 1usize..4, bexp in 0usize..3,
        x in prop::collection::vec(-2.0..2.0f64, 0..64),
        w in prop::collection::vec(-2.0..2.0f64, 0..256),
    ) {
        let b = 1usize << bexp; // 1, 2, 4
        let (d1, d2) = (mi * b, ni * b);
        let count = block::param_count(d1, d2, b).unwrap();
        let weights: Vec<f64> = (0..count).map(|i| w.get(i % w.len().max(1)).copied().unwrap_or(0.5)).collect();
        let xs: Vec<f64> = (0..d2).map(|i| x.get(i % x.len().max(1)).copied().unwrap_or(0.25)).collect();
        let k = BlockCircularKernel::new(d1, d2, b, weights).unwrap();
        let fast = k.apply(&xs).unwrap();
        let naive = k.apply_naive(&xs).unwrap();
        let dense = k.materialize().matvec(&xs).unwrap();
        let scale = 1.0 + naive.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(max_abs_diff(&fast, &naive) <= 1e-9 * scale);
        prop_assert!(max_abs_diff(&fast, &dense) <= 1e-9 * scale);
        let fast_mat = k.materialize_fast().unwrap();
        prop_assert!(max_abs_diff(fast_mat.data(), k.materialize().data()) <= 1e-10);
    }

    #[test]
    fn spectral_rank_matches_algebraic_rank(ints in prop::collection::vec(-2i64..=2, 1..=16)) {
        let floats: Vec<f64> = ints.iter().map(|&v| v as f64).collect();
        let k = CircularKernel::new(floats).unwrap();
        let algebraic = circulant::rank_gcd(&ints);
        prop_assert_eq!(k.rank_spectral(1e-9).unwrap(), algebraic);
        prop_assert_eq!(k.materialize().rank(1e-8), algebraic);
    }
}

#[test]
fn adjoint_identity_across_sizes() {
    for d in [1usize, 2, 5, 16, 64] {
        let w: Vec<f64> = (0..d).map(|i| ((i * 13 + 5) % 7) as f64 / 3.0 - 1.0).collect();
        let x: Vec<f64> = (0..d).map(|i| ((i * 11 + 2) % 9) as f64 / 4.0 - 1.0).collect();
        let g: Vec<f64> = (0..d).map(|i| ((i * 17 + 1) % 5) as f64 / 2.0 - 1.0).collect();
        let k = CircularKernel::new(w).unwrap();
        let z = k.apply(&x).unwrap();
        let (gx, _) = k.grad(&x, &g).unwrap();
        let lhs: f64 = g.iter().zip(&z).map(|(a, b)| a * b).sum();
        let rhs: f64 = gx.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "d={d}");
    }
}
