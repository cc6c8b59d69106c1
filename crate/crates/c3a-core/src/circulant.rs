//! The d×d circular-convolution operator.
//!
//! A kernel `w` of length `d` defines the circulant matrix whose first
//! row is `w` and whose every following row is the row above rotated one
//! step to the right:
//!
//! ```text
//! C(w)[i][j] = w[(j - i) mod d]        (C(w)·x)_i = Σ_k w_k x_{(i+k) mod d}
//! ```
//!
//! Because circulants are diagonalized by the Fourier basis, the product
//! is evaluated in O(d log d) as `Re(DFT(DFT(w) ∘ iDFT(x)))`, and the
//! eigenvalues of `C(w)` are exactly `DFT(w)` — which is what the rank
//! and singular-spectrum routines read off.
//!
//! Gradients: for a loss with upstream gradient `g = ∂L/∂z`,
//!
//! * `∂L/∂x = C(w)ᵀ g`, the plain cyclic convolution of `w` with `g`,
//!   computed as `Re(iDFT(DFT(w) ∘ DFT(g)))`;
//! * `∂L/∂w = Σ_i g_i x_{(i+k) mod d}`, the cross-correlation of `g`
//!   with `x`, computed as `Re(DFT(DFT(g) ∘ iDFT(x)))`.
//!
//! Both are validated against materialized-matrix oracles and central
//! finite differences in the test suites.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::poly;
use crate::spectral;

/// Length-d kernel defining a d×d circulant operator.
#[derive(Debug, Clone, PartialEq)]
pub struct CircularKernel {
    weights: Vec<f64>,
}

impl CircularKernel {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput);
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "circular kernel",
            });
        }
        Ok(Self { weights })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check_len(&self, v: &[f64], context: &'static str) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimMismatch {
                context,
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Ground-truth product: materialize the matrix and multiply.
    pub fn apply_naive(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x, "circulant apply")?;
        self.materialize().matvec(x)
    }

    /// Eigenvalues of the operator: the forward transform of the kernel.
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        spectral::dft_real(&self.weights)
    }

    fn apply_with_spectrum(&self, wf: &[Complex64], x: &[f64]) -> Result<Vec<f64>> {
        let xf = spectral::idft_real(x)?;
        let prod: Vec<Complex64> = wf.iter().zip(&xf).map(|(&a, &b)| a * b).collect();
        let zf = spectral::dft(&prod)?;
        Ok(zf.iter().map(|c| c.re).collect())
    }

    /// FFT fast path; agrees with [`Self::apply_naive`] to rounding.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x, "circulant apply")?;
        let wf = self.eigenvalues()?;
        self.apply_with_spectrum(&wf, x)
    }

    /// Rows of `xs` (each of length d) transformed independently; the
    /// kernel spectrum is computed once and shared, and results are
    /// bit-identical to per-row [`Self::apply`] calls.
    pub fn apply_batch(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let wf = self.eigenvalues()?;
        batch(xs, self.dim(), |row| {
            if row.len() != self.dim() {
                return Err(Error::DimMismatch {
                    context: "circulant apply",
                    expected: self.dim(),
                    got: row.len(),
                });
            }
            self.apply_with_spectrum(&wf, row)
        })
    }

    /// Gradients of `L` with respect to the input and the kernel, given
    /// the upstream gradient `g = ∂L/∂z`. Returns `(gx, gw)`.
    pub fn grad(&self, x: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(x, "circulant grad input")?;
        self.check_len(g, "circulant grad upstream")?;
        let wf = self.eigenvalues()?;
        let gf = spectral::dft_real(g)?;

        // gx = C(w)ᵀ g: cyclic convolution in the frequency domain
        let prod: Vec<Complex64> = wf.iter().zip(&gf).map(|(&a, &b)| a * b).collect();
        let gx: Vec<f64> = spectral::idft(&prod)?.iter().map(|c| c.re).collect();

        // gw: cross-correlation of g with x
        let xf = spectral::idft_real(x)?;
        let prod: Vec<Complex64> = gf.iter().zip(&xf).map(|(&a, &b)| a * b).collect();
        let gw: Vec<f64> = spectral::dft(&prod)?.iter().map(|c| c.re).collect();

        Ok((gx, gw))
    }

    /// Batched [`Self::grad`]: per-row input gradients plus the kernel
    /// gradient summed over rows in ascending order.
    pub fn grad_batch(&self, xs: &[f64], gs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.dim();
        if xs.len() != gs.len() {
            return Err(Error::DimMismatch {
                context: "circulant grad batch",
                expected: xs.len(),
                got: gs.len(),
            });
        }
        if d == 0 || xs.len() % d != 0 {
            return Err(Error::DimMismatch {
                context: "circulant grad batch",
                expected: d,
                got: xs.len(),
            });
        }
        let rows = xs.len() / d;
        let mut gx = Vec::with_capacity(xs.len());
        let mut gw = vec![0.0; d];
        for r in 0..rows {
            let (gxr, gwr) = self.grad(&xs[r * d..(r + 1) * d], &gs[r * d..(r + 1) * d])?;
            gx.extend_from_slice(&gxr);
            for (acc, v) in gw.iter_mut().zip(&gwr) {
                *acc += v;
            }
        }
        Ok((gx, gw))
    }

    /// Materialize by direct index assignment (first row is the kernel,
    /// each next row rotated right by one).
    pub fn materialize(&self) -> Mat {
        let d = self.dim();
        Mat::from_fn(d, d, |i, j| self.weights[(j + d - i) % d])
    }

    /// Materialize by applying the operator to every standard basis
    /// vector (column assembly); agrees with [`Self::materialize`].
    pub fn materialize_fast(&self) -> Result<Mat> {
        let d = self.dim();
        let mut out = Mat::zeros(d, d);
        let mut basis = vec![0.0; d];
        for c in 0..d {
            basis[c] = 1.0;
            let col = self.apply(&basis)?;
            basis[c] = 0.0;
            for i in 0..d {
                out.set(i, c, col[i]);
            }
        }
        Ok(out)
    }

    /// Eigenvalue magnitudes `|DFT(w)_k|`, which are the singular values
    /// of the (normal) circulant matrix, sorted descending.
    pub fn singular_spectrum(&self) -> Vec<f64> {
        let mut mags: Vec<f64> = self
            .eigenvalues()
            .expect("kernel is non-empty")
            .iter()
            .map(|c| c.norm())
            .collect();
        mags.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite magnitudes"));
        mags
    }

    /// Rank as the number of eigenvalues above `tau` relative to the
    /// largest one. Zero kernel has rank 0.
    pub fn rank_spectral(&self, tau: f64) -> Result<usize> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParam {
                name: "tau",
                reason: alloc::format!("must be > 0, got {tau}"),
            });
        }
        let mags = self.singular_spectrum();
        let max = mags[0];
        if max == 0.0 {
            return Ok(0);
        }
        Ok(mags.iter().filter(|&&m| m > tau * max).count())
    }
}

/// Exact algebraic rank of the circulant of an integer kernel:
/// `d - deg(gcd(f, x^d - 1))` with `f(x) = Σ w_i x^i` computed over the
/// rationals. The zero kernel has rank 0.
pub fn rank_gcd(weights: &[i64]) -> usize {
    let d = weights.len();
    if d == 0 {
        return 0;
    }
    let f = poly::Poly::from_i64(weights);
    if f.is_zero() {
        return 0;
    }
    let g = poly::Poly::x_pow_minus_one(d);
    let gcd = poly::poly_gcd(&f, &g);
    d - gcd.degree().expect("gcd of non-zero polynomials is non-zero")
}

/// Shared batching helper: `xs` is row-major with rows of length `dim`.
pub(crate) fn batch(
    xs: &[f64],
    dim: usize,
    mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    if dim == 0 || xs.len() % dim != 0 {
        return Err(Error::DimMismatch {
            context: "batch rows",
            expected: dim,
            got: xs.len(),
        });
    }
    let rows = xs.len() / dim;
    let mut out = Vec::new();
    for r in 0..rows {
        out.extend_from_slice(&f(&xs[r * dim..(r + 1) * dim])?);
    }
    let _ = rows;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(w: &[f64]) -> CircularKernel {
        CircularKernel::new(w.to_vec()).unwrap()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn seeded(n: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn identity_kernel_is_identity() {
        let k = kernel(&[1.0, 0.0, 0.0]);
        let x = [5.0, 6.0, 7.0];
        assert_eq!(k.apply_naive(&x).unwrap(), vec![5.0, 6.0, 7.0]);
        assert!(max_abs_diff(&k.apply(&x).unwrap(), &x) < 1e-12);
    }

    #[test]
    fn first_basis_vector_reads_first_column() {
        // first column of [[1,2,3],[3,1,2],[2,3,1]]
        let k = kernel(&[1.0, 2.0, 3.0]);
        let z = k.apply_naive(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(z, vec![1.0, 3.0, 2.0]);
        let z = k.apply(&[1.0, 0.0, 0.0]).unwrap();
        assert!(max_abs_diff(&z, &[1.0, 3.0, 2.0]) < 1e-10);
    }

    #[test]
    fn all_ones_kernel_sums() {
        let k = kernel(&[1.0, 1.0, 1.0]);
        let (a, b, c) = (0.25, -2.0, 3.5);
        let z = k.apply_naive(&[a, b, c]).unwrap();
        let s = a + b + c;
        assert!(max_abs_diff(&z, &[s, s, s]) < 1e-12);
    }

    #[test]
    fn zero_kernel_maps_to_zero() {
        let k = kernel(&[0.0; 7]);
        let z = k.apply(&seeded(7, 1)).unwrap();
        assert!(z.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn sum_kernel_on_zero_sum_input() {
        let k = kernel(&[1.0, 1.0]);
        let z = k.apply(&[2.0, -2.0]).unwrap();
        assert!(max_abs_diff(&z, &[0.0, 0.0]) < 1e-12);
    }

    #[test]
    fn fast_path_matches_naive_across_sizes() {
        for &d in &[1usize, 2, 3, 5, 8, 16, 31, 64, 128] {
            let k = kernel(&seeded(d, 10 + d as u64));
            let x = seeded(d, 20 + d as u64);
            let fast = k.apply(&x).unwrap();
            let slow = k.apply_naive(&x).unwrap();
            let scale = 1.0 + slow.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(
                max_abs_diff(&fast, &slow) <= 1e-9 * scale,
                "d={d}: {:.3e}",
                max_abs_diff(&fast, &slow)
            );
        }
    }

    #[test]
    fn imaginary_residue_is_negligible() {
        for &d in &[3usize, 8, 31, 100] {
            let k = kernel(&seeded(d, 5));
            let x = seeded(d, 6);
            let wf = spectral::dft_real(k.weights()).unwrap();
            let xf = spectral::idft_real(&x).unwrap();
            let prod: Vec<Complex64> = wf.iter().zip(&xf).map(|(&a, &b)| a * b).collect();
            let zf = spectral::dft(&prod).unwrap();
            let max_re = zf.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
            let max_im = zf.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
            assert!(max_im <= 1e-9 * (1.0 + max_re), "d={d}: im {max_im:.3e}");
        }
    }

    #[test]
    fn dimension_mismatch_reports_both_lengths() {
        let k = kernel(&[1.0, 2.0, 3.0]);
        let err = k.apply(&[1.0, 2.0]).unwrap_err();
        assert_eq!(
            err,
            Error::DimMismatch {
                context: "circulant apply",
                expected: 3,
                got: 2
            }
        );
    }

    #[test]
    fn materialize_layout_small() {
        let m = kernel(&[1.0, 2.0, 3.0]).materialize();
        assert_eq!(m.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(m.row(1), &[3.0, 1.0, 2.0]);
        assert_eq!(m.row(2), &[2.0, 3.0, 1.0]);
    }

    #[test]
    fn materialize_identity_and_zero() {
        let id = kernel(&[1.0, 0.0, 0.0, 0.0]).materialize();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(id.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        let z = kernel(&[0.0; 4]).materialize();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn materialize_rows_are_right_rotations() {
        let d = 9;
        let k = kernel(&seeded(d, 31));
        let m = k.materialize();
        for i in 1..d {
            for j in 0..d {
                assert_eq!(m.get(i, j), m.get(i - 1, (j + d - 1) % d));
            }
        }
        assert_eq!(m.row(0), k.weights());
    }

    #[test]
    fn materialize_fast_matches_direct() {
        for &d in &[1usize, 4, 7, 12] {
            let k = kernel(&seeded(d, 40 + d as u64));
            let direct = k.materialize();
            let fast = k.materialize_fast().unwrap();
            let diff = direct
                .data()
                .iter()
                .zip(fast.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff <= 1e-10, "d={d}: {diff:.3e}");
        }
    }

    #[test]
    fn grad_zero_upstream_is_zero() {
        let k = kernel(&seeded(5, 1));
        let (gx, gw) = k.grad(&seeded(5, 2), &[0.0; 5]).unwrap();
        assert!(gx.iter().chain(&gw).all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn identity_kernel_grad_passes_through() {
        let k = kernel(&[1.0, 0.0, 0.0, 0.0]);
        let g = seeded(4, 3);
        let (gx, _) = k.grad(&seeded(4, 4), &g).unwrap();
        assert!(max_abs_diff(&gx, &g) < 1e-10);
    }

    #[test]
    fn kernel_grad_frozen_example() {
        // L = z_0 for w=(1,2,3), x=e_0: gw_k = Σ_i g_i x_{(i+k) mod 3} = e_0
        let k = kernel(&[1.0, 2.0, 3.0]);
        let (_, gw) = k.grad(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!(max_abs_diff(&gw, &[1.0, 0.0, 0.0]) < 1e-10);
    }

    #[test]
    fn grads_match_transpose_oracle_and_finite_differences() {
        for &d in &[2usize, 3, 5, 8, 16] {
            let k = kernel(&seeded(d, 100 + d as u64));
            let x = seeded(d, 200 + d as u64);
            let g = seeded(d, 300 + d as u64);
            let (gx, gw) = k.grad(&x, &g).unwrap();

            // transpose-matrix oracle for gx
            let gx_oracle = k.materialize().matvec_t(&g).unwrap();
            assert!(max_abs_diff(&gx, &gx_oracle) < 1e-10, "d={d}");

            // central finite differences on L = <g, C(w)x>
            let loss = |w: &[f64], x: &[f64]| -> f64 {
                let z = CircularKernel::new(w.to_vec()).unwrap().apply_naive(x).unwrap();
                z.iter().zip(&g).map(|(a, b)| a * b).sum()
            };
            let h = 1e-5;
            for i in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (loss(k.weights(), &xp) - loss(k.weights(), &xm)) / (2.0 * h);
                let err = (gx[i] - fd).abs();
                assert!(err <= 1e-7_f64.max(1e-4 * gx[i].abs().max(fd.abs())), "gx d={d} i={i}");

                let mut wp = k.weights().to_vec();
                let mut wm = k.weights().to_vec();
                wp[i] += h;
                wm[i] -= h;
                let fd = (loss(&wp, &x) - loss(&wm, &x)) / (2.0 * h);
                let err = (gw[i] - fd).abs();
                assert!(err <= 1e-7_f64.max(1e-4 * gw[i].abs().max(fd.abs())), "gw d={d} i={i}");
            }
        }
    }

    #[test]
    fn adjoint_identity_holds() {
        for &d in &[3usize, 8, 31] {
            let k = kernel(&seeded(d, 50));
            let x = seeded(d, 51);
            let g = seeded(d, 52);
            let z = k.apply(&x).unwrap();
            let (gx, _) = k.grad(&x, &g).unwrap();
            let lhs: f64 = g.iter().zip(&z).map(|(a, b)| a * b).sum();
            let rhs: f64 = gx.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "d={d}");
        }
    }

    #[test]
    fn batch_is_bit_identical_to_single_calls() {
        let d = 12;
        let k = kernel(&seeded(d, 60));
        let xs = seeded(d * 5, 61);
        let batched = k.apply_batch(&xs).unwrap();
        for r in 0..5 {
            let single = k.apply(&xs[r * d..(r + 1) * d]).unwrap();
            assert_eq!(&batched[r * d..(r + 1) * d], single.as_slice());
        }
    }

    #[test]
    fn spectrum_of_identity_and_constant() {
        assert_eq!(
            kernel(&[1.0, 0.0, 0.0, 0.0]).singular_spectrum(),
            vec![1.0, 1.0, 1.0, 1.0]
        );
        let s = kernel(&[1.0, 1.0, 1.0, 1.0]).singular_spectrum();
        assert!((s[0] - 4.0).abs() < 1e-12);
        assert!(s[1..].iter().all(|&v| v < 1e-12));
        assert_eq!(kernel(&[0.0; 3]).singular_spectrum(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn spectrum_squares_sum_to_frobenius_norm() {
        for &d in &[2usize, 9, 33, 128] {
            let k = kernel(&seeded(d, 70 + d as u64));
            let sum_sq: f64 = k.singular_spectrum().iter().map(|s| s * s).sum();
            let fro = k.materialize().frobenius_sq();
            assert!((sum_sq - fro).abs() <= 1e-9 * fro.max(1.0), "d={d}");
        }
    }

    #[test]
    fn spectral_rank_examples() {
        let mut id = vec![0.0; 8];
        id[0] = 1.0;
        assert_eq!(kernel(&id).rank_spectral(1e-9).unwrap(), 8);
        assert_eq!(kernel(&[1.0; 8]).rank_spectral(1e-9).unwrap(), 1);
        assert_eq!(kernel(&[1.0, -1.0, 1.0, -1.0]).rank_spectral(1e-9).unwrap(), 1);
        assert_eq!(kernel(&[0.0; 5]).rank_spectral(1e-9).unwrap(), 0);
        assert!(kernel(&[1.0]).rank_spectral(0.0).is_err());
        assert!(kernel(&[1.0]).rank_spectral(-1.0).is_err());
    }

    #[test]
    fn gcd_rank_examples() {
        assert_eq!(rank_gcd(&[1, 1, 1, 1]), 1);
        assert_eq!(rank_gcd(&[2, 0, 0]), 3);
        assert_eq!(rank_gcd(&[1, 0, -1]), 2);
        assert_eq!(rank_gcd(&[0, 0, 0, 0]), 0);
        assert_eq!(rank_gcd(&[]), 0);
    }

    #[test]
    fn three_rank_routes_agree_on_random_integer_kernels() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(424242);
        for _ in 0..200 {
            let d = rng.random_range(1..=16usize);
            let ints: Vec<i64> = (0..d).map(|_| rng.random_range(-2..=2i64)).collect();
            let floats: Vec<f64> = ints.iter().map(|&v| v as f64).collect();
            let k = CircularKernel::new(floats).unwrap();
            let algebraic = rank_gcd(&ints);
            let spectral_rank = k.rank_spectral(1e-9).unwrap();
            let row_reduced = k.materialize().rank(1e-8);
            assert_eq!(algebraic, spectral_rank, "kernel {ints:?}");
            assert_eq!(algebraic, row_reduced, "kernel {ints:?}");
        }
    }

    #[test]
    fn degenerate_length_one_operator() {
        let k = kernel(&[2.5]);
        assert_eq!(k.apply(&[3.0]).unwrap(), vec![7.5]);
        assert_eq!(k.rank_spectral(1e-9).unwrap(), 1);
        assert_eq!(kernel(&[0.0]).rank_spectral(1e-9).unwrap(), 0);
    }

    #[test]
    fn rejects_non_finite_kernel() {
        assert!(CircularKernel::new(vec![1.0, f64::NAN]).is_err());
        assert!(CircularKernel::new(vec![]).is_err());
    }
}
