//! Block-circular convolution: a d₁×d₂ operator assembled from
//! independent b×b circulant blocks.
//!
//! The input is split into `n = d₂/b` blocks and the output into
//! `m = d₁/b` blocks; block (i, j) owns its own length-b kernel, so the
//! operator covers non-square shapes and carries `d₁·d₂/b` trainable
//! parameters. The forward pass stays in the frequency domain: one
//! inverse transform per input block, per-block spectral products
//! accumulated over j in ascending order (fixed for reproducibility),
//! and one forward transform per output block.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::circulant::{batch, CircularKernel};
use crate::error::{common_divisors, Error, Result};
use crate::linalg::Mat;
use crate::spectral;

/// (m × n × b) kernel tensor defining a d₁×d₂ block-circulant operator.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCircularKernel {
    /// Flat row-major (m, n, b) layout: output-block major.
    weights: Vec<f64>,
    out_features: usize,
    in_features: usize,
    block_size: usize,
}

/// Trainable parameter count `d₁·d₂/b`; errors when `b` does not divide
/// both dimensions, listing the valid common divisors.
pub fn param_count(d1: usize, d2: usize, b: usize) -> Result<usize> {
    check_divisibility(d1, d2, b)?;
    Ok(d1 * d2 / b)
}

fn check_divisibility(d1: usize, d2: usize, b: usize) -> Result<()> {
    if d1 == 0 || d2 == 0 || b == 0 {
        return Err(Error::InvalidParam {
            name: "dimensions",
            reason: alloc::format!("d1={d1}, d2={d2}, b={b} must all be positive"),
        });
    }
    if d1 % b != 0 || d2 % b != 0 {
        return Err(Error::NotDivisible {
            d1,
            d2,
            b,
            common_divisors: common_divisors(d1, d2),
        });
    }
    Ok(())
}

impl BlockCircularKernel {
    pub fn new(d1: usize, d2: usize, b: usize, weights: Vec<f64>) -> Result<Self> {
        let expected = param_count(d1, d2, b)?;
        if weights.len() != expected {
            return Err(Error::DimMismatch {
                context: "block kernel weights",
                expected,
                got: weights.len(),
            });
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "block kernel",
            });
        }
        Ok(Self {
            weights,
            out_features: d1,
            in_features: d2,
            block_size: b,
        })
    }

    pub fn zeros(d1: usize, d2: usize, b: usize) -> Result<Self> {
        let count = param_count(d1, d2, b)?;
        Self::new(d1, d2, b, vec![0.0; count])
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Output blocks m = d₁/b.
    pub fn out_blocks(&self) -> usize {
        self.out_features / self.block_size
    }

    /// Input blocks n = d₂/b.
    pub fn in_blocks(&self) -> usize {
        self.in_features / self.block_size
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mutable access for optimizers; callers keep entries finite.
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Kernel of block (i, j) as a slice of length b.
    pub fn kernel_block(&self, i: usize, j: usize) -> &[f64] {
        let b = self.block_size;
        let n = self.in_blocks();
        let start = (i * n + j) * b;
        &self.weights[start..start + b]
    }

    fn check_in(&self, x: &[f64], context: &'static str) -> Result<()> {
        if x.len() != self.in_features {
            return Err(Error::DimMismatch {
                context,
                expected: self.in_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_out(&self, g: &[f64], context: &'static str) -> Result<()> {
        if g.len() != self.out_features {
            return Err(Error::DimMismatch {
                context,
                expected: self.out_features,
                got: g.len(),
            });
        }
        Ok(())
    }

    /// Ground-truth oracle: per-block circulant products, summed.
    pub fn apply_naive(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_in(x, "block apply")?;
        let b = self.block_size;
        let mut out = vec![0.0; self.out_features];
        for i in 0..self.out_blocks() {
            for j in 0..self.in_blocks() {
                let k = CircularKernel::new(self.kernel_block(i, j).to_vec())?;
                let z = k.apply_naive(&x[j * b..(j + 1) * b])?;
                for (o, v) in out[i * b..(i + 1) * b].iter_mut().zip(&z) {
                    *o += v;
                }
            }
        }
        Ok(out)
    }

    /// Forward transforms of every per-block kernel, indexed `i·n + j`.
    fn kernel_spectra(&self) -> Result<Vec<Vec<Complex64>>> {
        let n = self.in_blocks();
        (0..self.out_blocks() * n)
            .map(|idx| spectral::dft_real(self.kernel_block(idx / n, idx % n)))
            .collect()
    }

    fn apply_with_spectra(&self, kf: &[Vec<Complex64>], x: &[f64]) -> Result<Vec<f64>> {
        let b = self.block_size;
        let n = self.in_blocks();
        let m = self.out_blocks();

        let xf: Vec<Vec<Complex64>> = (0..n)
            .map(|j| spectral::idft_real(&x[j * b..(j + 1) * b]))
            .collect::<Result<_>>()?;

        let mut out = Vec::with_capacity(self.out_features);
        let mut acc = vec![Complex64::new(0.0, 0.0); b];
        for i in 0..m {
            acc.fill(Complex64::new(0.0, 0.0));
            for j in 0..n {
                for ((a, &k), &v) in acc.iter_mut().zip(&kf[i * n + j]).zip(&xf[j]) {
                    *a += k * v;
                }
            }
            let zf = spectral::dft(&acc)?;
            out.extend(zf.iter().map(|c| c.re));
        }
        Ok(out)
    }

    /// Frequency-domain fast path: one transform per input and output
    /// block, spectra accumulated across j in ascending order.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_in(x, "block apply")?;
        let kf = self.kernel_spectra()?;
        self.apply_with_spectra(&kf, x)
    }

    /// Rows of `xs` transformed independently; the kernel spectra are
    /// computed once and shared, and results are bit-identical to
    /// per-row [`Self::apply`] calls.
    pub fn apply_batch(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let kf = self.kernel_spectra()?;
        batch(xs, self.in_features, |row| {
            self.check_in(row, "block apply")?;
            self.apply_with_spectra(&kf, row)
        })
    }

    fn grad_with_spectra(
        &self,
        kf: &[Vec<Complex64>],
        x: &[f64],
        g: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let b = self.block_size;
        let n = self.in_blocks();
        let m = self.out_blocks();

        let gf: Vec<Vec<Complex64>> = (0..m)
            .map(|i| spectral::dft_real(&g[i * b..(i + 1) * b]))
            .collect::<Result<_>>()?;
        let xf: Vec<Vec<Complex64>> = (0..n)
            .map(|j| spectral::idft_real(&x[j * b..(j + 1) * b]))
            .collect::<Result<_>>()?;

        // gx_j = Σ_i C(K_ij)ᵀ g_i, evaluated as iDFT(Σ_i DFT(K_ij) ∘ DFT(g_i))
        let mut gx = Vec::with_capacity(self.in_features);
        let mut acc = vec![Complex64::new(0.0, 0.0); b];
        for j in 0..n {
            acc.fill(Complex64::new(0.0, 0.0));
            for i in 0..m {
                for ((a, &k), &u) in acc.iter_mut().zip(&kf[i * n + j]).zip(&gf[i]) {
                    *a += k * u;
                }
            }
            let block = spectral::idft(&acc)?;
            gx.extend(block.iter().map(|c| c.re));
        }

        // gk[i][j] = Re(DFT(DFT(g_i) ∘ iDFT(x_j)))
        let mut gk = Vec::with_capacity(self.weights.len());
        for i in 0..m {
            for j in 0..n {
                let prod: Vec<Complex64> =
                    gf[i].iter().zip(&xf[j]).map(|(&u, &v)| u * v).collect();
                let block = spectral::dft(&prod)?;
                gk.extend(block.iter().map(|c| c.re));
            }
        }
        Ok((gx, gk))
    }

    /// Gradients given upstream `g = ∂L/∂Δz`: the input gradient goes
    /// through the per-block adjoints, the kernel gradient is the
    /// per-block cross-correlation of g with x. Returns `(gx, gk)` with
    /// `gk` in the kernel's flat (m, n, b) layout.
    pub fn grad(&self, x: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_in(x, "block grad input")?;
        self.check_out(g, "block grad upstream")?;
        let kf = self.kernel_spectra()?;
        self.grad_with_spectra(&kf, x, g)
    }

    /// Batched [`Self::grad`]: per-row input gradients plus the kernel
    /// gradient summed over rows in ascending order. The kernel spectra
    /// are computed once and shared across rows.
    pub fn grad_batch(&self, xs: &[f64], gs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let d2 = self.in_features;
        let d1 = self.out_features;
        if d2 == 0 || xs.len() % d2 != 0 {
            return Err(Error::DimMismatch {
                context: "block grad batch input",
                expected: d2,
                got: xs.len(),
            });
        }
        let rows = xs.len() / d2;
        if gs.len() != rows * d1 {
            return Err(Error::DimMismatch {
                context: "block grad batch upstream",
                expected: rows * d1,
                got: gs.len(),
            });
        }
        let kf = self.kernel_spectra()?;
        let mut gx = Vec::with_capacity(xs.len());
        let mut gk = vec![0.0; self.weights.len()];
        for r in 0..rows {
            let (gxr, gkr) = self.grad_with_spectra(
                &kf,
                &xs[r * d2..(r + 1) * d2],
                &gs[r * d1..(r + 1) * d1],
            )?;
            gx.extend_from_slice(&gxr);
            for (acc, v) in gk.iter_mut().zip(&gkr) {
                *acc += v;
            }
        }
        Ok((gx, gk))
    }

    /// Assemble the dense d₁×d₂ matrix block by block from the circulant
    /// layout (naive path).
    pub fn materialize(&self) -> Mat {
        let b = self.block_size;
        let mut out = Mat::zeros(self.out_features, self.in_features);
        for i in 0..self.out_blocks() {
            for j in 0..self.in_blocks() {
                let w = self.kernel_block(i, j);
                for r in 0..b {
                    for c in 0..b {
                        out.set(i * b + r, j * b + c, w[(c + b - r) % b]);
                    }
                }
            }
        }
        out
    }

    /// Assemble by running the forward pass on every standard basis
    /// vector (the columns of the identity); agrees with
    /// [`Self::materialize`].
    pub fn materialize_fast(&self) -> Result<Mat> {
        let d2 = self.in_features;
        let mut out = Mat::zeros(self.out_features, d2);
        let mut basis = vec![0.0; d2];
        for c in 0..d2 {
            basis[c] = 1.0;
            let col = self.apply(&basis)?;
            basis[c] = 0.0;
            for (i, &v) in col.iter().enumerate() {
                out.set(i, c, v);
            }
        }
        Ok(out)
    }

    /// Numerical rank of the materialized operator (row reduction with a
    /// relative pivot threshold).
    pub fn rank(&self, rel_tol: f64) -> usize {
        self.materialize().rank(rel_tol)
    }
}
