//! Discrete Fourier transforms for arbitrary lengths.
//!
//! This module is the single source of DFT conventions for the crate:
//!
//! * forward:  `X_k = Σ_j v_j · e^(-2πi·jk/n)`   (unnormalized)
//! * inverse:  `x_j = (1/n) Σ_k v_k · e^(+2πi·jk/n)`
//!
//! Power-of-two lengths go through an iterative radix-2 kernel. Other
//! lengths are peeled by their smallest prime factor (mixed-radix
//! Cooley-Tukey); prime lengths above a small cutoff use Bluestein's
//! chirp-z algorithm, so any length is supported — block sizes are
//! divisors of model dimensions and are frequently not powers of two.
//!
//! All functions are pure; nothing is cached between calls.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

const TAU: f64 = core::f64::consts::TAU;

/// Largest prime length transformed by direct summation before the
/// Bluestein fallback kicks in.
const DIRECT_PRIME_CUTOFF: usize = 64;

/// Forward transform of a complex vector.
pub fn dft(v: &[Complex64]) -> Result<Vec<Complex64>> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(fft_forward(v))
}

/// Inverse transform; exact inverse of [`dft`] up to rounding.
pub fn idft(v: &[Complex64]) -> Result<Vec<Complex64>> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    let conj: Vec<Complex64> = v.iter().map(|c| c.conj()).collect();
    let mut out = fft_forward(&conj);
    let scale = 1.0 / v.len() as f64;
    for c in &mut out {
        *c = Complex64::new(c.re * scale, -c.im * scale);
    }
    Ok(out)
}

/// Forward transform of a real vector.
pub fn dft_real(v: &[f64]) -> Result<Vec<Complex64>> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    let cx: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    Ok(fft_forward(&cx))
}

/// Inverse transform of a real vector (viewed as complex with zero
/// imaginary part).
pub fn idft_real(v: &[f64]) -> Result<Vec<Complex64>> {
    let cx: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    idft(&cx)
}

fn fft_forward(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    if n == 1 {
        return x.to_vec();
    }
    if n.is_power_of_two() {
        return radix2(x);
    }
    let p = smallest_prime_factor(n);
    if p == n {
        if n <= DIRECT_PRIME_CUTOFF {
            direct_dft(x)
        } else {
            bluestein(x)
        }
    } else {
        mixed_radix(x, p)
    }
}

/// `ω_n^{-k}` for k in 0..n.
fn twiddles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let angle = -TAU * k as f64 / n as f64;
            Complex64::new(angle.cos(), angle.sin())
        })
        .collect()
}

fn smallest_prime_factor(n: usize) -> usize {
    if n % 2 == 0 {
        return 2;
    }
    let mut p = 3;
    while p * p <= n {
        if n % p == 0 {
            return p;
        }
        p += 2;
    }
    n
}

/// Iterative radix-2 decimation-in-time; `x.len()` must be a power of two.
fn radix2(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let log_n = n.trailing_zeros();
    let mut a = vec![Complex64::new(0.0, 0.0); n];
    for (i, &v) in x.iter().enumerate() {
        a[bit_reverse(i, log_n)] = v;
    }
    let tw = twiddles(n);
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        let mut base = 0;
        while base < n {
            for j in 0..half {
                let w = tw[j * stride];
                let u = a[base + j];
                let t = w * a[base + j + half];
                a[base + j] = u + t;
                a[base + j + half] = u - t;
            }
            base += len;
        }
        len <<= 1;
    }
    a
}

fn bit_reverse(mut i: usize, bits: u32) -> usize {
    let mut out = 0;
    for _ in 0..bits {
        out = (out << 1) | (i & 1);
        i >>= 1;
    }
    out
}

/// One Cooley-Tukey split n = p·m with p prime: p sub-transforms of
/// length m, then a direct p-point combine with exact modular twiddle
/// indexing.
fn mixed_radix(x: &[Complex64], p: usize) -> Vec<Complex64> {
    let n = x.len();
    let m = n / p;
    let subs: Vec<Vec<Complex64>> = (0..p)
        .map(|r| {
            let decimated: Vec<Complex64> = (0..m).map(|a| x[a * p + r]).collect();
            fft_forward(&decimated)
        })
        .collect();

    let tw = twiddles(n);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let mut t = vec![Complex64::new(0.0, 0.0); p];
    for s in 0..m {
        for r in 0..p {
            t[r] = subs[r][s] * tw[(r * s) % n];
        }
        for q in 0..p {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..p {
                // ω_p^{-rq} = ω_n^{-rqm}
                acc += t[r] * tw[(r * q * m) % n];
            }
            out[q * m + s] = acc;
        }
    }
    out
}

/// Direct O(n²) summation, used for small prime lengths.
fn direct_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let tw = twiddles(n);
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &v) in x.iter().enumerate() {
                acc += v * tw[(j * k) % n];
            }
            acc
        })
        .collect()
}

/// Bluestein's chirp-z transform: rewrites the length-n DFT as a linear
/// convolution of chirp-modulated sequences, evaluated through a
/// power-of-two cyclic convolution of length ≥ 2n-1.
fn bluestein(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    // chirp[j] = e^{-iπ j²/n}, with j² reduced mod 2n to keep the
    // argument small for accurate trig evaluation
    let chirp: Vec<Complex64> = (0..n)
        .map(|j| {
            let e = (j * j) % (2 * n);
            let angle = -core::f64::consts::PI * e as f64 / n as f64;
            Complex64::new(angle.cos(), angle.sin())
        })
        .collect();

    let m = (2 * n - 1).next_power_of_two();
    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for j in 0..n {
        a[j] = x[j] * chirp[j];
    }
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    b[0] = chirp[0].conj();
    for j in 1..n {
        let v = chirp[j].conj();
        b[j] = v;
        b[m - j] = v;
    }

    let fa = radix2(&a);
    let fb = radix2(&b);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(&u, &v)| u * v).collect();

    // inverse power-of-two transform via conjugation
    let conj: Vec<Complex64> = prod.iter().map(|c| c.conj()).collect();
    let inv = radix2(&conj);
    let scale = 1.0 / m as f64;

    (0..n)
        .map(|k| {
            let c = Complex64::new(inv[k].re * scale, -inv[k].im * scale);
            c * chirp[k]
        })
        .collect()
}
