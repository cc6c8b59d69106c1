//! Exact univariate polynomial gcd over the rationals.
//!
//! Used as the algebraic cross-check for circulant rank: coefficient
//! arithmetic is `BigRational`, so results are exact for any integer
//! kernel regardless of degree or coefficient growth in the remainder
//! sequence.

use alloc::vec::Vec;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// Coefficients in ascending degree; no trailing zeros after `trim`.
#[derive(Debug, Clone)]
pub(crate) struct Poly(Vec<BigRational>);

impl Poly {
    pub(crate) fn from_i64(coeffs: &[i64]) -> Self {
        let v = coeffs
            .iter()
            .map(|&c| BigRational::from_integer(BigInt::from(c)))
            .collect();
        let mut p = Poly(v);
        p.trim();
        p
    }

    /// `x^d - 1`.
    pub(crate) fn x_pow_minus_one(d: usize) -> Self {
        let mut v = alloc::vec![BigRational::zero(); d + 1];
        v[0] = -BigRational::one();
        v[d] = BigRational::one();
        Poly(v)
    }

    fn trim(&mut self) {
        while self.0.last().map_or(false, |c| c.is_zero()) {
            self.0.pop();
        }
    }

    pub(crate) fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// Degree, or `None` for the zero polynomial.
    pub(crate) fn degree(&self) -> Option<usize> {
        self.0.len().checked_sub(1)
    }

    /// Remainder of `self / div` by exact long division; `div` non-zero.
    fn rem(&self, div: &Poly) -> Poly {
        let dd = div.degree().expect("division by zero polynomial");
        let lead = div.0[dd].clone();
        let mut r = self.0.clone();
        while r.len() > dd {
            let k = r.len() - 1;
            let factor = r[k].clone() / lead.clone();
            if !factor.is_zero() {
                let shift = k - dd;
                for (i, c) in div.0.iter().enumerate() {
                    r[shift + i] -= &factor * c;
                }
            }
            r.pop();
            while r.last().map_or(false, |c| c.is_zero()) {
                r.pop();
            }
        }
        Poly(r)
    }
}

/// Euclidean gcd; result is unnormalized (scaling does not affect degree).
pub(crate) fn poly_gcd(a: &Poly, b: &Poly) -> Poly {
    let mut a = a.clone();
    let mut b = b.clone();
    while !b.is_zero() {
        let r = a.rem(&b);
        a = b;
        b = r;
    }
    a
}
