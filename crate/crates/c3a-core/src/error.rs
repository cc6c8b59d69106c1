//! Crate-wide error type.

use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by operator construction and evaluation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A transform or operator was handed a zero-length vector.
    #[error("input must contain at least one element")]
    EmptyInput,

    /// A vector or matrix dimension does not match the operator.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// The block size must divide both operator dimensions.
    #[error(
        "block size {b} does not divide ({d1}, {d2}); valid block sizes: {common_divisors:?}"
    )]
    NotDivisible {
        d1: usize,
        d2: usize,
        b: usize,
        common_divisors: Vec<usize>,
    },

    /// A scalar parameter is outside its admissible range.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    /// A kernel, weight or input contained NaN or infinity.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

/// All divisors of gcd(d1, d2) in ascending order.
pub(crate) fn common_divisors(d1: usize, d2: usize) -> Vec<usize> {
    fn gcd(mut a: usize, mut b: usize) -> usize {
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a
    }
    let g = gcd(d1, d2);
    (1..=g).filter(|k| g % k == 0).collect()
}
