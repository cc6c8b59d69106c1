//! Adapter layers over frozen base weights.
//!
//! [`AdaptedLinear`] adds a trainable block-circular delta on top of a
//! frozen dense matrix (`z = W₀x + scale·Δz + bias`); [`LoraAdapter`] is
//! the low-rank baseline (`z = W₀x + B(Ax)`). Both can be folded into a
//! plain dense matrix for inference via `merge`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::block::BlockCircularKernel;
use crate::circulant::batch;
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Kernel initialization strategies. All of them are fully determined by
/// the seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitStrategy {
    Zero,
    Gaussian { sigma: f64 },
    /// Uniform in ±√(6 / fan_in) with fan_in = d₂ of the full operator.
    KaimingUniform,
    /// Uniform in ±√(6 / (d₁ + d₂)).
    XavierUniform,
}

/// Build a block-circular kernel from an initialization strategy.
pub fn init_kernel(
    strategy: InitStrategy,
    d1: usize,
    d2: usize,
    b: usize,
    seed: u64,
) -> Result<BlockCircularKernel> {
    let count = crate::block::param_count(d1, d2, b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = match strategy {
        InitStrategy::Zero => vec![0.0; count],
        InitStrategy::Gaussian { sigma } => {
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(Error::InvalidParam {
                    name: "sigma",
                    reason: alloc::format!("must be finite and > 0, got {sigma}"),
                });
            }
            (0..count)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sigma * z
                })
                .collect()
        }
        InitStrategy::KaimingUniform => {
            let bound = (6.0 / d2 as f64).sqrt();
            (0..count).map(|_| rng.random_range(-bound..bound)).collect()
        }
        InitStrategy::XavierUniform => {
            let bound = (6.0 / (d1 + d2) as f64).sqrt();
            (0..count).map(|_| rng.random_range(-bound..bound)).collect()
        }
    };
    BlockCircularKernel::new(d1, d2, b, weights)
}

/// Standard LoRA initialization: `A` Gaussian with σ = 1/√d₂, `B` zero,
/// so the adapter starts as the identity function.
pub fn lora_init_factors(d1: usize, d2: usize, r: usize, seed: u64) -> Result<(Mat, Mat)> {
    if r == 0 {
        return Err(Error::InvalidParam {
            name: "rank",
            reason: alloc::string::String::from("must be >= 1"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = 1.0 / (d2 as f64).sqrt();
    let a = Mat::from_fn(r, d2, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    });
    let b = Mat::zeros(d1, r);
    Ok((a, b))
}

/// Frozen dense base weight plus a trainable block-circular delta.
#[derive(Debug, Clone)]
pub struct AdaptedLinear {
    base: Mat,
    delta: BlockCircularKernel,
    scale: f64,
    bias: Option<Vec<f64>>,
}

impl AdaptedLinear {
    pub fn new(
        base: Mat,
        delta: BlockCircularKernel,
        scale: f64,
        bias: Option<Vec<f64>>,
    ) -> Result<Self> {
        if base.rows() != delta.out_features() || base.cols() != delta.in_features() {
            return Err(Error::DimMismatch {
                context: "adapter delta shape",
                expected: base.rows() * base.cols(),
                got: delta.out_features() * delta.in_features(),
            });
        }
        if let Some(bias) = &bias {
            if bias.len() != base.rows() {
                return Err(Error::DimMismatch {
                    context: "adapter bias",
                    expected: base.rows(),
                    got: bias.len(),
                });
            }
        }
        if !scale.is_finite() {
            return Err(Error::NonFinite { context: "adapter scale" });
        }
        Ok(Self {
            base,
            delta,
            scale,
            bias,
        })
    }

    pub fn base(&self) -> &Mat {
        &self.base
    }

    pub fn delta(&self) -> &BlockCircularKernel {
        &self.delta
    }

    pub fn delta_mut(&mut self) -> &mut BlockCircularKernel {
        &mut self.delta
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    /// Trainable parameters: the delta kernel only.
    pub fn trainable_params(&self) -> usize {
        self.delta.param_count()
    }

    /// `W₀x + scale·Δz (+ bias)`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.base.matvec(x)?;
        let dz = self.delta.apply(x)?;
        for (zi, di) in z.iter_mut().zip(&dz) {
            *zi += self.scale * di;
        }
        if let Some(bias) = &self.bias {
            for (zi, bi) in z.iter_mut().zip(bias) {
                *zi += bi;
            }
        }
        Ok(z)
    }

    pub fn forward_batch(&self, xs: &[f64]) -> Result<Vec<f64>> {
        batch(xs, self.base.cols(), |row| self.forward(row))
    }

    /// Fold the delta into the base: `W₀ + scale·ΔW`.
    pub fn merge(&self) -> Mat {
        let mut merged = self.base.clone();
        merged
            .add_scaled(&self.delta.materialize(), self.scale)
            .expect("delta dims match base by construction");
        merged
    }
}

/// Frozen dense base weight plus trainable low-rank factors.
#[derive(Debug, Clone)]
pub struct LoraAdapter {
    base: Mat,
    /// r×d₂ down-projection.
    a: Mat,
    /// d₁×r up-projection.
    b: Mat,
}

impl LoraAdapter {
    pub fn new(base: Mat, a: Mat, b: Mat) -> Result<Self> {
        let r = a.rows();
        if r == 0 {
            return Err(Error::InvalidParam {
                name: "rank",
                reason: alloc::string::String::from("must be >= 1"),
            });
        }
        if a.cols() != base.cols() || b.rows() != base.rows() || b.cols() != r {
            return Err(Error::DimMismatch {
                context: "lora factor shape",
                expected: base.rows() * base.cols(),
                got: b.rows() * a.cols(),
            });
        }
        Ok(Self { base, a, b })
    }

    pub fn base(&self) -> &Mat {
        &self.base
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    pub fn factor_a(&self) -> &Mat {
        &self.a
    }

    pub fn factor_b(&self) -> &Mat {
        &self.b
    }

    /// Trainable parameters r·(d₁ + d₂).
    pub fn trainable_params(&self) -> usize {
        self.rank() * (self.base.rows() + self.base.cols())
    }

    /// `W₀x + B(Ax)`, evaluated factor-wise (the product BA is never
    /// materialized in the forward path).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.base.matvec(x)?;
        let ax = self.a.matvec(x)?;
        let bax = self.b.matvec(&ax)?;
        for (zi, di) in z.iter_mut().zip(&bax) {
            *zi += di;
        }
        Ok(z)
    }

    pub fn forward_batch(&self, xs: &[f64]) -> Result<Vec<f64>> {
        batch(xs, self.base.cols(), |row| self.forward(row))
    }

    /// `W₀ + BA` as a dense matrix.
    pub fn merge(&self) -> Mat {
        let mut merged = self.base.clone();
        let ba = self.b.matmul(&self.a).expect("factor dims are validated");
        merged.add_scaled(&ba, 1.0).expect("dims match");
        merged
    }
}
