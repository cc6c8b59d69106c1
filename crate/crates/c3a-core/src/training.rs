//! Desk-scale training harness for the synthetic expressiveness
//! experiment: 8 Gaussian clusters on a circle, classified by a 3-layer
//! MLP (input → hidden → hidden → 8 classes) whose middle layer is
//! swappable between a dense matrix, a low-rank pair, and a
//! block-circular kernel. Backpropagation is written out by hand; the
//! middle-layer gradients route through the operator grad functions.
//!
//! The first and last layers are ordinary trainable weights — only the
//! middle layer varies between arms, and in the low-rank / circular arms
//! it has no frozen base (the parameterization itself is under test).

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::block::{param_count, BlockCircularKernel};
use crate::error::{Error, Result};
use crate::linalg::Mat;

pub const NUM_CLUSTERS: usize = 8;
pub const POINTS_PER_CLUSTER: usize = 30;
pub const INPUT_DIM: usize = 2;

/// 8 Gaussian clusters equally spaced on a circle, 30 samples each.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub centers: [[f64; 2]; NUM_CLUSTERS],
    pub seed: u64,
    pub sigma: f64,
    pub radius: f64,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points flattened row-major (n × 2).
    pub fn flat_points(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| p.iter().copied()).collect()
    }
}

/// Cluster centers at angles 2πk/8 on a circle of the given radius, then
/// 30 i.i.d. N(center, σ²I) draws per cluster. Deterministic in `seed`.
/// σ = 0 collapses every sample onto its center.
pub fn gen_synthetic(seed: u64, sigma: f64, radius: f64) -> Result<SyntheticDataset> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParam {
            name: "sigma",
            reason: alloc::format!("must be finite and >= 0, got {sigma}"),
        });
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParam {
            name: "radius",
            reason: alloc::format!("must be finite and > 0, got {radius}"),
        });
    }
    let mut centers = [[0.0; 2]; NUM_CLUSTERS];
    for (k, c) in centers.iter_mut().enumerate() {
        let angle = core::f64::consts::TAU * k as f64 / NUM_CLUSTERS as f64;
        *c = [radius * angle.cos(), radius * angle.sin()];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(NUM_CLUSTERS * POINTS_PER_CLUSTER);
    let mut labels = Vec::with_capacity(NUM_CLUSTERS * POINTS_PER_CLUSTER);
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..POINTS_PER_CLUSTER {
            let zx: f64 = StandardNormal.sample(&mut rng);
            let zy: f64 = StandardNormal.sample(&mut rng);
            points.push([c[0] + sigma * zx, c[1] + sigma * zy]);
            labels.push(k);
        }
    }
    Ok(SyntheticDataset {
        points,
        labels,
        centers,
        seed,
        sigma,
        radius,
    })
}

/// Which parameterization fills the hidden → hidden slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiddleKind {
    Dense,
    Lora { rank: usize },
    C3a { block_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    AdamW {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        weight_decay: f64,
    },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden_dim: usize,
    pub middle: MiddleKind,
    pub epochs: usize,
    /// 0 means full-batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            middle: MiddleKind::Dense,
            epochs: 300,
            batch_size: 0,
            learning_rate: 1e-2,
            optimizer: OptimizerKind::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// Loss/accuracy curve plus the trained middle-layer parameters.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub curve: Vec<EpochStats>,
    pub middle: MiddleLayer,
    pub middle_params: usize,
}

impl TrainRun {
    pub fn final_accuracy(&self) -> f64 {
        self.curve.last().map_or(0.0, |e| e.accuracy)
    }

    pub fn final_loss(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |e| e.loss)
    }
}

/// The swappable hidden → hidden layer.
#[derive(Debug, Clone)]
pub enum MiddleLayer {
    Dense(Mat),
    Lora { a: Mat, b: Mat },
    C3a(BlockCircularKernel),
}

enum MiddleGrads {
    Dense(Mat),
    Lora { a: Mat, b: Mat },
    C3a(Vec<f64>),
}

impl MiddleLayer {
    pub fn param_count(&self) -> usize {
        match self {
            MiddleLayer::Dense(w) => w.rows() * w.cols(),
            MiddleLayer::Lora { a, b } => a.rows() * a.cols() + b.rows() * b.cols(),
            MiddleLayer::C3a(k) => k.param_count(),
        }
    }

    pub fn kind(&self) -> MiddleKind {
        match self {
            MiddleLayer::Dense(_) => MiddleKind::Dense,
            MiddleLayer::Lora { a, .. } => MiddleKind::Lora { rank: a.rows() },
            MiddleLayer::C3a(k) => MiddleKind::C3a {
                block_size: k.block_size(),
            },
        }
    }

    fn forward_batch(&self, h: &[f64], rows: usize, dim: usize) -> Result<Vec<f64>> {
        match self {
            MiddleLayer::Dense(w) => {
                let mut out = Vec::with_capacity(rows * dim);
                for r in 0..rows {
                    out.extend(w.matvec(&h[r * dim..(r + 1) * dim])?);
                }
                Ok(out)
            }
            MiddleLayer::Lora { a, b } => {
                let mut out = Vec::with_capacity(rows * dim);
                for r in 0..rows {
                    let u = a.matvec(&h[r * dim..(r + 1) * dim])?;
                    out.extend(b.matvec(&u)?);
                }
                Ok(out)
            }
            MiddleLayer::C3a(k) => k.apply_batch(h),
        }
    }

    /// Per-sample input gradients plus parameter gradients summed over
    /// the batch.
    fn backward_batch(
        &self,
        h: &[f64],
        gout: &[f64],
        rows: usize,
        dim: usize,
    ) -> Result<(Vec<f64>, MiddleGrads)> {
        match self {
            MiddleLayer::Dense(w) => {
                let mut gh = Vec::with_capacity(rows * dim);
                let mut gw = Mat::zeros(w.rows(), w.cols());
                for r in 0..rows {
                    let hr = &h[r * dim..(r + 1) * dim];
                    let gr = &gout[r * dim..(r + 1) * dim];
                    gh.extend(w.matvec_t(gr)?);
                    gw.add_outer(gr, hr, 1.0);
                }
                Ok((gh, MiddleGrads::Dense(gw)))
            }
            MiddleLayer::Lora { a, b } => {
                let mut gh = Vec::with_capacity(rows * dim);
                let mut ga = Mat::zeros(a.rows(), a.cols());
                let mut gb = Mat::zeros(b.rows(), b.cols());
                for r in 0..rows {
                    let hr = &h[r * dim..(r + 1) * dim];
                    let gr = &gout[r * dim..(r + 1) * dim];
                    let u = a.matvec(hr)?;
                    let gu = b.matvec_t(gr)?;
                    gh.extend(a.matvec_t(&gu)?);
                    gb.add_outer(gr, &u, 1.0);
                    ga.add_outer(&gu, hr, 1.0);
                }
                Ok((gh, MiddleGrads::Lora { a: ga, b: gb }))
            }
            MiddleLayer::C3a(k) => {
                let (gh, gk) = k.grad_batch(h, gout)?;
                Ok((gh, MiddleGrads::C3a(gk)))
            }
        }
    }
}

struct Mlp {
    w1: Mat,
    b1: Vec<f64>,
    middle: MiddleLayer,
    w3: Mat,
    b3: Vec<f64>,
}

struct ForwardCache {
    h1pre: Vec<f64>,
    h1: Vec<f64>,
    h2pre: Vec<f64>,
    h2: Vec<f64>,
    probs: Vec<f64>,
    loss: f64,
    accuracy: f64,
}

struct Grads {
    w1: Mat,
    b1: Vec<f64>,
    middle: MiddleGrads,
    w3: Mat,
    b3: Vec<f64>,
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

impl Mlp {
    fn init(cfg: &MlpConfig) -> Result<Self> {
        let h = cfg.hidden_dim;
        if h == 0 {
            return Err(Error::InvalidParam {
                name: "hidden_dim",
                reason: alloc::string::String::from("must be >= 1"),
            });
        }
        // outer layers first so every middle arm sees the same draw
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let w1 = xavier(h, INPUT_DIM, &mut rng);
        let b1 = vec![0.0; h];
        let w3 = xavier(NUM_CLUSTERS, h, &mut rng);
        let b3 = vec![0.0; NUM_CLUSTERS];

        let middle_seed = cfg.seed.wrapping_add(0x9e3779b97f4a7c15);
        let middle = match cfg.middle {
            MiddleKind::Dense => {
                let mut mrng = ChaCha8Rng::seed_from_u64(middle_seed);
                MiddleLayer::Dense(xavier(h, h, &mut mrng))
            }
            MiddleKind::Lora { rank } => {
                if rank == 0 || rank > h {
                    return Err(Error::InvalidParam {
                        name: "rank",
                        reason: alloc::format!("must be in 1..={h}, got {rank}"),
                    });
                }
                // Both factors random here, unlike the adapter-type
                // convention: with no frozen base behind this layer a
                // zero up-projection zeroes the middle output, parking
                // every pre-activation on the ReLU kink with exactly
                // zero gradient — the arm would never train at all.
                let mut mrng = ChaCha8Rng::seed_from_u64(middle_seed);
                let a = xavier(rank, h, &mut mrng);
                let b = xavier(h, rank, &mut mrng);
                MiddleLayer::Lora { a, b }
            }
            MiddleKind::C3a { block_size } => {
                // validates divisibility
                param_count(h, h, block_size)?;
                let k = crate::adapters::init_kernel(
                    crate::adapters::InitStrategy::XavierUniform,
                    h,
                    h,
                    block_size,
                    middle_seed,
                )?;
                MiddleLayer::C3a(k)
            }
        };
        Ok(Self {
            w1,
            b1,
            middle,
            w3,
            b3,
        })
    }

    fn forward(&self, xs: &[f64], labels: &[usize]) -> Result<ForwardCache> {
        let rows = labels.len();
        let h = self.w1.rows();

        let mut h1pre = Vec::with_capacity(rows * h);
        for r in 0..rows {
            let mut v = self.w1.matvec(&xs[r * INPUT_DIM..(r + 1) * INPUT_DIM])?;
            for (vi, bi) in v.iter_mut().zip(&self.b1) {
                *vi += bi;
            }
            h1pre.extend(v);
        }
        let h1: Vec<f64> = h1pre.iter().map(|&v| v.max(0.0)).collect();

        let h2pre = self.middle.forward_batch(&h1, rows, h)?;
        let h2: Vec<f64> = h2pre.iter().map(|&v| v.max(0.0)).collect();

        let classes = NUM_CLUSTERS;
        let mut probs = Vec::with_capacity(rows * classes);
        let mut loss = 0.0;
        let mut correct = 0usize;
        for r in 0..rows {
            let mut logits = self.w3.matvec(&h2[r * h..(r + 1) * h])?;
            for (li, bi) in logits.iter_mut().zip(&self.b3) {
                *li += bi;
            }
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut argmax = 0;
            for (c, &l) in logits.iter().enumerate() {
                if l == max {
                    argmax = c;
                    break;
                }
            }
            if argmax == labels[r] {
                correct += 1;
            }
            let sum_exp: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
            let lse = max + sum_exp.ln();
            loss += lse - logits[labels[r]];
            probs.extend(logits.iter().map(|&l| (l - lse).exp()));
        }
        loss /= rows as f64;

        Ok(ForwardCache {
            h1pre,
            h1,
            h2pre,
            h2,
            probs,
            loss,
            accuracy: correct as f64 / rows as f64,
        })
    }

    fn backward(&self, xs: &[f64], labels: &[usize], cache: &ForwardCache) -> Result<Grads> {
        let rows = labels.len();
        let h = self.w1.rows();
        let classes = NUM_CLUSTERS;
        let inv_n = 1.0 / rows as f64;

        let mut gw3 = Mat::zeros(classes, h);
        let mut gb3 = vec![0.0; classes];
        let mut gh2 = vec![0.0; rows * h];
        for r in 0..rows {
            let mut dlogits: Vec<f64> = cache.probs[r * classes..(r + 1) * classes]
                .iter()
                .map(|&p| p * inv_n)
                .collect();
            dlogits[labels[r]] -= inv_n;
            let h2r = &cache.h2[r * h..(r + 1) * h];
            gw3.add_outer(&dlogits, h2r, 1.0);
            for (acc, d) in gb3.iter_mut().zip(&dlogits) {
                *acc += d;
            }
            let back = self.w3.matvec_t(&dlogits)?;
            gh2[r * h..(r + 1) * h].copy_from_slice(&back);
        }

        // through the second ReLU
        let gh2pre: Vec<f64> = gh2
            .iter()
            .zip(&cache.h2pre)
            .map(|(&g, &pre)| if pre > 0.0 { g } else { 0.0 })
            .collect();

        let (gh1, gmiddle) = self.middle.backward_batch(&cache.h1, &gh2pre, rows, h)?;

        // through the first ReLU
        let gh1pre: Vec<f64> = gh1
            .iter()
            .zip(&cache.h1pre)
            .map(|(&g, &pre)| if pre > 0.0 { g } else { 0.0 })
            .collect();

        let mut gw1 = Mat::zeros(h, INPUT_DIM);
        let mut gb1 = vec![0.0; h];
        for r in 0..rows {
            let gr = &gh1pre[r * h..(r + 1) * h];
            gw1.add_outer(gr, &xs[r * INPUT_DIM..(r + 1) * INPUT_DIM], 1.0);
            for (acc, g) in gb1.iter_mut().zip(gr) {
                *acc += g;
            }
        }

        Ok(Grads {
            w1: gw1,
            b1: gb1,
            middle: gmiddle,
            w3: gw3,
            b3: gb3,
        })
    }
}

struct AdamSlot {
    m: Vec<f64>,
    v: Vec<f64>,
}

struct OptState {
    slots: Vec<AdamSlot>,
    step: usize,
}

impl OptState {
    fn new(sizes: &[usize]) -> Self {
        Self {
            slots: sizes
                .iter()
                .map(|&n| AdamSlot {
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                })
                .collect(),
            step: 0,
        }
    }
}

fn step_tensor(
    params: &mut [f64],
    grads: &[f64],
    slot: &mut AdamSlot,
    step: usize,
    lr: f64,
    kind: &OptimizerKind,
) {
    match *kind {
        OptimizerKind::Sgd => {
            for (p, &g) in params.iter_mut().zip(grads) {
                *p -= lr * g;
            }
        }
        OptimizerKind::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            let bc1 = 1.0 - beta1.powi(step as i32);
            let bc2 = 1.0 - beta2.powi(step as i32);
            for (((p, &g), m), v) in params
                .iter_mut()
                .zip(grads)
                .zip(slot.m.iter_mut())
                .zip(slot.v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr * mhat / (vhat.sqrt() + epsilon);
            }
        }
        OptimizerKind::AdamW {
            beta1,
            beta2,
            epsilon,
            weight_decay,
        } => {
            let bc1 = 1.0 - beta1.powi(step as i32);
            let bc2 = 1.0 - beta2.powi(step as i32);
            for (((p, &g), m), v) in params
                .iter_mut()
                .zip(grads)
                .zip(slot.m.iter_mut())
                .zip(slot.v.iter_mut())
            {
                *p -= lr * weight_decay * *p;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr * mhat / (vhat.sqrt() + epsilon);
            }
        }
    }
}

fn apply_grads(mlp: &mut Mlp, grads: &Grads, opt: &mut OptState, lr: f64, kind: &OptimizerKind) {
    opt.step += 1;
    let t = opt.step;
    step_tensor(mlp.w1.data_mut(), grads.w1.data(), &mut opt.slots[0], t, lr, kind);
    step_tensor(&mut mlp.b1, &grads.b1, &mut opt.slots[1], t, lr, kind);
    match (&mut mlp.middle, &grads.middle) {
        (MiddleLayer::Dense(w), MiddleGrads::Dense(gw)) => {
            step_tensor(w.data_mut(), gw.data(), &mut opt.slots[2], t, lr, kind);
        }
        (MiddleLayer::Lora { a, b }, MiddleGrads::Lora { a: ga, b: gb }) => {
            step_tensor(a.data_mut(), ga.data(), &mut opt.slots[2], t, lr, kind);
            step_tensor(b.data_mut(), gb.data(), &mut opt.slots[3], t, lr, kind);
        }
        (MiddleLayer::C3a(k), MiddleGrads::C3a(gk)) => {
            step_tensor(k.weights_mut(), gk, &mut opt.slots[2], t, lr, kind);
        }
        _ => unreachable!("middle gradient variant always matches the layer"),
    }
    let (sw3, sb3) = (opt.slots.len() - 2, opt.slots.len() - 1);
    step_tensor(mlp.w3.data_mut(), grads.w3.data(), &mut opt.slots[sw3], t, lr, kind);
    step_tensor(&mut mlp.b3, &grads.b3, &mut opt.slots[sb3], t, lr, kind);
}

fn opt_slot_sizes(mlp: &Mlp) -> Vec<usize> {
    let mut sizes = vec![
        mlp.w1.rows() * mlp.w1.cols(),
        mlp.b1.len(),
    ];
    match &mlp.middle {
        MiddleLayer::Dense(w) => sizes.push(w.rows() * w.cols()),
        MiddleLayer::Lora { a, b } => {
            sizes.push(a.rows() * a.cols());
            sizes.push(b.rows() * b.cols());
        }
        MiddleLayer::C3a(k) => sizes.push(k.param_count()),
    }
    sizes.push(mlp.w3.rows() * mlp.w3.cols());
    sizes.push(mlp.b3.len());
    sizes
}

/// Train the MLP on the synthetic dataset. Deterministic in
/// `(data.seed, cfg.seed)`; the per-epoch loss is checked for
/// divergence and the full curve is returned.
pub fn train_mlp(data: &SyntheticDataset, cfg: &MlpConfig) -> Result<TrainRun> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(cfg.learning_rate > 0.0) || !cfg.learning_rate.is_finite() {
        return Err(Error::InvalidParam {
            name: "learning_rate",
            reason: alloc::format!("must be finite and > 0, got {}", cfg.learning_rate),
        });
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidParam {
            name: "epochs",
            reason: alloc::string::String::from("must be >= 1"),
        });
    }

    let n = data.len();
    let xs = data.flat_points();
    let labels = &data.labels;

    let mut mlp = Mlp::init(cfg)?;
    let mut opt = OptState::new(&opt_slot_sizes(&mlp));
    let middle_params = mlp.middle.param_count();

    let full_batch = cfg.batch_size == 0 || cfg.batch_size >= n;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x517cc1b727220a95));

    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let stats = if full_batch {
            let cache = mlp.forward(&xs, labels)?;
            if !cache.loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let grads = mlp.backward(&xs, labels, &cache)?;
            apply_grads(&mut mlp, &grads, &mut opt, cfg.learning_rate, &cfg.optimizer);
            EpochStats {
                loss: cache.loss,
                accuracy: cache.accuracy,
            }
        } else {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut shuffle_rng);
            let mut loss_sum = 0.0;
            let mut correct_sum = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let bxs: Vec<f64> = chunk
                    .iter()
                    .flat_map(|&i| xs[i * INPUT_DIM..(i + 1) * INPUT_DIM].iter().copied())
                    .collect();
                let blabels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                let cache = mlp.forward(&bxs, &blabels)?;
                if !cache.loss.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                let grads = mlp.backward(&bxs, &blabels, &cache)?;
                apply_grads(&mut mlp, &grads, &mut opt, cfg.learning_rate, &cfg.optimizer);
                loss_sum += cache.loss * chunk.len() as f64;
                correct_sum += cache.accuracy * chunk.len() as f64;
            }
            EpochStats {
                loss: loss_sum / n as f64,
                accuracy: correct_sum / n as f64,
            }
        };
        curve.push(stats);
    }

    Ok(TrainRun {
        curve,
        middle: mlp.middle,
        middle_params,
    })
}

/// Result of comparing analytic middle-layer gradients against central
/// finite differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params_checked: usize,
    pub max_abs_err: f64,
    /// Worst ratio of |analytic − numeric| to its tolerance
    /// max(1e-7, 1e-4·max(|analytic|, |numeric|)); ≤ 1 passes.
    pub worst_ratio: f64,
    pub passed: bool,
}

/// End-to-end gradient check of the loss with respect to every
/// middle-layer parameter, on a tiny network.
pub fn middle_grad_check(middle: MiddleKind, hidden_dim: usize, seed: u64) -> Result<GradCheckReport> {
    let cfg = MlpConfig {
        hidden_dim,
        middle,
        seed,
        ..MlpConfig::default()
    };
    let mut mlp = Mlp::init(&cfg)?;

    let read_params = |mlp: &Mlp| -> Vec<f64> {
        match &mlp.middle {
            MiddleLayer::Dense(w) => w.data().to_vec(),
            MiddleLayer::Lora { a, b } => {
                let mut v = a.data().to_vec();
                v.extend_from_slice(b.data());
                v
            }
            MiddleLayer::C3a(k) => k.weights().to_vec(),
        }
    };
    let write_param = |mlp: &mut Mlp, idx: usize, value: f64| match &mut mlp.middle {
        MiddleLayer::Dense(w) => w.data_mut()[idx] = value,
        MiddleLayer::Lora { a, b } => {
            let na = a.rows() * a.cols();
            if idx < na {
                a.data_mut()[idx] = value;
            } else {
                b.data_mut()[idx - na] = value;
            }
        }
        MiddleLayer::C3a(k) => k.weights_mut()[idx] = value,
    };

    // Move the middle layer to a generic point first: the standard
    // zero-initialized up-projection parks every middle pre-activation
    // exactly on the ReLU kink, where two-sided differences cannot agree
    // with any subgradient choice.
    let mut prng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x7f4a7c15));
    for idx in 0..read_params(&mlp).len() {
        let z: f64 = StandardNormal.sample(&mut prng);
        write_param(&mut mlp, idx, 0.3 * z);
    }

    // a couple of samples per cluster keeps the check fast
    let data = gen_synthetic(seed.wrapping_add(1), 0.35, 4.0)?;
    let take: Vec<usize> = (0..NUM_CLUSTERS)
        .flat_map(|k| [k * POINTS_PER_CLUSTER, k * POINTS_PER_CLUSTER + 1])
        .collect();
    let xs: Vec<f64> = take
        .iter()
        .flat_map(|&i| data.points[i].iter().copied())
        .collect();
    let labels: Vec<usize> = take.iter().map(|&i| data.labels[i]).collect();

    let cache = mlp.forward(&xs, &labels)?;
    let grads = mlp.backward(&xs, &labels, &cache)?;
    let analytic: Vec<f64> = match &grads.middle {
        MiddleGrads::Dense(w) => w.data().to_vec(),
        MiddleGrads::Lora { a, b } => {
            let mut v = a.data().to_vec();
            v.extend_from_slice(b.data());
            v
        }
        MiddleGrads::C3a(gk) => gk.clone(),
    };

    let theta = read_params(&mlp);
    let h = 1e-5;
    let mut max_abs_err = 0.0_f64;
    let mut worst_ratio = 0.0_f64;
    for (idx, &t0) in theta.iter().enumerate() {
        write_param(&mut mlp, idx, t0 + h);
        let lp = mlp.forward(&xs, &labels)?.loss;
        write_param(&mut mlp, idx, t0 - h);
        let lm = mlp.forward(&xs, &labels)?.loss;
        write_param(&mut mlp, idx, t0);
        let numeric = (lp - lm) / (2.0 * h);
        let err = (analytic[idx] - numeric).abs();
        let tol = 1e-7_f64.max(1e-4 * analytic[idx].abs().max(numeric.abs()));
        max_abs_err = max_abs_err.max(err);
        worst_ratio = worst_ratio.max(err / tol);
    }

    Ok(GradCheckReport {
        params_checked: theta.len(),
        max_abs_err,
        worst_ratio,
        passed: worst_ratio <= 1.0,
    })
}
