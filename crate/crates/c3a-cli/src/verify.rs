//! Self-check suites behind `c3a verify`: oracle equivalence, gradient
//! checks, rank agreement, materialization fast paths, and the adapter
//! identities, each reported as one pass/fail row.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use c3a_core::adapters::{init_kernel, AdaptedLinear, InitStrategy};
use c3a_core::training::{middle_grad_check, MiddleKind};
use c3a_core::{block, circulant, spectral, BlockCircularKernel, CircularKernel, Complex64, Mat};

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub max_err: f64,
    /// Description of the worst (or first failing) case.
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Extra block shapes (d1, d2, b) on top of the built-in set.
    pub sizes: Vec<(usize, usize, usize)>,
    pub seed: u64,
    /// Overrides every suite's error tolerance when set.
    pub tolerance: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            sizes: Vec::new(),
            seed: 42,
            tolerance: None,
        }
    }
}

const CIRC_DIMS: &[usize] = &[1, 2, 3, 5, 8, 16, 31, 64, 128, 768];
const BLOCK_SHAPES: &[(usize, usize, usize)] = &[
    (4, 4, 2),
    (6, 4, 2),
    (8, 4, 4),
    (12, 8, 4),
    (768, 768, 128),
];

struct Tracker {
    cases: usize,
    max_err: f64,
    detail: String,
}

impl Tracker {
    fn new() -> Self {
        Self {
            cases: 0,
            max_err: 0.0,
            detail: String::new(),
        }
    }

    fn record(&mut self, err: f64, detail: impl FnOnce() -> String) {
        self.cases += 1;
        if err > self.max_err {
            self.max_err = err;
            self.detail = detail();
        }
    }

    fn finish(self, name: &'static str, tol: f64) -> SuiteResult {
        SuiteResult {
            name,
            passed: self.max_err <= tol,
            cases: self.cases,
            max_err: self.max_err,
            detail: self.detail,
        }
    }
}

fn seeded(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

fn block_shapes(cfg: &VerifyConfig) -> Vec<(usize, usize, usize)> {
    let mut shapes = BLOCK_SHAPES.to_vec();
    for &extra in &cfg.sizes {
        if !shapes.contains(&extra) {
            shapes.push(extra);
        }
    }
    shapes
}

/// DFT against the O(n²) direct-summation oracle.
fn suite_dft_oracle(cfg: &VerifyConfig) -> SuiteResult {
    let tol = cfg.tolerance.unwrap_or(1e-9);
    let mut t = Tracker::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lengths: Vec<usize> = (1..=64).collect();
    lengths.extend([100, 128, 255, 768]);
    for n in lengths {
        let v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let fast = spectral::dft(&v).expect("non-empty");
        let mut max_mag = 0.0_f64;
        let mut err = 0.0_f64;
        for k in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &x) in v.iter().enumerate() {
                let angle =
                    -core::f64::consts::TAU * ((j * k) % n) as f64 / n as f64;
                acc += x * Complex64::new(angle.cos(), angle.sin());
            }
            max_mag = max_mag.max(acc.norm());
            err = err.max((fast[k] - acc).norm());
        }
        t.record(err / max_mag.max(1.0), || format!("n={n} seed={}", cfg.seed));
    }
    t.finish("dft-oracle", tol)
}

/// Fast circulant apply against the materialized oracle, plus the
/// imaginary-residue bound of the spectral product.
fn suite_circ_oracle(cfg: &VerifyConfig) -> SuiteResult {
    let tol = cfg.tolerance.unwrap_or(1e-9);
    let mut t = Tracker::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    for &d in CIRC_DIMS {
        let k = CircularKernel::new(seeded(&mut rng, d)).expect("valid kernel");
        let x = seeded(&mut rng, d);
        let fast = k.apply(&x).expect("dims match");
        let slow = k.apply_naive(&x).expect("dims match");
        let scale = 1.0 + max_abs(&slow);
        t.record(max_abs_diff(&fast, &slow) / scale, || {
            format!("apply d={d} seed={}", cfg.seed)
        });

        // imaginary residue before taking the real part
        let wf = k.eigenvalues().expect("non-empty");
        let xf = spectral::idft_real(&x).expect("non-empty");
        let prod: Vec<Complex64> = wf.iter().zip(&xf).map(|(&a, &b)| a * b).collect();
        let zf = spectral::dft(&prod).expect("non-empty");
        let max_im = zf.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        t.record(max_im / scale, || format!("imag residue d={d}"));
    }
    t.finish("circ-oracle", tol)
}

/// The swap identity of the circulant layout: C(w)x equals C(x)w after a
/// cyclic reversal of the output, and circulant matrices commute as a
/// product (they share the Fourier eigenbasis).
fn suite_commutativity(cfg: &VerifyConfig) -> SuiteResult {
    let tol = cfg.tolerance.unwrap_or(1e-10);
    let mut t = Tracker::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    for &d in CIRC_DIMS {
        let w = seeded(&mut rng, d);
        let x = seeded(&mut rng, d);
        let kw = CircularKernel::new(w.clone()).expect("valid");
        let kx = CircularKernel::new(x.clone()).expect("valid");
        let wx = kw.apply(&x).expect("dims");
        let xw = kx.apply(&w).expect("dims");
        let mut err = 0.0_f64;
        for i in 0..d {
            err = err.max((wx[i] - xw[(d - i) % d]).abs());
        }
        t.record(err, || format!("swap identity d={d} seed={}", cfg.seed));

        if d <= 64 {
            let ab = kw.materialize().matmul(&kx.materialize()).expect("square");
            let ba = kx.materialize().matmul(&kw.materialize()).expect("square");
            t.record(max_abs_diff(ab.data(), ba.data()), || {
                format!("matrix product d={d}")
            });
        }
    }
    t.finish("commutativity", tol)
}

/// Circulant gradients against central finite differences and the
/// adjoint identity ⟨g, C(w)x⟩ = ⟨C(w)ᵀg, x⟩.
fn suite_circ_gradcheck(cfg: &VerifyConfig) -> SuiteResult {
    // ratio of |analytic - numeric| to max(1e-7, 1e-4 * magnitude)
    let tol = cfg.tolerance.map(|t| t / 1e-4).unwrap_or(1.0);
    let mut t = Tracker::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(3));
    let dims = [2usize, 3, 5, 8, 13, 16, 25, 31, 48, 64];
    for (case, &d) in dims.iter().cycle().take(24).enumerate() {
        let k = CircularKernel::new(seeded(&mut rng, d)).expect("valid");
        let x = seeded(&mut rng, d);
        let g = seeded(&mut rng, d);
        let (gx, gw) = k.grad(&x, &g).expect("dims");

        let loss = |w: &[f64], x: &[f64]| -> f64 {
            CircularKernel::new(w.to_vec())
                .expect("valid")
                .apply_naive(x)
                .expect("dims")
                .iter()
                .zip(&g)
                .map(|(a, b)| a * b)
                .sum()
        };
        let h = 1e-5;
        for i in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss(k.weights(), &xp) - loss(k.weights(), &xm)) / (2.0 * h);
            let bound = 1e-7_f64.max(1e-4 * gx[i].abs().max(fd.abs()));
            t.record((gx[i] - fd).abs() / bound, || {
                format!("gx case={case} d={d} i={i}")
            });

            let mut wp = k.weights().to_vec();
            let mut wm = k.weights().to_vec();
            wp[i] += h;
            wm[i] -= h;
            let fd = (loss(&wp, &x) - loss(&wm, &x)) / (2.0 * h);
            let bound = 1e-7_f64.max(1e-4 * gw[i].abs().max(fd.abs()));
            t.record((gw[i] - fd).abs() / bound, || {
                format!("gw case={case} d={d} i={i}")
            });
        }

        // adjoint identity, as a ratio against its 1e-10 relative bound
        let z = k.apply(&x).expect("dims");
        let lhs: f64 = g.iter().zip(&z).map(|(a, b)| a * b).sum();
        let rhs: f64 = gx.iter().zip(&x).map(|(a, b)| a * b).sum();
        let ratio = (lhs - rhs).abs() / (1e-10 * (1.0 + lhs.abs()));
        t.record(ratio, || format!("adjoint case={case} d={d}"));
    }
    t.finish("circ-gradcheck", tol)
}

/// Block apply: frequency-domain path against the summed circulant
/// oracle and the materialized matrix.
fn suite_block_oracle(cfg: &VerifyConfig) -> SuiteResult {
    let tol = cfg.tolerance.unwrap_or(1e-9);
    let mut t = Tracker::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(4));
    for &(d1, d2, b) in &block_shapes(cfg) {
        let count = block::param_count(d1, d2, b).expect("valid shape");
        let k = BlockCircularKernel::new(d1, d2, b, seeded(&mut rng, count)).expect("valid");
        let x = seeded(&mut rng, d2);
        let fast = k.apply(&x).expect("dims");
        let naive = k.apply_naive(&x).expect("dims");
        let dense = k.materialize().matvec(&x).expect("dims");
        let scale = 1.0 + max_abs(&naive);
        t.record(max_abs_diff(&fast, &naive) / scale, || {
            format!("vs naive {d1}x{d2} b={b}")
        });
        t.record(max_abs_diff(&fast, &dense) / scale, || {
            format!("vs materialized {d1}x{d2} b={b}")
        });
    }
    t.finish("block-oracle", tol)
}

/// Block gradients against central finite differences.
fn suite_block_gradcheck(cfg: &VerifyConfig) -> SuiteResult {
    let tol = cfg.tolerance.map(|t| t / 1e-4).unwrap_or(1.0);
    let mut t = Tracker::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(5));
    let mut shapes: Vec<(usize, usize, usize)> = vec![(6, 4, 2), (8, 8, 4), (12, 8, 4)];
    for &extra in &cfg.sizes {
        if extra.0 * extra.1 <= 4096 && !shapes.contains(&extra) {
            shapes.push(extra);
        }
    }
    let total = shapes.len().max(1);
    for (case, &(d1, d2, b)) in shapes.iter().cycle().take(total.max(20)).enumerate() {
        let count = block::param_count(d1, d2, b).expect("valid shape");
        let k = BlockCircularKernel::new(d1, d2, b, seeded(&mut rng, count)).expect("valid");
        let x = seeded(&mut rng, d2);
        let g = seeded(&mut rng, d1);
        let (gx, gk) = k.grad(&x, &g).expect("dims");

        let loss = |kern: &BlockCircularKernel, x: &[f64]| -> f64 {
            kern.apply_naive(x)
                .expect("dims")
                .iter()
                .zip(&g)
                .map(|(a, b)| a * b)
                .sum()
        };
        let h = 1e-5;
        for i in 0..d2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss(&k, &xp) - loss(&k, &xm)) / (2.0 * h);
            let bound = 1e-7_f64.max(1e-4 * gx[i].abs().max(fd.abs()));
            t.record((gx[i] - fd).abs() / bound, || {
                format!("gx case={case} {d1}x{d2} b={b} i={i}")
            });
        }
        for p in 0..k.param_count() {
            let mut kp = k.clone();
            let mut km = k.clone();
            kp.weights_mut()[p] += h;
            km.weights_mut()[p] -= h;
            let fd = (loss(&kp, &x) - loss(&km, &x)) / (2.0 * h);
            let bound = 1e-7_f64.max(1e-4 * gk[p].abs().max(fd.abs()));
            t.record((gk[p] - fd).abs() / bound, || {
                format!("gk case={case} {d1}x{d2} b={b} p={p}")
            });
        }
    }
    t.finish("block-gradcheck", tol)
}

/// The three rank routes (exact gcd, spectral threshold, row reduction)
/// on random small integer kernels; any disagreement fails the suite.
fn suite_rank_agreement(cfg: &VerifyConfig) -> SuiteResult {
    let mut t = Tracker::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(6));
    for _ in 0..1000 {
        let d = rng.random_range(1..=16usize);
        let ints: Vec<i64> = (0..d).map(|_| rng.random_range(-2..=2i64)).collect();
        let floats: Vec<f64> = ints.iter().map(|&v| v as f64).collect();
        let k = CircularKernel::new(floats).expect("valid");
        let algebraic = circulant::rank_gcd(&ints);
        let spectral_rank = k.rank_spectral(1e-9).expect("tau valid");
        let row_reduced = k.materialize().rank(1e-8);
        let disagree = usize::from(algebraic != spectral_rank || algebraic != row_reduced);
        t.record(disagree as f64, || {
            format!(
                "kernel {ints:?}: gcd={algebraic} spectral={spectral_rank} rowred={row_reduced}"
            )
        });
    }
    t.finish("rank-agreement", 0.0)
}

/// Materialization fast paths (forward pass on the identity) against
/// direct assembly, circulant and block.
fn suite_materialize(cfg: &VerifyConfig) -> SuiteResult {
    let tol = cfg.tolerance.unwrap_or(1e-10);
    let mut t = Tracker::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(7));
    for &d in &[1usize, 3, 8, 16, 31] {
        let k = CircularKernel::new(seeded(&mut rng, d)).expect("valid");
        let direct = k.materialize();
        let fast = k.materialize_fast().expect("dims");
        t.record(max_abs_diff(direct.data(), fast.data()), || {
            format!("circ d={d}")
        });
    }
    for &(d1, d2, b) in &block_shapes(cfg) {
        if d1 * d2 > 1024 * 1024 {
            continue;
        }
        let count = block::param_count(d1, d2, b).expect("valid shape");
        let k = BlockCircularKernel::new(d1, d2, b, seeded(&mut rng, count)).expect("valid");
        let direct = k.materialize();
        let fast = k.materialize_fast().expect("dims");
        t.record(max_abs_diff(direct.data(), fast.data()), || {
            format!("block {d1}x{d2} b={b}")
        });
    }
    t.finish("materialize-fastpath", tol)
}

/// Σσ² = ‖C(w)‖_F² (the spectrum really is the singular spectrum).
fn suite_spectrum(cfg: &VerifyConfig) -> SuiteResult {
    let tol = cfg.tolerance.unwrap_or(1e-9);
    let mut t = Tracker::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(8));
    for &d in &[1usize, 2, 7, 16, 33, 64, 100, 128] {
        let k = CircularKernel::new(seeded(&mut rng, d)).expect("valid");
        let sum_sq: f64 = k.singular_spectrum().iter().map(|s| s * s).sum();
        let fro = k.materialize().frobenius_sq();
        t.record((sum_sq - fro).abs() / fro.max(1.0), || format!("d={d}"));
    }
    t.finish("spectrum-frobenius", tol)
}

/// Zero-initialized adapters reproduce the base map bit-for-bit, and the
/// merged dense layer matches the adapter forward.
fn suite_adapter_identity(cfg: &VerifyConfig) -> SuiteResult {
    let tol = cfg.tolerance.unwrap_or(1e-9);
    let mut t = Tracker::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(9));
    let (d1, d2, b) = (8, 4, 2);
    let base = Mat::from_vec(d1, d2, seeded(&mut rng, d1 * d2)).expect("length");

    let zero = init_kernel(InitStrategy::Zero, d1, d2, b, cfg.seed).expect("valid");
    let layer = AdaptedLinear::new(base.clone(), zero, 1.0, None).expect("dims");
    for probe in 0..100 {
        let x = seeded(&mut rng, d2);
        let z = layer.forward(&x).expect("dims");
        let base_z = base.matvec(&x).expect("dims");
        let exact = z == base_z;
        t.record(if exact { 0.0 } else { 1.0 }, || {
            format!("zero-init probe {probe} not bitwise equal")
        });
    }

    let delta = init_kernel(InitStrategy::XavierUniform, d1, d2, b, cfg.seed).expect("valid");
    let layer = AdaptedLinear::new(base, delta, 1.0, None).expect("dims");
    let merged = layer.merge();
    for probe in 0..100 {
        let x = seeded(&mut rng, d2);
        let via_layer = layer.forward(&x).expect("dims");
        let via_merged = merged.matvec(&x).expect("dims");
        let scale = 1.0 + max_abs(&via_layer);
        t.record(max_abs_diff(&via_layer, &via_merged) / scale, || {
            format!("merge probe {probe}")
        });
    }
    t.finish("adapter-identity", tol)
}

/// End-to-end MLP gradient checks for the three middle-layer arms.
fn suite_mlp_gradcheck(cfg: &VerifyConfig) -> SuiteResult {
    let tol = cfg.tolerance.map(|t| t / 1e-4).unwrap_or(1.0);
    let mut t = Tracker::new();
    for (kind, label) in [
        (MiddleKind::Dense, "dense"),
        (MiddleKind::Lora { rank: 2 }, "lora"),
        (MiddleKind::C3a { block_size: 4 }, "c3a"),
    ] {
        let report = middle_grad_check(kind, 8, cfg.seed).expect("valid config");
        t.record(report.worst_ratio, || {
            format!("{label}: {} params", report.params_checked)
        });
    }
    t.finish("mlp-gradcheck", tol)
}

/// Run every suite.
pub fn run_all(cfg: &VerifyConfig) -> Vec<SuiteResult> {
    vec![
        suite_dft_oracle(cfg),
        suite_circ_oracle(cfg),
        suite_commutativity(cfg),
        suite_circ_gradcheck(cfg),
        suite_block_oracle(cfg),
        suite_block_gradcheck(cfg),
        suite_rank_agreement(cfg),
        suite_materialize(cfg),
        suite_spectrum(cfg),
        suite_adapter_identity(cfg),
        suite_mlp_gradcheck(cfg),
    ]
}

/// Render the suite table; one row per suite.
pub fn render_table(results: &[SuiteResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<22} {:>6} {:>7} {:>12}  detail", "suite", "status", "cases", "max_err");
    for r in results {
        let _ = writeln!(
            out,
            "{:<22} {:>6} {:>7} {:>12.3e}  {}",
            r.name,
            if r.passed { "pass" } else { "FAIL" },
            r.cases,
            r.max_err,
            if r.passed { "" } else { r.detail.as_str() }
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suites_all_pass() {
        let results = run_all(&VerifyConfig::default());
        assert!(results.len() >= 6);
        for r in &results {
            assert!(r.passed, "{} failed: max_err {:.3e} ({})", r.name, r.max_err, r.detail);
        }
    }

    #[test]
    fn unreachable_tolerance_fails() {
        let cfg = VerifyConfig {
            tolerance: Some(1e-30),
            ..VerifyConfig::default()
        };
        let results = run_all(&cfg);
        assert!(results.iter().any(|r| !r.passed));
    }

    #[test]
    fn extra_sizes_are_exercised() {
        let cfg = VerifyConfig {
            sizes: vec![(6, 4, 2), (10, 6, 2)],
            ..VerifyConfig::default()
        };
        let results = run_all(&cfg);
        let block = results.iter().find(|r| r.name == "block-oracle").unwrap();
        // built-in five shapes plus one new one, two records per shape
        assert_eq!(block.cases, 12);
        assert!(block.passed);
    }
}
