//! Wall-clock microbenchmarks for the dense, low-rank and block-circular
//! apply/grad paths, with exact parameter accounting and measured
//! transient allocation.
//!
//! Each case is timed as median-of-repeats after warmup; inputs are
//! seeded so re-runs measure the same work. `threads` splits the batch
//! across worker threads (the spawn cost is part of the measured op).

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use c3a_core::{block, BlockCircularKernel, Mat};

use crate::alloc_track;

const INPUT_SEED: u64 = 0x5eed_bc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchOp {
    DenseApply,
    LoraApply { rank: usize },
    C3aApply { block_size: usize },
    C3aGrad { block_size: usize },
    LoraGrad { rank: usize },
}

impl BenchOp {
    pub fn label(&self) -> &'static str {
        match self {
            BenchOp::DenseApply => "dense_apply",
            BenchOp::LoraApply { .. } => "lora_apply",
            BenchOp::C3aApply { .. } => "c3a_apply",
            BenchOp::C3aGrad { .. } => "c3a_grad",
            BenchOp::LoraGrad { .. } => "lora_grad",
        }
    }

    /// The `b` or `r` hyperparameter; 0 for the dense baseline.
    pub fn b_or_r(&self) -> usize {
        match *self {
            BenchOp::DenseApply => 0,
            BenchOp::LoraApply { rank } | BenchOp::LoraGrad { rank } => rank,
            BenchOp::C3aApply { block_size } | BenchOp::C3aGrad { block_size } => block_size,
        }
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self, d1: usize, d2: usize) -> Result<usize> {
        Ok(match *self {
            BenchOp::DenseApply => d1 * d2,
            BenchOp::LoraApply { rank } | BenchOp::LoraGrad { rank } => {
                if rank == 0 {
                    bail!("rank must be >= 1");
                }
                rank * (d1 + d2)
            }
            BenchOp::C3aApply { block_size } | BenchOp::C3aGrad { block_size } => {
                block::param_count(d1, d2, block_size)
                    .with_context(|| format!("case {}x{}", d1, d2))?
            }
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BenchCase {
    pub op: BenchOp,
    pub d1: usize,
    pub d2: usize,
    pub batch: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub threads: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub op: String,
    pub d1: usize,
    pub d2: usize,
    pub b_or_r: usize,
    pub batch: usize,
    pub threads: usize,
    pub params: usize,
    pub aux_bytes: usize,
    pub ns_median: u64,
    pub ns_iqr: u64,
    /// Set when the median is too close to timer resolution to trust.
    #[serde(skip)]
    pub timer_flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub cases: Vec<CaseResult>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("op,d1,d2,b_or_r,batch,threads,params,aux_bytes,ns_median,ns_iqr\n");
        for c in &self.cases {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                c.op,
                c.d1,
                c.d2,
                c.b_or_r,
                c.batch,
                c.threads,
                c.params,
                c.aux_bytes,
                c.ns_median,
                c.ns_iqr
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn seeded_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Apply `f` to each row of `xs`, splitting rows across `threads`
/// workers. Per-row outputs are concatenated in row order.
fn par_rows<F>(xs: &[f64], dim: usize, threads: usize, f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let rows = xs.len() / dim;
    if threads <= 1 || rows <= 1 {
        let mut out = Vec::new();
        for r in 0..rows {
            out.extend(f(&xs[r * dim..(r + 1) * dim]));
        }
        return out;
    }
    let chunk = rows.div_ceil(threads);
    let mut parts: Vec<Vec<f64>> = Vec::new();
    std::thread::scope(|s| {
        let mut handles = Vec::new();
        for t in 0..threads {
            let lo = t * chunk;
            if lo >= rows {
                break;
            }
            let hi = ((t + 1) * chunk).min(rows);
            let slice = &xs[lo * dim..hi * dim];
            let f = &f;
            handles.push(s.spawn(move || {
                let mut out = Vec::new();
                for r in 0..(hi - lo) {
                    out.extend(f(&slice[r * dim..(r + 1) * dim]));
                }
                out
            }));
        }
        for h in handles {
            parts.push(h.join().expect("bench worker panicked"));
        }
    });
    parts.concat()
}

/// One prepared case: the closure runs the full batched operation.
struct Prepared {
    run: Box<dyn Fn() + Sync>,
}

fn prepare(case: &BenchCase) -> Result<Prepared> {
    let BenchCase {
        op,
        d1,
        d2,
        batch,
        threads,
        ..
    } = *case;
    let mut rng = ChaCha8Rng::seed_from_u64(INPUT_SEED ^ (d1 as u64) << 20 ^ d2 as u64);
    let xs = seeded_vec(&mut rng, batch * d2);

    let run: Box<dyn Fn() + Sync> = match op {
        BenchOp::DenseApply => {
            let w = Mat::from_vec(d1, d2, seeded_vec(&mut rng, d1 * d2))?;
            Box::new(move |  | {
                let out = par_rows(&xs, d2, threads, |row| w.matvec(row).expect("dims match"));
                black_box(out);
            })
        }
        BenchOp::LoraApply { rank } => {
            let a = Mat::from_vec(rank, d2, seeded_vec(&mut rng, rank * d2))?;
            let b = Mat::from_vec(d1, rank, seeded_vec(&mut rng, d1 * rank))?;
            Box::new(move || {
                let out = par_rows(&xs, d2, threads, |row| {
                    let u = a.matvec(row).expect("dims match");
                    b.matvec(&u).expect("dims match")
                });
                black_box(out);
            })
        }
        BenchOp::C3aApply { block_size } => {
            let count = block::param_count(d1, d2, block_size)?;
            let k = BlockCircularKernel::new(d1, d2, block_size, seeded_vec(&mut rng, count))?;
            Box::new(move || {
                if threads <= 1 {
                    black_box(k.apply_batch(&xs).expect("dims match"));
                } else {
                    let out = par_rows(&xs, d2, threads, |row| k.apply(row).expect("dims match"));
                    black_box(out);
                }
            })
        }
        BenchOp::C3aGrad { block_size } => {
            let count = block::param_count(d1, d2, block_size)?;
            let k = BlockCircularKernel::new(d1, d2, block_size, seeded_vec(&mut rng, count))?;
            let gs = seeded_vec(&mut rng, batch * d1);
            Box::new(move || {
                if threads <= 1 {
                    black_box(k.grad_batch(&xs, &gs).expect("dims match"));
                } else {
                    // split the batch; partial kernel grads summed in
                    // thread order
                    let chunk_rows = batch.div_ceil(threads);
                    let mut parts = Vec::new();
                    std::thread::scope(|s| {
                        let mut handles = Vec::new();
                        for t in 0..threads {
                            let lo = t * chunk_rows;
                            if lo >= batch {
                                break;
                            }
                            let hi = ((t + 1) * chunk_rows).min(batch);
                            let xs = &xs[lo * d2..hi * d2];
                            let gs = &gs[lo * d1..hi * d1];
                            let k = &k;
                            handles.push(
                                s.spawn(move || k.grad_batch(xs, gs).expect("dims match")),
                            );
                        }
                        for h in handles {
                            parts.push(h.join().expect("bench worker panicked"));
                        }
                    });
                    let mut gk = vec![0.0; k.param_count()];
                    for (_, part) in &parts {
                        for (acc, v) in gk.iter_mut().zip(part) {
                            *acc += v;
                        }
                    }
                    black_box(gk);
                }
            })
        }
        BenchOp::LoraGrad { rank } => {
            let a = Mat::from_vec(rank, d2, seeded_vec(&mut rng, rank * d2))?;
            let b = Mat::from_vec(d1, rank, seeded_vec(&mut rng, d1 * rank))?;
            let gs = seeded_vec(&mut rng, batch * d1);
            Box::new(move || {
                let mut ga = Mat::zeros(rank, d2);
                let mut gb = Mat::zeros(d1, rank);
                let mut gx = Vec::with_capacity(batch * d2);
                for r in 0..batch {
                    let x = &xs[r * d2..(r + 1) * d2];
                    let g = &gs[r * d1..(r + 1) * d1];
                    let u = a.matvec(x).expect("dims match");
                    let gu = b.matvec_t(g).expect("dims match");
                    gx.extend(a.matvec_t(&gu).expect("dims match"));
                    gb.add_outer(g, &u, 1.0);
                    ga.add_outer(&gu, x, 1.0);
                }
                black_box((ga, gb, gx));
            })
        }
    };
    Ok(Prepared { run })
}

/// Run every case: warmup, one instrumented pass for the allocation
/// figure, then `repeats` timed passes reported as median and IQR.
pub fn run_bench(cases: &[BenchCase]) -> Result<BenchReport> {
    let mut results = Vec::with_capacity(cases.len());
    for case in cases {
        if case.repeats < 3 {
            bail!("repeats must be >= 3, got {}", case.repeats);
        }
        if case.warmup < 1 {
            bail!("warmup must be >= 1, got {}", case.warmup);
        }
        if case.batch == 0 || case.threads == 0 {
            bail!("batch and threads must be >= 1");
        }
        let params = case.op.param_count(case.d1, case.d2)?;
        let prepared = prepare(case)?;

        for _ in 0..case.warmup {
            (prepared.run)();
        }

        let baseline = alloc_track::reset_peak();
        (prepared.run)();
        let aux_bytes = alloc_track::peak_bytes().saturating_sub(baseline);

        let mut samples: Vec<u64> = (0..case.repeats)
            .map(|_| {
                let t0 = Instant::now();
                (prepared.run)();
                t0.elapsed().as_nanos() as u64
            })
            .collect();
        samples.sort_unstable();
        let ns_median = samples[samples.len() / 2];
        let ns_iqr = samples[(3 * samples.len()) / 4] - samples[samples.len() / 4];

        results.push(CaseResult {
            op: case.op.label().to_string(),
            d1: case.d1,
            d2: case.d2,
            b_or_r: case.op.b_or_r(),
            batch: case.batch,
            threads: case.threads,
            params,
            aux_bytes,
            ns_median,
            ns_iqr,
            timer_flagged: ns_median < 1_000,
        });
    }
    Ok(BenchReport { cases: results })
}

/// Dimension/block/rank grid expanded into a case list.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    /// Square operator sizes d1 = d2 = d.
    pub dims: Vec<usize>,
    pub blocks: Vec<usize>,
    pub ranks: Vec<usize>,
    pub include_dense: bool,
    pub include_grad: bool,
    pub batch: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub threads: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            dims: vec![256, 512, 1024, 2048],
            blocks: vec![64],
            ranks: vec![8],
            include_dense: true,
            include_grad: false,
            batch: 16,
            repeats: 9,
            warmup: 2,
            threads: 1,
        }
    }
}

impl SweepGrid {
    pub fn expand(&self) -> Result<Vec<BenchCase>> {
        let mut cases = Vec::new();
        let mk = |op: BenchOp, d: usize| BenchCase {
            op,
            d1: d,
            d2: d,
            batch: self.batch,
            repeats: self.repeats,
            warmup: self.warmup,
            threads: self.threads,
        };
        for &d in &self.dims {
            for &b in &self.blocks {
                cases.push(mk(BenchOp::C3aApply { block_size: b }, d));
                if self.include_grad {
                    cases.push(mk(BenchOp::C3aGrad { block_size: b }, d));
                }
            }
            for &r in &self.ranks {
                cases.push(mk(BenchOp::LoraApply { rank: r }, d));
                if self.include_grad {
                    cases.push(mk(BenchOp::LoraGrad { rank: r }, d));
                }
            }
            if self.include_dense {
                cases.push(mk(BenchOp::DenseApply, d));
            }
        }
        if cases.is_empty() {
            bail!("empty benchmark grid: no dims, or no blocks/ranks/dense selected");
        }
        Ok(cases)
    }
}

/// Expand the grid and run it.
pub fn sweep(grid: &SweepGrid) -> Result<BenchReport> {
    run_bench(&grid.expand()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_columns_match_closed_forms() {
        assert_eq!(
            BenchOp::LoraApply { rank: 8 }.param_count(768, 768).unwrap(),
            12_288
        );
        assert_eq!(
            BenchOp::C3aApply { block_size: 128 }.param_count(768, 768).unwrap(),
            4_608
        );
        assert_eq!(BenchOp::DenseApply.param_count(64, 48).unwrap(), 3_072);
        // minimal configuration: b = d gives d parameters, below LoRA r=1
        let c3a = BenchOp::C3aApply { block_size: 512 }.param_count(512, 512).unwrap();
        let lora = BenchOp::LoraApply { rank: 1 }.param_count(512, 512).unwrap();
        assert_eq!(c3a, 512);
        assert!(c3a < lora);
    }

    #[test]
    fn grid_expansion_counts() {
        let grid = SweepGrid {
            dims: vec![256, 512],
            blocks: vec![64, 128],
            ranks: vec![],
            include_dense: false,
            include_grad: false,
            ..SweepGrid::default()
        };
        let cases = grid.expand().unwrap();
        assert_eq!(cases.len(), 4);
        assert!(cases.iter().all(|c| matches!(c.op, BenchOp::C3aApply { .. })));

        let lora_only = SweepGrid {
            dims: vec![128],
            blocks: vec![],
            ranks: vec![1, 2, 4],
            include_dense: false,
            include_grad: false,
            ..SweepGrid::default()
        };
        let cases = lora_only.expand().unwrap();
        assert_eq!(cases.len(), 3);
        assert!(cases.iter().all(|c| matches!(c.op, BenchOp::LoraApply { .. })));

        let empty = SweepGrid {
            dims: vec![],
            ..SweepGrid::default()
        };
        assert!(empty.expand().is_err());
    }

    #[test]
    fn run_bench_validates_and_reports() {
        let case = BenchCase {
            op: BenchOp::C3aApply { block_size: 16 },
            d1: 64,
            d2: 64,
            batch: 4,
            repeats: 3,
            warmup: 1,
            threads: 1,
        };
        let report = run_bench(&[case]).unwrap();
        assert_eq!(report.cases.len(), 1);
        let r = &report.cases[0];
        assert_eq!(r.params, 256);
        assert_eq!(r.b_or_r, 16);
        assert!(r.ns_median > 0);
        assert!(r.aux_bytes > 0);

        let bad = BenchCase { repeats: 2, ..case };
        assert!(run_bench(&[bad]).is_err());
        let bad = BenchCase { warmup: 0, ..case };
        assert!(run_bench(&[bad]).is_err());
        let bad = BenchCase {
            op: BenchOp::C3aApply { block_size: 48 },
            ..case
        };
        assert!(run_bench(&[bad]).is_err());
    }

    #[test]
    fn csv_and_json_share_fields() {
        let case = BenchCase {
            op: BenchOp::DenseApply,
            d1: 32,
            d2: 32,
            batch: 2,
            repeats: 3,
            warmup: 1,
            threads: 1,
        };
        let report = run_bench(&[case]).unwrap();
        let csv = report.to_csv();
        assert!(csv.starts_with(
            "op,d1,d2,b_or_r,batch,threads,params,aux_bytes,ns_median,ns_iqr\n"
        ));
        assert!(csv.lines().nth(1).unwrap().starts_with("dense_apply,32,32,0,2,1,1024,"));
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        let case0 = &json["cases"][0];
        for field in [
            "op", "d1", "d2", "b_or_r", "batch", "threads", "params", "aux_bytes",
            "ns_median", "ns_iqr",
        ] {
            assert!(!case0[field].is_null(), "missing {field}");
        }
    }

    #[test]
    fn threaded_run_matches_single_threaded_output_shape() {
        for threads in [1usize, 2, 4] {
            let case = BenchCase {
                op: BenchOp::C3aGrad { block_size: 8 },
                d1: 32,
                d2: 16,
                batch: 8,
                repeats: 3,
                warmup: 1,
                threads,
            };
            let report = run_bench(&[case]).unwrap();
            assert_eq!(report.cases[0].threads, threads);
        }
    }

    #[test]
    fn aggregation_term_scales_quadratically_in_d() {
        // with a small fixed block size the d1*d2/b spectral accumulation
        // dominates, so doubling d should roughly quadruple the time
        let grid = SweepGrid {
            dims: vec![512, 1024, 2048],
            blocks: vec![16],
            ranks: vec![],
            include_dense: false,
            include_grad: false,
            batch: 32,
            repeats: 15,
            warmup: 3,
            threads: 1,
        };
        let report = sweep(&grid).unwrap();
        let times: Vec<f64> = report.cases.iter().map(|c| c.ns_median as f64).collect();
        for pair in times.windows(2) {
            let ratio = pair[1] / pair[0];
            assert!(
                (3.0..=6.0).contains(&ratio),
                "doubling ratio {ratio:.2} outside [3, 6] (times {times:?})"
            );
        }
    }
}
