//! `c3a` command line: self-checks, rank and spectrum analysis, operator
//! materialization, the synthetic classification experiment, and the
//! benchmark sweep.
//!
//! Exit codes: 0 success, 1 check or experiment failure, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use c3a_cli::{bench, io, verify};
use c3a_core::training::{
    gen_synthetic, train_mlp, MiddleKind, MlpConfig, OptimizerKind, TrainRun,
};
use c3a_core::{BlockCircularKernel, CircularKernel};

#[derive(Parser)]
#[command(name = "c3a", version, about = "circular-convolution adapter toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the oracle-equivalence, gradient and rank self-check suites.
    Verify {
        /// Extra block shapes as d1xd2xb, comma separated (e.g. 6x4x2).
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<String>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Override the per-suite error tolerances.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Rank of a kernel (spectral for inline circulant kernels, row
    /// reduction for block kernel files).
    Rank {
        #[command(flatten)]
        kernel: KernelSource,
        /// Relative eigenvalue / pivot threshold.
        #[arg(long, default_value_t = 1e-9)]
        tau: f64,
    },
    /// Singular values of a circulant kernel, descending CSV line.
    Spectrum {
        #[command(flatten)]
        kernel: KernelSource,
    },
    /// Write the materialized dense operator as CSV.
    Materialize {
        #[command(flatten)]
        kernel: KernelSource,
        /// Output path; `-` writes to stdout.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the 8-cluster synthetic classifier and dump its curves.
    Synthetic {
        /// Middle layer: dense | lora:R | c3a:B.
        #[arg(long, default_value = "c3a:64")]
        middle: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        /// Curve CSV (epoch,loss,accuracy).
        #[arg(long, default_value = "curve.csv")]
        out: PathBuf,
        /// Dataset CSV (x,y,label); defaults to `<out stem>_data.csv`.
        #[arg(long)]
        data_out: Option<PathBuf>,
        /// Write the trained middle layer as an adapter checkpoint.
        #[arg(long)]
        save_middle: Option<PathBuf>,
        #[arg(long, default_value_t = 128)]
        hidden: usize,
        #[arg(long, default_value_t = 0.35)]
        sigma: f64,
        #[arg(long, default_value_t = 4.0)]
        radius: f64,
        /// 0 trains full-batch.
        #[arg(long, default_value_t = 0)]
        batch_size: usize,
        /// sgd | adam | adamw[:weight_decay].
        #[arg(long, default_value = "adam")]
        optimizer: String,
    },
    /// Benchmark dense / low-rank / block-circular apply and grad paths.
    Bench {
        /// Square operator sizes.
        #[arg(long, value_delimiter = ',', default_values_t = [256usize, 512, 1024, 2048])]
        d: Vec<usize>,
        /// Block sizes for the circular cases.
        #[arg(long, value_delimiter = ',', default_values_t = [64usize])]
        b: Vec<usize>,
        /// Ranks for the low-rank cases.
        #[arg(long, value_delimiter = ',', default_values_t = [8usize])]
        r: Vec<usize>,
        /// Skip the dense baseline.
        #[arg(long)]
        no_dense: bool,
        /// Also benchmark the backward passes.
        #[arg(long)]
        grad: bool,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 9)]
        repeats: usize,
        #[arg(long, default_value_t = 2)]
        warmup: usize,
        /// Worker threads for the batched operations.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Report base path; writes <out>.csv and <out>.json.
        #[arg(long, default_value = "bench")]
        out: PathBuf,
    },
}

/// Kernel input: a block kernel JSON file, or an inline comma-separated
/// circulant kernel.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct KernelSource {
    #[arg(long)]
    kernel_file: Option<PathBuf>,
    /// Pure circulant kernel, e.g. "1,2,3".
    #[arg(long)]
    inline: Option<String>,
}

enum CmdError {
    /// Bad flags or malformed input files (exit 2).
    Usage(String),
    /// A check or experiment failed (exit 1).
    Failure(String),
}

type CmdResult = Result<(), CmdError>;

fn usage<E: std::fmt::Display>(e: E) -> CmdError {
    CmdError::Usage(e.to_string())
}

impl KernelSource {
    fn load(&self) -> Result<BlockCircularKernel, CmdError> {
        if let Some(path) = &self.kernel_file {
            return io::load_kernel(path).map_err(usage);
        }
        let inline = self.inline.as_ref().expect("clap enforces one source");
        let weights: Vec<f64> = inline
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CmdError::Usage(format!("bad inline kernel: {e}")))?;
        if weights.is_empty() {
            return Err(CmdError::Usage("inline kernel is empty".into()));
        }
        let d = weights.len();
        BlockCircularKernel::new(d, d, d, weights).map_err(usage)
    }

    /// The kernel as a pure circulant; errors when the file holds a
    /// multi-block kernel.
    fn load_circulant(&self, what: &str) -> Result<CircularKernel, CmdError> {
        let k = self.load()?;
        if k.out_blocks() != 1 || k.in_blocks() != 1 {
            return Err(CmdError::Usage(format!(
                "{what} is defined for pure circulant kernels; this kernel has {}x{} blocks",
                k.out_blocks(),
                k.in_blocks()
            )));
        }
        CircularKernel::new(k.weights().to_vec()).map_err(usage)
    }
}

fn write_output(path: &Path, contents: &str) -> CmdResult {
    if path.as_os_str() == "-" {
        print!("{contents}");
        return Ok(());
    }
    std::fs::write(path, contents)
        .map_err(|e| CmdError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn cmd_verify(sizes: &[String], seed: u64, tolerance: Option<f64>) -> CmdResult {
    let mut parsed = Vec::new();
    for s in sizes {
        let dims: Vec<usize> = s
            .split('x')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| CmdError::Usage(format!("bad --sizes entry {s:?}: {e}")))?;
        let [d1, d2, b] = dims[..] else {
            return Err(CmdError::Usage(format!(
                "bad --sizes entry {s:?}: expected d1xd2xb"
            )));
        };
        c3a_core::block::param_count(d1, d2, b).map_err(usage)?;
        parsed.push((d1, d2, b));
    }
    if let Some(t) = tolerance {
        if !(t > 0.0) {
            return Err(CmdError::Usage(format!("--tolerance must be > 0, got {t}")));
        }
    }
    let cfg = verify::VerifyConfig {
        sizes: parsed,
        seed,
        tolerance,
    };
    let results = verify::run_all(&cfg);
    print!("{}", verify::render_table(&results));
    if results.iter().all(|r| r.passed) {
        Ok(())
    } else {
        let failing: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        Err(CmdError::Failure(format!(
            "{} suite(s) failed: {} (seed {seed})",
            failing.len(),
            failing.join(", ")
        )))
    }
}

fn cmd_rank(kernel: &KernelSource, tau: f64) -> CmdResult {
    if !(tau > 0.0) {
        return Err(CmdError::Usage(format!("--tau must be > 0, got {tau}")));
    }
    let k = kernel.load()?;
    let rank = if k.out_blocks() == 1 && k.in_blocks() == 1 {
        CircularKernel::new(k.weights().to_vec())
            .map_err(usage)?
            .rank_spectral(tau)
            .map_err(usage)?
    } else {
        k.rank(tau)
    };
    println!("{rank}");
    Ok(())
}

fn cmd_spectrum(kernel: &KernelSource) -> CmdResult {
    let k = kernel.load_circulant("spectrum")?;
    let spectrum = k.singular_spectrum();
    let line: Vec<String> = spectrum.iter().map(|v| format!("{v}")).collect();
    println!("{}", line.join(","));
    Ok(())
}

fn cmd_materialize(kernel: &KernelSource, out: &Path) -> CmdResult {
    let k = kernel.load()?;
    write_output(out, &io::matrix_csv(&k.materialize()))
}

fn parse_middle(spec: &str) -> Result<MiddleKind, CmdError> {
    let lower = spec.to_ascii_lowercase();
    if lower == "dense" {
        return Ok(MiddleKind::Dense);
    }
    if let Some(r) = lower.strip_prefix("lora:") {
        let rank = r
            .parse::<usize>()
            .map_err(|e| CmdError::Usage(format!("bad --middle {spec:?}: {e}")))?;
        return Ok(MiddleKind::Lora { rank });
    }
    if let Some(b) = lower.strip_prefix("c3a:") {
        let block_size = b
            .parse::<usize>()
            .map_err(|e| CmdError::Usage(format!("bad --middle {spec:?}: {e}")))?;
        return Ok(MiddleKind::C3a { block_size });
    }
    Err(CmdError::Usage(format!(
        "bad --middle {spec:?}: expected dense, lora:R or c3a:B"
    )))
}

fn parse_optimizer(spec: &str) -> Result<OptimizerKind, CmdError> {
    let lower = spec.to_ascii_lowercase();
    match lower.as_str() {
        "sgd" => Ok(OptimizerKind::Sgd),
        "adam" => Ok(OptimizerKind::default()),
        "adamw" => Ok(OptimizerKind::AdamW {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }),
        other => {
            if let Some(wd) = other.strip_prefix("adamw:") {
                let weight_decay = wd
                    .parse::<f64>()
                    .map_err(|e| CmdError::Usage(format!("bad --optimizer {spec:?}: {e}")))?;
                Ok(OptimizerKind::AdamW {
                    beta1: 0.9,
                    beta2: 0.999,
                    epsilon: 1e-8,
                    weight_decay,
                })
            } else {
                Err(CmdError::Usage(format!(
                    "bad --optimizer {spec:?}: expected sgd, adam or adamw[:wd]"
                )))
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_synthetic(
    middle: &str,
    seed: u64,
    epochs: usize,
    lr: f64,
    out: &Path,
    data_out: Option<&Path>,
    save_middle: Option<&Path>,
    hidden: usize,
    sigma: f64,
    radius: f64,
    batch_size: usize,
    optimizer: &str,
) -> CmdResult {
    let middle = parse_middle(middle)?;
    let optimizer = parse_optimizer(optimizer)?;
    let data = gen_synthetic(seed, sigma, radius).map_err(usage)?;
    let cfg = MlpConfig {
        hidden_dim: hidden,
        middle,
        epochs,
        batch_size,
        learning_rate: lr,
        optimizer,
        seed,
    };
    let run: TrainRun = match train_mlp(&data, &cfg) {
        Ok(run) => run,
        Err(e @ c3a_core::Error::Diverged { .. }) => {
            return Err(CmdError::Failure(e.to_string()))
        }
        Err(e) => return Err(usage(e)),
    };

    write_output(out, &io::curve_csv(&run.curve))?;
    let default_data_path = data_path_for(out);
    let data_path = data_out.unwrap_or(&default_data_path);
    write_output(data_path, &io::dataset_csv(&data))?;
    if let Some(path) = save_middle {
        let ckpt = io::middle_layer_checkpoint(&run.middle);
        io::save_checkpoint(path, &ckpt).map_err(usage)?;
    }

    println!(
        "final_accuracy {:.4}\ntrainable_middle_params {}",
        run.final_accuracy(),
        run.middle_params
    );
    Ok(())
}

fn data_path_for(curve_path: &Path) -> PathBuf {
    if curve_path.as_os_str() == "-" {
        return PathBuf::from("-");
    }
    let stem = curve_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "curve".into());
    curve_path.with_file_name(format!("{stem}_data.csv"))
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    d: Vec<usize>,
    b: Vec<usize>,
    r: Vec<usize>,
    no_dense: bool,
    grad: bool,
    batch: usize,
    repeats: usize,
    warmup: usize,
    threads: usize,
    out: &Path,
) -> CmdResult {
    let grid = bench::SweepGrid {
        dims: d,
        blocks: b,
        ranks: r,
        include_dense: !no_dense,
        include_grad: grad,
        batch,
        repeats,
        warmup,
        threads,
    };
    let report = bench::sweep(&grid).map_err(usage)?;
    for case in &report.cases {
        if case.timer_flagged {
            eprintln!(
                "warning: {} d={} median {}ns is close to timer resolution",
                case.op, case.d1, case.ns_median
            );
        }
    }
    let csv_path = out.with_extension("csv");
    let json_path = out.with_extension("json");
    write_output(&csv_path, &report.to_csv())?;
    write_output(&json_path, &report.to_json())?;
    println!(
        "wrote {} cases to {} and {}",
        report.cases.len(),
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match cli.cmd {
        Cmd::Verify {
            sizes,
            seed,
            tolerance,
        } => cmd_verify(&sizes, seed, tolerance),
        Cmd::Rank { kernel, tau } => cmd_rank(&kernel, tau),
        Cmd::Spectrum { kernel } => cmd_spectrum(&kernel),
        Cmd::Materialize { kernel, out } => cmd_materialize(&kernel, &out),
        Cmd::Synthetic {
            middle,
            seed,
            epochs,
            lr,
            out,
            data_out,
            save_middle,
            hidden,
            sigma,
            radius,
            batch_size,
            optimizer,
        } => cmd_synthetic(
            &middle,
            seed,
            epochs,
            lr,
            &out,
            data_out.as_deref(),
            save_middle.as_deref(),
            hidden,
            sigma,
            radius,
            batch_size,
            &optimizer,
        ),
        Cmd::Bench {
            d,
            b,
            r,
            no_dense,
            grad,
            batch,
            repeats,
            warmup,
            threads,
            out,
        } => cmd_bench(d, b, r, no_dense, grad, batch, repeats, warmup, threads, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CmdError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
