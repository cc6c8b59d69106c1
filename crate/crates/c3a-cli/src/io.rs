//! File formats: kernel JSON, adapter checkpoints, and the CSV emitters
//! shared by the subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use c3a_core::training::{EpochStats, MiddleLayer, SyntheticDataset};
use c3a_core::{BlockCircularKernel, Mat};

/// On-disk block kernel: `{"d1": _, "d2": _, "b": _, "weights": [...]}`
/// with the weights flat in row-major (m, n, b) order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelFile {
    pub d1: usize,
    pub d2: usize,
    pub b: usize,
    pub weights: Vec<f64>,
}

impl KernelFile {
    pub fn from_kernel(k: &BlockCircularKernel) -> Self {
        Self {
            d1: k.out_features(),
            d2: k.in_features(),
            b: k.block_size(),
            weights: k.weights().to_vec(),
        }
    }

    pub fn into_kernel(self) -> Result<BlockCircularKernel> {
        BlockCircularKernel::new(self.d1, self.d2, self.b, self.weights)
            .map_err(|e| anyhow!("invalid kernel: {e}"))
    }
}

/// Parse a kernel file, reporting line/column diagnostics on malformed
/// JSON and the validation error on schema violations.
pub fn load_kernel(path: &Path) -> Result<BlockCircularKernel> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read kernel file {}", path.display()))?;
    let file: KernelFile = serde_json::from_str(&text).map_err(|e| {
        anyhow!(
            "malformed kernel file {} at line {}, column {}: {}",
            path.display(),
            e.line(),
            e.column(),
            e
        )
    })?;
    file.into_kernel()
}

pub fn save_kernel(path: &Path, kernel: &BlockCircularKernel) -> Result<()> {
    let text = serde_json::to_string_pretty(&KernelFile::from_kernel(kernel))?;
    fs::write(path, text)
        .with_context(|| format!("cannot write kernel file {}", path.display()))?;
    Ok(())
}

/// Adapter checkpoint: parameter arrays plus dims and init metadata,
/// tagged by adapter type.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AdapterCheckpoint {
    C3a {
        d1: usize,
        d2: usize,
        b: usize,
        scale: f64,
        #[serde(default)]
        init: Option<String>,
        #[serde(default)]
        seed: Option<u64>,
        weights: Vec<f64>,
    },
    Lora {
        d1: usize,
        d2: usize,
        r: usize,
        #[serde(default)]
        init: Option<String>,
        #[serde(default)]
        seed: Option<u64>,
        a: Vec<f64>,
        b: Vec<f64>,
    },
}

impl AdapterCheckpoint {
    /// Validate dims and parameter counts; returns the reconstructed
    /// parameters.
    pub fn validate(self) -> Result<CheckpointParams> {
        match self {
            AdapterCheckpoint::C3a {
                d1,
                d2,
                b,
                scale,
                weights,
                ..
            } => {
                let kernel = BlockCircularKernel::new(d1, d2, b, weights)
                    .map_err(|e| anyhow!("invalid c3a checkpoint: {e}"))?;
                Ok(CheckpointParams::C3a { kernel, scale })
            }
            AdapterCheckpoint::Lora { d1, d2, r, a, b, .. } => {
                if r == 0 {
                    bail!("invalid lora checkpoint: rank must be >= 1");
                }
                if a.len() != r * d2 {
                    bail!(
                        "invalid lora checkpoint: A has {} values, expected {}",
                        a.len(),
                        r * d2
                    );
                }
                if b.len() != d1 * r {
                    bail!(
                        "invalid lora checkpoint: B has {} values, expected {}",
                        b.len(),
                        d1 * r
                    );
                }
                let a = Mat::from_vec(r, d2, a).expect("length checked");
                let b = Mat::from_vec(d1, r, b).expect("length checked");
                Ok(CheckpointParams::Lora { a, b })
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum CheckpointParams {
    C3a { kernel: BlockCircularKernel, scale: f64 },
    Lora { a: Mat, b: Mat },
}

pub fn save_checkpoint(path: &Path, ckpt: &AdapterCheckpoint) -> Result<()> {
    let text = serde_json::to_string_pretty(ckpt)?;
    fs::write(path, text)
        .with_context(|| format!("cannot write checkpoint {}", path.display()))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointParams> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    let ckpt: AdapterCheckpoint = serde_json::from_str(&text).map_err(|e| {
        anyhow!(
            "malformed checkpoint {} at line {}, column {}: {}",
            path.display(),
            e.line(),
            e.column(),
            e
        )
    })?;
    ckpt.validate()
}

/// Checkpoint for a trained middle layer (dense layers are stored as
/// b = 1 kernels, which are the same dense matrix).
pub fn middle_layer_checkpoint(layer: &MiddleLayer) -> AdapterCheckpoint {
    match layer {
        MiddleLayer::Dense(w) => AdapterCheckpoint::C3a {
            d1: w.rows(),
            d2: w.cols(),
            b: 1,
            scale: 1.0,
            init: None,
            seed: None,
            weights: w.data().to_vec(),
        },
        MiddleLayer::Lora { a, b } => AdapterCheckpoint::Lora {
            d1: b.rows(),
            d2: a.cols(),
            r: a.rows(),
            init: None,
            seed: None,
            a: a.data().to_vec(),
            b: b.data().to_vec(),
        },
        MiddleLayer::C3a(k) => AdapterCheckpoint::C3a {
            d1: k.out_features(),
            d2: k.in_features(),
            b: k.block_size(),
            scale: 1.0,
            init: None,
            seed: None,
            weights: k.weights().to_vec(),
        },
    }
}

// `{}` on f64 prints the shortest representation that parses back to
// the same value, which keeps the CSVs both exact and readable.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// `epoch,loss,accuracy` rows.
pub fn curve_csv(curve: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,accuracy\n");
    for (epoch, e) in curve.iter().enumerate() {
        let _ = writeln!(out, "{epoch},{},{}", fmt_f64(e.loss), fmt_f64(e.accuracy));
    }
    out
}

/// `x,y,label` rows.
pub fn dataset_csv(data: &SyntheticDataset) -> String {
    let mut out = String::from("x,y,label\n");
    for (p, l) in data.points.iter().zip(&data.labels) {
        let _ = writeln!(out, "{},{},{l}", fmt_f64(p[0]), fmt_f64(p[1]));
    }
    out
}

/// Dense matrix as CSV: a `c0,c1,...` header then one row per line.
pub fn matrix_csv(m: &Mat) -> String {
    let header: Vec<String> = (0..m.cols()).map(|c| format!("c{c}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use c3a_core::training::EpochStats;

    #[test]
    fn kernel_file_round_trip() {
        let k = BlockCircularKernel::new(4, 4, 2, (0..8).map(|i| i as f64).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kernel.json");
        save_kernel(&path, &k).unwrap();
        let back = load_kernel(&path).unwrap();
        assert_eq!(back.weights(), k.weights());
        assert_eq!(back.block_size(), 2);
    }

    #[test]
    fn kernel_file_rejects_divisibility_and_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, r#"{"d1": 6, "d2": 4, "b": 4, "weights": [0,0,0,0,0,0]}"#).unwrap();
        let err = load_kernel(&path).unwrap_err().to_string();
        assert!(err.contains("block size"), "{err}");

        fs::write(&path, r#"{"d1": 4, "d2": 4, "b": 2, "weights": [1,2,3]}"#).unwrap();
        let err = load_kernel(&path).unwrap_err().to_string();
        assert!(err.contains("expected 8"), "{err}");
    }

    #[test]
    fn kernel_file_reports_json_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("syntax.json");
        fs::write(&path, "{\"d1\": 4,\n  \"d2\": oops}").unwrap();
        let err = load_kernel(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn checkpoint_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("adapter.json");

        let k = BlockCircularKernel::new(4, 4, 2, vec![0.5; 8]).unwrap();
        let ckpt = AdapterCheckpoint::C3a {
            d1: 4,
            d2: 4,
            b: 2,
            scale: 1.0,
            init: Some("xavier_uniform".into()),
            seed: Some(7),
            weights: k.weights().to_vec(),
        };
        save_checkpoint(&path, &ckpt).unwrap();
        match load_checkpoint(&path).unwrap() {
            CheckpointParams::C3a { kernel, scale } => {
                assert_eq!(kernel.weights(), k.weights());
                assert_eq!(scale, 1.0);
            }
            other => panic!("wrong variant {other:?}"),
        }

        let lora = AdapterCheckpoint::Lora {
            d1: 3,
            d2: 2,
            r: 1,
            init: None,
            seed: None,
            a: vec![1.0, 2.0],
            b: vec![0.0, 0.0, 0.0],
        };
        save_checkpoint(&path, &lora).unwrap();
        assert!(matches!(
            load_checkpoint(&path).unwrap(),
            CheckpointParams::Lora { .. }
        ));

        // wrong A length
        let bad = AdapterCheckpoint::Lora {
            d1: 3,
            d2: 2,
            r: 1,
            init: None,
            seed: None,
            a: vec![1.0],
            b: vec![0.0, 0.0, 0.0],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn csv_shapes() {
        let curve = vec![
            EpochStats { loss: 1.5, accuracy: 0.25 },
            EpochStats { loss: 0.75, accuracy: 0.5 },
        ];
        let text = curve_csv(&curve);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,loss,accuracy");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,1.5,"));

        let m = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let text = matrix_csv(&m);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "c0,c1,c2");
        assert_eq!(lines[1], "1,2,3");
        assert_eq!(lines[2], "4,5,6");
    }
}
