//! Text checkpoint format for trained models.
//!
//! A checkpoint is a line-oriented key-value file carrying everything needed
//! to run a trained model on new data: dimensions, the windowing length, the
//! split policy, the training-period normalization statistics, and all
//! parameter matrices in row-major order.
//!
//! ```text
//! hydrolstm-checkpoint v1
//! input_dim 5
//! hidden 10
//! seq_len 365
//! train_years 15
//! val_fraction 0.25
//! norm_mean <6 values: precip srad tmin tmax vp discharge>
//! norm_std <6 values>
//! w_i <hidden·input_dim values, row-major>
//! u_i <hidden·hidden values, row-major>
//! b_i <hidden values>
//! w_f ... u_f ... b_f ...
//! w_g ... u_g ... b_g ...
//! w_o ... u_o ... b_o ...
//! w_d <hidden values>
//! b_d <1 value>
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so
//! load(save(x)) == x bit-exactly and identical models produce byte-identical
//! files.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::data::{NormStats, SplitSpec, ALL_VARIABLES};
use crate::lstm::ModelParams;

const MAGIC: &str = "hydrolstm-checkpoint v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: not a checkpoint file (expected header `{MAGIC}`)")]
    BadMagic { path: String },
    #[error("checkpoint dimensions ({input_dim} inputs, {hidden} hidden) do not match {context}")]
    ShapeMismatch {
        input_dim: usize,
        hidden: usize,
        context: String,
    },
}

/// A trained model with the context required to apply it: normalization
/// statistics, window length, and the split policy it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub stats: NormStats,
    pub seq_len: usize,
    pub split: SplitSpec,
}

fn push_values<'a>(out: &mut String, key: &str, values: impl Iterator<Item = &'a f64>) {
    out.push_str(key);
    for v in values {
        write!(out, " {v}").expect("string write");
    }
    out.push('\n');
}

/// Serializes a checkpoint to its canonical text form.
pub fn to_string(ckpt: &Checkpoint) -> String {
    let p = &ckpt.params;
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    writeln!(out, "input_dim {}", p.input_dim()).expect("string write");
    writeln!(out, "hidden {}", p.hidden()).expect("string write");
    writeln!(out, "seq_len {}", ckpt.seq_len).expect("string write");
    writeln!(out, "train_years {}", ckpt.split.train_years).expect("string write");
    writeln!(out, "val_fraction {}", ckpt.split.val_fraction).expect("string write");

    let means: Vec<f64> = (0..6).map(|i| ckpt.stats.mean(i)).collect();
    let stds: Vec<f64> = (0..6).map(|i| ckpt.stats.std(i)).collect();
    push_values(&mut out, "norm_mean", means.iter());
    push_values(&mut out, "norm_std", stds.iter());

    for (gate, tag) in [
        (&p.input_gate, "i"),
        (&p.forget_gate, "f"),
        (&p.cell_gate, "g"),
        (&p.output_gate, "o"),
    ] {
        push_values(&mut out, &format!("w_{tag}"), gate.w.iter());
        push_values(&mut out, &format!("u_{tag}"), gate.u.iter());
        push_values(&mut out, &format!("b_{tag}"), gate.b.iter());
    }
    push_values(&mut out, "w_d", p.dense_w.iter());
    push_values(&mut out, "b_d", std::iter::once(&p.dense_b));
    out
}

pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, to_string(ckpt)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct LineReader<'a> {
    path: &'a str,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> LineReader<'a> {
    fn parse_err(&self, line: usize, message: String) -> CheckpointError {
        CheckpointError::Parse {
            path: self.path.to_string(),
            line,
            message,
        }
    }

    /// Next non-empty line, split into (line_number, key, rest).
    fn next_entry(&mut self) -> Result<(usize, &'a str, &'a str), CheckpointError> {
        for (idx, raw) in self.lines.by_ref() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            return Ok((idx + 1, key, rest));
        }
        Err(CheckpointError::Parse {
            path: self.path.to_string(),
            line: 0,
            message: "unexpected end of file".to_string(),
        })
    }

    fn expect_scalar<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, CheckpointError> {
        let (line, k, rest) = self.next_entry()?;
        if k != key {
            return Err(self.parse_err(line, format!("expected `{key}`, found `{k}`")));
        }
        rest.trim()
            .parse()
            .map_err(|_| self.parse_err(line, format!("cannot parse `{rest}` as {key}")))
    }

    fn expect_values(&mut self, key: &str, count: usize) -> Result<Vec<f64>, CheckpointError> {
        let (line, k, rest) = self.next_entry()?;
        if k != key {
            return Err(self.parse_err(line, format!("expected `{key}`, found `{k}`")));
        }
        let values: Result<Vec<f64>, _> = rest.split_whitespace().map(str::parse).collect();
        let values =
            values.map_err(|_| self.parse_err(line, format!("non-numeric value in `{key}`")))?;
        if values.len() != count {
            return Err(self.parse_err(
                line,
                format!("`{key}` has {} values, expected {count}", values.len()),
            ));
        }
        Ok(values)
    }
}

/// Parses the canonical text form back into a checkpoint.
pub fn from_str(text: &str, origin: &str) -> Result<Checkpoint, CheckpointError> {
    let mut reader = LineReader {
        path: origin,
        lines: text.lines().enumerate(),
    };
    let (_, magic_key, magic_rest) = reader.next_entry()?;
    if format!("{magic_key} {magic_rest}").trim() != MAGIC {
        return Err(CheckpointError::BadMagic {
            path: origin.to_string(),
        });
    }

    let input_dim: usize = reader.expect_scalar("input_dim")?;
    let hidden: usize = reader.expect_scalar("hidden")?;
    let seq_len: usize = reader.expect_scalar("seq_len")?;
    let train_years: u32 = reader.expect_scalar("train_years")?;
    let val_fraction: f64 = reader.expect_scalar("val_fraction")?;
    if input_dim == 0 || hidden == 0 || seq_len == 0 {
        return Err(CheckpointError::Parse {
            path: origin.to_string(),
            line: 0,
            message: "dimensions must be positive".to_string(),
        });
    }

    let mean_v = reader.expect_values("norm_mean", 6)?;
    let std_v = reader.expect_values("norm_std", 6)?;
    let mut mean = [0.0; 6];
    let mut std = [0.0; 6];
    mean.copy_from_slice(&mean_v);
    std.copy_from_slice(&std_v);
    let stats = NormStats::new(mean, std).map_err(|e| CheckpointError::Parse {
        path: origin.to_string(),
        line: 0,
        message: format!("invalid normalization stats ({e}); variables are {ALL_VARIABLES:?}"),
    })?;

    let mut flat = Vec::new();
    for tag in ["i", "f", "g", "o"] {
        flat.extend(reader.expect_values(&format!("w_{tag}"), hidden * input_dim)?);
        flat.extend(reader.expect_values(&format!("u_{tag}"), hidden * hidden)?);
        flat.extend(reader.expect_values(&format!("b_{tag}"), hidden)?);
    }
    flat.extend(reader.expect_values("w_d", hidden)?);
    flat.extend(reader.expect_values("b_d", 1)?);
    let params = ModelParams::from_flat(input_dim, hidden, &flat);

    Ok(Checkpoint {
        params,
        stats,
        seq_len,
        split: SplitSpec {
            train_years,
            val_fraction,
        },
    })
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_str(&text, &path.display().to_string())
}

/// Errors unless the checkpoint dimensions match the expected ones; `context`
/// names the data that imposed them.
pub fn check_shape(
    ckpt: &Checkpoint,
    input_dim: usize,
    context: &str,
) -> Result<(), CheckpointError> {
    if ckpt.params.input_dim() != input_dim {
        return Err(CheckpointError::ShapeMismatch {
            input_dim: ckpt.params.input_dim(),
            hidden: ckpt.params.hidden(),
            context: context.to_string(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::init_params;

    fn sample_checkpoint() -> Checkpoint {
        Checkpoint {
            params: init_params(99, 5, 10),
            stats: NormStats::new(
                [2.5, 150.0, -3.0, 7.0, 450.0, 1.75],
                [4.0, 80.0, 9.0, 10.5, 210.0, 2.25],
            )
            .unwrap(),
            seq_len: 365,
            split: SplitSpec::default(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ckpt = sample_checkpoint();
        let text = to_string(&ckpt);
        let back = from_str(&text, "<test>").unwrap();
        assert_eq!(ckpt, back);
        // serialization is canonical: same model → same bytes
        assert_eq!(text, to_string(&back));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample_checkpoint();
        save(&ckpt, &path).unwrap();
        assert_eq!(load(&path).unwrap(), ckpt);
    }

    #[test]
    fn rejects_wrong_magic() {
        match from_str("something-else v9\n", "<test>") {
            Err(CheckpointError::BadMagic { .. }) => {}
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn rejects_truncated_file() {
        let text = to_string(&sample_checkpoint());
        let truncated: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        match from_str(&truncated, "<test>") {
            Err(CheckpointError::Parse { .. }) => {}
            other => panic!("expected Parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_value_count() {
        let text = to_string(&sample_checkpoint());
        let tampered = text.replace("seq_len 365", "seq_len 365").replacen("hidden 10", "hidden 11", 1);
        match from_str(&tampered, "<test>") {
            Err(CheckpointError::Parse { message, .. }) => {
                assert!(message.contains("values"), "got: {message}");
            }
            other => panic!("expected Parse error, got {other:?}"),
        }
    }

    #[test]
    fn shape_check_names_context() {
        let ckpt = sample_checkpoint();
        assert!(check_shape(&ckpt, 5, "forcing data").is_ok());
        match check_shape(&ckpt, 7, "forcing data") {
            Err(CheckpointError::ShapeMismatch { input_dim: 5, .. }) => {}
            other => panic!("expected ShapeMismatch, got {other:?}"),
        }
    }
}
