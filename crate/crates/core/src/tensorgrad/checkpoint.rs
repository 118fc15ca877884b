//! NTV1 checkpoint format: a plain-text, value-exact tensor container.
//!
//! ```text
//! ntv1 <n_tensors>
//! tensor <name> <rank> <dim...>
//! <space-separated floats, 17 significant digits>
//! ...
//! ```
//!
//! Floats are written with enough digits that read∘write is value-exact.

use super::{GradError, ParameterSet, Tensor};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub fn save_ntv1(params: &ParameterSet, path: &Path) -> Result<(), GradError> {
    let mut out = String::new();
    let _ = writeln!(out, "ntv1 {}", params.len());
    for (name, tensor) in params.iter() {
        let _ = write!(out, "tensor {} {}", name, tensor.rank());
        for d in tensor.shape() {
            let _ = write!(out, " {d}");
        }
        out.push('\n');
        let mut first = true;
        for v in tensor.data() {
            if !first {
                out.push(' ');
            }
            let _ = write!(out, "{v:.16e}");
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_ntv1(path: &Path) -> Result<ParameterSet, GradError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| GradError::CheckpointFormat("empty file".into()))?;
    let mut hp = header.split_whitespace();
    match (hp.next(), hp.next()) {
        (Some("ntv1"), Some(n)) => {
            let n: usize = n
                .parse()
                .map_err(|_| GradError::CheckpointFormat(format!("bad tensor count {n:?}")))?;
            let mut params = ParameterSet::new();
            for _ in 0..n {
                let head = lines.next().ok_or_else(|| {
                    GradError::CheckpointFormat("missing tensor header".into())
                })?;
                let mut parts = head.split_whitespace();
                if parts.next() != Some("tensor") {
                    return Err(GradError::CheckpointFormat(format!(
                        "expected 'tensor' header, got {head:?}"
                    )));
                }
                let name = parts
                    .next()
                    .ok_or_else(|| GradError::CheckpointFormat("missing tensor name".into()))?;
                let rank: usize = parts
                    .next()
                    .and_then(|r| r.parse().ok())
                    .ok_or_else(|| GradError::CheckpointFormat("bad tensor rank".into()))?;
                let shape = parts
                    .map(|d| {
                        d.parse::<usize>().map_err(|_| {
                            GradError::CheckpointFormat(format!("bad dimension {d:?}"))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if shape.len() != rank {
                    return Err(GradError::CheckpointFormat(format!(
                        "tensor {name:?}: rank {rank} but {} dims",
                        shape.len()
                    )));
                }
                let values = lines
                    .next()
                    .ok_or_else(|| GradError::CheckpointFormat("missing tensor data".into()))?;
                let data = values
                    .split_whitespace()
                    .map(|v| {
                        v.parse::<f64>().map_err(|_| {
                            GradError::CheckpointFormat(format!("bad float {v:?}"))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let tensor = Tensor::new(shape, data).map_err(|_| {
                    GradError::CheckpointFormat(format!("tensor {name:?}: data/shape mismatch"))
                })?;
                params.insert(name, tensor)?;
            }
            Ok(params)
        }
        _ => Err(GradError::CheckpointFormat(format!(
            "bad header {header:?}"
        ))),
    }
}
