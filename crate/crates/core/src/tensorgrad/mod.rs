//! Minimal reverse-mode gradient engine.
//!
//! A [`Graph`] records forward operations on a tape; [`Graph::backward`]
//! consumes the tape and returns gradients for every reachable input marked
//! `requires_grad`. The op catalog is exactly what the attack objectives,
//! CTC recognizer, and U-Net enhancer need — no broadcasting, f64 only,
//! shapes checked on every op.

mod adam;
mod checkpoint;
mod fdcheck;
mod graph;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_ntv1, save_ntv1};
pub use fdcheck::{finite_diff_check, finite_diff_check_coords};
pub use graph::{Gradients, Graph, Var};

pub(crate) use graph::matmul_raw as matmul;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GradError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape for {op}: {shape:?} ({reason})")]
    BadShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("infeasible alignment: target needs {needed} frames, logits have {frames}")]
    InfeasibleAlignment { needed: usize, frames: usize },
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),
}

/// Dense n-dimensional tensor of `f64`, row-major.
///
/// Rank 0 (empty shape) is a scalar with one element.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, GradError> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(GradError::BadShape {
                op: "tensor",
                shape,
                reason: format!("shape wants {} elements, data has {}", expect, data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// 1-D tensor from a vector.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Row-major matrix.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, GradError> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Single element of a scalar tensor.
    pub fn item(&self) -> Result<f64, GradError> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(GradError::Contract(format!(
                "item() on tensor of {} elements",
                self.data.len()
            )))
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Named, insertion-ordered collection of tensors: the trainable state of a
/// model. Iteration order is the insertion order and is stable across runs.
#[derive(Debug, Clone, Default)]
pub struct ParameterSet {
    entries: Vec<(String, Tensor)>,
}

impl ParameterSet {
    pub fn new() -> Self {
        ParameterSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<(), GradError> {
        let name = name.into();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(GradError::Parameter(format!(
                "parameter name {name:?} must be non-empty and whitespace-free"
            )));
        }
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(GradError::Parameter(format!(
                "duplicate parameter name {name:?}"
            )));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

/// Variables of a [`ParameterSet`] bound into a graph, in parameter order.
pub struct BoundParams {
    vars: Vec<(String, Var)>,
}

/// Insert every parameter as a `requires_grad` input of `g`.
pub fn bind_parameters(g: &mut Graph, params: &ParameterSet) -> BoundParams {
    let vars = params
        .iter()
        .map(|(name, t)| (name.to_string(), g.input(t.clone(), true)))
        .collect();
    BoundParams { vars }
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Option<Var> {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Gradient tensors in parameter order; errors if any parameter received
    /// no gradient.
    pub fn collect_grads(&self, grads: &Gradients) -> Result<Vec<Tensor>, GradError> {
        self.vars
            .iter()
            .map(|(name, var)| {
                grads.wrt(*var).cloned().ok_or_else(|| {
                    GradError::Contract(format!("parameter {name:?} received no gradient"))
                })
            })
            .collect()
    }
}
