//! Output losses `V(o, y)` and their gradients with respect to `o`.

use crate::error::{LpError, Result};
use crate::linalg::Vector;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// V = 0.5 * ||o - y||^2, V' = o - y.
    SquaredError,
    /// V = -sum_k y_k log softmax(o)_k, V' = softmax(o) - y.
    /// Targets must be one-hot vectors or distributions.
    SoftmaxCrossEntropy,
}

impl LossKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "squared_error" => Ok(LossKind::SquaredError),
            "softmax_cross_entropy" => Ok(LossKind::SoftmaxCrossEntropy),
            other => Err(LpError::InvalidSpec(format!(
                "unknown loss '{other}' (expected squared_error or softmax_cross_entropy)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::SquaredError => "squared_error",
            LossKind::SoftmaxCrossEntropy => "softmax_cross_entropy",
        }
    }

    pub fn value(&self, o: &Vector, y: &Vector) -> Result<f64> {
        check_lengths(o, y)?;
        match self {
            LossKind::SquaredError => Ok(0.5 * o.sub(y)?.l2_norm_sq()),
            LossKind::SoftmaxCrossEntropy => {
                let log_p = log_softmax(o);
                let mut acc = 0.0;
                for k in 0..o.len() {
                    acc -= y[k] * log_p[k];
                }
                Ok(acc)
            }
        }
    }

    pub fn grad(&self, o: &Vector, y: &Vector) -> Result<Vector> {
        check_lengths(o, y)?;
        match self {
            LossKind::SquaredError => o.sub(y),
            LossKind::SoftmaxCrossEntropy => softmax(o).sub(y),
        }
    }
}

fn check_lengths(o: &Vector, y: &Vector) -> Result<()> {
    if o.len() != y.len() {
        return Err(LpError::DimensionMismatch {
            op: "loss",
            expected: format!("target of length {}", o.len()),
            got: format!("length {}", y.len()),
        });
    }
    Ok(())
}

fn log_softmax(o: &Vector) -> Vector {
    let max = o.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in o.iter() {
        sum += (v - max).exp();
    }
    let log_z = max + sum.ln();
    o.map(|v| v - log_z)
}

fn softmax(o: &Vector) -> Vector {
    log_softmax(o).map(f64::exp)
}
