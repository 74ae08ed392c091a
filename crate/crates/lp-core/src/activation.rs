//! Pointwise activation functions and their derivatives.

use crate::error::{LpError, Result};
use crate::linalg::Vector;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivationKind {
    Tanh,
    Sigmoid,
    /// Derivative at 0 is defined as 0.
    ReLU,
}

impl ActivationKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "tanh" => Ok(ActivationKind::Tanh),
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "relu" => Ok(ActivationKind::ReLU),
            other => Err(LpError::InvalidSpec(format!(
                "unknown activation '{other}' (expected tanh, sigmoid or relu)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::ReLU => "relu",
        }
    }

    pub fn value(&self, z: f64) -> f64 {
        match self {
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            ActivationKind::ReLU => z.max(0.0),
        }
    }

    /// Derivative as a function of the pre-activation `z`.
    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            ActivationKind::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            ActivationKind::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            ActivationKind::ReLU => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn apply(&self, z: &Vector) -> Vector {
        z.map(|v| self.value(v))
    }

    pub fn apply_derivative(&self, z: &Vector) -> Vector {
        z.map(|v| self.derivative(v))
    }
}
