//! The constraint function family `G` applied elementwise to residual
//! arguments, with pointwise derivatives.
//!
//! The two epsilon-insensitive variants are exactly zero on `[-eps, eps]` and
//! linear outside it, so a bounded mismatch between a state and its
//! pre-activation image satisfies the constraint exactly. `EpsAbs` is
//! non-negative everywhere, which makes multiplier ascent monotone; `EpsLin`
//! keeps the sign of its argument.

use crate::error::{LpError, Result};
use crate::linalg::Vector;
use serde::{Deserialize, Serialize};

/// Constraint function family. Epsilon must be non-negative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConstraintKind {
    /// G(a) = a.
    Identity,
    /// G(a) = max(|a| - eps, 0); always non-negative.
    EpsAbs { epsilon: f64 },
    /// G(a) = max(a, eps) - max(-a, eps); keeps the argument's sign.
    EpsLin { epsilon: f64 },
}

impl ConstraintKind {
    /// Parse a config name: "identity", "eps_abs", "eps_lin".
    pub fn from_name(name: &str, epsilon: f64) -> Result<Self> {
        let kind = match name {
            "identity" => ConstraintKind::Identity,
            "eps_abs" => ConstraintKind::EpsAbs { epsilon },
            "eps_lin" => ConstraintKind::EpsLin { epsilon },
            other => {
                return Err(LpError::InvalidSpec(format!(
                    "unknown constraint kind '{other}' (expected identity, eps_abs or eps_lin)"
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConstraintKind::Identity => Ok(()),
            ConstraintKind::EpsAbs { epsilon } | ConstraintKind::EpsLin { epsilon } => {
                if *epsilon >= 0.0 && epsilon.is_finite() {
                    Ok(())
                } else {
                    Err(LpError::InvalidSpec(format!(
                        "constraint epsilon must be finite and >= 0, got {epsilon}"
                    )))
                }
            }
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            ConstraintKind::Identity => 0.0,
            ConstraintKind::EpsAbs { epsilon } | ConstraintKind::EpsLin { epsilon } => *epsilon,
        }
    }

    /// G(a).
    pub fn g_value(&self, a: f64) -> f64 {
        match self {
            ConstraintKind::Identity => a,
            ConstraintKind::EpsAbs { epsilon } => (a.abs() - epsilon).max(0.0),
            ConstraintKind::EpsLin { epsilon } => a.max(*epsilon) - (-a).max(*epsilon),
        }
    }

    /// G'(a). At the kinks |a| == eps the dead-zone subgradient 0 is used.
    pub fn g_derivative(&self, a: f64) -> f64 {
        match self {
            ConstraintKind::Identity => 1.0,
            ConstraintKind::EpsAbs { epsilon } => {
                if a.abs() > *epsilon {
                    if a > 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    0.0
                }
            }
            ConstraintKind::EpsLin { epsilon } => {
                if a.abs() > *epsilon {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// G applied elementwise.
    pub fn apply(&self, a: &Vector) -> Vector {
        a.map(|x| self.g_value(x))
    }

    /// G' applied elementwise.
    pub fn apply_derivative(&self, a: &Vector) -> Vector {
        a.map(|x| self.g_derivative(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_abs_values() {
        let g = ConstraintKind::EpsAbs { epsilon: 0.2 };
        assert_eq!(g.g_value(0.5), 0.3);
        assert_eq!(g.g_value(-0.1), 0.0);
    }

    #[test]
    fn eps_lin_values() {
        let g = ConstraintKind::EpsLin { epsilon: 0.2 };
        assert_eq!(g.g_value(-0.5), -0.3);
        assert_eq!(g.g_value(0.1), 0.0);
    }

    #[test]
    fn identity_value() {
        let g = ConstraintKind::Identity;
        for a in [-3.0, -0.5, 0.0, 0.25, 7.0] {
            assert_eq!(g.g_value(a), a);
            assert_eq!(g.g_derivative(a), 1.0);
        }
    }

    #[test]
    fn derivatives_outside_and_inside_dead_zone() {
        let abs = ConstraintKind::EpsAbs { epsilon: 0.2 };
        assert_eq!(abs.g_derivative(0.5), 1.0);
        assert_eq!(abs.g_derivative(-0.5), -1.0);
        assert_eq!(abs.g_derivative(0.1), 0.0);
        let lin = ConstraintKind::EpsLin { epsilon: 0.2 };
        assert_eq!(lin.g_derivative(0.0), 0.0);
        assert_eq!(lin.g_derivative(0.5), 1.0);
        assert_eq!(lin.g_derivative(-0.5), 1.0);
    }

    #[test]
    fn derivative_at_kink_is_zero() {
        let abs = ConstraintKind::EpsAbs { epsilon: 0.2 };
        let lin = ConstraintKind::EpsLin { epsilon: 0.2 };
        assert_eq!(abs.g_derivative(0.2), 0.0);
        assert_eq!(abs.g_derivative(-0.2), 0.0);
        assert_eq!(lin.g_derivative(0.2), 0.0);
    }

    #[test]
    fn derivative_matches_central_differences_away_from_kinks() {
        let kinds = [
            ConstraintKind::EpsAbs { epsilon: 0.3 },
            ConstraintKind::EpsLin { epsilon: 0.3 },
            ConstraintKind::Identity,
        ];
        let h = 1e-7;
        for kind in kinds {
            let eps = kind.epsilon();
            for i in 0..2000 {
                let a = -2.0 + 4.0 * (i as f64) / 1999.0;
                if (a.abs() - eps).abs() <= 1e-4 {
                    continue;
                }
                let fd = (kind.g_value(a + h) - kind.g_value(a - h)) / (2.0 * h);
                let an = kind.g_derivative(a);
                let denom = an.abs().max(1.0);
                assert!(
                    (fd - an).abs() / denom < 1e-8,
                    "{kind:?} at a={a}: fd={fd}, analytic={an}"
                );
            }
        }
    }

    #[test]
    fn rejects_negative_epsilon() {
        assert!(ConstraintKind::from_name("eps_abs", -0.1).is_err());
        assert!(ConstraintKind::from_name("nope", 0.0).is_err());
        assert!(ConstraintKind::from_name("eps_lin", 0.1).is_ok());
    }
}
