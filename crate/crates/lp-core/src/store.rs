//! Variable stores: weight matrices, per-example states and multipliers.
//!
//! States and multipliers start at zero; weights are drawn uniformly from
//! (-1/sqrt(fan_in), +1/sqrt(fan_in)) with a seeded generator so runs are
//! bitwise reproducible. Gradient code reads state through the
//! [`StateAccess`] trait, which lets tests interpose an access tracer.

use crate::architectures::NetworkSpec;
use crate::data::Dataset;
use crate::error::{LpError, Result};
use crate::graph::{ConstraintGraph, NodeId, VarId, VarRole};
use crate::linalg::{Matrix, Vector};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Read access to per-example states and multipliers.
pub trait StateAccess {
    fn state(&self, example: usize, var: VarId) -> &Vector;
    fn multiplier(&self, example: usize, node: NodeId) -> &Vector;
}

/// Per-example state vectors `x` and multiplier vectors `lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateStore {
    x: Vec<Vec<Vector>>,
    lambda: Vec<Vec<Vector>>,
}

impl StateStore {
    /// Zero-initialized store with input constants copied from the dataset.
    pub fn init(graph: &ConstraintGraph, data: &Dataset) -> Result<Self> {
        let spec = graph.spec();
        if data.input_width() != spec.input_width() {
            return Err(LpError::DimensionMismatch {
                op: "StateStore::init",
                expected: format!("input width {}", spec.input_width()),
                got: format!("{}", data.input_width()),
            });
        }
        if data.seq_len() != spec.seq_len {
            return Err(LpError::DimensionMismatch {
                op: "StateStore::init",
                expected: format!("sequences of length {}", spec.seq_len),
                got: format!("length {}", data.seq_len()),
            });
        }
        if data.target_width() != spec.output_width() {
            return Err(LpError::DimensionMismatch {
                op: "StateStore::init",
                expected: format!("target width {}", spec.output_width()),
                got: format!("{}", data.target_width()),
            });
        }
        let mut x = Vec::with_capacity(data.len());
        let mut lambda = Vec::with_capacity(data.len());
        for input in &data.inputs {
            let vars = graph
                .var_ids()
                .map(|id| {
                    let info = graph.var(id);
                    match info.role {
                        VarRole::Input => {
                            let t = info.time.max(1);
                            input.at_step(t).clone()
                        }
                        _ => Vector::zeros(info.width),
                    }
                })
                .collect();
            x.push(vars);
            lambda.push(
                graph
                    .node_ids()
                    .map(|n| Vector::zeros(graph.var(graph.node(n).output).width))
                    .collect(),
            );
        }
        Ok(StateStore { x, lambda })
    }

    pub fn num_examples(&self) -> usize {
        self.x.len()
    }

    pub fn state_mut(&mut self, example: usize, var: VarId) -> &mut Vector {
        &mut self.x[example][var.index()]
    }

    pub fn multiplier_mut(&mut self, example: usize, node: NodeId) -> &mut Vector {
        &mut self.lambda[example][node.index()]
    }

    /// Sum of |lambda| over all examples, nodes and components.
    pub fn multiplier_l1(&self) -> f64 {
        let mut acc = 0.0;
        for per_example in &self.lambda {
            for lam in per_example {
                acc += lam.l1_norm();
            }
        }
        acc
    }

    /// Sum of |x| over the given variables for all examples.
    pub fn state_l1(&self, vars: &[VarId]) -> f64 {
        let mut acc = 0.0;
        for per_example in &self.x {
            for id in vars {
                acc += per_example[id.index()].l1_norm();
            }
        }
        acc
    }
}

impl StateAccess for StateStore {
    fn state(&self, example: usize, var: VarId) -> &Vector {
        &self.x[example][var.index()]
    }

    fn multiplier(&self, example: usize, node: NodeId) -> &Vector {
        &self.lambda[example][node.index()]
    }
}

/// Weight matrices W_0..W_H plus recurrent matrices U_0..U_{H-1} for RNNs.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightStore {
    w: Vec<Matrix>,
    u: Vec<Matrix>,
}

impl WeightStore {
    /// Seeded uniform init in (-1/sqrt(fan_in), +1/sqrt(fan_in)). Matrices are
    /// filled in declaration order (W_0..W_H, then U_0..), row-major.
    pub fn init_random(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fill = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (cols as f64).sqrt();
            let dist = Uniform::new(-bound, bound);
            let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
            Matrix::new(rows, cols, data).expect("shape matches data")
        };
        let w = (0..spec.num_weights())
            .map(|l| {
                let (r, c) = spec.weight_shape(l);
                fill(r, c, &mut rng)
            })
            .collect();
        let u = (0..spec.num_recurrent_weights())
            .map(|l| {
                let (r, c) = spec.recurrent_shape(l);
                fill(r, c, &mut rng)
            })
            .collect();
        Ok(WeightStore { w, u })
    }

    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let w = (0..spec.num_weights())
            .map(|l| {
                let (r, c) = spec.weight_shape(l);
                Matrix::zeros(r, c)
            })
            .collect();
        let u = (0..spec.num_recurrent_weights())
            .map(|l| {
                let (r, c) = spec.recurrent_shape(l);
                Matrix::zeros(r, c)
            })
            .collect();
        Ok(WeightStore { w, u })
    }

    pub fn from_parts(w: Vec<Matrix>, u: Vec<Matrix>) -> Self {
        WeightStore { w, u }
    }

    pub fn num_w(&self) -> usize {
        self.w.len()
    }

    pub fn num_u(&self) -> usize {
        self.u.len()
    }

    pub fn w(&self, l: usize) -> &Matrix {
        &self.w[l]
    }

    pub fn w_mut(&mut self, l: usize) -> &mut Matrix {
        &mut self.w[l]
    }

    pub fn u(&self, l: usize) -> &Matrix {
        &self.u[l]
    }

    pub fn u_mut(&mut self, l: usize) -> &mut Matrix {
        &mut self.u[l]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::architectures::{build_graph, ArchKind, NetworkSpec};
    use crate::data::gen_xor;
    use crate::loss::LossKind;

    #[test]
    fn init_is_zero_except_inputs() {
        let spec = NetworkSpec::new(
            ArchKind::Mlp,
            vec![2, 3, 1],
            ActivationKind::Tanh,
            LossKind::SquaredError,
        );
        let graph = build_graph(&spec).unwrap();
        let states = StateStore::init(&graph, &gen_xor()).unwrap();
        assert_eq!(states.num_examples(), 4);
        assert_eq!(states.state(1, VarId(0)).as_slice(), &[0.0, 1.0]);
        assert_eq!(states.state(1, VarId(1)).as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(states.multiplier(0, NodeId(0)).as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(states.multiplier_l1(), 0.0);
    }

    #[test]
    fn seeded_weights_reproduce_bitwise() {
        let mut spec = NetworkSpec::new(
            ArchKind::Rnn,
            vec![2, 4, 1],
            ActivationKind::Tanh,
            LossKind::SquaredError,
        );
        spec.seq_len = 3;
        let a = WeightStore::init_random(&spec, 42).unwrap();
        let b = WeightStore::init_random(&spec, 42).unwrap();
        assert_eq!(a, b);
        let c = WeightStore::init_random(&spec, 43).unwrap();
        assert_ne!(a, c);
        // Bound check: |w| < 1/sqrt(fan_in).
        for l in 0..a.num_w() {
            let bound = 1.0 / (a.w(l).cols() as f64).sqrt();
            assert!(a.w(l).as_slice().iter().all(|v| v.abs() < bound));
        }
    }

    #[test]
    fn init_rejects_mismatched_dataset() {
        let spec = NetworkSpec::new(
            ArchKind::Mlp,
            vec![3, 3, 1],
            ActivationKind::Tanh,
            LossKind::SquaredError,
        );
        let graph = build_graph(&spec).unwrap();
        assert!(StateStore::init(&graph, &gen_xor()).is_err());
    }
}
