//! The (augmented, regularized) Lagrangian over a constraint graph and its
//! exact analytic partial derivatives.
//!
//! With residual argument `a_n = x_out - skip - sigma(pre_n)` per node and
//! `G` applied elementwise, the objective is
//!
//! ```text
//! L = sum_i [ sum_terms V(W_out z_i, y_i)
//!           + sum_n lambda_{n,i} . G(a_{n,i})
//!           + rho * sum_n ||G(a_{n,i})||^2
//!           + alpha * sum_v ||x_{v,i}||_1 ]
//! ```
//!
//! The augmented term is folded into the multiplier as
//! `lambda_eff = lambda + 2 rho G(a)`, so every gradient below has a single
//! code path: with `mu = lambda_eff (.) G'(a)`,
//!
//! ```text
//! dL/dW_l      = - sum_i sum_{n uses W_l} (mu (.) sigma'(pre)) feed^T   (+ V' z^T for the output matrix)
//! dL/dx_v      =   mu_own - W^T (mu (.) sigma') - U^T (...) - mu_skip
//!                 + W_out^T V'  (when v feeds the loss)  + alpha sign(x_v)
//! dL/dlambda_n =   G(a_n)
//! ```
//!
//! Every sum runs in a fixed ascending order (examples, then nodes/terms), so
//! results are bitwise reproducible.

use crate::constraint::ConstraintKind;
use crate::data::Dataset;
use crate::error::{LpError, Result};
use crate::graph::{ConstraintGraph, ConstraintNode, LossTerm, NodeId, VarId};
use crate::linalg::{outer, Matrix, Vector};
use crate::loss::LossKind;
use crate::store::{StateAccess, WeightStore};
use serde::{Deserialize, Serialize};

/// Weights of the augmented term (`rho ||G||^2`) and the L1 state regularizer
/// (`alpha ||x||_1`). Both zero disables the terms exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegConfig {
    pub rho: f64,
    pub alpha: f64,
}

impl RegConfig {
    pub const NONE: RegConfig = RegConfig {
        rho: 0.0,
        alpha: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if self.rho < 0.0 || self.alpha < 0.0 || !self.rho.is_finite() || !self.alpha.is_finite() {
            return Err(LpError::InvalidSpec(format!(
                "rho and alpha must be finite and >= 0, got rho={}, alpha={}",
                self.rho, self.alpha
            )));
        }
        Ok(())
    }
}

impl Default for RegConfig {
    fn default() -> Self {
        RegConfig::NONE
    }
}

/// Everything the gradients need about one node at the current state.
pub(crate) struct NodeEval {
    /// Feed vector (sum of feed inputs, bias component appended when enabled).
    pub feed: Vector,
    /// Pre-activation `W feed (+ U rec)`.
    pub pre: Vector,
    /// Residual argument `a = x_out - skip - sigma(pre)`.
    pub arg: Vector,
}

pub(crate) fn eval_node<S: StateAccess>(
    graph: &ConstraintGraph,
    states: &S,
    weights: &WeightStore,
    example: usize,
    node: &ConstraintNode,
) -> Result<NodeEval> {
    let spec = graph.spec();
    let mut feed = Vector::zeros(graph.var(node.feed_inputs[0]).width);
    for &v in &node.feed_inputs {
        feed.add_assign(states.state(example, v))?;
    }
    if spec.bias {
        feed = feed.appended(1.0);
    }
    let mut pre = weights.w(node.weight).matvec(&feed)?;
    if let Some(rec) = node.recurrent_input {
        let u = node.recurrent_weight.expect("recurrent node has a U matrix");
        pre.add_assign(&weights.u(u).matvec(states.state(example, rec))?)?;
    }
    let mut arg = states
        .state(example, node.output)
        .sub(&spec.activation.apply(&pre))?;
    if let Some(skip) = node.skip_input {
        arg = arg.sub(states.state(example, skip))?;
    }
    Ok(NodeEval { feed, pre, arg })
}

/// Constraint residual of one node for one example: `G(a)` elementwise.
pub fn residual<S: StateAccess>(
    graph: &ConstraintGraph,
    states: &S,
    weights: &WeightStore,
    example: usize,
    node: NodeId,
    g: &ConstraintKind,
) -> Result<Vector> {
    let eval = eval_node(graph, states, weights, example, graph.node(node))?;
    Ok(g.apply(&eval.arg))
}

/// `lambda + 2 rho G(a)`, the effective multiplier of the augmented term.
fn effective_multiplier<S: StateAccess>(
    states: &S,
    example: usize,
    node: NodeId,
    g_of_arg: &Vector,
    reg: &RegConfig,
) -> Result<Vector> {
    let mut lam = states.multiplier(example, node).clone();
    if reg.rho != 0.0 {
        lam.axpy(2.0 * reg.rho, g_of_arg)?;
    }
    Ok(lam)
}

/// Network output of one loss term: `W_out (sum of summands)` with the bias
/// component appended when enabled.
pub fn term_output<S: StateAccess>(
    graph: &ConstraintGraph,
    states: &S,
    weights: &WeightStore,
    example: usize,
    term: &LossTerm,
) -> Result<Vector> {
    let mut z = Vector::zeros(graph.var(term.summands[0]).width);
    for &v in &term.summands {
        z.add_assign(states.state(example, v))?;
    }
    if graph.spec().bias {
        z = z.appended(1.0);
    }
    weights.w(graph.output_weight()).matvec(&z)
}

/// Value of the augmented, regularized Lagrangian over the whole dataset.
pub fn lagrangian_value<S: StateAccess>(
    graph: &ConstraintGraph,
    states: &S,
    weights: &WeightStore,
    data: &Dataset,
    g: &ConstraintKind,
    loss: LossKind,
    reg: &RegConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..data.len() {
        let mut per_example = 0.0;
        for term in graph.loss_terms() {
            let o = term_output(graph, states, weights, i, term)?;
            per_example += loss.value(&o, &data.targets[i])?;
        }
        for node in graph.nodes() {
            let eval = eval_node(graph, states, weights, i, node)?;
            let res = g.apply(&eval.arg);
            per_example += states.multiplier(i, node.id).dot(&res)?;
            if reg.rho != 0.0 {
                per_example += reg.rho * res.l2_norm_sq();
            }
        }
        if reg.alpha != 0.0 {
            for v in graph.trainable_var_ids() {
                per_example += reg.alpha * states.state(i, v).l1_norm();
            }
        }
        if !per_example.is_finite() {
            return Err(LpError::NonFinite(format!("lagrangian at example {i}")));
        }
        total += per_example;
    }
    Ok(total)
}

/// Loss part of the Lagrangian alone: `sum_i sum_terms V`.
pub fn loss_value<S: StateAccess>(
    graph: &ConstraintGraph,
    states: &S,
    weights: &WeightStore,
    data: &Dataset,
    loss: LossKind,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..data.len() {
        for term in graph.loss_terms() {
            let o = term_output(graph, states, weights, i, term)?;
            total += loss.value(&o, &data.targets[i])?;
        }
    }
    Ok(total)
}

/// Exact partial of the Lagrangian with respect to weight matrix `l`, summed
/// over the given examples in ascending order.
#[allow(clippy::too_many_arguments)]
pub(crate) fn grad_weights_for<S: StateAccess>(
    graph: &ConstraintGraph,
    states: &S,
    weights: &WeightStore,
    data: &Dataset,
    g: &ConstraintKind,
    loss: LossKind,
    reg: &RegConfig,
    l: usize,
    examples: &[usize],
) -> Result<Matrix> {
    if l >= weights.num_w() {
        return Err(LpError::UnknownVariable(format!("weight matrix {l}")));
    }
    let spec = graph.spec();
    let (rows, cols) = spec.weight_shape(l);
    let mut grad = Matrix::zeros(rows, cols);
    for &i in examples {
        for node in graph.nodes().iter().filter(|n| n.weight == l) {
            let eval = eval_node(graph, states, weights, i, node)?;
            let res = g.apply(&eval.arg);
            let lam_eff = effective_multiplier(states, i, node.id, &res, reg)?;
            let mu = lam_eff.hadamard(&g.apply_derivative(&eval.arg))?;
            let through_sigma = mu.hadamard(&spec.activation.apply_derivative(&eval.pre))?;
            grad.axpy(-1.0, &outer(&through_sigma, &eval.feed))?;
        }
        if l == graph.output_weight() {
            for term in graph.loss_terms() {
                let mut z = Vector::zeros(graph.var(term.summands[0]).width);
                for &v in &term.summands {
                    z.add_assign(states.state(i, v))?;
                }
                if spec.bias {
                    z = z.appended(1.0);
                }
                let o = weights.w(l).matvec(&z)?;
                let vprime = loss.grad(&o, &data.targets[i])?;
                grad.axpy(1.0, &outer(&vprime, &z))?;
            }
        }
    }
    Ok(grad)
}

/// Partial with respect to weight matrix `l`, summed over all examples.
#[allow(clippy::too_many_arguments)]
pub fn grad_weights<S: StateAccess>(
    graph: &ConstraintGraph,
    states: &S,
    weights: &WeightStore,
    data: &Dataset,
    g: &ConstraintKind,
    loss: LossKind,
    reg: &RegConfig,
    l: usize,
) -> Result<Matrix> {
    let all: Vec<usize> = (0..data.len()).collect();
    grad_weights_for(graph, states, weights, data, g, loss, reg, l, &all)
}

pub(crate) fn grad_recurrent_weights_for<S: StateAccess>(
    graph: &ConstraintGraph,
    states: &S,
    weights: &WeightStore,
    g: &ConstraintKind,
    reg: &RegConfig,
    l: usize,
    examples: &[usize],
) -> Result<Matrix> {
    if l >= weights.num_u() {
        return Err(LpError::UnknownVariable(format!("recurrent matrix {l}")));
    }
    let spec = graph.spec();
    let (rows, cols) = spec.recurrent_shape(l);
    let mut grad = Matrix::zeros(rows, cols);
    for &i in examples {
        for node in graph
            .nodes()
            .iter()
            .filter(|n| n.recurrent_weight == Some(l))
        {
            let eval = eval_node(graph, states, weights, i, node)?;
            let res = g.apply(&eval.arg);
            let lam_eff = effective_multiplier(states, i, node.id, &res, reg)?;
            let mu = lam_eff.hadamard(&g.apply_derivative(&eval.arg))?;
            let through_sigma = mu.hadamard(&spec.activation.apply_derivative(&eval.pre))?;
            let rec = states.state(i, node.recurrent_input.expect("recurrent node"));
            grad.axpy(-1.0, &outer(&through_sigma, rec))?;
        }
    }
    Ok(grad)
}

/// Partial with respect to recurrent matrix `l`, summed over all examples.
pub fn grad_recurrent_weights<S: StateAccess>(
    graph: &ConstraintGraph,
    states: &S,
    weights: &WeightStore,
    data: &Dataset,
    g: &ConstraintKind,
    reg: &RegConfig,
    l: usize,
) -> Result<Matrix> {
    let all: Vec<usize> = (0..data.len()).collect();
    grad_recurrent_weights_for(graph, states, weights, g, reg, l, &all)
}

/// Exact partial with respect to one example's state variable.
///
/// Contributions accumulate in a fixed order: the variable's own constraint,
/// then each consuming node in ascending id order (feed, then recurrent, then
/// skip role), then loss terms, then the L1 subgradient (`sign(0) = 0`).
#[allow(clippy::too_many_arguments)]
pub fn grad_state<S: StateAccess>(
    graph: &ConstraintGraph,
    states: &S,
    weights: &WeightStore,
    data: &Dataset,
    g: &ConstraintKind,
    loss: LossKind,
    reg: &RegConfig,
    example: usize,
    var: VarId,
) -> Result<Vector> {
    if var.index() >= graph.num_vars() {
        return Err(LpError::UnknownVariable(format!("state {}", var.index())));
    }
    let info = graph.var(var);
    if !info.is_trainable() {
        return Err(LpError::UnknownVariable(format!(
            "{} is a constant, not a trainable state",
            graph.var_name(var)
        )));
    }
    let spec = graph.spec();
    let width = info.width;
    let mut grad = Vector::zeros(width);

    if let Some(node) = graph.defining_node(var) {
        let eval = eval_node(graph, states, weights, example, node)?;
        let res = g.apply(&eval.arg);
        let lam_eff = effective_multiplier(states, example, node.id, &res, reg)?;
        let mu = lam_eff.hadamard(&g.apply_derivative(&eval.arg))?;
        grad.add_assign(&mu)?;
    }

    for &consumer in graph.consumers(var) {
        let node = graph.node(consumer);
        let eval = eval_node(graph, states, weights, example, node)?;
        let res = g.apply(&eval.arg);
        let lam_eff = effective_multiplier(states, example, node.id, &res, reg)?;
        let mu = lam_eff.hadamard(&g.apply_derivative(&eval.arg))?;
        if node.feed_inputs.contains(&var) {
            let through_sigma = mu.hadamard(&spec.activation.apply_derivative(&eval.pre))?;
            let back = weights.w(node.weight).matvec_transposed(&through_sigma)?;
            grad.axpy(-1.0, &back.truncated(width))?;
        }
        if node.recurrent_input == Some(var) {
            let u = node.recurrent_weight.expect("recurrent node");
            let through_sigma = mu.hadamard(&spec.activation.apply_derivative(&eval.pre))?;
            grad.axpy(-1.0, &weights.u(u).matvec_transposed(&through_sigma)?)?;
        }
        if node.skip_input == Some(var) {
            grad.axpy(-1.0, &mu)?;
        }
    }

    for term in graph.loss_terms() {
        if term.summands.contains(&var) {
            let o = term_output(graph, states, weights, example, term)?;
            let vprime = loss.grad(&o, &data.targets[example])?;
            let back = weights
                .w(graph.output_weight())
                .matvec_transposed(&vprime)?;
            grad.add_assign(&back.truncated(width))?;
        }
    }

    if reg.alpha != 0.0 {
        let sign = states.state(example, var).map(|v| {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        });
        grad.axpy(reg.alpha, &sign)?;
    }
    Ok(grad)
}

/// Partial with respect to one example's multiplier: exactly the node's
/// residual (the ascent direction).
pub fn grad_multiplier<S: StateAccess>(
    graph: &ConstraintGraph,
    states: &S,
    weights: &WeightStore,
    example: usize,
    node: NodeId,
    g: &ConstraintKind,
) -> Result<Vector> {
    residual(graph, states, weights, example, node, g)
}
