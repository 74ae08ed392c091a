//! Saddle-point training loop: simultaneous gradient descent on weights and
//! states, gradient ascent on multipliers.
//!
//! Each step is a Jacobi update: every gradient is computed from the same
//! frozen pre-step snapshot, then all updates are applied together. The
//! returned metrics describe the pre-step snapshot.

use crate::constraint::ConstraintKind;
use crate::data::Dataset;
use crate::error::{LpError, Result};
use crate::graph::{ConstraintGraph, VarId};
use crate::lagrangian::{self, RegConfig};
use crate::linalg::{Matrix, Vector};
use crate::store::{StateStore, WeightStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub eta_w: f64,
    pub eta_x: f64,
    pub eta_lambda: f64,
    pub max_iters: usize,
    /// Stop once max |residual component| falls to this value and the loss
    /// has plateaued.
    pub target_residual: f64,
    pub seed: u64,
    pub reg: RegConfig,
    pub log_every: usize,
    /// Experimental: update only a sampled subset of examples' states and
    /// multipliers per step (weights see the same subset). `None` trains
    /// full-batch, which is the reference behavior.
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta_w: 0.01,
            eta_x: 0.01,
            eta_lambda: 0.1,
            max_iters: 10_000,
            target_residual: 1e-2,
            seed: 0,
            reg: RegConfig::NONE,
            log_every: 100,
            batch_size: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_w > 0.0 && self.eta_x > 0.0 && self.eta_lambda > 0.0) {
            return Err(LpError::InvalidSpec(
                "step sizes eta_w, eta_x, eta_lambda must be positive".into(),
            ));
        }
        if self.log_every == 0 {
            return Err(LpError::InvalidSpec("log_every must be >= 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(LpError::InvalidSpec("batch_size must be >= 1".into()));
        }
        self.reg.validate()
    }
}

/// Metrics of one iteration's pre-step snapshot.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterMetrics {
    pub iter: usize,
    pub lagrangian: f64,
    pub loss_term: f64,
    pub max_abs_residual: f64,
    pub mean_abs_residual: f64,
    pub lambda_l1: f64,
    pub train_accuracy: Option<f64>,
}

/// All gradients of one Jacobi step, computed from a frozen snapshot.
#[derive(Clone, Debug)]
pub struct StepGrads {
    pub examples: Vec<usize>,
    pub trainable: Vec<VarId>,
    pub w: Vec<Matrix>,
    pub u: Vec<Matrix>,
    /// x[k][j] is the gradient for examples[k], trainable[j].
    pub x: Vec<Vec<Vector>>,
    /// lambda[k][n] is the residual of node n for examples[k].
    pub lambda: Vec<Vec<Vector>>,
}

/// Compute every gradient of one step from the current (frozen) stores.
pub fn compute_step_grads(
    graph: &ConstraintGraph,
    states: &StateStore,
    weights: &WeightStore,
    data: &Dataset,
    g: &ConstraintKind,
    reg: &RegConfig,
    batch: Option<&[usize]>,
) -> Result<StepGrads> {
    let loss = graph.spec().loss;
    let examples: Vec<usize> = match batch {
        Some(b) => b.to_vec(),
        None => (0..data.len()).collect(),
    };
    let trainable: Vec<VarId> = graph.trainable_var_ids().collect();

    let mut w = Vec::with_capacity(weights.num_w());
    for l in 0..weights.num_w() {
        let gw =
            lagrangian::grad_weights_for(graph, states, weights, data, g, loss, reg, l, &examples)?;
        if !gw.is_finite() {
            return Err(LpError::NonFinite(format!("weight gradient W[{l}]")));
        }
        w.push(gw);
    }
    let mut u = Vec::with_capacity(weights.num_u());
    for l in 0..weights.num_u() {
        let gu = lagrangian::grad_recurrent_weights_for(graph, states, weights, g, reg, l, &examples)?;
        if !gu.is_finite() {
            return Err(LpError::NonFinite(format!("recurrent gradient U[{l}]")));
        }
        u.push(gu);
    }
    let mut x = Vec::with_capacity(examples.len());
    let mut lambda = Vec::with_capacity(examples.len());
    for &i in &examples {
        let mut per_var = Vec::with_capacity(trainable.len());
        for &v in &trainable {
            let gx = lagrangian::grad_state(graph, states, weights, data, g, loss, reg, i, v)?;
            if !gx.is_finite() {
                return Err(LpError::NonFinite(format!(
                    "state gradient {} of example {i}",
                    graph.var_name(v)
                )));
            }
            per_var.push(gx);
        }
        x.push(per_var);
        let mut per_node = Vec::with_capacity(graph.num_nodes());
        for n in graph.node_ids() {
            let gl = lagrangian::grad_multiplier(graph, states, weights, i, n, g)?;
            if !gl.is_finite() {
                return Err(LpError::NonFinite(format!(
                    "multiplier gradient of node {} for example {i}",
                    n.index()
                )));
            }
            per_node.push(gl);
        }
        lambda.push(per_node);
    }
    Ok(StepGrads {
        examples,
        trainable,
        w,
        u,
        x,
        lambda,
    })
}

/// Apply a step's updates: descent on weights and states, ascent on
/// multipliers.
pub fn apply_step_grads(
    states: &mut StateStore,
    weights: &mut WeightStore,
    grads: &StepGrads,
    config: &TrainConfig,
) -> Result<()> {
    for (l, gw) in grads.w.iter().enumerate() {
        weights.w_mut(l).axpy(-config.eta_w, gw)?;
    }
    for (l, gu) in grads.u.iter().enumerate() {
        weights.u_mut(l).axpy(-config.eta_w, gu)?;
    }
    for (k, &i) in grads.examples.iter().enumerate() {
        for (j, &v) in grads.trainable.iter().enumerate() {
            states.state_mut(i, v).axpy(-config.eta_x, &grads.x[k][j])?;
        }
        for (n, gl) in grads.lambda[k].iter().enumerate() {
            states
                .multiplier_mut(i, crate::graph::NodeId(n as u32))
                .axpy(config.eta_lambda, gl)?;
        }
    }
    Ok(())
}

/// Metrics of the snapshot the gradients were computed from. Residual
/// statistics reduce over the step's examples in ascending order, then nodes.
#[allow(clippy::too_many_arguments)]
pub(crate) fn metrics_from_grads(
    graph: &ConstraintGraph,
    states: &StateStore,
    weights: &WeightStore,
    data: &Dataset,
    g: &ConstraintKind,
    reg: &RegConfig,
    iter: usize,
    grads: &StepGrads,
) -> Result<IterMetrics> {
    let loss = graph.spec().loss;
    let lagrangian = lagrangian::lagrangian_value(graph, states, weights, data, g, loss, reg)?;
    let loss_term = lagrangian::loss_value(graph, states, weights, data, loss)?;
    let mut max_abs = 0.0f64;
    let mut sum_abs = 0.0f64;
    let mut count = 0usize;
    for per_node in &grads.lambda {
        for res in per_node {
            for k in 0..res.len() {
                let a = res[k].abs();
                max_abs = max_abs.max(a);
                sum_abs += a;
            }
            count += res.len();
        }
    }
    let mean_abs = if count == 0 { 0.0 } else { sum_abs / count as f64 };
    Ok(IterMetrics {
        iter,
        lagrangian,
        loss_term,
        max_abs_residual: max_abs,
        mean_abs_residual: mean_abs,
        lambda_l1: states.multiplier_l1(),
        train_accuracy: None,
    })
}

/// One full-batch Jacobi step; returns the pre-step snapshot's metrics.
pub fn step(
    graph: &ConstraintGraph,
    states: &mut StateStore,
    weights: &mut WeightStore,
    data: &Dataset,
    g: &ConstraintKind,
    config: &TrainConfig,
    iter: usize,
) -> Result<IterMetrics> {
    step_on_batch(graph, states, weights, data, g, config, iter, None)
}

#[allow(clippy::too_many_arguments)]
pub fn step_on_batch(
    graph: &ConstraintGraph,
    states: &mut StateStore,
    weights: &mut WeightStore,
    data: &Dataset,
    g: &ConstraintKind,
    config: &TrainConfig,
    iter: usize,
    batch: Option<&[usize]>,
) -> Result<IterMetrics> {
    let divergence = |e: LpError| match e {
        LpError::NonFinite(what) => LpError::Divergence { what, iter },
        other => other,
    };
    let grads = compute_step_grads(graph, states, weights, data, g, &config.reg, batch)
        .map_err(divergence)?;
    let metrics = metrics_from_grads(graph, states, weights, data, g, &config.reg, iter, &grads)
        .map_err(divergence)?;
    apply_step_grads(states, weights, &grads, config)?;
    Ok(metrics)
}

/// Completed training run.
#[derive(Clone, Debug)]
pub struct TrainRun {
    /// Metrics at `log_every` cadence plus the final iteration.
    pub metrics: Vec<IterMetrics>,
    pub iterations: usize,
    /// True when the stopping rule (residual below target and loss plateau)
    /// fired before `max_iters`.
    pub converged: bool,
    pub states: StateStore,
    pub weights: WeightStore,
}

const PLATEAU_WINDOW: usize = 100;
const PLATEAU_REL_CHANGE: f64 = 1e-6;

/// Run the saddle-point loop from zero-initialized states and multipliers and
/// seeded random weights.
pub fn train(
    graph: &ConstraintGraph,
    data: &Dataset,
    g: &ConstraintKind,
    config: &TrainConfig,
) -> Result<TrainRun> {
    train_observed(graph, data, g, config, |_| {})
}

/// `train` with an observer invoked on every logged metrics record.
pub fn train_observed(
    graph: &ConstraintGraph,
    data: &Dataset,
    g: &ConstraintKind,
    config: &TrainConfig,
    observer: impl FnMut(&IterMetrics),
) -> Result<TrainRun> {
    train_loop(graph, data, g, config, SequentialStepper, observer)
}

/// Stepping closure driven by the training loop; `parallel` provides an
/// alternative implementation with the same contract.
pub(crate) trait Stepper {
    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        graph: &ConstraintGraph,
        states: &mut StateStore,
        weights: &mut WeightStore,
        data: &Dataset,
        g: &ConstraintKind,
        config: &TrainConfig,
        iter: usize,
        batch: Option<&[usize]>,
    ) -> Result<IterMetrics>;
}

pub(crate) struct SequentialStepper;

impl Stepper for SequentialStepper {
    fn step(
        &mut self,
        graph: &ConstraintGraph,
        states: &mut StateStore,
        weights: &mut WeightStore,
        data: &Dataset,
        g: &ConstraintKind,
        config: &TrainConfig,
        iter: usize,
        batch: Option<&[usize]>,
    ) -> Result<IterMetrics> {
        step_on_batch(graph, states, weights, data, g, config, iter, batch)
    }
}

pub(crate) fn train_loop(
    graph: &ConstraintGraph,
    data: &Dataset,
    g: &ConstraintKind,
    config: &TrainConfig,
    mut stepper: impl Stepper,
    mut observer: impl FnMut(&IterMetrics),
) -> Result<TrainRun> {
    config.validate()?;
    g.validate()?;
    let spec = graph.spec();
    let mut weights = WeightStore::init_random(spec, config.seed)?;
    let mut states = StateStore::init(graph, data)?;
    let mut metrics_log: Vec<IterMetrics> = Vec::new();
    let mut loss_history: Vec<f64> = Vec::with_capacity(config.max_iters.min(1 << 20));
    let mut batch_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xB47C_55AA_1234_8765);
    let mut converged = false;
    let mut iterations = 0usize;

    for iter in 0..config.max_iters {
        let batch_indices: Option<Vec<usize>> = config.batch_size.map(|b| {
            let b = b.min(data.len());
            let mut idx = rand::seq::index::sample(&mut batch_rng, data.len(), b).into_vec();
            idx.sort_unstable();
            idx
        });
        let mut m = stepper.step(
            graph,
            &mut states,
            &mut weights,
            data,
            g,
            config,
            iter,
            batch_indices.as_deref(),
        )?;
        iterations = iter + 1;
        loss_history.push(m.loss_term);

        let plateau = iter + 1 >= PLATEAU_WINDOW && {
            let old = loss_history[iter + 1 - PLATEAU_WINDOW];
            let change = (m.loss_term - old).abs();
            change < PLATEAU_REL_CHANGE * old.abs().max(1e-12)
        };
        let reached = m.max_abs_residual <= config.target_residual;

        if iter % config.log_every == 0 || (reached && plateau) || iter + 1 == config.max_iters {
            m.train_accuracy = accuracy(&weights, spec, data).ok();
            observer(&m);
            metrics_log.push(m.clone());
        }
        if reached && plateau {
            converged = true;
            break;
        }
    }

    Ok(TrainRun {
        metrics: metrics_log,
        iterations,
        converged,
        states,
        weights,
    })
}

/// Classic forward pass with the trained weights; the constraint function
/// plays no role here.
pub fn infer(
    weights: &WeightStore,
    spec: &crate::architectures::NetworkSpec,
    input: &crate::data::ExampleInput,
) -> Result<Vector> {
    use crate::architectures::ArchKind;
    spec.validate()?;
    if input.width() != spec.input_width() {
        return Err(LpError::DimensionMismatch {
            op: "infer",
            expected: format!("input width {}", spec.input_width()),
            got: format!("{}", input.width()),
        });
    }
    let h = spec.hidden_layers();
    let feed = |x: &Vector| if spec.bias { x.appended(1.0) } else { x.clone() };
    match spec.arch {
        ArchKind::Mlp => {
            let mut x = input.at_step(1).clone();
            for l in 0..h {
                x = spec.activation.apply(&weights.w(l).matvec(&feed(&x))?);
            }
            weights.w(h).matvec(&feed(&x))
        }
        ArchKind::ResNetDirect | ArchKind::ResNetTilde => {
            // The tilde form's prefix sums follow the same recursion as the
            // direct form, so one code path serves both parameterizations.
            let mut x = input.at_step(1).clone();
            for l in 0..h {
                let unit = spec.activation.apply(&weights.w(l).matvec(&feed(&x))?);
                x.add_assign(&unit)?;
            }
            weights.w(h).matvec(&feed(&x))
        }
        ArchKind::Rnn => {
            if input.seq_len() != spec.seq_len {
                return Err(LpError::DimensionMismatch {
                    op: "infer",
                    expected: format!("sequence of length {}", spec.seq_len),
                    got: format!("{}", input.seq_len()),
                });
            }
            let mut prev: Vec<Vector> = (1..=h).map(|l| Vector::zeros(spec.layer_width(l))).collect();
            for t in 1..=spec.seq_len {
                let mut below = input.at_step(t).clone();
                let mut current = Vec::with_capacity(h);
                for l in 1..=h {
                    let mut pre = weights.w(l - 1).matvec(&feed(&below))?;
                    pre.add_assign(&weights.u(l - 1).matvec(&prev[l - 1])?)?;
                    let x = spec.activation.apply(&pre);
                    below = x.clone();
                    current.push(x);
                }
                prev = current;
            }
            weights.w(h).matvec(&feed(&prev[h - 1]))
        }
    }
}

/// Fraction of examples whose forward-pass prediction matches the target:
/// thresholding at 0.5 for single-output networks, argmax otherwise.
pub fn accuracy(
    weights: &WeightStore,
    spec: &crate::architectures::NetworkSpec,
    data: &Dataset,
) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for i in 0..data.len() {
        let o = infer(weights, spec, &data.inputs[i])?;
        let y = &data.targets[i];
        let hit = if o.len() == 1 {
            (o[0] >= 0.5) == (y[0] >= 0.5)
        } else {
            argmax(&o) == argmax(y)
        };
        if hit {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn argmax(v: &Vector) -> usize {
    let mut best = 0usize;
    for k in 1..v.len() {
        if v[k] > v[best] {
            best = k;
        }
    }
    best
}
