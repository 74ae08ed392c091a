//! Independent correctness oracles.
//!
//! Three pieces, deliberately sharing no gradient code with the saddle-point
//! path in [`crate::lagrangian`]:
//!
//! * [`finite_diff`] — central-difference gradient of any scalar function of a
//!   flat parameter view, plus packing helpers that expose the whole problem
//!   (weights, states, multipliers) as one flat vector.
//! * [`backprop_grad`] — a classic forward/backward pass for MLPs.
//! * [`recover_backprop_check`] — project the states onto feasibility, solve
//!   the multipliers from the stationarity conditions top-down, and compare
//!   the resulting weight partials against backpropagation.

use crate::activation::ActivationKind;
use crate::architectures::{ArchKind, NetworkSpec};
use crate::constraint::ConstraintKind;
use crate::data::{Dataset, ExampleInput};
use crate::error::{LpError, Result};
use crate::graph::ConstraintGraph;
use crate::lagrangian::{self, RegConfig};
use crate::linalg::{outer, Matrix, Vector};
use crate::loss::LossKind;
use crate::store::{StateAccess, StateStore, WeightStore};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Central differences (f(t + h e_k) - f(t - h e_k)) / 2h for every coordinate.
pub fn finite_diff(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    theta: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let mut grad = Vec::with_capacity(theta.len());
    let mut work = theta.to_vec();
    for k in 0..theta.len() {
        work[k] = theta[k] + h;
        let plus = f(&work)?;
        work[k] = theta[k] - h;
        let minus = f(&work)?;
        work[k] = theta[k];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(LpError::NonFinite(format!(
                "finite difference evaluation at coordinate {k}"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// Flat parameter view: W matrices, U matrices, then per example the trainable
// states and the multipliers, all in ascending declaration order.
// ---------------------------------------------------------------------------

pub fn pack_parameters(
    graph: &ConstraintGraph,
    states: &StateStore,
    weights: &WeightStore,
) -> Vec<f64> {
    let mut theta = Vec::new();
    for l in 0..weights.num_w() {
        theta.extend_from_slice(weights.w(l).as_slice());
    }
    for l in 0..weights.num_u() {
        theta.extend_from_slice(weights.u(l).as_slice());
    }
    for i in 0..states.num_examples() {
        for v in graph.trainable_var_ids() {
            theta.extend_from_slice(states.state(i, v).as_slice());
        }
        for n in graph.node_ids() {
            theta.extend_from_slice(states.multiplier(i, n).as_slice());
        }
    }
    theta
}

pub fn unpack_parameters(
    graph: &ConstraintGraph,
    theta: &[f64],
    states: &StateStore,
    weights: &WeightStore,
) -> (StateStore, WeightStore) {
    let mut states = states.clone();
    let mut weights = weights.clone();
    let mut at = 0usize;
    let take = |n: usize, at: &mut usize| -> &[f64] {
        let s = &theta[*at..*at + n];
        *at += n;
        s
    };
    for l in 0..weights.num_w() {
        let n = weights.w(l).as_slice().len();
        let src = take(n, &mut at).to_vec();
        weights.w_mut(l).as_mut_slice().copy_from_slice(&src);
    }
    for l in 0..weights.num_u() {
        let n = weights.u(l).as_slice().len();
        let src = take(n, &mut at).to_vec();
        weights.u_mut(l).as_mut_slice().copy_from_slice(&src);
    }
    for i in 0..states.num_examples() {
        for v in graph.trainable_var_ids() {
            let n = graph.var(v).width;
            let src = take(n, &mut at).to_vec();
            states.state_mut(i, v).as_mut_slice().copy_from_slice(&src);
        }
        for node in graph.node_ids() {
            let n = graph.var(graph.node(node).output).width;
            let src = take(n, &mut at).to_vec();
            states
                .multiplier_mut(i, node)
                .as_mut_slice()
                .copy_from_slice(&src);
        }
    }
    debug_assert_eq!(at, theta.len());
    (states, weights)
}

/// Human-readable name of a flat-view coordinate, for failure reports.
pub fn coordinate_name(graph: &ConstraintGraph, weights: &WeightStore, index: usize) -> String {
    let mut at = 0usize;
    for l in 0..weights.num_w() {
        let n = weights.w(l).as_slice().len();
        if index < at + n {
            return format!("W[{l}][{}]", index - at);
        }
        at += n;
    }
    for l in 0..weights.num_u() {
        let n = weights.u(l).as_slice().len();
        if index < at + n {
            return format!("U[{l}][{}]", index - at);
        }
        at += n;
    }
    let per_example: usize = graph
        .trainable_var_ids()
        .map(|v| graph.var(v).width)
        .sum::<usize>()
        + graph
            .node_ids()
            .map(|n| graph.var(graph.node(n).output).width)
            .sum::<usize>();
    if per_example == 0 {
        return format!("coordinate {index}");
    }
    let rel = index - at;
    let example = rel / per_example;
    let mut within = rel % per_example;
    for v in graph.trainable_var_ids() {
        let n = graph.var(v).width;
        if within < n {
            return format!("{}[{within}] of example {example}", graph.var_name(v));
        }
        within -= n;
    }
    for node in graph.node_ids() {
        let n = graph.var(graph.node(node).output).width;
        if within < n {
            return format!("lambda[node {}][{within}] of example {example}", node.index());
        }
        within -= n;
    }
    format!("coordinate {index}")
}

/// All analytic partials in the flat-view order.
pub fn analytic_gradient_flat(
    graph: &ConstraintGraph,
    states: &StateStore,
    weights: &WeightStore,
    data: &Dataset,
    g: &ConstraintKind,
    loss: LossKind,
    reg: &RegConfig,
) -> Result<Vec<f64>> {
    let mut grad = Vec::new();
    for l in 0..weights.num_w() {
        let gw = lagrangian::grad_weights(graph, states, weights, data, g, loss, reg, l)?;
        grad.extend_from_slice(gw.as_slice());
    }
    for l in 0..weights.num_u() {
        let gu = lagrangian::grad_recurrent_weights(graph, states, weights, data, g, reg, l)?;
        grad.extend_from_slice(gu.as_slice());
    }
    for i in 0..states.num_examples() {
        for v in graph.trainable_var_ids() {
            let gx = lagrangian::grad_state(graph, states, weights, data, g, loss, reg, i, v)?;
            grad.extend_from_slice(gx.as_slice());
        }
        for n in graph.node_ids() {
            let gl = lagrangian::grad_multiplier(graph, states, weights, i, n, g)?;
            grad.extend_from_slice(gl.as_slice());
        }
    }
    Ok(grad)
}

/// Finite-difference gradient of the Lagrangian in the flat-view order.
#[allow(clippy::too_many_arguments)]
pub fn fd_gradient_flat(
    graph: &ConstraintGraph,
    states: &StateStore,
    weights: &WeightStore,
    data: &Dataset,
    g: &ConstraintKind,
    loss: LossKind,
    reg: &RegConfig,
    h: f64,
) -> Result<Vec<f64>> {
    let theta = pack_parameters(graph, states, weights);
    let mut f = |t: &[f64]| -> Result<f64> {
        let (s, w) = unpack_parameters(graph, t, states, weights);
        lagrangian::lagrangian_value(graph, &s, &w, data, g, loss, reg)
    };
    finite_diff(&mut f, &theta, h)
}

/// Pass criteria for a gradient check: relative error below `rel` for
/// magnitudes at least `small_magnitude`, absolute error below `abs_small`
/// underneath it.
#[derive(Clone, Copy, Debug)]
pub struct CheckTolerances {
    pub rel: f64,
    pub abs_small: f64,
    pub small_magnitude: f64,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        CheckTolerances {
            rel: 1e-6,
            abs_small: 1e-9,
            small_magnitude: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub coords_checked: usize,
    /// Largest relative error among coordinates held to the relative criterion.
    pub max_rel_error: f64,
    /// Largest absolute error among small-magnitude coordinates.
    pub max_abs_error: f64,
    pub worst_coordinate: Option<String>,
    pub passed: bool,
}

/// Compare analytic partials against central differences at h = 1e-5, retrying
/// near-misses at h = 1e-6 before declaring failure.
#[allow(clippy::too_many_arguments)]
pub fn check_gradients(
    graph: &ConstraintGraph,
    states: &StateStore,
    weights: &WeightStore,
    data: &Dataset,
    g: &ConstraintKind,
    loss: LossKind,
    reg: &RegConfig,
    tol: &CheckTolerances,
) -> Result<GradCheckReport> {
    let analytic = analytic_gradient_flat(graph, states, weights, data, g, loss, reg)?;
    let fd = fd_gradient_flat(graph, states, weights, data, g, loss, reg, 1e-5)?;
    let theta = pack_parameters(graph, states, weights);
    let mut report = GradCheckReport {
        coords_checked: analytic.len(),
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_coordinate: None,
        passed: true,
    };
    let mut worst_score = 0.0f64;
    for k in 0..analytic.len() {
        let mut a = analytic[k];
        let mut f = fd[k];
        let mut ok = coordinate_ok(a, f, tol);
        if !ok {
            // Confirmation pass at a smaller step guards against an unlucky
            // truncation/cancellation balance at this scale.
            let eval = |t: &[f64]| -> Result<f64> {
                let (s, w) = unpack_parameters(graph, t, states, weights);
                lagrangian::lagrangian_value(graph, &s, &w, data, g, loss, reg)
            };
            let mut work = theta.clone();
            work[k] = theta[k] + 1e-6;
            let plus = eval(&work)?;
            work[k] = theta[k] - 1e-6;
            let minus = eval(&work)?;
            f = (plus - minus) / 2e-6;
            a = analytic[k];
            ok = coordinate_ok(a, f, tol);
        }
        let magnitude = a.abs().max(f.abs());
        let err = (a - f).abs();
        if magnitude >= tol.small_magnitude {
            report.max_rel_error = report.max_rel_error.max(err / magnitude);
        } else {
            report.max_abs_error = report.max_abs_error.max(err);
        }
        let score = if magnitude >= tol.small_magnitude {
            err / magnitude / tol.rel
        } else {
            err / tol.abs_small
        };
        if score > worst_score {
            worst_score = score;
            report.worst_coordinate = Some(coordinate_name(graph, weights, k));
        }
        if !ok {
            report.passed = false;
        }
    }
    Ok(report)
}

fn coordinate_ok(a: f64, f: f64, tol: &CheckTolerances) -> bool {
    let magnitude = a.abs().max(f.abs());
    let err = (a - f).abs();
    if magnitude < tol.small_magnitude {
        err < tol.abs_small
    } else {
        err / magnitude < tol.rel
    }
}

/// Coordinate-wise tolerance comparison of two flat gradients, without the
/// confirmation retry of [`check_gradients`].
pub fn gradients_agree(analytic: &[f64], fd: &[f64], tol: &CheckTolerances) -> bool {
    analytic.len() == fd.len()
        && analytic
            .iter()
            .zip(fd)
            .all(|(a, f)| coordinate_ok(*a, *f, tol))
}

// ---------------------------------------------------------------------------
// Random instances for gradient checks
// ---------------------------------------------------------------------------

/// Random dataset compatible with the spec: inputs uniform in [-1, 1];
/// targets uniform in [-1, 1] for the squared loss, one-hot for softmax.
pub fn random_dataset(spec: &NetworkSpec, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new_inclusive(-1.0, 1.0);
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let step = |rng: &mut ChaCha8Rng| {
            Vector::new((0..spec.input_width()).map(|_| unit.sample(rng)).collect())
        };
        let input = if spec.arch == ArchKind::Rnn {
            ExampleInput::Sequence((0..spec.seq_len).map(|_| step(&mut rng)).collect())
        } else {
            ExampleInput::Single(step(&mut rng))
        };
        inputs.push(input);
        let target = match spec.loss {
            LossKind::SquaredError => {
                Vector::new((0..spec.output_width()).map(|_| unit.sample(&mut rng)).collect())
            }
            LossKind::SoftmaxCrossEntropy => {
                let class =
                    Uniform::new(0, spec.output_width() as u64).sample(&mut rng) as usize;
                let mut y = vec![0.0; spec.output_width()];
                y[class] = 1.0;
                Vector::new(y)
            }
        };
        targets.push(target);
    }
    Dataset::new("random", inputs, targets).expect("random dataset is well formed")
}

/// Randomize the trainable states and multipliers of an initialized store.
pub fn randomize_states(graph: &ConstraintGraph, states: &mut StateStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state_dist = Uniform::new_inclusive(-0.8, 0.8);
    let lambda_dist = Uniform::new_inclusive(-0.6, 0.6);
    for i in 0..states.num_examples() {
        for v in graph.trainable_var_ids() {
            let x = states.state_mut(i, v);
            for k in 0..x.len() {
                x[k] = state_dist.sample(&mut rng);
            }
        }
        for n in graph.node_ids() {
            let lam = states.multiplier_mut(i, n);
            for k in 0..lam.len() {
                lam[k] = lambda_dist.sample(&mut rng);
            }
        }
    }
}

/// Margin kept between residual arguments (and ReLU pre-activations, and
/// L1-regularized states) and their nearest non-differentiable point when
/// sampling check instances. Twice the exclusion margin of the acceptance
/// criteria so the finite-difference probe cannot cross a kink.
pub const KINK_SAMPLING_MARGIN: f64 = 2e-4;

/// Sample a random instance whose coordinates all sit away from kinks of
/// G, of ReLU, and of the L1 term, retrying with fresh seeds as needed.
#[allow(clippy::too_many_arguments)]
pub fn sample_clean_instance(
    graph: &ConstraintGraph,
    data: &Dataset,
    g: &ConstraintKind,
    reg: &RegConfig,
    seed: u64,
) -> Result<(StateStore, WeightStore)> {
    let spec = graph.spec();
    for attempt in 0..200u64 {
        let s = seed.wrapping_add(attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let weights = WeightStore::init_random(spec, s)?;
        let mut states = StateStore::init(graph, data)?;
        randomize_states(graph, &mut states, s ^ 0x5555_5555_5555_5555);
        if instance_is_clean(graph, &states, &weights, g, reg)? {
            return Ok((states, weights));
        }
    }
    Err(LpError::Unsupported(
        "could not sample a kink-free instance in 200 attempts".into(),
    ))
}

fn instance_is_clean(
    graph: &ConstraintGraph,
    states: &StateStore,
    weights: &WeightStore,
    g: &ConstraintKind,
    reg: &RegConfig,
) -> Result<bool> {
    let spec = graph.spec();
    let eps = g.epsilon();
    for i in 0..states.num_examples() {
        for node in graph.nodes() {
            let eval = crate::lagrangian::eval_node(graph, states, weights, i, node)?;
            if !matches!(g, ConstraintKind::Identity) {
                for k in 0..eval.arg.len() {
                    if (eval.arg[k].abs() - eps).abs() <= KINK_SAMPLING_MARGIN {
                        return Ok(false);
                    }
                }
            }
            if spec.activation == ActivationKind::ReLU {
                for k in 0..eval.pre.len() {
                    if eval.pre[k].abs() <= KINK_SAMPLING_MARGIN {
                        return Ok(false);
                    }
                }
            }
        }
        if reg.alpha > 0.0 {
            for v in graph.trainable_var_ids() {
                let x = states.state(i, v);
                for k in 0..x.len() {
                    if x[k].abs() <= 1e-5 {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Classic backpropagation (MLP oracle)
// ---------------------------------------------------------------------------

/// Backpropagation deltas per layer and example.
#[derive(Clone, Debug)]
pub struct DeltaStack {
    /// delta[l][i] for hidden layers l = 1..=H.
    pub delta: Vec<Vec<Vector>>,
}

/// Exact gradient of the plain network loss `sum_i V(net(x_i), y_i)` for an
/// MLP, computed by forward pass plus delta recursion. Shares no code with
/// the Lagrangian gradients.
pub fn backprop_grad(
    weights: &WeightStore,
    spec: &NetworkSpec,
    data: &Dataset,
) -> Result<Vec<Matrix>> {
    backprop(weights, spec, data).map(|(g, _)| g)
}

pub fn backprop(
    weights: &WeightStore,
    spec: &NetworkSpec,
    data: &Dataset,
) -> Result<(Vec<Matrix>, DeltaStack)> {
    if spec.arch != ArchKind::Mlp {
        return Err(LpError::Unsupported(
            "backprop oracle covers MLP specs only".into(),
        ));
    }
    spec.validate()?;
    let h = spec.hidden_layers();
    let mut grads: Vec<Matrix> = (0..spec.num_weights())
        .map(|l| {
            let (r, c) = spec.weight_shape(l);
            Matrix::zeros(r, c)
        })
        .collect();
    let mut deltas: Vec<Vec<Vector>> = vec![Vec::new(); h + 1];
    for i in 0..data.len() {
        // Forward.
        let mut activations: Vec<Vector> = Vec::with_capacity(h + 1);
        let mut pres: Vec<Vector> = Vec::with_capacity(h);
        activations.push(data.inputs[i].at_step(1).clone());
        for l in 1..=h {
            let feed = feed_of(&activations[l - 1], spec.bias);
            let pre = weights.w(l - 1).matvec(&feed)?;
            activations.push(spec.activation.apply(&pre));
            pres.push(pre);
        }
        let top_feed = feed_of(&activations[h], spec.bias);
        let o = weights.w(h).matvec(&top_feed)?;
        let vprime = spec.loss.grad(&o, &data.targets[i])?;
        grads[h].axpy(1.0, &outer(&vprime, &top_feed))?;
        // Backward.
        let mut upstream = vprime;
        for l in (1..=h).rev() {
            let back = weights.w(l).matvec_transposed(&upstream)?;
            let delta = spec
                .activation
                .apply_derivative(&pres[l - 1])
                .hadamard(&back.truncated(spec.layer_width(l)))?;
            let feed = feed_of(&activations[l - 1], spec.bias);
            grads[l - 1].axpy(1.0, &outer(&delta, &feed))?;
            deltas[l].push(delta.clone());
            upstream = delta;
        }
    }
    Ok((grads, DeltaStack { delta: deltas }))
}

fn feed_of(x: &Vector, bias: bool) -> Vector {
    if bias {
        x.appended(1.0)
    } else {
        x.clone()
    }
}

// ---------------------------------------------------------------------------
// Backprop recovery from stationarity
// ---------------------------------------------------------------------------

/// With identity constraints on an MLP: project the states onto feasibility
/// with a forward pass, solve the multipliers top-down from the stationarity
/// of the Lagrangian in x, then compare the Lagrangian's weight partials with
/// backpropagation. Returns the largest per-layer discrepancy measured
/// relative to that layer's largest backprop gradient magnitude.
#[allow(clippy::needless_range_loop)]
pub fn recover_backprop_check(
    weights: &WeightStore,
    spec: &NetworkSpec,
    data: &Dataset,
) -> Result<f64> {
    if spec.arch != ArchKind::Mlp {
        return Err(LpError::Unsupported(
            "backprop recovery covers MLP specs only".into(),
        ));
    }
    let graph = crate::architectures::build_graph(spec)?;
    let mut states = StateStore::init(&graph, data)?;
    let h = spec.hidden_layers();
    let ident = ConstraintKind::Identity;

    for i in 0..data.len() {
        // Feasibility: dL/dlambda = 0 is the classic forward pass.
        let var_ids: Vec<_> = graph.var_ids().collect();
        for l in 1..=h {
            let prev = states.state(i, var_ids[l - 1]).clone();
            let feed = feed_of(&prev, spec.bias);
            let pre = weights.w(l - 1).matvec(&feed)?;
            *states.state_mut(i, var_ids[l]) = spec.activation.apply(&pre);
        }
        // Stationarity in x, solved top-down. At the top,
        // lambda_H = -W_H^T V'; below, lambda_l = W_l^T (lambda_{l+1} (.) sigma'(pre_{l+1})).
        let top_feed = feed_of(states.state(i, var_ids[h]), spec.bias);
        let o = weights.w(h).matvec(&top_feed)?;
        let vprime = spec.loss.grad(&o, &data.targets[i])?;
        let mut lam = weights
            .w(h)
            .matvec_transposed(&vprime)?
            .truncated(spec.layer_width(h))
            .scaled(-1.0);
        *states.multiplier_mut(i, crate::graph::NodeId((h - 1) as u32)) = lam.clone();
        for l in (1..h).rev() {
            let feed = feed_of(states.state(i, var_ids[l]), spec.bias);
            let pre = weights.w(l).matvec(&feed)?;
            let weighted = lam.hadamard(&spec.activation.apply_derivative(&pre))?;
            lam = weights
                .w(l)
                .matvec_transposed(&weighted)?
                .truncated(spec.layer_width(l));
            *states.multiplier_mut(i, crate::graph::NodeId((l - 1) as u32)) = lam.clone();
        }
    }

    let bp = backprop_grad(weights, spec, data)?;
    let mut worst = 0.0f64;
    for l in 0..spec.num_weights() {
        let lp = lagrangian::grad_weights(
            &graph,
            &states,
            weights,
            data,
            &ident,
            spec.loss,
            &RegConfig::NONE,
            l,
        )?;
        let scale = bp[l]
            .as_slice()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-12);
        for (a, b) in lp.as_slice().iter().zip(bp[l].as_slice()) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    Ok(worst)
}
