//! Layer-parallel execution of a Jacobi step.
//!
//! Each layer's computations (its weight gradient, its state gradients, its
//! residuals) form one work unit; an extra unit covers the output weight
//! matrix. Units only read variables of their own and neighboring layers, so
//! they can run on separate workers against the frozen snapshot. A barrier
//! separates the concurrent read-only phase from the (coordinator-applied)
//! write phase, and the deterministic summation order of the underlying
//! arithmetic makes the result bitwise identical to the sequential step for
//! any worker count.
//!
//! Graphs whose dependencies are not nearest-neighbor (the tilde residual
//! form) and time-unrolled recurrent graphs are rejected.

use crate::architectures::{ArchKind, NetworkSpec};
use crate::constraint::ConstraintKind;
use crate::data::Dataset;
use crate::error::{LpError, Result};
use crate::graph::{ConstraintGraph, NodeId, VarId};
use crate::lagrangian::{self, RegConfig};
use crate::linalg::{Matrix, Vector};
use crate::optimizer::{apply_step_grads, IterMetrics, StepGrads, TrainConfig};
use crate::store::{StateAccess, StateStore, WeightStore};
use std::time::Instant;

/// One layer's work in a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Unit {
    /// Constraint layer `l` in 1..=H: gradient of W_{l-1}, of x_l (every
    /// example), and the residuals of node l.
    Layer(usize),
    /// Gradient of the output weight matrix.
    OutputWeight,
}

#[derive(Clone, Debug)]
pub(crate) struct UnitGrads {
    pub weight_index: usize,
    pub weight_grad: Matrix,
    /// (variable, node, per-example state grads, per-example residuals).
    pub layer: Option<(VarId, NodeId, Vec<Vector>, Vec<Vector>)>,
}

pub(crate) fn compute_unit<S: StateAccess>(
    graph: &ConstraintGraph,
    states: &S,
    weights: &WeightStore,
    data: &Dataset,
    g: &ConstraintKind,
    reg: &RegConfig,
    unit: Unit,
) -> Result<UnitGrads> {
    let loss = graph.spec().loss;
    let examples: Vec<usize> = (0..data.len()).collect();
    match unit {
        Unit::OutputWeight => {
            let l = graph.output_weight();
            let gw = lagrangian::grad_weights_for(
                graph, states, weights, data, g, loss, reg, l, &examples,
            )?;
            if !gw.is_finite() {
                return Err(LpError::NonFinite(format!("weight gradient W[{l}]")));
            }
            Ok(UnitGrads {
                weight_index: l,
                weight_grad: gw,
                layer: None,
            })
        }
        Unit::Layer(l) => {
            let node = NodeId((l - 1) as u32);
            let var = graph.node(node).output;
            let gw = lagrangian::grad_weights_for(
                graph,
                states,
                weights,
                data,
                g,
                loss,
                reg,
                l - 1,
                &examples,
            )?;
            if !gw.is_finite() {
                return Err(LpError::NonFinite(format!("weight gradient W[{}]", l - 1)));
            }
            let mut xs = Vec::with_capacity(examples.len());
            let mut residuals = Vec::with_capacity(examples.len());
            for &i in &examples {
                let gx =
                    lagrangian::grad_state(graph, states, weights, data, g, loss, reg, i, var)?;
                if !gx.is_finite() {
                    return Err(LpError::NonFinite(format!(
                        "state gradient {} of example {i}",
                        graph.var_name(var)
                    )));
                }
                xs.push(gx);
                let gl = lagrangian::grad_multiplier(graph, states, weights, i, node, g)?;
                if !gl.is_finite() {
                    return Err(LpError::NonFinite(format!(
                        "multiplier gradient of node {} for example {i}",
                        node.index()
                    )));
                }
                residuals.push(gl);
            }
            Ok(UnitGrads {
                weight_index: l - 1,
                weight_grad: gw,
                layer: Some((var, node, xs, residuals)),
            })
        }
    }
}

pub(crate) fn check_nearest_neighbor(graph: &ConstraintGraph) -> Result<()> {
    match graph.spec().arch {
        ArchKind::Mlp | ArchKind::ResNetDirect => Ok(()),
        ArchKind::ResNetTilde => Err(LpError::Unsupported(
            "layer-parallel execution needs nearest-neighbor dependencies; \
             in the tilde residual form layer l reads every layer below it"
                .into(),
        )),
        ArchKind::Rnn => Err(LpError::Unsupported(
            "layer-parallel execution covers mlp and resnet graphs; \
             time-unrolled recurrent graphs are not partitioned by layer"
                .into(),
        )),
    }
}

/// Barrier-synchronized Jacobi step over `workers` threads. Bitwise identical
/// to [`crate::optimizer::step`]; worker counts above the number of units are
/// clamped.
#[allow(clippy::too_many_arguments)]
pub fn parallel_step(
    graph: &ConstraintGraph,
    states: &mut StateStore,
    weights: &mut WeightStore,
    data: &Dataset,
    g: &ConstraintKind,
    config: &TrainConfig,
    iter: usize,
    workers: usize,
) -> Result<IterMetrics> {
    check_nearest_neighbor(graph)?;
    let h = graph.spec().hidden_layers();
    let units: Vec<Unit> = (1..=h)
        .map(Unit::Layer)
        .chain(std::iter::once(Unit::OutputWeight))
        .collect();
    let workers = workers.max(1).min(units.len());
    let chunk = units.len().div_ceil(workers);

    // Phase 1: gradient computation against the frozen snapshot.
    let frozen_states: &StateStore = states;
    let frozen_weights: &WeightStore = weights;
    let mut results: Vec<Result<Vec<UnitGrads>>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = units
            .chunks(chunk)
            .map(|assigned| {
                scope.spawn(move || {
                    assigned
                        .iter()
                        .map(|&unit| {
                            compute_unit(
                                graph,
                                frozen_states,
                                frozen_weights,
                                data,
                                g,
                                &config.reg,
                                unit,
                            )
                        })
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        for handle in handles {
            results.push(handle.join().expect("worker panicked"));
        }
    });
    // Barrier passed; surface the first failure in unit order.
    let mut unit_grads = Vec::with_capacity(units.len());
    for chunk_result in results {
        let divergence = |e: LpError| match e {
            LpError::NonFinite(what) => LpError::Divergence { what, iter },
            other => other,
        };
        unit_grads.extend(chunk_result.map_err(divergence)?);
    }

    // Reassemble in layer order; values are bitwise those of the sequential
    // step because every unit ran the same per-item computations.
    let trainable: Vec<VarId> = graph.trainable_var_ids().collect();
    let mut w: Vec<Option<Matrix>> = vec![None; weights.num_w()];
    let mut x: Vec<Vec<Vector>> = vec![Vec::new(); data.len()];
    let mut lambda: Vec<Vec<Vector>> = vec![Vec::new(); data.len()];
    for ug in unit_grads {
        w[ug.weight_index] = Some(ug.weight_grad);
        if let Some((_, _, xs, residuals)) = ug.layer {
            for (i, gx) in xs.into_iter().enumerate() {
                x[i].push(gx);
            }
            for (i, gl) in residuals.into_iter().enumerate() {
                lambda[i].push(gl);
            }
        }
    }
    let grads = StepGrads {
        examples: (0..data.len()).collect(),
        trainable,
        w: w.into_iter().map(|m| m.expect("every W covered")).collect(),
        u: Vec::new(),
        x,
        lambda,
    };

    let metrics = crate::optimizer::metrics_from_grads(
        graph,
        states,
        weights,
        data,
        g,
        &config.reg,
        iter,
        &grads,
    )
    .map_err(|e| match e {
        LpError::NonFinite(what) => LpError::Divergence { what, iter },
        other => other,
    })?;

    // Phase 2: apply all updates.
    apply_step_grads(states, weights, &grads, config)?;
    Ok(metrics)
}

/// Training loop driven by [`parallel_step`]; identical stopping rule and
/// metrics cadence as [`crate::optimizer::train_observed`], and bitwise the
/// same trajectory. The experimental mini-batch mode is not partitioned by
/// layer and is rejected here.
pub fn train_parallel(
    graph: &ConstraintGraph,
    data: &Dataset,
    g: &ConstraintKind,
    config: &TrainConfig,
    workers: usize,
    observer: impl FnMut(&IterMetrics),
) -> Result<crate::optimizer::TrainRun> {
    check_nearest_neighbor(graph)?;
    if config.batch_size.is_some() {
        return Err(LpError::Unsupported(
            "mini-batch mode is not available with layer-parallel execution".into(),
        ));
    }
    struct ParallelStepper {
        workers: usize,
    }
    impl crate::optimizer::Stepper for ParallelStepper {
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
            _batch: Option<&[usize]>,
        ) -> Result<IterMetrics> {
            parallel_step(graph, states, weights, data, g, config, iter, self.workers)
        }
    }
    crate::optimizer::train_loop(graph, data, g, config, ParallelStepper { workers }, observer)
}

#[derive(Clone, Debug)]
pub struct SpeedupRow {
    pub workers_requested: usize,
    pub workers_used: usize,
    pub secs_per_iter: f64,
    pub clamped: bool,
}

#[derive(Clone, Debug)]
pub struct SpeedupReport {
    pub rows: Vec<SpeedupRow>,
}

/// Time `iters` parallel steps per requested worker count. Measurement only;
/// no threshold is asserted.
pub fn speedup_probe(
    spec: &NetworkSpec,
    data: &Dataset,
    g: &ConstraintKind,
    config: &TrainConfig,
    iters: usize,
    worker_counts: &[usize],
) -> Result<SpeedupReport> {
    let graph = crate::architectures::build_graph(spec)?;
    check_nearest_neighbor(&graph)?;
    let units = graph.spec().hidden_layers() + 1;
    let mut rows = Vec::with_capacity(worker_counts.len());
    for &requested in worker_counts {
        let used = requested.max(1).min(units);
        let mut weights = WeightStore::init_random(spec, config.seed)?;
        let mut states = StateStore::init(&graph, data)?;
        let start = Instant::now();
        for iter in 0..iters {
            parallel_step(
                &graph,
                &mut states,
                &mut weights,
                data,
                g,
                config,
                iter,
                used,
            )?;
        }
        let secs = start.elapsed().as_secs_f64() / iters.max(1) as f64;
        rows.push(SpeedupRow {
            workers_requested: requested,
            workers_used: used,
            secs_per_iter: secs,
            clamped: used != requested.max(1),
        });
    }
    Ok(SpeedupReport { rows })
}
