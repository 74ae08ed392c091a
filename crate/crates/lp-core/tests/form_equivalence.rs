#![allow(clippy::needless_range_loop)]

//! Equivalence of the two residual-network parameterizations under the
//! change of variables xt_l = x_l - x_{l-1}.

use lp_core::architectures::{build_graph, tilde_map, ArchKind, NetworkSpec};
use lp_core::lagrangian::{grad_state, lagrangian_value};
use lp_core::oracles::{random_dataset, randomize_states};
use lp_core::{
    ActivationKind, ConstraintKind, LossKind, RegConfig, StateAccess, StateStore, Vector,
    WeightStore,
};

struct Pair {
    direct_graph: lp_core::ConstraintGraph,
    tilde_graph: lp_core::ConstraintGraph,
    weights: WeightStore,
    direct_states: StateStore,
    tilde_states: StateStore,
    data: lp_core::Dataset,
    loss: LossKind,
}

/// Random direct-form instance plus its tilde-mapped twin with shared
/// weights and multipliers.
fn random_pair(widths: &[usize], seed: u64) -> Pair {
    let direct = NetworkSpec::new(
        ArchKind::ResNetDirect,
        widths.to_vec(),
        ActivationKind::Tanh,
        LossKind::SquaredError,
    );
    let tilde = NetworkSpec::new(
        ArchKind::ResNetTilde,
        widths.to_vec(),
        ActivationKind::Tanh,
        LossKind::SquaredError,
    );
    let direct_graph = build_graph(&direct).unwrap();
    let tilde_graph = build_graph(&tilde).unwrap();
    let data = random_dataset(&direct, 2, seed);
    let weights = WeightStore::init_random(&direct, seed ^ 0xABCD).unwrap();
    let mut direct_states = StateStore::init(&direct_graph, &data).unwrap();
    randomize_states(&direct_graph, &mut direct_states, seed ^ 0x1234);
    let mut tilde_states = StateStore::init(&tilde_graph, &data).unwrap();

    let h = direct.hidden_layers();
    let d_ids: Vec<_> = direct_graph.var_ids().collect();
    let t_ids: Vec<_> = tilde_graph.var_ids().collect();
    for i in 0..data.len() {
        let input = direct_states.state(i, d_ids[0]).clone();
        let xs: Vec<Vector> = (1..=h)
            .map(|l| direct_states.state(i, d_ids[l]).clone())
            .collect();
        let tildes = tilde_map(&input, &xs).unwrap();
        for (l, t) in tildes.into_iter().enumerate() {
            *tilde_states.state_mut(i, t_ids[l + 1]) = t;
        }
        for n in direct_graph.node_ids() {
            let lam = direct_states.multiplier(i, n).clone();
            *tilde_states.multiplier_mut(i, n) = lam;
        }
    }
    Pair {
        direct_graph,
        tilde_graph,
        weights,
        direct_states,
        tilde_states,
        data,
        loss: LossKind::SquaredError,
    }
}

#[test]
fn lagrangian_values_agree_under_the_variable_map() {
    let kinds = [
        ConstraintKind::Identity,
        ConstraintKind::EpsAbs { epsilon: 0.2 },
        ConstraintKind::EpsLin { epsilon: 0.2 },
    ];
    for seed in 0..10u64 {
        let pair = random_pair(&[3, 3, 3, 3, 2], seed);
        for g in &kinds {
            for rho in [0.0, 0.1] {
                let reg = RegConfig { rho, alpha: 0.0 };
                let a = lagrangian_value(
                    &pair.direct_graph,
                    &pair.direct_states,
                    &pair.weights,
                    &pair.data,
                    g,
                    pair.loss,
                    &reg,
                )
                .unwrap();
                let b = lagrangian_value(
                    &pair.tilde_graph,
                    &pair.tilde_states,
                    &pair.weights,
                    &pair.data,
                    g,
                    pair.loss,
                    &reg,
                )
                .unwrap();
                assert!(
                    (a - b).abs() <= 1e-12,
                    "seed {seed} {g:?} rho {rho}: direct {a} vs tilde {b}"
                );
            }
        }
    }
}

#[test]
fn tilde_gradient_is_transposed_prefix_map_of_direct_gradient() {
    // x = T xt with T lower-triangular ones, so grad_xt = T^T grad_x:
    // the tilde gradient at layer k is the sum of direct gradients at k..H.
    for seed in 0..10u64 {
        let pair = random_pair(&[3, 3, 3, 3, 2], seed + 50);
        let g = ConstraintKind::Identity;
        let reg = RegConfig::NONE;
        let h = pair.direct_graph.spec().hidden_layers();
        let d_ids: Vec<_> = pair.direct_graph.var_ids().collect();
        let t_ids: Vec<_> = pair.tilde_graph.var_ids().collect();
        for i in 0..pair.data.len() {
            let direct_grads: Vec<Vector> = (1..=h)
                .map(|l| {
                    grad_state(
                        &pair.direct_graph,
                        &pair.direct_states,
                        &pair.weights,
                        &pair.data,
                        &g,
                        pair.loss,
                        &reg,
                        i,
                        d_ids[l],
                    )
                    .unwrap()
                })
                .collect();
            for k in 1..=h {
                let tilde_grad = grad_state(
                    &pair.tilde_graph,
                    &pair.tilde_states,
                    &pair.weights,
                    &pair.data,
                    &g,
                    pair.loss,
                    &reg,
                    i,
                    t_ids[k],
                )
                .unwrap();
                let mut expected = Vector::zeros(tilde_grad.len());
                for dg in direct_grads.iter().skip(k - 1) {
                    expected.add_assign(dg).unwrap();
                }
                for c in 0..tilde_grad.len() {
                    assert!(
                        (tilde_grad[c] - expected[c]).abs() <= 1e-10,
                        "seed {seed} example {i} layer {k} comp {c}: {} vs {}",
                        tilde_grad[c],
                        expected[c]
                    );
                }
            }
        }
    }
}
