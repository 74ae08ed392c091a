//! Parallel/sequential equivalence and partition policy.

use lp_core::architectures::{build_graph, ArchKind, NetworkSpec};
use lp_core::data::gen_xor;
use lp_core::optimizer::{step, TrainConfig};
use lp_core::parallel::{parallel_step, speedup_probe};
use lp_core::{
    ActivationKind, ConstraintKind, LossKind, LpError, RegConfig, StateStore, WeightStore,
};

fn spec(arch: ArchKind, widths: &[usize]) -> NetworkSpec {
    NetworkSpec::new(
        arch,
        widths.to_vec(),
        ActivationKind::Tanh,
        LossKind::SquaredError,
    )
}

#[test]
fn single_worker_matches_sequential_bitwise() {
    let spec = spec(ArchKind::Mlp, &[2, 5, 4, 1]);
    let graph = build_graph(&spec).unwrap();
    let data = gen_xor();
    let g = ConstraintKind::EpsLin { epsilon: 0.05 };
    let config = TrainConfig {
        reg: RegConfig { rho: 0.3, alpha: 0.01 },
        ..TrainConfig::default()
    };

    let mut w_seq = WeightStore::init_random(&spec, 3).unwrap();
    let mut s_seq = StateStore::init(&graph, &data).unwrap();
    let mut w_par = w_seq.clone();
    let mut s_par = s_seq.clone();
    for iter in 0..20 {
        let a = step(&graph, &mut s_seq, &mut w_seq, &data, &g, &config, iter).unwrap();
        let b =
            parallel_step(&graph, &mut s_par, &mut w_par, &data, &g, &config, iter, 1).unwrap();
        assert_eq!(a, b, "iteration {iter}");
    }
    assert_eq!(s_seq, s_par);
    assert_eq!(w_seq, w_par);
}

#[test]
fn worker_counts_agree_bitwise_on_resnet() {
    let spec = spec(ArchKind::ResNetDirect, &[3, 3, 3, 3, 2]);
    let graph = build_graph(&spec).unwrap();
    let data = lp_core::oracles::random_dataset(&spec, 3, 8);
    let g = ConstraintKind::EpsAbs { epsilon: 0.1 };
    let config = TrainConfig {
        reg: RegConfig { rho: 0.5, alpha: 0.0 },
        ..TrainConfig::default()
    };
    let h = spec.hidden_layers();
    let mut reference: Option<(StateStore, WeightStore)> = None;
    for workers in [1usize, 2, h + 1, 64] {
        let mut w = WeightStore::init_random(&spec, 5).unwrap();
        let mut s = StateStore::init(&graph, &data).unwrap();
        for iter in 0..10 {
            parallel_step(&graph, &mut s, &mut w, &data, &g, &config, iter, workers).unwrap();
        }
        match &reference {
            None => reference = Some((s, w)),
            Some((s0, w0)) => {
                assert_eq!(&s, s0, "workers={workers}");
                assert_eq!(&w, w0, "workers={workers}");
            }
        }
    }
}

#[test]
fn non_nearest_neighbor_graphs_are_rejected() {
    let tilde = spec(ArchKind::ResNetTilde, &[2, 2, 2, 1]);
    let graph = build_graph(&tilde).unwrap();
    let data = lp_core::oracles::random_dataset(&tilde, 2, 1);
    let mut w = WeightStore::init_random(&tilde, 1).unwrap();
    let mut s = StateStore::init(&graph, &data).unwrap();
    let err = parallel_step(
        &graph,
        &mut s,
        &mut w,
        &data,
        &ConstraintKind::Identity,
        &TrainConfig::default(),
        0,
        2,
    )
    .unwrap_err();
    match err {
        LpError::Unsupported(msg) => {
            assert!(msg.contains("every layer below"), "got: {msg}")
        }
        other => panic!("expected unsupported, got {other}"),
    }

    let mut rnn = spec(ArchKind::Rnn, &[2, 3, 1]);
    rnn.seq_len = 2;
    let graph = build_graph(&rnn).unwrap();
    let data = lp_core::oracles::random_dataset(&rnn, 2, 1);
    let mut w = WeightStore::init_random(&rnn, 1).unwrap();
    let mut s = StateStore::init(&graph, &data).unwrap();
    assert!(parallel_step(
        &graph,
        &mut s,
        &mut w,
        &data,
        &ConstraintKind::Identity,
        &TrainConfig::default(),
        0,
        2,
    )
    .is_err());
}

#[test]
fn speedup_probe_reports_and_clamps() {
    let spec = spec(ArchKind::Mlp, &[4, 8, 8, 8, 2]);
    let data = lp_core::oracles::random_dataset(&spec, 8, 2);
    let report = speedup_probe(
        &spec,
        &data,
        &ConstraintKind::Identity,
        &TrainConfig::default(),
        3,
        &[1, 2, 64],
    )
    .unwrap();
    assert_eq!(report.rows.len(), 3);
    assert_eq!(report.rows[0].workers_used, 1);
    assert!(!report.rows[0].clamped);
    // 64 workers exceed the H + 1 = 4 units.
    assert_eq!(report.rows[2].workers_used, 4);
    assert!(report.rows[2].clamped);
    for row in &report.rows {
        assert!(row.secs_per_iter > 0.0);
    }
}

#[test]
fn speedup_probe_records_deep_narrow_net() {
    // Measurement only, per the probe's contract: the deep narrow case tends
    // to show a speedup but no threshold is asserted.
    let mut widths = vec![16usize];
    widths.extend(std::iter::repeat_n(16, 32));
    widths.push(2);
    let spec = NetworkSpec::new(
        ArchKind::Mlp,
        widths,
        ActivationKind::Tanh,
        LossKind::SquaredError,
    );
    let data = lp_core::oracles::random_dataset(&spec, 16, 4);
    let report = speedup_probe(
        &spec,
        &data,
        &ConstraintKind::Identity,
        &TrainConfig::default(),
        5,
        &[1, 4],
    )
    .unwrap();
    let single = report.rows[0].secs_per_iter;
    let four = report.rows[1].secs_per_iter;
    println!(
        "speedup probe (H=32, width 16): 1 worker {:.3e} s/iter, 4 workers {:.3e} s/iter, \
         ratio {:.2}x",
        single,
        four,
        single / four
    );
    assert_eq!(report.rows.len(), 2);
}
