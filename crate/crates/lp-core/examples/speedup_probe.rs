//! Wall-clock probe of layer-parallel stepping. Measurement only; prints one
//! row per worker count.
//!
//! Run with: cargo run --release -p lp-core --example speedup_probe

use lp_core::architectures::{ArchKind, NetworkSpec};
use lp_core::optimizer::TrainConfig;
use lp_core::{ActivationKind, ConstraintKind, LossKind};

fn main() {
    for (h, width, n) in [(32usize, 16usize, 16usize), (8, 64, 32), (8, 128, 64)] {
        let mut widths = vec![width];
        widths.extend(std::iter::repeat_n(width, h));
        widths.push(2);
        let spec = NetworkSpec::new(
            ArchKind::Mlp,
            widths,
            ActivationKind::Tanh,
            LossKind::SquaredError,
        );
        let data = lp_core::oracles::random_dataset(&spec, n, 4);
        let report = lp_core::speedup_probe(
            &spec,
            &data,
            &ConstraintKind::Identity,
            &TrainConfig::default(),
            10,
            &[1, 2, 4, 8],
        )
        .expect("probe");
        println!("H={h} width={width} examples={n}");
        let base = report.rows[0].secs_per_iter;
        for row in &report.rows {
            println!(
                "  workers {:2} (requested {:2}{}): {:.3e} s/iter, {:.2}x",
                row.workers_used,
                row.workers_requested,
                if row.clamped { ", clamped" } else { "" },
                row.secs_per_iter,
                base / row.secs_per_iter
            );
        }
    }
}
