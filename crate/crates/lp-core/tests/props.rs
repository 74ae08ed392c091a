//! Property tests for the arithmetic and constraint-function invariants.

use lp_core::architectures::{tilde_inverse, tilde_map};
use lp_core::{ConstraintKind, Matrix, Vector};
use proptest::prelude::*;

fn small_f64() -> impl Strategy<Value = f64> {
    prop_oneof![(-10.0f64..10.0), (-0.3f64..0.3)]
}

proptest! {
    #[test]
    fn matvec_transposed_equals_matvec_of_transpose(
        rows in 1usize..6,
        cols in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let m = Matrix::new(rows, cols, (0..rows * cols).map(|_| next()).collect()).unwrap();
        let v = Vector::new((0..rows).map(|_| next()).collect());
        let a = m.matvec_transposed(&v).unwrap();
        let b = m.transpose().matvec(&v).unwrap();
        prop_assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn g_is_one_lipschitz(a in small_f64(), b in small_f64(), eps in 0.0f64..1.0) {
        for kind in [ConstraintKind::EpsAbs { epsilon: eps }, ConstraintKind::EpsLin { epsilon: eps }] {
            let d = (kind.g_value(a) - kind.g_value(b)).abs();
            prop_assert!(d <= (a - b).abs() + 1e-15, "{kind:?}: |G(a)-G(b)| = {d}");
        }
    }

    #[test]
    fn g_abs_is_nonnegative_and_dead_zone_is_exact(a in small_f64(), eps in 0.0f64..1.0) {
        let abs = ConstraintKind::EpsAbs { epsilon: eps };
        prop_assert!(abs.g_value(a) >= 0.0);
        if a.abs() <= eps {
            prop_assert_eq!(abs.g_value(a), 0.0);
            prop_assert_eq!(ConstraintKind::EpsLin { epsilon: eps }.g_value(a), 0.0);
        }
    }

    #[test]
    fn g_with_zero_epsilon_degenerates(a in small_f64()) {
        prop_assert_eq!(ConstraintKind::EpsAbs { epsilon: 0.0 }.g_value(a), a.abs());
        prop_assert_eq!(ConstraintKind::EpsLin { epsilon: 0.0 }.g_value(a), a);
    }

    #[test]
    fn tilde_round_trip_is_bitwise(
        n in 1usize..5,
        width in 1usize..4,
        seed in any::<u64>(),
    ) {
        // Uniform draws land on the 2^-52 grid, where differencing and
        // prefix-summing are exact; states with significance far below the
        // difference scale would not round-trip bitwise.
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 12) as f64 / (1u64 << 52) as f64) * 2.0 - 1.0
        };
        let input = Vector::new((0..width).map(|_| next()).collect());
        let states: Vec<Vector> = (0..n)
            .map(|_| Vector::new((0..width).map(|_| next()).collect()))
            .collect();
        let tildes = tilde_map(&input, &states).unwrap();
        let back = tilde_inverse(&input, &tildes).unwrap();
        for (x, b) in states.iter().zip(&back) {
            prop_assert_eq!(x.as_slice(), b.as_slice());
        }
    }
}
