//! Training neural networks as constrained optimization.
//!
//! Instead of backpropagating through the whole architecture, each layer's
//! output is a free per-example variable tied to the layer below by an
//! equality constraint `G(x_l - sigma(W_{l-1} x_{l-1})) = 0`. Learning runs
//! simultaneous gradient descent on the weights and states and gradient
//! ascent on the Lagrange multipliers of those constraints, so every gradient
//! only touches variables of neighboring layers. Once the constraints hold,
//! the states coincide with forward-pass activations and inference is the
//! classic forward computation.
//!
//! Modules:
//!
//! - [`linalg`] — dense f64 arithmetic with a deterministic summation order
//! - [`constraint`] — the constraint family: identity and two
//!   epsilon-insensitive variants
//! - [`graph`] / [`architectures`] — constraint graphs for MLPs, unrolled
//!   RNNs and both residual-network parameterizations
//! - [`lagrangian`] — the saddle objective and all analytic partials
//! - [`optimizer`] — the Jacobi descent/ascent loop, inference, accuracy
//! - [`parallel`] — layer-parallel execution, bitwise equal to sequential
//! - [`oracles`] — finite differences, classic backpropagation, and the
//!   stationarity-based recovery check
//! - [`data`] — CSV ingestion and synthetic datasets
//! - [`trace`] — read-access tracing used by the locality tests

pub mod activation;
pub mod architectures;
pub mod constraint;
pub mod data;
pub mod error;
pub mod graph;
pub mod lagrangian;
pub mod linalg;
pub mod loss;
pub mod optimizer;
pub mod oracles;
pub mod parallel;
pub mod store;
pub mod trace;

pub use activation::ActivationKind;
pub use architectures::{build_graph, tilde_inverse, tilde_map, ArchKind, NetworkSpec, Supervision};
pub use constraint::ConstraintKind;
pub use data::{gen_parity_sequences, gen_two_moons, gen_xor, load_csv, Dataset, ExampleInput};
pub use error::{LpError, Result};
pub use graph::{ConstraintGraph, ConstraintNode, NodeForm, NodeId, VarId};
pub use lagrangian::RegConfig;
pub use linalg::{Matrix, Vector};
pub use loss::LossKind;
pub use optimizer::{accuracy, infer, step, train, train_observed, IterMetrics, TrainConfig, TrainRun};
pub use parallel::{parallel_step, speedup_probe, train_parallel, SpeedupReport};
pub use store::{StateAccess, StateStore, WeightStore};
