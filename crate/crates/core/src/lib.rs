//! Contractive graph neural network layers.
//!
//! GCN (`σ(A X W)`) and GraphConv (`σ(X W1 + Ã X W2)`) layers are made
//! contractive by clipping the singular values of their weights:
//!
//! * GCN contracts when `‖W‖ · ‖A‖ ≤ 1`.
//! * GraphConv contracts when `‖W1‖ + ‖W2‖ · ‖Ã‖ ≤ 1`; the budget is split
//!   with a coefficient `α`, clipping `W1` to `α` and `W2` to `(1 − α)/‖Ã‖`.
//!
//! [`verify`] certifies these conditions analytically and checks them
//! empirically with seeded perturbation trials; [`train`] runs projected
//! gradient descent on a small node-classification task.

pub mod error;
pub mod graph;
pub mod layers;
pub mod linalg;
pub mod parallel;
pub mod projection;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{AdjacencyMode, Graph};
pub use layers::{Activation, GcnLayer, GraphConvLayer, Layers, Model};
pub use linalg::{Matrix, SvdFactors};
pub use projection::{AlphaSplit, ClipThreshold};
pub use verify::{ContractionCertificate, PerturbationReport};
