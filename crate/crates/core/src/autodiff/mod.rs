//! Minimal reverse-mode automatic differentiation over dense f64 matrices.
//!
//! The graph is define-by-run: each builder method evaluates its result
//! eagerly and records the operation so `backward` can replay the chain rule
//! in reverse. Everything is 64-bit; gradient checking against central
//! differences at 1e-4..1e-6 tolerances is not feasible in f32.

mod array;
mod gradcheck;
mod graph;

pub use array::Array;
pub use gradcheck::{grad_check, relative_error, DEFAULT_STEP};
pub use graph::{Gradients, Graph, NodeId};
