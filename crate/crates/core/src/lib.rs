//! Scene-aware point-cloud semantic segmentation.
//!
//! A small per-point encoder is augmented with a scene-descriptor head whose
//! predicted multi-hot descriptor masks the per-point class probabilities,
//! plus a region similarity loss that pulls the features of high-confidence
//! points and their same-label neighbors together. Everything runs on a
//! minimal f64 reverse-mode autodiff core with a built-in finite-difference
//! verifier, and trains on procedurally generated labeled scenes.

pub mod autodiff;
pub mod backbone;
pub mod data;
pub mod descriptor;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod seeding;
pub mod trainer;
pub mod verify;

pub use autodiff::{grad_check, Array, Gradients, Graph, NodeId};
pub use geometry::PointCloud;
