//! Class-incremental semantic segmentation for 3D point clouds.
//!
//! The library implements a two-phase continual-learning pipeline:
//!
//! - **Base phase**: per-class geometric and semantic prototypes are
//!   maintained with similarity-driven adaptive momentum, fused into
//!   per-point prototype features by an attention mechanism, combined with
//!   edge features through an MLP with max pooling, and used to train a
//!   point-wise extractor + classifier ([`protoguard`]).
//! - **Novel phase**: the frozen base model guides pseudo-label propagation
//!   for newly introduced classes via BALD uncertainty over neighborhood
//!   configurations, density-aware adaptive thresholds and a four-scenario
//!   hierarchical decision rule ([`propel`]).
//!
//! Around the two phases sit a synthetic scene generator with controllable
//! long-tail skew and class overlap ([`cloud`]), hand-crafted per-point
//! features ([`features`]), a manually differentiated network ([`network`]),
//! an experiment harness for single- and multi-step class-incremental runs
//! with baseline arms and an ablation grid ([`cil`]), and evaluation
//! utilities ([`eval`]).
//!
//! ## Runnable examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --release --example generate_scene
//! cargo run --release --example knn_and_features
//! cargo run --release --example train_base_protoguard
//! cargo run --release --example uncertainty_and_pseudo_labels
//! cargo run --release --example single_step_cil
//! cargo run --release --example ablation_grid
//! cargo run --release --example multi_step_cil
//! cargo run --release --example evaluate_miou
//! ```
//!
//! A thin CLI (`pointcil`) exposes the same flows as subcommands
//! (`gen-scene`, `train-base`, `train-novel`, `run-cil`, `run-ablation`,
//! `eval`, `overlap`); see the crate README.

// indexed loops over small fixed-size numeric buffers are the house style,
// and `!(x > 0.0)` deliberately rejects NaN in validations
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cil;
pub mod cli;
pub mod cloud;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod knn;
pub mod linalg;
pub mod model;
pub mod network;
pub mod propel;
pub mod protoguard;
pub mod rng;
mod sertext;

pub use cloud::{generate_scene, load_cloud, save_cloud, CloudFormat, PointCloud, SceneSpec, IGNORE_LABEL};
pub use error::{Error, Result};
pub use knn::KnnIndex;
pub use model::{PreparedCloud, SegModel};
