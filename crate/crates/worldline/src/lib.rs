//! Hierarchical object discovery on labeled 2-D point clouds.
//!
//! The crate binds each object to a *worldline*: a column of attention slots
//! that share one spatial position but sit at different temporal coordinates,
//! one per hierarchy level. Attention between point features and slots runs
//! in one of four geometries (Lorentzian light cones, a Poincaré-ball
//! variant, and two Euclidean baselines), on top of a small reverse-mode
//! autodiff engine. Scene generators, clustering metrics, a training loop,
//! and an experiment-matrix runner round out a self-contained benchmark.
//!
//! Start from the runnable examples: `train_single`, `experiment_matrix`,
//! `density_report`, `scene_gallery`, `sensitivity_grid`, `gradient_audit`.

pub mod autodiff;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod scenes;
pub mod report;
pub mod training;
