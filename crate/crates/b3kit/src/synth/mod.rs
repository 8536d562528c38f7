//! Synthetic heteroscedastic multi-task benchmark.
//!
//! [`scene`] generates seeded ground-truth scenes with known per-region
//! noise variances; [`bench`] compares bridge-formation strategies on them,
//! fits the precision estimator against oracle targets, and bins the
//! precision-versus-error relationship.

pub mod bench;
pub mod scene;

pub use bench::{
    bench_csv_header, default_params_for, fit_instances, fit_pfe, latent_mse,
    precision_error_bins, run_fusion_bench, score_tasks, squared_error_map, BenchEntry, BinTable,
    FusionBenchConfig, FusionStrategy, PrecisionErrorBin, TaskScores, EDGE_TOLERANCE_RADIUS,
};
pub use scene::{
    emit_evidence, generate_scene, DecodedTasks, NoiseModel, SyntheticScene,
};
