//! Closed-loop active learning at desk scale.
//!
//! Synthetic rooms stand in for real scans and a nearest-prototype classifier
//! stands in for the segmentation network, so every selection strategy can be
//! run end to end in seconds.

mod active_loop;
mod metrics;
mod predictor;
mod report;
mod scene;

pub use active_loop::{
    fully_supervised_miou, prepare_corpus, run_active_loop, run_active_loop_with, Corpus,
    LoopConfig, PreparedScan, Strategy,
};
pub use metrics::{class_distribution_ratio, compute_iou, IouReport};
pub use predictor::{point_features, PrototypePredictor, FEATURE_DIM};
pub use report::{parse_reports, write_reports, RoundReport};
pub use scene::{
    benchmark_scenes, generate_scene, BenchmarkSpec, ClassStyle, Scene, SceneSpec, Surface,
    SurfaceKind, BENCHMARK_CLASSES, CLUTTER,
};
