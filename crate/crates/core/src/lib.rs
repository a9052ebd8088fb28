//! Region-based, diversity-aware active learning for point cloud semantic
//! segmentation.
//!
//! The crate splits each scan into supervoxel regions, scores every region by
//! softmax entropy, color discontinuity and structural complexity, penalizes
//! regions that fall into the same feature cluster as a higher-ranked region,
//! and spends a per-round point budget on the best remaining regions. A small
//! closed-loop simulator drives the whole pipeline with a prototype classifier
//! so selection strategies can be compared end to end.
//!
//! Module map:
//! - [`cloud_io`]: scans, region maps, predictions, labels, dataset state,
//!   and the binary/text file formats for all of them.
//! - [`geometry`]: kd-tree k-NN and per-point descriptors.
//! - [`supervoxel`]: voxel-cloud over-segmentation into regions.
//! - [`scoring`]: region information scores and ranking.
//! - [`diversity`]: region feature pooling, k-means and similar-region
//!   penalization.
//! - [`selection`]: budgeted acquisition and scan-level baselines.
//! - [`simulator`]: synthetic scenes, prototype predictor, the active loop
//!   and IoU metrics.
//! - [`config`] and [`cli`]: the `redal` command-line surface.

pub mod cli;
pub mod cloud_io;
pub mod config;
pub mod diversity;
pub mod error;
pub mod geometry;
pub mod scoring;
pub mod selection;
pub mod simulator;
pub mod supervoxel;

pub use error::{Error, Result};
