//! Spatial indexing and per-point local descriptors.

mod descriptors;
mod eigen;
mod kdtree;

pub use descriptors::{
    color_discontinuity_from, color_discontinuity_points, surface_variation_from,
    surface_variation_points, PointDescriptors, DEFAULT_K,
};
pub use eigen::symmetric_eigenvalues;
pub use kdtree::{brute_force_knn, KdTree, Neighbor, Neighborhoods};

pub fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}
