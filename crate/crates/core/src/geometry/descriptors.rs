use rayon::prelude::*;

use super::{symmetric_eigenvalues, KdTree, Neighborhoods};
use crate::cloud_io::PointCloud;
use crate::error::{Error, Result};

/// Neighborhood size used for both descriptors unless overridden.
pub const DEFAULT_K: usize = 50;

/// Below this eigenvalue sum a neighborhood is treated as a single point.
const DEGENERATE_SPREAD: f64 = 1e-12;

/// Per-point color discontinuity and surface variation for one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PointDescriptors {
    pub color_disc: Vec<f64>,
    pub surf_var: Vec<f64>,
}

/// Mean 1-norm color difference between each point and its k neighbors,
/// colors scaled to `[0, 1]` per channel.
pub fn color_discontinuity_points(
    cloud: &PointCloud,
    index: &KdTree,
    k: usize,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::validation("color discontinuity needs k >= 1"));
    }
    color_discontinuity_from(cloud, &index.knn_all(k))
}

pub fn color_discontinuity_from(cloud: &PointCloud, hoods: &Neighborhoods) -> Result<Vec<f64>> {
    if !cloud.has_colors() {
        return Err(Error::validation(format!(
            "scan {} has no colors; color discontinuity is undefined (use beta = 0)",
            cloud.scan_id()
        )));
    }
    Ok((0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let nbrs = hoods.of(i);
            if nbrs.is_empty() {
                return 0.0;
            }
            let ci = cloud.color_unit(i).expect("colors present");
            let sum: f64 = nbrs
                .iter()
                .map(|n| {
                    let cj = cloud.color_unit(n.index as usize).expect("colors present");
                    (0..3).map(|c| (ci[c] - cj[c]).abs()).sum::<f64>()
                })
                .sum();
            sum / nbrs.len() as f64
        })
        .collect())
}

/// Surface variation `λ0 / (λ0 + λ1 + λ2)` of each point's neighborhood,
/// the point itself included.
pub fn surface_variation_points(cloud: &PointCloud, index: &KdTree, k: usize) -> Result<Vec<f64>> {
    if k < 3 {
        return Err(Error::validation("surface variation needs k >= 3"));
    }
    if index.len() != cloud.len() {
        return Err(Error::validation(
            "spatial index was built over a different scan",
        ));
    }
    Ok(surface_variation_from(index, &index.knn_all(k)))
}

pub fn surface_variation_from(index: &KdTree, hoods: &Neighborhoods) -> Vec<f64> {
    (0..index.len())
        .into_par_iter()
        .map(|i| {
            let patch: Vec<[f64; 3]> = std::iter::once(index.point(i))
                .chain(hoods.of(i).iter().map(|n| index.point(n.index as usize)))
                .collect();
            patch_surface_variation(&patch)
        })
        .collect()
}

pub(crate) fn patch_surface_variation(patch: &[[f64; 3]]) -> f64 {
    if !distinct_at_least_three(patch) {
        return 0.0;
    }
    let n = patch.len() as f64;
    let mut mean = [0.0; 3];
    for p in patch {
        for a in 0..3 {
            mean[a] += p[a];
        }
    }
    mean = mean.map(|m| m / n);
    let mut cov = [[0.0; 3]; 3];
    for p in patch {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for r in 0..3 {
            for c in r..3 {
                cov[r][c] += d[r] * d[c];
            }
        }
    }
    for r in 0..3 {
        for c in r..3 {
            cov[r][c] /= n;
            cov[c][r] = cov[r][c];
        }
    }
    let eig = symmetric_eigenvalues(cov);
    let total: f64 = eig.iter().sum();
    if total < DEGENERATE_SPREAD {
        return 0.0;
    }
    (eig[0] / total).clamp(0.0, 1.0 / 3.0)
}

fn distinct_at_least_three(patch: &[[f64; 3]]) -> bool {
    let mut seen: Vec<[f64; 3]> = Vec::with_capacity(3);
    for p in patch {
        if !seen.contains(p) {
            seen.push(*p);
            if seen.len() == 3 {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn colored(positions: Vec<[f32; 3]>, colors: Vec<[u8; 3]>) -> PointCloud {
        PointCloud::new("c", positions, Some(colors), None).unwrap()
    }

    #[test]
    fn uniform_color_has_no_discontinuity() {
        let cloud = colored(
            (0..30).map(|i| [i as f32, 0.0, 0.0]).collect(),
            vec![[10, 20, 30]; 30],
        );
        let idx = KdTree::build(&cloud);
        let cd = color_discontinuity_points(&cloud, &idx, 5).unwrap();
        assert!(cd.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn white_black_pair_scores_three() {
        let cloud = colored(
            vec![[0.0; 3], [1.0, 0.0, 0.0]],
            vec![[255, 255, 255], [0, 0, 0]],
        );
        let idx = KdTree::build(&cloud);
        assert_eq!(
            color_discontinuity_points(&cloud, &idx, 1).unwrap(),
            vec![3.0, 3.0]
        );
    }

    #[test]
    fn colorless_scan_is_an_error() {
        let cloud = PointCloud::new("c", vec![[0.0; 3], [1.0; 3]], None, None).unwrap();
        let idx = KdTree::build(&cloud);
        assert!(color_discontinuity_points(&cloud, &idx, 1).is_err());
    }

    #[test]
    fn degenerate_patches_score_zero() {
        assert_eq!(patch_surface_variation(&[[0.0; 3]; 5]), 0.0);
        assert_eq!(
            patch_surface_variation(&[[0.0; 3], [1.0; 3], [0.0; 3]]),
            0.0
        );
        // collinear: two zero eigenvalues, so σ = 0 exactly up to rounding
        let line: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        assert!(patch_surface_variation(&line) < 1e-12);
    }

    #[test]
    fn k_preconditions() {
        let cloud = PointCloud::new("c", vec![[0.0; 3], [1.0; 3]], None, None).unwrap();
        let idx = KdTree::build(&cloud);
        assert!(surface_variation_points(&cloud, &idx, 2).is_err());
    }
}
