//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

pub mod golden;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redal::cloud_io::{Matrix, PointCloud, PredictionSet, RegionMap};

/// Indices of the k nearest other points by exhaustive sort, ties by index.
pub fn brute_knn(points: &[[f64; 3]], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, p)| {
            let q = points[i];
            (
                (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2),
                j,
            )
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Eigenvalues of a symmetric 3x3 matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(mut a: [[f64; 3]; 3]) -> [f64; 3] {
    for _ in 0..100 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off < 1e-300 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut b = a;
            for r in 0..3 {
                b[r][p] = c * a[r][p] - s * a[r][q];
                b[r][q] = s * a[r][p] + c * a[r][q];
            }
            let mut d = b;
            for col in 0..3 {
                d[p][col] = c * b[p][col] - s * b[q][col];
                d[q][col] = s * b[p][col] + c * b[q][col];
            }
            a = d;
        }
    }
    let mut e = [a[0][0], a[1][1], a[2][2]];
    e.sort_by(f64::total_cmp);
    e
}

/// Shannon entropy in nats with `0 ln 0 = 0` and a 1e-12 floor on non-zero entries.
pub fn entropy(row: &[f32]) -> f64 {
    let mut h = 0.0;
    for &p in row {
        if p > 0.0 {
            let p = f64::from(p).max(1e-12);
            h -= p * p.ln();
        }
    }
    h
}

/// Mean L1 color distance in unit RGB from point `i` to `nbrs`.
pub fn color_disc(cloud: &PointCloud, i: usize, nbrs: &[usize]) -> f64 {
    if nbrs.is_empty() {
        return 0.0;
    }
    let c = cloud.colors().unwrap();
    let mut total = 0.0;
    for &j in nbrs {
        for ch in 0..3 {
            total += (f64::from(c[i][ch]) / 255.0 - f64::from(c[j][ch]) / 255.0).abs();
        }
    }
    total / nbrs.len() as f64
}

/// Surface variation of a patch from a Jacobi decomposition of its covariance.
pub fn surface_variation(patch: &[[f64; 3]]) -> f64 {
    let mut distinct: Vec<[f64; 3]> = Vec::new();
    for p in patch {
        if !distinct.contains(p) {
            distinct.push(*p);
        }
    }
    if distinct.len() < 3 {
        return 0.0;
    }
    let n = patch.len() as f64;
    let mut mean = [0.0; 3];
    for p in patch {
        for a in 0..3 {
            mean[a] += p[a] / n;
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for p in patch {
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += (p[r] - mean[r]) * (p[c] - mean[c]) / n;
            }
        }
    }
    let e = jacobi_eigenvalues(cov);
    let sum: f64 = e.iter().sum();
    if sum < 1e-12 {
        0.0
    } else {
        e[0].max(0.0) / sum
    }
}

/// Region means of a per-point quantity, by direct summation over the assignment.
pub fn region_mean(values: &[f64], region_of: &[u32], regions: usize) -> Vec<f64> {
    let mut sum = vec![0.0; regions];
    let mut count = vec![0usize; regions];
    for (i, &r) in region_of.iter().enumerate() {
        sum[r as usize] += values[i];
        count[r as usize] += 1;
    }
    sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
}

/// A random scan with colors, predictions and a region map.
pub struct Fixture {
    pub cloud: PointCloud,
    pub pred: PredictionSet,
    pub regions: RegionMap,
    pub k: usize,
}

fn softmax_row(rng: &mut ChaCha8Rng, classes: usize) -> Vec<f32> {
    match rng.random_range(0..6) {
        0 => {
            let mut row = vec![0.0; classes];
            row[rng.random_range(0..classes)] = 1.0;
            row
        }
        1 => vec![1.0 / classes as f32; classes],
        _ => {
            let scale = rng.random_range(0.1..6.0);
            let logits: Vec<f64> = (0..classes).map(|_| rng.random::<f64>() * scale).collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            let mut row: Vec<f32> = logits.iter().map(|l| (l.exp() / z) as f32).collect();
            let s: f32 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        }
    }
}

/// Mixed geometry: a noisy plane, a tight blob and uniform scatter.
pub fn fixture(seed: u64, max_points: usize, max_classes: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(12..=max_points);
    let classes = rng.random_range(2..=max_classes);
    let mut positions = Vec::with_capacity(n);
    for _ in 0..n {
        let p = match rng.random_range(0..3) {
            0 => [
                rng.random_range(0.0..4.0),
                rng.random_range(0.0..4.0),
                rng.random_range(-0.01..0.01),
            ],
            1 => [
                2.0 + rng.random_range(-0.3..0.3),
                2.0 + rng.random_range(-0.3..0.3),
                1.0 + rng.random_range(-0.3..0.3),
            ],
            _ => [
                rng.random_range(0.0..4.0),
                rng.random_range(0.0..4.0),
                rng.random_range(0.0..2.0),
            ],
        };
        positions.push(p.map(|v: f64| v as f32));
    }
    let colors = (0..n)
        .map(|_| [rng.random(), rng.random(), rng.random()])
        .collect();
    let cloud = PointCloud::new(format!("fx{seed}"), positions, Some(colors), None).unwrap();
    let rows: Vec<Vec<f32>> = (0..n).map(|_| softmax_row(&mut rng, classes)).collect();
    let pred =
        PredictionSet::new(cloud.scan_id(), Matrix::from_rows(&rows).unwrap(), None).unwrap();
    let r = rng.random_range(1..=(n / 4).max(1));
    let mut region_of: Vec<u32> = (0..n).map(|i| (i % r) as u32).collect();
    for i in (1..n).rev() {
        region_of.swap(i, rng.random_range(0..=i));
    }
    let mut seen = vec![u32::MAX; r];
    let mut next = 0;
    for v in region_of.iter_mut() {
        if seen[*v as usize] == u32::MAX {
            seen[*v as usize] = next;
            next += 1;
        }
        *v = seen[*v as usize];
    }
    let regions = RegionMap::from_assignment(cloud.scan_id(), region_of).unwrap();
    let k = [5, 10, 20, 50][rng.random_range(0..4)].min(n - 1);
    Fixture {
        cloud,
        pred,
        regions,
        k,
    }
}

/// Points of `cloud` as f64 triples.
pub fn points(cloud: &PointCloud) -> Vec<[f64; 3]> {
    (0..cloud.len()).map(|i| cloud.position_f64(i)).collect()
}

/// Naive repeated-multiply penalization: after each item is
/// finalized, every later item of the same cluster is multiplied by `eta`.
pub fn penalize_quadratic(phi: &[f64], labels: &[usize], eta: f64) -> Vec<f64> {
    let mut cur = phi.to_vec();
    for i in 0..phi.len() {
        for j in i + 1..phi.len() {
            if labels[j] == labels[i] {
                cur[j] *= eta;
            }
        }
    }
    cur
}

/// Per-cluster sweep: each cluster walks the ranked list once with its own weight.
pub fn penalize_per_cluster(phi: &[f64], labels: &[usize], clusters: usize, eta: f64) -> Vec<f64> {
    let mut out = vec![f64::NAN; phi.len()];
    for m in 0..clusters {
        let mut w = 1.0;
        for i in 0..phi.len() {
            if labels[i] == m {
                out[i] = phi[i] * w;
                w *= eta;
            }
        }
    }
    out
}
