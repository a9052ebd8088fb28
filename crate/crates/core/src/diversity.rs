//! Diversity-aware re-scoring.
//!
//! Regions are embedded by the mean of their point features, clustered with
//! k-means, and then walked in score order: each region's score is scaled by
//! its cluster's current weight, and that weight decays by `eta` every time
//! the cluster is visited. The j-th region of a cluster (0-based, in rank
//! order) therefore keeps `eta^j` of its score.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cloud_io::{save_matrix, Matrix, Payload, PredictionSet, RegionKey, RegionMap};
use crate::error::{Error, Result};
use crate::scoring::{parse_field, rank_cmp, ScoreRow, ScoreTable, SCORE_HEADER};

/// One feature row per candidate region.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionFeatureSet {
    keys: Vec<RegionKey>,
    dim: usize,
    data: Vec<f64>,
}

impl RegionFeatureSet {
    pub fn new(dim: usize) -> Self {
        Self {
            keys: Vec::new(),
            dim,
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, key: RegionKey, row: &[f64]) -> Result<()> {
        if self.keys.is_empty() && self.dim == 0 {
            self.dim = row.len();
        }
        if row.len() != self.dim || self.dim == 0 {
            return Err(Error::validation(format!(
                "feature row has {} values, expected {}",
                row.len(),
                self.dim
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite feature for region {} of {}",
                key.region_id, key.scan_id
            )));
        }
        self.keys.push(key);
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn extend(&mut self, other: RegionFeatureSet) -> Result<()> {
        for (k, row) in other
            .keys
            .into_iter()
            .zip(other.data.chunks_exact(other.dim.max(1)))
        {
            self.push(k, row)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn keys(&self) -> &[RegionKey] {
        &self.keys
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Keeps only rows whose key satisfies `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(&RegionKey) -> bool) {
        let mut out = RegionFeatureSet::new(self.dim);
        for i in 0..self.len() {
            if keep(&self.keys[i]) {
                out.keys.push(self.keys[i].clone());
                out.data.extend_from_slice(self.row(i));
            }
        }
        *self = out;
    }

    /// Z-scores every column in place; constant columns become zero.
    pub fn standardize(&mut self) {
        let n = self.len();
        if n == 0 {
            return;
        }
        for c in 0..self.dim {
            let mean = (0..n).map(|i| self.data[i * self.dim + c]).sum::<f64>() / n as f64;
            let var = (0..n)
                .map(|i| (self.data[i * self.dim + c] - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let sd = var.sqrt();
            for i in 0..n {
                let v = &mut self.data[i * self.dim + c];
                *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
            }
        }
    }

    /// Region-level REDALFTR payload, rows in key order of this set.
    pub fn to_payload(&self) -> Result<Payload> {
        let data = self.data.iter().map(|&v| v as f32).collect();
        Ok(Payload::Features(Matrix::new(self.len(), self.dim, data)?))
    }

    /// Builds a set from a feature matrix whose rows line up with `keys`.
    pub fn from_matrix(keys: Vec<RegionKey>, m: &Matrix) -> Result<Self> {
        if keys.len() != m.rows() {
            return Err(Error::validation(format!(
                "{} region keys for {} feature rows",
                keys.len(),
                m.rows()
            )));
        }
        let mut set = RegionFeatureSet::new(m.cols());
        for (k, row) in keys.into_iter().zip(m.iter_rows()) {
            let row: Vec<f64> = row.iter().map(|&v| f64::from(v)).collect();
            set.push(k, &row)?;
        }
        Ok(set)
    }
}

/// Mean point feature of every region of one scan.
pub fn pool_region_features(pred: &PredictionSet, regions: &RegionMap) -> Result<RegionFeatureSet> {
    let feats = pred.features().ok_or_else(|| {
        Error::validation(format!(
            "predictions for {} carry no point features; supply per-point features to pool",
            pred.scan_id()
        ))
    })?;
    if feats.rows() != regions.num_points() {
        return Err(Error::validation(format!(
            "{} feature rows for {} points",
            feats.rows(),
            regions.num_points()
        )));
    }
    let dim = feats.cols();
    let mut set = RegionFeatureSet::new(dim);
    let mut acc = vec![0.0; dim];
    for (r, pts) in regions.regions().iter().enumerate() {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for &p in pts {
            for (a, &f) in acc.iter_mut().zip(feats.row(p as usize)) {
                *a += f64::from(f);
            }
        }
        let m = pts.len() as f64;
        let row: Vec<f64> = acc.iter().map(|v| v / m).collect();
        set.push(RegionKey::new(regions.scan_id(), r as u32), &row)?;
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    dim: usize,
    centroids: Vec<f64>,
    assignment: Vec<usize>,
    inertia: f64,
    inertia_history: Vec<f64>,
}

impl ClusterModel {
    pub fn num_clusters(&self) -> usize {
        self.centroids.len() / self.dim.max(1)
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    /// Inertia after each assignment step, first to last.
    pub fn inertia_history(&self) -> &[f64] {
        &self.inertia_history
    }

    /// Centroids as REDALFTR, assignment as `scan_id\tregion_id\tcluster` TSV.
    pub fn save(
        &self,
        features: &RegionFeatureSet,
        centroids_path: &Path,
        assignment_path: &Path,
    ) -> Result<()> {
        let data = self.centroids.iter().map(|&v| v as f32).collect();
        save_matrix(
            centroids_path,
            &Payload::Features(Matrix::new(self.num_clusters(), self.dim, data)?),
        )?;
        let mut tsv = String::from("scan_id\tregion_id\tcluster\n");
        for (k, c) in features.keys().iter().zip(&self.assignment) {
            writeln!(tsv, "{}\t{}\t{}", k.scan_id, k.region_id, c).expect("string write");
        }
        std::fs::write(assignment_path, tsv).map_err(|e| Error::io(assignment_path, e))
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(row, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Seeded k-means++ followed by Lloyd iterations.
///
/// Stops at an assignment fixpoint or after `max_iters` updates. A cluster
/// left empty takes over the point that is farthest from its own centroid.
pub fn kmeans(
    features: &RegionFeatureSet,
    m: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterModel> {
    let n = features.len();
    if m < 1 {
        return Err(Error::validation("k-means needs at least one cluster"));
    }
    if m > n {
        return Err(Error::validation(format!(
            "k-means asked for {m} clusters over {n} regions"
        )));
    }
    let dim = features.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(features.row(i), features.row(chosen[0])))
        .collect();
    while chosen.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // rounding can leave target past the last positive weight
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).expect("positive total");
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("m <= n")
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(features.row(i), features.row(next)));
        }
    }
    let mut centroids: Vec<f64> = chosen
        .iter()
        .flat_map(|&i| features.row(i).to_vec())
        .collect();

    let assign = |centroids: &[f64]| -> (Vec<usize>, f64) {
        let hits: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| nearest(features.row(i), centroids, dim))
            .collect();
        let inertia = hits.iter().map(|h| h.1).sum();
        (hits.into_iter().map(|h| h.0).collect(), inertia)
    };

    let (mut assignment, mut inertia) = assign(&centroids);
    let mut history = vec![inertia];
    for _ in 0..max_iters {
        update_centroids(features, &mut assignment, &mut centroids, m);
        let (next, next_inertia) = assign(&centroids);
        let converged = next == assignment;
        assignment = next;
        inertia = next_inertia;
        history.push(inertia);
        if converged {
            break;
        }
    }
    if repair_empty(features, &mut assignment, &centroids, m) {
        update_centroids(features, &mut assignment, &mut centroids, m);
        inertia = (0..n)
            .map(|i| {
                sq_dist(
                    features.row(i),
                    &centroids[assignment[i] * dim..(assignment[i] + 1) * dim],
                )
            })
            .sum();
        history.push(inertia);
    }
    Ok(ClusterModel {
        dim,
        centroids,
        assignment,
        inertia,
        inertia_history: history,
    })
}

/// Moves the farthest-from-centroid point into each empty cluster.
/// Returns whether anything moved.
fn repair_empty(
    features: &RegionFeatureSet,
    assignment: &mut [usize],
    centroids: &[f64],
    m: usize,
) -> bool {
    let dim = features.dim();
    let mut counts = vec![0usize; m];
    for &a in assignment.iter() {
        counts[a] += 1;
    }
    let mut moved = false;
    for c in 0..m {
        if counts[c] > 0 {
            continue;
        }
        let victim = (0..assignment.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(
                    features.row(a),
                    &centroids[assignment[a] * dim..(assignment[a] + 1) * dim],
                );
                let db = sq_dist(
                    features.row(b),
                    &centroids[assignment[b] * dim..(assignment[b] + 1) * dim],
                );
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("m <= n guarantees a cluster with two members");
        counts[assignment[victim]] -= 1;
        assignment[victim] = c;
        counts[c] = 1;
        moved = true;
    }
    moved
}

fn update_centroids(
    features: &RegionFeatureSet,
    assignment: &mut [usize],
    centroids: &mut [f64],
    m: usize,
) {
    let dim = features.dim();
    // empty clusters must be filled before means are taken
    let snapshot = centroids.to_vec();
    repair_empty(features, assignment, &snapshot, m);
    let mut sums = vec![0.0; m * dim];
    let mut counts = vec![0usize; m];
    for (i, &a) in assignment.iter().enumerate() {
        counts[a] += 1;
        for (s, &v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(features.row(i)) {
            *s += v;
        }
    }
    for c in 0..m {
        for d in 0..dim {
            centroids[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    /// Decay applied to a cluster's weight each time one of its regions is visited.
    pub eta: f64,
    pub clusters: usize,
}

impl PenaltyParams {
    pub fn new(eta: f64, clusters: usize) -> Result<Self> {
        let p = Self { eta, clusters };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::validation(format!(
                "decay rate must be in (0, 1], got {}",
                self.eta
            )));
        }
        if self.clusters < 1 {
            return Err(Error::validation("cluster count must be at least 1"));
        }
        Ok(())
    }
}

impl Default for PenaltyParams {
    fn default() -> Self {
        Self {
            eta: 0.95,
            clusters: 400,
        }
    }
}

/// Greedy similar-region penalization over a descending score list.
///
/// `labels[i]` is the cluster of `phi_sorted[i]`. Output order matches input.
pub fn penalize_similar(
    phi_sorted: &[f64],
    labels: &[usize],
    params: &PenaltyParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    if phi_sorted.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} scores but {} cluster labels",
            phi_sorted.len(),
            labels.len()
        )));
    }
    let mut weight = vec![1.0f64; params.clusters];
    phi_sorted
        .iter()
        .zip(labels)
        .map(|(&phi, &l)| {
            let w = weight.get_mut(l).ok_or_else(|| {
                Error::validation(format!(
                    "cluster label {l} outside [0, {})",
                    params.clusters
                ))
            })?;
            let adjusted = phi * *w;
            *w *= params.eta;
            Ok(adjusted)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedRow {
    pub row: ScoreRow,
    pub cluster: usize,
    pub phi_star: f64,
}

/// Score table after penalization, ordered by `phi_star`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdjustedTable {
    rows: Vec<AdjustedRow>,
}

impl AdjustedTable {
    pub fn rows(&self) -> &[AdjustedRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Wraps rows that are already in `phi_star` order.
    pub fn from_sorted_rows(rows: Vec<AdjustedRow>) -> Result<Self> {
        let t = Self { rows };
        if !t.is_sorted() {
            return Err(Error::validation(
                "adjusted rows are not in descending phi_star order",
            ));
        }
        Ok(t)
    }

    pub fn is_sorted(&self) -> bool {
        self.rows.windows(2).all(|w| {
            rank_cmp(
                w[0].phi_star,
                (&w[0].row.scan_id, w[0].row.region_id),
                w[1].phi_star,
                (&w[1].row.scan_id, w[1].row.region_id),
            ) != std::cmp::Ordering::Greater
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{SCORE_HEADER}\tcluster\tphi_star\n");
        for a in &self.rows {
            let r = &a.row;
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.scan_id,
                r.region_id,
                r.points,
                r.entropy,
                r.color,
                r.structure,
                r.phi,
                a.cluster,
                a.phi_star
            )
            .expect("string write");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let header = format!("{SCORE_HEADER}\tcluster\tphi_star");
        let mut lines = text.lines();
        if lines.next() != Some(header.as_str()) {
            return Err(Error::format("adjusted score table header mismatch"));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 9 {
                return Err(Error::format(format!(
                    "adjusted table line {}: expected 9 fields, found {}",
                    n + 2,
                    f.len()
                )));
            }
            rows.push(AdjustedRow {
                row: ScoreRow {
                    scan_id: f[0].to_string(),
                    region_id: parse_field(f[1], n)?,
                    points: parse_field(f[2], n)?,
                    entropy: parse_field(f[3], n)?,
                    color: parse_field(f[4], n)?,
                    structure: parse_field(f[5], n)?,
                    phi: parse_field(f[6], n)?,
                },
                cluster: parse_field(f[7], n)?,
                phi_star: parse_field(f[8], n)?,
            });
        }
        Self::from_sorted_rows(rows)
    }
}

/// Penalizes a sorted score table and re-ranks it by the adjusted score.
pub fn rerank(
    table: &ScoreTable,
    cluster_of: &HashMap<RegionKey, usize>,
    params: &PenaltyParams,
) -> Result<AdjustedTable> {
    let mut sorted = table.clone();
    if !sorted.is_sorted() {
        sorted.sort();
    }
    let labels: Vec<usize> = sorted
        .rows()
        .iter()
        .map(|r| {
            cluster_of.get(&r.key()).copied().ok_or_else(|| {
                Error::validation(format!(
                    "no cluster for region {} of {}",
                    r.region_id, r.scan_id
                ))
            })
        })
        .collect::<Result<_>>()?;
    let phi: Vec<f64> = sorted.rows().iter().map(|r| r.phi).collect();
    let adjusted = penalize_similar(&phi, &labels, params)?;
    let mut rows: Vec<AdjustedRow> = sorted
        .rows()
        .iter()
        .zip(labels)
        .zip(adjusted)
        .map(|((r, cluster), phi_star)| AdjustedRow {
            row: r.clone(),
            cluster,
            phi_star,
        })
        .collect();
    rows.sort_by(|a, b| {
        rank_cmp(
            a.phi_star,
            (&a.row.scan_id, a.row.region_id),
            b.phi_star,
            (&b.row.scan_id, b.row.region_id),
        )
    });
    Ok(AdjustedTable { rows })
}

/// Clusters the candidate features and re-ranks the table in one step.
pub fn diversity_rerank(
    table: &ScoreTable,
    features: &RegionFeatureSet,
    params: &PenaltyParams,
    seed: u64,
    kmeans_iters: usize,
) -> Result<(AdjustedTable, ClusterModel)> {
    let m = params.clusters.min(features.len()).max(1);
    let model = kmeans(features, m, seed, kmeans_iters)?;
    let cluster_of: HashMap<RegionKey, usize> = features
        .keys()
        .iter()
        .cloned()
        .zip(model.assignment().iter().copied())
        .collect();
    let params = PenaltyParams {
        clusters: m,
        ..*params
    };
    Ok((rerank(table, &cluster_of, &params)?, model))
}
