//! Data model for scans, regions, predictions and labels, plus the on-disk
//! formats used to exchange them.
//!
//! Binary containers are little-endian: an 8-byte ASCII magic followed by
//! `u32` dimensions and a packed payload.

mod container;
mod scan;
mod state;

pub use container::{decode, encode, load_matrix, save_matrix, Magic, Payload};
pub use scan::{load_scan, write_scan, ScanFormat};
pub use state::{load_state, save_state, DatasetState, RegionKey, ScanEntry};

use crate::error::{Error, Result};

/// Label value marking a point that has not been annotated.
pub const UNLABELED: u8 = 255;

/// Tolerance on probability row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

fn check_scan_id(scan_id: &str) -> Result<()> {
    if scan_id.is_empty() || scan_id.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return Err(Error::validation(format!(
            "scan id {scan_id:?} must be non-empty and free of whitespace"
        )));
    }
    Ok(())
}

/// One scan: positions with optional RGB colors and optional intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    scan_id: String,
    positions: Vec<[f32; 3]>,
    colors: Option<Vec<[u8; 3]>>,
    intensity: Option<Vec<f32>>,
}

impl PointCloud {
    pub fn new(
        scan_id: impl Into<String>,
        positions: Vec<[f32; 3]>,
        colors: Option<Vec<[u8; 3]>>,
        intensity: Option<Vec<f32>>,
    ) -> Result<Self> {
        let scan_id = scan_id.into();
        check_scan_id(&scan_id)?;
        if positions.is_empty() {
            return Err(Error::validation("point cloud has no points"));
        }
        if let Some(i) = positions
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::validation(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        if let Some(c) = &colors {
            if c.len() != positions.len() {
                return Err(Error::validation(format!(
                    "{} colors for {} points",
                    c.len(),
                    positions.len()
                )));
            }
        }
        if let Some(v) = &intensity {
            if v.len() != positions.len() {
                return Err(Error::validation(format!(
                    "{} intensity values for {} points",
                    v.len(),
                    positions.len()
                )));
            }
            if let Some(i) = v.iter().position(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::validation(format!(
                    "intensity of point {i} is outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            scan_id,
            positions,
            colors,
            intensity,
        })
    }

    pub fn scan_id(&self) -> &str {
        &self.scan_id
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f32; 3]] {
        &self.positions
    }

    pub fn colors(&self) -> Option<&[[u8; 3]]> {
        self.colors.as_deref()
    }

    pub fn intensity(&self) -> Option<&[f32]> {
        self.intensity.as_deref()
    }

    pub fn has_colors(&self) -> bool {
        self.colors.is_some()
    }

    /// Color of point `i` scaled to `[0, 1]` per channel.
    pub fn color_unit(&self, i: usize) -> Option<[f64; 3]> {
        self.colors
            .as_ref()
            .map(|c| c[i].map(|v| f64::from(v) / 255.0))
    }

    pub fn position_f64(&self, i: usize) -> [f64; 3] {
        self.positions[i].map(f64::from)
    }
}

/// Partition of a scan's points into dense, non-empty regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMap {
    scan_id: String,
    region_of: Vec<u32>,
    regions: Vec<Vec<u32>>,
}

impl RegionMap {
    /// Builds the inverse index from a per-point region id. Ids must be dense.
    pub fn from_assignment(scan_id: impl Into<String>, region_of: Vec<u32>) -> Result<Self> {
        let scan_id = scan_id.into();
        check_scan_id(&scan_id)?;
        if region_of.is_empty() {
            return Err(Error::validation("region map has no points"));
        }
        let count = region_of
            .iter()
            .copied()
            .max()
            .map_or(0, |m| m as usize + 1);
        let mut regions = vec![Vec::new(); count];
        for (i, &r) in region_of.iter().enumerate() {
            regions[r as usize].push(i as u32);
        }
        if let Some(empty) = regions.iter().position(Vec::is_empty) {
            return Err(Error::validation(format!(
                "region ids are not dense: region {empty} of {count} is empty"
            )));
        }
        Ok(Self {
            scan_id,
            region_of,
            regions,
        })
    }

    pub fn scan_id(&self) -> &str {
        &self.scan_id
    }

    pub fn num_points(&self) -> usize {
        self.region_of.len()
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn region_of(&self) -> &[u32] {
        &self.region_of
    }

    pub fn regions(&self) -> &[Vec<u32>] {
        &self.regions
    }

    pub fn region(&self, r: u32) -> &[u32] {
        &self.regions[r as usize]
    }

    /// Re-checks the partition property: sizes sum to N and each point appears once.
    pub fn check_partition(&self) -> Result<()> {
        let n = self.region_of.len();
        let total: usize = self.regions.iter().map(Vec::len).sum();
        if total != n {
            return Err(Error::validation(format!(
                "region sizes sum to {total}, expected {n}"
            )));
        }
        let mut seen = vec![false; n];
        for (r, pts) in self.regions.iter().enumerate() {
            if pts.is_empty() {
                return Err(Error::validation(format!("region {r} is empty")));
            }
            for &p in pts {
                let p = p as usize;
                if p >= n || seen[p] || self.region_of[p] as usize != r {
                    return Err(Error::validation(format!(
                        "point {p} is not uniquely assigned to region {r}"
                    )));
                }
                seen[p] = true;
            }
        }
        Ok(())
    }
}

/// Dense row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::validation(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows.saturating_mul(cols),
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("ragged matrix rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        // chunks_exact(0) panics; a 0-column matrix has no meaningful rows
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }
}

/// Per-point class probabilities and optional per-point features for one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    scan_id: String,
    probs: Matrix,
    features: Option<Matrix>,
}

impl PredictionSet {
    pub fn new(
        scan_id: impl Into<String>,
        probs: Matrix,
        features: Option<Matrix>,
    ) -> Result<Self> {
        let scan_id = scan_id.into();
        check_scan_id(&scan_id)?;
        if probs.cols() < 2 {
            return Err(Error::validation(format!(
                "need at least 2 classes, got {}",
                probs.cols()
            )));
        }
        if probs.cols() > usize::from(UNLABELED) {
            return Err(Error::validation(format!(
                "at most {} classes are supported, got {}",
                UNLABELED,
                probs.cols()
            )));
        }
        for (i, row) in probs.iter_rows().enumerate() {
            if let Some(&v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::validation(format!(
                    "probability {v} of point {i} is outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().map(|&v| f64::from(v)).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::validation(format!(
                    "probability row {i} sums to {sum}"
                )));
            }
        }
        if let Some(f) = &features {
            if f.cols() < 1 {
                return Err(Error::validation("feature matrix has no columns"));
            }
            if f.rows() != probs.rows() {
                return Err(Error::validation(format!(
                    "{} feature rows for {} probability rows",
                    f.rows(),
                    probs.rows()
                )));
            }
            if f.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::validation("feature matrix has non-finite values"));
            }
        }
        Ok(Self {
            scan_id,
            probs,
            features,
        })
    }

    pub fn scan_id(&self) -> &str {
        &self.scan_id
    }

    pub fn len(&self) -> usize {
        self.probs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.rows() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.probs.cols()
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn features(&self) -> Option<&Matrix> {
        self.features.as_ref()
    }

    /// Index of the most probable class of point `i`; ties go to the lower class.
    pub fn argmax(&self, i: usize) -> usize {
        argmax(self.probs.row(i))
    }
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Checks a prediction set against the scan it claims to describe.
pub fn validate_predictions(pred: &PredictionSet, cloud: &PointCloud) -> Result<()> {
    // rebuilding re-runs every row check in case the set was assembled elsewhere
    PredictionSet::new(
        pred.scan_id.clone(),
        pred.probs.clone(),
        pred.features.clone(),
    )?;
    if pred.len() != cloud.len() {
        return Err(Error::validation(format!(
            "predictions cover {} points but scan {} has {}",
            pred.len(),
            cloud.scan_id(),
            cloud.len()
        )));
    }
    Ok(())
}

/// Per-point class ids, with [`UNLABELED`] marking points outside `D_L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    scan_id: String,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(scan_id: impl Into<String>, labels: Vec<u8>) -> Result<Self> {
        let scan_id = scan_id.into();
        check_scan_id(&scan_id)?;
        Ok(Self { scan_id, labels })
    }

    pub fn unlabeled(scan_id: impl Into<String>, n: usize) -> Result<Self> {
        Self::new(scan_id, vec![UNLABELED; n])
    }

    pub fn scan_id(&self) -> &str {
        &self.scan_id
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> Option<u8> {
        match self.labels[i] {
            UNLABELED => None,
            c => Some(c),
        }
    }

    pub fn set(&mut self, i: usize, class: u8) {
        self.labels[i] = class;
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != UNLABELED).count()
    }

    pub fn labeled_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            0.0
        } else {
            self.labeled_count() as f64 / self.labels.len() as f64
        }
    }
}
