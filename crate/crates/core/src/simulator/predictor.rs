use crate::cloud_io::{argmax, LabelMask, Matrix, PointCloud, PredictionSet, UNLABELED};
use crate::error::{Error, Result};
use crate::geometry::Neighborhoods;

/// Width of the handcrafted point feature.
pub const FEATURE_DIM: usize = 8;

/// Neighbor rank whose distance measures local density.
const DENSITY_RANK: usize = 10;

/// Handcrafted per-point features with fixed scaling:
/// height, RGB, surface variation, local density, horizontal radius, intensity.
///
/// `hoods` must hold at least one neighbor per point; `surf_var` is the
/// per-point surface variation of the same scan.
pub fn point_features(
    cloud: &PointCloud,
    hoods: &Neighborhoods,
    surf_var: &[f64],
) -> Result<Matrix> {
    let n = cloud.len();
    if hoods.len() != n || surf_var.len() != n {
        return Err(Error::validation(format!(
            "feature inputs cover {} / {} points, scan {} has {n}",
            hoods.len(),
            surf_var.len(),
            cloud.scan_id()
        )));
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let p = cloud.position_f64(i);
        cx += p[0];
        cy += p[1];
    }
    cx /= n as f64;
    cy /= n as f64;
    let mut data = Vec::with_capacity(n * FEATURE_DIM);
    for i in 0..n {
        let p = cloud.position_f64(i);
        let rgb = cloud.color_unit(i).unwrap_or([0.0; 3]);
        let nbrs = hoods.of(i);
        let density = match nbrs.get(DENSITY_RANK.min(nbrs.len()).saturating_sub(1)) {
            Some(nb) => -(nb.dist2.sqrt().max(1e-4)).ln() / 5.0,
            None => 0.0,
        };
        let radius = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt() / 5.0;
        let intensity = cloud.intensity().map_or(0.0, |v| f64::from(v[i]));
        let row = [
            p[2] / 3.0,
            rgb[0],
            rgb[1],
            rgb[2],
            3.0 * surf_var[i],
            density,
            radius,
            intensity,
        ];
        data.extend(row.iter().map(|&v| v as f32));
    }
    Matrix::new(n, FEATURE_DIM, data)
}

/// Nearest-prototype classifier over point features.
///
/// Untrained classes share one background logit, so their probabilities are
/// equal to each other and sit below any class whose prototype is close.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypePredictor {
    prototypes: Vec<Option<Vec<f64>>>,
    tau: f64,
    background_d2: f64,
}

impl PrototypePredictor {
    /// Fits one prototype per class from the labeled points of every scan.
    /// Scans are visited in the order given; callers pass them sorted for
    /// reproducible sums.
    pub fn fit(samples: &[(&Matrix, &LabelMask)], classes: usize, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::validation(format!(
                "temperature must be positive, got {tau}"
            )));
        }
        if !(2..=usize::from(UNLABELED)).contains(&classes) {
            return Err(Error::validation(format!(
                "unsupported class count {classes}"
            )));
        }
        let dim = samples.first().map_or(0, |(m, _)| m.cols());
        let mut sums = vec![vec![0.0f64; dim]; classes];
        let mut counts = vec![0usize; classes];
        for (feats, mask) in samples {
            check_aligned(feats, mask, dim)?;
            for (i, row) in feats.iter_rows().enumerate() {
                if let Some(c) = mask.get(i) {
                    let c = check_class(c, classes)?;
                    counts[c] += 1;
                    sums[c]
                        .iter_mut()
                        .zip(row)
                        .for_each(|(s, &v)| *s += f64::from(v));
                }
            }
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::validation(
                "cannot fit a predictor on zero labeled points",
            ));
        }
        let prototypes: Vec<Option<Vec<f64>>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &k)| (k > 0).then(|| s.into_iter().map(|v| v / k as f64).collect()))
            .collect();
        let mut spread = 0.0;
        for (feats, mask) in samples {
            for (i, row) in feats.iter_rows().enumerate() {
                if let Some(c) = mask.get(i) {
                    spread += sq_dist(row, prototypes[usize::from(c)].as_ref().expect("trained"));
                }
            }
        }
        Ok(Self {
            prototypes,
            tau,
            background_d2: (2.0 * spread / total as f64).max(1e-6),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_trained(&self, class: usize) -> bool {
        self.prototypes.get(class).is_some_and(Option::is_some)
    }

    pub fn prototype(&self, class: usize) -> Option<&[f64]> {
        self.prototypes.get(class).and_then(|p| p.as_deref())
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn logits(&self, row: &[f32]) -> Vec<f64> {
        self.prototypes
            .iter()
            .map(|p| -p.as_ref().map_or(self.background_d2, |p| sq_dist(row, p)) / self.tau)
            .collect()
    }

    /// Softmax class probabilities; the features ride along for pooling.
    pub fn predict(&self, scan_id: &str, features: &Matrix) -> Result<PredictionSet> {
        let c = self.num_classes();
        let mut probs = Vec::with_capacity(features.rows() * c);
        for row in features.iter_rows() {
            let logits = self.logits(row);
            let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let z: f64 = exps.iter().sum();
            probs.extend(exps.iter().map(|e| (e / z) as f32));
        }
        PredictionSet::new(
            scan_id,
            Matrix::new(features.rows(), c, probs)?,
            Some(features.clone()),
        )
    }

    /// Hard labels restricted to trained classes; ties go to the lower class.
    pub fn predict_labels(&self, features: &Matrix) -> Vec<u8> {
        features
            .iter_rows()
            .map(|row| {
                let scores: Vec<f32> = self
                    .prototypes
                    .iter()
                    .map(|p| {
                        p.as_ref()
                            .map_or(f32::NEG_INFINITY, |p| -sq_dist(row, p) as f32)
                    })
                    .collect();
                argmax(&scores) as u8
            })
            .collect()
    }
}

fn check_aligned(feats: &Matrix, mask: &LabelMask, dim: usize) -> Result<()> {
    if feats.rows() != mask.len() || feats.cols() != dim {
        return Err(Error::validation(format!(
            "feature matrix {}x{} does not match {} labels of width {dim}",
            feats.rows(),
            feats.cols(),
            mask.len()
        )));
    }
    Ok(())
}

fn check_class(c: u8, classes: usize) -> Result<usize> {
    let c = usize::from(c);
    if c >= classes {
        return Err(Error::validation(format!(
            "label {c} outside [0, {classes})"
        )));
    }
    Ok(c)
}

fn sq_dist(row: &[f32], proto: &[f64]) -> f64 {
    row.iter()
        .zip(proto)
        .map(|(&a, b)| (f64::from(a) - b).powi(2))
        .sum()
}
