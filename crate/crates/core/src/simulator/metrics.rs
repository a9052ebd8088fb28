use crate::cloud_io::UNLABELED;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IouReport {
    /// `None` for classes absent from both prediction and truth.
    pub per_class: Vec<Option<f64>>,
    pub miou: f64,
}

/// Per-class intersection over union from aligned label vectors.
pub fn compute_iou(pred: &[u8], truth: &[u8], classes: usize) -> Result<IouReport> {
    if pred.len() != truth.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut tp = vec![0u64; classes];
    let mut fp = vec![0u64; classes];
    let mut fn_ = vec![0u64; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if usize::from(p) >= classes || usize::from(t) >= classes {
            return Err(Error::validation(format!(
                "label {} outside [0, {classes})",
                p.max(t)
            )));
        }
        if p == t {
            tp[usize::from(p)] += 1;
        } else {
            fp[usize::from(p)] += 1;
            fn_[usize::from(t)] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let denom = tp[c] + fp[c] + fn_[c];
            (denom > 0).then(|| tp[c] as f64 / denom as f64)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let miou = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(IouReport { per_class, miou })
}

/// Share of each class among newly labeled points, in permille.
pub fn class_distribution_ratio(new_labels: &[u8], classes: usize) -> Result<Vec<f64>> {
    let labeled: Vec<u8> = new_labels
        .iter()
        .copied()
        .filter(|&l| l != UNLABELED)
        .collect();
    if labeled.is_empty() {
        return Err(Error::validation("no newly labeled points to summarize"));
    }
    let mut counts = vec![0u64; classes];
    for l in &labeled {
        let c = usize::from(*l);
        if c >= classes {
            return Err(Error::validation(format!(
                "label {c} outside [0, {classes})"
            )));
        }
        counts[c] += 1;
    }
    let total = labeled.len() as f64;
    Ok(counts.iter().map(|&n| n as f64 / total * 1000.0).collect())
}
