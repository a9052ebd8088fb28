//! Region information scores.
//!
//! Each region gets a softmax entropy `H`, a color discontinuity `C` and a
//! structural complexity `S`, all region means of per-point quantities, and
//! the combined score `phi = alpha*H + beta*C + gamma*S`.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::cloud_io::{PredictionSet, RegionKey, RegionMap};
use crate::error::{Error, Result};

/// Probabilities are clamped to this floor before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionInfoWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl RegionInfoWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = Self { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    /// Weights for colorless scans.
    pub fn without_color() -> Self {
        Self {
            beta: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::validation(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for RegionInfoWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.1,
            gamma: 0.05,
        }
    }
}

/// Shannon entropy (natural log) of one probability row, `0 ln 0 = 0`.
pub fn point_entropy(row: &[f32]) -> f64 {
    row.iter()
        .map(|&p| {
            let p = f64::from(p);
            if p <= 0.0 {
                0.0
            } else {
                let q = p.clamp(PROB_FLOOR, 1.0);
                -q * q.ln()
            }
        })
        .sum()
}

fn region_means(regions: &RegionMap, value: impl Fn(usize) -> f64) -> Vec<f64> {
    regions
        .regions()
        .iter()
        .map(|pts| pts.iter().map(|&p| value(p as usize)).sum::<f64>() / pts.len() as f64)
        .collect()
}

fn check_len(what: &str, got: usize, regions: &RegionMap) -> Result<()> {
    if got != regions.num_points() {
        return Err(Error::validation(format!(
            "{what} has {got} points but the region map of {} has {}",
            regions.scan_id(),
            regions.num_points()
        )));
    }
    Ok(())
}

/// Mean point entropy per region.
pub fn region_entropy(pred: &PredictionSet, regions: &RegionMap) -> Result<Vec<f64>> {
    check_len("prediction set", pred.len(), regions)?;
    Ok(region_means(regions, |i| {
        point_entropy(pred.probs().row(i))
    }))
}

/// Mean per-point color discontinuity per region.
pub fn region_color_discontinuity(point_scores: &[f64], regions: &RegionMap) -> Result<Vec<f64>> {
    check_len("color discontinuity", point_scores.len(), regions)?;
    Ok(region_means(regions, |i| point_scores[i]))
}

/// Mean surface variation per region.
pub fn region_structural_complexity(surf_var: &[f64], regions: &RegionMap) -> Result<Vec<f64>> {
    check_len("surface variation", surf_var.len(), regions)?;
    Ok(region_means(regions, |i| surf_var[i]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub scan_id: String,
    pub region_id: u32,
    pub points: usize,
    pub entropy: f64,
    pub color: f64,
    pub structure: f64,
    pub phi: f64,
}

impl ScoreRow {
    pub fn key(&self) -> RegionKey {
        RegionKey::new(self.scan_id.clone(), self.region_id)
    }
}

/// Descending score with the (scan id, region id) tie-break.
pub fn rank_cmp(a_score: f64, a: (&str, u32), b_score: f64, b: (&str, u32)) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a.cmp(&b))
}

/// Candidate regions with their component and combined scores.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    rows: Vec<ScoreRow>,
    sorted: bool,
}

pub const SCORE_HEADER: &str = "scan_id\tregion_id\tpoints\tH\tC\tS\tphi";

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: Vec<ScoreRow>) -> Self {
        Self {
            rows,
            sorted: false,
        }
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.sorted
    }

    /// Appends one scan's regions. `H`, `C`, `S` are indexed by region id.
    pub fn extend_scan(
        &mut self,
        regions: &RegionMap,
        entropy: &[f64],
        color: &[f64],
        structure: &[f64],
        weights: &RegionInfoWeights,
    ) -> Result<()> {
        let r = regions.num_regions();
        if entropy.len() != r || color.len() != r || structure.len() != r {
            return Err(Error::validation(format!(
                "score vectors have lengths {}/{}/{}, expected {r}",
                entropy.len(),
                color.len(),
                structure.len()
            )));
        }
        for (id, pts) in regions.regions().iter().enumerate() {
            self.rows.push(ScoreRow {
                scan_id: regions.scan_id().to_string(),
                region_id: id as u32,
                points: pts.len(),
                entropy: entropy[id],
                color: color[id],
                structure: structure[id],
                phi: weights.alpha * entropy[id]
                    + weights.beta * color[id]
                    + weights.gamma * structure[id],
            });
        }
        self.sorted = false;
        Ok(())
    }

    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            rank_cmp(
                a.phi,
                (&a.scan_id, a.region_id),
                b.phi,
                (&b.scan_id, b.region_id),
            )
        });
        self.sorted = true;
    }

    /// Drops rows for which `keep` is false, preserving order.
    pub fn retain(&mut self, keep: impl FnMut(&ScoreRow) -> bool) {
        self.rows.retain(keep);
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(SCORE_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.scan_id, r.region_id, r.points, r.entropy, r.color, r.structure, r.phi
            )
            .expect("string write");
        }
        out
    }

    /// Parses [`ScoreTable::to_tsv`] output; the sorted flag is recomputed.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == SCORE_HEADER => {}
            other => {
                return Err(Error::format(format!(
                    "score table header mismatch: {other:?}"
                )))
            }
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 7 {
                return Err(Error::format(format!(
                    "score table line {}: expected 7 fields, found {}",
                    n + 2,
                    f.len()
                )));
            }
            rows.push(ScoreRow {
                scan_id: f[0].to_string(),
                region_id: parse_field(f[1], n)?,
                points: parse_field(f[2], n)?,
                entropy: parse_field(f[3], n)?,
                color: parse_field(f[4], n)?,
                structure: parse_field(f[5], n)?,
                phi: parse_field(f[6], n)?,
            });
        }
        let sorted = rows.windows(2).all(|w| {
            rank_cmp(
                w[0].phi,
                (&w[0].scan_id, w[0].region_id),
                w[1].phi,
                (&w[1].scan_id, w[1].region_id),
            ) != Ordering::Greater
        });
        Ok(Self { rows, sorted })
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(format!("line {}: cannot parse {s:?}", line + 2)))
}

/// Builds and sorts a table from per-region H, C, S.
pub fn combine_information(
    regions: &RegionMap,
    entropy: &[f64],
    color: &[f64],
    structure: &[f64],
    weights: &RegionInfoWeights,
) -> Result<ScoreTable> {
    weights.validate()?;
    let mut t = ScoreTable::new();
    t.extend_scan(regions, entropy, color, structure, weights)?;
    t.sort();
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud_io::Matrix;

    fn preds(rows: &[&[f32]]) -> PredictionSet {
        let m = Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        PredictionSet::new("s", m, None).unwrap()
    }

    #[test]
    fn uniform_rows_reach_ln_c() {
        let p = preds(&[&[0.25; 4], &[0.25; 4], &[0.25; 4]]);
        let regions = RegionMap::from_assignment("s", vec![0, 1, 1]).unwrap();
        for h in region_entropy(&p, &regions).unwrap() {
            assert!((h - 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_rows_have_zero_entropy() {
        let p = preds(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let regions = RegionMap::from_assignment("s", vec![0, 0]).unwrap();
        assert_eq!(region_entropy(&p, &regions).unwrap(), vec![0.0]);
    }

    #[test]
    fn half_and_certain_point() {
        let p = preds(&[&[0.5, 0.5], &[1.0, 0.0]]);
        let regions = RegionMap::from_assignment("s", vec![0, 0]).unwrap();
        let h = region_entropy(&p, &regions).unwrap()[0];
        assert!((h - 0.346_573_590_279_972_6).abs() < 1e-12);
    }

    #[test]
    fn region_means_of_point_scores() {
        let regions = RegionMap::from_assignment("s", vec![0, 0, 1, 1]).unwrap();
        assert_eq!(
            region_color_discontinuity(&[3.0, 3.0, 0.0, 0.0], &regions).unwrap(),
            vec![3.0, 0.0]
        );
        let s = region_structural_complexity(&[0.1, 0.3, 0.0, 0.0], &regions).unwrap();
        assert!((s[0] - 0.2).abs() < 1e-15);
        assert!(region_structural_complexity(&[0.1], &regions).is_err());
    }

    #[test]
    fn linear_combination() {
        let regions = RegionMap::from_assignment("s", vec![0]).unwrap();
        let t = combine_information(
            &regions,
            &[1.0],
            &[2.0],
            &[0.1],
            &RegionInfoWeights::default(),
        )
        .unwrap();
        assert!((t.rows()[0].phi - 1.205).abs() < 1e-12);
    }

    #[test]
    fn all_zero_scores_sort_by_key() {
        let mut t = ScoreTable::new();
        let w = RegionInfoWeights::default();
        for id in ["b", "a"] {
            let regions = RegionMap::from_assignment(id, vec![0, 1]).unwrap();
            t.extend_scan(&regions, &[0.0; 2], &[0.0; 2], &[0.0; 2], &w)
                .unwrap();
        }
        t.sort();
        let keys: Vec<(String, u32)> = t
            .rows()
            .iter()
            .map(|r| (r.scan_id.clone(), r.region_id))
            .collect();
        assert_eq!(
            keys,
            vec![
                ("a".into(), 0),
                ("a".into(), 1),
                ("b".into(), 0),
                ("b".into(), 1)
            ]
        );
    }

    #[test]
    fn negative_weight_rejected() {
        assert!(RegionInfoWeights::new(1.0, -0.1, 0.0).is_err());
        assert!(RegionInfoWeights::new(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let regions = RegionMap::from_assignment("s", vec![0, 1, 1]).unwrap();
        let t = combine_information(
            &regions,
            &[0.3, 0.1],
            &[0.01, 1.0 / 3.0],
            &[0.2, 0.0],
            &RegionInfoWeights::default(),
        )
        .unwrap();
        let back = ScoreTable::from_tsv(&t.to_tsv()).unwrap();
        assert_eq!(back, t);
        assert!(back.is_sorted());
        assert!(ScoreTable::from_tsv("bad header\n").is_err());
    }
}
