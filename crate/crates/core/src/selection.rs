//! Budgeted label acquisition and scan-level baseline strategies.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud_io::{DatasetState, PredictionSet, RegionKey, RegionMap};
use crate::diversity::AdjustedTable;
use crate::error::{Error, Result};
use crate::scoring::{parse_field, point_entropy};

/// Points that may be labeled in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub points_per_round: usize,
    pub consumed: usize,
}

impl Budget {
    pub fn new(points_per_round: usize) -> Self {
        Self {
            points_per_round,
            consumed: 0,
        }
    }

    pub fn record(&mut self, points: usize) {
        self.consumed += points;
    }

    pub fn start_round(&mut self) {
        self.consumed = 0;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchEntry {
    pub key: RegionKey,
    pub points: usize,
    pub phi_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionStatus {
    Ok,
    /// A positive budget met an empty candidate list.
    NoCandidates,
}

/// Regions queried for labels in one round, in selection order.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionBatch {
    entries: Vec<BatchEntry>,
    total_points: usize,
    status: SelectionStatus,
}

pub const BATCH_HEADER: &str = "scan_id\tregion_id\tpoints\tphi_star";

impl SelectionBatch {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
            total_points: 0,
            status: SelectionStatus::Ok,
        }
    }

    pub fn from_entries(entries: Vec<BatchEntry>) -> Result<Self> {
        let unique: BTreeSet<&RegionKey> = entries.iter().map(|e| &e.key).collect();
        if unique.len() != entries.len() {
            return Err(Error::validation("selection batch contains a region twice"));
        }
        let total_points = entries.iter().map(|e| e.points).sum();
        Ok(Self {
            entries,
            total_points,
            status: SelectionStatus::Ok,
        })
    }

    pub fn entries(&self) -> &[BatchEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_points(&self) -> usize {
        self.total_points
    }

    pub fn status(&self) -> SelectionStatus {
        self.status
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(BATCH_HEADER);
        out.push('\n');
        for e in &self.entries {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                e.key.scan_id, e.key.region_id, e.points, e.phi_star
            )
            .expect("string write");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(BATCH_HEADER) {
            return Err(Error::format("selection batch header mismatch"));
        }
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(Error::format(format!(
                    "batch line {}: expected 4 fields",
                    n + 2
                )));
            }
            entries.push(BatchEntry {
                key: RegionKey::new(f[0], parse_field(f[1], n)?),
                points: parse_field(f[2], n)?,
                phi_star: parse_field(f[3], n)?,
            });
        }
        Self::from_entries(entries)
    }
}

/// Walks the ranked table and takes regions until the round budget is spent.
///
/// A region is taken while the points taken before it are still under the
/// budget, so the region that crosses the budget is included and ends the walk.
/// Rows already in the labeled set are not candidates and are passed over.
pub fn select_regions(
    table: &AdjustedTable,
    state: &DatasetState,
    budget: &Budget,
) -> Result<SelectionBatch> {
    if !table.is_sorted() {
        return Err(Error::validation("score table must be sorted by phi_star"));
    }
    let mut entries = Vec::new();
    let mut total = 0;
    let mut candidates = 0;
    for a in table.rows() {
        let key = a.row.key();
        if state.is_labeled(&key) {
            continue;
        }
        candidates += 1;
        if total >= budget.points_per_round {
            break;
        }
        total += a.row.points;
        entries.push(BatchEntry {
            key,
            points: a.row.points,
            phi_star: a.phi_star,
        });
    }
    let mut batch = SelectionBatch::from_entries(entries)?;
    if candidates == 0 && budget.points_per_round > 0 {
        batch.status = SelectionStatus::NoCandidates;
    }
    Ok(batch)
}

/// Ground-truth labels, one full per-point vector per scan.
pub trait LabelOracle {
    fn labels(&self, scan_id: &str) -> Option<&[u8]>;
}

impl LabelOracle for BTreeMap<String, Vec<u8>> {
    fn labels(&self, scan_id: &str) -> Option<&[u8]> {
        self.get(scan_id).map(Vec::as_slice)
    }
}

impl LabelOracle for HashMap<String, Vec<u8>> {
    fn labels(&self, scan_id: &str) -> Option<&[u8]> {
        self.get(scan_id).map(Vec::as_slice)
    }
}

/// Copies ground truth for every batch region into the state.
///
/// All regions are checked before anything is written, so an error leaves
/// the state untouched. Returns the number of newly labeled points.
pub fn acquire_labels(
    batch: &SelectionBatch,
    oracle: &dyn LabelOracle,
    state: &mut DatasetState,
) -> Result<usize> {
    for e in batch.entries() {
        if state.is_labeled(&e.key) {
            return Err(Error::validation(format!(
                "region {} of scan {} is already labeled",
                e.key.region_id, e.key.scan_id
            )));
        }
        if oracle.labels(&e.key.scan_id).is_none() {
            return Err(Error::validation(format!(
                "oracle has no labels for scan {}",
                e.key.scan_id
            )));
        }
        match state.region_size(&e.key) {
            Some(n) if n == e.points => {}
            Some(n) => {
                return Err(Error::validation(format!(
                    "batch says region {} of {} has {} points, state says {n}",
                    e.key.region_id, e.key.scan_id, e.points
                )))
            }
            None => {
                return Err(Error::validation(format!(
                    "unknown region {} of scan {}",
                    e.key.region_id, e.key.scan_id
                )))
            }
        }
    }
    let before = state.labeled_points();
    for e in batch.entries() {
        let truth = oracle.labels(&e.key.scan_id).expect("checked above");
        state.label_region(&e.key, truth)?;
    }
    let gained = state.labeled_points() - before;
    debug_assert_eq!(gained, batch.total_points());
    Ok(gained)
}

/// Whole-scan acquisition strategies used as baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScanStrategy {
    Rand,
    Conf,
    Mar,
    Ent,
    Segent,
}

impl ScanStrategy {
    /// Whether higher scores are selected first.
    pub fn descending(self) -> bool {
        match self {
            ScanStrategy::Rand | ScanStrategy::Ent | ScanStrategy::Segent => true,
            ScanStrategy::Conf | ScanStrategy::Mar => false,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScanStrategy::Rand => "rand",
            ScanStrategy::Conf => "conf",
            ScanStrategy::Mar => "mar",
            ScanStrategy::Ent => "ent",
            ScanStrategy::Segent => "segent",
        }
    }
}

impl FromStr for ScanStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rand" => Ok(ScanStrategy::Rand),
            "conf" => Ok(ScanStrategy::Conf),
            "mar" => Ok(ScanStrategy::Mar),
            "ent" => Ok(ScanStrategy::Ent),
            "segent" => Ok(ScanStrategy::Segent),
            other => Err(Error::validation(format!(
                "unknown scan strategy {other:?}"
            ))),
        }
    }
}

/// 64-bit FNV-1a, used to give every scan its own RNG stream.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn mean_over_points(pred: &PredictionSet, f: impl Fn(&[f32]) -> f64) -> f64 {
    let n = pred.len();
    (0..n).map(|i| f(pred.probs().row(i))).sum::<f64>() / n as f64
}

fn top_two(row: &[f32]) -> (f64, f64) {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &p in row {
        let p = f64::from(p);
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    (first, second)
}

/// Entropy of the predicted-label histogram of each region, averaged over regions.
pub fn segment_entropy(pred: &PredictionSet, regions: &RegionMap) -> f64 {
    let c = pred.num_classes();
    let total: f64 = regions
        .regions()
        .iter()
        .map(|pts| {
            let mut hist = vec![0usize; c];
            for &p in pts {
                hist[pred.argmax(p as usize)] += 1;
            }
            let m = pts.len() as f64;
            hist.iter()
                .filter(|&&h| h > 0)
                .map(|&h| {
                    let q = h as f64 / m;
                    -q * q.ln()
                })
                .sum::<f64>()
        })
        .sum();
    total / regions.num_regions() as f64
}

/// One score per scan. Each scan is scored independently of the others.
pub fn score_scans(
    scans: &[(&PredictionSet, &RegionMap)],
    strategy: ScanStrategy,
    seed: u64,
) -> Result<Vec<f64>> {
    scans
        .iter()
        .map(|&(pred, regions)| {
            if pred.len() != regions.num_points() {
                return Err(Error::validation(format!(
                    "predictions for {} cover {} points, region map has {}",
                    pred.scan_id(),
                    pred.len(),
                    regions.num_points()
                )));
            }
            Ok(match strategy {
                ScanStrategy::Rand => {
                    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(pred.scan_id())).random::<f64>()
                }
                ScanStrategy::Conf => mean_over_points(pred, |r| top_two(r).0),
                ScanStrategy::Mar => mean_over_points(pred, |r| {
                    let (a, b) = top_two(r);
                    a - b
                }),
                ScanStrategy::Ent => mean_over_points(pred, point_entropy),
                ScanStrategy::Segent => segment_entropy(pred, regions),
            })
        })
        .collect()
}

/// Orders scan ids best-first for a strategy; ties go to the lower scan id.
pub fn rank_scans(ids: &[&str], scores: &[f64], strategy: ScanStrategy) -> Vec<String> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        let by_score = if strategy.descending() {
            scores[b].total_cmp(&scores[a])
        } else {
            scores[a].total_cmp(&scores[b])
        };
        by_score.then_with(|| ids[a].cmp(ids[b]))
    });
    order.into_iter().map(|i| ids[i].to_string()).collect()
}

/// Takes ranked scans while the points taken so far are below `budget`.
pub fn take_scans_within_budget(
    ranked: &[String],
    sizes: &HashMap<String, usize>,
    budget: usize,
) -> Vec<String> {
    let mut total = 0;
    let mut out = Vec::new();
    for id in ranked {
        if total >= budget {
            break;
        }
        total += sizes.get(id).copied().unwrap_or(0);
        out.push(id.clone());
    }
    out
}

/// Greedy k-center over global scan features.
///
/// Repeatedly picks the unlabeled scan farthest (Euclidean) from every
/// labeled or already-picked scan; ties go to the lower scan id.
pub fn coreset_select(
    scan_features: &[(String, Vec<f64>)],
    labeled: &BTreeSet<String>,
    budget_scans: usize,
) -> Result<Vec<String>> {
    if budget_scans == 0 {
        return Ok(Vec::new());
    }
    let centers: Vec<&[f64]> = scan_features
        .iter()
        .filter(|(id, _)| labeled.contains(id))
        .map(|(_, f)| f.as_slice())
        .collect();
    if centers.is_empty() {
        return Err(Error::validation(
            "core-set selection needs at least one labeled scan",
        ));
    }
    let mut pool: Vec<(&str, &[f64], f64)> = scan_features
        .iter()
        .filter(|(id, _)| !labeled.contains(id))
        .map(|(id, f)| {
            let d = centers
                .iter()
                .map(|c| euclid(c, f))
                .fold(f64::INFINITY, f64::min);
            (id.as_str(), f.as_slice(), d)
        })
        .collect();
    pool.sort_by(|a, b| a.0.cmp(b.0));
    let mut picked = Vec::new();
    while picked.len() < budget_scans && !pool.is_empty() {
        let best = (0..pool.len())
            .max_by(|&a, &b| pool[a].2.total_cmp(&pool[b].2).then(b.cmp(&a)))
            .expect("non-empty pool");
        let (id, feat, _) = pool.swap_remove(best);
        pool.sort_by(|a, b| a.0.cmp(b.0));
        picked.push(id.to_string());
        for entry in pool.iter_mut() {
            entry.2 = entry.2.min(euclid(feat, entry.1));
        }
    }
    Ok(picked)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud_io::Matrix;
    use crate::diversity::AdjustedRow;
    use crate::scoring::ScoreRow;

    fn table(sizes: &[usize]) -> AdjustedTable {
        let rows = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| AdjustedRow {
                row: ScoreRow {
                    scan_id: "s".into(),
                    region_id: i as u32,
                    points: n,
                    entropy: 0.0,
                    color: 0.0,
                    structure: 0.0,
                    phi: 1.0 - i as f64 * 0.1,
                },
                cluster: i,
                phi_star: 1.0 - i as f64 * 0.1,
            })
            .collect();
        AdjustedTable::from_sorted_rows(rows).unwrap()
    }

    fn state(sizes: &[usize]) -> DatasetState {
        let ids: Vec<u32> = sizes
            .iter()
            .enumerate()
            .flat_map(|(r, &n)| std::iter::repeat_n(r as u32, n))
            .collect();
        let mut st = DatasetState::new(0);
        st.add_scan(RegionMap::from_assignment("s", ids).unwrap())
            .unwrap();
        st
    }

    #[test]
    fn budget_crossing_region_is_included() {
        let sizes = [100, 50, 30];
        let batch = select_regions(&table(&sizes), &state(&sizes), &Budget::new(120)).unwrap();
        assert_eq!(batch.len(), 2);
        assert_eq!(batch.total_points(), 150);
    }

    #[test]
    fn zero_and_unbounded_budgets() {
        let sizes = [100, 50, 30];
        assert!(
            select_regions(&table(&sizes), &state(&sizes), &Budget::new(0))
                .unwrap()
                .is_empty()
        );
        let all = select_regions(&table(&sizes), &state(&sizes), &Budget::new(10_000)).unwrap();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn empty_candidates_warn() {
        let sizes = [10];
        let mut st = state(&sizes);
        st.label_scan("s", &[1; 10]).unwrap();
        let batch = select_regions(&table(&sizes), &st, &Budget::new(5)).unwrap();
        assert!(batch.is_empty());
        assert_eq!(batch.status(), SelectionStatus::NoCandidates);
    }

    #[test]
    fn acquisition_bookkeeping() {
        let sizes = [30, 20];
        let mut st = state(&sizes);
        let oracle: BTreeMap<String, Vec<u8>> = [("s".to_string(), vec![2u8; 50])].into();
        assert_eq!(
            acquire_labels(&SelectionBatch::empty(), &oracle, &mut st).unwrap(),
            0
        );
        let batch = select_regions(&table(&sizes), &st, &Budget::new(1)).unwrap();
        assert_eq!(acquire_labels(&batch, &oracle, &mut st).unwrap(), 30);
        assert!(st.is_labeled(&RegionKey::new("s", 0)));
        assert!(acquire_labels(&batch, &oracle, &mut st).is_err());
        let missing: BTreeMap<String, Vec<u8>> = BTreeMap::new();
        let rest = select_regions(&table(&sizes), &st, &Budget::new(1)).unwrap();
        assert!(acquire_labels(&rest, &missing, &mut st).is_err());
        assert_eq!(st.labeled_points(), 30);
    }

    fn preds(id: &str, rows: Vec<Vec<f32>>) -> PredictionSet {
        PredictionSet::new(id, Matrix::from_rows(&rows).unwrap(), None).unwrap()
    }

    #[test]
    fn closed_forms_on_uniform_predictions() {
        let p = preds("a", vec![vec![0.25; 4]; 6]);
        let r = RegionMap::from_assignment("a", vec![0, 0, 0, 1, 1, 1]).unwrap();
        let s = |st| score_scans(&[(&p, &r)], st, 0).unwrap()[0];
        assert!((s(ScanStrategy::Conf) - 0.25).abs() < 1e-12);
        assert_eq!(s(ScanStrategy::Mar), 0.0);
        assert!((s(ScanStrategy::Ent) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn pure_regions_have_zero_segment_entropy() {
        let p = preds("a", vec![vec![0.0, 1.0, 0.0]; 4]);
        let r = RegionMap::from_assignment("a", vec![0, 1, 0, 1]).unwrap();
        assert_eq!(
            score_scans(&[(&p, &r)], ScanStrategy::Segent, 0).unwrap()[0],
            0.0
        );
        let mixed = preds("a", vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let r = RegionMap::from_assignment("a", vec![0, 0]).unwrap();
        let h = score_scans(&[(&mixed, &r)], ScanStrategy::Segent, 0).unwrap()[0];
        assert!((h - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn random_scores_ignore_scan_order() {
        let a = preds("a", vec![vec![0.5, 0.5]]);
        let b = preds("b", vec![vec![0.5, 0.5]]);
        let r = RegionMap::from_assignment("a", vec![0]).unwrap();
        let rb = RegionMap::from_assignment("b", vec![0]).unwrap();
        let fwd = score_scans(&[(&a, &r), (&b, &rb)], ScanStrategy::Rand, 4).unwrap();
        let rev = score_scans(&[(&b, &rb), (&a, &r)], ScanStrategy::Rand, 4).unwrap();
        assert_eq!(fwd, vec![rev[1], rev[0]]);
    }

    #[test]
    fn ranking_direction() {
        let ids = ["x", "y", "z"];
        assert_eq!(
            rank_scans(&ids, &[0.2, 0.9, 0.2], ScanStrategy::Ent),
            vec!["y", "x", "z"]
        );
        assert_eq!(
            rank_scans(&ids, &[0.2, 0.9, 0.1], ScanStrategy::Conf),
            vec!["z", "x", "y"]
        );
        assert!("bogus".parse::<ScanStrategy>().is_err());
    }

    #[test]
    fn coreset_examples() {
        let feats: Vec<(String, Vec<f64>)> = [("a", 0.0), ("b", 1.0), ("c", 10.0), ("d", 11.0)]
            .iter()
            .map(|(id, v)| (id.to_string(), vec![*v]))
            .collect();
        let labeled: BTreeSet<String> = ["a".to_string()].into();
        assert_eq!(coreset_select(&feats, &labeled, 1).unwrap(), vec!["d"]);
        assert!(coreset_select(&feats, &labeled, 0).unwrap().is_empty());
        assert_eq!(coreset_select(&feats, &labeled, 10).unwrap().len(), 3);
        assert!(coreset_select(&feats, &BTreeSet::new(), 1).is_err());
        let same: Vec<(String, Vec<f64>)> = ["a", "b", "c", "d"]
            .iter()
            .map(|id| (id.to_string(), vec![3.0]))
            .collect();
        let labeled: BTreeSet<String> = ["b".to_string()].into();
        assert_eq!(
            coreset_select(&same, &labeled, 3).unwrap(),
            vec!["a", "c", "d"]
        );
    }

    #[test]
    fn scan_budget_crossing() {
        let ranked: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let sizes: HashMap<String, usize> =
            [("a".into(), 100), ("b".into(), 50), ("c".into(), 30)].into();
        assert_eq!(
            take_scans_within_budget(&ranked, &sizes, 120),
            vec!["a", "b"]
        );
        assert!(take_scans_within_budget(&ranked, &sizes, 0).is_empty());
    }
}
