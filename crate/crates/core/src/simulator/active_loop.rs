use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{class_distribution_ratio, compute_iou};
use super::predictor::{point_features, PrototypePredictor};
use super::report::RoundReport;
use super::scene::Scene;
use crate::cloud_io::{DatasetState, LabelMask, Matrix, PointCloud, PredictionSet, RegionMap};
use crate::diversity::{diversity_rerank, pool_region_features, PenaltyParams, RegionFeatureSet};
use crate::error::{Error, Result};
use crate::geometry::{color_discontinuity_from, surface_variation_from, KdTree, DEFAULT_K};
use crate::scoring::{
    region_color_discontinuity, region_entropy, region_structural_complexity, RegionInfoWeights,
    ScoreTable,
};
use crate::selection::{
    acquire_labels, coreset_select, rank_scans, score_scans, select_regions,
    take_scans_within_budget, Budget, ScanStrategy, SelectionStatus,
};
use crate::supervoxel::{segment, SegmentationParams};

/// What the loop queries each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Region scoring with diversity penalization.
    Redal,
    /// Whole-scan uncertainty or random baseline.
    Scan(ScanStrategy),
    /// Whole-scan greedy k-center over mean scan features.
    CoreSet,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Redal => "redal",
            Strategy::Scan(s) => s.name(),
            Strategy::CoreSet => "coreset",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "redal" => Ok(Strategy::Redal),
            "coreset" | "core-set" => Ok(Strategy::CoreSet),
            other => other.parse().map(Strategy::Scan).map_err(|_| {
                Error::validation(format!(
                    "unknown strategy {s:?}; expected redal, rand, conf, mar, ent, segent or coreset"
                ))
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConfig {
    pub x_init: f64,
    pub rounds: u32,
    pub x_active: f64,
    pub strategy: Strategy,
    pub weights: RegionInfoWeights,
    pub penalty: PenaltyParams,
    pub segmentation: SegmentationParams,
    /// Neighborhood size for the point descriptors.
    pub k: usize,
    pub tau: f64,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl LoopConfig {
    pub fn indoor(strategy: Strategy, seed: u64) -> Self {
        Self {
            x_init: 0.03,
            rounds: 7,
            x_active: 0.02,
            strategy,
            weights: RegionInfoWeights::default(),
            penalty: PenaltyParams::default(),
            segmentation: SegmentationParams::indoor(),
            k: DEFAULT_K,
            tau: 0.05,
            kmeans_iters: 25,
            seed,
        }
    }

    pub fn outdoor(strategy: Strategy, seed: u64) -> Self {
        Self {
            x_init: 0.01,
            rounds: 5,
            x_active: 0.01,
            penalty: PenaltyParams {
                eta: 0.95,
                clusters: 150,
            },
            segmentation: SegmentationParams::outdoor(),
            ..Self::indoor(strategy, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("x_init", self.x_init), ("x_active", self.x_active)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::validation(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::validation(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.k < 3 {
            return Err(Error::validation("k must be at least 3"));
        }
        if self.kmeans_iters == 0 {
            return Err(Error::validation("kmeans_iters must be at least 1"));
        }
        self.weights.validate()?;
        self.penalty.validate()?;
        self.segmentation.validate()
    }
}

/// A scan with everything that does not change between rounds.
#[derive(Debug, Clone)]
pub struct PreparedScan {
    pub cloud: PointCloud,
    pub truth: Vec<u8>,
    pub regions: RegionMap,
    pub features: Matrix,
    pub color_disc: Vec<f64>,
    pub surf_var: Vec<f64>,
}

impl PreparedScan {
    pub fn scan_id(&self) -> &str {
        self.cloud.scan_id()
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// Training pool plus held-out evaluation scans.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub train: Vec<PreparedScan>,
    /// When empty, metrics are computed on the training pool.
    pub eval: Vec<PreparedScan>,
    pub classes: usize,
}

impl Corpus {
    pub fn total_points(&self) -> usize {
        self.train.iter().map(PreparedScan::len).sum()
    }

    pub fn max_region_points(&self) -> usize {
        self.train
            .iter()
            .flat_map(|s| s.regions.regions().iter().map(Vec::len))
            .max()
            .unwrap_or(0)
    }
}

fn prepare_scan(
    scene: &Scene,
    params: &SegmentationParams,
    k: usize,
    seed: u64,
) -> Result<PreparedScan> {
    let cloud = scene.cloud.clone();
    let regions = segment(&cloud, params, seed)?;
    let index = KdTree::build(&cloud);
    let hoods = index.knn_all(k);
    let surf_var = surface_variation_from(&index, &hoods);
    let color_disc = if cloud.has_colors() {
        color_discontinuity_from(&cloud, &hoods)?
    } else {
        vec![0.0; cloud.len()]
    };
    let features = point_features(&cloud, &hoods, &surf_var)?;
    Ok(PreparedScan {
        truth: scene.truth.labels().to_vec(),
        cloud,
        regions,
        features,
        color_disc,
        surf_var,
    })
}

/// Segments every scan and computes its descriptors and features.
pub fn prepare_corpus(
    train: &[Scene],
    eval: &[Scene],
    classes: usize,
    cfg: &LoopConfig,
) -> Result<Corpus> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::validation(
            "the training pool needs at least one scan",
        ));
    }
    let mut ids = BTreeSet::new();
    for s in train.iter().chain(eval) {
        if !ids.insert(s.cloud.scan_id()) {
            return Err(Error::validation(format!(
                "scan id {} appears twice",
                s.cloud.scan_id()
            )));
        }
        if let Some(&bad) = s
            .truth
            .labels()
            .iter()
            .find(|&&l| usize::from(l) >= classes)
        {
            return Err(Error::validation(format!(
                "scan {} has label {bad} outside [0, {classes})",
                s.cloud.scan_id()
            )));
        }
    }
    let prep = |scenes: &[Scene]| -> Result<Vec<PreparedScan>> {
        scenes
            .par_iter()
            .map(|s| prepare_scan(s, &cfg.segmentation, cfg.k, cfg.seed))
            .collect()
    };
    Ok(Corpus {
        train: prep(train)?,
        eval: prep(eval)?,
        classes,
    })
}

fn fit(corpus: &Corpus, state: &DatasetState, tau: f64) -> Result<PrototypePredictor> {
    let samples: Vec<(&Matrix, &LabelMask)> = corpus
        .train
        .iter()
        .map(|s| {
            (
                &s.features,
                &state.scan(s.scan_id()).expect("scan registered").mask,
            )
        })
        .collect();
    PrototypePredictor::fit(&samples, corpus.classes, tau)
}

fn evaluate(corpus: &Corpus, predictor: &PrototypePredictor) -> Result<(f64, Vec<Option<f64>>)> {
    let scans = if corpus.eval.is_empty() {
        &corpus.train
    } else {
        &corpus.eval
    };
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for s in scans {
        pred.extend(predictor.predict_labels(&s.features));
        truth.extend_from_slice(&s.truth);
    }
    let r = compute_iou(&pred, &truth, corpus.classes)?;
    Ok((r.miou, r.per_class))
}

/// mIoU of a predictor fit on every training label.
pub fn fully_supervised_miou(corpus: &Corpus, tau: f64) -> Result<f64> {
    let samples: Vec<(&Matrix, LabelMask)> = corpus
        .train
        .iter()
        .map(|s| Ok((&s.features, LabelMask::new(s.scan_id(), s.truth.clone())?)))
        .collect::<Result<_>>()?;
    let refs: Vec<(&Matrix, &LabelMask)> = samples.iter().map(|(m, l)| (*m, l)).collect();
    let p = PrototypePredictor::fit(&refs, corpus.classes, tau)?;
    Ok(evaluate(corpus, &p)?.0)
}

/// Outcome of one query step.
enum Query {
    Labeled(Vec<u8>),
    Exhausted,
}

struct Loop<'a> {
    cfg: &'a LoopConfig,
    corpus: &'a Corpus,
    state: DatasetState,
    oracle: BTreeMap<String, Vec<u8>>,
    by_id: HashMap<&'a str, &'a PreparedScan>,
}

impl Loop<'_> {
    fn label_scans(&mut self, ids: &[String]) -> Result<Vec<u8>> {
        let mut new = Vec::new();
        for id in ids {
            let truth = &self.oracle[id];
            let mask = &self.state.scan(id).expect("scan registered").mask;
            new.extend(
                (0..truth.len())
                    .filter(|&i| mask.get(i).is_none())
                    .map(|i| truth[i]),
            );
            self.state.label_scan(id, truth)?;
        }
        Ok(new)
    }

    fn untouched(&self) -> Vec<&PreparedScan> {
        self.corpus
            .train
            .iter()
            .filter(|s| self.state.is_scan_untouched(s.scan_id()))
            .collect()
    }

    fn predict(
        &self,
        p: &PrototypePredictor,
        scans: &[&PreparedScan],
    ) -> Result<Vec<PredictionSet>> {
        scans
            .par_iter()
            .map(|s| p.predict(s.scan_id(), &s.features))
            .collect()
    }

    fn sizes(&self) -> HashMap<String, usize> {
        self.corpus
            .train
            .iter()
            .map(|s| (s.scan_id().to_string(), s.len()))
            .collect()
    }

    fn query(&mut self, p: &PrototypePredictor, budget: usize, round: u32) -> Result<Query> {
        match self.cfg.strategy {
            Strategy::Redal => self.query_regions(p, budget, round),
            Strategy::Scan(s) => {
                let pool = self.untouched();
                if pool.is_empty() {
                    return Ok(Query::Exhausted);
                }
                let preds = self.predict(p, &pool)?;
                let pairs: Vec<(&PredictionSet, &RegionMap)> = preds
                    .iter()
                    .zip(&pool)
                    .map(|(pr, s)| (pr, &s.regions))
                    .collect();
                let scores = score_scans(&pairs, s, self.cfg.seed)?;
                let ids: Vec<&str> = pool.iter().map(|s| s.scan_id()).collect();
                let ranked = rank_scans(&ids, &scores, s);
                let take = take_scans_within_budget(&ranked, &self.sizes(), budget);
                Ok(Query::Labeled(self.label_scans(&take)?))
            }
            Strategy::CoreSet => {
                let pool = self.untouched();
                if pool.is_empty() {
                    return Ok(Query::Exhausted);
                }
                let feats: Vec<(String, Vec<f64>)> = self
                    .corpus
                    .train
                    .iter()
                    .map(|s| (s.scan_id().to_string(), mean_row(&s.features)))
                    .collect();
                let labeled: BTreeSet<String> = self
                    .corpus
                    .train
                    .iter()
                    .filter(|s| !self.state.is_scan_untouched(s.scan_id()))
                    .map(|s| s.scan_id().to_string())
                    .collect();
                let order = coreset_select(&feats, &labeled, pool.len())?;
                let take = take_scans_within_budget(&order, &self.sizes(), budget);
                Ok(Query::Labeled(self.label_scans(&take)?))
            }
        }
    }

    fn query_regions(
        &mut self,
        p: &PrototypePredictor,
        budget: usize,
        round: u32,
    ) -> Result<Query> {
        let pool: Vec<&PreparedScan> = self
            .corpus
            .train
            .iter()
            .filter(|s| !self.state.is_scan_fully_labeled(s.scan_id()))
            .collect();
        if pool.is_empty() {
            return Ok(Query::Exhausted);
        }
        let preds = self.predict(p, &pool)?;
        let mut table = ScoreTable::new();
        let mut features = RegionFeatureSet::new(self.corpus.train[0].features.cols());
        for (pred, s) in preds.iter().zip(&pool) {
            let h = region_entropy(pred, &s.regions)?;
            let c = region_color_discontinuity(&s.color_disc, &s.regions)?;
            let st = region_structural_complexity(&s.surf_var, &s.regions)?;
            table.extend_scan(&s.regions, &h, &c, &st, &self.cfg.weights)?;
            features.extend(pool_region_features(pred, &s.regions)?)?;
        }
        table.retain(|r| !self.state.is_labeled(&r.key()));
        features.retain(|k| !self.state.is_labeled(k));
        table.sort();
        let kmeans_seed = self.cfg.seed.wrapping_add(u64::from(round));
        let (adjusted, _) = diversity_rerank(
            &table,
            &features,
            &self.cfg.penalty,
            kmeans_seed,
            self.cfg.kmeans_iters,
        )?;
        let batch = select_regions(&adjusted, &self.state, &Budget::new(budget))?;
        if batch.status() == SelectionStatus::NoCandidates {
            return Ok(Query::Exhausted);
        }
        let mut new = Vec::with_capacity(batch.total_points());
        for e in batch.entries() {
            let truth = &self.oracle[&e.key.scan_id];
            let regions = &self.by_id[e.key.scan_id.as_str()].regions;
            new.extend(
                regions
                    .region(e.key.region_id)
                    .iter()
                    .map(|&i| truth[i as usize]),
            );
        }
        acquire_labels(&batch, &self.oracle, &mut self.state)?;
        Ok(Query::Labeled(new))
    }

    fn report(
        &self,
        round: u32,
        predictor: &PrototypePredictor,
        new: &[u8],
    ) -> Result<RoundReport> {
        let (miou, iou) = evaluate(self.corpus, predictor)?;
        let dist = if new.is_empty() {
            Vec::new()
        } else {
            class_distribution_ratio(new, self.corpus.classes)?
        };
        let labeled = self.state.labeled_points();
        Ok(RoundReport {
            round,
            strategy: self.cfg.strategy.name().to_string(),
            seed: self.cfg.seed,
            labeled_points: labeled,
            labeled_pct: 100.0 * labeled as f64 / self.state.total_points() as f64,
            miou,
            iou,
            new_points: new.len(),
            dist,
        })
    }
}

fn mean_row(m: &Matrix) -> Vec<f64> {
    let mut acc = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        acc.iter_mut()
            .zip(row)
            .for_each(|(a, &v)| *a += f64::from(v));
    }
    acc.iter().map(|v| v / m.rows() as f64).collect()
}

/// Runs the initial labeling plus `cfg.rounds` query rounds.
///
/// The initial pool is whole scans drawn at random from the seed alone, so
/// every strategy starts from the same labels. Each round targets
/// `x_active` of the corpus; overshoot from the budget-crossing region is
/// carried into the next round's budget. The report list ends early when
/// nothing is left to query.
pub fn run_active_loop(cfg: &LoopConfig, corpus: &Corpus) -> Result<Vec<RoundReport>> {
    run_active_loop_with(cfg, corpus, |_, _| Ok(()))
}

/// [`run_active_loop`] with a callback that sees the dataset state after
/// the initial labeling and after every round.
pub fn run_active_loop_with(
    cfg: &LoopConfig,
    corpus: &Corpus,
    mut on_round: impl FnMut(u32, &DatasetState) -> Result<()>,
) -> Result<Vec<RoundReport>> {
    cfg.validate()?;
    if corpus.train.is_empty() {
        return Err(Error::validation("the training pool is empty"));
    }
    let mut state = DatasetState::new(cfg.seed);
    for s in &corpus.train {
        state.add_scan(s.regions.clone())?;
    }
    let mut lp = Loop {
        cfg,
        corpus,
        state,
        oracle: corpus
            .train
            .iter()
            .map(|s| (s.scan_id().to_string(), s.truth.clone()))
            .collect(),
        by_id: corpus.train.iter().map(|s| (s.scan_id(), s)).collect(),
    };
    let total = corpus.total_points();
    let init_budget = (cfg.x_init * total as f64).round() as usize;
    let per_round = (cfg.x_active * total as f64).round() as usize;

    let mut ids: Vec<String> = lp.oracle.keys().cloned().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let init = take_scans_within_budget(&ids, &lp.sizes(), init_budget.max(1));
    let new = lp.label_scans(&init)?;
    let base = lp.state.labeled_points();
    on_round(0, &lp.state)?;
    let mut reports = vec![lp.report(0, &fit(corpus, &lp.state, cfg.tau)?, &new)?];

    for round in 1..=cfg.rounds {
        let predictor = fit(corpus, &lp.state, cfg.tau)?;
        let target = base + round as usize * per_round;
        let budget = target.saturating_sub(lp.state.labeled_points());
        let new = if budget == 0 {
            Vec::new()
        } else {
            match lp.query(&predictor, budget, round)? {
                Query::Labeled(new) => new,
                Query::Exhausted => break,
            }
        };
        lp.state.advance_round();
        on_round(round, &lp.state)?;
        reports.push(lp.report(round, &fit(corpus, &lp.state, cfg.tau)?, &new)?);
    }
    Ok(reports)
}
