//! The `redal` command line.
//!
//! Exit codes: 0 success, 1 file-system error, 2 invalid input.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cloud_io::{
    encode, load_matrix, load_scan, load_state, save_matrix, validate_predictions, DatasetState,
    Magic, Matrix, Payload, PointCloud, PredictionSet, RegionKey, RegionMap, ScanFormat,
};
use crate::config::RunConfig;
use crate::diversity::{diversity_rerank, pool_region_features, PenaltyParams, RegionFeatureSet};
use crate::error::{Error, Result};
use crate::geometry::{color_discontinuity_from, surface_variation_from, KdTree};
use crate::scoring::{
    combine_information, region_color_discontinuity, region_entropy, region_structural_complexity,
    RegionInfoWeights, ScoreTable,
};
use crate::selection::{select_regions, Budget, SelectionBatch};
use crate::simulator::{
    benchmark_scenes, prepare_corpus, run_active_loop, write_reports, BenchmarkSpec, LoopConfig,
    Strategy, BENCHMARK_CLASSES,
};
use crate::supervoxel::{segment, SegmentationParams};

#[derive(Debug, Parser)]
#[command(
    name = "redal",
    version,
    about = "Region-based, diversity-aware active learning for point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Over-segment a scan into supervoxel regions (writes REDALREG).
    Segment(SegmentArgs),
    /// Score every region of a scan (writes a score TSV).
    Score(ScoreArgs),
    /// Diversity-penalize a score table and take one budgeted batch.
    Select(SelectArgs),
    /// Run the closed-loop benchmark for one or more strategies.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct SegmentArgs {
    /// Scan file (.bin or .xyzrgb).
    #[arg(long)]
    input: PathBuf,
    /// kitti_bin or ascii_xyzrgb; inferred from the extension when absent.
    #[arg(long)]
    format: Option<ScanFormat>,
    /// Seed spacing in meters.
    #[arg(long, default_value_t = 1.0)]
    r_seed: f64,
    /// Voxel edge in meters.
    #[arg(long, default_value_t = 0.1)]
    r_voxel: f64,
    /// Regions below this size are merged into a neighbor.
    #[arg(long, default_value_t = 10)]
    min_region_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    scan: PathBuf,
    #[arg(long)]
    format: Option<ScanFormat>,
    /// REDALREG region map of the scan.
    #[arg(long)]
    regions: PathBuf,
    /// REDALPRB softmax probabilities, one row per point.
    #[arg(long)]
    probs: PathBuf,
    /// Optional REDALFTR point features to pool per region.
    #[arg(long, requires = "features_out")]
    features: Option<PathBuf>,
    /// Region-level REDALFTR, rows aligned with the output table.
    #[arg(long, requires = "features")]
    features_out: Option<PathBuf>,
    /// Entropy weight.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Color discontinuity weight; forced to 0 for colorless scans.
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// Structural complexity weight.
    #[arg(long, default_value_t = 0.05)]
    gamma: f64,
    /// Neighbors per point for the descriptors.
    #[arg(long, default_value_t = 50)]
    k: usize,
    /// Output TSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelectArgs {
    /// Score TSV; rows may span several scans.
    #[arg(long)]
    scores: PathBuf,
    /// Region-level REDALFTR with one row per score-table row, same order.
    #[arg(long)]
    features: PathBuf,
    /// Number of k-means clusters.
    #[arg(long, default_value_t = 400)]
    clusters: usize,
    /// Decay rate applied within a cluster.
    #[arg(long, default_value_t = 0.95)]
    decay: f64,
    /// Points to label in this round.
    #[arg(long)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 25)]
    kmeans_iters: usize,
    /// Dataset state directory; labeled regions are skipped.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Output batch TSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the re-ranked table with cluster ids.
    #[arg(long)]
    cluster_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// `key = value` config file; indoor defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated: redal, rand, conf, mar, ent, segent, coreset.
    #[arg(long, default_value = "redal", value_delimiter = ',')]
    strategy: Vec<Strategy>,
    /// Query rounds after the initial labeling (7 for indoor).
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses arguments, runs one command, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Segment(a) => cmd_segment(&a),
        Command::Score(a) => cmd_score(&a),
        Command::Select(a) => cmd_select(&a),
        Command::Simulate(a) => cmd_simulate(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// 1 for file-system errors, 2 for everything the caller can fix in the input.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_io() {
        1
    } else {
        2
    }
}

fn output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn scan_format(path: &Path, explicit: Option<ScanFormat>) -> Result<ScanFormat> {
    explicit
        .or_else(|| ScanFormat::from_path(path))
        .ok_or_else(|| {
            Error::validation(format!(
                "cannot infer the format of {}; pass --format",
                path.display()
            ))
        })
}

fn load_kind(path: &Path, magic: Magic) -> Result<Payload> {
    let p = load_matrix(path)?;
    if p.magic() != magic {
        return Err(Error::validation(format!(
            "{} holds {:?} data, expected {magic:?}",
            path.display(),
            p.magic()
        )));
    }
    Ok(p)
}

fn load_matrix_kind(path: &Path, magic: Magic) -> Result<Matrix> {
    Ok(load_kind(path, magic)?
        .into_matrix()
        .expect("matrix payload"))
}

fn load_regions(path: &Path, cloud: &PointCloud) -> Result<RegionMap> {
    let Payload::Regions(ids) = load_kind(path, Magic::Regions)? else {
        unreachable!("magic checked")
    };
    if ids.len() != cloud.len() {
        return Err(Error::validation(format!(
            "region map has {} entries, scan {} has {} points",
            ids.len(),
            cloud.scan_id(),
            cloud.len()
        )));
    }
    RegionMap::from_assignment(cloud.scan_id(), ids)
}

fn cmd_segment(a: &SegmentArgs) -> Result<()> {
    let params = SegmentationParams {
        r_seed: a.r_seed,
        r_voxel: a.r_voxel,
        min_region_points: a.min_region_points,
        ..SegmentationParams::indoor()
    };
    params.validate()?;
    let cloud = load_scan(&a.input, scan_format(&a.input, a.format)?)?;
    let regions = segment(&cloud, &params, a.seed)?;
    let bytes = encode(&Payload::Regions(regions.region_of().to_vec()))?;
    fs::write(&a.out, bytes).map_err(|e| Error::io(&a.out, e))?;
    eprintln!(
        "{}: {} points, {} regions",
        cloud.scan_id(),
        cloud.len(),
        regions.num_regions()
    );
    Ok(())
}

fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let mut weights = RegionInfoWeights::new(a.alpha, a.beta, a.gamma)?;
    if a.k < 3 {
        return Err(Error::validation("--k must be at least 3"));
    }
    let cloud = load_scan(&a.scan, scan_format(&a.scan, a.format)?)?;
    let regions = load_regions(&a.regions, &cloud)?;
    let probs = load_matrix_kind(&a.probs, Magic::Probabilities)?;
    let features = a
        .features
        .as_deref()
        .map(|p| load_matrix_kind(p, Magic::Features))
        .transpose()?;
    let pred = PredictionSet::new(cloud.scan_id(), probs, features)?;
    validate_predictions(&pred, &cloud)?;
    if !cloud.has_colors() && weights.beta != 0.0 {
        eprintln!(
            "warning: {} has no colors; beta forced to 0",
            cloud.scan_id()
        );
        weights.beta = 0.0;
    }
    let index = KdTree::build(&cloud);
    let hoods = index.knn_all(a.k);
    let point_c = if cloud.has_colors() {
        color_discontinuity_from(&cloud, &hoods)?
    } else {
        vec![0.0; cloud.len()]
    };
    let h = region_entropy(&pred, &regions)?;
    let c = region_color_discontinuity(&point_c, &regions)?;
    let s = region_structural_complexity(&surface_variation_from(&index, &hoods), &regions)?;
    let table = combine_information(&regions, &h, &c, &s, &weights)?;
    if let Some(out) = &a.features_out {
        let pooled = pool_region_features(&pred, &regions)?;
        let mut aligned = RegionFeatureSet::new(pooled.dim());
        for r in table.rows() {
            aligned.push(r.key(), pooled.row(r.region_id as usize))?;
        }
        save_matrix(out, &aligned.to_payload()?)?;
    }
    output(a.out.as_deref(), &table.to_tsv())
}

fn cmd_select(a: &SelectArgs) -> Result<()> {
    let params = PenaltyParams::new(a.decay, a.clusters)?;
    if a.kmeans_iters == 0 {
        return Err(Error::validation("--kmeans-iters must be at least 1"));
    }
    let path = &a.scores;
    let mut table =
        ScoreTable::from_tsv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
    let feats = load_matrix_kind(&a.features, Magic::Features)?;
    let keys: Vec<RegionKey> = table.rows().iter().map(|r| r.key()).collect();
    let features = RegionFeatureSet::from_matrix(keys, &feats)?;
    let state = match &a.state {
        Some(dir) => load_state(dir)?,
        None => DatasetState::new(a.seed),
    };
    if table.is_empty() {
        return output(a.out.as_deref(), &SelectionBatch::empty().to_tsv());
    }
    table.sort();
    let (adjusted, _) = diversity_rerank(&table, &features, &params, a.seed, a.kmeans_iters)?;
    if let Some(p) = &a.cluster_out {
        fs::write(p, adjusted.to_tsv()).map_err(|e| Error::io(p, e))?;
    }
    let batch = select_regions(&adjusted, &state, &Budget::new(a.budget))?;
    eprintln!(
        "selected {} regions, {} points",
        batch.len(),
        batch.total_points()
    );
    output(a.out.as_deref(), &batch.to_tsv())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p, a.seed)?,
        None => RunConfig::indoor(a.seed),
    };
    if let Some(r) = a.rounds {
        cfg.loop_cfg.rounds = r;
    }
    if a.strategy.is_empty() {
        return Err(Error::validation("--strategy needs at least one name"));
    }
    let train = benchmark_scenes(&cfg.bench)?;
    let eval = if cfg.eval_scenes == 0 {
        Vec::new()
    } else {
        benchmark_scenes(&BenchmarkSpec {
            scenes: cfg.eval_scenes,
            seed: cfg.eval_seed,
            prefix: "val",
            ..cfg.bench
        })?
    };
    let corpus = prepare_corpus(&train, &eval, BENCHMARK_CLASSES.len(), &cfg.loop_cfg)?;
    let mut reports = Vec::new();
    for &strategy in &a.strategy {
        let loop_cfg = LoopConfig {
            strategy,
            ..cfg.loop_cfg
        };
        let r = run_active_loop(&loop_cfg, &corpus)?;
        if let Some(last) = r.last() {
            eprintln!(
                "{}: final mIoU {} at {}% labeled",
                strategy.name(),
                last.miou,
                last.labeled_pct
            );
        }
        reports.extend(r);
    }
    output(a.out.as_deref(), &write_reports(&reports))
}
