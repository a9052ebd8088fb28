//! C ABI over the `redal` selection engine.
//!
//! Every fallible call returns a [`RedalStatus`]; on failure the message is
//! available from [`redal_last_error`] on the same thread. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function. Array arguments are borrowed for the duration of the
//! call only.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use redal::cloud_io::{
    load_scan, validate_predictions, Matrix, PointCloud, PredictionSet, RegionMap, ScanFormat,
};
use redal::diversity::{kmeans, penalize_similar, PenaltyParams, RegionFeatureSet};
use redal::geometry::{color_discontinuity_from, surface_variation_from, KdTree};
use redal::scoring::{
    combine_information, region_color_discontinuity, region_entropy, region_structural_complexity,
    RegionInfoWeights, ScoreTable,
};
use redal::selection::{select_regions, Budget};
use redal::simulator::compute_iou;
use redal::supervoxel::{segment, SegmentationParams};
use redal::{Error, Result};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedalStatus {
    Ok = 0,
    NullArgument = 1,
    Io = 2,
    Format = 3,
    Validation = 4,
    Panic = 5,
}

/// A scan: positions plus optional colors.
pub struct RedalCloud(PointCloud);

/// Region assignment of one scan.
pub struct RedalRegions(RegionMap);

/// Per-point class probabilities and optional features.
pub struct RedalPredictions(PredictionSet);

/// Ranked region scores of one scan.
pub struct RedalScoreTable(ScoreTable);

/// One row of a score table.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedalScoreRow {
    pub region_id: u32,
    pub points: usize,
    pub entropy: f64,
    pub color: f64,
    pub structure: f64,
    pub phi: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RedalStatus {
    match e {
        Error::Io { .. } => RedalStatus::Io,
        Error::Format(_) => RedalStatus::Format,
        Error::Validation(_) => RedalStatus::Validation,
    }
}

enum Failure {
    Null(&'static str),
    Engine(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

type FfiResult<T> = std::result::Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> RedalStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RedalStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("{name} must not be NULL"));
            RedalStatus::NullArgument
        }
        Ok(Err(Failure::Engine(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".to_string());
            RedalStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn array<'a, T>(p: *const T, len: usize, name: &'static str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn array_mut<'a, T>(p: *mut T, len: usize, name: &'static str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn string(p: *const c_char, name: &'static str) -> FfiResult<String> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_string)
        .map_err(|_| Failure::Engine(Error::Validation(format!("{name} is not valid UTF-8"))))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or NULL.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn redal_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn redal_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a cloud from `n` xyz triples and, when `rgb` is not NULL, `n` RGB triples.
///
/// # Safety
/// `xyz` must point to `3*n` floats, `rgb` to `3*n` bytes or be NULL, and
/// `scan_id` to a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn redal_cloud_new(
    scan_id: *const c_char,
    xyz: *const f32,
    rgb: *const u8,
    n: usize,
    out: *mut *mut RedalCloud,
) -> RedalStatus {
    guard(|| {
        let id = string(scan_id, "scan_id")?;
        let pos = array(xyz, 3 * n, "xyz")?;
        let positions = pos.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
        let colors = if rgb.is_null() {
            None
        } else {
            Some(
                array(rgb, 3 * n, "rgb")?
                    .chunks_exact(3)
                    .map(|c| [c[0], c[1], c[2]])
                    .collect(),
            )
        };
        emit(
            out,
            RedalCloud(PointCloud::new(id, positions, colors, None)?),
        )
    })
}

/// Loads a `.bin` or `.xyzrgb` scan; the scan id is the file stem.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn redal_cloud_load(
    path: *const c_char,
    out: *mut *mut RedalCloud,
) -> RedalStatus {
    guard(|| {
        let path = string(path, "path")?;
        let p = Path::new(&path);
        let format = ScanFormat::from_path(p)
            .ok_or_else(|| Error::Validation(format!("cannot infer the scan format of {path}")))?;
        emit(out, RedalCloud(load_scan(p, format)?))
    })
}

/// # Safety
/// `cloud` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn redal_cloud_len(cloud: *const RedalCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `cloud` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn redal_cloud_free(cloud: *mut RedalCloud) {
    release(cloud);
}

/// Over-segments a cloud into supervoxel regions.
///
/// # Safety
/// `cloud` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn redal_segment(
    cloud: *const RedalCloud,
    r_seed: f64,
    r_voxel: f64,
    seed: u64,
    out: *mut *mut RedalRegions,
) -> RedalStatus {
    guard(|| {
        let cloud = borrow(cloud, "cloud")?;
        let params = SegmentationParams {
            r_seed,
            r_voxel,
            ..SegmentationParams::indoor()
        };
        emit(out, RedalRegions(segment(&cloud.0, &params, seed)?))
    })
}

/// Wraps a dense region assignment `ids[0..n]`.
///
/// # Safety
/// `ids` must point to `n` values and `scan_id` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn redal_regions_new(
    scan_id: *const c_char,
    ids: *const u32,
    n: usize,
    out: *mut *mut RedalRegions,
) -> RedalStatus {
    guard(|| {
        let id = string(scan_id, "scan_id")?;
        let ids = array(ids, n, "ids")?.to_vec();
        emit(out, RedalRegions(RegionMap::from_assignment(id, ids)?))
    })
}

/// Number of regions.
///
/// # Safety
/// `regions` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn redal_regions_count(regions: *const RedalRegions) -> usize {
    regions.as_ref().map_or(0, |r| r.0.num_regions())
}

/// Number of points covered.
///
/// # Safety
/// `regions` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn redal_regions_len(regions: *const RedalRegions) -> usize {
    regions.as_ref().map_or(0, |r| r.0.num_points())
}

/// Copies the per-point region ids into `out[0..cap]`; `cap` must equal the point count.
///
/// # Safety
/// `regions` must be a live handle and `out` point to `cap` writable values.
#[no_mangle]
pub unsafe extern "C" fn redal_regions_copy(
    regions: *const RedalRegions,
    out: *mut u32,
    cap: usize,
) -> RedalStatus {
    guard(|| {
        let r = borrow(regions, "regions")?;
        if cap != r.0.num_points() {
            return Err(Error::Validation(format!(
                "buffer holds {cap} ids, map has {}",
                r.0.num_points()
            ))
            .into());
        }
        array_mut(out, cap, "out")?.copy_from_slice(r.0.region_of());
        Ok(())
    })
}

/// # Safety
/// `regions` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn redal_regions_free(regions: *mut RedalRegions) {
    release(regions);
}

/// Wraps row-major probabilities (`n` by `classes`) and optional features (`n` by `dim`).
///
/// # Safety
/// `probs` must point to `n*classes` floats; `features` to `n*dim` floats or be NULL.
#[no_mangle]
pub unsafe extern "C" fn redal_predictions_new(
    scan_id: *const c_char,
    probs: *const f32,
    n: usize,
    classes: usize,
    features: *const f32,
    dim: usize,
    out: *mut *mut RedalPredictions,
) -> RedalStatus {
    guard(|| {
        let id = string(scan_id, "scan_id")?;
        let p = Matrix::new(n, classes, array(probs, n * classes, "probs")?.to_vec())?;
        let f = if features.is_null() {
            None
        } else {
            Some(Matrix::new(
                n,
                dim,
                array(features, n * dim, "features")?.to_vec(),
            )?)
        };
        emit(out, RedalPredictions(PredictionSet::new(id, p, f)?))
    })
}

/// # Safety
/// `pred` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn redal_predictions_free(pred: *mut RedalPredictions) {
    release(pred);
}

/// Scores every region of one scan and ranks them by `phi`.
/// `beta` is ignored for colorless clouds.
///
/// # Safety
/// All handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn redal_score_regions(
    cloud: *const RedalCloud,
    regions: *const RedalRegions,
    pred: *const RedalPredictions,
    alpha: f64,
    beta: f64,
    gamma: f64,
    k: usize,
    out: *mut *mut RedalScoreTable,
) -> RedalStatus {
    guard(|| {
        let cloud = &borrow(cloud, "cloud")?.0;
        let regions = &borrow(regions, "regions")?.0;
        let pred = &borrow(pred, "pred")?.0;
        emit(
            out,
            RedalScoreTable(score(cloud, regions, pred, alpha, beta, gamma, k)?),
        )
    })
}

fn score(
    cloud: &PointCloud,
    regions: &RegionMap,
    pred: &PredictionSet,
    alpha: f64,
    beta: f64,
    gamma: f64,
    k: usize,
) -> Result<ScoreTable> {
    let mut w = RegionInfoWeights::new(alpha, beta, gamma)?;
    if k < 3 {
        return Err(Error::Validation("k must be at least 3".into()));
    }
    validate_predictions(pred, cloud)?;
    if regions.num_points() != cloud.len() {
        return Err(Error::Validation(format!(
            "region map covers {} points, cloud has {}",
            regions.num_points(),
            cloud.len()
        )));
    }
    let index = KdTree::build(cloud);
    let hoods = index.knn_all(k);
    let c = if cloud.has_colors() {
        color_discontinuity_from(cloud, &hoods)?
    } else {
        w.beta = 0.0;
        vec![0.0; cloud.len()]
    };
    let h = region_entropy(pred, regions)?;
    let c = region_color_discontinuity(&c, regions)?;
    let s = region_structural_complexity(&surface_variation_from(&index, &hoods), regions)?;
    combine_information(regions, &h, &c, &s, &w)
}

/// # Safety
/// `table` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn redal_scores_len(table: *const RedalScoreTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.len())
}

/// Row `i` in rank order.
///
/// # Safety
/// `table` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn redal_scores_get(
    table: *const RedalScoreTable,
    i: usize,
    out: *mut RedalScoreRow,
) -> RedalStatus {
    guard(|| {
        let t = &borrow(table, "table")?.0;
        let r = t.rows().get(i).ok_or_else(|| {
            Error::Validation(format!("row {i} out of range for {} rows", t.len()))
        })?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = RedalScoreRow {
            region_id: r.region_id,
            points: r.points,
            entropy: r.entropy,
            color: r.color,
            structure: r.structure,
            phi: r.phi,
        };
        Ok(())
    })
}

/// # Safety
/// `table` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn redal_scores_free(table: *mut RedalScoreTable) {
    release(table);
}

/// Applies the cluster-wise decay to scores already sorted best-first.
///
/// # Safety
/// `phi`, `labels` and `out` must each hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn redal_penalize_similar(
    phi: *const f64,
    labels: *const usize,
    n: usize,
    eta: f64,
    clusters: usize,
    out: *mut f64,
) -> RedalStatus {
    guard(|| {
        let params = PenaltyParams::new(eta, clusters)?;
        let v = penalize_similar(array(phi, n, "phi")?, array(labels, n, "labels")?, &params)?;
        array_mut(out, n, "out")?.copy_from_slice(&v);
        Ok(())
    })
}

/// Seeded k-means++ over `n` row-major vectors of width `dim`; writes one
/// cluster id per row.
///
/// # Safety
/// `data` must hold `n*dim` values and `assignment` `n` writable slots.
#[no_mangle]
pub unsafe extern "C" fn redal_kmeans(
    data: *const f64,
    n: usize,
    dim: usize,
    clusters: usize,
    seed: u64,
    max_iters: usize,
    assignment: *mut usize,
) -> RedalStatus {
    guard(|| {
        let set = feature_set(array(data, n * dim, "data")?, n, dim)?;
        let model = kmeans(&set, clusters, seed, max_iters)?;
        array_mut(assignment, n, "assignment")?.copy_from_slice(model.assignment());
        Ok(())
    })
}

fn feature_set(data: &[f64], n: usize, dim: usize) -> Result<RegionFeatureSet> {
    if dim == 0 {
        return Err(Error::Validation("feature width must be at least 1".into()));
    }
    let mut set = RegionFeatureSet::new(dim);
    for (i, row) in data.chunks_exact(dim).take(n).enumerate() {
        set.push(redal::cloud_io::RegionKey::new("ffi", i as u32), row)?;
    }
    Ok(set)
}

/// Diversity-penalizes one scan's table and fills `out` with the selected
/// region ids in selection order. `features` holds one row of width `dim`
/// per region id. `count` receives the batch length.
///
/// # Safety
/// `table` must be a live handle, `features` hold `regions*dim` values, and
/// `out` have room for `cap` ids.
#[no_mangle]
pub unsafe extern "C" fn redal_select(
    table: *const RedalScoreTable,
    features: *const f64,
    dim: usize,
    clusters: usize,
    eta: f64,
    budget: usize,
    seed: u64,
    out: *mut u32,
    cap: usize,
    count: *mut usize,
) -> RedalStatus {
    guard(|| {
        let t = &borrow(table, "table")?.0;
        let count = count.as_mut().ok_or(Failure::Null("count"))?;
        let params = PenaltyParams::new(eta, clusters)?;
        *count = 0;
        if t.is_empty() {
            return Ok(());
        }
        let n = t.len();
        let raw = array(features, n * dim, "features")?;
        let mut set = RegionFeatureSet::new(dim.max(1));
        for r in t.rows() {
            let i = r.region_id as usize;
            let row = raw
                .get(i * dim..(i + 1) * dim)
                .ok_or_else(|| Error::Validation(format!("no feature row for region {i}")))?;
            set.push(r.key(), row)?;
        }
        let (adjusted, _) = redal::diversity::diversity_rerank(t, &set, &params, seed, 25)?;
        let state = redal::cloud_io::DatasetState::new(seed);
        let batch = select_regions(&adjusted, &state, &Budget::new(budget))?;
        if batch.len() > cap {
            return Err(Error::Validation(format!(
                "batch of {} regions exceeds buffer of {cap}",
                batch.len()
            ))
            .into());
        }
        let out = array_mut(out, batch.len(), "out")?;
        for (o, e) in out.iter_mut().zip(batch.entries()) {
            *o = e.key.region_id;
        }
        *count = batch.len();
        Ok(())
    })
}

/// Per-class IoU (NaN for classes absent from both inputs) and mIoU.
///
/// # Safety
/// `pred` and `truth` must hold `n` labels, `per_class` `classes` slots,
/// and `miou` be writable.
#[no_mangle]
pub unsafe extern "C" fn redal_compute_iou(
    pred: *const u8,
    truth: *const u8,
    n: usize,
    classes: usize,
    per_class: *mut f64,
    miou: *mut f64,
) -> RedalStatus {
    guard(|| {
        let r = compute_iou(array(pred, n, "pred")?, array(truth, n, "truth")?, classes)?;
        let miou = miou.as_mut().ok_or(Failure::Null("miou"))?;
        for (o, v) in array_mut(per_class, classes, "per_class")?
            .iter_mut()
            .zip(&r.per_class)
        {
            *o = v.unwrap_or(f64::NAN);
        }
        *miou = r.miou;
        Ok(())
    })
}
