//! Voxel-cloud over-segmentation into sub-scene regions.
//!
//! Simplified VCCS: voxelize, seed on a coarse grid, grow seeds over the
//! 26-connected voxel graph by a spatial + color distance, refine seed
//! centers a few times, then fold regions that are too small into a
//! neighbor. Region purity is not a goal; regions only need to be compact
//! labeling units of roughly `r_seed` size.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud_io::{PointCloud, RegionMap};
use crate::error::{Error, Result};
use crate::geometry::dist2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationParams {
    /// Spacing of the seed grid, meters.
    pub r_seed: f64,
    /// Voxel edge length, meters.
    pub r_voxel: f64,
    pub w_spatial: f64,
    pub w_color: f64,
    pub min_region_points: usize,
    pub max_iters: usize,
}

impl SegmentationParams {
    /// Dense indoor scans.
    pub fn indoor() -> Self {
        Self {
            r_seed: 1.0,
            r_voxel: 0.1,
            ..Self::base()
        }
    }

    /// Sparse outdoor LiDAR sweeps.
    pub fn outdoor() -> Self {
        Self {
            r_seed: 10.0,
            r_voxel: 0.5,
            ..Self::base()
        }
    }

    fn base() -> Self {
        Self {
            r_seed: 1.0,
            r_voxel: 0.1,
            w_spatial: 1.0,
            w_color: 0.5,
            min_region_points: 10,
            max_iters: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.r_seed, self.r_voxel, self.w_spatial, self.w_color]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("segmentation parameters must be finite"));
        }
        if !(self.r_voxel > 0.0 && self.r_seed > self.r_voxel) {
            return Err(Error::validation(format!(
                "r_seed ({}) must exceed r_voxel ({}) and r_voxel must be positive",
                self.r_seed, self.r_voxel
            )));
        }
        if self.w_spatial < 0.0 || self.w_color < 0.0 || self.w_spatial + self.w_color <= 0.0 {
            return Err(Error::validation(
                "w_spatial and w_color must be non-negative with a positive sum",
            ));
        }
        Ok(())
    }
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self::indoor()
    }
}

/// Segmentation output plus the intermediate voxelization, for inspection.
#[derive(Debug, Clone)]
pub struct SegmentationTrace {
    pub regions: RegionMap,
    /// Regions straight out of seed growth, before small ones are merged.
    pub pre_merge: RegionMap,
    /// Voxel id of every point.
    pub voxel_of_point: Vec<u32>,
    /// Integer grid coordinates of every voxel.
    pub voxel_keys: Vec<[i64; 3]>,
}

struct Voxel {
    centroid: [f64; 3],
    color: Option<[f64; 3]>,
}

struct Seed {
    center: [f64; 3],
    color: Option<[f64; 3]>,
    voxel: usize,
}

#[derive(PartialEq)]
struct Frontier {
    dist: f64,
    seed: usize,
    voxel: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.seed.cmp(&other.seed))
            .then(self.voxel.cmp(&other.voxel))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn segment(cloud: &PointCloud, params: &SegmentationParams, seed: u64) -> Result<RegionMap> {
    segment_traced(cloud, params, seed).map(|t| t.regions)
}

pub fn segment_traced(
    cloud: &PointCloud,
    params: &SegmentationParams,
    seed: u64,
) -> Result<SegmentationTrace> {
    params.validate()?;
    let n = cloud.len();

    // (a) voxelize
    let mut origin = [f64::INFINITY; 3];
    for i in 0..n {
        let p = cloud.position_f64(i);
        for a in 0..3 {
            origin[a] = origin[a].min(p[a]);
        }
    }
    let mut key_index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut voxel_keys = Vec::new();
    let mut voxel_points: Vec<Vec<u32>> = Vec::new();
    let mut voxel_of_point = Vec::with_capacity(n);
    for i in 0..n {
        let p = cloud.position_f64(i);
        let key = [0, 1, 2].map(|a| ((p[a] - origin[a]) / params.r_voxel).floor() as i64);
        let v = *key_index.entry(key).or_insert_with(|| {
            voxel_keys.push(key);
            voxel_points.push(Vec::new());
            voxel_keys.len() - 1
        });
        voxel_points[v].push(i as u32);
        voxel_of_point.push(v as u32);
    }
    let voxels: Vec<Voxel> = voxel_points
        .iter()
        .map(|pts| {
            let m = pts.len() as f64;
            let mut c = [0.0; 3];
            let mut col = [0.0; 3];
            for &p in pts {
                let pos = cloud.position_f64(p as usize);
                for a in 0..3 {
                    c[a] += pos[a];
                }
                if let Some(rgb) = cloud.color_unit(p as usize) {
                    for a in 0..3 {
                        col[a] += rgb[a];
                    }
                }
            }
            Voxel {
                centroid: c.map(|v| v / m),
                color: cloud.has_colors().then(|| col.map(|v| v / m)),
            }
        })
        .collect();
    let adjacency: Vec<Vec<usize>> = voxel_keys
        .iter()
        .map(|k| {
            let mut nbrs = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if (dx, dy, dz) == (0, 0, 0) {
                            continue;
                        }
                        if let Some(&v) = key_index.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            nbrs.push(v);
                        }
                    }
                }
            }
            nbrs.sort_unstable();
            nbrs
        })
        .collect();

    // (b) seeds on a phase-shifted r_seed grid, snapped to the occupied voxel nearest each cell center
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: [f64; 3] = [0, 1, 2].map(|_| rng.random::<f64>() * params.r_seed);
    let mut cells: BTreeMap<[i64; 3], usize> = BTreeMap::new();
    for (v, vox) in voxels.iter().enumerate() {
        let cell = [0, 1, 2]
            .map(|a| ((vox.centroid[a] - origin[a] + phase[a]) / params.r_seed).floor() as i64);
        let center =
            [0, 1, 2].map(|a| (cell[a] as f64 + 0.5) * params.r_seed - phase[a] + origin[a]);
        cells
            .entry(cell)
            .and_modify(|best| {
                if dist2(vox.centroid, center) < dist2(voxels[*best].centroid, center) {
                    *best = v;
                }
            })
            .or_insert(v);
    }
    let mut seeds: Vec<Seed> = cells
        .values()
        .map(|&v| Seed {
            center: voxels[v].centroid,
            color: voxels[v].color,
            voxel: v,
        })
        .collect();

    // (c) grow and refine
    let iters = params.max_iters.max(1);
    let mut owner = Vec::new();
    for it in 0..iters {
        owner = grow(&voxels, &adjacency, &mut seeds, params);
        if it + 1 < iters {
            refine_seeds(&voxels, &owner, &mut seeds);
        }
    }

    // (d) back to points
    let pre_merge_of: Vec<u32> = voxel_of_point
        .iter()
        .map(|&v| owner[v as usize] as u32)
        .collect();
    let pre_merge = RegionMap::from_assignment(cloud.scan_id(), dense_relabel(&pre_merge_of))?;

    // (e) fold small regions into neighbors
    let merged = merge_small(
        cloud,
        &pre_merge,
        &voxel_of_point,
        &adjacency,
        params.min_region_points,
    );
    let regions = RegionMap::from_assignment(cloud.scan_id(), dense_relabel(&merged))?;
    regions.check_partition()?;
    Ok(SegmentationTrace {
        regions,
        pre_merge,
        voxel_of_point,
        voxel_keys,
    })
}

fn seed_distance(vox: &Voxel, seed: &Seed, params: &SegmentationParams) -> f64 {
    let spatial = dist2(vox.centroid, seed.center).sqrt() / params.r_seed;
    let color = match (vox.color, seed.color) {
        (Some(a), Some(b)) => dist2(a, b).sqrt(),
        _ => 0.0,
    };
    params.w_spatial * spatial + params.w_color * color
}

/// Competitive region growing. Every voxel ends up owned by exactly one seed;
/// components that no seed reaches get a fresh seed at their lowest voxel.
fn grow(
    voxels: &[Voxel],
    adjacency: &[Vec<usize>],
    seeds: &mut Vec<Seed>,
    params: &SegmentationParams,
) -> Vec<usize> {
    const FREE: usize = usize::MAX;
    let mut owner = vec![FREE; voxels.len()];
    let mut heap = BinaryHeap::new();
    for (s, seed) in seeds.iter().enumerate() {
        heap.push(Reverse(Frontier {
            dist: seed_distance(&voxels[seed.voxel], seed, params),
            seed: s,
            voxel: seed.voxel,
        }));
    }
    let mut next_free = 0;
    loop {
        while let Some(Reverse(f)) = heap.pop() {
            if owner[f.voxel] != FREE {
                continue;
            }
            owner[f.voxel] = f.seed;
            for &nb in &adjacency[f.voxel] {
                if owner[nb] == FREE {
                    heap.push(Reverse(Frontier {
                        dist: seed_distance(&voxels[nb], &seeds[f.seed], params),
                        seed: f.seed,
                        voxel: nb,
                    }));
                }
            }
        }
        while next_free < voxels.len() && owner[next_free] != FREE {
            next_free += 1;
        }
        if next_free == voxels.len() {
            return owner;
        }
        let v = next_free;
        seeds.push(Seed {
            center: voxels[v].centroid,
            color: voxels[v].color,
            voxel: v,
        });
        heap.push(Reverse(Frontier {
            dist: 0.0,
            seed: seeds.len() - 1,
            voxel: v,
        }));
    }
}

fn refine_seeds(voxels: &[Voxel], owner: &[usize], seeds: &mut [Seed]) {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); seeds.len()];
    for (v, &s) in owner.iter().enumerate() {
        members[s].push(v);
    }
    for (seed, mem) in seeds.iter_mut().zip(&members) {
        if mem.is_empty() {
            continue;
        }
        let m = mem.len() as f64;
        let mut c = [0.0; 3];
        let mut col = [0.0; 3];
        for &v in mem {
            for a in 0..3 {
                c[a] += voxels[v].centroid[a];
                if let Some(rgb) = voxels[v].color {
                    col[a] += rgb[a];
                }
            }
        }
        seed.center = c.map(|x| x / m);
        seed.color = seed.color.map(|_| col.map(|x| x / m));
        // members are in ascending voxel order, so min_by keeps the lowest id on ties
        seed.voxel = *mem
            .iter()
            .min_by(|&&a, &&b| {
                dist2(voxels[a].centroid, seed.center)
                    .total_cmp(&dist2(voxels[b].centroid, seed.center))
            })
            .expect("non-empty");
    }
}

/// Renumbers ids densely in order of first appearance.
fn dense_relabel(ids: &[u32]) -> Vec<u32> {
    let mut map: HashMap<u32, u32> = HashMap::new();
    ids.iter()
        .map(|&r| {
            let next = map.len() as u32;
            *map.entry(r).or_insert(next)
        })
        .collect()
}

fn merge_small(
    cloud: &PointCloud,
    regions: &RegionMap,
    voxel_of_point: &[u32],
    voxel_adjacency: &[Vec<usize>],
    min_points: usize,
) -> Vec<u32> {
    let r_count = regions.num_regions();
    let mut size: Vec<usize> = regions.regions().iter().map(Vec::len).collect();
    let mut sum: Vec<[f64; 3]> = regions
        .regions()
        .iter()
        .map(|pts| {
            let mut s = [0.0; 3];
            for &p in pts {
                let pos = cloud.position_f64(p as usize);
                for a in 0..3 {
                    s[a] += pos[a];
                }
            }
            s
        })
        .collect();
    let mut voxel_region = vec![0u32; voxel_adjacency.len()];
    for (p, &v) in voxel_of_point.iter().enumerate() {
        voxel_region[v as usize] = regions.region_of()[p];
    }
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); r_count];
    for (v, nbrs) in voxel_adjacency.iter().enumerate() {
        let a = voxel_region[v] as usize;
        for &nb in nbrs {
            let b = voxel_region[nb] as usize;
            if a != b {
                adj[a].insert(b);
            }
        }
    }
    // union-find style forwarding: parent[r] == r for live regions
    let mut parent: Vec<usize> = (0..r_count).collect();
    let mut small: BTreeSet<(usize, usize)> = (0..r_count)
        .filter(|&r| size[r] < min_points)
        .map(|r| (size[r], r))
        .collect();
    let mut live = r_count;
    let centroid = |sum: &[f64; 3], size: usize| sum.map(|v| v / size as f64);
    while live > 1 {
        let Some(&(sz, r)) = small.iter().next() else {
            break;
        };
        small.remove(&(sz, r));
        let c = centroid(&sum[r], size[r]);
        let nearest = |cands: &mut dyn Iterator<Item = usize>| {
            cands.min_by(|&a, &b| {
                dist2(centroid(&sum[a], size[a]), c)
                    .total_cmp(&dist2(centroid(&sum[b], size[b]), c))
                    .then(a.cmp(&b))
            })
        };
        let target = nearest(&mut adj[r].iter().copied())
            .or_else(|| nearest(&mut (0..r_count).filter(|&o| o != r && parent[o] == o)))
            .expect("another live region exists");
        small.remove(&(size[target], target));
        size[target] += size[r];
        for a in 0..3 {
            sum[target][a] += sum[r][a];
        }
        let moved = std::mem::take(&mut adj[r]);
        for &o in &moved {
            adj[o].remove(&r);
            if o != target {
                adj[o].insert(target);
                adj[target].insert(o);
            }
        }
        adj[target].remove(&r);
        parent[r] = target;
        live -= 1;
        if size[target] < min_points {
            small.insert((size[target], target));
        }
    }
    let find = |mut r: usize| {
        while parent[r] != r {
            r = parent[r];
        }
        r
    };
    regions
        .region_of()
        .iter()
        .map(|&r| find(r as usize) as u32)
        .collect()
}
