use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::container::load_expect;
use super::{encode, LabelMask, Magic, Payload, RegionMap, UNLABELED};
use crate::error::{Error, Result};

/// Identifies one region across the whole corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegionKey {
    pub scan_id: String,
    pub region_id: u32,
}

impl RegionKey {
    pub fn new(scan_id: impl Into<String>, region_id: u32) -> Self {
        Self {
            scan_id: scan_id.into(),
            region_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanEntry {
    pub mask: LabelMask,
    pub regions: RegionMap,
}

impl ScanEntry {
    pub fn points(&self) -> usize {
        self.regions.num_points()
    }
}

/// Labeled/unlabeled pools at region granularity.
///
/// A region is in the labeled set exactly when every one of its points carries
/// a class in the scan's mask. Regions are only ever added to the labeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetState {
    scans: BTreeMap<String, ScanEntry>,
    labeled_regions: BTreeSet<RegionKey>,
    labeled_points: usize,
    round_index: u32,
    rng_seed: u64,
}

impl DatasetState {
    pub fn new(rng_seed: u64) -> Self {
        Self {
            scans: BTreeMap::new(),
            labeled_regions: BTreeSet::new(),
            labeled_points: 0,
            round_index: 0,
            rng_seed,
        }
    }

    /// Registers a scan whose points are all unlabeled.
    pub fn add_scan(&mut self, regions: RegionMap) -> Result<()> {
        let mask = LabelMask::unlabeled(regions.scan_id(), regions.num_points())?;
        self.add_scan_with_mask(regions, mask)
    }

    /// Registers a scan with an existing mask. Every region must be either
    /// fully labeled or fully unlabeled.
    pub fn add_scan_with_mask(&mut self, regions: RegionMap, mask: LabelMask) -> Result<()> {
        let id = regions.scan_id().to_string();
        if self.scans.contains_key(&id) {
            return Err(Error::validation(format!("scan {id} registered twice")));
        }
        if mask.scan_id() != id || mask.len() != regions.num_points() {
            return Err(Error::validation(format!(
                "mask for {} ({} points) does not match region map for {id} ({} points)",
                mask.scan_id(),
                mask.len(),
                regions.num_points()
            )));
        }
        let mut newly = Vec::new();
        for (r, pts) in regions.regions().iter().enumerate() {
            let labeled = pts
                .iter()
                .filter(|&&p| mask.labels()[p as usize] != UNLABELED)
                .count();
            if labeled == pts.len() {
                newly.push(RegionKey::new(id.clone(), r as u32));
            } else if labeled != 0 {
                return Err(Error::validation(format!(
                    "region {r} of scan {id} is partially labeled ({labeled}/{})",
                    pts.len()
                )));
            }
        }
        self.labeled_points += mask.labeled_count();
        self.labeled_regions.extend(newly);
        self.scans.insert(id, ScanEntry { mask, regions });
        Ok(())
    }

    pub fn scans(&self) -> impl Iterator<Item = (&str, &ScanEntry)> {
        self.scans.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn scan(&self, scan_id: &str) -> Option<&ScanEntry> {
        self.scans.get(scan_id)
    }

    pub fn num_scans(&self) -> usize {
        self.scans.len()
    }

    pub fn labeled_regions(&self) -> &BTreeSet<RegionKey> {
        &self.labeled_regions
    }

    pub fn is_labeled(&self, key: &RegionKey) -> bool {
        self.labeled_regions.contains(key)
    }

    pub fn region_size(&self, key: &RegionKey) -> Option<usize> {
        let entry = self.scans.get(&key.scan_id)?;
        entry
            .regions
            .regions()
            .get(key.region_id as usize)
            .map(Vec::len)
    }

    /// Every region not yet in the labeled set, in (scan id, region id) order.
    pub fn unlabeled_regions(&self) -> Vec<RegionKey> {
        self.scans
            .iter()
            .flat_map(|(id, e)| {
                (0..e.regions.num_regions() as u32).map(move |r| RegionKey::new(id.clone(), r))
            })
            .filter(|k| !self.labeled_regions.contains(k))
            .collect()
    }

    pub fn labeled_points(&self) -> usize {
        self.labeled_points
    }

    pub fn total_points(&self) -> usize {
        self.scans.values().map(ScanEntry::points).sum()
    }

    pub fn is_scan_fully_labeled(&self, scan_id: &str) -> bool {
        self.scans.get(scan_id).is_some_and(|e| {
            (0..e.regions.num_regions() as u32)
                .all(|r| self.labeled_regions.contains(&RegionKey::new(scan_id, r)))
        })
    }

    pub fn is_scan_untouched(&self, scan_id: &str) -> bool {
        self.scans
            .get(scan_id)
            .is_some_and(|e| e.mask.labeled_count() == 0)
    }

    pub fn round_index(&self) -> u32 {
        self.round_index
    }

    pub fn advance_round(&mut self) {
        self.round_index += 1;
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Copies ground-truth labels for one region into the mask.
    /// Returns the number of points labeled.
    pub fn label_region(&mut self, key: &RegionKey, truth: &[u8]) -> Result<usize> {
        if self.labeled_regions.contains(key) {
            return Err(Error::validation(format!(
                "region {} of scan {} is already labeled",
                key.region_id, key.scan_id
            )));
        }
        let entry = self
            .scans
            .get_mut(&key.scan_id)
            .ok_or_else(|| Error::validation(format!("unknown scan {}", key.scan_id)))?;
        if truth.len() != entry.points() {
            return Err(Error::validation(format!(
                "ground truth for {} has {} points, expected {}",
                key.scan_id,
                truth.len(),
                entry.points()
            )));
        }
        let pts = entry
            .regions
            .regions()
            .get(key.region_id as usize)
            .ok_or_else(|| {
                Error::validation(format!(
                    "scan {} has no region {}",
                    key.scan_id, key.region_id
                ))
            })?;
        if let Some(&p) = pts.iter().find(|&&p| truth[p as usize] == UNLABELED) {
            return Err(Error::validation(format!(
                "ground truth for point {p} of scan {} is missing",
                key.scan_id
            )));
        }
        for &p in pts {
            entry.mask.set(p as usize, truth[p as usize]);
        }
        let n = pts.len();
        self.labeled_points += n;
        self.labeled_regions.insert(key.clone());
        Ok(n)
    }

    /// Labels every still-unlabeled region of a scan. Returns points labeled.
    pub fn label_scan(&mut self, scan_id: &str, truth: &[u8]) -> Result<usize> {
        let regions = self
            .scans
            .get(scan_id)
            .ok_or_else(|| Error::validation(format!("unknown scan {scan_id}")))?
            .regions
            .num_regions() as u32;
        let mut total = 0;
        for r in 0..regions {
            let key = RegionKey::new(scan_id, r);
            if !self.labeled_regions.contains(&key) {
                total += self.label_region(&key, truth)?;
            }
        }
        Ok(total)
    }

    /// Full re-derivation of the labeled set and point count from the masks.
    pub fn check_consistency(&self) -> Result<()> {
        let mut points = 0;
        for (id, e) in &self.scans {
            e.regions.check_partition()?;
            points += e.mask.labeled_count();
            for (r, pts) in e.regions.regions().iter().enumerate() {
                let all = pts.iter().all(|&p| e.mask.get(p as usize).is_some());
                let member = self
                    .labeled_regions
                    .contains(&RegionKey::new(id.clone(), r as u32));
                if all != member {
                    return Err(Error::validation(format!(
                        "region {r} of scan {id}: fully labeled = {all}, in labeled set = {member}"
                    )));
                }
            }
        }
        if let Some(k) = self
            .labeled_regions
            .iter()
            .find(|k| self.region_size(k).is_none())
        {
            return Err(Error::validation(format!(
                "labeled set names unknown region {} of {}",
                k.region_id, k.scan_id
            )));
        }
        if points != self.labeled_points {
            return Err(Error::validation(format!(
                "labeled point counter {} disagrees with masks ({points})",
                self.labeled_points
            )));
        }
        Ok(())
    }
}

const MANIFEST: &str = "manifest.txt";

/// Writes `manifest.txt` plus one `<scan>.lbl` and `<scan>.reg` per scan.
pub fn save_state(dir: impl AsRef<Path>, state: &DatasetState) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("# redal dataset state\n");
    writeln!(manifest, "round_index={}", state.round_index).expect("string write");
    writeln!(manifest, "rng_seed={}", state.rng_seed).expect("string write");
    writeln!(manifest, "labeled_points={}", state.labeled_points).expect("string write");
    writeln!(manifest, "labeled_regions={}", state.labeled_regions.len()).expect("string write");
    for (id, e) in &state.scans {
        writeln!(manifest, "scan={id} points={}", e.points()).expect("string write");
        let lbl = dir.join(format!("{id}.lbl"));
        fs::write(&lbl, encode(&Payload::Labels(e.mask.labels().to_vec()))?)
            .map_err(|err| Error::io(&lbl, err))?;
        let reg = dir.join(format!("{id}.reg"));
        fs::write(
            &reg,
            encode(&Payload::Regions(e.regions.region_of().to_vec()))?,
        )
        .map_err(|err| Error::io(&reg, err))?;
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

fn parse_kv<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::format(format!("manifest: expected {key}=..., got {line:?}")))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(format!("manifest: bad {what} {s:?}")))
}

pub fn load_state(dir: impl AsRef<Path>) -> Result<DatasetState> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let mut next = |key: &str| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| Error::format(format!("manifest: missing {key}")))?;
        parse_kv(line, key).map(str::to_string)
    };
    let round_index: u32 = parse_num(&next("round_index")?, "round_index")?;
    let rng_seed: u64 = parse_num(&next("rng_seed")?, "rng_seed")?;
    let labeled_points: usize = parse_num(&next("labeled_points")?, "labeled_points")?;
    let labeled_regions: usize = parse_num(&next("labeled_regions")?, "labeled_regions")?;
    let mut state = DatasetState::new(rng_seed);
    state.round_index = round_index;
    for line in text.lines().filter(|l| l.starts_with("scan=")) {
        let mut parts = line.split_whitespace();
        let id = parse_kv(parts.next().unwrap_or_default(), "scan")?;
        let points: usize = parse_num(
            parse_kv(parts.next().unwrap_or_default(), "points")?,
            "points",
        )?;
        let Payload::Labels(labels) = load_expect(&dir.join(format!("{id}.lbl")), Magic::Labels)?
        else {
            unreachable!("decode_as checked the magic")
        };
        let Payload::Regions(ids) = load_expect(&dir.join(format!("{id}.reg")), Magic::Regions)?
        else {
            unreachable!("decode_as checked the magic")
        };
        if labels.len() != points || ids.len() != points {
            return Err(Error::format(format!(
                "manifest: scan {id} point count mismatch"
            )));
        }
        state.add_scan_with_mask(
            RegionMap::from_assignment(id, ids)?,
            LabelMask::new(id, labels)?,
        )?;
    }
    if state.labeled_points != labeled_points || state.labeled_regions.len() != labeled_regions {
        return Err(Error::format(
            "manifest totals disagree with the stored label masks",
        ));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_region_scan(id: &str) -> RegionMap {
        RegionMap::from_assignment(id, vec![0, 0, 1, 1, 1]).unwrap()
    }

    #[test]
    fn labeling_a_region_updates_counts() {
        let mut st = DatasetState::new(1);
        st.add_scan(two_region_scan("a")).unwrap();
        let truth = [2, 2, 3, 3, 3];
        assert_eq!(st.label_region(&RegionKey::new("a", 1), &truth).unwrap(), 3);
        assert_eq!(st.labeled_points(), 3);
        assert!(st.is_labeled(&RegionKey::new("a", 1)));
        assert!(st.label_region(&RegionKey::new("a", 1), &truth).is_err());
        st.check_consistency().unwrap();
        assert_eq!(st.unlabeled_regions(), vec![RegionKey::new("a", 0)]);
    }

    #[test]
    fn missing_truth_is_rejected() {
        let mut st = DatasetState::new(1);
        st.add_scan(two_region_scan("a")).unwrap();
        assert!(st
            .label_region(&RegionKey::new("a", 0), &[255, 1, 1, 1, 1])
            .is_err());
        assert!(st.label_region(&RegionKey::new("b", 0), &[1; 5]).is_err());
        assert_eq!(st.labeled_points(), 0);
    }

    #[test]
    fn partial_region_masks_are_rejected() {
        let mut st = DatasetState::new(1);
        let mask = LabelMask::new("a", vec![1, 255, 255, 255, 255]).unwrap();
        assert!(st.add_scan_with_mask(two_region_scan("a"), mask).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut st = DatasetState::new(9);
        st.add_scan(two_region_scan("a")).unwrap();
        st.add_scan(two_region_scan("b")).unwrap();
        st.label_scan("b", &[0, 0, 1, 1, 1]).unwrap();
        st.advance_round();
        let dir = tempfile::tempdir().unwrap();
        save_state(dir.path(), &st).unwrap();
        let back = load_state(dir.path()).unwrap();
        assert_eq!(back, st);
        assert!(back.is_scan_fully_labeled("b"));
        assert!(back.is_scan_untouched("a"));
    }
}
