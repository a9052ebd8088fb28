//! Deterministic artifacts for every file format, and their re-encoders.
#![allow(dead_code)]

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use redal::cloud_io::{
    decode, encode, load_scan, load_state, save_state, write_scan, DatasetState, LabelMask, Matrix,
    Payload, PointCloud, PredictionSet, RegionKey, RegionMap, ScanFormat,
};
use redal::diversity::{rerank, AdjustedTable, PenaltyParams};
use redal::geometry::{color_discontinuity_points, surface_variation_points, KdTree};
use redal::scoring::{
    combine_information, region_color_discontinuity, region_entropy, region_structural_complexity,
    RegionInfoWeights, ScoreTable,
};
use redal::selection::{select_regions, Budget, SelectionBatch};
use redal::simulator::{parse_reports, write_reports, RoundReport};

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// A 6x5 grid scan with a raised corner, four regions and three classes.
pub fn grid_scan() -> (PointCloud, RegionMap, PredictionSet) {
    let mut pos = Vec::new();
    let mut rgb = Vec::new();
    for i in 0..6 {
        for j in 0..5 {
            let z = if i >= 4 && j >= 3 {
                0.15 * (i + j - 6) as f32
            } else {
                0.0
            };
            pos.push([0.1 * i as f32, 0.1 * j as f32, z]);
            rgb.push([(40 * i) as u8, (50 * j) as u8, if i < 3 { 200 } else { 20 }]);
        }
    }
    let cloud = PointCloud::new("grid", pos, Some(rgb), None).unwrap();
    let region_of = (0..30u32).map(|p| p / 8).collect::<Vec<_>>();
    let regions = RegionMap::from_assignment("grid", region_of).unwrap();
    let rows: Vec<Vec<f32>> = (0..30)
        .map(|p| match p % 4 {
            0 => vec![1.0, 0.0, 0.0],
            1 => vec![0.5, 0.25, 0.25],
            2 => vec![0.125, 0.75, 0.125],
            _ => vec![0.375, 0.375, 0.25],
        })
        .collect();
    let feats: Vec<Vec<f32>> = (0..30)
        .map(|p| vec![p as f32 / 30.0, (p % 3) as f32, 0.5])
        .collect();
    let pred = PredictionSet::new(
        "grid",
        Matrix::from_rows(&rows).unwrap(),
        Some(Matrix::from_rows(&feats).unwrap()),
    )
    .unwrap();
    (cloud, regions, pred)
}

fn score_table() -> ScoreTable {
    let (cloud, regions, pred) = grid_scan();
    let index = KdTree::build(&cloud);
    let c = color_discontinuity_points(&cloud, &index, 5).unwrap();
    let s = surface_variation_points(&cloud, &index, 5).unwrap();
    combine_information(
        &regions,
        &region_entropy(&pred, &regions).unwrap(),
        &region_color_discontinuity(&c, &regions).unwrap(),
        &region_structural_complexity(&s, &regions).unwrap(),
        &RegionInfoWeights::default(),
    )
    .unwrap()
}

fn adjusted() -> AdjustedTable {
    let table = score_table();
    let cluster_of: HashMap<RegionKey, usize> = table
        .rows()
        .iter()
        .map(|r| (r.key(), (r.region_id % 2) as usize))
        .collect();
    rerank(&table, &cluster_of, &PenaltyParams::new(0.5, 2).unwrap()).unwrap()
}

fn state() -> DatasetState {
    let (_, regions, _) = grid_scan();
    let mut st = DatasetState::new(11);
    st.add_scan(regions).unwrap();
    let other = RegionMap::from_assignment("other", vec![0, 0, 1, 1, 1]).unwrap();
    st.add_scan(other).unwrap();
    let truth: Vec<u8> = (0..30).map(|p| (p % 3) as u8).collect();
    st.label_region(&RegionKey::new("grid", 1), &truth).unwrap();
    st.label_region(&RegionKey::new("other", 1), &[0, 0, 2, 2, 2])
        .unwrap();
    st.advance_round();
    st
}

fn reports() -> Vec<RoundReport> {
    vec![
        RoundReport {
            round: 0,
            strategy: "redal".into(),
            seed: 3,
            labeled_points: 300,
            labeled_pct: 3.0,
            miou: 0.4166666666666667,
            iou: vec![Some(1.0), Some(0.25), None, Some(0.0)],
            new_points: 300,
            dist: vec![600.0, 300.0, 0.0, 100.0],
        },
        RoundReport {
            round: 1,
            strategy: "redal".into(),
            seed: 3,
            labeled_points: 512,
            labeled_pct: 5.12,
            miou: 0.1 + 0.2,
            iou: vec![Some(0.9), Some(1.0 / 3.0), Some(0.5), Some(0.125)],
            new_points: 212,
            dist: vec![],
        },
    ]
}

/// Every golden file name with the bytes the current code produces for it.
pub fn artifacts() -> Vec<(String, Vec<u8>)> {
    let (cloud, regions, pred) = grid_scan();
    let mut out = vec![
        (
            "probs.prb".to_string(),
            encode(&Payload::Probabilities(pred.probs().clone())).unwrap(),
        ),
        (
            "features.ftr".to_string(),
            encode(&Payload::Features(pred.features().unwrap().clone())).unwrap(),
        ),
        (
            "regions.reg".to_string(),
            encode(&Payload::Regions(regions.region_of().to_vec())).unwrap(),
        ),
    ];
    let mut mask = LabelMask::unlabeled("grid", 30).unwrap();
    for p in [0, 3, 7, 8, 29] {
        mask.set(p, (p % 3) as u8);
    }
    out.push((
        "labels.lbl".to_string(),
        encode(&Payload::Labels(mask.labels().to_vec())).unwrap(),
    ));
    out.push((
        "scores.tsv".to_string(),
        score_table().to_tsv().into_bytes(),
    ));
    let adj = adjusted();
    out.push(("adjusted.tsv".to_string(), adj.to_tsv().into_bytes()));
    let mut st = DatasetState::new(0);
    st.add_scan(regions).unwrap();
    let batch = select_regions(&adj, &st, &Budget::new(12)).unwrap();
    out.push(("batch.tsv".to_string(), batch.to_tsv().into_bytes()));
    out.push((
        "reports.txt".to_string(),
        write_reports(&reports()).into_bytes(),
    ));
    let tmp = tempfile::tempdir().unwrap();
    for (name, fmt) in [
        ("grid.bin", ScanFormat::KittiBin),
        ("grid.xyzrgb", ScanFormat::AsciiXyzrgb),
    ] {
        let p = tmp.path().join(name);
        write_scan(&p, &cloud, fmt).unwrap();
        out.push((name.to_string(), fs::read(&p).unwrap()));
    }
    let dir = tmp.path().join("state");
    save_state(&dir, &state()).unwrap();
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    for f in files {
        let name = format!("state/{}", f.file_name().unwrap().to_string_lossy());
        out.push((name, fs::read(&f).unwrap()));
    }
    out
}

/// Parses a golden file and writes it back with the library's encoder.
pub fn reencode(name: &str, bytes: &[u8]) -> Vec<u8> {
    let text = || String::from_utf8(bytes.to_vec()).unwrap();
    if let Some(file) = name.strip_prefix("state/") {
        let tmp = tempfile::tempdir().unwrap();
        let src = golden_dir().join("state");
        let out = tmp.path().join("state");
        save_state(&out, &load_state(&src).unwrap()).unwrap();
        return fs::read(out.join(file)).unwrap();
    }
    match Path::new(name)
        .extension()
        .and_then(|e| e.to_str())
        .unwrap()
    {
        "prb" | "ftr" | "reg" | "lbl" => encode(&decode(bytes).unwrap()).unwrap(),
        "tsv" if name == "scores.tsv" => {
            ScoreTable::from_tsv(&text()).unwrap().to_tsv().into_bytes()
        }
        "tsv" if name == "adjusted.tsv" => AdjustedTable::from_tsv(&text())
            .unwrap()
            .to_tsv()
            .into_bytes(),
        "tsv" => SelectionBatch::from_tsv(&text())
            .unwrap()
            .to_tsv()
            .into_bytes(),
        "txt" => write_reports(&parse_reports(&text()).unwrap()).into_bytes(),
        ext @ ("bin" | "xyzrgb") => {
            let tmp = tempfile::tempdir().unwrap();
            let fmt = if ext == "bin" {
                ScanFormat::KittiBin
            } else {
                ScanFormat::AsciiXyzrgb
            };
            let src = tmp.path().join(format!("grid.{ext}"));
            fs::write(&src, bytes).unwrap();
            let cloud = load_scan(&src, fmt).unwrap();
            let dst = tmp.path().join(format!("again.{ext}"));
            write_scan(&dst, &cloud, fmt).unwrap();
            fs::read(dst).unwrap()
        }
        other => panic!("no re-encoder for .{other}"),
    }
}

/// Writes `artifacts()` into the golden directory.
pub fn bless() {
    for (name, bytes) in artifacts() {
        let p = golden_dir().join(&name);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, bytes).unwrap();
    }
}

/// Compares the checked-in files with regenerated and re-encoded bytes.
/// Returns one message per mismatch.
pub fn check() -> Vec<String> {
    let mut problems = Vec::new();
    for (name, fresh) in artifacts() {
        let path = golden_dir().join(&name);
        let Ok(stored) = fs::read(&path) else {
            problems.push(format!("{name}: missing golden file"));
            continue;
        };
        if stored != fresh {
            problems.push(format!("{name}: regenerated bytes differ from golden"));
        }
        if reencode(&name, &stored) != stored {
            problems.push(format!("{name}: decode/encode round trip is not bit-exact"));
        }
    }
    problems
}
