use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use redal::simulator::parse_reports;

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn redal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redal"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.cfg");
    fs::write(
        &p,
        "# quick run\nscenes = 4\npoints_per_scene = 2000\neval_scenes = 2\nrounds = 2\n",
    )
    .unwrap();
    p
}

#[test]
fn segment_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.reg"), dir.path().join("b.reg"));
    for out in [&a, &b] {
        let o = redal(&[
            "segment",
            "--input",
            s(&golden("grid.xyzrgb")),
            "--r-seed",
            "0.3",
            "--min-region-points",
            "2",
            "--out",
            s(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn segment_rejects_voxel_not_below_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.reg");
    let o = redal(&[
        "segment",
        "--input",
        s(&golden("grid.xyzrgb")),
        "--r-seed",
        "0.1",
        "--r-voxel",
        "0.2",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("r_seed") && err.contains("r_voxel"), "{err}");
    assert!(!out.exists());
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = redal(&[
        "segment",
        "--input",
        s(&dir.path().join("nope.bin")),
        "--out",
        s(&dir.path().join("x.reg")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn score_reproduces_golden_table() {
    let o = redal(&[
        "score",
        "--scan",
        s(&golden("grid.xyzrgb")),
        "--regions",
        s(&golden("regions.reg")),
        "--probs",
        s(&golden("probs.prb")),
        "--k",
        "5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(o.stdout, fs::read(golden("scores.tsv")).unwrap());
}

#[test]
fn score_then_select_with_zero_budget() {
    let dir = tempfile::tempdir().unwrap();
    let (table, feats) = (dir.path().join("s.tsv"), dir.path().join("r.ftr"));
    let o = redal(&[
        "score",
        "--scan",
        s(&golden("grid.xyzrgb")),
        "--regions",
        s(&golden("regions.reg")),
        "--probs",
        s(&golden("probs.prb")),
        "--features",
        s(&golden("features.ftr")),
        "--features-out",
        s(&feats),
        "--k",
        "5",
        "--out",
        s(&table),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = redal(&[
        "select",
        "--scores",
        s(&table),
        "--features",
        s(&feats),
        "--clusters",
        "2",
        "--budget",
        "0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");

    let o = redal(&[
        "select",
        "--scores",
        s(&table),
        "--features",
        s(&feats),
        "--clusters",
        "2",
        "--budget",
        "12",
        "--state",
        s(&golden("state")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().lines().count() >= 2);
}

#[test]
fn simulate_zero_rounds_reports_round_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = redal(&["simulate", "--config", s(&cfg), "--rounds", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = parse_reports(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].round, 0);
}

#[test]
fn simulate_is_deterministic_and_pairs_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = |strategies: &str| {
        let o = redal(&[
            "simulate",
            "--config",
            s(&cfg),
            "--strategy",
            strategies,
            "--seed",
            "7",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    let a = run("rand");
    assert_eq!(a, run("rand"));
    let both = parse_reports(&String::from_utf8(run("redal,rand")).unwrap()).unwrap();
    assert_eq!(both.len(), 6);
    assert_eq!(both[0].labeled_points, both[3].labeled_points);
    assert!(both[..3].iter().all(|r| r.strategy == "redal"));
    assert_eq!(
        &both[3..],
        &parse_reports(&String::from_utf8(a).unwrap()).unwrap()[..]
    );
}

#[test]
fn bad_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.cfg");
    fs::write(&p, "scenes = 4\nlearning_rate = 3\n").unwrap();
    let o = redal(&["simulate", "--config", s(&p)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
}

#[test]
fn help_lists_defaults() {
    let o = redal(&["select", "--help"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(
        text.contains("[default: 400]") && text.contains("[default: 0.95]"),
        "{text}"
    );
    let o = redal(&["score", "--help"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(
        text.contains("[default: 0.1]") && text.contains("[default: 50]"),
        "{text}"
    );
}
