//! Paired strategy comparison on the synthetic room corpus.
//!
//! `cargo run --release -p redal --example benchmark [seeds]`

use std::time::Instant;

use redal::simulator::{
    benchmark_scenes, fully_supervised_miou, prepare_corpus, run_active_loop, BenchmarkSpec,
    LoopConfig, Strategy, BENCHMARK_CLASSES, CLUTTER,
};

fn main() -> redal::Result<()> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3);
    let t0 = Instant::now();
    let train = benchmark_scenes(&BenchmarkSpec::default())?;
    let eval = benchmark_scenes(&BenchmarkSpec {
        scenes: 6,
        seed: 99,
        prefix: "val",
        ..Default::default()
    })?;
    let base = LoopConfig::indoor(Strategy::Redal, 0);
    let corpus = prepare_corpus(&train, &eval, BENCHMARK_CLASSES.len(), &base)?;
    let regions: usize = corpus.train.iter().map(|s| s.regions.num_regions()).sum();
    println!(
        "prepared {} points, {regions} regions in {:?}; fully supervised mIoU {:.4}",
        corpus.total_points(),
        t0.elapsed(),
        fully_supervised_miou(&corpus, base.tau)?
    );
    for name in ["redal", "rand", "ent", "conf", "mar", "segent", "coreset"] {
        let strategy: Strategy = name.parse()?;
        let mut final_miou = 0.0;
        let mut clutter = 0.0;
        let mut new_total = 0.0;
        let t = Instant::now();
        for seed in 0..seeds {
            let cfg = LoopConfig {
                strategy,
                seed,
                ..base
            };
            let reports = run_active_loop(&cfg, &corpus)?;
            let last = reports.last().expect("round 0");
            final_miou += last.miou;
            for r in &reports[1..] {
                if !r.dist.is_empty() {
                    clutter += r.dist[usize::from(CLUTTER)] * r.new_points as f64 / 1000.0;
                    new_total += r.new_points as f64;
                }
            }
            let curve: Vec<String> = reports.iter().map(|r| format!("{:.3}", r.miou)).collect();
            let cl: f64 = reports[1..]
                .iter()
                .filter(|r| !r.dist.is_empty())
                .map(|r| r.dist[usize::from(CLUTTER)] * r.new_points as f64 / 1000.0)
                .sum();
            let iou: Vec<String> = last
                .iou
                .iter()
                .map(|v| v.map_or("-".into(), |x| format!("{x:.2}")))
                .collect();
            println!(
                "  {name} seed {seed}: {} labeled={} clutter_pts={cl} iou={}",
                curve.join(" "),
                last.labeled_points,
                iou.join(",")
            );
        }
        println!(
            "{name:8} final mIoU {:.4}  clutter permille {:.1}  ({:?})",
            final_miou / seeds as f64,
            1000.0 * clutter / new_total.max(1.0),
            t.elapsed()
        );
    }
    Ok(())
}
