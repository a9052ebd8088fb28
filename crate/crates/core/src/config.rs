//! `key = value` run configuration for the simulator command.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::simulator::{BenchmarkSpec, LoopConfig, Strategy};

/// Everything `simulate` needs besides the strategy list.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub loop_cfg: LoopConfig,
    pub bench: BenchmarkSpec,
    /// Held-out scenes used for metrics; 0 evaluates on the training pool.
    pub eval_scenes: usize,
    pub eval_seed: u64,
}

/// Keys accepted in a config file, in documentation order.
pub const KEYS: &[&str] = &[
    "profile",
    "x_init",
    "rounds",
    "x_active",
    "alpha",
    "beta",
    "gamma",
    "k",
    "eta",
    "clusters",
    "r_seed",
    "r_voxel",
    "w_spatial",
    "w_color",
    "min_region_points",
    "max_iters",
    "tau",
    "kmeans_iters",
    "scenes",
    "points_per_scene",
    "scene_seed",
    "eval_scenes",
    "eval_seed",
];

impl RunConfig {
    pub fn indoor(seed: u64) -> Self {
        Self {
            loop_cfg: LoopConfig::indoor(Strategy::Redal, seed),
            bench: BenchmarkSpec {
                seed,
                ..BenchmarkSpec::default()
            },
            eval_scenes: 6,
            eval_seed: seed.wrapping_add(1),
        }
    }

    pub fn outdoor(seed: u64) -> Self {
        Self {
            loop_cfg: LoopConfig::outdoor(Strategy::Redal, seed),
            ..Self::indoor(seed)
        }
    }

    /// Parses config text. `profile` is applied before every other key, so
    /// key order does not matter. `seed` drives the loop and, unless
    /// `scene_seed`/`eval_seed` pin them, the generated scenes.
    pub fn parse(text: &str, seed: u64) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::validation(format!("config line {}: expected key = value", n + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::validation(format!(
                    "config line {}: unknown key {k:?}",
                    n + 1
                )));
            }
            if !seen.insert(k.to_string()) {
                return Err(Error::validation(format!(
                    "config line {}: key {k} set twice",
                    n + 1
                )));
            }
            pairs.push((n + 1, k, v));
        }
        let profile = pairs.iter().find(|p| p.1 == "profile").map(|p| p.2);
        let mut cfg = match profile {
            None | Some("indoor") => Self::indoor(seed),
            Some("outdoor") => Self::outdoor(seed),
            Some(other) => {
                return Err(Error::validation(format!(
                    "unknown profile {other:?}; expected indoor or outdoor"
                )))
            }
        };
        for &(n, k, v) in &pairs {
            cfg.set(n, k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, seed: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, seed)
    }

    fn set(&mut self, n: usize, k: &str, v: &str) -> Result<()> {
        let l = &mut self.loop_cfg;
        match k {
            "profile" => {}
            "x_init" => l.x_init = num(n, k, v)?,
            "rounds" => l.rounds = num(n, k, v)?,
            "x_active" => l.x_active = num(n, k, v)?,
            "alpha" => l.weights.alpha = num(n, k, v)?,
            "beta" => l.weights.beta = num(n, k, v)?,
            "gamma" => l.weights.gamma = num(n, k, v)?,
            "k" => l.k = num(n, k, v)?,
            "eta" => l.penalty.eta = num(n, k, v)?,
            "clusters" => l.penalty.clusters = num(n, k, v)?,
            "r_seed" => l.segmentation.r_seed = num(n, k, v)?,
            "r_voxel" => l.segmentation.r_voxel = num(n, k, v)?,
            "w_spatial" => l.segmentation.w_spatial = num(n, k, v)?,
            "w_color" => l.segmentation.w_color = num(n, k, v)?,
            "min_region_points" => l.segmentation.min_region_points = num(n, k, v)?,
            "max_iters" => l.segmentation.max_iters = num(n, k, v)?,
            "tau" => l.tau = num(n, k, v)?,
            "kmeans_iters" => l.kmeans_iters = num(n, k, v)?,
            "scenes" => self.bench.scenes = num(n, k, v)?,
            "points_per_scene" => self.bench.points_per_scene = num(n, k, v)?,
            "scene_seed" => self.bench.seed = num(n, k, v)?,
            "eval_scenes" => self.eval_scenes = num(n, k, v)?,
            "eval_seed" => self.eval_seed = num(n, k, v)?,
            _ => unreachable!("keys are checked against KEYS"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.loop_cfg.validate()?;
        if self.bench.scenes == 0 {
            return Err(Error::validation("scenes must be at least 1"));
        }
        if self.bench.points_per_scene < 100 {
            return Err(Error::validation("points_per_scene must be at least 100"));
        }
        Ok(())
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| {
        Error::validation(format!(
            "config line {line}: {key} = {v:?} is not a valid number"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::parse(
            "# paired run\nrounds = 3\nx_active = 0.05 # per round\n\n",
            9,
        )
        .unwrap();
        assert_eq!(cfg.loop_cfg.rounds, 3);
        assert_eq!(cfg.loop_cfg.x_active, 0.05);
        assert_eq!(cfg.loop_cfg.x_init, 0.03);
        assert_eq!(cfg.loop_cfg.seed, 9);
        assert_eq!(cfg.bench.seed, 9);
    }

    #[test]
    fn profile_applies_first() {
        let cfg = RunConfig::parse("clusters = 10\nprofile = outdoor", 0).unwrap();
        assert_eq!(cfg.loop_cfg.penalty.clusters, 10);
        assert_eq!(cfg.loop_cfg.x_init, 0.01);
        assert_eq!(cfg.loop_cfg.segmentation.r_seed, 10.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("colour = 1", 0).is_err());
        assert!(RunConfig::parse("rounds = 1\nrounds = 2", 0).is_err());
        assert!(RunConfig::parse("rounds = many", 0).is_err());
        assert!(RunConfig::parse("x_init = 1.5", 0).is_err());
        assert!(RunConfig::parse("eta = 0", 0).is_err());
        assert!(RunConfig::parse("r_voxel = 2", 0).is_err());
        assert!(RunConfig::parse("profile = orbital", 0).is_err());
        assert!(RunConfig::parse("rounds", 0).is_err());
    }
}
