use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Metrics after one round of the loop; round 0 is the initial labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: u32,
    pub strategy: String,
    pub seed: u64,
    pub labeled_points: usize,
    /// Labeled share of the training corpus, in percent.
    pub labeled_pct: f64,
    pub miou: f64,
    pub iou: Vec<Option<f64>>,
    pub new_points: usize,
    /// Class distribution of the points labeled this round, permille.
    pub dist: Vec<f64>,
}

fn join(values: impl Iterator<Item = String>) -> String {
    let v: Vec<String> = values.collect();
    if v.is_empty() {
        "-".to_string()
    } else {
        v.join(",")
    }
}

impl RoundReport {
    /// One `key=value` line, fields separated by single spaces.
    pub fn to_line(&self) -> String {
        let iou = join(
            self.iou
                .iter()
                .map(|v| v.map_or("-".to_string(), |x| x.to_string())),
        );
        let dist = join(self.dist.iter().map(f64::to_string));
        format!(
            "round={} strategy={} seed={} labeled_points={} labeled_pct={} miou={} iou={} new_points={} dist={}",
            self.round,
            self.strategy,
            self.seed,
            self.labeled_points,
            self.labeled_pct,
            self.miou,
            iou,
            self.new_points,
            dist
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::format(format!("report token {tok:?} is not key=value")))?;
            if fields.insert(k, v).is_some() {
                return Err(Error::format(format!("report key {k} repeated")));
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::format(format!("report line lacks {k}")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::format(format!("report field {k}={v:?} is not a number")))
        }
        let list = |k: &str| -> Result<Vec<Option<f64>>> {
            let v = get(k)?;
            if v == "-" {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|x| {
                    if x == "-" {
                        Ok(None)
                    } else {
                        num(k, x).map(Some)
                    }
                })
                .collect()
        };
        if fields.len() != 9 {
            return Err(Error::format(format!(
                "report line has {} keys, expected 9",
                fields.len()
            )));
        }
        let dist = list("dist")?
            .into_iter()
            .map(|v| v.ok_or_else(|| Error::format("dist entries cannot be missing")))
            .collect::<Result<_>>()?;
        Ok(Self {
            round: num("round", get("round")?)?,
            strategy: get("strategy")?.to_string(),
            seed: num("seed", get("seed")?)?,
            labeled_points: num("labeled_points", get("labeled_points")?)?,
            labeled_pct: num("labeled_pct", get("labeled_pct")?)?,
            miou: num("miou", get("miou")?)?,
            iou: list("iou")?,
            new_points: num("new_points", get("new_points")?)?,
            dist,
        })
    }
}

/// One line per report, newline terminated.
pub fn write_reports(reports: &[RoundReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let _ = writeln!(out, "{}", r.to_line());
    }
    out
}

/// Parses `write_reports` output; blank lines and `#` comments are skipped.
pub fn parse_reports(text: &str) -> Result<Vec<RoundReport>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(RoundReport::parse_line)
        .collect()
}
