//! Per-year forecast quantiles across simulated paths.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ScenarioSet, SERIES_NAMES};
use crate::error::{Error, Result};

/// 0.5%, 2.5%, 50%, 97.5% and 99.5%.
pub const QUANTILE_LEVELS: [f64; 5] = [0.005, 0.025, 0.5, 0.975, 0.995];

/// Fewest paths for which the 0.5% and 99.5% tails are reported.
pub const MIN_FAN_PATHS: usize = 1000;

/// Quantile of sorted data with linear interpolation at rank `p * (n + 1)`,
/// clamped to the extreme order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = p * (n as f64 + 1.0);
    if rank <= 1.0 {
        return sorted[0];
    }
    if rank >= n as f64 {
        return sorted[n - 1];
    }
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    let (a, b) = (sorted[lo - 1], sorted[lo]);
    if frac == 0.0 || a == b {
        a
    } else {
        a + frac * (b - a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanRow {
    pub year: i32,
    pub series: String,
    pub q005: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub q995: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FanTable {
    pub rows: Vec<FanRow>,
}

impl FanTable {
    pub fn row(&self, series: &str, year: i32) -> Option<&FanRow> {
        self.rows.iter().find(|r| r.series == series && r.year == year)
    }

    pub fn series(&self, series: &str) -> impl Iterator<Item = &FanRow> {
        let series = series.to_string();
        self.rows.iter().filter(move |r| r.series == series)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("year,series,q005,q025,q50,q975,q995,mean\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.year, r.series, r.q005, r.q025, r.q50, r.q975, r.q995, r.mean
            )
            .unwrap();
        }
        out
    }
}

/// Fan of every series in the scenario set, ordered by series then year.
pub fn fan(scenarios: &ScenarioSet) -> Result<FanTable> {
    if scenarios.n_paths < MIN_FAN_PATHS {
        return Err(Error::TooFewPaths {
            needed: MIN_FAN_PATHS,
            got: scenarios.n_paths,
        });
    }
    let mut rows = Vec::new();
    for name in SERIES_NAMES {
        if scenarios.get(name).is_none() {
            continue;
        }
        for t in 0..scenarios.horizon {
            let mut x = scenarios.cross_section(name, t).unwrap();
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            x.sort_by(f64::total_cmp);
            let q: Vec<f64> = QUANTILE_LEVELS.iter().map(|&p| quantile(&x, p)).collect();
            rows.push(FanRow {
                year: scenarios.start_year + t as i32,
                series: name.to_string(),
                q005: q[0],
                q025: q[1],
                q50: q[2],
                q975: q[3],
                q995: q[4],
                mean,
            });
        }
    }
    Ok(FanTable { rows })
}
