//! Recursive sub-period fits for parameter-stability analysis.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, FitOptions};
use crate::error::{Error, Result};
use crate::models::{DataBundle, ModelSpec, ParamSet};

/// Half-width multiplier of the reported confidence bands.
pub const CI_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Fixed first year, growing last year.
    ExpandingEnd,
    /// Fixed last year, receding first year.
    ExpandingStart,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expanding_end" => Ok(Direction::ExpandingEnd),
            "expanding_start" => Ok(Direction::ExpandingStart),
            other => Err(Error::Config(format!("unknown stability direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMode {
    /// Sequential; each period starts from its neighbor's estimate.
    #[default]
    WarmStart,
    /// Periods fitted in parallel from independent moment-based starts.
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCell {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl StabilityCell {
    fn new(name: &str, estimate: f64, se: Option<f64>) -> Self {
        Self {
            name: name.to_string(),
            estimate,
            se,
            ci_low: se.map(|s| estimate - CI_Z * s),
            ci_high: se.map(|s| estimate + CI_Z * s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    /// Last year of the period for `expanding_end`, first year for `expanding_start`.
    pub period_bound_year: i32,
    pub n_points: usize,
    pub converged: bool,
    /// Why the period could not be fitted, if it could not.
    pub error: Option<String>,
    pub cells: Vec<StabilityCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityTable {
    pub spec: ModelSpec,
    pub direction: Direction,
    pub mode: StabilityMode,
    pub min_obs: usize,
    pub parameters: Vec<String>,
    pub rows: Vec<StabilityRow>,
}

impl StabilityTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("period_bound_year");
        for p in &self.parameters {
            write!(out, ",{p}_estimate,{p}_se,{p}_ci_low,{p}_ci_high").unwrap();
        }
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for row in &self.rows {
            write!(out, "{}", row.period_bound_year).unwrap();
            for p in &self.parameters {
                match row.cells.iter().find(|c| &c.name == p) {
                    Some(c) => write!(
                        out,
                        ",{},{},{},{}",
                        c.estimate,
                        opt(c.se),
                        opt(c.ci_low),
                        opt(c.ci_high)
                    )
                    .unwrap(),
                    None => out.push_str(",,,,"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn fit_row(
    spec: &ModelSpec,
    data: &DataBundle,
    bound: i32,
    window: (i32, i32),
    options: &FitOptions,
) -> (StabilityRow, Option<ParamSet>) {
    let series = spec.series();
    let sub = data.with_target_window(series, window.0, window.1);
    let n_points = sub.target(series).map_or(0, |t| t.len());
    match fit(spec, &sub, options) {
        Ok(r) => {
            let cells = r
                .params
                .params
                .iter()
                .map(|p| StabilityCell::new(&p.name, p.value, p.std_error))
                .collect();
            (
                StabilityRow {
                    period_bound_year: bound,
                    n_points,
                    converged: r.converged,
                    error: None,
                    cells,
                },
                Some(r.params),
            )
        }
        Err(e) => {
            log::warn!("{series}: period bound {bound}: {e}");
            (
                StabilityRow {
                    period_bound_year: bound,
                    n_points,
                    converged: false,
                    error: Some(e.to_string()),
                    cells: Vec::new(),
                },
                None,
            )
        }
    }
}

/// Refits `spec` on nested sub-periods of its target series. `min_obs`
/// counts points of the modelled series in each period.
pub fn recursive_fit(
    spec: &ModelSpec,
    data: &DataBundle,
    direction: Direction,
    min_obs: usize,
    options: &FitOptions,
    mode: StabilityMode,
) -> Result<StabilityTable> {
    let series = spec.series();
    let needed = spec.free_parameters().len() + 2;
    if min_obs < needed {
        return Err(Error::InsufficientData(format!(
            "min_obs {min_obs} is below {needed} for {series}"
        )));
    }
    let target = data.target(series).ok_or_else(|| {
        Error::InsufficientData(format!("no {series} series to analyze"))
    })?;
    if min_obs > target.len() {
        return Err(Error::TooShort {
            needed: min_obs,
            got: target.len(),
        });
    }
    let (first, last) = (target.start_year, target.end_year());
    let span = min_obs as i32 - 1;
    // (period bound, window) in table order
    let periods: Vec<(i32, (i32, i32))> = match direction {
        Direction::ExpandingEnd => (first + span..=last).map(|end| (end, (first, end))).collect(),
        Direction::ExpandingStart => (first..=last - span)
            .rev()
            .map(|start| (start, (start, last)))
            .collect(),
    };

    let rows = match mode {
        StabilityMode::Parallel => periods
            .par_iter()
            .map(|&(bound, window)| fit_row(spec, data, bound, window, options).0)
            .collect(),
        StabilityMode::WarmStart => {
            let mut rows = Vec::with_capacity(periods.len());
            let mut previous: Option<ParamSet> = None;
            for &(bound, window) in &periods {
                let opts = match &previous {
                    Some(p) => FitOptions {
                        starts: vec![p.clone()],
                        multistart: 1,
                        ..options.clone()
                    },
                    None => options.clone(),
                };
                let (row, params) = fit_row(spec, data, bound, window, &opts);
                if params.is_some() {
                    previous = params;
                }
                rows.push(row);
            }
            rows
        }
    };

    Ok(StabilityTable {
        spec: spec.clone(),
        direction,
        mode,
        min_obs,
        parameters: spec.parameters().iter().map(|s| s.to_string()).collect(),
        rows,
    })
}
