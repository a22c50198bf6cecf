//! Out-of-sample check: refit on a truncated history, project, and compare
//! the held-out observations with the forecast fan.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{fan, initial_state_from_fits, simulate, CascadeModels, FanTable, SimulationConfig, StartMode};
use crate::data::{AnnualSeries, Unit};
use crate::error::{Error, Result};
use crate::estimation::{fit_cascade, FitOptions, FitResult};
use crate::models::{DataBundle, ModelParams, ModelSpec, Series};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    /// Last year used for fitting.
    pub split_year: i32,
    pub horizon: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Real yields are left out unless asked for; their history is short.
    pub include_ilb: bool,
    pub fit: FitOptions,
    pub yield_unit: Unit,
    /// Values replacing fitted parameters before projecting.
    pub overrides: BTreeMap<Series, BTreeMap<String, f64>>,
    pub parallel: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            split_year: 2008,
            horizon: 10,
            n_paths: 100_000,
            seed: 0,
            include_ilb: false,
            fit: FitOptions::default(),
            yield_unit: Unit::RateDecimal,
            overrides: BTreeMap::new(),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestCell {
    pub series: String,
    pub year: i32,
    pub observed: f64,
    pub q005: f64,
    pub q025: f64,
    pub q975: f64,
    pub q995: f64,
    pub inside_95: bool,
    pub inside_99: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub series: String,
    pub n: usize,
    pub inside_95: f64,
    pub inside_99: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub split_year: i32,
    pub horizon: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub cells: Vec<BacktestCell>,
    pub coverage: Vec<Coverage>,
    /// Parameters of the truncated fits after any overrides.
    pub params: Vec<ModelParams>,
    pub log_likelihoods: BTreeMap<String, f64>,
    pub fan: FanTable,
}

impl BacktestReport {
    pub fn coverage_of(&self, series: &str) -> Option<&Coverage> {
        self.coverage.iter().find(|c| c.series == series)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("series,year,observed,q005,q025,q975,q995,inside_95,inside_99\n");
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                c.series, c.year, c.observed, c.q005, c.q025, c.q975, c.q995, c.inside_95, c.inside_99
            )
            .unwrap();
        }
        out
    }
}

/// Observed series matched against each simulated output.
fn observed(data: &DataBundle) -> Vec<(&'static str, Option<&AnnualSeries>)> {
    vec![
        ("inflation", data.inflation.as_ref()),
        ("dividend_yield", data.dividend_yield.as_ref()),
        ("dividend_growth", data.dividend_growth.as_ref()),
        ("long_rate", data.long_rate.as_ref()),
        ("short_rate", data.short_rate.as_ref()),
        ("log_spread", data.log_spread.as_ref()),
        ("ilb_rate", data.ilb_rate.as_ref()),
    ]
}

pub fn backtest(specs: &[ModelSpec], data: &DataBundle, config: &BacktestConfig) -> Result<BacktestReport> {
    let specs: Vec<ModelSpec> = specs
        .iter()
        .filter(|s| config.include_ilb || s.series() != Series::Ilb)
        .cloned()
        .collect();
    let split = config.split_year;
    let has_holdout = specs.iter().any(|s| {
        data.target(s.series())
            .is_some_and(|t| t.end_year() > split)
    });
    if !has_holdout {
        return Err(Error::InsufficientData(format!(
            "no observations after the split year {split}"
        )));
    }

    let truncated = data.truncated(split);
    let mut fits: Vec<FitResult> = Vec::new();
    for (series, result) in fit_cascade(&specs, &truncated, &config.fit) {
        let fit = result.map_err(|e| {
            log::error!("backtest fit of {series} failed: {e}");
            e
        })?;
        fits.push(fit);
    }
    for fit in &mut fits {
        if let Some(over) = config.overrides.get(&fit.spec.series()) {
            for (name, value) in over {
                if fit.params.get(name).is_none() {
                    return Err(Error::UnknownParameter {
                        series: fit.spec.series(),
                        name: name.clone(),
                    });
                }
                fit.params.set(name, *value);
            }
        }
    }
    let requested: Vec<Series> = fits.iter().map(|f| f.spec.series()).collect();
    let state = initial_state_from_fits(&fits, &requested, StartMode::FromFit)?;
    let models = CascadeModels::from_fits(&fits)?;
    let sim = SimulationConfig {
        horizon: config.horizon,
        n_paths: config.n_paths,
        seed: config.seed,
        start_year: split + 1,
        yield_unit: config.yield_unit,
        parallel: config.parallel,
        ..SimulationConfig::default()
    };
    let scenarios = simulate(&models, &state, &sim)?;
    let table = fan(&scenarios)?;

    let mut cells = Vec::new();
    let mut coverage = Vec::new();
    for (name, obs) in observed(data) {
        let Some(obs) = obs else { continue };
        if scenarios.get(name).is_none() {
            continue;
        }
        let before = cells.len();
        for row in table.series(name) {
            let Some(value) = obs.get(row.year) else { continue };
            let inside_95 = row.q025 <= value && value <= row.q975;
            let inside_99 = row.q005 <= value && value <= row.q995;
            cells.push(BacktestCell {
                series: name.to_string(),
                year: row.year,
                observed: value,
                q005: row.q005,
                q025: row.q025,
                q975: row.q975,
                q995: row.q995,
                inside_95,
                inside_99,
            });
        }
        let mine = &cells[before..];
        if !mine.is_empty() {
            let n = mine.len();
            coverage.push(Coverage {
                series: name.to_string(),
                n,
                inside_95: mine.iter().filter(|c| c.inside_95).count() as f64 / n as f64,
                inside_99: mine.iter().filter(|c| c.inside_99).count() as f64 / n as f64,
            });
        }
    }

    Ok(BacktestReport {
        split_year: split,
        horizon: config.horizon,
        n_paths: config.n_paths,
        seed: config.seed,
        cells,
        coverage,
        log_likelihoods: fits
            .iter()
            .map(|f| (f.spec.series().to_string(), f.log_likelihood))
            .collect(),
        params: models.params,
        fan: table,
    })
}
