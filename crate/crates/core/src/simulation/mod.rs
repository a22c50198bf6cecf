//! Monte Carlo projection of the calibrated cascade.
//!
//! Each simulated year steps the sub-models in cascade order (inflation,
//! dividend yield, dividends, long rate, short rate, real yield). Every step
//! reads the state at the start of the year, so the dividend model sees last
//! year's yield residual even though the yield model has already moved.

mod backtest;
mod export;
mod fan;
mod stream;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Unit;
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::models::{
    CascadeState, DividendModel, DividendYieldModel, IlbModel, InflationModel,
    LongRateModel, Model, ModelParams, Series, ShortRateModel,
};

pub use backtest::{backtest, BacktestCell, BacktestConfig, BacktestReport, Coverage};
pub use export::{read_binary, write_binary, write_csv, MAGIC};
pub use fan::{fan, quantile, FanRow, FanTable, MIN_FAN_PATHS, QUANTILE_LEVELS};
pub use stream::NormalStream;

/// Output series, in storage order.
pub const SERIES_NAMES: [&str; 10] = [
    "inflation",
    "cpi_index",
    "dividend_yield",
    "dividend_growth",
    "dividend_index",
    "share_price_index",
    "long_rate",
    "short_rate",
    "log_spread",
    "ilb_rate",
];

/// The sub-models taking part in a simulation. Inflation is mandatory;
/// the others are present when calibrated.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModels {
    pub inflation: InflationModel,
    pub dividend_yield: Option<DividendYieldModel>,
    pub dividend: Option<DividendModel>,
    pub long_rate: Option<LongRateModel>,
    pub short_rate: Option<ShortRateModel>,
    pub ilb: Option<IlbModel>,
    pub params: Vec<ModelParams>,
}

fn dependency(missing: Series, needed_by: Series) -> Error {
    Error::MissingDependency { missing, needed_by }
}

impl CascadeModels {
    pub fn from_params(sets: &[ModelParams]) -> Result<Self> {
        let mut by_series: BTreeMap<usize, (Model, ModelParams)> = BTreeMap::new();
        for set in sets {
            let model = set.model()?;
            let series = model.series();
            if by_series.insert(series.index(), (model, set.clone())).is_some() {
                return Err(Error::Config(format!("two parameter sets for {series}")));
            }
        }
        let mut inflation = None;
        let mut out = CascadeModels {
            inflation: InflationModel {
                mu: 0.0,
                a: 0.0,
                sigma: 0.0,
            },
            dividend_yield: None,
            dividend: None,
            long_rate: None,
            short_rate: None,
            ilb: None,
            params: Vec::new(),
        };
        for (_, (model, set)) in by_series {
            match model {
                Model::Inflation(m) => inflation = Some(m),
                Model::DividendYield(m) => out.dividend_yield = Some(m),
                Model::Dividend(m) => out.dividend = Some(m),
                Model::LongRate(m) => out.long_rate = Some(m),
                Model::ShortRate(m) => out.short_rate = Some(m),
                Model::Ilb(m) => out.ilb = Some(m),
            }
            out.params.push(set);
        }
        let first = out.params.first().map(|p| p.spec.series());
        out.inflation = inflation.ok_or_else(|| match first {
            Some(s) => dependency(Series::Inflation, s),
            None => Error::MissingFit(Series::Inflation),
        })?;
        if out.dividend.is_some() && out.dividend_yield.is_none() {
            return Err(dependency(Series::DividendYield, Series::Dividend));
        }
        if out.short_rate.is_some() && out.long_rate.is_none() {
            return Err(dependency(Series::LongRate, Series::ShortRate));
        }
        if let Some(ilb) = &out.ilb {
            if ilb.uses_long() && out.long_rate.is_none() {
                return Err(dependency(Series::LongRate, Series::Ilb));
            }
            if ilb.uses_short() && out.short_rate.is_none() {
                return Err(dependency(Series::ShortRate, Series::Ilb));
            }
        }
        Ok(out)
    }

    pub fn from_fits(fits: &[FitResult]) -> Result<Self> {
        let sets: Vec<ModelParams> = fits
            .iter()
            .map(|f| ModelParams {
                spec: f.spec.clone(),
                params: f.params.clone(),
            })
            .collect();
        Self::from_params(&sets)
    }

    pub fn has(&self, series: Series) -> bool {
        match series {
            Series::Inflation => true,
            Series::DividendYield => self.dividend_yield.is_some(),
            Series::Dividend => self.dividend.is_some(),
            Series::LongRate => self.long_rate.is_some(),
            Series::ShortRate => self.short_rate.is_some(),
            Series::Ilb => self.ilb.is_some(),
        }
    }

    /// Noise-free steady state: latent deviations at zero, inflation at its
    /// mean, and every level at the value a constant-inflation path keeps.
    pub fn neutral_state(&self) -> CascadeState {
        let mu_q = self.inflation.mu;
        let long = self.long_rate.map(|m| {
            let w = m.inflation.map_or(0.0, |mix| mix.w);
            w * mu_q + m.ln_mu.exp()
        });
        let short = match (long, self.short_rate) {
            (Some(c), Some(s)) => Some(c * (-s.mu).exp()),
            _ => None,
        };
        let delta_r = self.ilb.map_or(0.0, |m| {
            m.mu + (m.c * long.unwrap_or(0.0) + m.b * short.unwrap_or(0.0)) / (1.0 - m.a)
        });
        CascadeState {
            delta_q_prev: mu_q,
            ym_prev: mu_q,
            yn_prev: 0.0,
            eps_y_prev: 0.0,
            dm_prev: mu_q,
            eps_d_prev: 0.0,
            cm_prev: mu_q,
            cn_prev: 0.0,
            bd_prev: self.short_rate.map_or(0.0, |s| s.mu),
            delta_r_prev: delta_r,
        }
    }

    fn initial_yield(&self, state: &CascadeState) -> Option<f64> {
        self.dividend_yield.map(|m| m.level(state))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// Latent states filtered from the observed history.
    #[default]
    FromFit,
    /// See [`CascadeModels::neutral_state`].
    Neutral,
}

fn dependencies(series: Series) -> &'static [Series] {
    match series {
        Series::Inflation => &[],
        Series::DividendYield | Series::LongRate => &[Series::Inflation],
        Series::Dividend => &[Series::Inflation, Series::DividendYield],
        Series::ShortRate => &[Series::Inflation, Series::LongRate],
        Series::Ilb => &[],
    }
}

/// Starting state for a simulation of `requested` series.
pub fn initial_state_from_fits(
    fits: &[FitResult],
    requested: &[Series],
    mode: StartMode,
) -> Result<CascadeState> {
    let find = |s: Series| fits.iter().find(|f| f.spec.series() == s);
    for &series in requested {
        if find(series).is_none() {
            return Err(Error::MissingFit(series));
        }
        for &dep in dependencies(series) {
            if find(dep).is_none() {
                return Err(dependency(dep, series));
            }
        }
    }
    let needed = |s: Series| {
        requested
            .iter()
            .any(|&r| r == s || dependencies(r).contains(&s))
    };
    let used: Vec<FitResult> = fits
        .iter()
        .filter(|f| needed(f.spec.series()))
        .cloned()
        .collect();
    match mode {
        StartMode::Neutral => Ok(CascadeModels::from_fits(&used)?.neutral_state()),
        StartMode::FromFit => {
            if let Some(first) = used.first() {
                if let Some(other) = used.iter().find(|f| f.last_year != first.last_year) {
                    return Err(Error::MisalignedFits(format!(
                        "{} ends in {}, {} ends in {}",
                        first.spec.series(),
                        first.last_year,
                        other.spec.series(),
                        other.last_year
                    )));
                }
            }
            let mut state = CascadeState::default();
            for f in &used {
                state.absorb(f.spec.series(), &f.final_state);
            }
            Ok(state)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub horizon: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Calendar year of the first simulated value.
    pub start_year: i32,
    pub base_cpi: f64,
    pub base_price: f64,
    /// Scale on which the dividend-yield model works; percent yields are
    /// divided by 100 before prices are derived.
    pub yield_unit: Unit,
    pub parallel: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            n_paths: 1000,
            seed: 0,
            start_year: 1,
            base_cpi: 100.0,
            base_price: 100.0,
            yield_unit: Unit::RateDecimal,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub seed: u64,
    pub n_paths: usize,
    pub horizon: usize,
    pub start_year: i32,
    /// Path-major arrays of `n_paths * horizon` values keyed by series name.
    pub series: BTreeMap<String, Vec<f64>>,
    pub initial_state: CascadeState,
    pub params: Vec<ModelParams>,
}

impl ScenarioSet {
    pub fn get(&self, series: &str) -> Option<&[f64]> {
        self.series.get(series).map(|v| v.as_slice())
    }

    pub fn path(&self, series: &str, path: usize) -> Option<&[f64]> {
        self.get(series)
            .map(|v| &v[path * self.horizon..(path + 1) * self.horizon])
    }

    pub fn value(&self, series: &str, path: usize, year_index: usize) -> Option<f64> {
        self.get(series).map(|v| v[path * self.horizon + year_index])
    }

    /// Values of one series across paths in a given horizon year.
    pub fn cross_section(&self, series: &str, year_index: usize) -> Option<Vec<f64>> {
        self.get(series).map(|v| {
            (0..self.n_paths)
                .map(|p| v[p * self.horizon + year_index])
                .collect()
        })
    }
}

fn present(models: &CascadeModels) -> [bool; 10] {
    let y = models.dividend_yield.is_some();
    let d = models.dividend.is_some();
    let c = models.long_rate.is_some();
    let b = models.short_rate.is_some();
    [
        true,
        true,
        y,
        d,
        d,
        d,
        c,
        b,
        b,
        models.ilb.is_some(),
    ]
}

/// Values produced by one cascade year; series without a model are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YearStep {
    pub inflation: f64,
    pub dividend_yield: f64,
    pub dividend_growth: f64,
    pub long_rate: f64,
    pub short_rate: f64,
    pub log_spread: f64,
    pub ilb_rate: f64,
}

impl CascadeModels {
    /// Advances every sub-model by one year. `z` supplies the unit normal
    /// shock of each series; each model reads the year-start state.
    pub fn step_year(&self, state: &CascadeState, z: impl Fn(Series) -> f64) -> (YearStep, CascadeState) {
        let start = *state;
        let mut next = start;
        let mut out = YearStep {
            inflation: f64::NAN,
            dividend_yield: f64::NAN,
            dividend_growth: f64::NAN,
            long_rate: f64::NAN,
            short_rate: f64::NAN,
            log_spread: f64::NAN,
            ilb_rate: f64::NAN,
        };

        let (dq, s) = self.inflation.step(&start, z(Series::Inflation));
        next.absorb(Series::Inflation, &s);
        out.inflation = dq;
        if let Some(m) = &self.dividend_yield {
            let (y, s) = m.step(&start, dq, z(Series::DividendYield));
            next.absorb(Series::DividendYield, &s);
            out.dividend_yield = y;
        }
        if let Some(m) = &self.dividend {
            let (dd, s) = m.step(&start, dq, z(Series::Dividend));
            next.absorb(Series::Dividend, &s);
            out.dividend_growth = dd;
        }
        let (mut dc, mut db) = (0.0, 0.0);
        if let Some(m) = &self.long_rate {
            let (rate, s) = m.step(&start, dq, z(Series::LongRate));
            next.absorb(Series::LongRate, &s);
            dc = rate;
            out.long_rate = rate;
        }
        if let Some(m) = &self.short_rate {
            let (rate, s) = m.step(&start, dc, z(Series::ShortRate));
            next.absorb(Series::ShortRate, &s);
            db = rate;
            out.short_rate = rate;
            out.log_spread = s.bd_prev;
        }
        if let Some(m) = &self.ilb {
            let (dr, s) = m.step(&start, dc, db, z(Series::Ilb));
            next.absorb(Series::Ilb, &s);
            out.ilb_rate = dr;
        }
        (out, next)
    }
}

/// One path as `horizon` rows of all output columns.
fn simulate_path(
    models: &CascadeModels,
    initial: &CascadeState,
    config: &SimulationConfig,
    path: usize,
) -> Result<Vec<[f64; 10]>> {
    let stream = NormalStream::new(config.seed, path as u64);
    let yield_scale = if config.yield_unit == Unit::RatePercent { 0.01 } else { 1.0 };
    let mask = present(models);
    let mut state = *initial;
    let mut cpi = config.base_cpi;
    let mut dividend = models
        .initial_yield(initial)
        .map_or(f64::NAN, |y| config.base_price * y * yield_scale);
    let mut rows = Vec::with_capacity(config.horizon);
    for t in 0..config.horizon {
        let (v, next) = models.step_year(&state, |s| stream.variate(s.index(), t as u64));
        cpi *= v.inflation.exp();
        dividend *= v.dividend_growth.exp();
        let row = [
            v.inflation,
            cpi,
            v.dividend_yield,
            v.dividend_growth,
            dividend,
            dividend / (v.dividend_yield * yield_scale),
            v.long_rate,
            v.short_rate,
            v.log_spread,
            v.ilb_rate,
        ];
        if let Some(i) = (0..10).find(|&i| mask[i] && !row[i].is_finite()) {
            return Err(Error::NonFinite {
                context: format!(
                    "simulated {} on path {path}, year {}",
                    SERIES_NAMES[i],
                    config.start_year + t as i32
                ),
            });
        }
        state = next;
        rows.push(row);
    }
    Ok(rows)
}

/// Simulates `config.n_paths` paths from `initial`. Parallel and sequential
/// execution give bitwise-identical output.
pub fn simulate(
    models: &CascadeModels,
    initial: &CascadeState,
    config: &SimulationConfig,
) -> Result<ScenarioSet> {
    if config.horizon == 0 || config.n_paths == 0 {
        return Err(Error::Config("horizon and n_paths must be at least 1".into()));
    }
    if !initial.is_finite() {
        return Err(Error::NonFinite {
            context: "initial cascade state".into(),
        });
    }
    let paths: Vec<Result<Vec<[f64; 10]>>> = if config.parallel {
        (0..config.n_paths)
            .into_par_iter()
            .map(|p| simulate_path(models, initial, config, p))
            .collect()
    } else {
        (0..config.n_paths)
            .map(|p| simulate_path(models, initial, config, p))
            .collect()
    };
    let mask = present(models);
    let mut columns: Vec<Vec<f64>> = (0..10)
        .map(|i| {
            if mask[i] {
                Vec::with_capacity(config.n_paths * config.horizon)
            } else {
                Vec::new()
            }
        })
        .collect();
    for path in paths {
        for row in path? {
            for (i, col) in columns.iter_mut().enumerate() {
                if mask[i] {
                    col.push(row[i]);
                }
            }
        }
    }
    let series = columns
        .into_iter()
        .enumerate()
        .filter(|(i, _)| mask[*i])
        .map(|(i, col)| (SERIES_NAMES[i].to_string(), col))
        .collect();
    Ok(ScenarioSet {
        seed: config.seed,
        n_paths: config.n_paths,
        horizon: config.horizon,
        start_year: config.start_year,
        series,
        initial_state: *initial,
        params: models.params.clone(),
    })
}
