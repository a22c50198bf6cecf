//! Run configuration: one TOML file drives every command.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use saesg::data::{self, ColumnMap, Unit};
use saesg::estimation::{Direction, StabilityMode};
use saesg::models::MaInit;
use saesg::simulation::StartMode;
use saesg::{AnnualSeries, DataBundle, FitOptions, ModelSpec, OptimizerConfig, Series};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Relative to the config file.
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    /// Keyed by series name, e.g. `[models.long_rate]`.
    #[serde(default)]
    pub models: BTreeMap<String, ModelConfig>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub stability: StabilitySection,
    #[serde(default)]
    pub backtest: BacktestSection,
}

/// Raw input files. Rates may be given in percent or decimal; levels must be
/// `index_level`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub cpi: Option<SeriesFile>,
    pub dividend_yield: Option<SeriesFile>,
    /// Used with `dividend_yield` to derive dividends when `dividends` is absent.
    pub share_price: Option<SeriesFile>,
    pub dividends: Option<SeriesFile>,
    pub long_rate: Option<SeriesFile>,
    pub short_rate: Option<SeriesFile>,
    /// Money-market index; alternative to `short_rate`.
    pub short_rate_index: Option<SeriesFile>,
    /// Real yields, one series or one per bond via `series_column`.
    pub ilb: Option<SeriesFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesFile {
    pub path: PathBuf,
    pub unit: Unit,
    pub year_column: Option<String>,
    pub value_column: Option<String>,
    pub series_column: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: String,
    /// Parameters held at the given values instead of estimated.
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
    /// Starting value of the moving-average state; defaults to the first
    /// observed force of inflation.
    pub ma_init: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub multistart: usize,
    pub standard_errors: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            multistart: 5,
            standard_errors: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioFormat {
    None,
    Csv,
    #[default]
    Binary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub n_paths: usize,
    pub horizon: usize,
    pub start: StartMode,
    /// Defaults to the year after the last fitted observation.
    pub start_year: Option<i32>,
    pub base_cpi: f64,
    pub base_price: f64,
    pub scenarios: ScenarioFormat,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            horizon: 10,
            start: StartMode::FromFit,
            start_year: None,
            base_cpi: 100.0,
            base_price: 100.0,
            scenarios: ScenarioFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub series: Option<String>,
    pub direction: Option<Direction>,
    pub min_obs: Option<usize>,
    pub mode: StabilityMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    pub split_year: Option<i32>,
    pub horizon: usize,
    pub n_paths: usize,
    pub include_ilb: bool,
}

impl Default for BacktestSection {
    fn default() -> Self {
        Self {
            split_year: None,
            horizon: 10,
            n_paths: 100_000,
            include_ilb: false,
        }
    }
}

/// A parsed config together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    /// Raw bytes, hashed into the manifest.
    pub bytes: Vec<u8>,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let config: RunConfig =
        toml::from_str(text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let loaded = Loaded {
        config,
        base_dir,
        bytes,
    };
    loaded.validate()?;
    Ok(loaded)
}

fn field_error(field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {e}"))
}

impl Loaded {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn files(&self) -> Vec<(&'static str, &SeriesFile)> {
        let d = &self.config.data;
        [
            ("data.cpi", &d.cpi),
            ("data.dividend_yield", &d.dividend_yield),
            ("data.share_price", &d.share_price),
            ("data.dividends", &d.dividends),
            ("data.long_rate", &d.long_rate),
            ("data.short_rate", &d.short_rate),
            ("data.short_rate_index", &d.short_rate_index),
            ("data.ilb", &d.ilb),
        ]
        .into_iter()
        .filter_map(|(k, f)| f.as_ref().map(|f| (k, f)))
        .collect()
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<(), CliError> {
        for (field, file) in self.files() {
            let path = self.resolve(&file.path);
            if !path.is_file() {
                return Err(field_error(field, format!("file {} does not exist", path.display())));
            }
            let is_level = matches!(
                field,
                "data.cpi" | "data.share_price" | "data.dividends" | "data.short_rate_index"
            );
            let unit_ok = if is_level {
                file.unit == Unit::IndexLevel
            } else {
                matches!(file.unit, Unit::RateDecimal | Unit::RatePercent)
            };
            if !unit_ok {
                let expected = if is_level { "index_level" } else { "rate_decimal or rate_percent" };
                return Err(field_error(field, format!("unit must be {expected}, got {}", file.unit)));
            }
        }
        let d = &self.config.data;
        if d.short_rate.is_some() && d.short_rate_index.is_some() {
            return Err(field_error("data", "give either short_rate or short_rate_index, not both"));
        }
        let specs = self.specs()?;
        let has = |s: Series| specs.iter().any(|spec| spec.series() == s);
        if has(Series::Dividend) && !has(Series::DividendYield) {
            return Err(field_error(
                "models.dividend",
                "depends on the dividend_yield model, whose residuals drive dividend growth in the cascade",
            ));
        }
        self.config
            .optimizer
            .validate()
            .map_err(|e| field_error("optimizer", e))?;
        Ok(())
    }

    /// Model specs in cascade order.
    pub fn specs(&self) -> Result<Vec<ModelSpec>, CliError> {
        let mut specs = Vec::new();
        for (key, m) in &self.config.models {
            let field = format!("models.{key}");
            let series: Series = key.parse().map_err(|e| field_error(&field, e))?;
            let mut spec = ModelSpec::parse(series, &m.variant).map_err(|e| field_error(&field, e))?;
            for (name, value) in &m.fixed {
                spec = spec
                    .with_fixed(name, *value)
                    .map_err(|e| field_error(&format!("{field}.fixed"), e))?;
            }
            if let Some(v) = m.ma_init {
                spec = spec.with_ma_init(MaInit::Fixed(v));
            }
            specs.push(spec);
        }
        specs.sort_by_key(|s| s.series());
        Ok(specs)
    }

    pub fn fit_options(&self, seed: u64) -> FitOptions {
        FitOptions {
            optimizer: self.config.optimizer.clone(),
            multistart: self.config.fit.multistart,
            seed,
            standard_errors: self.config.fit.standard_errors,
            ..FitOptions::default()
        }
    }

    /// Unit of the dividend-yield series, which fixes the scale the yield
    /// model works on.
    pub fn yield_unit(&self) -> Unit {
        self.config
            .data
            .dividend_yield
            .as_ref()
            .map_or(Unit::RateDecimal, |f| f.unit)
    }

    fn read(&self, field: &str, file: &SeriesFile) -> Result<AnnualSeries, CliError> {
        let defaults = ColumnMap::default();
        let columns = ColumnMap {
            year: file.year_column.clone().unwrap_or(defaults.year),
            value: file.value_column.clone().unwrap_or(defaults.value),
            series: None,
        };
        data::load_series(&self.resolve(&file.path), &columns, file.unit).map_err(|e| field_error(field, e))
    }

    /// Reads the configured files and derives the modelled series.
    pub fn data_bundle(&self) -> Result<DataBundle, CliError> {
        let d = &self.config.data;
        let mut bundle = DataBundle::default();
        let derived = |field: &str, r: saesg::Result<AnnualSeries>| r.map_err(|e| field_error(field, e));

        if let Some(f) = &d.cpi {
            bundle.inflation = Some(derived("data.cpi", data::force_of_inflation(&self.read("data.cpi", f)?))?);
        }
        let yields = d
            .dividend_yield
            .as_ref()
            .map(|f| self.read("data.dividend_yield", f))
            .transpose()?;
        if let Some(f) = &d.dividends {
            let dividends = self.read("data.dividends", f)?;
            bundle.dividend_growth = Some(derived("data.dividends", data::log_growth(&dividends))?);
        } else if let (Some(f), Some(y)) = (&d.share_price, &yields) {
            let prices = self.read("data.share_price", f)?;
            let (prices, y) = data::overlap(&prices, y).map_err(|e| field_error("data.share_price", e))?;
            let dividends = derived("data.share_price", data::derive_dividends(&prices, &y))?;
            bundle.dividend_growth = Some(derived("data.share_price", data::log_growth(&dividends))?);
        }
        bundle.dividend_yield = yields;
        if let Some(f) = &d.long_rate {
            bundle.long_rate = Some(self.read("data.long_rate", f)?.to_decimal());
        }
        if let Some(f) = &d.short_rate {
            bundle.short_rate = Some(self.read("data.short_rate", f)?.to_decimal());
        }
        if let Some(f) = &d.short_rate_index {
            let index = self.read("data.short_rate_index", f)?;
            bundle.short_rate = Some(derived("data.short_rate_index", data::short_rate_from_index(&index))?);
        }
        bundle.derive_spread().map_err(|e| field_error("data.long_rate/short_rate", e))?;
        if let Some(f) = &d.ilb {
            let path = self.resolve(&f.path);
            let rate = match &f.series_column {
                Some(col) => {
                    let defaults = ColumnMap::default();
                    let columns = ColumnMap {
                        year: f.year_column.clone().unwrap_or(defaults.year),
                        value: f.value_column.clone().unwrap_or(defaults.value),
                        series: Some(col.clone()),
                    };
                    let groups = data::load_series_group(&path, &columns, f.unit)
                        .map_err(|e| field_error("data.ilb", e))?;
                    derived("data.ilb", data::average_ilb_yield(&groups.into_values().collect::<Vec<_>>()))?
                }
                None => self.read("data.ilb", f)?.to_decimal(),
            };
            bundle.ilb_rate = Some(rate);
        }
        self.align_to_inflation(&mut bundle)?;
        Ok(bundle)
    }

    /// Models that read the same year's inflation are fitted on the years
    /// inflation covers; a CPI file starting with the other files otherwise
    /// leaves them one year short.
    fn align_to_inflation(&self, bundle: &mut DataBundle) -> Result<(), CliError> {
        let Some(q) = bundle.inflation.clone() else {
            return Ok(());
        };
        for spec in self.specs()? {
            if !spec.variant.uses_inflation() {
                continue;
            }
            let series = spec.series();
            if let Some(target) = bundle.target_mut(series) {
                let from = target.start_year.max(q.start_year);
                let to = target.end_year().min(q.end_year());
                if (from, to) != (target.start_year, target.end_year()) {
                    log::info!("{series}: using {from}..{to}, the years inflation covers");
                    *target = target.window(from, to);
                }
            }
        }
        Ok(())
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        match (flag, &self.config.output_dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => self.resolve(p),
            (None, None) => self.resolve(Path::new("out")),
        }
    }

    pub fn stability_direction(&self) -> Direction {
        self.config.stability.direction.unwrap_or(Direction::ExpandingEnd)
    }
}
