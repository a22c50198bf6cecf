//! Annual series ingestion and the deterministic transforms that turn raw
//! index levels and yields into the modelled series.
//!
//! Row numbers in errors are 1-based file lines, so the header is row 1 and
//! the first data row is row 2.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    IndexLevel,
    RateDecimal,
    RatePercent,
    LogValue,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::IndexLevel => "index_level",
            Unit::RateDecimal => "rate_decimal",
            Unit::RatePercent => "rate_percent",
            Unit::LogValue => "log_value",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "index_level" => Ok(Unit::IndexLevel),
            "rate_decimal" => Ok(Unit::RateDecimal),
            "rate_percent" => Ok(Unit::RatePercent),
            "log_value" => Ok(Unit::LogValue),
            other => Err(Error::Config(format!("unknown unit `{other}`"))),
        }
    }
}

/// One value per consecutive calendar year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualSeries {
    pub start_year: i32,
    pub values: Vec<f64>,
    pub unit: Unit,
}

impl AnnualSeries {
    /// Builds a series, rejecting non-positive index levels.
    pub fn new(start_year: i32, values: Vec<f64>, unit: Unit) -> Result<Self> {
        let series = Self {
            start_year,
            values,
            unit,
        };
        if unit == Unit::IndexLevel {
            series.require_positive()?;
        }
        Ok(series)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Last covered year. Meaningless for an empty series.
    pub fn end_year(&self) -> i32 {
        self.start_year + self.values.len() as i32 - 1
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.values.len()).map(move |i| self.start_year + i as i32)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.years().zip(self.values.iter().copied())
    }

    pub fn get(&self, year: i32) -> Option<f64> {
        if year < self.start_year {
            return None;
        }
        self.values.get((year - self.start_year) as usize).copied()
    }

    pub fn contains(&self, year: i32) -> bool {
        self.get(year).is_some()
    }

    /// Sub-series covering `from..=to`, clipped to the available range.
    pub fn window(&self, from: i32, to: i32) -> AnnualSeries {
        let lo = from.max(self.start_year);
        let hi = to.min(self.end_year());
        let values = if lo > hi {
            Vec::new()
        } else {
            let a = (lo - self.start_year) as usize;
            let b = (hi - self.start_year) as usize;
            self.values[a..=b].to_vec()
        };
        AnnualSeries {
            start_year: lo,
            values,
            unit: self.unit,
        }
    }

    /// Percent rates become decimal rates; every other unit is returned as is.
    pub fn to_decimal(&self) -> AnnualSeries {
        match self.unit {
            Unit::RatePercent => AnnualSeries {
                start_year: self.start_year,
                values: self.values.iter().map(|v| v / 100.0).collect(),
                unit: Unit::RateDecimal,
            },
            _ => self.clone(),
        }
    }

    pub fn map(&self, unit: Unit, f: impl Fn(f64) -> f64) -> AnnualSeries {
        AnnualSeries {
            start_year: self.start_year,
            values: self.values.iter().map(|&v| f(v)).collect(),
            unit,
        }
    }

    fn require_positive(&self) -> Result<()> {
        match self.iter().find(|&(_, v)| !(v > 0.0)) {
            Some((year, value)) => Err(Error::NonPositive { year, value }),
            None => Ok(()),
        }
    }

    fn require_unit(&self, expected: Unit) -> Result<()> {
        if self.unit != expected {
            return Err(Error::Unit {
                expected: expected.to_string(),
                got: self.unit.to_string(),
            });
        }
        Ok(())
    }
}

/// Restricts two series to their common years.
pub fn overlap(a: &AnnualSeries, b: &AnnualSeries) -> Result<(AnnualSeries, AnnualSeries)> {
    let lo = a.start_year.max(b.start_year);
    let hi = a.end_year().min(b.end_year());
    if lo > hi || a.is_empty() || b.is_empty() {
        return Err(Error::Misaligned(format!(
            "{}..{} and {}..{} do not overlap",
            a.start_year,
            a.end_year(),
            b.start_year,
            b.end_year()
        )));
    }
    Ok((a.window(lo, hi), b.window(lo, hi)))
}

fn require_aligned(a: &AnnualSeries, b: &AnnualSeries) -> Result<()> {
    if a.start_year != b.start_year || a.len() != b.len() {
        return Err(Error::Misaligned(format!(
            "{}..{} vs {}..{}",
            a.start_year,
            a.end_year(),
            b.start_year,
            b.end_year()
        )));
    }
    Ok(())
}

/// Names of the CSV columns to read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub year: String,
    pub value: String,
    /// Column naming the sub-series in multi-series files.
    pub series: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            year: "year".into(),
            value: "value".into(),
            series: None,
        }
    }
}

struct Row {
    line: usize,
    year: i32,
    value: f64,
    key: Option<String>,
}

fn read_rows(path: &Path, columns: &ColumnMap) -> Result<Vec<Row>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let index_of = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let year_col = index_of(&columns.year)?;
    let value_col = index_of(&columns.value)?;
    let series_col = columns.series.as_deref().map(index_of).transpose()?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            row: line,
            message: e.to_string(),
        })?;
        let field = |col: usize, name: &str| -> Result<&str> {
            record.get(col).ok_or_else(|| Error::Csv {
                path: path.to_path_buf(),
                row: line,
                message: format!("no `{name}` field"),
            })
        };
        let raw_year = field(year_col, &columns.year)?;
        let year = raw_year.parse::<i32>().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            row: line,
            column: columns.year.clone(),
            value: raw_year.to_string(),
        })?;
        let raw_value = field(value_col, &columns.value)?;
        let value = raw_value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row: line,
                column: columns.value.clone(),
                value: raw_value.to_string(),
            })?;
        let key = match series_col {
            Some(col) => Some(field(col, "series")?.to_string()),
            None => None,
        };
        rows.push(Row {
            line,
            year,
            value,
            key,
        });
    }
    Ok(rows)
}

fn assemble(context: &str, rows: &[&Row], unit: Unit) -> Result<AnnualSeries> {
    let first = rows.first().ok_or(Error::TooShort { needed: 1, got: 0 })?;
    let mut values = Vec::with_capacity(rows.len());
    for (expected, row) in (first.year..).zip(rows) {
        if row.year < first.year {
            return Err(Error::YearOrder {
                context: context.to_string(),
                row: row.line,
                year: row.year,
            });
        }
        if row.year < expected {
            return Err(Error::DuplicateYear {
                context: context.to_string(),
                row: row.line,
                year: row.year,
            });
        }
        if row.year > expected {
            return Err(Error::YearGap {
                context: context.to_string(),
                row: row.line,
                missing: expected,
            });
        }
        values.push(row.value);
    }
    let series = AnnualSeries {
        start_year: first.year,
        values,
        unit,
    };
    if unit == Unit::IndexLevel {
        if let Some(((year, value), row)) = series
            .iter()
            .zip(rows.iter())
            .find(|((_, v), _)| !(*v > 0.0))
        {
            return Err(Error::Parse {
                path: context.into(),
                row: row.line,
                column: "value".into(),
                value: format!("{value} (index level in {year} must be positive)"),
            });
        }
    }
    Ok(series)
}

/// Reads a `year,value` CSV into a contiguous series tagged with `unit`.
pub fn load_series(path: &Path, columns: &ColumnMap, unit: Unit) -> Result<AnnualSeries> {
    let rows = read_rows(path, columns)?;
    let refs: Vec<&Row> = rows.iter().collect();
    assemble(&path.display().to_string(), &refs, unit)
}

/// Reads a multi-series CSV (one sub-series per distinct value of the series
/// column), e.g. real yields by bond maturity.
pub fn load_series_group(
    path: &Path,
    columns: &ColumnMap,
    unit: Unit,
) -> Result<BTreeMap<String, AnnualSeries>> {
    if columns.series.is_none() {
        return Err(Error::Config("multi-series file needs a series column".into()));
    }
    let rows = read_rows(path, columns)?;
    let mut groups: BTreeMap<String, Vec<&Row>> = BTreeMap::new();
    for row in &rows {
        groups
            .entry(row.key.clone().unwrap_or_default())
            .or_default()
            .push(row);
    }
    groups
        .into_iter()
        .map(|(key, rows)| {
            let context = format!("{} [{key}]", path.display());
            assemble(&context, &rows, unit).map(|s| (key, s))
        })
        .collect()
}

fn log_difference(levels: &AnnualSeries) -> Result<AnnualSeries> {
    levels.require_unit(Unit::IndexLevel)?;
    if levels.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: levels.len(),
        });
    }
    levels.require_positive()?;
    let values = levels.values.windows(2).map(|w| w[1].ln() - w[0].ln()).collect();
    Ok(AnnualSeries {
        start_year: levels.start_year + 1,
        values,
        unit: Unit::RateDecimal,
    })
}

/// Force of inflation `ln Q(t) - ln Q(t-1)` from a price index.
pub fn force_of_inflation(cpi: &AnnualSeries) -> Result<AnnualSeries> {
    log_difference(cpi)
}

/// Logarithmic dividend growth `ln D(t) - ln D(t-1)`.
pub fn log_growth(dividends: &AnnualSeries) -> Result<AnnualSeries> {
    log_difference(dividends)
}

/// Short-term rate as the log return on a money-market index.
pub fn short_rate_from_index(index: &AnnualSeries) -> Result<AnnualSeries> {
    log_difference(index)
}

/// Dividend index `D(t) = P(t) * Y(t)`, with Y converted to decimal first.
pub fn derive_dividends(prices: &AnnualSeries, yields: &AnnualSeries) -> Result<AnnualSeries> {
    prices.require_unit(Unit::IndexLevel)?;
    require_aligned(prices, yields)?;
    let yields = match yields.unit {
        Unit::RateDecimal | Unit::RatePercent => yields.to_decimal(),
        other => {
            return Err(Error::Unit {
                expected: "rate_decimal or rate_percent".into(),
                got: other.to_string(),
            })
        }
    };
    if let Some((year, value)) = yields.iter().find(|&(_, y)| y < 0.0) {
        return Err(Error::NegativeYield { year, value });
    }
    let values = prices
        .values
        .iter()
        .zip(&yields.values)
        .map(|(p, y)| p * y)
        .collect();
    Ok(AnnualSeries {
        start_year: prices.start_year,
        values,
        unit: Unit::IndexLevel,
    })
}

/// Log spread `bd(t) = ln(delta_c(t) / delta_b(t))` between long and short rates.
pub fn log_spread(long: &AnnualSeries, short: &AnnualSeries) -> Result<AnnualSeries> {
    require_aligned(long, short)?;
    for s in [long, short] {
        if let Some((year, value)) = s.iter().find(|&(_, v)| !(v > 0.0)) {
            return Err(Error::NonPositive { year, value });
        }
    }
    let values = long
        .values
        .iter()
        .zip(&short.values)
        .map(|(c, b)| (c / b).ln())
        .collect();
    Ok(AnnualSeries {
        start_year: long.start_year,
        values,
        unit: Unit::LogValue,
    })
}

/// Per-year mean over whichever maturities are present that year.
pub fn average_ilb_yield(per_maturity: &[AnnualSeries]) -> Result<AnnualSeries> {
    let nonempty: Vec<AnnualSeries> = per_maturity
        .iter()
        .filter(|s| !s.is_empty())
        .map(AnnualSeries::to_decimal)
        .collect();
    if nonempty.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let start = nonempty.iter().map(|s| s.start_year).min().unwrap_or_default();
    let end = nonempty.iter().map(|s| s.end_year()).max().unwrap_or_default();
    let mut values = Vec::with_capacity((end - start + 1) as usize);
    for year in start..=end {
        let present: Vec<f64> = nonempty.iter().filter_map(|s| s.get(year)).collect();
        if present.is_empty() {
            return Err(Error::EmptyYear(year));
        }
        values.push(present.iter().sum::<f64>() / present.len() as f64);
    }
    Ok(AnnualSeries {
        start_year: start,
        values,
        unit: Unit::RateDecimal,
    })
}
