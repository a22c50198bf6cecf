use std::collections::BTreeMap;

use saesg::diagnostics::{kpss_level, DiagnosticsReport, KpssResult};
use saesg::estimation::{recursive_fit, Direction, StabilityMode};
use saesg::simulation::{
    backtest, fan, initial_state_from_fits, write_binary, write_csv, BacktestConfig, StartMode,
};
use saesg::{fit, fit_cascade, simulate, CascadeModels, FitResult, Series, SimulationConfig};
use serde::Serialize;

use crate::config::{Loaded, ScenarioFormat};
use crate::output::{fit_table, params_table, Outputs};
use crate::CliError;

pub enum Status {
    Complete,
    /// Outputs were written but some models failed.
    Partial(String),
}

type Fits = Vec<(Series, saesg::Result<FitResult>)>;

fn fit_all(l: &Loaded, seed: u64) -> Result<(saesg::DataBundle, Fits), CliError> {
    let specs = l.specs()?;
    if specs.is_empty() {
        return Err(CliError::Validation("no models configured under [models]".into()));
    }
    let data = l.data_bundle()?;
    let results = fit_cascade(&specs, &data, &l.fit_options(seed));
    for (series, r) in &results {
        if let Err(e) = r {
            log::error!("{series}: {e}");
        }
    }
    Ok((data, results))
}

/// All fits, or the first failure when any model failed.
fn all_fitted(results: Fits) -> Result<Vec<FitResult>, CliError> {
    results
        .into_iter()
        .map(|(series, r)| {
            r.map_err(|e| CliError::Engine {
                context: format!("fitting {series}"),
                source: e,
            })
        })
        .collect()
}

fn status_of(results: Fits) -> Result<Status, CliError> {
    let total = results.len();
    let failed: Vec<(Series, saesg::Error)> = results
        .into_iter()
        .filter_map(|(s, r)| r.err().map(|e| (s, e)))
        .collect();
    if failed.is_empty() {
        return Ok(Status::Complete);
    }
    if failed.len() == total {
        let (series, source) = failed.into_iter().next().unwrap();
        return Err(CliError::Engine {
            context: format!("fitting {series}"),
            source,
        });
    }
    let names: Vec<String> = failed.iter().map(|(s, e)| format!("{s} ({e})")).collect();
    Ok(Status::Partial(format!("{} of {total} models failed: {}", failed.len(), names.join("; "))))
}

pub fn fit_command(l: &Loaded, seed: u64, out: &mut Outputs) -> Result<Status, CliError> {
    let (_, results) = fit_all(l, seed)?;
    for (series, r) in &results {
        if let Ok(r) = r {
            out.write_json(&format!("fit_{series}.json"), r)?;
        }
    }
    let table = fit_table(&results);
    print!("{table}");
    out.write("fit_report.txt", table.as_bytes())?;
    status_of(results)
}

#[derive(Serialize)]
struct DiagnoseReport {
    series: Series,
    first_year: i32,
    last_year: i32,
    kpss: KpssResult,
    /// Present when a model of the series is configured and fitted.
    residuals: Option<DiagnosticsReport>,
    fit_error: Option<String>,
}

fn kpss_summary(k: &KpssResult) -> String {
    let levels: Vec<String> = k
        .decisions
        .iter()
        .map(|d| {
            let verdict = if d.reject { "reject" } else { "accept" };
            format!("{:.0}% {verdict}", d.level * 100.0)
        })
        .collect();
    format!("KPSS {:.4} (bandwidth {}): {}", k.statistic, k.bandwidth, levels.join(", "))
}

pub fn diagnose_command(
    l: &Loaded,
    seed: u64,
    series: Option<Series>,
    out: &mut Outputs,
) -> Result<Status, CliError> {
    let specs = l.specs()?;
    let data = l.data_bundle()?;
    let results = if specs.is_empty() {
        Vec::new()
    } else {
        fit_cascade(&specs, &data, &l.fit_options(seed))
    };
    let selected: Vec<Series> = match series {
        Some(s) => vec![s],
        None => specs.iter().map(|s| s.series()).collect(),
    };
    if selected.is_empty() {
        return Err(CliError::Validation("no series to diagnose; pass --series or configure [models]".into()));
    }
    let mut failures = Vec::new();
    for s in selected {
        let target = data
            .target(s)
            .ok_or_else(|| CliError::Validation(format!("no data configured for {s}")))?;
        let kpss = kpss_level(&target.values).map_err(|e| CliError::Engine {
            context: format!("KPSS test on {s}"),
            source: e,
        })?;
        let fitted = results.iter().find(|(series, _)| *series == s).map(|(_, r)| r);
        let (residuals, fit_error) = match fitted {
            Some(Ok(r)) => (Some(r.diagnostics.clone()), None),
            Some(Err(e)) => {
                failures.push(format!("{s} ({e})"));
                (None, Some(e.to_string()))
            }
            None => (None, None),
        };
        println!("{s}: {}", kpss_summary(&kpss));
        out.write_json(
            &format!("diagnose_{s}.json"),
            &DiagnoseReport {
                series: s,
                first_year: target.start_year,
                last_year: target.end_year(),
                kpss,
                residuals,
                fit_error,
            },
        )?;
    }
    Ok(if failures.is_empty() {
        Status::Complete
    } else {
        Status::Partial(format!("fits failed: {}", failures.join("; ")))
    })
}

pub struct StabilityArgs {
    pub series: Series,
    pub direction: Direction,
    pub min_obs: usize,
    pub mode: StabilityMode,
}

pub fn stability_command(
    l: &Loaded,
    seed: u64,
    args: &StabilityArgs,
    out: &mut Outputs,
) -> Result<Status, CliError> {
    let specs = l.specs()?;
    let spec = specs
        .iter()
        .find(|s| s.series() == args.series)
        .ok_or_else(|| CliError::Validation(format!("no model configured for {}", args.series)))?;
    let mut data = l.data_bundle()?;
    let options = l.fit_options(seed);
    if args.series == Series::Dividend {
        // the dividend model reads last year's yield residual
        let yield_spec = specs
            .iter()
            .find(|s| s.series() == Series::DividendYield)
            .ok_or_else(|| CliError::Validation("the dividend model needs a dividend_yield model".into()))?;
        let r = fit(yield_spec, &data, &options).map_err(|e| CliError::Engine {
            context: "fitting dividend_yield".into(),
            source: e,
        })?;
        data.yield_residuals = Some(r.residuals);
    }
    let table = recursive_fit(spec, &data, args.direction, args.min_obs, &options, args.mode).map_err(|e| {
        CliError::Engine {
            context: format!("stability of {}", args.series),
            source: e,
        }
    })?;
    let direction = match args.direction {
        Direction::ExpandingEnd => "expanding_end",
        Direction::ExpandingStart => "expanding_start",
    };
    let stem = format!("stability_{}_{direction}", args.series);
    out.write(&format!("{stem}.csv"), table.to_csv().as_bytes())?;
    out.write_json(&format!("{stem}.json"), &table)?;
    let failed: Vec<String> = table
        .rows
        .iter()
        .filter(|r| !r.converged)
        .map(|r| r.period_bound_year.to_string())
        .collect();
    println!(
        "{}: {} periods, {} failed",
        args.series,
        table.rows.len(),
        failed.len()
    );
    Ok(if failed.is_empty() {
        Status::Complete
    } else {
        Status::Partial(format!("periods bounded by {} did not converge", failed.join(", ")))
    })
}

pub fn simulate_command(l: &Loaded, seed: u64, out: &mut Outputs) -> Result<Status, CliError> {
    let (_, results) = fit_all(l, seed)?;
    let fits = all_fitted(results)?;
    let engine = |context: &str| {
        let context = context.to_string();
        move |source| CliError::Engine { context, source }
    };
    let models = CascadeModels::from_fits(&fits).map_err(engine("assembling the cascade"))?;
    let s = &l.config.simulation;
    let requested: Vec<Series> = fits.iter().map(|f| f.spec.series()).collect();
    let state = initial_state_from_fits(&fits, &requested, s.start).map_err(engine("initial state"))?;
    let last_year = fits.iter().map(|f| f.last_year).max().unwrap_or(0);
    let start_year = s.start_year.unwrap_or(match s.start {
        StartMode::FromFit => last_year + 1,
        StartMode::Neutral => 1,
    });
    let config = SimulationConfig {
        horizon: s.horizon,
        n_paths: s.n_paths,
        seed,
        start_year,
        base_cpi: s.base_cpi,
        base_price: s.base_price,
        yield_unit: l.yield_unit(),
        parallel: true,
    };
    let scenarios = simulate(&models, &state, &config).map_err(engine("simulating"))?;
    let fans = fan(&scenarios).map_err(engine("computing fans"))?;
    out.write("fan.csv", fans.to_csv().as_bytes())?;
    match s.scenarios {
        ScenarioFormat::None => {}
        ScenarioFormat::Csv => {
            let mut buf = Vec::new();
            write_csv(&scenarios, &mut buf).map_err(engine("exporting scenarios"))?;
            out.write("scenarios.csv", &buf)?;
        }
        ScenarioFormat::Binary => {
            let mut buf = Vec::new();
            write_binary(&scenarios, &mut buf).map_err(engine("exporting scenarios"))?;
            out.write("scenarios.bin", &buf)?;
        }
    }
    out.write("simulation_params.txt", params_table(&models.params).as_bytes())?;
    out.write_json("simulation_params.json", &models.params)?;
    out.write_json("initial_state.json", &state)?;
    println!(
        "{} paths x {} years from {start_year}; fans for {} series",
        config.n_paths,
        config.horizon,
        scenarios.series.len()
    );
    Ok(Status::Complete)
}

pub fn backtest_command(l: &Loaded, seed: u64, split_year: i32, out: &mut Outputs) -> Result<Status, CliError> {
    let specs = l.specs()?;
    if specs.is_empty() {
        return Err(CliError::Validation("no models configured under [models]".into()));
    }
    let data = l.data_bundle()?;
    let b = &l.config.backtest;
    let config = BacktestConfig {
        split_year,
        horizon: b.horizon,
        n_paths: b.n_paths,
        seed,
        include_ilb: b.include_ilb,
        fit: l.fit_options(seed),
        yield_unit: l.yield_unit(),
        overrides: BTreeMap::new(),
        parallel: true,
    };
    let report = backtest(&specs, &data, &config).map_err(|e| CliError::Engine {
        context: format!("backtest split at {split_year}"),
        source: e,
    })?;
    out.write("backtest.csv", report.to_csv().as_bytes())?;
    out.write("backtest_fan.csv", report.fan.to_csv().as_bytes())?;
    out.write("backtest_params.txt", params_table(&report.params).as_bytes())?;
    out.write_json("backtest.json", &report)?;
    for c in &report.coverage {
        println!(
            "{}: {} holdout years, {:.0}% inside 95%, {:.0}% inside 99%",
            c.series,
            c.n,
            c.inside_95 * 100.0,
            c.inside_99 * 100.0
        );
    }
    Ok(Status::Complete)
}
