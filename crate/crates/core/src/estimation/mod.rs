//! Maximum-likelihood calibration of the sub-models.
//!
//! Each model is fitted by minimizing the conditional Gaussian negative
//! log-likelihood of its residuals with Nelder–Mead in an unconstrained
//! parameterization: standard deviations through `exp`, autoregressive
//! coefficients through `tanh`, everything else as is.

mod hessian;
mod nelder_mead;
mod stability;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::AnnualSeries;
use crate::diagnostics::{diagnose, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::models::{
    param_role, CascadeState, DataBundle, FilterOutput, Model, ModelSpec, Param, ParamRole, ParamSet,
    Series, Variant,
};
use crate::simulation::NormalStream;

pub use hessian::{hessian, invert_spd, standard_errors};
pub use nelder_mead::{nelder_mead, Minimum, OptimizerConfig};
pub use stability::{recursive_fit, Direction, StabilityCell, StabilityMode, StabilityRow, StabilityTable};

/// `0.5 * sum(ln(2 pi sigma^2) + e^2 / sigma^2)`.
pub fn gaussian_nll(residuals: &[f64], sigma: f64) -> f64 {
    let var = sigma * sigma;
    let ss: f64 = residuals.iter().map(|e| e * e).sum();
    0.5 * (residuals.len() as f64 * (2.0 * PI * var).ln() + ss / var)
}

/// Negative log-likelihood of `params` on `data`; `+inf` when the parameters
/// are invalid or the filter cannot run.
pub fn neg_log_likelihood(spec: &ModelSpec, params: &ParamSet, data: &DataBundle) -> f64 {
    if explosive_smoothing(params) {
        return f64::INFINITY;
    }
    let Ok(model) = Model::from_params(spec, params) else {
        return f64::INFINITY;
    };
    nll_of(&model, spec, data)
}

/// A moving-average weight outside [0, 2] makes the latent level recursion
/// explosive; with a near-zero mixing weight the likelihood cannot see it,
/// but simulated paths overflow.
fn explosive_smoothing(params: &ParamSet) -> bool {
    ["d_y", "d_d", "d_c"]
        .iter()
        .filter_map(|n| params.get(n))
        .any(|d| !(0.0..=2.0).contains(&d))
}

fn nll_of(model: &Model, spec: &ModelSpec, data: &DataBundle) -> f64 {
    match model.filter(data, spec.ma_init, false) {
        Ok(out) => {
            let v = gaussian_nll(&out.residuals.values, model.sigma());
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        }
        Err(_) => f64::INFINITY,
    }
}

pub fn to_unconstrained(name: &str, value: f64) -> f64 {
    match param_role(name) {
        ParamRole::Scale => value.ln(),
        ParamRole::Autoregressive => value.clamp(-0.999, 0.999).atanh(),
        ParamRole::Free => value,
    }
}

pub fn to_natural(name: &str, u: f64) -> f64 {
    match param_role(name) {
        ParamRole::Scale => u.exp(),
        ParamRole::Autoregressive => u.tanh(),
        ParamRole::Free => u,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub optimizer: OptimizerConfig,
    /// Starts derived from the method-of-moments guess; the first is the
    /// guess itself, the rest are jittered copies.
    pub multistart: usize,
    /// Seeds the jitter.
    pub seed: u64,
    /// Extra starting points tried before the generated ones. Missing
    /// parameters are taken from the moment guess.
    pub starts: Vec<ParamSet>,
    pub standard_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            multistart: 5,
            seed: 0,
            starts: Vec::new(),
            standard_errors: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub params: ParamSet,
    pub log_likelihood: f64,
    pub residuals: AnnualSeries,
    pub standardized_residuals: AnnualSeries,
    pub n_obs: usize,
    pub diagnostics: DiagnosticsReport,
    /// Quantities implied by the estimates, such as `mu_c = exp(ln_mu_c)`.
    pub derived: BTreeMap<String, f64>,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
    /// Latent state after the last observed year.
    pub final_state: CascadeState,
    pub last_year: i32,
    /// Latent paths recorded by the filter at the estimates.
    pub trace: BTreeMap<String, AnnualSeries>,
}

impl FitResult {
    pub fn model(&self) -> Result<Model> {
        Model::from_params(&self.spec, &self.params)
    }

    pub fn sigma(&self) -> f64 {
        self.model().map(|m| m.sigma()).unwrap_or(f64::NAN)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Mean, lag-one autoregression and innovation standard deviation.
fn ar1_moments(x: &[f64], with_mean: bool) -> (f64, f64, f64) {
    let mu = if with_mean { mean(x) } else { 0.0 };
    let d: Vec<f64> = x.iter().map(|v| v - mu).collect();
    let ss: f64 = d.iter().map(|v| v * v).sum();
    let cross: f64 = d.windows(2).map(|w| w[0] * w[1]).sum();
    let a = if ss > 0.0 { (cross / ss).clamp(-0.9, 0.9) } else { 0.0 };
    let innov: Vec<f64> = d.windows(2).map(|w| w[1] - a * w[0]).collect();
    let sigma = (innov.iter().map(|e| e * e).sum::<f64>() / innov.len().max(1) as f64).sqrt();
    (mu, a, sigma.max(1e-8))
}

fn spread_of(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64)
        .sqrt()
        .max(1e-8)
}

/// Method-of-moments starting values. Mixing weights start at `w = 0`,
/// `d = 0.5` unless fixed; fixed values always take precedence.
pub fn initial_values(spec: &ModelSpec, data: &DataBundle) -> Result<ParamSet> {
    let series = spec.series();
    let target = data.target(series).ok_or(Error::MissingInput {
        series,
        input: series_input(series),
    })?;
    let fixed_or = |name: &str, default: f64| spec.fixed.get(name).copied().unwrap_or(default);
    let mut pairs: Vec<(&str, f64)> = Vec::new();
    // Latent series with the inflation terms removed, filtered with zero
    // means and no autoregression.
    let latent = |base: &[(&str, f64)], column: Option<&str>| -> Result<FilterOutput> {
        let mut probe = ModelSpec::new(spec.variant);
        probe.ma_init = spec.ma_init;
        let model = Model::from_params(&probe, &ParamSet::from_pairs(base))?;
        let out = model.filter(data, spec.ma_init, column.is_some())?;
        Ok(out)
    };
    use Variant::*;
    match spec.variant {
        InflationAr1 => {
            let (mu, a, s) = ar1_moments(&target.values, true);
            pairs.extend([("mu_q", mu), ("a_q", a), ("sigma_q", s)]);
        }
        YieldAr1 | YieldMaInflation => {
            let mut base = vec![("mu_y", 0.0), ("a_y", 0.0), ("sigma_y", 1.0)];
            if spec.variant == YieldMaInflation {
                base.push(("w_y", fixed_or("w_y", 0.0)));
                base.push(("d_y", fixed_or("d_y", 0.5)));
            }
            let out = latent(&base, Some("yn"))?;
            let (mu, a, s) = ar1_moments(&out.trace["yn"].values, true);
            pairs.extend(base.iter().filter(|(n, _)| n.starts_with("w_") || n.starts_with("d_")));
            pairs.extend([("mu_y", mu), ("a_y", a), ("sigma_y", s)]);
        }
        DividendYieldOnly | DividendSimultaneousInflation | DividendMaInflation => {
            let mut base = vec![("mu_d", 0.0), ("y_d", 0.0), ("k_d", 0.0), ("sigma_d", 1.0)];
            match spec.variant {
                DividendSimultaneousInflation => {
                    let q = match spec.fixed.get("q_d") {
                        Some(q) => *q,
                        None => regression_slope(target, data.inflation.as_ref()).unwrap_or(1.0),
                    };
                    base.push(("q_d", q));
                }
                DividendMaInflation => {
                    base.push(("w_d", fixed_or("w_d", 0.0)));
                    base.push(("d_d", fixed_or("d_d", 0.5)));
                }
                _ => {}
            }
            let out = latent(&base, None)?;
            let r = &out.residuals.values;
            pairs.extend(base.iter().filter(|(n, _)| ["q_d", "w_d", "d_d", "y_d", "k_d"].contains(n)));
            pairs.extend([("mu_d", mean(r)), ("sigma_d", spread_of(r))]);
        }
        LongAr1Log | LongMaInflation => {
            let mut base = vec![("ln_mu_c", 0.0), ("a_c", 0.0), ("sigma_c", 1.0)];
            if spec.variant == LongMaInflation {
                base.push(("w_c", fixed_or("w_c", 0.0)));
                base.push(("d_c", fixed_or("d_c", 0.5)));
            }
            let out = latent(&base, Some("cn"))?;
            let (mu, a, s) = ar1_moments(&out.trace["cn"].values, true);
            pairs.extend(base.iter().filter(|(n, _)| n.starts_with("w_") || n.starts_with("d_")));
            pairs.extend([("ln_mu_c", mu), ("a_c", a), ("sigma_c", s)]);
        }
        ShortAr1Spread => {
            let (mu, a, s) = ar1_moments(&target.values, true);
            pairs.extend([("mu_b", mu), ("a_b", a), ("sigma_b", s)]);
        }
        IlbAr1 | IlbBothRates | IlbLongOnly | IlbShortWithMean | IlbShortNoMean => {
            let with_mean = spec.variant != IlbShortNoMean;
            let (mu, a, s) = ar1_moments(&target.values, with_mean);
            pairs.extend([("mu_r", mu), ("a_r", a), ("c_r", 0.0), ("b_r", 0.0), ("sigma_r", s)]);
        }
    }
    let params = spec
        .parameters()
        .iter()
        .map(|&name| {
            let value = spec
                .fixed
                .get(name)
                .copied()
                .or_else(|| pairs.iter().find(|(n, _)| *n == name).map(|p| p.1))
                .unwrap_or(0.0);
            Param {
                name: name.to_string(),
                value,
                std_error: None,
                fixed: spec.fixed.contains_key(name),
            }
        })
        .collect();
    Ok(ParamSet { params })
}

fn regression_slope(y: &AnnualSeries, x: Option<&AnnualSeries>) -> Option<f64> {
    let x = x?;
    let pairs: Vec<(f64, f64)> = y.iter().filter_map(|(yr, v)| x.get(yr).map(|q| (q, v))).collect();
    if pairs.len() < 3 {
        return None;
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn series_input(series: Series) -> &'static str {
    match series {
        Series::Inflation => "inflation",
        Series::DividendYield => "dividend_yield",
        Series::Dividend => "dividend_growth",
        Series::LongRate => "long_rate",
        Series::ShortRate => "log_spread",
        Series::Ilb => "ilb_rate",
    }
}

fn check_variance(target: &AnnualSeries) -> Result<()> {
    let (lo, hi) = target
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    // log differences of exact geometric growth still carry rounding noise
    let scale = lo.abs().max(hi.abs()).max(1.0);
    if target.len() >= 2 && hi - lo <= 1e-12 * scale {
        return Err(Error::ZeroVariance);
    }
    Ok(())
}

/// Makes sure regressors of the real-yield model cover the modelled years
/// even while their coefficients sit at zero.
fn check_ilb_inputs(spec: &ModelSpec, data: &DataBundle, start: &ParamSet) -> Result<()> {
    if spec.series() != Series::Ilb {
        return Ok(());
    }
    let mut probe = start.clone();
    for name in ["c_r", "b_r"] {
        if spec.parameters().contains(&name) && !spec.fixed.contains_key(name) {
            probe.set(name, 1e-3);
        }
    }
    Model::from_params(spec, &probe)?.filter(data, spec.ma_init, false)?;
    Ok(())
}

struct Objective<'a> {
    spec: &'a ModelSpec,
    data: &'a DataBundle,
    free: Vec<&'static str>,
}

impl Objective<'_> {
    fn params(&self, natural: &[f64]) -> ParamSet {
        let pairs: Vec<(&str, f64)> = self.free.iter().copied().zip(natural.iter().copied()).collect();
        ParamSet::from_pairs(&pairs)
    }

    fn natural(&self, u: &[f64]) -> Vec<f64> {
        self.free.iter().zip(u).map(|(n, &v)| to_natural(n, v)).collect()
    }

    fn unconstrained(&self, params: &ParamSet) -> Vec<f64> {
        self.free
            .iter()
            .map(|n| to_unconstrained(n, params.get(n).unwrap_or(0.0)))
            .collect()
    }

    fn at_natural(&self, natural: &[f64]) -> f64 {
        neg_log_likelihood(self.spec, &self.params(natural), self.data)
    }

    fn at_unconstrained(&self, u: &[f64]) -> f64 {
        self.at_natural(&self.natural(u))
    }
}

fn merged(base: &ParamSet, overrides: &ParamSet) -> ParamSet {
    let mut out = base.clone();
    for p in &overrides.params {
        if out.get(&p.name).is_some() && !out.param(&p.name).is_some_and(|q| q.fixed) {
            out.set(&p.name, p.value);
        }
    }
    out
}

/// Fits `spec` to `data` by maximum likelihood.
pub fn fit(spec: &ModelSpec, data: &DataBundle, options: &FitOptions) -> Result<FitResult> {
    options.optimizer.validate()?;
    let series = spec.series();
    let target = data.target(series).ok_or(Error::MissingInput {
        series,
        input: series_input(series),
    })?;
    check_variance(target)?;

    let base = initial_values(spec, data)?;
    check_ilb_inputs(spec, data, &base)?;
    let start_model = Model::from_params(spec, &base)?;
    let n_obs = start_model.filter(data, spec.ma_init, false)?.residuals.len();
    let free = spec.free_parameters();
    if n_obs < free.len() + 2 {
        return Err(Error::InsufficientData(format!(
            "{series}: {n_obs} residuals for {} free parameters",
            free.len()
        )));
    }

    let objective = Objective { spec, data, free };
    let mut warnings = Vec::new();
    let (estimates, iterations, converged) = if objective.free.is_empty() {
        (base.clone(), 0, true)
    } else {
        let u_base = objective.unconstrained(&base);
        let mut starts: Vec<Vec<f64>> = options
            .starts
            .iter()
            .map(|s| objective.unconstrained(&merged(&base, s)))
            .collect();
        if options.multistart > 0 {
            starts.push(u_base.clone());
        }
        for j in 1..options.multistart {
            let stream = NormalStream::new(options.seed ^ 0x9e37_79b9_7f4a_7c15, j as u64);
            starts.push(
                u_base
                    .iter()
                    .enumerate()
                    .map(|(i, &u)| u + (0.25 * u.abs() + 0.02) * stream.variate(i, 0))
                    .collect(),
            );
        }
        if starts.is_empty() {
            starts.push(u_base);
        }

        let runs: Vec<Result<Minimum>> = starts
            .par_iter()
            .map(|u0| nelder_mead(|u| objective.at_unconstrained(u), u0, &options.optimizer))
            .collect();
        let mut best: Option<Minimum> = None;
        let mut best_unconverged: Option<f64> = None;
        let mut last_err = None;
        for run in runs {
            match run {
                Ok(m) if m.converged => {
                    if best.as_ref().is_none_or(|b| m.f < b.f) {
                        best = Some(m);
                    }
                }
                Ok(m) => {
                    best_unconverged = Some(best_unconverged.map_or(m.f, |f: f64| f.min(m.f)));
                }
                Err(e) => last_err = Some(e),
            }
        }
        let Some(best) = best else {
            return Err(match (best_unconverged, last_err) {
                (None, Some(e)) => e,
                _ => Error::NonConvergence,
            });
        };
        if best_unconverged.is_some_and(|f| f < best.f - options.optimizer.f_tol) {
            warnings.push("a start that hit the iteration cap reached a lower objective".to_string());
        }
        let natural = objective.natural(&best.x);
        let mut params = base.clone();
        for (name, v) in objective.free.iter().zip(&natural) {
            params.set(name, *v);
        }
        (params, best.iterations, true)
    };

    let model = Model::from_params(spec, &estimates)?;
    let out = model.filter(data, spec.ma_init, true)?;
    let sigma = model.sigma();
    let nll = gaussian_nll(&out.residuals.values, sigma);
    if !nll.is_finite() {
        return Err(Error::NonFinite {
            context: format!("{series} log-likelihood at the estimates"),
        });
    }

    let mut params = estimates;
    if options.standard_errors && !objective.free.is_empty() {
        let natural: Vec<f64> = objective.free.iter().map(|n| params.get(n).unwrap()).collect();
        match standard_errors(|x| objective.at_natural(x), &natural) {
            Ok(se) => {
                for (name, s) in objective.free.iter().zip(se) {
                    if let Some(p) = params.params.iter_mut().find(|p| p.name == *name) {
                        p.std_error = Some(s);
                    }
                }
            }
            Err(msg) => {
                log::warn!("{series}: {msg}; standard errors omitted");
                warnings.push(format!("{msg}; standard errors omitted"));
            }
        }
    }

    let diagnostics = diagnose(&out.residuals.values)?;
    let standardized_residuals = out.residuals.map(out.residuals.unit, |e| e / sigma);
    let mut derived = BTreeMap::new();
    if let Some(ln_mu) = params.get("ln_mu_c") {
        derived.insert("mu_c".to_string(), ln_mu.exp());
    }
    Ok(FitResult {
        spec: spec.clone(),
        params,
        log_likelihood: -nll,
        n_obs: out.residuals.len(),
        residuals: out.residuals,
        standardized_residuals,
        diagnostics,
        derived,
        converged,
        iterations,
        warnings,
        final_state: out.final_state,
        last_year: out.last_year,
        trace: out.trace,
    })
}

/// Fits the given specs in cascade order. The dividend model receives the
/// residuals of the dividend-yield fit when that fit succeeded.
pub fn fit_cascade(
    specs: &[ModelSpec],
    data: &DataBundle,
    options: &FitOptions,
) -> Vec<(Series, Result<FitResult>)> {
    let mut data = data.clone();
    let mut ordered: Vec<&ModelSpec> = specs.iter().collect();
    ordered.sort_by_key(|s| s.series().index());
    let mut out = Vec::new();
    for spec in ordered {
        let series = spec.series();
        if series == Series::Dividend && data.yield_residuals.is_none() {
            out.push((
                series,
                Err(Error::MissingDependency {
                    missing: Series::DividendYield,
                    needed_by: Series::Dividend,
                }),
            ));
            continue;
        }
        let result = fit(spec, &data, options);
        if series == Series::DividendYield {
            if let Ok(r) = &result {
                data.yield_residuals = Some(r.residuals.clone());
            }
        }
        out.push((series, result));
    }
    out
}
