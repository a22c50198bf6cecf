//! Residual diagnostics and the KPSS level-stationarity test.
//!
//! Moments and autocorrelations use divide-by-n normalization throughout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// KPSS (1992) level-stationarity critical values at 10%, 5% and 1%.
pub const KPSS_CRITICAL: [(f64, f64); 3] = [(0.10, 0.347), (0.05, 0.463), (0.01, 0.739)];

/// Largest autocorrelation lag reported by [`diagnose`].
pub const REPORT_LAGS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n: usize,
    pub r_z: BTreeMap<usize, f64>,
    pub r_z2: BTreeMap<usize, f64>,
    pub skewness: f64,
    /// Raw kurtosis; 3 for a normal distribution.
    pub kurtosis: f64,
    pub jarque_bera: f64,
    pub jb_p_value: f64,
    /// Autocorrelations beyond `2 / sqrt(n)` are listed in the flag vectors.
    pub significance_bound: f64,
    pub flagged_r_z: Vec<usize>,
    pub flagged_r_z2: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpssDecision {
    pub level: f64,
    pub critical_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpssResult {
    pub statistic: f64,
    pub bandwidth: usize,
    pub decisions: Vec<KpssDecision>,
}

impl KpssResult {
    pub fn rejects_at(&self, level: f64) -> bool {
        self.decisions
            .iter()
            .find(|d| (d.level - level).abs() < 1e-12)
            .is_some_and(|d| d.reject)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn centered(x: &[f64]) -> Result<(Vec<f64>, f64)> {
    if x.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let m = mean(x);
    let dev: Vec<f64> = x.iter().map(|v| v - m).collect();
    let ss: f64 = dev.iter().map(|d| d * d).sum();
    let scale = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    if ss <= (1e-13 * scale).powi(2) * x.len() as f64 {
        return Err(Error::ZeroVariance);
    }
    Ok((dev, ss))
}

/// Sample autocorrelations `r(0..=max_lag)`.
pub fn acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if x.len() <= max_lag + 1 {
        return Err(Error::TooShort {
            needed: max_lag + 2,
            got: x.len(),
        });
    }
    let (dev, ss) = centered(x)?;
    Ok((0..=max_lag)
        .map(|k| dev.iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / ss)
        .collect())
}

/// Skewness `m3 / m2^1.5` and raw kurtosis `m4 / m2^2`.
pub fn moments(x: &[f64]) -> Result<(f64, f64)> {
    let (dev, ss) = centered(x)?;
    let n = x.len() as f64;
    let m2 = ss / n;
    let m3 = dev.iter().map(|d| d * d * d).sum::<f64>() / n;
    let m4 = dev.iter().map(|d| d * d * d * d).sum::<f64>() / n;
    Ok((m3 / m2.powf(1.5), m4 / (m2 * m2)))
}

/// Jarque-Bera statistic and its chi-squared(2) upper-tail probability.
pub fn jarque_bera_from_moments(n: usize, skewness: f64, kurtosis: f64) -> (f64, f64) {
    let jb = n as f64 / 6.0 * (skewness * skewness + (kurtosis - 3.0).powi(2) / 4.0);
    (jb, (-jb / 2.0).exp())
}

pub fn jarque_bera(x: &[f64]) -> Result<(f64, f64)> {
    let (s, k) = moments(x)?;
    Ok(jarque_bera_from_moments(x.len(), s, k))
}

/// `floor(4 (n / 100)^(1/4))`.
pub fn kpss_bandwidth(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// KPSS test of level stationarity with a Bartlett-kernel long-run variance.
pub fn kpss_level(x: &[f64]) -> Result<KpssResult> {
    let n = x.len();
    if n < 10 {
        return Err(Error::TooShort { needed: 10, got: n });
    }
    let (e, ss) = centered(x)?;
    let nf = n as f64;
    let bandwidth = kpss_bandwidth(n);
    let mut lrv = ss / nf;
    for j in 1..=bandwidth.min(n - 1) {
        let gamma = e[j..].iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / nf;
        lrv += 2.0 * (1.0 - j as f64 / (bandwidth as f64 + 1.0)) * gamma;
    }
    let mut partial = 0.0;
    let mut sum_sq = 0.0;
    for v in &e {
        partial += v;
        sum_sq += partial * partial;
    }
    let statistic = sum_sq / (nf * nf * lrv);
    let decisions = KPSS_CRITICAL
        .iter()
        .map(|&(level, critical_value)| KpssDecision {
            level,
            critical_value,
            reject: statistic > critical_value,
        })
        .collect();
    Ok(KpssResult {
        statistic,
        bandwidth,
        decisions,
    })
}

/// Full residual battery. Lags are capped at `min(REPORT_LAGS, n - 2)`.
pub fn diagnose(residuals: &[f64]) -> Result<DiagnosticsReport> {
    let n = residuals.len();
    if n < 3 {
        return Err(Error::TooShort { needed: 3, got: n });
    }
    let lags = REPORT_LAGS.min(n - 2);
    let as_map = |r: Vec<f64>| -> BTreeMap<usize, f64> { r.into_iter().enumerate().skip(1).collect() };
    let r_z = as_map(acf(residuals, lags)?);
    let squares: Vec<f64> = residuals.iter().map(|e| e * e).collect();
    let r_z2 = acf(&squares, lags).map(as_map).unwrap_or_default();
    let (skewness, kurtosis) = moments(residuals)?;
    let (jarque_bera, jb_p_value) = jarque_bera_from_moments(n, skewness, kurtosis);
    let bound = 2.0 / (n as f64).sqrt();
    let flag = |m: &BTreeMap<usize, f64>| -> Vec<usize> {
        m.iter().filter(|(_, r)| r.abs() > bound).map(|(k, _)| *k).collect()
    };
    Ok(DiagnosticsReport {
        n,
        flagged_r_z: flag(&r_z),
        flagged_r_z2: flag(&r_z2),
        r_z,
        r_z2,
        skewness,
        kurtosis,
        jarque_bera,
        jb_p_value,
        significance_bound: bound,
    })
}
