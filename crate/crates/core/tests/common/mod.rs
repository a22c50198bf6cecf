#![allow(dead_code)]

use saesg::data::Unit;
use saesg::models::MaInit;
use saesg::simulation::NormalStream;
use saesg::{AnnualSeries, CascadeModels, CascadeState, DataBundle, ModelParams, ModelSpec, ParamSet, Variant};

pub fn params(variant: Variant, pairs: &[(&str, f64)]) -> ModelParams {
    ModelParams {
        spec: ModelSpec::new(variant),
        params: ParamSet::from_pairs(pairs),
    }
}

pub fn inflation_table1() -> ModelParams {
    params(Variant::InflationAr1, &[("mu_q", 0.0809), ("a_q", 0.8433), ("sigma_q", 0.0220)])
}

pub fn yield_ma_table2() -> ModelParams {
    params(
        Variant::YieldMaInflation,
        &[("w_y", -4.0074), ("d_y", 0.1396), ("mu_y", 0.3781), ("a_y", 0.6318), ("sigma_y", 0.1973)],
    )
}

pub fn dividend_ma_table3() -> ModelParams {
    params(
        Variant::DividendMaInflation,
        &[
            ("w_d", -5.5068),
            ("d_d", 0.6499),
            ("mu_d", 0.0649),
            ("y_d", -0.1850),
            ("k_d", 0.2798),
            ("sigma_d", 0.1086),
        ],
    )
}

/// Moving-average long-rate model with the mixing weights held fixed.
pub fn long_ma_table4() -> ModelParams {
    ModelParams {
        spec: ModelSpec::new(Variant::LongMaInflation)
            .with_fixed("w_c", 1.0)
            .unwrap()
            .with_fixed("d_c", 0.13)
            .unwrap(),
        params: ParamSet::from_pairs(&[("ln_mu_c", -3.3892), ("a_c", 0.5665), ("sigma_c", 0.3610)]),
    }
}

pub fn short_table5() -> ModelParams {
    params(Variant::ShortAr1Spread, &[("mu_b", 0.1568), ("a_b", 0.5527), ("sigma_b", 0.1996)])
}

pub fn ilb_both_rates() -> ModelParams {
    params(
        Variant::IlbBothRates,
        &[("mu_r", 0.02), ("a_r", 0.6), ("c_r", 0.15), ("b_r", 0.05), ("sigma_r", 0.004)],
    )
}

/// The five-model cascade used for backtests (no real yields).
pub fn cascade_sets() -> Vec<ModelParams> {
    vec![
        inflation_table1(),
        yield_ma_table2(),
        dividend_ma_table3(),
        long_ma_table4(),
        short_table5(),
    ]
}

pub struct Synthetic {
    pub data: DataBundle,
    /// State at the start of the first recorded year.
    pub start: CascadeState,
}

impl Synthetic {
    /// Specs of the generating models with moving-average states started at
    /// their true values.
    pub fn specs(&self, sets: &[ModelParams]) -> Vec<ModelSpec> {
        sets.iter()
            .map(|p| {
                let init = match p.spec.variant {
                    Variant::YieldMaInflation => MaInit::Fixed(self.start.ym_prev),
                    Variant::DividendMaInflation => MaInit::Fixed(self.start.dm_prev),
                    Variant::LongMaInflation => MaInit::Fixed(self.start.cm_prev),
                    _ => MaInit::FirstObservation,
                };
                p.spec.clone().with_ma_init(init)
            })
            .collect()
    }
}

fn series(start_year: i32, values: Vec<f64>, unit: Unit) -> Option<AnnualSeries> {
    if values.iter().all(|v| v.is_nan()) {
        None
    } else {
        Some(AnnualSeries::new(start_year, values, unit).unwrap())
    }
}

/// `n` years of data from the cascade, after `burn_in` discarded years
/// started from the neutral state. Shocks come from path 0 of `seed`.
pub fn generate(models: &CascadeModels, start_year: i32, n: usize, burn_in: usize, seed: u64) -> Synthetic {
    let stream = NormalStream::new(seed, 0);
    let mut state = models.neutral_state();
    let mut start = state;
    let mut cols: Vec<Vec<f64>> = (0..7).map(|_| Vec::with_capacity(n)).collect();
    for t in 0..burn_in + n {
        if t == burn_in {
            start = state;
        }
        let (v, next) = models.step_year(&state, |s| stream.variate(s.index(), t as u64));
        state = next;
        if t >= burn_in {
            for (col, x) in cols.iter_mut().zip([
                v.inflation,
                v.dividend_yield,
                v.dividend_growth,
                v.long_rate,
                v.short_rate,
                v.log_spread,
                v.ilb_rate,
            ]) {
                col.push(x);
            }
        }
    }
    let mut cols = cols.into_iter();
    let mut next = |unit| series(start_year, cols.next().unwrap(), unit);
    let data = DataBundle {
        inflation: next(Unit::RateDecimal),
        dividend_yield: next(Unit::RateDecimal),
        dividend_growth: next(Unit::RateDecimal),
        yield_residuals: None,
        long_rate: next(Unit::RateDecimal),
        short_rate: next(Unit::RateDecimal),
        log_spread: next(Unit::LogValue),
        ilb_rate: next(Unit::RateDecimal),
    };
    Synthetic { data, start }
}

/// AR(1) sample path started at the mean.
pub fn ar1_path(n: usize, mu: f64, a: f64, sigma: f64, seed: u64) -> Vec<f64> {
    let s = NormalStream::new(seed, 0);
    let mut x = mu;
    (0..n)
        .map(|t| {
            x = mu + a * (x - mu) + sigma * s.variate(0, t as u64);
            x
        })
        .collect()
}

/// Conditional least squares of `x(t)` on `x(t-1)`: returns (mu, a).
pub fn cls_ar1(x: &[f64]) -> (f64, f64) {
    let prev = &x[..x.len() - 1];
    let next = &x[1..];
    let n = prev.len() as f64;
    let mp = prev.iter().sum::<f64>() / n;
    let mn = next.iter().sum::<f64>() / n;
    let sxy: f64 = prev.iter().zip(next).map(|(p, q)| (p - mp) * (q - mn)).sum();
    let sxx: f64 = prev.iter().map(|p| (p - mp).powi(2)).sum();
    let a = sxy / sxx;
    let c = mn - a * mp;
    (c / (1.0 - a), a)
}

fn uniform(stream: &NormalStream, k: usize, lo: f64, hi: f64) -> f64 {
    let u = 0.5 + 0.5 * stream.variate(100 + k, 0).tanh();
    lo + (hi - lo) * u
}

fn rate_series(start: i32, values: Vec<f64>) -> AnnualSeries {
    AnnualSeries::new(start, values, Unit::RateDecimal).unwrap()
}

/// Steps one sub-model with random parameters through a random number of
/// years, filters the result with the same parameters, and returns the
/// largest `|e / sigma - z| / max(1, |z|)` over the filtered years.
pub fn inverse_pair_error(series: saesg::Series, instance: u64) -> f64 {
    use saesg::models::{
        DividendInflation, DividendModel, DividendYieldModel, IlbModel, InflationModel, LongRateModel, MaMix,
        ShortRateModel,
    };
    use saesg::Series;

    let r = NormalStream::new(0xfeed ^ instance, series.index() as u64);
    let n = 20 + (uniform(&r, 0, 0.0, 60.0) as usize);
    let z: Vec<f64> = (0..n).map(|t| r.variate(0, t as u64)).collect();
    let dq: Vec<f64> = (0..n).map(|t| 0.06 + 0.05 * r.variate(1, t as u64)).collect();
    let start = 1950;
    let sigma = uniform(&r, 1, 0.005, 0.3);
    let a = uniform(&r, 2, -0.95, 0.95);
    let mix = MaMix {
        w: uniform(&r, 3, -6.0, 2.0),
        d: uniform(&r, 4, 0.05, 0.95),
    };
    let worst = |e: &[f64], sigma: f64, z: &[f64]| {
        e.iter()
            .zip(z)
            .map(|(e, z)| (e / sigma - z).abs() / z.abs().max(1.0))
            .fold(0.0, f64::max)
    };
    let mut state = CascadeState::default();
    match series {
        Series::Inflation => {
            let m = InflationModel {
                mu: uniform(&r, 5, -0.05, 0.2),
                a,
                sigma,
            };
            state.delta_q_prev = dq[0];
            let mut x = vec![dq[0]];
            for &zt in &z[1..] {
                let (v, next) = m.step(&state, zt);
                state = next;
                x.push(v);
            }
            let out = m.filter(&rate_series(start, x), false).unwrap();
            worst(&out.residuals.values, sigma, &z[1..])
        }
        Series::DividendYield => {
            let m = DividendYieldModel {
                inflation: Some(mix),
                mu: uniform(&r, 5, -4.0, 1.0),
                a,
                sigma,
            };
            let v0 = uniform(&r, 6, 0.0, 0.15);
            state.ym_prev = v0;
            state.yn_prev = uniform(&r, 7, -0.5, 0.5);
            let mut y = Vec::new();
            for (t, &zt) in z.iter().enumerate() {
                let (v, next) = m.step(&state, dq[t], zt);
                state = next;
                y.push(v);
            }
            let out = m
                .filter(&rate_series(start, y), &rate_series(start, dq), MaInit::Fixed(v0), false)
                .unwrap();
            worst(&out.residuals.values, sigma, &z[1..])
        }
        Series::Dividend => {
            let m = DividendModel {
                inflation: DividendInflation::MovingAverage(mix),
                mu: uniform(&r, 5, -0.05, 0.15),
                y: uniform(&r, 6, -0.5, 0.5),
                k: a,
                sigma,
            };
            let eps_y: Vec<f64> = (0..=n).map(|t| 0.2 * r.variate(2, t as u64)).collect();
            let v0 = uniform(&r, 7, 0.0, 0.15);
            state.dm_prev = v0;
            let mut dd = Vec::new();
            for (t, &zt) in z.iter().enumerate() {
                state.eps_y_prev = eps_y[t];
                let (v, next) = m.step(&state, dq[t], zt);
                state = next;
                dd.push(v);
            }
            let out = m
                .filter(
                    &rate_series(start, dd),
                    &rate_series(start, dq),
                    &rate_series(start - 1, eps_y),
                    MaInit::Fixed(v0),
                    false,
                )
                .unwrap();
            worst(&out.residuals.values, sigma, &z)
        }
        Series::LongRate => {
            let m = LongRateModel {
                inflation: Some(MaMix { w: mix.w.abs().min(1.5), d: mix.d }),
                ln_mu: uniform(&r, 5, -4.0, -2.0),
                a,
                sigma,
            };
            let v0 = uniform(&r, 6, 0.0, 0.15);
            state.cm_prev = v0;
            state.cn_prev = uniform(&r, 7, -0.5, 0.5);
            let mut c = Vec::new();
            for (t, &zt) in z.iter().enumerate() {
                let (v, next) = m.step(&state, dq[t], zt);
                state = next;
                c.push(v);
            }
            let out = m
                .filter(&rate_series(start, c), &rate_series(start, dq), MaInit::Fixed(v0), false)
                .unwrap();
            worst(&out.residuals.values, sigma, &z[1..])
        }
        Series::ShortRate => {
            let m = ShortRateModel {
                mu: uniform(&r, 5, -0.3, 0.5),
                a,
                sigma,
            };
            state.bd_prev = uniform(&r, 6, -0.5, 0.5);
            let mut bd = vec![state.bd_prev];
            let mut identity = 0.0f64;
            for (t, &zt) in z.iter().enumerate().skip(1) {
                let dc = 0.1 + 0.02 * r.variate(3, t as u64);
                let (db, next) = m.step(&state, dc, zt);
                state = next;
                identity = identity.max((db - dc * (-state.bd_prev).exp()).abs() / db);
                bd.push(state.bd_prev);
            }
            let out = m
                .filter(&AnnualSeries::new(start, bd, Unit::LogValue).unwrap(), false)
                .unwrap();
            worst(&out.residuals.values, sigma, &z[1..]).max(identity)
        }
        Series::Ilb => {
            let m = IlbModel {
                mu: uniform(&r, 5, 0.0, 0.05),
                a,
                c: uniform(&r, 6, -0.3, 0.3),
                b: uniform(&r, 7, -0.3, 0.3),
                sigma: sigma * 0.1,
            };
            let dc: Vec<f64> = (0..n).map(|t| 0.1 + 0.02 * r.variate(3, t as u64)).collect();
            let db: Vec<f64> = (0..n).map(|t| 0.08 + 0.02 * r.variate(4, t as u64)).collect();
            state.delta_r_prev = uniform(&r, 8, 0.0, 0.05);
            let mut dr = vec![state.delta_r_prev];
            for t in 1..n {
                let (v, next) = m.step(&state, dc[t], db[t], z[t]);
                state = next;
                dr.push(v);
            }
            let out = m
                .filter(
                    &rate_series(start, dr),
                    Some(&rate_series(start, dc)),
                    Some(&rate_series(start, db)),
                    false,
                )
                .unwrap();
            worst(&out.residuals.values, m.sigma, &z[1..])
        }
    }
}
