use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use saesg::{simulate, CascadeModels, ModelParams, ModelSpec, ParamSet, SimulationConfig, Variant};

const FIRST_YEAR: i32 = 1950;
const YEARS: usize = 70;

fn params(variant: Variant, pairs: &[(&str, f64)]) -> ModelParams {
    ModelParams {
        spec: ModelSpec::new(variant),
        params: ParamSet::from_pairs(pairs),
    }
}

/// Writes CPI, dividend yield, share price, long and short rate files from one
/// simulated path of a known cascade.
fn write_inputs(dir: &Path) {
    let sets = vec![
        params(Variant::InflationAr1, &[("mu_q", 0.0809), ("a_q", 0.8433), ("sigma_q", 0.0220)]),
        params(
            Variant::YieldMaInflation,
            &[("w_y", 0.5), ("d_y", 0.3), ("mu_y", -3.3), ("a_y", 0.63), ("sigma_y", 0.197)],
        ),
        params(
            Variant::DividendMaInflation,
            &[
                ("w_d", 0.6),
                ("d_d", 0.65),
                ("mu_d", 0.03),
                ("y_d", -0.18),
                ("k_d", 0.28),
                ("sigma_d", 0.1),
            ],
        ),
        params(
            Variant::LongMaInflation,
            &[("w_c", 1.0), ("d_c", 0.13), ("ln_mu_c", -3.39), ("a_c", 0.57), ("sigma_c", 0.36)],
        ),
        params(Variant::ShortAr1Spread, &[("mu_b", 0.157), ("a_b", 0.55), ("sigma_b", 0.2)]),
    ];
    let models = CascadeModels::from_params(&sets).unwrap();
    let config = SimulationConfig {
        n_paths: 1,
        horizon: YEARS,
        seed: 2024,
        start_year: FIRST_YEAR,
        ..SimulationConfig::default()
    };
    let s = simulate(&models, &models.neutral_state(), &config).unwrap();
    let file = |name: &str, series: &str, scale: f64| {
        let mut body = String::from("year,value\n");
        for (t, v) in s.path(series, 0).unwrap().iter().enumerate() {
            writeln!(body, "{},{}", FIRST_YEAR + t as i32, v * scale).unwrap();
        }
        std::fs::write(dir.join(name), body).unwrap();
    };
    file("cpi.csv", "cpi_index", 1.0);
    file("dividend_yield.csv", "dividend_yield", 100.0);
    file("share_price.csv", "share_price_index", 1.0);
    file("long_rate.csv", "long_rate", 100.0);
    file("short_rate.csv", "short_rate", 1.0);
}

const DATA: &str = r#"
[data]
cpi = { path = "cpi.csv", unit = "index_level" }
dividend_yield = { path = "dividend_yield.csv", unit = "rate_percent" }
share_price = { path = "share_price.csv", unit = "index_level" }
long_rate = { path = "long_rate.csv", unit = "rate_percent" }
short_rate = { path = "short_rate.csv", unit = "rate_decimal" }
"#;

const CASCADE: &str = r#"
[models.inflation]
variant = "ar1"

[models.dividend_yield]
variant = "ma_inflation"

[models.dividend]
variant = "ma_inflation"

[models.long_rate]
variant = "ma_inflation"
fixed = { w_c = 1.0, d_c = 0.13 }

[models.short_rate]
variant = "ar1_spread"
"#;

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        std::fs::write(dir.path().join("saesg.toml"), config).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn saesg(&self, args: &[&str], out: &str) -> Output {
        Command::new(env!("CARGO_BIN_EXE_saesg"))
            .arg("--config")
            .arg(self.path("saesg.toml"))
            .arg("--out")
            .arg(self.path(out))
            .args(args)
            .output()
            .unwrap()
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }

    fn json(&self, name: &str) -> serde_json::Value {
        serde_json::from_str(&self.read(name)).unwrap()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::Digest;
    sha2::Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn inflation_fit_smoke() {
    let run = Run::new(&format!("seed = 1\n{DATA}\n[models.inflation]\nvariant = \"ar1\"\n"));
    let o = run.saesg(&["fit"], "out");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fit = run.json("out/fit_inflation.json");
    let params = fit["params"].as_array().unwrap();
    assert_eq!(params.len(), 3);
    assert!(params.iter().all(|p| p["std_error"].is_f64()));
    assert!(fit["diagnostics"]["jb_p_value"].is_f64());

    let manifest = run.json("out/manifest_fit.json");
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["command"], "fit");
    let config_bytes = std::fs::read(run.path("saesg.toml")).unwrap();
    assert_eq!(manifest["config_sha256"], sha256_hex(&config_bytes));
    let outputs = manifest["outputs"].as_object().unwrap();
    assert_eq!(outputs.len(), 2);
    for (name, hash) in outputs {
        let bytes = std::fs::read(run.path(&format!("out/{name}"))).unwrap();
        assert_eq!(hash.as_str().unwrap(), sha256_hex(&bytes), "{name}");
    }
}

#[test]
fn cascade_fit_reports_fixed_parameters() {
    let run = Run::new(&format!("{DATA}{CASCADE}"));
    let o = run.saesg(&["fit"], "out");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = run.read("out/fit_report.txt");
    assert_eq!(report.matches("(fixed parameter)").count(), 2);
    for series in ["inflation", "dividend_yield", "dividend", "long_rate", "short_rate"] {
        assert!(run.path(&format!("out/fit_{series}.json")).exists(), "{series}");
    }
    let long = run.json("out/fit_long_rate.json");
    let w_c = &long["params"][0];
    assert_eq!(w_c["name"], "w_c");
    assert_eq!(w_c["value"], 1.0);
    assert_eq!(w_c["fixed"], true);
}

#[test]
fn validation_errors_exit_2() {
    let cases = [
        // dividend model without the yield model it depends on
        format!("{DATA}[models.inflation]\nvariant = \"ar1\"\n[models.dividend]\nvariant = \"ma_inflation\"\n"),
        format!("{DATA}[models.inflation]\nvariant = \"ar2\"\n"),
        format!("{DATA}[models.long_rate]\nvariant = \"ma_inflation\"\nfixed = {{ w_q = 1.0 }}\n"),
        "[data]\ncpi = { path = \"missing.csv\", unit = \"index_level\" }\n".to_string(),
        "[data]\ncpi = { path = \"cpi.csv\", unit = \"rate_percent\" }\n".to_string(),
        "colour = 1\n".to_string(),
    ];
    let expected = ["dividend_yield", "ar2", "w_q", "missing.csv", "unit", "colour"];
    for (config, needle) in cases.iter().zip(expected) {
        let run = Run::new(config);
        let o = run.saesg(&["fit"], "out");
        assert_eq!(code(&o), 2, "{config}\n{}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{}", stderr(&o));
    }
}

#[test]
fn numerical_failure_exits_3() {
    let run = Run::new("[data]\ncpi = { path = \"flat.csv\", unit = \"index_level\" }\n[models.inflation]\nvariant = \"ar1\"\n");
    let mut body = String::from("year,value\n");
    for t in 0..30 {
        writeln!(body, "{},{}", 1990 + t, 100.0 * (0.05 * t as f64).exp()).unwrap();
    }
    std::fs::write(run.path("flat.csv"), body).unwrap();
    let o = run.saesg(&["fit"], "out");
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn partial_success_exits_4() {
    let run = Run::new(&format!(
        "{DATA}ilb = {{ path = \"ilb.csv\", unit = \"rate_percent\" }}\n[models.inflation]\nvariant = \"ar1\"\n[models.ilb]\nvariant = \"ar1\"\n"
    ));
    std::fs::write(run.path("ilb.csv"), "year,value\n2015,2.1\n2016,2.6\n2017,2.2\n").unwrap();
    let o = run.saesg(&["fit"], "out");
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(run.path("out/fit_inflation.json").exists());
    assert!(!run.path("out/fit_ilb.json").exists());
    assert!(run.read("out/fit_report.txt").contains("FAILED"));
    assert!(run.path("out/manifest_fit.json").exists());
}

#[test]
fn simulate_is_reproducible_byte_for_byte() {
    let config = format!("seed = 7\n{DATA}{CASCADE}\n[simulation]\nn_paths = 2000\nhorizon = 10\n");
    let run = Run::new(&config);
    let a = run.saesg(&["simulate"], "a");
    let b = run.saesg(&["simulate"], "b");
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0, "{}", stderr(&b));

    let manifest_a = run.json("a/manifest_simulate.json");
    let manifest_b = run.json("b/manifest_simulate.json");
    let strip = |mut m: serde_json::Value| {
        m.as_object_mut().unwrap().remove("created_unix");
        m
    };
    assert_eq!(strip(manifest_a.clone()), strip(manifest_b));
    let outputs: BTreeMap<String, serde_json::Value> =
        serde_json::from_value(manifest_a["outputs"].clone()).unwrap();
    assert!(outputs.contains_key("scenarios.bin") && outputs.contains_key("fan.csv"));
    for name in outputs.keys() {
        let x = std::fs::read(run.path(&format!("a/{name}"))).unwrap();
        let y = std::fs::read(run.path(&format!("b/{name}"))).unwrap();
        assert_eq!(x, y, "{name}");
    }

    let fan = run.read("a/fan.csv");
    let inflation_rows: Vec<&str> = fan.lines().filter(|l| l.contains(",inflation,")).collect();
    assert_eq!(inflation_rows.len(), 10);
    // first projected year follows the last observed year
    assert!(inflation_rows[0].starts_with(&format!("{},", FIRST_YEAR + YEARS as i32)));

    // a different seed changes the scenarios
    let c = run.saesg(&["simulate", "--seed", "8"], "c");
    assert_eq!(code(&c), 0);
    assert_ne!(run.read("a/fan.csv"), run.read("c/fan.csv"));
}

#[test]
fn stability_tables() {
    let run = Run::new(&format!("{DATA}{CASCADE}"));
    let o = run.saesg(&["stability", "--series", "inflation", "--min-obs", "25"], "out");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = run.read("out/stability_inflation_expanding_end.csv");
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("period_bound_year,mu_q_estimate,mu_q_se,mu_q_ci_low,mu_q_ci_high"));
    // inflation starts a year after the CPI index
    let first = FIRST_YEAR + 1 + 24;
    assert!(lines.next().unwrap().starts_with(&format!("{first},")));
    assert_eq!(csv.lines().count(), 1 + (YEARS - 1 - 24));

    let o = run.saesg(&["stability", "--series", "short_rate", "--direction", "expanding_start"], "out");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = run.read("out/stability_short_rate_expanding_start.csv");
    let last = FIRST_YEAR + YEARS as i32 - 1;
    assert!(csv.lines().nth(1).unwrap().starts_with(&format!("{},", last - 9)));

    let o = run.saesg(&["stability", "--series", "dividend", "--min-obs", "40"], "out");
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = run.saesg(&["stability", "--series", "inflation", "--min-obs", "500"], "out");
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn backtest_and_diagnose() {
    let run = Run::new(&format!("seed = 3\n{DATA}{CASCADE}\n[backtest]\nn_paths = 2000\n"));
    let split = FIRST_YEAR + YEARS as i32 - 11;
    let o = run.saesg(&["backtest", "--split-year", &split.to_string()], "out");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = run.read("out/backtest.csv");
    assert!(csv.lines().count() > 10);
    assert!(run.read("out/backtest_params.txt").contains("(fixed parameter)"));
    let report = run.json("out/backtest.json");
    assert_eq!(report["split_year"], split);

    let o = run.saesg(&["backtest", "--split-year", &(FIRST_YEAR + YEARS as i32 - 1).to_string()], "out");
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = run.saesg(&["diagnose", "--series", "dividend_yield"], "out");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let d = run.json("out/diagnose_dividend_yield.json");
    assert_eq!(d["kpss"]["decisions"].as_array().unwrap().len(), 3);
    assert!(d["residuals"]["skewness"].is_f64());
    assert!(String::from_utf8_lossy(&o.stdout).contains("KPSS"));
}
