//! Output files, their hashes, and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use saesg::{FitResult, ModelParams};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Writes files into the output directory and remembers their hashes.
pub struct Outputs {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::File::create(&path)
            .and_then(|mut f| f.write_all(bytes))
            .map_err(|source| CliError::Output { path, source })?;
        self.hashes.insert(name.to_string(), sha256_hex(bytes));
        log::info!("wrote {}", self.dir.join(name).display());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes the manifest last so it covers every other output.
    pub fn finish(mut self, run: RunInfo) -> Result<(), CliError> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            engine_version: saesg::VERSION,
            command: run.command,
            arguments: run.arguments,
            config: run.config_path.display().to_string(),
            config_sha256: sha256_hex(&run.config_bytes),
            seed: run.seed,
            outputs: std::mem::take(&mut self.hashes),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        let name = format!("manifest_{}.json", manifest.command);
        self.write_json(&name, &manifest)
    }
}

pub struct RunInfo {
    pub command: String,
    pub arguments: BTreeMap<String, String>,
    pub config_path: PathBuf,
    pub config_bytes: Vec<u8>,
    pub seed: u64,
}

/// Everything needed to repeat a run. Only `created_unix` differs between
/// repeats.
#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    engine_version: &'static str,
    command: String,
    arguments: BTreeMap<String, String>,
    config: String,
    config_sha256: String,
    seed: u64,
    outputs: BTreeMap<String, String>,
    created_unix: u64,
}

fn param_rows(out: &mut String, params: &ModelParams) {
    for p in &params.params.params {
        let se = match (p.fixed, p.std_error) {
            (true, _) => "(fixed parameter)".to_string(),
            (false, Some(se)) => format!("({se:.4})"),
            (false, None) => "(n/a)".to_string(),
        };
        let _ = writeln!(out, "  {:<10} {:>10.4}  {se}", p.name, p.value);
    }
}

fn heading(params: &ModelParams) -> String {
    format!("{} ({})", params.spec.series(), params.spec.variant.name())
}

/// Parameter table with standard errors in brackets, followed by the
/// residual diagnostics.
pub fn fit_table(results: &[(saesg::Series, saesg::Result<FitResult>)]) -> String {
    let mut out = String::new();
    for (series, r) in results {
        match r {
            Ok(r) => {
                let params = ModelParams {
                    spec: r.spec.clone(),
                    params: r.params.clone(),
                };
                let _ = writeln!(out, "{}", heading(&params));
                let _ = writeln!(out, "  years      {}-{}", r.residuals.start_year, r.last_year);
                param_rows(&mut out, &params);
                for (k, v) in &r.derived {
                    let _ = writeln!(out, "  {k:<10} {v:>10.4}  (derived)");
                }
                let d = &r.diagnostics;
                let _ = writeln!(out, "  log-lik    {:>10.2}", r.log_likelihood);
                let _ = writeln!(out, "  n          {:>10}", r.n_obs);
                if let (Some(a), Some(b)) = (d.r_z.get(&1), d.r_z2.get(&1)) {
                    let _ = writeln!(out, "  r_z(1)     {a:>10.4}");
                    let _ = writeln!(out, "  r_z2(1)    {b:>10.4}");
                }
                let _ = writeln!(out, "  skewness   {:>10.4}", d.skewness);
                let _ = writeln!(out, "  kurtosis   {:>10.4}", d.kurtosis);
                let _ = writeln!(out, "  JB         {:>10.4}", d.jarque_bera);
                let _ = writeln!(out, "  p(JB)      {:>10.4}", d.jb_p_value);
                for w in &r.warnings {
                    let _ = writeln!(out, "  warning: {w}");
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{series}\n  FAILED: {e}");
            }
        }
        out.push('\n');
    }
    out
}

/// Parameter table of a set of (possibly overridden) models.
pub fn params_table(sets: &[ModelParams]) -> String {
    let mut out = String::new();
    for p in sets {
        let _ = writeln!(out, "{}", heading(p));
        param_rows(&mut out, p);
        out.push('\n');
    }
    out
}
