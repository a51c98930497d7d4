//! Orchestration behind the `flsim` binary: single runs, sweeps and
//! aggregator benchmarks, writing their results to an output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use flsim::bench::{bench_aggregators, bench_csv, BenchConfig};
use flsim::engine::config::sweep_key;
use flsim::engine::{run_experiment_with, write_atomic, RunOptions};
use flsim::{Error, ExperimentConfig, MetricsLog, Result};

/// A config file plus overrides and an output directory.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    /// `key=value` assignments applied over the file, in order.
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
}

impl RunManifest {
    /// Read, override and validate the experiment config.
    pub fn load_config(&self) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(&self.config_path).map_err(|e| Error::Io {
            path: self.config_path.clone(),
            source: e,
        })?;
        let mut cfg = ExperimentConfig::from_kv_text(&text)?;
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Worker-evaluation parallelism from `FLSIM_THREADS`; sequential when unset.
pub fn options_from_env() -> RunOptions {
    let threads = std::env::var("FLSIM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0);
    RunOptions { threads }
}

fn run_config(cfg: &ExperimentConfig, out_dir: &Path, options: RunOptions) -> Result<MetricsLog> {
    let log = run_experiment_with(cfg, options)?;
    log.write_to_dir(out_dir)?;
    Ok(log)
}

/// Run one experiment and write `metrics.csv` / `metrics.json`.
pub fn run(manifest: &RunManifest, options: RunOptions) -> Result<MetricsLog> {
    let cfg = manifest.load_config()?;
    run_config(&cfg, &manifest.out_dir, options)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub value: String,
    pub dir: PathBuf,
    pub result: std::result::Result<Option<f64>, String>,
}

fn dir_name(key: &str, value: &str) -> String {
    let short = key.rsplit('.').next().unwrap_or(key);
    let safe: String = value
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{short}={safe}")
}

/// One run per value of `key`, each in its own subdirectory, plus
/// `summary.csv`. A failing child does not stop the others; the returned
/// outcomes say which ones failed.
pub fn sweep(
    manifest: &RunManifest,
    key: &str,
    values: &[String],
    options: RunOptions,
) -> Result<Vec<SweepOutcome>> {
    let full_key = sweep_key(key)?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let base = manifest.load_config()?;
    fs::create_dir_all(&manifest.out_dir).map_err(|e| Error::Io {
        path: manifest.out_dir.clone(),
        source: e,
    })?;

    let mut outcomes = Vec::with_capacity(values.len());
    for value in values {
        let dir = manifest.out_dir.join(dir_name(full_key, value));
        let result = (|| {
            let mut cfg = base.clone();
            cfg.set(full_key, value)?;
            cfg.validate()?;
            fs::create_dir_all(&dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            write_atomic(&dir.join("config.txt"), cfg.to_kv_text().as_bytes())?;
            run_config(&cfg, &dir, options).map(|log| log.final_accuracy())
        })()
        .map_err(|e| format!("{}: {e}", e.kind()));
        outcomes.push(SweepOutcome {
            value: value.clone(),
            dir,
            result,
        });
    }

    let mut summary = format!("{full_key},final_accuracy,status\n");
    for o in &outcomes {
        let (acc, status) = match &o.result {
            Ok(acc) => (acc.map(|a| a.to_string()).unwrap_or_default(), "ok".to_string()),
            Err(e) => (String::new(), format!("error: {}", e.replace([',', '\n'], ";"))),
        };
        writeln!(summary, "{},{},{}", o.value, acc, status).expect("writing to a String");
    }
    write_atomic(&manifest.out_dir.join("summary.csv"), summary.as_bytes())?;
    Ok(outcomes)
}

/// Run the aggregator benchmark and write `bench.csv` into `out_dir`.
pub fn bench(cfg: &BenchConfig, out_dir: &Path) -> Result<String> {
    let rows = bench_aggregators(cfg)?;
    let csv = bench_csv(&rows);
    fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    write_atomic(&out_dir.join("bench.csv"), csv.as_bytes())?;
    Ok(csv)
}

/// The one-line error report printed on failure.
pub fn error_line(e: &Error) -> String {
    format!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "))
}
