use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::RobustnessFactors;
use crate::engine::config::ExperimentConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Mean batch loss over the honest workers.
    pub train_loss: f64,
    /// Held-out accuracy, present only in rounds where evaluation ran.
    pub eval_accuracy: Option<f64>,
    /// Aggregator wall time; zero unless `metrics.record_timing` is set.
    pub agg_time_ns: u64,
    /// LEGATO factors for this round; absent for other aggregators and on
    /// LEGATO's cold start.
    pub factors: Option<RobustnessFactors<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub config: ExperimentConfig,
    pub records: Vec<RoundRecord>,
    pub final_model_checksum: String,
}

impl MetricsLog {
    /// Accuracy of the last evaluated round.
    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.eval_accuracy)
    }

    /// `(round, accuracy)` for every evaluated round.
    pub fn accuracy_curve(&self) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.eval_accuracy.map(|a| (r.round, a)))
            .collect()
    }

    /// First evaluated round whose accuracy reaches `threshold`.
    pub fn first_round_reaching(&self, threshold: f64) -> Option<usize> {
        self.accuracy_curve()
            .into_iter()
            .find(|&(_, a)| a >= threshold)
            .map(|(r, _)| r)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,train_loss,eval_accuracy,agg_time_ns\n");
        for r in &self.records {
            let acc = r.eval_accuracy.map(|a| a.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{}", r.round, r.train_loss, acc, r.agg_time_ns)
                .expect("writing to a String");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::config(format!("metrics.json: {e}")))
    }

    /// Write `metrics.csv` and `metrics.json` into `dir`, each via a temporary
    /// file and a rename so a reader never sees a partial file.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("metrics.csv"), self.to_csv().as_bytes())?;
        write_atomic(&dir.join("metrics.json"), self.to_json().as_bytes())
    }
}

/// Write `bytes` to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
