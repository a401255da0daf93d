//! Line-delimited metrics log: one JSON object per update, preceded by
//! a header line echoing the effective configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Result, RunError};

/// One record per policy update. Field names are part of the log
/// contract. Optional fields are `null` when the quantity was not
/// computed this update (evaluation intervals, disabled diagnostics,
/// or a faulted update).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub update: usize,
    pub env_steps: u64,
    pub wall_time: f64,
    pub train_return_mean: Option<f64>,
    pub eval_return_zero: Option<f64>,
    pub eval_return_random: Option<f64>,
    pub actor_loss: Option<f64>,
    pub value_loss: Option<f64>,
    pub cfm_loss_mean: Option<f64>,
    pub ratio_mean: Option<f64>,
    pub ratio_max: Option<f64>,
    pub ratio_clip_fraction: Option<f64>,
    pub grad_norm: Option<f64>,
    pub learning_rate: f64,
    pub entropy: Option<f64>,
    pub grad_cosine: Option<f64>,
    pub numeric_fault: bool,
}

pub fn header_line(cfg: &TrainConfig) -> String {
    format!("{{\"config\":{}}}", cfg.echo_json())
}

pub fn record_line(r: &MetricsRecord) -> String {
    serde_json::to_string(r).expect("metrics record serializes")
}

/// Collects log lines in memory and optionally streams them to a file.
pub struct MetricsLog {
    pub lines: Vec<String>,
    file: Option<BufWriter<File>>,
}

impl MetricsLog {
    pub fn in_memory() -> Self {
        MetricsLog { lines: Vec::new(), file: None }
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(RunError::io(path))?;
        Ok(MetricsLog { lines: Vec::new(), file: Some(BufWriter::new(file)) })
    }

    pub fn push(&mut self, line: String) -> Result<()> {
        if let Some(f) = &mut self.file {
            writeln!(f, "{line}")
                .and_then(|_| f.flush())
                .map_err(|e| RunError::Format(format!("metrics write failed: {e}")))?;
        }
        self.lines.push(line);
        Ok(())
    }

    pub fn contents(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }
}
