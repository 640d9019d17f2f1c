use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// One record per optimizer step.
///
/// `wall_time` is kept out of the JSON form so the metrics stream is a pure
/// function of config and seed; [`MetricsWriter`] logs it to a sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub mean_reward: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub var_delta: f64,
    pub batch_mean_offset: f64,
    pub zero_std_group_ratio: f64,
    pub sum_centered: f64,
    pub sum_weights: f64,
    #[serde(skip)]
    pub wall_time: f64,
}

/// Writes `m` as one JSON line.
pub fn write_metrics<W: Write>(w: &mut W, m: &StepMetrics) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, m)?;
    w.write_all(b"\n")
}

/// `metrics.jsonl` plus `timing.jsonl`, both flushed after every step.
pub struct MetricsWriter {
    metrics: BufWriter<File>,
    timing: BufWriter<File>,
    dir: PathBuf,
}

impl MetricsWriter {
    pub fn create(dir: &Path) -> Result<Self, HarnessError> {
        let open = |name: &str| {
            let path = dir.join(name);
            File::create(&path)
                .map(BufWriter::new)
                .map_err(|e| HarnessError::io(&path, e))
        };
        Ok(Self {
            metrics: open("metrics.jsonl")?,
            timing: open("timing.jsonl")?,
            dir: dir.to_path_buf(),
        })
    }

    pub fn write(&mut self, m: &StepMetrics) -> Result<(), HarnessError> {
        let path = self.dir.join("metrics.jsonl");
        write_metrics(&mut self.metrics, m)
            .and_then(|_| self.metrics.flush())
            .map_err(|e| HarnessError::io(&path, e))?;
        let path = self.dir.join("timing.jsonl");
        writeln!(self.timing, "{{\"step\":{},\"wall_time\":{}}}", m.step, m.wall_time)
            .and_then(|_| self.timing.flush())
            .map_err(|e| HarnessError::io(&path, e))
    }
}
