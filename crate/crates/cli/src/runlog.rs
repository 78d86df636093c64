//! Run-log persistence: one self-describing JSON record per line in
//! `log.jsonl` (keys sorted, so identical runs produce byte-identical
//! logs), per-step wall time in the `timing.csv` sidecar (excluded from
//! the determinism contract), and periodic trainer checkpoints.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use shortcot_core::env::Category;
use shortcot_core::penalties::Strategy;
use shortcot_core::trainer::{StepRecord, StepSink, TrainerSnapshot};

use crate::checkpoint;
use crate::error::{CliError, Result};

pub fn record_to_json(r: &StepRecord) -> Value {
    json!({
        "epoch": r.epoch,
        "step": r.step,
        "prompt_id": r.prompt_id,
        "category": r.category.name(),
        "strategy": r.strategy.name(),
        "group_size": r.group_size,
        "rollouts": r.rollouts.iter().map(|s| json!({
            "cot_length": s.cot_length,
            "detection": s.detection,
            "alignment": s.alignment,
            "preference": s.preference,
            "model_sum": s.model_sum,
            "length_penalty": s.length_penalty,
            "total": s.total,
        })).collect::<Vec<_>>(),
        "advantage_mean": r.advantage_mean,
        "advantage_std": r.advantage_std,
        "objective": r.objective,
        "mean_kl": r.mean_kl,
        "update_norm": r.update_norm,
    })
}

/// File-backed sink: appends records to `log.jsonl`, wall times to
/// `timing.csv`, and writes `ckpt_<epoch>.bin` at snapshot requests.
pub struct FileSink {
    dir: PathBuf,
    log: BufWriter<File>,
    timing: BufWriter<File>,
    last: Instant,
}

impl FileSink {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let log = BufWriter::new(File::create(dir.join("log.jsonl"))?);
        let mut timing = BufWriter::new(File::create(dir.join("timing.csv"))?);
        writeln!(timing, "epoch,step,wall_ms")?;
        Ok(FileSink {
            dir: dir.to_path_buf(),
            log,
            timing,
            last: Instant::now(),
        })
    }

    pub fn finish(mut self) -> Result<()> {
        self.log.flush()?;
        self.timing.flush()?;
        Ok(())
    }
}

impl StepSink for FileSink {
    type Error = std::io::Error;

    fn record(&mut self, record: &StepRecord) -> std::result::Result<(), std::io::Error> {
        let wall_ms = self.last.elapsed().as_secs_f64() * 1e3;
        self.last = Instant::now();
        writeln!(self.log, "{}", record_to_json(record))?;
        writeln!(
            self.timing,
            "{},{},{:.3}",
            record.epoch, record.step, wall_ms
        )?;
        Ok(())
    }

    fn epoch_end(
        &mut self,
        snapshot: &TrainerSnapshot<'_>,
    ) -> std::result::Result<(), std::io::Error> {
        self.log.flush()?;
        let bytes = checkpoint::trainer_to_bytes(
            snapshot.epoch,
            snapshot.params,
            snapshot.ref_params,
            snapshot.adam,
        );
        let path = self.dir.join(format!("ckpt_{}.bin", snapshot.epoch));
        checkpoint::write_atomic(&path, &bytes)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(())
    }
}

/// Typed view of one parsed log line.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub epoch: u32,
    pub step: u32,
    pub prompt_id: u32,
    pub category: Category,
    pub strategy: Strategy,
    pub group_size: usize,
    pub cot_lengths: Vec<u32>,
    pub model_sums: Vec<f64>,
    pub length_penalties: Vec<f64>,
    pub totals: Vec<f64>,
    pub objective: f64,
    pub mean_kl: f64,
    pub update_norm: f64,
}

fn field<'v>(v: &'v Value, key: &str, context: &str) -> Result<&'v Value> {
    v.get(key)
        .ok_or_else(|| CliError::Data(format!("{context}: missing field {key:?}")))
}

fn f64_field(v: &Value, key: &str, context: &str) -> Result<f64> {
    field(v, key, context)?
        .as_f64()
        .ok_or_else(|| CliError::Data(format!("{context}: field {key:?} is not a number")))
}

fn u64_field(v: &Value, key: &str, context: &str) -> Result<u64> {
    field(v, key, context)?
        .as_u64()
        .ok_or_else(|| CliError::Data(format!("{context}: field {key:?} is not an integer")))
}

fn parse_record(line: &str, context: &str) -> Result<LogRecord> {
    let v: Value = serde_json::from_str(line)
        .map_err(|e| CliError::Data(format!("{context}: invalid JSON: {e}")))?;
    let rollouts = field(&v, "rollouts", context)?
        .as_array()
        .ok_or_else(|| CliError::Data(format!("{context}: rollouts is not an array")))?
        .clone();
    let mut cot_lengths = Vec::with_capacity(rollouts.len());
    let mut model_sums = Vec::with_capacity(rollouts.len());
    let mut length_penalties = Vec::with_capacity(rollouts.len());
    let mut totals = Vec::with_capacity(rollouts.len());
    for r in &rollouts {
        cot_lengths.push(u64_field(r, "cot_length", context)? as u32);
        model_sums.push(f64_field(r, "model_sum", context)?);
        length_penalties.push(f64_field(r, "length_penalty", context)?);
        totals.push(f64_field(r, "total", context)?);
    }
    let category_name = field(&v, "category", context)?
        .as_str()
        .ok_or_else(|| CliError::Data(format!("{context}: category is not a string")))?;
    let strategy_name = field(&v, "strategy", context)?
        .as_str()
        .ok_or_else(|| CliError::Data(format!("{context}: strategy is not a string")))?;
    Ok(LogRecord {
        epoch: u64_field(&v, "epoch", context)? as u32,
        step: u64_field(&v, "step", context)? as u32,
        prompt_id: u64_field(&v, "prompt_id", context)? as u32,
        category: Category::from_name(category_name)?,
        strategy: Strategy::from_name(strategy_name)?,
        group_size: u64_field(&v, "group_size", context)? as usize,
        cot_lengths,
        model_sums,
        length_penalties,
        totals,
        objective: f64_field(&v, "objective", context)?,
        mean_kl: f64_field(&v, "mean_kl", context)?,
        update_norm: f64_field(&v, "update_norm", context)?,
    })
}

/// Reads and parses a `log.jsonl` file.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read log {}: {e}", path.display())))?;
    let context = path.display().to_string();
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_record(l, &context))
        .collect()
}
