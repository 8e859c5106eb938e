//! Line-oriented batch commands behind the `gapo` binary.
//!
//! Every command reads from a [`BufRead`] and writes to a [`Write`], so the
//! binary only deals with argument parsing and file handles.

pub mod records;

use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use gapo_core::analysis::{classify_rewards, report_from_diagnostics, AnalysisConfig};
use gapo_core::sim::{run_experiment, TrainConfig};
use gapo_core::{compute_advantages, text_reward, AdvantageConfig, GapoError};

use records::{AdvantageRecord, GroupRecord, PairRecord, RewardRecord};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Stream(#[from] io::Error),
    #[error("{0}")]
    Config(#[from] GapoError),
    #[error("{failed} of {lines} input lines failed")]
    BadLines { failed: usize, lines: usize },
}

impl CliError {
    pub fn at(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

/// Counts from a streaming command.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub lines: usize,
    pub failed: usize,
}

impl StreamStats {
    pub fn into_result(self) -> Result<Self, CliError> {
        if self.failed == 0 {
            Ok(self)
        } else {
            Err(CliError::BadLines {
                failed: self.failed,
                lines: self.lines,
            })
        }
    }
}

fn write_json_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

/// Applies `f` to every non-blank line. Failing lines are reported to `diag`
/// with their 1-based line number and produce no output.
fn stream_lines<R, W, E, F>(
    input: R,
    out: &mut W,
    diag: &mut E,
    mut f: F,
) -> io::Result<StreamStats>
where
    R: BufRead,
    W: Write,
    E: Write,
    F: FnMut(&str, &mut W) -> Result<(), String>,
{
    let mut stats = StreamStats::default();
    for (index, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        if let Err(msg) = f(&line, out) {
            stats.failed += 1;
            writeln!(diag, "line {}: {msg}", index + 1)?;
        }
    }
    out.flush()?;
    Ok(stats)
}

/// One [`AdvantageRecord`] per input [`GroupRecord`], in input order.
pub fn cmd_advantage<R: BufRead, W: Write, E: Write>(
    input: R,
    mut out: W,
    diag: &mut E,
    config: &AdvantageConfig,
) -> Result<StreamStats, CliError> {
    config.validate()?;
    let analysis = AnalysisConfig {
        tau: config.tau,
        ..AnalysisConfig::default()
    };
    let estimator = config.estimator.as_str();
    let stats = stream_lines(input, &mut out, diag, |line, out| {
        let record: GroupRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let group = record.into_group().map_err(|e| e.to_string())?;
        let adv = compute_advantages(&group, config).map_err(|e| e.to_string())?;
        let label = classify_rewards(&group.prompt_id, &group.rewards, &analysis)
            .map_err(|e| e.to_string())?
            .label;
        let record = AdvantageRecord::new(group.prompt_id, estimator, config.tau, adv, label);
        write_json_line(out, &record).map_err(|e| e.to_string())
    })?;
    Ok(stats)
}

/// One `{"reward": r}` per `{"predicted", "truth"}` pair.
pub fn cmd_reward<R: BufRead, W: Write, E: Write>(
    input: R,
    mut out: W,
    diag: &mut E,
) -> Result<StreamStats, CliError> {
    let stats = stream_lines(input, &mut out, diag, |line, out| {
        let pair: PairRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let reward = text_reward(&pair.predicted, &pair.truth).get();
        write_json_line(out, &RewardRecord { reward }).map_err(|e| e.to_string())
    })?;
    Ok(stats)
}

/// Writes a single pretty-printed batch report. Bad lines are reported and
/// left out of the report.
pub fn cmd_analyze<R: BufRead, W: Write, E: Write>(
    input: R,
    mut out: W,
    diag: &mut E,
    config: &AnalysisConfig,
) -> Result<StreamStats, CliError> {
    config.validate()?;
    let mut diagnostics = Vec::new();
    let stats = stream_lines(input, &mut io::sink(), diag, |line, _| {
        let record: GroupRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let group = record.into_group().map_err(|e| e.to_string())?;
        let d = classify_rewards(&group.prompt_id, &group.rewards, config)
            .map_err(|e| e.to_string())?;
        diagnostics.push(d);
        Ok(())
    })?;
    let report = report_from_diagnostics(diagnostics);
    serde_json::to_writer_pretty(&mut out, &report).map_err(io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(stats)
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

/// Runs the experiment described by the key-value file at `config_path`, and
/// writes `metrics.jsonl` and `summary.json` into `out_dir`.
pub fn cmd_simulate(config_path: &Path, out_dir: &Path) -> Result<TrainConfig, CliError> {
    let text = fs::read_to_string(config_path).map_err(CliError::at(config_path))?;
    let config = TrainConfig::from_kv_str(&text)?;
    let experiment = run_experiment(&config)?;

    fs::create_dir_all(out_dir).map_err(CliError::at(out_dir))?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let file = File::create(&metrics_path).map_err(CliError::at(&metrics_path))?;
    let mut writer = BufWriter::new(file);
    for m in &experiment.metrics {
        write_json_line(&mut writer, m).map_err(CliError::at(&metrics_path))?;
    }
    writer.flush().map_err(CliError::at(&metrics_path))?;

    let summary_path = out_dir.join(SUMMARY_FILE);
    let mut body = serde_json::to_string_pretty(&experiment.summary).map_err(io::Error::from)?;
    body.push('\n');
    fs::write(&summary_path, body).map_err(CliError::at(&summary_path))?;
    Ok(config)
}
