//! Summary tables and per-epoch curves across run directories.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use copt_core::train::RunRecord;

pub const RUN_FILE: &str = "run.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

const SUMMARY_HEADER: [&str; 9] =
    ["run", "task", "protocol", "source_task", "epochs", "mean_objective", "std_objective", "mean_pm_std", "wall_clock_s"];
const CURVE_HEADER: [&str; 5] = ["run", "task", "epoch", "metric", "value"];

fn read_record(dir: &Path) -> Result<RunRecord> {
    let path = dir.join(RUN_FILE);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Writes one summary row per run (and task) to `out` and a long-format
/// curve table to `curves`. Runs without a readable record are skipped
/// with a warning.
pub fn write_report(run_dirs: &[PathBuf], out: &Path, curves: &Path) -> Result<usize> {
    let mut summary = csv::Writer::from_path(out).with_context(|| format!("creating {}", out.display()))?;
    let mut long = csv::Writer::from_path(curves).with_context(|| format!("creating {}", curves.display()))?;
    summary.write_record(SUMMARY_HEADER)?;
    long.write_record(CURVE_HEADER)?;
    let mut written = 0;
    for dir in run_dirs {
        let rec = match read_record(dir) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("warning: skipping {}: {e:#}", dir.display());
                continue;
            }
        };
        let run = dir.display().to_string();
        let protocol = rec.protocol.map(|p| p.to_string()).unwrap_or_else(|| "scratch".into());
        let source = rec.source_task.map(|t| t.to_string()).unwrap_or_default();
        for (task, m) in &rec.final_metrics {
            summary.write_record([
                run.clone(),
                task.to_string(),
                protocol.clone(),
                source.clone(),
                rec.epochs.len().to_string(),
                m.mean_objective.to_string(),
                m.std_objective.to_string(),
                format!("{:.2} ± {:.2}", m.mean_objective, m.std_objective),
                format!("{:.3}", rec.wall_clock_s),
            ])?;
        }
        for e in &rec.epochs {
            let series = [("train_loss", &e.train_loss), ("val_objective", &e.val_objective), ("val_std", &e.val_std)];
            for (metric, values) in series {
                for (task, v) in values {
                    long.write_record([run.clone(), task.to_string(), e.epoch.to_string(), metric.to_string(), v.to_string()])?;
                }
            }
        }
        written += 1;
    }
    summary.flush()?;
    long.flush()?;
    Ok(written)
}
