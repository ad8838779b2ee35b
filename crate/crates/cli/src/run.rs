//! Run directories, configuration resolution and shared file names.

use std::path::{Path, PathBuf};

use gve_core::agent::Agent;
use gve_core::config::{RunConfig, RESOLVED_FILE};
use gve_core::evalkit::{
    value_error_curve, write_metrics_csv, write_records, write_value_error_csv, EpisodeRecord, MetricsReport,
    MetricsRow, MIN_CURVE_SAMPLES,
};
use gve_core::{Error, Result};

use crate::ConfigArgs;

/// Root for relative `output_dir` values; the working directory when unset.
pub const OUTPUT_ROOT_ENV: &str = "GVE_OUTPUT_ROOT";

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const PROGRESS_FILE: &str = "progress.csv";
pub const GRAPH_FILE: &str = "graph.json";
pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const VALUE_ERROR_FILE: &str = "value_error.csv";

pub fn resolve_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    apply_overrides(&mut cfg, &args.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn apply_overrides(cfg: &mut RunConfig, overrides: &[String]) -> Result<()> {
    for kv in overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("`--set {kv}`: expected KEY=VALUE")))?;
        cfg.set(k, v)?;
    }
    Ok(())
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from)
}

pub fn run_dir(cfg: &RunConfig) -> PathBuf {
    output_root().join(&cfg.output_dir)
}

/// Reads the configuration a run directory was created with.
pub fn load_run_config(dir: &Path) -> Result<RunConfig> {
    let path = dir.join(RESOLVED_FILE);
    if !path.exists() {
        return Err(Error::Config(format!("{} has no {RESOLVED_FILE}", dir.display())));
    }
    RunConfig::load(&path)
}

/// Episode records, a metrics row and the value-error curve for one
/// evaluation, written under `dir`.
pub fn write_evaluation(dir: &Path, cfg: &RunConfig, agent: &Agent, split: &str, records: &[EpisodeRecord]) -> Result<MetricsReport> {
    std::fs::create_dir_all(dir)?;
    write_records(&dir.join(EPISODES_FILE), records)?;
    let report = MetricsReport::from_records(records);
    write_metrics_csv(
        &dir.join(METRICS_FILE),
        &[MetricsRow {
            variant: agent.variant.label().to_string(),
            split: split.to_string(),
            report: report.clone(),
        }],
    )?;
    let curve = value_error_curve(records, cfg.a3c.gamma, cfg.error_kind, cfg.ground_truth(), MIN_CURVE_SAMPLES);
    write_value_error_csv(&dir.join(VALUE_ERROR_FILE), &curve)?;
    Ok(report)
}

pub fn print_report(label: &str, report: &MetricsReport) {
    let long = report
        .long
        .map_or_else(|| "n/a".to_string(), |s| format!("SR {:.3} SPL {:.3} ({} episodes)", s.sr, s.spl, s.episodes));
    println!(
        "{label}: SR {:.3} SPL {:.3} over {} episodes; L>5: {long}",
        report.overall.sr, report.overall.spl, report.overall.episodes
    );
    for (room, s) in &report.per_room {
        println!("  {:<12} SR {:.3} SPL {:.3} ({})", room.label(), s.sr, s.spl, s.episodes);
    }
}
