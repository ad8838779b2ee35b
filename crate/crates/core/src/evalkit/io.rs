use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CurvePoint, EpisodeRecord, MetricsReport, ValueErrorCurve};
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "variant,split,episodes,sr,spl,sr_gt5,spl_gt5";
pub const VALUE_ERROR_HEADER: &str = "t,mean,std,n";

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub split: String,
    pub report: MetricsReport,
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.6}"))
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        let m = &r.report;
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{},{}",
            r.variant,
            r.split,
            m.overall.episodes,
            m.overall.sr,
            m.overall.spl,
            opt(m.long.map(|s| s.sr)),
            opt(m.long.map(|s| s.spl)),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_value_error_csv(path: &Path, curve: &ValueErrorCurve) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{VALUE_ERROR_HEADER}")?;
    for p in &curve.points {
        writeln!(w, "{},{:.9},{:.9},{}", p.t, p.mean, p.std, p.n)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_value_error_csv(path: &Path) -> Result<ValueErrorCurve> {
    let bad = |reason: String| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != VALUE_ERROR_HEADER {
        return Err(bad(format!("expected header `{VALUE_ERROR_HEADER}`")));
    }
    let mut points = Vec::new();
    for row in reader.deserialize::<CurvePoint>() {
        points.push(row.map_err(|e| bad(e.to_string()))?);
    }
    Ok(ValueErrorCurve { points })
}

/// One JSON object per line.
pub fn write_records(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
