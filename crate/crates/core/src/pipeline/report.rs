use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Result;

use super::MethodSummary;

/// Outcome of one method on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub seed: u64,
    /// Exactly `errors / n_eval`.
    pub error_rate: f64,
    pub errors: usize,
    pub n_eval: usize,
    pub epochs: usize,
    pub loss_curve: Vec<f64>,
    pub wall_time_s: Option<f64>,
}

/// Build and configuration identity stamped on emitted reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub git_describe: String,
    pub config_hash: String,
}

pub const CSV_HEADER: [&str; 5] = ["method", "seed", "error_rate", "epochs", "wall_time_s"];

fn opt(v: Option<f64>) -> String {
    v.map(|t| t.to_string()).unwrap_or_default()
}

/// `method,seed,error_rate,epochs,wall_time_s`: one row per report, then one
/// `seed = mean` row per summary. Empty wall time means it was not recorded.
pub fn write_csv<W: Write>(out: W, reports: &[RunReport], summaries: &[MethodSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.method.clone(),
            r.seed.to_string(),
            r.error_rate.to_string(),
            r.epochs.to_string(),
            opt(r.wall_time_s),
        ])?;
    }
    for s in summaries {
        w.write_record([
            s.method.clone(),
            "mean".to_string(),
            s.mean_error.to_string(),
            s.mean_epochs.to_string(),
            opt(s.mean_wall_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    provenance: Option<&'a Provenance>,
    reports: &'a [RunReport],
    summaries: &'a [MethodSummary],
}

pub fn write_json<W: Write>(
    mut out: W,
    reports: &[RunReport],
    summaries: &[MethodSummary],
    provenance: Option<&Provenance>,
) -> Result<()> {
    let doc = ReportDocument {
        provenance,
        reports,
        summaries,
    };
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Convenience for writing both formats next to each other.
pub fn write_report_files(
    dir: &Path,
    stem: &str,
    reports: &[RunReport],
    summaries: &[MethodSummary],
    provenance: Option<&Provenance>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(
        std::fs::File::create(dir.join(format!("{stem}.csv")))?,
        reports,
        summaries,
    )?;
    write_json(
        std::fs::File::create(dir.join(format!("{stem}.json")))?,
        reports,
        summaries,
        provenance,
    )
}
