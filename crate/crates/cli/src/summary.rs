use std::fmt::Write;

use nle_core::pipeline::RunReport;

use crate::CliError;

pub const BASELINE: &str = "one_hot";

/// `(baseline - method) / baseline` in percent.
pub fn relative_reduction(baseline: f64, method: f64) -> f64 {
    100.0 * (baseline - method) / baseline
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub relative_reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    /// False when no baseline rows were present.
    pub has_baseline: bool,
    pub text: String,
    pub csv: String,
}

/// One row per method in first-appearance order: mean and sample standard
/// deviation of the error rate, plus the relative reduction against the
/// one-hot baseline when it is present.
pub fn render_summary(reports: &[RunReport]) -> Result<Summary, CliError> {
    if reports.is_empty() {
        return Err(CliError::Runtime("no reports to summarize".into()));
    }
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for r in reports {
        match groups.iter_mut().find(|(m, _)| *m == r.method) {
            Some((_, v)) => v.push(r.error_rate),
            None => groups.push((r.method.clone(), vec![r.error_rate])),
        }
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (mean, var.sqrt())
    };
    let baseline = groups
        .iter()
        .find(|(m, _)| m == BASELINE)
        .map(|(_, v)| stats(v).0);

    let rows: Vec<SummaryRow> = groups
        .iter()
        .map(|(method, v)| {
            let (mean, std) = stats(v);
            SummaryRow {
                method: method.clone(),
                runs: v.len(),
                mean,
                std,
                relative_reduction: baseline.map(|b| relative_reduction(b, mean)),
            }
        })
        .collect();

    let has_baseline = baseline.is_some();
    let width = rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
    let mut text = String::new();
    let mut csv = String::from("method,runs,mean_error,std_error");
    write!(text, "{:<width$}  {:>4}  {:>10}  {:>10}", "method", "runs", "mean_error", "std_error").unwrap();
    if has_baseline {
        write!(text, "  {:>14}", "rel_reduction%").unwrap();
        csv.push_str(",relative_reduction_pct");
    }
    text.push('\n');
    csv.push('\n');
    for r in &rows {
        write!(text, "{:<width$}  {:>4}  {:>10.4}  {:>10.4}", r.method, r.runs, r.mean, r.std).unwrap();
        write!(csv, "{},{},{},{}", r.method, r.runs, r.mean, r.std).unwrap();
        if let Some(red) = r.relative_reduction {
            write!(text, "  {:>14.2}", red).unwrap();
            write!(csv, ",{red}").unwrap();
        }
        text.push('\n');
        csv.push('\n');
    }
    if !has_baseline {
        writeln!(text, "note: no {BASELINE} rows; relative reduction column omitted").unwrap();
    }
    Ok(Summary { rows, has_baseline, text, csv })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(method: &str, err: f64) -> RunReport {
        RunReport {
            method: method.into(),
            seed: 0,
            error_rate: err,
            errors: 0,
            n_eval: 0,
            epochs: 0,
            loss_curve: vec![],
            wall_time_s: None,
        }
    }

    #[test]
    fn table_two_reduction() {
        let r = relative_reduction(20.37, 17.97);
        assert!((r - 11.782032400589102).abs() < 1e-9, "{r}");
        let s = render_summary(&[report("one_hot", 0.2037), report("nle_skl", 0.1797)]).unwrap();
        let skl = &s.rows[1];
        assert!((skl.relative_reduction.unwrap() - 11.78).abs() < 0.01);
        assert!(s.text.contains("11.78"));
    }

    #[test]
    fn equal_to_baseline_is_zero() {
        let s = render_summary(&[report("one_hot", 0.3), report("nle_l2", 0.3)]).unwrap();
        assert_eq!(s.rows[1].relative_reduction, Some(0.0));
    }

    #[test]
    fn no_baseline_omits_column() {
        let s = render_summary(&[report("nle_skl", 0.1), report("nle_skl", 0.2)]).unwrap();
        assert!(!s.has_baseline);
        assert!(s.rows[0].relative_reduction.is_none());
        assert_eq!(s.csv.lines().next().unwrap(), "method,runs,mean_error,std_error");
        assert!(s.text.contains("note: no one_hot rows"));
        assert!((s.rows[0].mean - 0.15).abs() < 1e-15);
        assert!((s.rows[0].std - 0.07071067811865475).abs() < 1e-12);
    }

    #[test]
    fn empty_reports_rejected() {
        assert!(render_summary(&[]).is_err());
    }
}
