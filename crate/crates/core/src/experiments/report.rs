use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::jsonl;
use crate::metrics::MetricReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    /// The full reports as one JSON document.
    Structured,
    /// CSV, one row per (run, subtask, metric).
    Tabular,
}

impl FromStr for ReportFormat {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "structured" | "json" => Ok(Self::Structured),
            "tabular" | "csv" => Ok(Self::Tabular),
            _ => Err(ExperimentError::Config(format!("unknown report format {s:?}"))),
        }
    }
}

const COLUMNS: [&str; 9] = ["run_id", "subtask", "metric", "mean", "ci_low", "ci_high", "n", "iterations", "estimate"];

/// Writes `reports` sorted by (run_id, subtask, metric). Output is a pure
/// function of the input, so re-emitting gives identical bytes.
pub fn emit_report(reports: &[MetricReport], path: &Path, format: ReportFormat) -> Result<usize, ExperimentError> {
    if reports.is_empty() {
        return Err(ExperimentError::Config("no reports to emit".into()));
    }
    let mut sorted = reports.to_vec();
    sorted.sort_by(|a, b| (&a.run_id, a.subtask.code()).cmp(&(&b.run_id, b.subtask.code())));
    for r in &mut sorted {
        r.metrics.sort_by(|a, b| a.name.cmp(&b.name));
    }
    let rows = sorted.iter().map(|r| r.metrics.len()).sum();
    match format {
        ReportFormat::Structured => jsonl::write_json(path, &sorted)?,
        ReportFormat::Tabular => {
            let io = |e: csv::Error| ExperimentError::Config(format!("writing {}: {e}", path.display()));
            let mut w = csv::Writer::from_path(path).map_err(io)?;
            w.write_record(COLUMNS).map_err(io)?;
            for r in &sorted {
                for m in &r.metrics {
                    w.write_record([
                        r.run_id.clone(),
                        r.subtask.code().to_string(),
                        m.name.clone(),
                        m.mean.to_string(),
                        m.ci_low.to_string(),
                        m.ci_high.to_string(),
                        m.n.to_string(),
                        m.iterations.to_string(),
                        m.estimate.to_string(),
                    ])
                    .map_err(io)?;
                }
            }
            w.flush().map_err(|e| ExperimentError::Io { path: path.to_path_buf(), source: e })?;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{MatcherConfig, MetricValue};
    use crate::taskgen::Subtask;

    fn report(run: &str, subtask: Subtask, names: &[&str]) -> MetricReport {
        MetricReport {
            run_id: run.into(),
            subtask,
            metrics: names
                .iter()
                .map(|n| MetricValue {
                    name: n.to_string(),
                    mean: 0.5,
                    ci_low: 0.25,
                    ci_high: 0.75,
                    n: 40,
                    iterations: 200,
                    estimate: 0.5,
                })
                .collect(),
            matcher_config: MatcherConfig::default(),
            seed: 1,
            skipped: vec![],
        }
    }

    #[test]
    fn six_metrics_six_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let reps = vec![
            report("a", Subtask::UncertaintyRecognition, &["accuracy_eu", "precision_eu", "recall_eu", "f1_eu"]),
            report("a", Subtask::DiseaseDiagnosis, &["diagnostic_accuracy"]),
            report("a", Subtask::UncertaintyExplanation, &["interpret_accuracy_eu"]),
        ];
        assert_eq!(emit_report(&reps, &p, ReportFormat::Tabular).unwrap(), 6);
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "run_id,subtask,metric,mean,ci_low,ci_high,n,iterations,estimate");
        assert_eq!(lines[1], "a,DD,diagnostic_accuracy,0.5,0.25,0.75,40,200,0.5");

        let first = std::fs::read(&p).unwrap();
        emit_report(&reps, &p, ReportFormat::Tabular).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), first);
    }

    #[test]
    fn merged_runs_sort() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let reps = vec![
            report("b", Subtask::DiseaseDiagnosis, &["diagnostic_accuracy"]),
            report("a", Subtask::UncertaintyRecognition, &["f1_eu", "accuracy_eu"]),
            report("a", Subtask::DiseaseDiagnosis, &["diagnostic_accuracy"]),
        ];
        emit_report(&reps, &p, ReportFormat::Tabular).unwrap();
        let keys: Vec<String> = std::fs::read_to_string(&p)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').take(3).collect::<Vec<_>>().join(","))
            .collect();
        assert_eq!(keys, ["a,DD,diagnostic_accuracy", "a,UR,accuracy_eu", "a,UR,f1_eu", "b,DD,diagnostic_accuracy"]);

        let j = dir.path().join("r.json");
        emit_report(&reps, &j, ReportFormat::Structured).unwrap();
        let back: Vec<MetricReport> = jsonl::read_json(&j).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[0].run_id, "a");
    }

    #[test]
    fn empty_is_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&[], &dir.path().join("x"), ReportFormat::Structured).is_err());
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Tabular);
    }
}
