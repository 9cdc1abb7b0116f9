//! CSV output of replication results.

use std::path::Path;

use super::metrics::RuleScore;
use super::replicate::{ReplicationReport, RuleKind};
use crate::error::Result;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per scenario, threshold, rule and metric.
pub fn write_summary_csv(report: &ReplicationReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "threshold",
        "rule",
        "metric",
        "mean",
        "se",
        "n_defined",
        "n_undefined",
    ])?;
    for s in report.summary() {
        w.write_record([
            s.scenario.to_string(),
            s.threshold.to_string(),
            s.rule.to_string(),
            s.metric.to_string(),
            opt(s.mean),
            opt(s.se),
            s.n_defined.to_string(),
            s.n_undefined.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Wide layout for plotting: one row per scenario, metric and threshold, with
/// a mean and a standard-error column per rule.
pub fn write_plot_csv(report: &ReplicationReport, path: &Path) -> Result<()> {
    let summary = report.summary();
    let mut rules: Vec<RuleKind> = summary.iter().map(|s| s.rule).collect();
    rules.sort();
    rules.dedup();
    let mut keys: Vec<_> = summary
        .iter()
        .map(|s| (s.scenario, s.metric, s.threshold))
        .collect();
    keys.sort_by_key(|&(sc, m, t)| (sc, RuleScore::METRICS.iter().position(|x| *x == m), t));
    keys.dedup();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["scenario".to_string(), "metric".into(), "threshold".into()];
    for r in &rules {
        header.push(r.to_string());
        header.push(format!("{r}_se"));
    }
    w.write_record(&header)?;
    for (scenario, metric, threshold) in keys {
        let mut rec = vec![
            scenario.to_string(),
            metric.to_string(),
            threshold.to_string(),
        ];
        for r in &rules {
            let s = summary.iter().find(|s| {
                s.scenario == scenario
                    && s.metric == metric
                    && s.threshold == threshold
                    && s.rule == *r
            });
            rec.push(opt(s.and_then(|s| s.mean)));
            rec.push(opt(s.and_then(|s| s.se)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Raw per-replicate scores.
pub fn write_replicates_csv(report: &ReplicationReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "replicate",
        "threshold",
        "rule",
        "R",
        "V",
        "accuracy",
        "precision",
        "recall",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.scenario.to_string(),
            r.replicate.to_string(),
            r.threshold.to_string(),
            r.rule.to_string(),
            r.score.r.to_string(),
            r.score.v.to_string(),
            opt(r.score.accuracy),
            opt(r.score.precision),
            opt(r.score.recall),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_failures_csv(report: &ReplicationReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scenario", "replicate", "stage", "message"])?;
    for f in &report.failures {
        w.write_record([
            f.scenario.to_string(),
            f.replicate.to_string(),
            f.stage.clone(),
            f.message.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::ReplicateRow;
    use crate::sim::ScenarioId;

    fn report() -> ReplicationReport {
        let row = |replicate, r, precision| ReplicateRow {
            scenario: ScenarioId::E,
            replicate,
            threshold: 10,
            rule: RuleKind::Optimal,
            score: RuleScore {
                r,
                v: 1.0 - r,
                accuracy: Some(1.0),
                precision,
                recall: Some(0.5),
            },
        };
        ReplicationReport {
            rows: vec![row(0, 0.25, None), row(1, 0.75, Some(1.0))],
            failures: vec![],
            replications: 2,
        }
    }

    #[test]
    fn summary_csv_tracks_undefined_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_summary_csv(&report(), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("E,10,optimal,R,0.5,0.25,2,0\n"));
        assert!(text.contains("E,10,optimal,precision,1,,1,1\n"));
    }

    #[test]
    fn plot_csv_is_wide() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        write_plot_csv(&report(), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("scenario,metric,threshold,optimal,optimal_se")
        );
        assert_eq!(lines.next(), Some("E,R,10,0.5,0.25"));
        assert_eq!(text.lines().count(), 6);
    }
}
