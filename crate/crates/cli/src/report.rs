//! Aggregates attack JSONL into per-round CSV tables, quantile and
//! threshold curves, and SVG charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fedleak_core::attack::{pii_probes, AttackRecord, Scheme, Task};
use fedleak_core::corpus::Corpus;
use fedleak_core::metrics::{
    default_quantile_grid, pii_recovery, quantile_curve, threshold_exceedance, LeakageReport, PiiRecovery,
};

use crate::config::ReportSection;
use crate::error::{CliError, Result};
use crate::svg::{Chart, Series};

pub fn read_records(path: &Path) -> Result<Vec<AttackRecord>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AttackRecord = serde_json::from_str(line).map_err(|e| CliError::Input {
            file: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// One report per (task, scheme, round), in that order. PII columns stay
/// zero without a corpus.
pub fn build_reports(records: &[AttackRecord], corpus: Option<&Corpus>) -> Result<Vec<LeakageReport>> {
    let mut groups: BTreeMap<(Task, Scheme, usize), Vec<AttackRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.task, r.scheme, r.round)).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|((task, scheme, round), recs)| {
            let pii = match corpus {
                Some(c) => pii_recovery(&pii_probes(&recs, c)),
                None => PiiRecovery::default(),
            };
            let scores = recs.iter().map(|r| r.rouge_l).collect();
            Ok(LeakageReport::new(round, task.as_str(), scheme.as_str(), scores, pii)?)
        })
        .collect()
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes `reports/<task>_<scheme>.csv` plus quantile and threshold tables,
/// and (optionally) charts under `plots/`. Returns the files written.
pub fn write_reports(reports: &[LeakageReport], settings: &ReportSection, out: &Path) -> Result<Vec<PathBuf>> {
    let mut by_stem: BTreeMap<(String, String), Vec<&LeakageReport>> = BTreeMap::new();
    for r in reports {
        by_stem.entry((r.task.clone(), r.scheme.clone())).or_default().push(r);
    }
    let mut written = Vec::new();
    let grid = default_quantile_grid();
    for ((task, scheme), rows) in &by_stem {
        let stem = format!("{task}_{scheme}");
        let mut table = format!("{}\n", LeakageReport::CSV_HEADER);
        let mut quant = String::from("round,fraction,score\n");
        let mut thresh = String::from("round,threshold,percent_above\n");
        for r in rows {
            table.push_str(&r.csv_row());
            table.push('\n');
            for (x, v) in quantile_curve(&r.rouge_l, &grid)? {
                let _ = writeln!(quant, "{},{x},{v}", r.round);
            }
            for &t in &settings.thresholds {
                let _ = writeln!(thresh, "{},{t},{}", r.round, threshold_exceedance(&r.rouge_l, t)?);
            }
        }
        for (name, body) in [
            (format!("reports/{stem}.csv"), table),
            (format!("reports/quantiles_{stem}.csv"), quant),
            (format!("reports/thresholds_{stem}.csv"), thresh),
        ] {
            let path = out.join(name);
            write(&path, &body)?;
            written.push(path);
        }
        if settings.svg {
            let picks = quantile_rounds(rows);
            let series: Vec<Series> = picks
                .iter()
                .map(|r| Series {
                    label: format!("round {}", r.round),
                    points: quantile_curve(&r.rouge_l, &grid).unwrap_or_default(),
                })
                .collect();
            let title = format!("ROUGE-L quantiles, {task} / {scheme}");
            let path = out.join(format!("plots/quantiles_{stem}.svg"));
            write(
                &path,
                &Chart {
                    title: &title,
                    x_label: "top fraction of samples",
                    y_label: "ROUGE-L",
                    y_range: Some((0.0, 1.0)),
                    series: &series,
                }
                .render(),
            )?;
            written.push(path);
        }
    }
    if settings.svg {
        let tasks: Vec<&String> = by_stem.keys().map(|(t, _)| t).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        for task in tasks {
            let series: Vec<Series> = by_stem
                .iter()
                .filter(|((t, _), _)| t == task)
                .flat_map(|((_, scheme), rows)| {
                    [("top10", 0usize), ("top50", 1)].map(|(name, col)| Series {
                        label: format!("{scheme} {name}"),
                        points: rows
                            .iter()
                            .map(|r| (r.round as f64, if col == 0 { r.top10 } else { r.top50 }))
                            .collect(),
                    })
                })
                .collect();
            let title = format!("{task} leakage by round");
            let path = out.join(format!("plots/{task}_leakage.svg"));
            write(
                &path,
                &Chart {
                    title: &title,
                    x_label: "round",
                    y_label: "mean ROUGE-L of top samples",
                    y_range: Some((0.0, 1.0)),
                    series: &series,
                }
                .render(),
            )?;
            written.push(path);
        }
    }
    Ok(written)
}

/// First, middle and last attacked rounds.
fn quantile_rounds<'a>(rows: &[&'a LeakageReport]) -> Vec<&'a LeakageReport> {
    let mut idx = vec![0, rows.len() / 2, rows.len().saturating_sub(1)];
    idx.dedup();
    idx.into_iter().filter_map(|i| rows.get(i).copied()).collect()
}

/// Reads every input file, aggregates, and writes the report tree under
/// `out`.
pub fn cmd_report(
    inputs: &[PathBuf],
    corpus: Option<&Corpus>,
    settings: &ReportSection,
    out: &Path,
) -> Result<Vec<LeakageReport>> {
    let mut records = Vec::new();
    for p in inputs {
        records.extend(read_records(p)?);
    }
    let reports = build_reports(&records, corpus)?;
    write_reports(&reports, settings, out)?;
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(round: usize, scheme: Scheme, idx: usize, score: f64) -> AttackRecord {
        AttackRecord {
            round,
            task: Task::ZeroInput,
            scheme,
            sample_idx: idx,
            prompt_text: String::new(),
            generated_text: "a b".into(),
            truth_text: String::new(),
            best_match_id: Some(0),
            doc_id: None,
            rouge1: score,
            rouge2: score,
            rouge_l: score,
        }
    }

    #[test]
    fn groups_by_task_scheme_round() {
        let recs = vec![
            rec(1, Scheme::Basic, 0, 0.2),
            rec(0, Scheme::Basic, 0, 0.1),
            rec(1, Scheme::Enhanced, 0, 0.4),
            rec(1, Scheme::Basic, 1, 0.6),
        ];
        let reps = build_reports(&recs, None).unwrap();
        let keys: Vec<(usize, &str)> = reps.iter().map(|r| (r.round, r.scheme.as_str())).collect();
        assert_eq!(keys, vec![(0, "basic"), (1, "basic"), (1, "enhanced")]);
        assert_eq!(reps[1].rouge_l, vec![0.2, 0.6]);
        assert!((reps[1].top100 - 0.4).abs() < 1e-15);
    }

    #[test]
    fn malformed_line_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        let good = serde_json::to_string(&rec(0, Scheme::Basic, 0, 0.5)).unwrap();
        fs::write(&p, format!("{good}\n\n{{\"round\": 1}}\n")).unwrap();
        match read_records(&p).unwrap_err() {
            CliError::Input { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn quantile_round_picks() {
        let reps = build_reports(&[rec(0, Scheme::Basic, 0, 0.1)], None).unwrap();
        let refs: Vec<&LeakageReport> = reps.iter().collect();
        assert_eq!(quantile_rounds(&refs).len(), 1);
    }
}
