//! Report files: evaluation reports as JSON, sweep tables as CSV.

use std::fs;
use std::path::Path;

use microlm::TokenId;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::metrics::ResponseOutcome;
use crate::sweep::SweepRow;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerInfo {
    pub text: String,
    pub ids: Vec<TokenId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub iterations: usize,
}

/// Evaluation report for a universal-attack run. Everything but
/// `timing.wall_seconds` is a pure function of (scenario, seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario_id: String,
    pub asr: f64,
    pub asr_v: f64,
    /// Empty-trigger control on the same test set.
    pub baseline_asr: f64,
    pub outcomes: Vec<ResponseOutcome>,
    pub trigger: TriggerInfo,
    pub timing: Timing,
    /// Echo of the optimizer configuration the run used.
    pub config: serde_json::Value,
}

impl EvalReport {
    /// Copy with wall-clock timing zeroed, for determinism comparisons.
    pub fn normalized(&self) -> EvalReport {
        let mut r = self.clone();
        r.timing.wall_seconds = 0.0;
        r
    }
}

pub fn write_eval_report(report: &EvalReport, path: &Path) -> Result<(), Error> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::json(path.display(), e))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path.display(), e))
}

pub fn read_eval_report(path: &Path) -> Result<EvalReport, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display(), e))
}

pub const SWEEP_CSV_HEADER: &str = "param,value,run,seed,site,goal,seconds,iterations,success";

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<(), Error> {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.4},{},{}\n",
            csv_field(&r.param),
            csv_field(&r.value),
            r.run,
            r.seed,
            csv_field(&r.site),
            csv_field(&r.goal),
            r.seconds,
            r.iterations,
            r.success
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display(), e))
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() != 9 {
            return Err(Error::BadScenario(format!(
                "{}: line {} has {} fields",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        rows.push(SweepRow {
            param: fields[0].clone(),
            value: fields[1].clone(),
            run: fields[2].parse().unwrap_or(0),
            seed: fields[3].parse().unwrap_or(0),
            site: fields[4].clone(),
            goal: fields[5].clone(),
            seconds: fields[6].parse().unwrap_or(0.0),
            iterations: fields[7].parse().unwrap_or(0),
            success: fields[8].trim() == "true",
        });
    }
    Ok(rows)
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if in_quotes && chars.peek() == Some(&'"') => {
                chars.next();
                cur.push('"');
            }
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sweep_writes_a_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&[], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{SWEEP_CSV_HEADER}\n"));
    }

    #[test]
    fn sweep_rows_round_trip_including_commas_in_goals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let rows = vec![SweepRow {
            param: "search_width".into(),
            value: "128".into(),
            run: 3,
            seed: 41,
            site: "binary".into(),
            goal: "click, then wait".into(),
            seconds: 12.3456,
            iterations: 77,
            success: true,
        }];
        write_sweep_csv(&rows, &path).unwrap();
        let back = read_sweep_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].goal, "click, then wait");
        assert_eq!(back[0].iterations, 77);
        assert!(back[0].success);
        assert!((back[0].seconds - 12.3456).abs() < 1e-9);
    }

    #[test]
    fn eval_report_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let report = EvalReport {
            scenario_id: "twui_binary".into(),
            asr: 0.83,
            asr_v: 0.75,
            baseline_asr: 0.01,
            outcomes: vec![],
            trigger: TriggerInfo {
                text: "x y".into(),
                ids: vec![4, 9],
            },
            timing: Timing {
                wall_seconds: 1.5,
                iterations: 12,
            },
            config: serde_json::json!({"search_width": 128}),
        };
        write_eval_report(&report, &path).unwrap();
        let back = read_eval_report(&path).unwrap();
        assert_eq!(back, report);
    }
}
