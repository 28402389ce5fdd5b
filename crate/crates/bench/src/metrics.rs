//! Success rates, step quartiles and runtime tables.
//!
//! Quartiles use linear interpolation between order statistics at rank
//! `p (n + 1)` (1-based, clamped to the sample range), so steps
//! `{1, 2, 2, 3}` give Q1 = 1.25, median = 2 and Q3 = 2.75.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::experiment::{FailureSteps, TrialRecord};

/// Quantile `p` of `values` as described in the module docs; `None` for an
/// empty sample.
pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let h = (p * (n as f64 + 1.0)).clamp(1.0, n as f64);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let a = v[lo - 1];
    Some(if lo >= n { a } else { a + frac * (v[lo] - a) })
}

/// One (policy, N) cell of the main table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRow {
    pub policy: String,
    pub n: usize,
    pub trials: usize,
    pub successes: usize,
    pub sr_percent: f64,
    pub steps_median: Option<f64>,
    pub steps_q1: Option<f64>,
    pub steps_q3: Option<f64>,
    /// How failed trials enter the step quartiles.
    pub failed_trial_steps: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub n: usize,
    pub trials: usize,
    pub successes: usize,
    pub sr_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeRow {
    pub policy: String,
    pub n: usize,
    pub actions: usize,
    pub mean_seconds_per_action: Option<f64>,
}

/// Records grouped by (label, N) in first-seen label order, N ascending.
fn cells(records: &[TrialRecord]) -> Vec<((String, usize), Vec<&TrialRecord>)> {
    let mut order: Vec<String> = Vec::new();
    let mut by: BTreeMap<(usize, usize), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        let li = order.iter().position(|l| *l == r.label).unwrap_or_else(|| {
            order.push(r.label.clone());
            order.len() - 1
        });
        by.entry((li, r.setup.n)).or_default().push(r);
    }
    by.into_iter().map(|((li, n), rs)| ((order[li].clone(), n), rs)).collect()
}

pub fn table1(records: &[TrialRecord], rule: FailureSteps) -> Vec<CellRow> {
    cells(records)
        .into_iter()
        .map(|((policy, n), rs)| {
            let successes = rs.iter().filter(|r| r.success).count();
            let steps: Vec<f64> = rs.iter().map(|r| r.counted_steps(rule) as f64).collect();
            CellRow {
                policy,
                n,
                trials: rs.len(),
                successes,
                sr_percent: 100.0 * successes as f64 / rs.len() as f64,
                steps_median: quantile(&steps, 0.5),
                steps_q1: quantile(&steps, 0.25),
                steps_q3: quantile(&steps, 0.75),
                failed_trial_steps: match rule {
                    FailureSteps::Horizon => "horizon",
                    FailureSteps::Recorded => "recorded",
                },
            }
        })
        .collect()
}

/// Success rates of every DARSS variant (full and ablated).
pub fn table2(records: &[TrialRecord]) -> Vec<AblationRow> {
    let darss: Vec<TrialRecord> =
        records.iter().filter(|r| r.setup.policy == staxray_core::policies::PolicySpec::Darss).cloned().collect();
    cells(&darss)
        .into_iter()
        .map(|((variant, n), rs)| {
            let successes = rs.iter().filter(|r| r.success).count();
            AblationRow { variant, n, trials: rs.len(), successes, sr_percent: 100.0 * successes as f64 / rs.len() as f64 }
        })
        .collect()
}

pub fn runtime(records: &[TrialRecord]) -> Vec<RuntimeRow> {
    cells(records)
        .into_iter()
        .map(|((policy, n), rs)| {
            let secs: Vec<f64> = rs.iter().flat_map(|r| r.action_seconds.iter().copied()).collect();
            let mean = (!secs.is_empty()).then(|| secs.iter().sum::<f64>() / secs.len() as f64);
            RuntimeRow { policy, n, actions: secs.len(), mean_seconds_per_action: mean }
        })
        .collect()
}

/// CSV text with a header row even when `rows` is empty.
pub fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String, csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub const TABLE1_HEADER: &[&str] =
    &["policy", "n", "trials", "successes", "sr_percent", "steps_median", "steps_q1", "steps_q3", "failed_trial_steps"];
pub const TABLE2_HEADER: &[&str] = &["variant", "n", "trials", "successes", "sr_percent"];
pub const RUNTIME_HEADER: &[&str] = &["policy", "n", "actions", "mean_seconds_per_action"];

/// The three report files.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table1: String,
    pub table2: String,
    pub runtime: String,
}

pub fn report(records: &[TrialRecord], rule: FailureSteps) -> Result<Report, csv::Error> {
    Ok(Report {
        table1: to_csv(&table1(records, rule), TABLE1_HEADER)?,
        table2: to_csv(&table2(records), TABLE2_HEADER)?,
        runtime: to_csv(&runtime(records), RUNTIME_HEADER)?,
    })
}

impl Report {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("table1.csv"), &self.table1)?;
        std::fs::write(dir.join("table2.csv"), &self.table2)?;
        std::fs::write(dir.join("runtime.csv"), &self.runtime)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate_linearly() {
        let s = [1.0, 2.0, 2.0, 3.0];
        assert_eq!(quantile(&s, 0.5), Some(2.0));
        assert_eq!(quantile(&s, 0.25), Some(1.25));
        assert_eq!(quantile(&s, 0.75), Some(2.75));
        assert_eq!(quantile(&[3.0, 1.0, 2.0, 2.0], 0.25), Some(1.25));
        assert_eq!(quantile(&[4.0], 0.25), Some(4.0));
        assert_eq!(quantile(&[1.0, 9.0], 0.0), Some(1.0));
        assert_eq!(quantile(&[1.0, 9.0], 1.0), Some(9.0));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn empty_records_give_header_only_tables() {
        let r = report(&[], FailureSteps::Horizon).unwrap();
        assert_eq!(r.table1, TABLE1_HEADER.join(",") + "\n");
        assert_eq!(r.table2, TABLE2_HEADER.join(",") + "\n");
        assert_eq!(r.runtime, RUNTIME_HEADER.join(",") + "\n");
    }
}
