//! Leakage quantification: ROUGE scores, corpus-level aggregates, PII
//! recovery and paired t-tests.

mod aggregate;
mod pii;
mod rouge;
mod stats;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use aggregate::{quantile_curve, threshold_exceedance, top_count, top_fraction_mean};
pub use pii::{pii_recovery, PiiProbe, PiiRecovery};
pub use rouge::{lcs_len, rouge_l, rouge_n, RougeScore};
pub use stats::{
    ln_gamma, paired_t_test, regularized_incomplete_beta, student_t_cdf, two_sided_p, TTestResult,
};

/// Default grid for quantile curves: 5%, 10%, ..., 100%.
pub fn default_quantile_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 20.0).collect()
}

/// Aggregates for one (round, task, scheme) batch of attack samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub round: usize,
    pub task: String,
    pub scheme: String,
    pub rouge_l: Vec<f64>,
    pub top10: f64,
    pub top30: f64,
    pub top50: f64,
    pub top100: f64,
    /// Percentages of samples with ROUGE-L strictly above 0.95 / 0.90.
    pub exceed095: f64,
    pub exceed090: f64,
    pub pii_total: usize,
    pub pii_recovered: usize,
}

impl LeakageReport {
    pub const CSV_HEADER: &'static str =
        "round,task,scheme,top10,top30,top50,top100,exceed095,exceed090,pii_total,pii_recovered";

    pub fn new(round: usize, task: &str, scheme: &str, rouge_l: Vec<f64>, pii: PiiRecovery) -> Result<Self> {
        if rouge_l.is_empty() {
            return Err(Error::Stats(format!("no samples for round {round} {task}/{scheme}")));
        }
        Ok(Self {
            round,
            task: task.to_string(),
            scheme: scheme.to_string(),
            top10: top_fraction_mean(&rouge_l, 0.1)?,
            top30: top_fraction_mean(&rouge_l, 0.3)?,
            top50: top_fraction_mean(&rouge_l, 0.5)?,
            top100: top_fraction_mean(&rouge_l, 1.0)?,
            exceed095: threshold_exceedance(&rouge_l, 0.95)?,
            exceed090: threshold_exceedance(&rouge_l, 0.90)?,
            pii_total: pii.total,
            pii_recovered: pii.recovered,
            rouge_l,
        })
    }

    pub fn pii_proportion(&self) -> f64 {
        if self.pii_total == 0 {
            0.0
        } else {
            self.pii_recovered as f64 / self.pii_total as f64
        }
    }

    /// One CSV row matching [`Self::CSV_HEADER`]; reals use shortest
    /// round-trip formatting.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.round,
            self.task,
            self.scheme,
            self.top10,
            self.top30,
            self.top50,
            self.top100,
            self.exceed095,
            self.exceed090,
            self.pii_total,
            self.pii_recovered
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_ordering_and_single_sample() {
        let r = LeakageReport::new(2, "zero_input", "basic", vec![0.2, 0.96, 0.5, 0.91], PiiRecovery::default()).unwrap();
        assert!(r.top10 >= r.top30 && r.top30 >= r.top50 && r.top50 >= r.top100);
        assert_eq!(r.exceed090, 50.0);
        assert_eq!(r.exceed095, 25.0);

        let one = LeakageReport::new(0, "t", "s", vec![0.37], PiiRecovery::default()).unwrap();
        assert_eq!([one.top10, one.top30, one.top50, one.top100], [0.37; 4]);
        assert_eq!(one.csv_row(), "0,t,s,0.37,0.37,0.37,0.37,0,0,0,0");
        assert_eq!(one.csv_row().split(',').count(), LeakageReport::CSV_HEADER.split(',').count());
        assert!(LeakageReport::new(0, "t", "s", vec![], PiiRecovery::default()).is_err());
    }

    #[test]
    fn grid_ends_at_one() {
        let g = default_quantile_grid();
        assert_eq!(g.len(), 20);
        assert_eq!(*g.last().unwrap(), 1.0);
    }
}
