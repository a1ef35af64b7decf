use crate::{Error, Result};

/// Number of items in the top `fraction` of `n`, at least one. A tiny slack
/// keeps products such as `0.3 * 10` from rounding up past the exact count.
pub fn top_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

fn check(scores: &[f64], fraction: f64) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Stats("empty score list".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Stats(format!("fraction must be in (0, 1], got {fraction}")));
    }
    Ok(())
}

fn sorted_desc(scores: &[f64]) -> Vec<f64> {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Mean of the `ceil(fraction * n)` largest scores.
pub fn top_fraction_mean(scores: &[f64], fraction: f64) -> Result<f64> {
    check(scores, fraction)?;
    let k = top_count(scores.len(), fraction);
    let top = &sorted_desc(scores)[..k];
    if top[0] == top[k - 1] {
        return Ok(top[0]);
    }
    Ok(top.iter().sum::<f64>() / k as f64)
}

/// Percentage of scores strictly above `threshold`.
pub fn threshold_exceedance(scores: &[f64], threshold: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Stats("empty score list".into()));
    }
    let above = scores.iter().filter(|s| **s > threshold).count();
    Ok(100.0 * above as f64 / scores.len() as f64)
}

/// For each fraction `x`, the smallest score among the top `x` share
/// (nearest-rank, no interpolation).
pub fn quantile_curve(scores: &[f64], grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let sorted = sorted_desc(scores);
    grid.iter()
        .map(|&x| {
            check(scores, x)?;
            Ok((x, sorted[top_count(sorted.len(), x) - 1]))
        })
        .collect()
}
