//! Gelman-Rubin convergence diagnostic and posterior summaries.
//!
//! Percentiles use linear interpolation between order statistics at
//! position `h = (n - 1) q` (0-based), so the 2.5th percentile of 1..=100 is
//! 3.475.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::ChainStore;

/// Posterior summary of one scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub name: String,
    pub posterior_mean: f64,
    /// Posterior standard deviation, reported as the standard error.
    pub posterior_sd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `None` with a single chain.
    pub psrf: Option<f64>,
}

/// Unsplit potential scale reduction factor `sqrt(V / W)` with
/// `V = (n-1)/n W + B/n`.
///
/// Returns `+inf` when the within-chain variance is zero but chains differ,
/// and 1 when every draw of every chain is identical.
pub fn psrf(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::DiagnosticUnavailable(format!(
            "PSRF needs at least 2 chains, got {m}"
        )));
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::DiagnosticUnavailable(
            "PSRF needs equal-length chains of at least 2 draws".into(),
        ));
    }
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let grand = mean(&means);
    let b = nf * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let v = (nf - 1.0) / nf * w + b / nf;
    Ok((v / w).sqrt())
}

/// Percentile `q` in `[0, 1]` of `sorted` (ascending) by linear interpolation.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Summary of one parameter from its per-chain draws.
pub fn summarize_series(name: &str, chains: &[Vec<f64>]) -> SummaryRow {
    let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let n = pooled.len();
    let mu = mean(&pooled);
    let sd = if n > 1 {
        (pooled.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    pooled.sort_by(f64::total_cmp);
    SummaryRow {
        name: name.to_string(),
        posterior_mean: mu,
        posterior_sd: sd,
        ci_lo: percentile(&pooled, 0.025),
        ci_hi: percentile(&pooled, 0.975),
        psrf: psrf(chains).ok(),
    }
}

/// One row per parameter of `store`, in storage order.
pub fn summarize(store: &ChainStore) -> Vec<SummaryRow> {
    (0..store.n_params())
        .map(|p| {
            let chains: Vec<Vec<f64>> = (0..store.n_chains()).map(|c| store.series(c, p)).collect();
            summarize_series(&store.names[p], &chains)
        })
        .collect()
}

/// Rows whose PSRF exceeds `threshold`.
pub fn nonconverged(rows: &[SummaryRow], threshold: f64) -> Vec<&SummaryRow> {
    rows.iter().filter(|r| r.psrf.is_some_and(|v| !(v <= threshold))).collect()
}
