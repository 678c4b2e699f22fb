//! Error counts, Wilson intervals and slope fits.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

const Z95: f64 = 1.959_963_984_540_054;

/// Error frequency at one blocklength with a 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub n: usize,
    pub trials: u64,
    pub errors: u64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl TrialStats {
    pub fn new(n: usize, trials: u64, errors: u64) -> Result<Self> {
        if trials == 0 || errors > trials {
            return invalid("need 0 <= errors <= trials and trials >= 1");
        }
        let (ci_lo, ci_hi) = wilson(errors, trials);
        Ok(TrialStats { n, trials, errors, ci_lo, ci_hi })
    }

    pub fn p_hat(&self) -> f64 {
        self.errors as f64 / self.trials as f64
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_hi - self.ci_lo)
    }

    /// Whether the two intervals intersect.
    pub fn overlaps(&self, other: &TrialStats) -> bool {
        self.ci_lo <= other.ci_hi && other.ci_lo <= self.ci_hi
    }
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson(errors: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    (lo, (center + half).min(1.0))
}

/// Slope of `−ln P̂_e` against `n`, in nats per symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum EmpiricalExponent {
    Slope(f64),
    /// No errors anywhere: the exponent is at least `ln(trials) / n` at the
    /// largest blocklength.
    AtLeast(f64),
}

/// Least-squares slope of `−ln P̂_e` over blocklengths. Rows with zero
/// errors use `P̂_e = 1 / (2 trials)`. Finite-n polynomial factors bias the
/// slope downward.
pub fn empirical_exponent(stats: &[TrialStats]) -> Result<EmpiricalExponent> {
    if stats.len() < 3 {
        return invalid("need at least three blocklengths");
    }
    if stats.iter().all(|s| s.errors == 0) {
        let top = stats.iter().max_by_key(|s| s.n).expect("non-empty");
        return Ok(EmpiricalExponent::AtLeast((top.trials as f64).ln() / top.n as f64));
    }
    let pts: Vec<(f64, f64)> = stats
        .iter()
        .map(|s| {
            let p = if s.errors == 0 { 0.5 / s.trials as f64 } else { s.p_hat() };
            (s.n as f64, -p.ln())
        })
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return invalid("blocklengths must differ");
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(EmpiricalExponent::Slope(sxy / sxx))
}
