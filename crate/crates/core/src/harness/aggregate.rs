use serde::{Deserialize, Serialize};

use super::experiment::{kappa_serde, Prepared};
use crate::error::{Error, Result};
use crate::master::RunLog;

/// Curves are kept at no more than this many points per seed.
pub const MAX_CURVE_POINTS: usize = 4096;

/// What the aggregate needs from one run; recomputable from its CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub final_regret: f64,
    pub restarts: usize,
    /// Cumulative regret at [`curve_rounds`] of the horizon.
    pub curve: Vec<f64>,
}

/// `ceil(k T / P)` for `k = 1..=P` with `P = min(T, 4096)`; always ends at `T`.
pub fn curve_rounds(horizon: usize) -> Vec<usize> {
    let points = horizon.min(MAX_CURVE_POINTS);
    (1..=points).map(|k| (k * horizon).div_ceil(points)).collect()
}

impl RunSummary {
    pub fn from_log(seed: u64, log: &RunLog) -> Result<Self> {
        let final_regret = log.dynamic_regret()?;
        let full = log.regret_curve();
        Ok(Self {
            seed,
            final_regret,
            restarts: log.restart_count(),
            curve: curve_rounds(log.horizon).into_iter().map(|t| full[t - 1]).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve {
    pub t: Vec<usize>,
    pub mean: Vec<f64>,
}

/// Mean final regret divided by the two reference rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    /// `sqrt(L T)`
    pub sqrt_lt: f64,
    /// `Delta^(1/3) T^(2/3) + sqrt(T)`
    pub delta_rate: f64,
    pub regret_over_sqrt_lt: f64,
    pub regret_over_delta_rate: f64,
}

impl Scaling {
    pub fn new(mean_regret: f64, switches: usize, delta_total: f64, horizon: usize) -> Self {
        let t = horizon as f64;
        let sqrt_lt = (switches as f64 * t).sqrt();
        let delta_rate = delta_total.cbrt() * t.powf(2.0 / 3.0) + t.sqrt();
        Self {
            sqrt_lt,
            delta_rate,
            regret_over_sqrt_lt: mean_regret / sqrt_lt,
            regret_over_delta_rate: mean_regret / delta_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub algorithm: String,
    pub env_kind: String,
    pub horizon: usize,
    pub delta: f64,
    #[serde(with = "kappa_serde")]
    pub kappa: f64,
    pub seeds: Vec<u64>,
    pub final_regret: Vec<f64>,
    pub restart_counts: Vec<usize>,
    pub mean: f64,
    pub median: f64,
    pub iqr: f64,
    pub mean_restarts: f64,
    pub delta_total: f64,
    pub switch_count: usize,
    pub scaling: Scaling,
    pub curve: RegretCurve,
}

impl AggregateReport {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("aggregate", e.to_string()))
    }
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summary statistics over runs, ordered by seed.
pub fn aggregate(prepared: &Prepared, runs: &[RunSummary]) -> Result<AggregateReport> {
    if runs.is_empty() {
        return Err(Error::IncompleteLog("no runs to aggregate".into()));
    }
    let mut runs = runs.to_vec();
    runs.sort_by_key(|r| r.seed);
    let n = runs.len() as f64;
    let final_regret: Vec<f64> = runs.iter().map(|r| r.final_regret).collect();
    let mut sorted = final_regret.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = final_regret.iter().sum::<f64>() / n;
    let restart_counts: Vec<usize> = runs.iter().map(|r| r.restarts).collect();
    let points = runs[0].curve.len();
    if runs.iter().any(|r| r.curve.len() != points) {
        return Err(Error::IncompleteLog("runs have different horizons".into()));
    }
    let curve_mean = (0..points)
        .map(|i| runs.iter().map(|r| r.curve[i]).sum::<f64>() / n)
        .collect();
    let horizon = prepared.env.horizon();
    Ok(AggregateReport {
        algorithm: prepared.spec.algorithm.name().into(),
        env_kind: prepared.env.kind().into(),
        horizon,
        delta: prepared.conf.delta,
        kappa: prepared.spec.kappa,
        seeds: runs.iter().map(|r| r.seed).collect(),
        mean,
        median: quantile(&sorted, 0.5),
        iqr: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
        mean_restarts: restart_counts.iter().sum::<usize>() as f64 / n,
        final_regret,
        restart_counts,
        delta_total: prepared.summary.delta_total,
        switch_count: prepared.summary.switch_count,
        scaling: Scaling::new(
            mean,
            prepared.summary.switch_count,
            prepared.summary.delta_total,
            horizon,
        ),
        curve: RegretCurve {
            t: curve_rounds(horizon),
            mean: curve_mean,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_of_small_samples() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&[7.0], 0.75), 7.0);
    }

    #[test]
    fn curve_rounds_cover_the_horizon() {
        assert_eq!(curve_rounds(5), vec![1, 2, 3, 4, 5]);
        let r = curve_rounds(10_000);
        assert_eq!(r.len(), MAX_CURVE_POINTS);
        assert_eq!(*r.last().unwrap(), 10_000);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn scaling_normalizers() {
        let s = Scaling::new(64.0, 4, 8.0, 1024);
        assert_eq!(s.sqrt_lt, 64.0);
        assert_eq!(s.regret_over_sqrt_lt, 1.0);
        assert!((s.delta_rate - (2.0 * 1024f64.powf(2.0 / 3.0) + 32.0)).abs() < 1e-9);
    }
}
