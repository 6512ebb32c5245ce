//! Choosing the number of factors.
//!
//! One chain runs per candidate K; the per-K log-likelihood is estimated as
//! the mean of the kept draws' full log-likelihoods, and K is selected by
//! maximizing the second-order finite difference
//! `2*L(K) - L(K-1) - L(K+1)` over the interior of the grid: the sharpest
//! drop in marginal improvement marks the elbow.

use crate::error::{Error, Result};
use crate::gibbs::{run_chain, ChainConfig, ChainOutput};
use crate::model::{CountMatrix, Hyperparameters};
use crate::posterior::quantile_type7;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Per-K estimates and the selected model order.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    /// Candidate grid `k_min..=k_max`.
    pub k_grid: Vec<usize>,
    /// Mean post-burn-in log-likelihood per K.
    pub loglik_mean: Vec<f64>,
    /// Empirical 95% interval of the log-likelihood trace per K.
    pub loglik_ci: Vec<(f64, f64)>,
    /// Second difference for each interior K (length `k_grid.len() - 2`).
    pub delta2: Vec<f64>,
    /// Selected K; always interior to the grid.
    pub k_hat: usize,
}

/// Mean and empirical 95% interval of a chain's log-likelihood trace.
pub fn estimate_loglik(chain: &ChainOutput) -> Result<(f64, (f64, f64))> {
    let trace = &chain.loglik_trace;
    if trace.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 kept draws to estimate the log-likelihood, got {}",
            trace.len()
        )));
    }
    let mean = trace.iter().sum::<f64>() / trace.len() as f64;
    let mut sorted = trace.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite log-likelihoods"));
    let lo = quantile_type7(&sorted, 0.025);
    let hi = quantile_type7(&sorted, 0.975);
    Ok((mean, (lo, hi)))
}

/// Second-order finite differences of a per-K sequence.
pub fn second_difference(loglik: &[f64]) -> Result<Vec<f64>> {
    if loglik.len() < 3 {
        return Err(Error::invalid(format!(
            "second difference needs at least 3 points, got {}",
            loglik.len()
        )));
    }
    Ok(loglik
        .windows(3)
        .map(|w| 2.0 * w[1] - w[0] - w[2])
        .collect())
}

/// Run one chain per K in `k_min..=k_max` and select K by the second
/// difference of the estimated log-likelihood. Ties break toward smaller K.
pub fn select_k(
    y: &CountMatrix,
    k_min: usize,
    k_max: usize,
    hp: &Hyperparameters,
    cfg: &ChainConfig,
) -> Result<SelectionReport> {
    if k_min < 1 || k_min + 2 > k_max {
        return Err(Error::invalid(format!(
            "grid must satisfy 1 <= k_min and k_min + 2 <= k_max, got [{k_min}, {k_max}]"
        )));
    }
    let k_grid: Vec<usize> = (k_min..=k_max).collect();
    let run = |&k: &usize| -> Result<ChainOutput> {
        run_chain(y, k, hp, cfg).map_err(|e| Error::ChainFailed {
            k,
            source: Box::new(e),
        })
    };
    #[cfg(feature = "parallel")]
    let chains: Result<Vec<ChainOutput>> = k_grid.par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let chains: Result<Vec<ChainOutput>> = k_grid.iter().map(run).collect();
    let chains = chains?;

    let mut loglik_mean = Vec::with_capacity(k_grid.len());
    let mut loglik_ci = Vec::with_capacity(k_grid.len());
    for chain in &chains {
        let (mean, ci) = estimate_loglik(chain)?;
        loglik_mean.push(mean);
        loglik_ci.push(ci);
    }
    let delta2 = second_difference(&loglik_mean)?;
    let mut best = 0;
    for (i, &d) in delta2.iter().enumerate() {
        if d > delta2[best] {
            best = i;
        }
    }
    let k_hat = k_grid[best + 1];
    Ok(SelectionReport {
        k_grid,
        loglik_mean,
        loglik_ci,
        delta2,
        k_hat,
    })
}
