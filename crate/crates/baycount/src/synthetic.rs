//! Ground-truth data generators and recovery scoring.
//!
//! Scenario one simulates from the model itself; scenario two draws the
//! expression profiles as unnormalized gammas and omits the per-sample scale,
//! probing robustness to misspecification. In both, `p_j` is set so the
//! per-sample variance-to-mean ratio `p_j/(1-p_j)` is uniform on
//! `[100, 1e6]`, keeping the counts heavily over-dispersed.

use itertools::Itertools;
use ndarray::Array2;

use crate::dist::{sample_dirichlet, sample_gamma, sample_negative_binomial};
use crate::error::{Error, Result};
use crate::model::CountMatrix;
use crate::posterior::IntervalMatrix;
use crate::rng::RngStream;

const TAG_W: u64 = 1;
const TAG_THETA: u64 = 2;
const TAG_ZETA: u64 = 3;
const TAG_ALPHA: u64 = 4;
const TAG_P: u64 = 5;
const TAG_COUNTS: u64 = 6;

const RATIO_LO: f64 = 100.0;
const RATIO_HI: f64 = 1e6;

/// Which generator produced a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    One,
    Two,
}

/// A simulated dataset together with the parameters that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    pub y: CountMatrix,
    /// Expression profiles: simplex columns in scenario one, raw positive
    /// entries (no column-sum constraint) in scenario two.
    pub w_true: Array2<f64>,
    pub theta_true: Array2<f64>,
    pub alpha_true: Vec<f64>,
    pub lambda_true: f64,
    /// Present only in scenario one.
    pub zeta_true: Option<Vec<f64>>,
    pub p_true: Vec<f64>,
    pub scenario: Scenario,
}

impl SyntheticTruth {
    pub fn k0(&self) -> usize {
        self.w_true.ncols()
    }
}

fn check_sizes(g: usize, s: usize, k0: usize) -> Result<()> {
    if g == 0 || s == 0 || k0 == 0 {
        return Err(Error::invalid("g, s, k0 must all be at least 1".to_string()));
    }
    Ok(())
}

fn draw_theta(k0: usize, s: usize, stream: &RngStream) -> Result<Array2<f64>> {
    let mut rng = stream.rng();
    let mut theta = Array2::zeros((k0, s));
    for j in 0..s {
        let col = sample_dirichlet(&vec![0.5; k0], &mut rng)?;
        for kk in 0..k0 {
            theta[(kk, j)] = col[kk];
        }
    }
    Ok(theta)
}

fn draw_p(s: usize, stream: &RngStream) -> Vec<f64> {
    use rand::Rng;
    let mut rng = stream.rng();
    (0..s)
        .map(|_| {
            let ratio = RATIO_LO + rng.gen::<f64>() * (RATIO_HI - RATIO_LO);
            ratio / (1.0 + ratio)
        })
        .collect()
}

fn draw_counts(
    shapes: &Array2<f64>,
    p: &[f64],
    stream: &RngStream,
) -> Result<Array2<u64>> {
    let (g, s) = shapes.dim();
    let mut rng = stream.rng();
    let mut y = Array2::zeros((g, s));
    for i in 0..g {
        for j in 0..s {
            y[(i, j)] = sample_negative_binomial(shapes[(i, j)].max(1e-300), p[j], &mut rng)?;
        }
    }
    Ok(y)
}

/// Redraw only the counts of an existing truth, under a fresh seed.
pub fn resample_counts(truth: &SyntheticTruth, seed: u64) -> Result<CountMatrix> {
    let g = truth.w_true.nrows();
    let s = truth.theta_true.ncols();
    let k0 = truth.k0();
    let mut shapes = Array2::zeros((g, s));
    for i in 0..g {
        for j in 0..s {
            let mut dot = 0.0;
            for kk in 0..k0 {
                dot += truth.w_true[(i, kk)] * truth.theta_true[(kk, j)];
            }
            let factor_part = match &truth.zeta_true {
                Some(z) => z[j] * dot,
                None => dot,
            };
            shapes[(i, j)] = truth.lambda_true * truth.alpha_true[i] + factor_part;
        }
    }
    let vals = draw_counts(&shapes, &truth.p_true, &RngStream::new(seed).substream(TAG_COUNTS))?;
    CountMatrix::new(
        vals,
        truth.y.gene_ids().to_vec(),
        truth.y.sample_ids().to_vec(),
    )
}

/// Simulate from the model itself: `phi_k ~ Dirichlet(0.05)`,
/// `theta_j ~ Dirichlet(0.5)`, `zeta_j ~ Gamma(0.5*K0, 1)`, `lambda = 1`,
/// `alpha ~ Dirichlet(0.5)`.
pub fn generate_scenario1(g: usize, s: usize, k0: usize, seed: u64) -> Result<SyntheticTruth> {
    check_sizes(g, s, k0)?;
    let root = RngStream::new(seed);
    let mut w_rng = root.substream(TAG_W).rng();
    let mut phi = Array2::zeros((g, k0));
    for kk in 0..k0 {
        let col = sample_dirichlet(&vec![0.05; g], &mut w_rng)?;
        for i in 0..g {
            phi[(i, kk)] = col[i];
        }
    }
    let theta = draw_theta(k0, s, &root.substream(TAG_THETA))?;
    let mut zeta_rng = root.substream(TAG_ZETA).rng();
    let zeta: Vec<f64> = (0..s)
        .map(|_| sample_gamma(0.5 * k0 as f64, 1.0, &mut zeta_rng))
        .collect::<Result<_>>()?;
    let lambda = 1.0;
    let alpha = sample_dirichlet(&vec![0.5; g], &mut root.substream(TAG_ALPHA).rng())?;
    let p = draw_p(s, &root.substream(TAG_P));

    let mut shapes = Array2::zeros((g, s));
    for i in 0..g {
        for j in 0..s {
            let mut dot = 0.0;
            for kk in 0..k0 {
                dot += phi[(i, kk)] * theta[(kk, j)];
            }
            shapes[(i, j)] = lambda * alpha[i] + zeta[j] * dot;
        }
    }
    let vals = draw_counts(&shapes, &p, &root.substream(TAG_COUNTS))?;
    Ok(SyntheticTruth {
        y: CountMatrix::from_values(vals)?,
        w_true: phi,
        theta_true: theta,
        alpha_true: alpha,
        lambda_true: lambda,
        zeta_true: Some(zeta),
        p_true: p,
        scenario: Scenario::One,
    })
}

/// Simulate off-model: `w_ik ~ Gamma(0.05, 10)` with no column-sum
/// constraint and no per-sample scale; `y_ij ~ NB(lambda*alpha_i +
/// sum_k w_ik theta_kj, p_j)`.
pub fn generate_scenario2(g: usize, s: usize, k0: usize, seed: u64) -> Result<SyntheticTruth> {
    check_sizes(g, s, k0)?;
    let root = RngStream::new(seed);
    let mut w_rng = root.substream(TAG_W).rng();
    let mut w = Array2::zeros((g, k0));
    for kk in 0..k0 {
        for i in 0..g {
            w[(i, kk)] = sample_gamma(0.05, 10.0, &mut w_rng)?;
        }
    }
    let theta = draw_theta(k0, s, &root.substream(TAG_THETA))?;
    let lambda = 1.0;
    let alpha = sample_dirichlet(&vec![0.5; g], &mut root.substream(TAG_ALPHA).rng())?;
    let p = draw_p(s, &root.substream(TAG_P));

    let mut shapes = Array2::zeros((g, s));
    for i in 0..g {
        for j in 0..s {
            let mut dot = 0.0;
            for kk in 0..k0 {
                dot += w[(i, kk)] * theta[(kk, j)];
            }
            shapes[(i, j)] = lambda * alpha[i] + dot;
        }
    }
    let vals = draw_counts(&shapes, &p, &root.substream(TAG_COUNTS))?;
    Ok(SyntheticTruth {
        y: CountMatrix::from_values(vals)?,
        w_true: w,
        theta_true: theta,
        alpha_true: alpha,
        lambda_true: lambda,
        zeta_true: None,
        p_true: p,
        scenario: Scenario::Two,
    })
}

/// Normalize each column to sum to one; returns the normalized matrix and
/// the original column sums.
pub fn normalize_columns(w: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let (g, k) = w.dim();
    let mut sums = Vec::with_capacity(k);
    let mut out = Array2::zeros((g, k));
    for kk in 0..k {
        let sum: f64 = w.column(kk).sum();
        if !(sum > 0.0) {
            return Err(Error::invalid(format!("column {kk} has nonpositive sum {sum}")));
        }
        for i in 0..g {
            out[(i, kk)] = w[(i, kk)] / sum;
        }
        sums.push(sum);
    }
    Ok((out, sums))
}

/// Pearson correlation; zero-variance input is defined to correlate 0.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Map estimated factors onto truth factors: returns `perm` maximizing
/// `sum_k pearson(estimate[:, k], truth[:, perm[k]])`, by exhaustive search
/// for K <= 8 and greedy assignment above.
pub fn align_factors(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<Vec<usize>> {
    if estimate.dim() != truth.dim() {
        return Err(Error::dims(format!(
            "estimate is {:?} but truth is {:?}",
            estimate.dim(),
            truth.dim()
        )));
    }
    let k = estimate.ncols();
    let mut corr = Array2::zeros((k, k));
    for a in 0..k {
        let ca = estimate.column(a).to_vec();
        for b in 0..k {
            let cb = truth.column(b).to_vec();
            corr[(a, b)] = pearson(&ca, &cb);
        }
    }
    if k <= 8 {
        let mut best_perm = (0..k).collect::<Vec<_>>();
        let mut best_score = f64::NEG_INFINITY;
        for perm in (0..k).permutations(k) {
            let score: f64 = perm.iter().enumerate().map(|(a, &b)| corr[(a, b)]).sum();
            if score > best_score {
                best_score = score;
                best_perm = perm;
            }
        }
        Ok(best_perm)
    } else {
        let mut perm = vec![usize::MAX; k];
        let mut used_est = vec![false; k];
        let mut used_truth = vec![false; k];
        for _ in 0..k {
            let mut best = (0, 0, f64::NEG_INFINITY);
            for a in 0..k {
                if used_est[a] {
                    continue;
                }
                for b in 0..k {
                    if used_truth[b] {
                        continue;
                    }
                    if corr[(a, b)] > best.2 {
                        best = (a, b, corr[(a, b)]);
                    }
                }
            }
            perm[best.0] = best.1;
            used_est[best.0] = true;
            used_truth[best.1] = true;
        }
        Ok(perm)
    }
}

/// Recovery scores for a fitted decomposition against a known truth.
#[derive(Debug, Clone)]
pub struct RecoveryReport {
    /// `permutation[k]` is the truth factor matched to estimate factor `k`.
    pub permutation: Vec<usize>,
    /// Pearson correlation per aligned factor column of the loading matrix.
    pub phi_correlations: Vec<f64>,
    /// Mean absolute error of the aligned proportion matrix.
    pub theta_mae: f64,
    /// Fraction of true proportions covered by the supplied intervals.
    pub theta_ci_coverage: f64,
}

/// Score `phi_hat`/`theta_hat` against the truth after factor alignment.
/// The truth's expression profiles are column-normalized before comparison.
pub fn recovery_metrics(
    truth: &SyntheticTruth,
    phi_hat: &Array2<f64>,
    theta_hat: &Array2<f64>,
    theta_ci: &IntervalMatrix,
) -> Result<RecoveryReport> {
    let (normalized_truth, _) = normalize_columns(&truth.w_true)?;
    if phi_hat.dim() != normalized_truth.dim() {
        return Err(Error::dims(format!(
            "phi_hat is {:?} but truth is {:?}",
            phi_hat.dim(),
            normalized_truth.dim()
        )));
    }
    if theta_hat.dim() != truth.theta_true.dim()
        || theta_ci.lo.dim() != theta_hat.dim()
        || theta_ci.hi.dim() != theta_hat.dim()
    {
        return Err(Error::dims("theta_hat and intervals must match the truth shape".to_string()));
    }
    let perm = align_factors(phi_hat, &normalized_truth)?;
    let k = phi_hat.ncols();
    let s = theta_hat.ncols();
    let mut phi_correlations = Vec::with_capacity(k);
    for kk in 0..k {
        let est = phi_hat.column(kk).to_vec();
        let tr = normalized_truth.column(perm[kk]).to_vec();
        phi_correlations.push(pearson(&est, &tr));
    }
    let mut abs_err = 0.0;
    let mut covered = 0usize;
    for kk in 0..k {
        for j in 0..s {
            let truth_v = truth.theta_true[(perm[kk], j)];
            abs_err += (theta_hat[(kk, j)] - truth_v).abs();
            if theta_ci.lo[(kk, j)] <= truth_v && truth_v <= theta_ci.hi[(kk, j)] {
                covered += 1;
            }
        }
    }
    let entries = (k * s) as f64;
    Ok(RecoveryReport {
        permutation: perm,
        phi_correlations,
        theta_mae: abs_err / entries,
        theta_ci_coverage: covered as f64 / entries,
    })
}
