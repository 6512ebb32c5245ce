//! Posterior summaries, sample clustering, and gene ranking.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::gibbs::ChainOutput;

/// Elementwise credible-interval bounds.
#[derive(Debug, Clone)]
pub struct IntervalMatrix {
    pub lo: Array2<f64>,
    pub hi: Array2<f64>,
}

/// Entrywise posterior means and Theta credible intervals from kept draws.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub phi_mean: Array2<f64>,
    pub theta_mean: Array2<f64>,
    pub theta_ci: IntervalMatrix,
    pub lambda_mean: f64,
    pub zeta_mean: Vec<f64>,
    pub p_mean: Vec<f64>,
    pub draw_count: usize,
}

/// Linear-interpolation empirical quantile of an ascending-sorted slice
/// (R type 7): `h = (n-1)q`, interpolate between `floor(h)` and `ceil(h)`.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&q));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Entrywise means of the stored draws plus equal-tailed `level` intervals
/// for every `theta_kj`, from linear-interpolation empirical quantiles.
pub fn summarize(chain: &ChainOutput, level: f64) -> Result<PosteriorSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "credible level must lie in (0, 1), got {level}"
        )));
    }
    let draws = chain
        .draws
        .as_ref()
        .ok_or_else(|| Error::invalid("chain did not store draws; refit with store_draws".to_string()))?;
    if draws.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 kept draws to summarize, got {}",
            draws.len()
        )));
    }
    let n = draws.len();
    let nf = n as f64;
    let g = draws[0].n_genes();
    let k = draws[0].n_factors();
    let s = draws[0].n_samples();

    let mut phi_mean = Array2::zeros((g, k));
    let mut theta_mean = Array2::zeros((k, s));
    let mut lambda_mean = 0.0;
    let mut zeta_mean = vec![0.0; s];
    let mut p_mean = vec![0.0; s];
    for d in draws {
        phi_mean += &d.phi;
        theta_mean += &d.theta;
        lambda_mean += d.lambda;
        for j in 0..s {
            zeta_mean[j] += d.zeta[j];
            p_mean[j] += d.p[j];
        }
    }
    phi_mean /= nf;
    theta_mean /= nf;
    lambda_mean /= nf;
    zeta_mean.iter_mut().for_each(|v| *v /= nf);
    p_mean.iter_mut().for_each(|v| *v /= nf);

    let alpha = 1.0 - level;
    let mut lo = Array2::zeros((k, s));
    let mut hi = Array2::zeros((k, s));
    let mut entry = vec![0.0; n];
    for kk in 0..k {
        for j in 0..s {
            for (d, slot) in draws.iter().zip(entry.iter_mut()) {
                *slot = d.theta[(kk, j)];
            }
            entry.sort_by(|a, b| a.partial_cmp(b).expect("finite theta draws"));
            lo[(kk, j)] = quantile_type7(&entry, alpha / 2.0);
            hi[(kk, j)] = quantile_type7(&entry, 1.0 - alpha / 2.0);
        }
    }

    Ok(PosteriorSummary {
        phi_mean,
        theta_mean,
        theta_ci: IntervalMatrix { lo, hi },
        lambda_mean,
        zeta_mean,
        p_mean,
        draw_count: n,
    })
}

/// Dominant factor per sample: the row index maximizing each column of
/// `theta_mean`, ties broken toward the smaller index.
pub fn dominant_subclone(theta_mean: &Array2<f64>) -> Vec<usize> {
    let (k, s) = theta_mean.dim();
    (0..s)
        .map(|j| {
            let mut best = 0;
            for kk in 1..k {
                if theta_mean[(kk, j)] > theta_mean[(best, j)] {
                    best = kk;
                }
            }
            best
        })
        .collect()
}

/// Across-factor standard deviation (n-1 denominator) of each gene's row.
pub fn gene_expression_sds(phi_mean: &Array2<f64>) -> Vec<f64> {
    let (g, k) = phi_mean.dim();
    (0..g)
        .map(|i| {
            let row = phi_mean.row(i);
            let mean = row.sum() / k as f64;
            let ss: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (k as f64 - 1.0)).sqrt()
        })
        .collect()
}

/// Selection mode for differentially expressed genes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeMode {
    /// Keep genes whose across-factor standard deviation reaches the bound.
    Threshold(f64),
    /// Keep the n genes with the largest across-factor standard deviation.
    TopN(usize),
}

/// Rank genes by decreasing across-factor standard deviation of their mean
/// expression profile; returns gene indices.
pub fn rank_de_genes(phi_mean: &Array2<f64>, mode: DeMode) -> Result<Vec<usize>> {
    let (g, k) = phi_mean.dim();
    if k < 2 {
        return Err(Error::invalid("gene ranking needs at least 2 factors".to_string()));
    }
    let sds = gene_expression_sds(phi_mean);
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| sds[b].partial_cmp(&sds[a]).expect("finite sds").then(a.cmp(&b)));
    match mode {
        DeMode::Threshold(t) => {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::invalid(format!("threshold must be nonnegative, got {t}")));
            }
            Ok(order.into_iter().filter(|&i| sds[i] >= t).collect())
        }
        DeMode::TopN(n) => {
            if n > g {
                return Err(Error::invalid(format!(
                    "top-n of {n} exceeds the {g} available genes"
                )));
            }
            order.truncate(n);
            Ok(order)
        }
    }
}

/// Entrywise `log10(max(entry, floor))` view of a nonnegative matrix.
pub fn log_scale_view(phi_mean: &Array2<f64>, floor: f64) -> Array2<f64> {
    debug_assert!(floor > 0.0);
    phi_mean.mapv(|v| v.max(floor).log10())
}

/// Default floor for [`log_scale_view`].
pub const LOG_VIEW_FLOOR: f64 = 1e-12;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::StreamingMoments;
    use crate::model::ModelState;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn state_from_theta(theta: Array2<f64>) -> ModelState {
        let k = theta.nrows();
        let s = theta.ncols();
        let g = 2;
        let mut phi = Array2::zeros((g, k));
        for kk in 0..k {
            phi[(0, kk)] = 0.25;
            phi[(1, kk)] = 0.75;
        }
        ModelState {
            phi,
            theta,
            alpha: vec![0.5, 0.5],
            lambda: 1.0,
            zeta: vec![1.0; s],
            p: vec![0.5; s],
            r: vec![1.0; k],
            c: vec![1.0; s],
            gamma0: 1.0,
            c0: 1.0,
        }
    }

    fn chain_with_draws(draws: Vec<ModelState>) -> ChainOutput {
        let g = draws[0].n_genes();
        let k = draws[0].n_factors();
        let s = draws[0].n_samples();
        ChainOutput {
            k,
            draws: Some(draws),
            moments: StreamingMoments::new(g, k, s),
            loglik_trace: Vec::new(),
            sweep_seconds: Vec::new(),
        }
    }

    #[test]
    fn quantile_rule_matches_worked_example() {
        let draws: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert_relative_eq!(quantile_type7(&draws, 0.1), 0.19, epsilon = 1e-12);
        assert_relative_eq!(quantile_type7(&draws, 0.9), 0.91, epsilon = 1e-12);
        assert_eq!(quantile_type7(&[4.0], 0.3), 4.0);
    }

    #[test]
    fn summarize_two_identical_draws() {
        let theta = array![[0.3, 0.6], [0.7, 0.4]];
        let s1 = state_from_theta(theta.clone());
        let s2 = state_from_theta(theta.clone());
        let chain = chain_with_draws(vec![s1, s2]);
        let sum = summarize(&chain, 0.95).unwrap();
        assert_eq!(sum.draw_count, 2);
        for kk in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(sum.theta_mean[(kk, j)], theta[(kk, j)], epsilon = 1e-15);
                assert_eq!(sum.theta_ci.lo[(kk, j)], sum.theta_ci.hi[(kk, j)]);
            }
        }
    }

    #[test]
    fn summarize_quantile_interval() {
        // theta_11 draws 0.1..1.0 at level 0.8 give the interval (0.19, 0.91).
        let draws: Vec<ModelState> = (1..=10)
            .map(|i| {
                let v = i as f64 / 10.0;
                state_from_theta(array![[v], [1.0 - v]])
            })
            .collect();
        let chain = chain_with_draws(draws);
        let sum = summarize(&chain, 0.8).unwrap();
        assert_relative_eq!(sum.theta_ci.lo[(0, 0)], 0.19, epsilon = 1e-12);
        assert_relative_eq!(sum.theta_ci.hi[(0, 0)], 0.91, epsilon = 1e-12);
    }

    #[test]
    fn summarize_preserves_column_sums() {
        let draws: Vec<ModelState> = (0..20)
            .map(|i| {
                let v = 0.2 + 0.6 * (i as f64 / 19.0);
                state_from_theta(array![[v, 1.0 - v], [1.0 - v, v]])
            })
            .collect();
        let chain = chain_with_draws(draws);
        let sum = summarize(&chain, 0.95).unwrap();
        for j in 0..2 {
            let col: f64 = sum.theta_mean.column(j).sum();
            assert_relative_eq!(col, 1.0, epsilon = 1e-8);
            let pcol: f64 = sum.phi_mean.column(j).sum();
            assert_relative_eq!(pcol, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn summarize_requires_draws() {
        let chain = ChainOutput {
            k: 1,
            draws: None,
            moments: StreamingMoments::new(1, 1, 1),
            loglik_trace: vec![-1.0, -2.0],
            sweep_seconds: Vec::new(),
        };
        assert!(summarize(&chain, 0.95).is_err());
        let one = chain_with_draws(vec![state_from_theta(array![[1.0]])]);
        assert!(summarize(&one, 0.95).is_err());
        let two = chain_with_draws(vec![
            state_from_theta(array![[1.0]]),
            state_from_theta(array![[1.0]]),
        ]);
        assert!(summarize(&two, 1.0).is_err());
    }

    #[test]
    fn summarize_se_halves_with_four_times_the_draws() {
        // Monte Carlo error of an entry mean scales like 1/sqrt(n): with 4n
        // draws the spread of the mean across repetitions halves.
        use rand::Rng;
        let mut rng = crate::rng::RngStream::new(123).rng();
        let mut spread = |n: usize| -> f64 {
            let reps = 200;
            let mut means = Vec::with_capacity(reps);
            for _ in 0..reps {
                let draws: Vec<ModelState> = (0..n)
                    .map(|_| {
                        let v: f64 = rng.gen();
                        state_from_theta(array![[v], [1.0 - v]])
                    })
                    .collect();
                let chain = chain_with_draws(draws);
                means.push(summarize(&chain, 0.9).unwrap().theta_mean[(0, 0)]);
            }
            let m = means.iter().sum::<f64>() / reps as f64;
            (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt()
        };
        let sd_small = spread(25);
        let sd_large = spread(100);
        let ratio = sd_small / sd_large;
        assert!(ratio > 1.4 && ratio < 2.8, "ratio {ratio}");
    }

    #[test]
    fn dominant_subclone_examples() {
        let theta = array![[0.7, 0.5, 0.1], [0.2, 0.5, 0.1], [0.1, 0.0, 0.8]];
        assert_eq!(dominant_subclone(&theta), vec![0, 0, 2]);
    }

    #[test]
    fn rank_de_genes_worked_example() {
        // Rows (0.5, 0.5), (0.9, 0.1), (0.6, 0.4): ranking gene 1, 2, 0.
        let phi = array![[0.5, 0.5], [0.9, 0.1], [0.6, 0.4]];
        let order = rank_de_genes(&phi, DeMode::TopN(3)).unwrap();
        assert_eq!(order, vec![1, 2, 0]);
        // A flat gene is filtered at any positive threshold.
        let kept = rank_de_genes(&phi, DeMode::Threshold(1e-9)).unwrap();
        assert_eq!(kept, vec![1, 2]);
        assert!(rank_de_genes(&phi, DeMode::TopN(4)).is_err());
        let single = array![[1.0], [1.0]];
        assert!(rank_de_genes(&single, DeMode::TopN(1)).is_err());
    }

    #[test]
    fn log_scale_view_examples() {
        let phi = array![[1e-3, 0.0], [1.0, 1e-15]];
        let v = log_scale_view(&phi, LOG_VIEW_FLOOR);
        assert_relative_eq!(v[(0, 0)], -3.0, epsilon = 1e-12);
        assert_relative_eq!(v[(0, 1)], -12.0, epsilon = 1e-12);
        assert_relative_eq!(v[(1, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(v[(1, 1)], -12.0, epsilon = 1e-12);
    }

    proptest! {
        // Any strictly increasing transform of a column leaves the argmax
        // unchanged.
        #[test]
        fn dominant_subclone_monotone_invariance(
            col in proptest::collection::vec(0.0f64..1.0, 2..6),
            scale in 0.1f64..5.0,
        ) {
            let k = col.len();
            let mut theta = Array2::zeros((k, 1));
            let mut transformed = Array2::zeros((k, 1));
            for (i, &v) in col.iter().enumerate() {
                theta[(i, 0)] = v;
                transformed[(i, 0)] = (scale * v).exp();
            }
            prop_assert_eq!(dominant_subclone(&theta), dominant_subclone(&transformed));
        }

        // Adding a constant to a gene's row does not change its sd, hence
        // not the ranking.
        #[test]
        fn rank_de_genes_shift_invariance(
            rows in proptest::collection::vec(
                proptest::collection::vec(0.0f64..1.0, 3),
                2..6,
            ),
            shift in 0.0f64..10.0,
            target in 0usize..5,
        ) {
            let g = rows.len();
            let target = target % g;
            let mut phi = Array2::zeros((g, 3));
            let mut shifted = Array2::zeros((g, 3));
            for (i, row) in rows.iter().enumerate() {
                for (kk, &v) in row.iter().enumerate() {
                    phi[(i, kk)] = v;
                    shifted[(i, kk)] = if i == target { v + shift } else { v };
                }
            }
            let a = rank_de_genes(&phi, DeMode::TopN(g)).unwrap();
            let b = rank_de_genes(&shifted, DeMode::TopN(g)).unwrap();
            prop_assert_eq!(a, b);
        }

        // The argmax is equivariant under row permutation.
        #[test]
        fn dominant_subclone_permutation_equivariance(
            cols in proptest::collection::vec(
                proptest::collection::vec(0.01f64..1.0, 3),
                1..5,
            ),
        ) {
            let s = cols.len();
            // Ties break toward the smaller index, which permutation does
            // not commute with; keep the test on the tie-free set.
            for col in &cols {
                for a in 0..3 {
                    for b in (a + 1)..3 {
                        prop_assume!((col[a] - col[b]).abs() > 1e-9);
                    }
                }
            }
            let mut theta = Array2::zeros((3, s));
            let mut permuted = Array2::zeros((3, s));
            let perm = [2usize, 0, 1];
            for (j, col) in cols.iter().enumerate() {
                for (kk, &v) in col.iter().enumerate() {
                    theta[(kk, j)] = v;
                }
                for (new_k, &old_k) in perm.iter().enumerate() {
                    permuted[(new_k, j)] = cols[j][old_k];
                }
            }
            let base = dominant_subclone(&theta);
            let relabeled = dominant_subclone(&permuted);
            for j in 0..s {
                // Position of the winner moved through the inverse permutation.
                prop_assert_eq!(perm[relabeled[j]], base[j]);
            }
        }
    }
}
