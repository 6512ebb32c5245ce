//! Domain types and deterministic model formulas.
//!
//! The observation model is `y_ij ~ NB(lambda*alpha_i + sum_k
//! phi_ik*theta_kj*zeta_j, p_j)`: a low-rank factor part scaled per sample by
//! `zeta_j`, plus a gene-specific random-effect part scaled by `lambda`, with
//! the sample-specific `p_j` carrying the between-sample effect. Columns of
//! `Phi`, columns of `Theta`, and `alpha` live on probability simplexes, so
//! the per-column shapes add up to `lambda + zeta_j` and the column totals
//! follow `NB(lambda + zeta_j, p_j)`.

use std::collections::HashSet;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::special::ln_gamma;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Floor applied to NB shapes before logs; Dirichlet draws at concentration
/// 0.1 can underflow to zero otherwise.
pub const SHAPE_FLOOR: f64 = 1e-300;

/// Tolerance for simplex-sum invariants.
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Observed genes-by-samples matrix of read counts.
#[derive(Debug, Clone)]
pub struct CountMatrix {
    values: Array2<u64>,
    gene_ids: Vec<String>,
    sample_ids: Vec<String>,
}

impl CountMatrix {
    pub fn new(values: Array2<u64>, gene_ids: Vec<String>, sample_ids: Vec<String>) -> Result<Self> {
        let (g, s) = values.dim();
        if g == 0 || s == 0 {
            return Err(Error::invalid("count matrix must have at least one gene and one sample"));
        }
        if gene_ids.len() != g {
            return Err(Error::dims(format!(
                "{} gene ids for {} rows",
                gene_ids.len(),
                g
            )));
        }
        if sample_ids.len() != s {
            return Err(Error::dims(format!(
                "{} sample ids for {} columns",
                sample_ids.len(),
                s
            )));
        }
        check_unique(&gene_ids, "gene")?;
        check_unique(&sample_ids, "sample")?;
        Ok(CountMatrix {
            values,
            gene_ids,
            sample_ids,
        })
    }

    /// Convenience constructor with generated identifiers.
    pub fn from_values(values: Array2<u64>) -> Result<Self> {
        let (g, s) = values.dim();
        let gene_ids = (1..=g).map(|i| format!("gene_{i}")).collect();
        let sample_ids = (1..=s).map(|j| format!("sample_{j}")).collect();
        CountMatrix::new(values, gene_ids, sample_ids)
    }

    pub fn n_genes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<u64> {
        &self.values
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.values[(i, j)]
    }

    /// Per-sample totals `y_.j`.
    pub fn column_sums(&self) -> Vec<u64> {
        let mut sums = vec![0u64; self.n_samples()];
        for row in self.values.rows() {
            for (j, &v) in row.iter().enumerate() {
                sums[j] += v;
            }
        }
        sums
    }
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::invalid(format!("duplicate {what} id: {id}")));
        }
    }
    Ok(())
}

/// Prior and hyperprior constants.
///
/// `eta` is the Dirichlet concentration for the columns of `Phi`, `delta`
/// the concentration for `alpha`; `(a0, b0)` shape the Beta prior on `p_j`;
/// `(e0, f0)` the gamma shape/rate pair shared by `c_j` and `c0`; `(g0, h0)`
/// the pair for `gamma0`; `(u0, v0)` the pair for `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub eta: f64,
    pub delta: f64,
    pub a0: f64,
    pub b0: f64,
    pub e0: f64,
    pub f0: f64,
    pub g0: f64,
    pub h0: f64,
    pub u0: f64,
    pub v0: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            eta: 0.1,
            delta: 0.1,
            a0: 0.01,
            b0: 0.01,
            e0: 1.0,
            f0: 1.0,
            g0: 1.0,
            h0: 1.0,
            u0: 100.0,
            v0: 100.0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("eta", self.eta),
            ("delta", self.delta),
            ("a0", self.a0),
            ("b0", self.b0),
            ("e0", self.e0),
            ("f0", self.f0),
            ("g0", self.g0),
            ("h0", self.h0),
            ("u0", self.u0),
            ("v0", self.v0),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "hyperparameter {name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One complete set of model parameters for a fixed number of factors.
#[derive(Debug, Clone)]
pub struct ModelState {
    /// G x K factor loading matrix; each column on the G-simplex.
    pub phi: Array2<f64>,
    /// K x S factor proportion matrix; each column on the K-simplex.
    pub theta: Array2<f64>,
    /// Length-G gene-effect simplex vector.
    pub alpha: Vec<f64>,
    /// Scale of the gene-specific random effect.
    pub lambda: f64,
    /// Per-sample factor-side scale.
    pub zeta: Vec<f64>,
    /// Per-sample NB success probability, strictly inside (0, 1).
    pub p: Vec<f64>,
    /// Per-factor gamma shape parameters.
    pub r: Vec<f64>,
    /// Per-sample rate parameters for the zeta prior.
    pub c: Vec<f64>,
    /// Total mass hyperparameter for r.
    pub gamma0: f64,
    /// Rate hyperparameter for r.
    pub c0: f64,
}

impl ModelState {
    pub fn n_genes(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.theta.ncols()
    }

    /// Check every structural invariant of the state.
    pub fn validate(&self) -> Result<()> {
        let g = self.n_genes();
        let k = self.n_factors();
        let s = self.n_samples();
        if self.theta.nrows() != k {
            return Err(Error::dims("theta rows must equal phi columns"));
        }
        if self.alpha.len() != g {
            return Err(Error::dims("alpha length must equal gene count"));
        }
        if self.zeta.len() != s || self.p.len() != s || self.c.len() != s {
            return Err(Error::dims("zeta, p, c must have one entry per sample"));
        }
        if self.r.len() != k {
            return Err(Error::dims("r must have one entry per factor"));
        }
        for kk in 0..k {
            let col = self.phi.column(kk);
            if col.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::invalid(format!("phi column {kk} has negative entries")));
            }
            let sum: f64 = col.sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::invalid(format!("phi column {kk} sums to {sum}")));
            }
        }
        for j in 0..s {
            let col = self.theta.column(j);
            if col.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::invalid(format!("theta column {j} has negative entries")));
            }
            let sum: f64 = col.sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::invalid(format!("theta column {j} sums to {sum}")));
            }
        }
        if self.alpha.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::invalid("alpha has negative entries"));
        }
        let asum: f64 = self.alpha.iter().sum();
        if (asum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("alpha sums to {asum}")));
        }
        for (j, &pj) in self.p.iter().enumerate() {
            if !(pj > 0.0 && pj < 1.0) {
                return Err(Error::invalid(format!("p[{j}] = {pj} not in (0, 1)")));
            }
        }
        let positives = self
            .zeta
            .iter()
            .chain(self.r.iter())
            .chain(self.c.iter())
            .chain([&self.lambda, &self.gamma0, &self.c0]);
        for &v in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("scale parameter {v} must be positive")));
            }
        }
        Ok(())
    }

    /// NB shape of cell `(i, j)`: `lambda*alpha_i + zeta_j * sum_k phi_ik theta_kj`,
    /// floored at [`SHAPE_FLOOR`].
    pub fn cell_shape(&self, i: usize, j: usize) -> f64 {
        let mut dot = 0.0;
        for k in 0..self.n_factors() {
            dot += self.phi[(i, k)] * self.theta[(k, j)];
        }
        (self.lambda * self.alpha[i] + self.zeta[j] * dot).max(SHAPE_FLOOR)
    }
}

/// Sufficient statistics of the latent table counts from one sweep.
///
/// Only marginals of the per-cell tables are kept: the blocked sampler never
/// materializes the per-factor latent counts themselves.
#[derive(Debug, Clone)]
pub struct AugmentedStats {
    /// G x K: tables per gene and factor, `A_ik = sum_j l_ijk`.
    pub ell_gene_factor: Array2<u64>,
    /// K x S: tables per factor and sample, `B_kj = sum_i l_ijk`.
    pub ell_factor_sample: Array2<u64>,
    /// Length G: gene-effect tables per gene, `sum_j l_ij0`.
    pub ell_gene_effect: Vec<u64>,
    /// Grand total of gene-effect tables.
    pub ell_gene_effect_total: u64,
    /// K x S: second-level tables `l'_jk`, the CRT tables of `B_kj`.
    pub ell_second_level: Array2<u64>,
    /// Length K: third-level tables `l''_k`.
    pub ell_third_level: Vec<u64>,
}

impl AugmentedStats {
    pub fn zeros(g: usize, k: usize, s: usize) -> Self {
        AugmentedStats {
            ell_gene_factor: Array2::zeros((g, k)),
            ell_factor_sample: Array2::zeros((k, s)),
            ell_gene_effect: vec![0; g],
            ell_gene_effect_total: 0,
            ell_second_level: Array2::zeros((k, s)),
            ell_third_level: vec![0; k],
        }
    }

    pub fn n_genes(&self) -> usize {
        self.ell_gene_factor.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.ell_gene_factor.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.ell_factor_sample.ncols()
    }

    /// Check the nesting invariants between table levels.
    pub fn validate(&self) -> Result<()> {
        if self.ell_second_level.dim() != self.ell_factor_sample.dim() {
            return Err(Error::dims("second-level tables must match B's shape"));
        }
        for ((k, j), &l2) in self.ell_second_level.indexed_iter() {
            if l2 > self.ell_factor_sample[(k, j)] {
                return Err(Error::invalid(format!(
                    "second-level tables exceed B at ({k}, {j})"
                )));
            }
        }
        for (k, &l3) in self.ell_third_level.iter().enumerate() {
            let row_sum: u64 = self.ell_second_level.row(k).iter().sum();
            if l3 > row_sum {
                return Err(Error::invalid(format!(
                    "third-level tables exceed second-level total at factor {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Log of the NB(r, p) probability mass at `y`.
pub fn nb_log_pmf(y: u64, r: f64, p: f64) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid(format!("nb shape must be positive, got {r}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("nb p must lie in (0, 1), got {p}")));
    }
    Ok(nb_log_pmf_terms(y, r, p.ln(), (-p).ln_1p()))
}

#[inline]
fn nb_log_pmf_terms(y: u64, r: f64, ln_p: f64, ln_1mp: f64) -> f64 {
    let yf = y as f64;
    ln_gamma(yf + r) - ln_gamma(r) - ln_gamma(yf + 1.0) + r * ln_1mp + yf * ln_p
}

/// Mean of cell `(i, j)` under the model: shape times `p_j / (1 - p_j)`.
pub fn model_mean(state: &ModelState, i: usize, j: usize) -> f64 {
    let pj = state.p[j];
    state.cell_shape(i, j) * pj / (1.0 - pj)
}

/// Sum of per-cell NB log masses over the whole matrix.
///
/// Data-parallel over genes with a fixed reduction order, so the result is
/// identical at every worker count.
pub fn full_log_likelihood(y: &CountMatrix, state: &ModelState) -> Result<f64> {
    if y.n_genes() != state.n_genes() || y.n_samples() != state.n_samples() {
        return Err(Error::dims(format!(
            "count matrix is {}x{} but state is {}x{}",
            y.n_genes(),
            y.n_samples(),
            state.n_genes(),
            state.n_samples()
        )));
    }
    let s = y.n_samples();
    let ln_p: Vec<f64> = state.p.iter().map(|&p| p.ln()).collect();
    let ln_1mp: Vec<f64> = state.p.iter().map(|&p| (-p).ln_1p()).collect();
    let values = y.values();
    let row_ll = |i: usize| -> f64 {
        let mut acc = 0.0;
        for j in 0..s {
            let shape = state.cell_shape(i, j);
            acc += nb_log_pmf_terms(values[(i, j)], shape, ln_p[j], ln_1mp[j]);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<f64> = (0..y.n_genes()).into_par_iter().map(row_ll).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<f64> = (0..y.n_genes()).map(row_ll).collect();
    Ok(rows.iter().sum())
}
