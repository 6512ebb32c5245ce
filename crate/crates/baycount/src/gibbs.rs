//! Compound-Poisson blocked Gibbs sampler.
//!
//! One sweep first reallocates the latent CRT tables for every observed cell
//! (`allocate_tables`), then redraws every model parameter from its closed
//! conditional. The per-cell table count follows `CRT(y_ij, s_ij)` with
//! `s_ij` the cell's NB shape, and the tables are split across the K factor
//! components plus the gene-effect component with probabilities proportional
//! to the component shapes, so the per-factor latent counts themselves never
//! need to be sampled.
//!
//! Because the gamma prior on `r` and the gamma-Dirichlet construction of
//! `(theta_j, zeta_j)` make `theta_kj * zeta_j` a set of independent
//! `Gamma(r_k, 1/c_j)` variables, the updates of `r` and `gamma0` integrate
//! those variables out through two further CRT levels. A sweep therefore
//! redraws `theta` and `zeta` immediately after `r` and `gamma0` (and `r`
//! immediately after `gamma0`): a marginalized update must be followed by a
//! redraw of what it integrated out before anything else conditions on it.
//! The joint-distribution test in the suite is the arbiter that this
//! composition targets the posterior exactly.
//!
//! Randomness is organized as keyed substreams: every cell, factor, and
//! sample draws from a stream derived from its index, which makes chains
//! reproducible at any worker count and makes factor relabeling an exact
//! symmetry of the sampler when the factor keys are permuted along with the
//! state.

use std::time::Instant;

use ndarray::Array2;

use crate::dist::{
    sample_beta, sample_crt, sample_crt_hybrid, sample_dirichlet, sample_gamma,
};
use crate::error::{Error, Result};
use crate::model::{
    full_log_likelihood, AugmentedStats, CountMatrix, Hyperparameters, ModelState, SHAPE_FLOOR,
};
use crate::rng::RngStream;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const TAG_INIT: u64 = 1;
const TAG_SWEEP: u64 = 2;
const TAG_CHAIN: u64 = 3;

const TAG_ALLOC: u64 = 0x10;
const TAG_PHI: u64 = 0x11;
const TAG_THETA: u64 = 0x12;
const TAG_ZETA: u64 = 0x13;
const TAG_ALPHA: u64 = 0x14;
const TAG_LAMBDA: u64 = 0x15;
const TAG_SECOND: u64 = 0x16;
const TAG_THIRD: u64 = 0x17;
const TAG_GAMMA0: u64 = 0x18;
const TAG_R: u64 = 0x19;
const TAG_C: u64 = 0x1a;
const TAG_C0: u64 = 0x1b;
const TAG_P: u64 = 0x1c;

const TAG_GUMBEL: u64 = 0x20;
const GENE_EFFECT_KEY: u64 = u64::MAX;

/// Lower clamp for `p_j`; keeps `log(1-p)` finite.
pub const P_CLAMP: f64 = 1e-12;

fn q_of(p: f64) -> f64 {
    // -ln(1 - p)
    -(-p).ln_1p()
}

fn identity_keys(k: usize) -> Vec<u64> {
    (0..k as u64).collect()
}

/// Tuning knobs for a single sweep.
#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions<'a> {
    /// Number of leading CRT trials sampled by the exact Bernoulli sum before
    /// switching to waiting-time inversion. `None` keeps the plain sum for
    /// every trial.
    pub crt_exact_head: Option<u64>,
    /// Substream keys per factor; `None` means `0..K`. Permuting these along
    /// with the factor labels of the state relabels the whole trajectory.
    pub factor_keys: Option<&'a [u64]>,
}

// ---------------------------------------------------------------------------
// Table allocation
// ---------------------------------------------------------------------------

struct AllocPartial {
    gene_factor: Vec<u64>,
    factor_sample: Vec<u64>,
    gene_effect: Vec<u64>,
    effect_total: u64,
}

impl AllocPartial {
    fn zeros(g: usize, k: usize, s: usize) -> Self {
        AllocPartial {
            gene_factor: vec![0; g * k],
            factor_sample: vec![0; k * s],
            gene_effect: vec![0; g],
            effect_total: 0,
        }
    }

    #[cfg(feature = "parallel")]
    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.gene_factor.iter_mut().zip(&other.gene_factor) {
            *a += b;
        }
        for (a, b) in self.factor_sample.iter_mut().zip(&other.factor_sample) {
            *a += b;
        }
        for (a, b) in self.gene_effect.iter_mut().zip(&other.gene_effect) {
            *a += b;
        }
        self.effect_total += other.effect_total;
        self
    }
}

/// Split `ell` tables over the gene-effect component (index 0) and the K
/// factor components with probabilities proportional to `weights`.
///
/// Each table picks the category maximizing `ln w_c + Gumbel`, with the
/// Gumbel noise drawn from a per-category keyed substream; this is an exact
/// multinomial draw that stays bitwise equivariant under factor relabeling.
fn split_tables(
    ell: u64,
    weights: &[f64],
    cell: &RngStream,
    factor_keys: &[u64],
    best: &mut Vec<(f64, u32)>,
    out: &mut [u64],
) {
    use rand::Rng;
    out.iter_mut().for_each(|v| *v = 0);
    best.clear();
    best.resize(ell as usize, (f64::NEG_INFINITY, 0));
    let gum = cell.substream(TAG_GUMBEL);
    for (c, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let ln_w = w.ln();
        let key = if c == 0 {
            GENE_EFFECT_KEY
        } else {
            factor_keys[c - 1]
        };
        let mut rng = gum.substream(key).rng();
        for slot in best.iter_mut() {
            let u: f64 = rng.gen();
            let gumbel = -(-u.ln()).ln();
            let score = ln_w + gumbel;
            if score > slot.0 {
                *slot = (score, c as u32);
            }
        }
    }
    for &(_, c) in best.iter() {
        out[c as usize] += 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn allocate_row(
    i: usize,
    y: &CountMatrix,
    state: &ModelState,
    theta_t: &[f64],
    alloc_stream: &RngStream,
    factor_keys: &[u64],
    crt_exact_head: Option<u64>,
    acc: &mut AllocPartial,
) -> Result<()> {
    let k = state.n_factors();
    let s = state.n_samples();
    let row = y.values().row(i);
    let phi_row = state.phi.row(i);
    let gene_weight = state.lambda * state.alpha[i];
    let mut weights = vec![0.0; k + 1];
    let mut counts = vec![0u64; k + 1];
    let mut best: Vec<(f64, u32)> = Vec::new();
    for j in 0..s {
        let y_ij = row[j];
        if y_ij == 0 {
            continue;
        }
        weights[0] = gene_weight;
        let mut shape = gene_weight;
        let zeta_j = state.zeta[j];
        for kk in 0..k {
            let w = phi_row[kk] * theta_t[j * k + kk] * zeta_j;
            weights[kk + 1] = w;
            shape += w;
        }
        let shape = shape.max(SHAPE_FLOOR);
        let cell = alloc_stream.substream((i * s + j) as u64);
        let mut crt_rng = cell.rng();
        let ell = match crt_exact_head {
            Some(head) => sample_crt_hybrid(y_ij, shape, head, &mut crt_rng)?,
            None => sample_crt(y_ij, shape, &mut crt_rng)?,
        };
        if ell == 0 {
            continue;
        }
        split_tables(ell, &weights, &cell, factor_keys, &mut best, &mut counts);
        debug_assert_eq!(counts.iter().sum::<u64>(), ell);
        acc.gene_effect[i] += counts[0];
        acc.effect_total += counts[0];
        for kk in 0..k {
            let c = counts[kk + 1];
            acc.gene_factor[i * k + kk] += c;
            acc.factor_sample[kk * s + j] += c;
        }
    }
    Ok(())
}

/// Draw the latent CRT tables for every cell and accumulate their marginals.
///
/// For each cell, `l_ij ~ CRT(y_ij, s_ij)` tables are split over the K+1
/// component shapes; the conservation `sum_k l_ijk + l_ij0 = l_ij` holds per
/// cell by construction. Rows are processed data-parallel; the integer
/// accumulators make the reduction order immaterial.
pub fn allocate_tables(
    y: &CountMatrix,
    state: &ModelState,
    stream: &RngStream,
) -> Result<AugmentedStats> {
    allocate_tables_keyed(y, state, stream, &identity_keys(state.n_factors()), None)
}

#[doc(hidden)]
pub fn allocate_tables_keyed(
    y: &CountMatrix,
    state: &ModelState,
    stream: &RngStream,
    factor_keys: &[u64],
    crt_exact_head: Option<u64>,
) -> Result<AugmentedStats> {
    let g = state.n_genes();
    let k = state.n_factors();
    let s = state.n_samples();
    if y.n_genes() != g || y.n_samples() != s {
        return Err(Error::dims(format!(
            "count matrix is {}x{} but state is {}x{}",
            y.n_genes(),
            y.n_samples(),
            g,
            s
        )));
    }
    if factor_keys.len() != k {
        return Err(Error::dims("one factor key per factor required".to_string()));
    }
    // Sample-major copy of theta for contiguous per-cell access.
    let mut theta_t = vec![0.0; s * k];
    for kk in 0..k {
        for j in 0..s {
            theta_t[j * k + kk] = state.theta[(kk, j)];
        }
    }
    let alloc_stream = stream.substream(TAG_ALLOC);

    #[cfg(feature = "parallel")]
    let partial = (0..g)
        .into_par_iter()
        .try_fold(
            || AllocPartial::zeros(g, k, s),
            |mut acc, i| {
                allocate_row(
                    i,
                    y,
                    state,
                    &theta_t,
                    &alloc_stream,
                    factor_keys,
                    crt_exact_head,
                    &mut acc,
                )?;
                Ok::<_, Error>(acc)
            },
        )
        .try_reduce(|| AllocPartial::zeros(g, k, s), |a, b| Ok(a.merge(b)))?;

    #[cfg(not(feature = "parallel"))]
    let partial = {
        let mut acc = AllocPartial::zeros(g, k, s);
        for i in 0..g {
            allocate_row(
                i,
                y,
                state,
                &theta_t,
                &alloc_stream,
                factor_keys,
                crt_exact_head,
                &mut acc,
            )?;
        }
        acc
    };

    let mut stats = AugmentedStats::zeros(g, k, s);
    stats.ell_gene_factor =
        Array2::from_shape_vec((g, k), partial.gene_factor).expect("row-major layout");
    stats.ell_factor_sample =
        Array2::from_shape_vec((k, s), partial.factor_sample).expect("row-major layout");
    stats.ell_gene_effect = partial.gene_effect;
    stats.ell_gene_effect_total = partial.effect_total;
    Ok(stats)
}

// ---------------------------------------------------------------------------
// Parameter updates
// ---------------------------------------------------------------------------

/// Redraw each factor-loading column from `Dirichlet(eta + A_.k)`.
pub fn update_phi(stats: &AugmentedStats, eta: f64, stream: &RngStream) -> Result<Array2<f64>> {
    update_phi_keyed(stats, eta, stream, &identity_keys(stats.n_factors()))
}

fn update_phi_keyed(
    stats: &AugmentedStats,
    eta: f64,
    stream: &RngStream,
    factor_keys: &[u64],
) -> Result<Array2<f64>> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    let (g, k) = stats.ell_gene_factor.dim();
    let base = stream.substream(TAG_PHI);
    let mut phi = Array2::zeros((g, k));
    for kk in 0..k {
        let mut rng = base.substream(factor_keys[kk]).rng();
        let mut col = Vec::with_capacity(g);
        let mut sum = 0.0;
        for i in 0..g {
            let draw = sample_gamma(eta + stats.ell_gene_factor[(i, kk)] as f64, 1.0, &mut rng)?;
            sum += draw;
            col.push(draw);
        }
        for (i, v) in col.iter().enumerate() {
            phi[(i, kk)] = v / sum;
        }
    }
    Ok(phi)
}

/// Redraw each sample's proportion column from `Dirichlet(r + B_.j)`.
pub fn update_theta(stats: &AugmentedStats, r: &[f64], stream: &RngStream) -> Result<Array2<f64>> {
    update_theta_keyed(stats, r, stream, &identity_keys(stats.n_factors()))
}

fn update_theta_keyed(
    stats: &AugmentedStats,
    r: &[f64],
    stream: &RngStream,
    factor_keys: &[u64],
) -> Result<Array2<f64>> {
    let (k, s) = stats.ell_factor_sample.dim();
    if r.len() != k {
        return Err(Error::dims("r must have one entry per factor".to_string()));
    }
    let base = stream.substream(TAG_THETA);
    let mut theta = Array2::zeros((k, s));
    for j in 0..s {
        let sample_stream = base.substream(j as u64);
        let mut col = Vec::with_capacity(k);
        let mut sum = 0.0;
        for kk in 0..k {
            let mut rng = sample_stream.substream(factor_keys[kk]).rng();
            let shape = r[kk] + stats.ell_factor_sample[(kk, j)] as f64;
            let draw = sample_gamma(shape, 1.0, &mut rng)?;
            sum += draw;
            col.push(draw);
        }
        for (kk, v) in col.iter().enumerate() {
            theta[(kk, j)] = v / sum;
        }
    }
    Ok(theta)
}

/// Redraw the per-sample factor scales from
/// `Gamma(sum_k r_k + sum_ik l_ijk, 1/(c_j + q_j))` with `q_j = -ln(1-p_j)`.
pub fn update_zeta(
    stats: &AugmentedStats,
    state: &ModelState,
    stream: &RngStream,
) -> Result<Vec<f64>> {
    let (k, s) = stats.ell_factor_sample.dim();
    let sum_r: f64 = state.r.iter().sum();
    let base = stream.substream(TAG_ZETA);
    let mut zeta = Vec::with_capacity(s);
    for j in 0..s {
        let mut tables = 0u64;
        for kk in 0..k {
            tables += stats.ell_factor_sample[(kk, j)];
        }
        let rate = state.c[j] + q_of(state.p[j]);
        let mut rng = base.substream(j as u64).rng();
        zeta.push(sample_gamma(sum_r + tables as f64, 1.0 / rate, &mut rng)?);
    }
    Ok(zeta)
}

/// Redraw the gene-effect simplex and its scale:
/// `alpha ~ Dirichlet(delta + per-gene effect tables)` and
/// `lambda ~ Gamma(u0 + total effect tables, 1/(v0 + sum_j q_j))`.
pub fn update_alpha_lambda(
    stats: &AugmentedStats,
    state: &ModelState,
    hp: &Hyperparameters,
    stream: &RngStream,
) -> Result<(Vec<f64>, f64)> {
    let g = stats.n_genes();
    let mut rng = stream.substream(TAG_ALPHA).rng();
    let mut alpha = Vec::with_capacity(g);
    let mut sum = 0.0;
    for i in 0..g {
        let draw = sample_gamma(hp.delta + stats.ell_gene_effect[i] as f64, 1.0, &mut rng)?;
        sum += draw;
        alpha.push(draw);
    }
    for a in &mut alpha {
        *a /= sum;
    }
    let q_total: f64 = state.p.iter().map(|&p| q_of(p)).sum();
    let mut lambda_rng = stream.substream(TAG_LAMBDA).rng();
    let lambda = sample_gamma(
        hp.u0 + stats.ell_gene_effect_total as f64,
        1.0 / (hp.v0 + q_total),
        &mut lambda_rng,
    )?;
    Ok((alpha, lambda))
}

/// Redraw `gamma0` and `r` through the second and third CRT table levels,
/// filling `stats.ell_second_level` and `stats.ell_third_level`.
///
/// With `p~_j = q_j/(c_j + q_j)`: `l'_jk ~ CRT(B_kj, r_k)`, then
/// `l''_k ~ CRT(sum_j l'_jk, gamma0/K)`,
/// `gamma0 ~ Gamma(g0 + sum_k l''_k, 1/(h0 + ln(1 + Q/c0)))` with
/// `Q = sum_j ln(1 + q_j/c_j)`, and finally
/// `r_k ~ Gamma(gamma0/K + sum_j l'_jk, 1/(c0 + Q))` under the fresh
/// `gamma0`. Drawing `gamma0` before `r` keeps the marginalized update
/// composition valid.
pub fn update_r_gamma0(
    stats: &mut AugmentedStats,
    state: &ModelState,
    hp: &Hyperparameters,
    stream: &RngStream,
) -> Result<(Vec<f64>, f64)> {
    let keys = identity_keys(stats.n_factors());
    update_r_gamma0_keyed(stats, state, hp, stream, &keys)
}

fn update_r_gamma0_keyed(
    stats: &mut AugmentedStats,
    state: &ModelState,
    hp: &Hyperparameters,
    stream: &RngStream,
    factor_keys: &[u64],
) -> Result<(Vec<f64>, f64)> {
    let (k, s) = stats.ell_factor_sample.dim();
    let kf = k as f64;

    let second_base = stream.substream(TAG_SECOND);
    let mut second = Array2::zeros((k, s));
    let mut level_totals = vec![0u64; k];
    for kk in 0..k {
        let factor_stream = second_base.substream(factor_keys[kk]);
        for j in 0..s {
            let mut rng = factor_stream.substream(j as u64).rng();
            let tables = sample_crt(stats.ell_factor_sample[(kk, j)], state.r[kk], &mut rng)?;
            second[(kk, j)] = tables;
            level_totals[kk] += tables;
        }
    }

    // Q = sum_j -ln(1 - p~_j) written as ln(1 + q_j/c_j) for stability.
    let big_q: f64 = (0..s)
        .map(|j| (q_of(state.p[j]) / state.c[j]).ln_1p())
        .sum();

    let third_base = stream.substream(TAG_THIRD);
    let mut third = vec![0u64; k];
    for kk in 0..k {
        let mut rng = third_base.substream(factor_keys[kk]).rng();
        third[kk] = sample_crt(level_totals[kk], state.gamma0 / kf, &mut rng)?;
    }

    let third_total: u64 = third.iter().sum();
    let gamma0_rate = hp.h0 + (big_q / state.c0).ln_1p();
    let mut gamma0_rng = stream.substream(TAG_GAMMA0).rng();
    let gamma0 = sample_gamma(
        hp.g0 + third_total as f64,
        1.0 / gamma0_rate,
        &mut gamma0_rng,
    )?;

    let r_base = stream.substream(TAG_R);
    let r_rate = state.c0 + big_q;
    let mut r = Vec::with_capacity(k);
    for kk in 0..k {
        let mut rng = r_base.substream(factor_keys[kk]).rng();
        r.push(sample_gamma(
            gamma0 / kf + level_totals[kk] as f64,
            1.0 / r_rate,
            &mut rng,
        )?);
    }

    stats.ell_second_level = second;
    stats.ell_third_level = third;
    Ok((r, gamma0))
}

/// Redraw `c_j`, `c0`, and `p_j` from their conjugate conditionals:
/// `c_j ~ Gamma(e0 + sum_k r_k, 1/(f0 + zeta_j))`,
/// `c0 ~ Gamma(e0 + gamma0, 1/(f0 + sum_k r_k))`,
/// `p_j ~ Beta(a0 + y_.j, b0 + lambda + zeta_j)` clamped inside (0, 1).
pub fn update_c_p(
    _stats: &AugmentedStats,
    state: &ModelState,
    hp: &Hyperparameters,
    y: &CountMatrix,
    stream: &RngStream,
) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let s = state.n_samples();
    let col_sums = y.column_sums();
    let sum_r: f64 = state.r.iter().sum();
    let c_base = stream.substream(TAG_C);
    let p_base = stream.substream(TAG_P);
    let mut c = Vec::with_capacity(s);
    let mut p = Vec::with_capacity(s);
    for j in 0..s {
        let mut c_rng = c_base.substream(j as u64).rng();
        c.push(sample_gamma(
            hp.e0 + sum_r,
            1.0 / (hp.f0 + state.zeta[j]),
            &mut c_rng,
        )?);
        let mut p_rng = p_base.substream(j as u64).rng();
        let draw = sample_beta(
            hp.a0 + col_sums[j] as f64,
            hp.b0 + state.lambda + state.zeta[j],
            &mut p_rng,
        )?;
        p.push(draw.clamp(P_CLAMP, 1.0 - P_CLAMP));
    }
    let mut c0_rng = stream.substream(TAG_C0).rng();
    let c0 = sample_gamma(hp.e0 + state.gamma0, 1.0 / (hp.f0 + sum_r), &mut c0_rng)?;
    Ok((c, c0, p))
}

// ---------------------------------------------------------------------------
// Sweep and chain
// ---------------------------------------------------------------------------

/// One full Gibbs sweep with default options.
pub fn gibbs_sweep(
    y: &CountMatrix,
    state: &ModelState,
    hp: &Hyperparameters,
    stream: &RngStream,
) -> Result<ModelState> {
    gibbs_sweep_with(y, state, hp, stream, &SweepOptions::default())
}

/// One full Gibbs sweep: allocate tables, then redraw `Phi`, `(gamma0, r)`,
/// `Theta`, `zeta`, `(alpha, lambda)`, and `(c, c0, p)` in that order.
pub fn gibbs_sweep_with(
    y: &CountMatrix,
    state: &ModelState,
    hp: &Hyperparameters,
    stream: &RngStream,
    opts: &SweepOptions,
) -> Result<ModelState> {
    hp.validate()?;
    let identity;
    let keys = match opts.factor_keys {
        Some(k) => {
            if k.len() != state.n_factors() {
                return Err(Error::dims("one factor key per factor required".to_string()));
            }
            k
        }
        None => {
            identity = identity_keys(state.n_factors());
            &identity
        }
    };
    let mut stats = allocate_tables_keyed(y, state, stream, keys, opts.crt_exact_head)?;
    let mut next = state.clone();
    next.phi = update_phi_keyed(&stats, hp.eta, stream, keys)?;
    let (r, gamma0) = update_r_gamma0_keyed(&mut stats, &next, hp, stream, keys)?;
    next.r = r;
    next.gamma0 = gamma0;
    next.theta = update_theta_keyed(&stats, &next.r, stream, keys)?;
    next.zeta = update_zeta(&stats, &next, stream)?;
    let (alpha, lambda) = update_alpha_lambda(&stats, &next, hp, stream)?;
    next.alpha = alpha;
    next.lambda = lambda;
    let (c, c0, p) = update_c_p(&stats, &next, hp, y, stream)?;
    next.c = c;
    next.c0 = c0;
    next.p = p;
    Ok(next)
}

/// Draw an initial state: `gamma0`, `c0`, `c_j`, `lambda`, and `r_k` start
/// at their prior means; everything else is drawn from its prior.
///
/// Starting every `r_k` at the common prior mean (rather than a prior draw)
/// keeps the factors symmetric at launch: a drawn `r_k` of 1e-6 hands its
/// factor no proportion mass anywhere, no tables ever flow to it, and the
/// factor cannot revive within any practical burn-in.
pub fn init_state(
    g: usize,
    s: usize,
    k: usize,
    hp: &Hyperparameters,
    stream: &RngStream,
) -> Result<ModelState> {
    hp.validate()?;
    if g == 0 || s == 0 || k == 0 {
        return Err(Error::invalid("g, s, k must all be at least 1".to_string()));
    }
    let mut rng = stream.rng();
    let gamma0 = hp.g0 / hp.h0;
    let c0 = hp.e0 / hp.f0;
    let c = vec![hp.e0 / hp.f0; s];
    let lambda = hp.u0 / hp.v0;
    let r = vec![gamma0 / (k as f64 * c0); k];
    let mut phi = Array2::zeros((g, k));
    for kk in 0..k {
        let col = sample_dirichlet(&vec![hp.eta; g], &mut rng)?;
        for i in 0..g {
            phi[(i, kk)] = col[i];
        }
    }
    let alpha = sample_dirichlet(&vec![hp.delta; g], &mut rng)?;
    let mut theta = Array2::zeros((k, s));
    for j in 0..s {
        let col = sample_dirichlet(&r, &mut rng)?;
        for kk in 0..k {
            theta[(kk, j)] = col[kk];
        }
    }
    let sum_r: f64 = r.iter().sum();
    let mut zeta = Vec::with_capacity(s);
    for j in 0..s {
        zeta.push(sample_gamma(sum_r, 1.0 / c[j], &mut rng)?);
    }
    let mut p = Vec::with_capacity(s);
    for _ in 0..s {
        p.push(sample_beta(hp.a0, hp.b0, &mut rng)?.clamp(P_CLAMP, 1.0 - P_CLAMP));
    }
    Ok(ModelState {
        phi,
        theta,
        alpha,
        lambda,
        zeta,
        p,
        r,
        c,
        gamma0,
        c0,
    })
}

/// Burn-in, iteration, thinning, and storage settings for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    /// Sweeps discarded before any draw is kept.
    pub burn_in: usize,
    /// Total sweeps, burn-in included.
    pub total_iterations: usize,
    /// Keep every `thin`-th post-burn-in draw.
    pub thin: usize,
    pub seed: u64,
    /// Keep full parameter draws rather than only streaming moments.
    pub store_draws: bool,
    /// Exact-head length for the hybrid CRT sampler; `None` = fully exact sum.
    pub crt_exact_head: Option<u64>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            burn_in: 1000,
            total_iterations: 2000,
            thin: 1,
            seed: 0,
            store_draws: false,
            crt_exact_head: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.total_iterations {
            return Err(Error::invalid(format!(
                "burn_in ({}) must be below total_iterations ({})",
                self.burn_in, self.total_iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin must be at least 1".to_string()));
        }
        Ok(())
    }

    /// Number of draws a chain with this config keeps.
    pub fn kept_draws(&self) -> usize {
        (self.total_iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// Streaming first and second moments of the kept draws (Welford).
#[derive(Debug, Clone)]
pub struct StreamingMoments {
    pub count: usize,
    pub phi_mean: Array2<f64>,
    pub phi_m2: Array2<f64>,
    pub theta_mean: Array2<f64>,
    pub theta_m2: Array2<f64>,
    pub lambda_mean: f64,
    pub lambda_m2: f64,
    pub zeta_mean: Vec<f64>,
    pub zeta_m2: Vec<f64>,
    pub p_mean: Vec<f64>,
    pub p_m2: Vec<f64>,
}

impl StreamingMoments {
    pub fn new(g: usize, k: usize, s: usize) -> Self {
        StreamingMoments {
            count: 0,
            phi_mean: Array2::zeros((g, k)),
            phi_m2: Array2::zeros((g, k)),
            theta_mean: Array2::zeros((k, s)),
            theta_m2: Array2::zeros((k, s)),
            lambda_mean: 0.0,
            lambda_m2: 0.0,
            zeta_mean: vec![0.0; s],
            zeta_m2: vec![0.0; s],
            p_mean: vec![0.0; s],
            p_m2: vec![0.0; s],
        }
    }

    /// Fold one kept draw into the running moments.
    pub fn update(&mut self, state: &ModelState) {
        self.count += 1;
        let n = self.count as f64;
        fn step(mean: &mut f64, m2: &mut f64, x: f64, n: f64) {
            let delta = x - *mean;
            *mean += delta / n;
            *m2 += delta * (x - *mean);
        }
        for (m, (s2, &x)) in self
            .phi_mean
            .iter_mut()
            .zip(self.phi_m2.iter_mut().zip(state.phi.iter()))
        {
            step(m, s2, x, n);
        }
        for (m, (s2, &x)) in self
            .theta_mean
            .iter_mut()
            .zip(self.theta_m2.iter_mut().zip(state.theta.iter()))
        {
            step(m, s2, x, n);
        }
        step(&mut self.lambda_mean, &mut self.lambda_m2, state.lambda, n);
        for j in 0..state.n_samples() {
            step(&mut self.zeta_mean[j], &mut self.zeta_m2[j], state.zeta[j], n);
            step(&mut self.p_mean[j], &mut self.p_m2[j], state.p[j], n);
        }
    }
}

/// Post-burn-in output of one chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub k: usize,
    /// Kept draws, present when the config stored them.
    pub draws: Option<Vec<ModelState>>,
    /// Streaming moments of the kept draws, always present.
    pub moments: StreamingMoments,
    /// Full log-likelihood of every kept draw.
    pub loglik_trace: Vec<f64>,
    /// Wall-clock seconds per sweep, burn-in included.
    pub sweep_seconds: Vec<f64>,
}

impl ChainOutput {
    pub fn kept(&self) -> usize {
        self.loglik_trace.len()
    }
}

/// Run one chain at fixed K: prior initialization, `total_iterations`
/// sweeps, post-burn-in thinned collection.
pub fn run_chain(
    y: &CountMatrix,
    k: usize,
    hp: &Hyperparameters,
    cfg: &ChainConfig,
) -> Result<ChainOutput> {
    cfg.validate()?;
    hp.validate()?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1".to_string()));
    }
    let chain_stream = RngStream::new(cfg.seed)
        .substream(TAG_CHAIN)
        .substream(k as u64);
    let mut state = init_state(
        y.n_genes(),
        y.n_samples(),
        k,
        hp,
        &chain_stream.substream(TAG_INIT),
    )?;
    let opts = SweepOptions {
        crt_exact_head: cfg.crt_exact_head,
        factor_keys: None,
    };
    let sweep_base = chain_stream.substream(TAG_SWEEP);
    let mut draws = if cfg.store_draws { Some(Vec::new()) } else { None };
    let mut moments = StreamingMoments::new(y.n_genes(), k, y.n_samples());
    let mut loglik_trace = Vec::new();
    let mut sweep_seconds = Vec::with_capacity(cfg.total_iterations);
    for iter in 1..=cfg.total_iterations {
        let start = Instant::now();
        state = gibbs_sweep_with(y, &state, hp, &sweep_base.substream(iter as u64), &opts)?;
        sweep_seconds.push(start.elapsed().as_secs_f64());
        if iter > cfg.burn_in && (iter - cfg.burn_in - 1) % cfg.thin == 0 {
            loglik_trace.push(full_log_likelihood(y, &state)?);
            moments.update(&state);
            if let Some(d) = draws.as_mut() {
                d.push(state.clone());
            }
        }
    }
    Ok(ChainOutput {
        k,
        draws,
        moments,
        loglik_trace,
        sweep_seconds,
    })
}

/// Sample autocorrelation of a trace at lags `0..=max_lag`.
///
/// A constant trace is defined to have autocorrelation 1 at lag 0 and 0
/// everywhere else.
pub fn autocorrelation(trace: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if trace.len() <= max_lag {
        return Err(Error::invalid(format!(
            "trace length {} must exceed max_lag {}",
            trace.len(),
            max_lag
        )));
    }
    let n = trace.len();
    let mean = trace.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = trace.iter().map(|x| x - mean).collect();
    let c0: f64 = centered.iter().map(|d| d * d).sum::<f64>() / n as f64;
    let mut acf = Vec::with_capacity(max_lag + 1);
    acf.push(1.0);
    if c0 == 0.0 {
        acf.resize(max_lag + 1, 0.0);
        return Ok(acf);
    }
    for lag in 1..=max_lag {
        let cov: f64 = (0..n - lag).map(|t| centered[t] * centered[t + lag]).sum::<f64>()
            / n as f64;
        acf.push(cov / c0);
    }
    Ok(acf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    fn tiny_state(g: usize, s: usize, k: usize, seed: u64) -> ModelState {
        let hp = Hyperparameters {
            a0: 5.0,
            b0: 2.0,
            u0: 2.0,
            v0: 2.0,
            eta: 0.5,
            delta: 0.5,
            ..Hyperparameters::default()
        };
        init_state(g, s, k, &hp, &RngStream::new(seed)).unwrap()
    }

    fn tiny_counts(g: usize, s: usize, seed: u64) -> CountMatrix {
        use crate::dist::sample_negative_binomial;
        let mut rng = RngStream::new(seed).substream(99).rng();
        let mut vals = Array2::zeros((g, s));
        for i in 0..g {
            for j in 0..s {
                vals[(i, j)] = sample_negative_binomial(2.0, 0.6, &mut rng).unwrap();
            }
        }
        CountMatrix::from_values(vals).unwrap()
    }

    #[test]
    fn zero_counts_allocate_zero_tables() {
        let state = tiny_state(4, 3, 2, 1);
        let y = CountMatrix::from_values(Array2::zeros((4, 3))).unwrap();
        let stats = allocate_tables(&y, &state, &RngStream::new(5)).unwrap();
        assert_eq!(stats.ell_gene_factor.iter().sum::<u64>(), 0);
        assert_eq!(stats.ell_factor_sample.iter().sum::<u64>(), 0);
        assert_eq!(stats.ell_gene_effect_total, 0);
    }

    #[test]
    fn degenerate_gene_effect_sends_all_tables_to_the_factor() {
        // K = 1 with lambda at the floor: every table lands in the factor.
        let mut state = tiny_state(4, 3, 1, 2);
        state.lambda = 1e-300;
        let y = tiny_counts(4, 3, 3);
        let stats = allocate_tables(&y, &state, &RngStream::new(6)).unwrap();
        assert_eq!(stats.ell_gene_effect_total, 0);
        assert!(stats.ell_gene_factor.iter().sum::<u64>() > 0);
        let a: u64 = stats.ell_gene_factor.column(0).iter().sum();
        let b: u64 = stats.ell_factor_sample.row(0).iter().sum();
        assert_eq!(a, b);
    }

    #[test]
    fn allocation_marginals_are_consistent() {
        let state = tiny_state(6, 4, 3, 7);
        let y = tiny_counts(6, 4, 8);
        let stats = allocate_tables(&y, &state, &RngStream::new(9)).unwrap();
        for kk in 0..3 {
            let a: u64 = stats.ell_gene_factor.column(kk).iter().sum();
            let b: u64 = stats.ell_factor_sample.row(kk).iter().sum();
            assert_eq!(a, b, "factor {kk} marginals disagree");
        }
        let effect_sum: u64 = stats.ell_gene_effect.iter().sum();
        assert_eq!(effect_sum, stats.ell_gene_effect_total);
    }

    #[test]
    fn update_phi_prior_reduction() {
        // With no tables the column is Dirichlet(eta, ..., eta).
        let stats = AugmentedStats::zeros(3, 1, 2);
        let root = RngStream::new(11);
        let mut first = Vec::new();
        for t in 0..20_000 {
            let phi = update_phi(&stats, 0.1, &root.substream(t)).unwrap();
            first.push(phi[(0, 0)]);
        }
        let (mean, se) = mean_and_se(&first);
        assert!((mean - 1.0 / 3.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn update_phi_posterior_mean() {
        // A_.k = (10, 0, 0), eta = 0.1: E[phi_1k] = 10.1 / 10.3.
        let mut stats = AugmentedStats::zeros(3, 1, 2);
        stats.ell_gene_factor[(0, 0)] = 10;
        let root = RngStream::new(12);
        let mut first = Vec::new();
        for t in 0..20_000 {
            let phi = update_phi(&stats, 0.1, &root.substream(t)).unwrap();
            first.push(phi[(0, 0)]);
        }
        let (mean, se) = mean_and_se(&first);
        let expect = 10.1 / 10.3;
        assert!((mean - expect).abs() < 3.0 * se, "mean {mean} expect {expect} se {se}");
    }

    #[test]
    fn update_phi_permutation_equivariance() {
        // Permuting gene rows of the stats permutes the concentration, so the
        // marginal means follow the permutation.
        let mut stats = AugmentedStats::zeros(3, 1, 1);
        stats.ell_gene_factor[(1, 0)] = 25;
        let root = RngStream::new(13);
        let mut m0 = Vec::new();
        let mut m1 = Vec::new();
        for t in 0..20_000 {
            let phi = update_phi(&stats, 0.5, &root.substream(t)).unwrap();
            m0.push(phi[(0, 0)]);
            m1.push(phi[(1, 0)]);
        }
        let (mean0, _) = mean_and_se(&m0);
        let (mean1, se1) = mean_and_se(&m1);
        assert!((mean1 - 25.5 / 26.5).abs() < 3.0 * se1);
        assert!(mean0 < mean1);
    }

    #[test]
    fn update_theta_posterior_mean() {
        // B_.j = (0, 50), r = (1, 1): E[theta_2j] = 51/52.
        let mut stats = AugmentedStats::zeros(2, 2, 1);
        stats.ell_factor_sample[(1, 0)] = 50;
        let root = RngStream::new(14);
        let mut second = Vec::new();
        for t in 0..20_000 {
            let theta = update_theta(&stats, &[1.0, 1.0], &root.substream(t)).unwrap();
            second.push(theta[(1, 0)]);
        }
        let (mean, se) = mean_and_se(&second);
        assert!((mean - 51.0 / 52.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn update_theta_columns_are_independent() {
        let stats = AugmentedStats::zeros(2, 2, 2);
        let root = RngStream::new(15);
        let mut a = Vec::new();
        let mut b = Vec::new();
        for t in 0..20_000 {
            let theta = update_theta(&stats, &[1.0, 1.0], &root.substream(t)).unwrap();
            a.push(theta[(0, 0)]);
            b.push(theta[(0, 1)]);
        }
        let (ma, _) = mean_and_se(&a);
        let (mb, _) = mean_and_se(&b);
        let n = a.len() as f64;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n).sqrt();
        let sb = (b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n).sqrt();
        let corr = cov / (sa * sb);
        assert!(corr.abs() < 3.0 / n.sqrt(), "corr {corr}");
    }

    #[test]
    fn update_zeta_prior_reduction_and_posterior_mean() {
        // No tables, r = (1,1), c_j = 1, p -> 0: zeta ~ Gamma(2, 1).
        let stats = AugmentedStats::zeros(2, 2, 1);
        let mut state = tiny_state(2, 1, 2, 16);
        state.r = vec![1.0, 1.0];
        state.c = vec![1.0];
        state.p = vec![1e-12];
        let root = RngStream::new(17);
        let mut draws = Vec::new();
        for t in 0..20_000 {
            let z = update_zeta(&stats, &state, &root.substream(t)).unwrap();
            draws.push(z[0]);
        }
        let (mean, se) = mean_and_se(&draws);
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean} se {se}");

        // 30 tables, q_j = 1 (p = 1 - e^{-1}), c_j = 1: mean 32/2 = 16.
        let mut stats2 = AugmentedStats::zeros(2, 2, 1);
        stats2.ell_factor_sample[(0, 0)] = 18;
        stats2.ell_factor_sample[(1, 0)] = 12;
        state.p = vec![1.0 - (-1.0f64).exp()];
        let mut draws2 = Vec::new();
        for t in 0..20_000 {
            let z = update_zeta(&stats2, &state, &root.substream(100_000 + t)).unwrap();
            draws2.push(z[0]);
        }
        let (mean2, se2) = mean_and_se(&draws2);
        assert!((mean2 - 16.0).abs() < 3.0 * se2, "mean {mean2} se {se2}");
    }

    #[test]
    fn update_zeta_is_monotone_in_tables() {
        let mut state = tiny_state(2, 1, 2, 18);
        state.r = vec![1.0, 1.0];
        state.c = vec![1.0];
        state.p = vec![0.5];
        let root = RngStream::new(19);
        let mut means = Vec::new();
        for tables in [0u64, 20, 200] {
            let mut stats = AugmentedStats::zeros(2, 2, 1);
            stats.ell_factor_sample[(0, 0)] = tables;
            let mut draws = Vec::new();
            for t in 0..5_000 {
                draws.push(update_zeta(&stats, &state, &root.substream(t)).unwrap()[0]);
            }
            means.push(mean_and_se(&draws).0);
        }
        assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
    }

    #[test]
    fn update_alpha_lambda_prior_and_posterior() {
        let hp = Hyperparameters::default();
        let mut state = tiny_state(3, 2, 2, 20);
        state.p = vec![1e-12, 1e-12];
        // Prior reduction: no tables and q ~ 0 leaves lambda ~ Gamma(u0, 1/v0).
        let stats = AugmentedStats::zeros(3, 2, 2);
        let root = RngStream::new(21);
        let mut lambdas = Vec::new();
        for t in 0..20_000 {
            let (_, l) = update_alpha_lambda(&stats, &state, &hp, &root.substream(t)).unwrap();
            lambdas.push(l);
        }
        let (mean, se) = mean_and_se(&lambdas);
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");

        // 100 tables, sum q = 10: mean (100+100)/(100+10).
        let mut stats2 = AugmentedStats::zeros(3, 2, 2);
        stats2.ell_gene_effect = vec![60, 30, 10];
        stats2.ell_gene_effect_total = 100;
        let q = 5.0f64;
        state.p = vec![1.0 - (-q).exp(), 1.0 - (-q).exp()];
        let mut lambdas2 = Vec::new();
        let mut alpha_first = Vec::new();
        for t in 0..20_000 {
            let (a, l) =
                update_alpha_lambda(&stats2, &state, &hp, &root.substream(50_000 + t)).unwrap();
            lambdas2.push(l);
            alpha_first.push(a[0]);
        }
        let (mean2, se2) = mean_and_se(&lambdas2);
        assert!((mean2 - 200.0 / 110.0).abs() < 3.0 * se2, "mean {mean2} se {se2}");
        // alpha marginal mean proportional to delta + per-gene tables.
        let (am, ase) = mean_and_se(&alpha_first);
        let expect = (hp.delta + 60.0) / (3.0 * hp.delta + 100.0);
        assert!((am - expect).abs() < 3.0 * ase, "alpha mean {am} expect {expect}");
    }

    #[test]
    fn update_r_gamma0_prior_reduction() {
        let hp = Hyperparameters::default();
        let mut state = tiny_state(2, 2, 2, 22);
        state.gamma0 = 1.0;
        state.c0 = 1.0;
        state.c = vec![1.0, 1.0];
        state.p = vec![1e-12, 1e-12];
        let root = RngStream::new(23);
        let mut r_draws = Vec::new();
        let mut g_draws = Vec::new();
        for t in 0..20_000 {
            let mut stats = AugmentedStats::zeros(2, 2, 2);
            let (r, g0) = update_r_gamma0(&mut stats, &state, &hp, &root.substream(t)).unwrap();
            assert_eq!(stats.ell_second_level.iter().sum::<u64>(), 0);
            assert_eq!(stats.ell_third_level.iter().sum::<u64>(), 0);
            r_draws.push(r[0]);
            g_draws.push(g0);
        }
        // q ~ 0 so Q ~ 0: gamma0 ~ Gamma(g0, 1/h0) and, by the tower rule,
        // E[r] = E[gamma0] / (K c0) = 0.5.
        let (gm, gse) = mean_and_se(&g_draws);
        assert!((gm - 1.0).abs() < 3.0 * gse, "gamma0 mean {gm}");
        let (rm, rse) = mean_and_se(&r_draws);
        assert!((rm - 0.5).abs() < 3.0 * rse, "r mean {rm} se {rse}");
    }

    #[test]
    fn update_r_gamma0_crt_of_one_is_one() {
        let hp = Hyperparameters::default();
        let state = tiny_state(2, 1, 2, 24);
        let root = RngStream::new(25);
        for t in 0..200 {
            let mut stats = AugmentedStats::zeros(2, 2, 1);
            stats.ell_factor_sample[(0, 0)] = 1;
            update_r_gamma0(&mut stats, &state, &hp, &root.substream(t)).unwrap();
            assert_eq!(stats.ell_second_level[(0, 0)], 1);
        }
    }

    #[test]
    fn update_c_p_examples() {
        let hp = Hyperparameters::default();
        let mut state = tiny_state(2, 1, 2, 26);
        state.r = vec![0.7, 0.8];
        state.zeta = vec![1.0];
        state.lambda = 1.0;
        let stats = AugmentedStats::zeros(2, 2, 1);
        // y_.j = 0, lambda + zeta = 2: p ~ Beta(0.01, 2.01), mean 0.01/2.02.
        let y0 = CountMatrix::from_values(Array2::zeros((2, 1))).unwrap();
        let root = RngStream::new(27);
        let mut ps = Vec::new();
        let mut cs = Vec::new();
        for t in 0..20_000 {
            let (c, _, p) = update_c_p(&stats, &state, &hp, &y0, &root.substream(t)).unwrap();
            ps.push(p[0]);
            cs.push(c[0]);
        }
        let (pm, pse) = mean_and_se(&ps);
        assert!((pm - 0.01 / 2.02).abs() < 3.0 * pse, "p mean {pm}");
        let (cm, cse) = mean_and_se(&cs);
        // c_j ~ Gamma(e0 + sum r, 1/(f0 + zeta)) = Gamma(2.5, 1/2).
        assert!((cm - 1.25).abs() < 3.0 * cse, "c mean {cm}");

        // Large column total concentrates p near 1.
        let y_big = CountMatrix::from_values(array![[600_000u64], [400_000u64]]).unwrap();
        state.zeta = vec![9.0];
        let mut ps2 = Vec::new();
        for t in 0..20_000 {
            let (_, _, p) =
                update_c_p(&stats, &state, &hp, &y_big, &root.substream(40_000 + t)).unwrap();
            ps2.push(p[0]);
        }
        let (pm2, pse2) = mean_and_se(&ps2);
        let expect = (0.01 + 1e6) / (0.01 + 1e6 + 0.01 + 10.0);
        assert!((pm2 - expect).abs() < 3.0 * pse2 + 1e-9, "p mean {pm2} expect {expect}");
    }

    #[test]
    fn sweep_preserves_invariants_over_many_iterations() {
        let hp = Hyperparameters {
            a0: 5.0,
            b0: 2.0,
            ..Hyperparameters::default()
        };
        let y = tiny_counts(10, 5, 30);
        let mut state = init_state(10, 5, 3, &hp, &RngStream::new(31)).unwrap();
        let sweep_base = RngStream::new(32);
        for it in 0..100 {
            state = gibbs_sweep(&y, &state, &hp, &sweep_base.substream(it)).unwrap();
            state.validate().unwrap();
        }
    }

    #[test]
    fn chains_are_deterministic() {
        let y = tiny_counts(6, 4, 33);
        let hp = Hyperparameters {
            a0: 5.0,
            b0: 2.0,
            ..Hyperparameters::default()
        };
        let cfg = ChainConfig {
            burn_in: 5,
            total_iterations: 15,
            thin: 1,
            seed: 42,
            store_draws: true,
            crt_exact_head: None,
        };
        let a = run_chain(&y, 2, &hp, &cfg).unwrap();
        let b = run_chain(&y, 2, &hp, &cfg).unwrap();
        assert_eq!(a.loglik_trace.len(), 10);
        for (x, z) in a.loglik_trace.iter().zip(&b.loglik_trace) {
            assert_eq!(x.to_bits(), z.to_bits());
        }
        let da = a.draws.unwrap();
        let db = b.draws.unwrap();
        for (sa, sb) in da.iter().zip(db.iter()) {
            assert_eq!(sa.lambda.to_bits(), sb.lambda.to_bits());
            for (x, z) in sa.phi.iter().zip(sb.phi.iter()) {
                assert_eq!(x.to_bits(), z.to_bits());
            }
        }
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn chains_are_worker_count_invariant() {
        let y = tiny_counts(8, 4, 34);
        let hp = Hyperparameters {
            a0: 5.0,
            b0: 2.0,
            ..Hyperparameters::default()
        };
        let cfg = ChainConfig {
            burn_in: 2,
            total_iterations: 8,
            thin: 1,
            seed: 7,
            store_draws: true,
            crt_exact_head: None,
        };
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = pool1.install(|| run_chain(&y, 3, &hp, &cfg)).unwrap();
        let b = pool4.install(|| run_chain(&y, 3, &hp, &cfg)).unwrap();
        for (x, z) in a.loglik_trace.iter().zip(&b.loglik_trace) {
            assert_eq!(x.to_bits(), z.to_bits());
        }
    }

    fn swap_two_factors(state: &ModelState) -> ModelState {
        let mut out = state.clone();
        let g = state.n_genes();
        let s = state.n_samples();
        for i in 0..g {
            out.phi[(i, 0)] = state.phi[(i, 1)];
            out.phi[(i, 1)] = state.phi[(i, 0)];
        }
        for j in 0..s {
            out.theta[(0, j)] = state.theta[(1, j)];
            out.theta[(1, j)] = state.theta[(0, j)];
        }
        out.r = vec![state.r[1], state.r[0]];
        out
    }

    #[test]
    fn label_switching_symmetry_at_k2() {
        // Relabeling the factors of the initial state, with the factor
        // substream keys permuted the same way, relabels the trajectory
        // bitwise.
        let y = tiny_counts(5, 3, 35);
        let hp = Hyperparameters {
            a0: 5.0,
            b0: 2.0,
            ..Hyperparameters::default()
        };
        let state = init_state(5, 3, 2, &hp, &RngStream::new(36)).unwrap();
        let swapped = swap_two_factors(&state);
        let base = RngStream::new(37);
        let mut a = state;
        let mut b = swapped;
        for it in 0..5u64 {
            let stream = base.substream(it);
            a = gibbs_sweep_with(
                &y,
                &a,
                &hp,
                &stream,
                &SweepOptions {
                    crt_exact_head: None,
                    factor_keys: Some(&[0, 1]),
                },
            )
            .unwrap();
            b = gibbs_sweep_with(
                &y,
                &b,
                &hp,
                &stream,
                &SweepOptions {
                    crt_exact_head: None,
                    factor_keys: Some(&[1, 0]),
                },
            )
            .unwrap();
        }
        let a_swapped = swap_two_factors(&a);
        for (x, z) in a_swapped.phi.iter().zip(b.phi.iter()) {
            assert_eq!(x.to_bits(), z.to_bits());
        }
        for (x, z) in a_swapped.theta.iter().zip(b.theta.iter()) {
            assert_eq!(x.to_bits(), z.to_bits());
        }
        for (x, z) in a_swapped.r.iter().zip(b.r.iter()) {
            assert_eq!(x.to_bits(), z.to_bits());
        }
        assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
        assert_eq!(a.gamma0.to_bits(), b.gamma0.to_bits());
        for (x, z) in a.p.iter().zip(b.p.iter()) {
            assert_eq!(x.to_bits(), z.to_bits());
        }
    }

    #[test]
    fn chain_config_counts_kept_draws() {
        let cfg = ChainConfig::default();
        assert_eq!(cfg.kept_draws(), 1000);
        let one = ChainConfig {
            burn_in: 0,
            total_iterations: 1,
            thin: 1,
            ..ChainConfig::default()
        };
        assert_eq!(one.kept_draws(), 1);
        let bad = ChainConfig {
            burn_in: 5,
            total_iterations: 5,
            ..ChainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_iteration_chain_keeps_one_draw() {
        let y = tiny_counts(4, 3, 40);
        let hp = Hyperparameters {
            a0: 5.0,
            b0: 2.0,
            ..Hyperparameters::default()
        };
        let cfg = ChainConfig {
            burn_in: 0,
            total_iterations: 1,
            thin: 1,
            seed: 1,
            store_draws: true,
            crt_exact_head: None,
        };
        let out = run_chain(&y, 2, &hp, &cfg).unwrap();
        assert_eq!(out.kept(), 1);
        assert_eq!(out.draws.unwrap().len(), 1);
        assert_eq!(out.moments.count, 1);
    }

    #[test]
    fn autocorrelation_white_noise_and_lag0() {
        use rand::Rng;
        let mut rng = RngStream::new(50).rng();
        let n = 10_000;
        let trace: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let acf = autocorrelation(&trace, 10).unwrap();
        assert_eq!(acf[0], 1.0);
        for lag in 1..=10 {
            assert!(
                acf[lag].abs() < 3.0 / (n as f64).sqrt() + 0.01,
                "lag {lag}: {}",
                acf[lag]
            );
        }
    }

    #[test]
    fn autocorrelation_ar1() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = RngStream::new(51).rng();
        let n = 20_000;
        let rho = 0.8;
        let mut trace = Vec::with_capacity(n);
        let mut x = 0.0;
        for _ in 0..n {
            let eps: f64 = StandardNormal.sample(&mut rng);
            x = rho * x + eps;
            trace.push(x);
        }
        let acf = autocorrelation(&trace, 3).unwrap();
        // SE of acf(1) for AR(1) is roughly sqrt((1 - rho^2)/n).
        let se = ((1.0 - rho * rho) / n as f64).sqrt();
        assert!((acf[1] - rho).abs() < 4.0 * se, "acf1 {}", acf[1]);
    }

    #[test]
    fn autocorrelation_constant_trace() {
        let acf = autocorrelation(&[2.0; 50], 5).unwrap();
        assert_eq!(acf, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(autocorrelation(&[1.0, 2.0], 5).is_err());
    }
}
