//! Exact samplers for every distribution the Gibbs engine needs.
//!
//! Each sampler validates its domain, is reproducible given a fixed
//! generator, and has an analytic moment oracle exercised by the test suite.
//! Gamma-family draws are floored at [`POSITIVE_FLOOR`] so that Dirichlet
//! concentrations far below one can never yield an exact zero.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma as GammaDist, Poisson};

use crate::error::{Error, Result};
use crate::special::ln_gamma_diff;

/// Smallest value returned by the positive-support samplers.
pub const POSITIVE_FLOOR: f64 = 1e-300;

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::invalid(msg.to_string()))
    }
}

/// Draw from Gamma(shape, scale) with mean `shape * scale`.
///
/// Shapes below one use the boosting identity `X_a = X_{a+1} * U^(1/a)`
/// evaluated in log space, so the draw is exact and never collapses to zero.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    require(shape.is_finite() && shape > 0.0, "gamma shape must be positive")?;
    require(scale.is_finite() && scale > 0.0, "gamma scale must be positive")?;
    if shape >= 1.0 {
        let d = GammaDist::new(shape, scale).expect("validated gamma parameters");
        return Ok(d.sample(rng).max(POSITIVE_FLOOR));
    }
    let boost = GammaDist::new(shape + 1.0, 1.0)
        .expect("validated gamma parameters")
        .sample(rng);
    let u: f64 = rng.gen();
    let ln_x = boost.ln() + u.ln() / shape + scale.ln();
    if ln_x <= POSITIVE_FLOOR.ln() {
        Ok(POSITIVE_FLOOR)
    } else {
        Ok(ln_x.exp())
    }
}

/// Draw from a Dirichlet distribution with the given concentration vector.
pub fn sample_dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    require(!concentration.is_empty(), "dirichlet needs at least one component")?;
    require(
        concentration.iter().all(|&a| a.is_finite() && a > 0.0),
        "dirichlet concentrations must be positive",
    )?;
    let mut draws = Vec::with_capacity(concentration.len());
    let mut sum = 0.0;
    for &a in concentration {
        let g = sample_gamma(a, 1.0, rng)?;
        sum += g;
        draws.push(g);
    }
    for d in &mut draws {
        *d /= sum;
    }
    Ok(draws)
}

/// Draw from Beta(a, b), clamped into the open unit interval.
pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    let x = sample_gamma(a, 1.0, rng)?;
    let y = sample_gamma(b, 1.0, rng)?;
    Ok((x / (x + y)).clamp(POSITIVE_FLOOR, 1.0 - 1e-16))
}

#[inline]
fn crt_bernoulli_range<R: Rng + ?Sized>(trials_from: u64, trials_to: u64, r: f64, rng: &mut R) -> u64 {
    let mut tables = 0u64;
    for t in trials_from..trials_to {
        // Success probability r / (r + t); multiplied out to avoid a division.
        let u: f64 = rng.gen();
        if u * (r + t as f64) < r {
            tables += 1;
        }
    }
    tables
}

/// Number of occupied tables when `x` customers are seated with
/// concentration `r`: the sum of `x` independent Bernoulli(r/(r+t-1)) draws.
pub fn sample_crt<R: Rng + ?Sized>(x: u64, r: f64, rng: &mut R) -> Result<u64> {
    require(r.is_finite() && r > 0.0, "crt concentration must be positive")?;
    Ok(crt_bernoulli_range(0, x, r, rng))
}

/// CRT draw that runs the Bernoulli sum for the first `exact_head` trials and
/// switches to exact waiting-time inversion for the remainder.
///
/// The tail inverts the survival function of the gap to the next occupied
/// table, `S(m) = exp(lnG(t0,r) - lnG(t0+m,r))` with
/// `lnG(z,r) = ln_gamma(z+r) - ln_gamma(z)`, so the draw follows the same law
/// as the plain sum; only the trial-by-trial uniforms are replaced. For
/// `x <= exact_head` the two samplers consume the generator identically.
pub fn sample_crt_hybrid<R: Rng + ?Sized>(
    x: u64,
    r: f64,
    exact_head: u64,
    rng: &mut R,
) -> Result<u64> {
    require(r.is_finite() && r > 0.0, "crt concentration must be positive")?;
    // Keep the sum exact until success probabilities drop below ~1/8.
    let head = exact_head.max(1).max((8.0 * r).ceil() as u64);
    if x <= head {
        return Ok(crt_bernoulli_range(0, x, r, rng));
    }
    let mut tables = crt_bernoulli_range(0, head, r, rng);
    let x_f = x as f64;
    let mut done = head as f64;
    while done < x_f {
        let base = ln_gamma_diff(done, r);
        let exp_draw = -rng.gen::<f64>().ln();
        let target = base + exp_draw;
        let remaining = (x_f - done) as u64;
        let pred = |m: u64| ln_gamma_diff(done + m as f64, r) >= target;
        if !pred(remaining) {
            break;
        }
        // Bracket the smallest m with pred(m) around a first-order guess,
        // then bisect. exp(e/r) - 1 solves r*ln(1 + m/t0) = e.
        let guess = (done * (exp_draw / r).exp_m1())
            .clamp(1.0, remaining as f64)
            .round() as u64;
        let guess = guess.clamp(1, remaining);
        let (mut lo, mut hi);
        if pred(guess) {
            hi = guess;
            lo = 0;
            let mut width = 1u64;
            while hi > 1 {
                let cand = hi.saturating_sub(width);
                if cand == 0 {
                    break;
                }
                if pred(cand) {
                    hi = cand;
                    width = width.saturating_mul(2);
                } else {
                    lo = cand;
                    break;
                }
            }
        } else {
            lo = guess;
            let mut width = 1u64;
            loop {
                let cand = (lo + width).min(remaining);
                if pred(cand) {
                    hi = cand;
                    break;
                }
                lo = cand;
                width = width.saturating_mul(2);
            }
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if pred(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        tables += 1;
        done += hi as f64;
    }
    Ok(tables)
}

/// Draw from the logarithmic-series distribution with mass
/// `p(u) = -p^u / (u ln(1-p))` on `{1, 2, ...}` (Kemp's method).
pub fn sample_logarithmic<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<u64> {
    require(p.is_finite() && p > 0.0 && p < 1.0, "logarithmic p must lie in (0, 1)")?;
    let ln_1mp = (-p).ln_1p();
    loop {
        let v: f64 = rng.gen();
        if v >= p {
            return Ok(1);
        }
        let u: f64 = rng.gen();
        let q = -(u * ln_1mp).exp_m1();
        if v <= q * q {
            let k = (1.0 + v.ln() / q.ln()).floor();
            if k < 1.0 || v == 0.0 {
                continue;
            }
            return Ok(k as u64);
        }
        return Ok(if v >= q { 1 } else { 2 });
    }
}

/// Sum of `ell` independent logarithmic(p) draws; zero iff `ell` is zero.
pub fn sample_sumlog<R: Rng + ?Sized>(ell: u64, p: f64, rng: &mut R) -> Result<u64> {
    require(p.is_finite() && p > 0.0 && p < 1.0, "sum-logarithmic p must lie in (0, 1)")?;
    let mut total = 0u64;
    for _ in 0..ell {
        total += sample_logarithmic(p, rng)?;
    }
    Ok(total)
}

/// Multinomial draw by conditional binomials: `n` trials over categories
/// with probabilities proportional to `weights`. The output sums to `n`.
pub fn sample_multinomial<R: Rng + ?Sized>(
    n: u64,
    weights: &[f64],
    rng: &mut R,
) -> Result<Vec<u64>> {
    require(!weights.is_empty(), "multinomial needs at least one category")?;
    require(
        weights.iter().all(|&w| w.is_finite() && w >= 0.0),
        "multinomial weights must be nonnegative",
    )?;
    let mut out = vec![0u64; weights.len()];
    if n == 0 {
        return Ok(out);
    }
    // Suffix sums give each conditional success probability without drift.
    let mut suffix = vec![0.0; weights.len() + 1];
    for i in (0..weights.len()).rev() {
        suffix[i] = suffix[i + 1] + weights[i];
    }
    require(suffix[0] > 0.0, "multinomial weights must not all be zero")?;
    let mut remaining = n;
    for i in 0..weights.len() {
        if remaining == 0 {
            break;
        }
        if suffix[i + 1] <= 0.0 {
            out[i] = remaining;
            break;
        }
        let prob = (weights[i] / suffix[i]).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, prob)
            .expect("validated binomial parameters")
            .sample(rng);
        out[i] = draw;
        remaining -= draw;
    }
    Ok(out)
}

/// Poisson draw; a mean of zero returns zero.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    require(mean.is_finite() && mean >= 0.0, "poisson mean must be nonnegative")?;
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).expect("validated poisson mean");
    Ok(d.sample(rng) as u64)
}

/// Negative binomial NB(r, p) drawn as a Poisson(Gamma(r, p/(1-p))) mixture;
/// mean `r p/(1-p)`, variance `r p/(1-p)^2`.
pub fn sample_negative_binomial<R: Rng + ?Sized>(r: f64, p: f64, rng: &mut R) -> Result<u64> {
    require(r.is_finite() && r > 0.0, "negative binomial shape must be positive")?;
    require(
        p.is_finite() && p > 0.0 && p < 1.0,
        "negative binomial p must lie in (0, 1)",
    )?;
    let mixing = sample_gamma(r, p / (1.0 - p), rng)?;
    sample_poisson(mixing, rng)
}
