//! Option resolution: command-line flags override config-file entries,
//! which override built-in defaults.

use std::collections::HashMap;
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};

use baycount::gibbs::ChainConfig;
use baycount::model::Hyperparameters;

/// Resolve one option through the flag > file > default precedence.
pub fn resolve<T>(
    flag: Option<T>,
    file: &HashMap<String, String>,
    key: &str,
    default: T,
) -> Result<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(raw) => raw
            .parse::<T>()
            .map_err(|e| anyhow!("config key {key} = {raw:?}: {e}")),
        None => Ok(default),
    }
}

/// Like [`resolve`] but for options without a default.
pub fn resolve_optional<T>(
    flag: Option<T>,
    file: &HashMap<String, String>,
    key: &str,
) -> Result<Option<T>>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    match file.get(key) {
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|e| anyhow!("config key {key} = {raw:?}: {e}")),
        None => Ok(None),
    }
}

/// Hyperparameter flags shared by `fit` and `select-k`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct HyperFlags {
    /// Dirichlet concentration for the loading columns.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Dirichlet concentration for the gene-effect simplex.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Beta shape a0 for p_j.
    #[arg(long)]
    pub a0: Option<f64>,
    /// Beta shape b0 for p_j.
    #[arg(long)]
    pub b0: Option<f64>,
    /// Gamma shape e0 for c_j and c0.
    #[arg(long)]
    pub e0: Option<f64>,
    /// Gamma rate f0 for c_j and c0.
    #[arg(long)]
    pub f0: Option<f64>,
    /// Gamma shape g0 for gamma0.
    #[arg(long)]
    pub g0: Option<f64>,
    /// Gamma rate h0 for gamma0.
    #[arg(long)]
    pub h0: Option<f64>,
    /// Gamma shape u0 for lambda.
    #[arg(long)]
    pub u0: Option<f64>,
    /// Gamma rate v0 for lambda.
    #[arg(long)]
    pub v0: Option<f64>,
}

impl HyperFlags {
    pub fn resolve(&self, file: &HashMap<String, String>) -> Result<Hyperparameters> {
        let d = Hyperparameters::default();
        let hp = Hyperparameters {
            eta: resolve(self.eta, file, "eta", d.eta)?,
            delta: resolve(self.delta, file, "delta", d.delta)?,
            a0: resolve(self.a0, file, "a0", d.a0)?,
            b0: resolve(self.b0, file, "b0", d.b0)?,
            e0: resolve(self.e0, file, "e0", d.e0)?,
            f0: resolve(self.f0, file, "f0", d.f0)?,
            g0: resolve(self.g0, file, "g0", d.g0)?,
            h0: resolve(self.h0, file, "h0", d.h0)?,
            u0: resolve(self.u0, file, "u0", d.u0)?,
            v0: resolve(self.v0, file, "v0", d.v0)?,
        };
        hp.validate().map_err(|e| anyhow!(e))?;
        Ok(hp)
    }
}

/// Chain flags shared by `fit` and `select-k`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ChainFlags {
    /// Sweeps discarded before collection.
    #[arg(long = "burn-in")]
    pub burn_in: Option<usize>,
    /// Total sweeps, burn-in included.
    #[arg(long = "iters")]
    pub iters: Option<usize>,
    /// Keep every n-th post-burn-in draw.
    #[arg(long)]
    pub thin: Option<usize>,
    /// Master seed; chains at different K derive their own streams.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Store full parameter draws (required by summarize).
    #[arg(long = "store-draws")]
    pub store_draws: bool,
    /// Exact Bernoulli-sum trials per CRT draw before switching to
    /// waiting-time inversion; omit for the fully exact sum.
    #[arg(long = "crt-head")]
    pub crt_head: Option<u64>,
}

impl ChainFlags {
    pub fn resolve(&self, file: &HashMap<String, String>) -> Result<ChainConfig> {
        let d = ChainConfig::default();
        let store_file = file
            .get("store_draws")
            .map(|v| v.parse::<bool>().context("config key store_draws"))
            .transpose()?
            .unwrap_or(false);
        let cfg = ChainConfig {
            burn_in: resolve(self.burn_in, file, "burn_in", d.burn_in)?,
            total_iterations: resolve(self.iters, file, "iters", d.total_iterations)?,
            thin: resolve(self.thin, file, "thin", d.thin)?,
            seed: resolve(self.seed, file, "seed", d.seed)?,
            store_draws: self.store_draws || store_file,
            crt_exact_head: resolve_optional(self.crt_head, file, "crt_head")?,
        };
        cfg.validate().map_err(|e| anyhow!(e))?;
        Ok(cfg)
    }
}

/// Number of worker threads: flag, else config file, else the
/// BAYCOUNT_THREADS environment variable; 0 means all cores.
pub fn resolve_threads(
    flag: Option<usize>,
    file: &HashMap<String, String>,
) -> Result<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    if let Some(raw) = file.get("threads") {
        return Ok(Some(raw.parse().context("config key threads")?));
    }
    match std::env::var("BAYCOUNT_THREADS") {
        Ok(raw) => Ok(Some(raw.parse().context("BAYCOUNT_THREADS")?)),
        Err(_) => Ok(None),
    }
}
