//! Count-matrix formats, chain storage, and atomic writes.
//!
//! Every file this tool writes starts with a schema declaration
//! (`# schema: baycount/<name>/<version>` in delimited text,
//! `"schema_version"` in JSON); readers reject versions they do not know.
//! Numbers are written in shortest round-trip decimal form, so re-reading a
//! file reproduces the in-memory values exactly. See FORMATS.md for
//! byte-level examples.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use baycount::gibbs::{ChainConfig, ChainOutput, StreamingMoments};
use baycount::model::{CountMatrix, Hyperparameters, ModelState};

pub const SCHEMA_VERSION: u32 = 1;

/// On-disk representation of the observed count matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountsFormat {
    /// Header row of sample ids, first column gene ids, tab separators.
    Tsv,
    /// MatrixMarket coordinate integer file with `.rows`/`.cols` sidecars.
    MatrixMarket,
}

impl FromStr for CountsFormat {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(CountsFormat::Tsv),
            "matrix-market" | "mtx" => Ok(CountsFormat::MatrixMarket),
            other => bail!("unknown counts format {other:?}; use tsv or matrix-market"),
        }
    }
}

/// Guess the format from a file extension.
pub fn infer_format(path: &Path) -> Option<CountsFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv" | "txt") => Some(CountsFormat::Tsv),
        Some("mtx") => Some(CountsFormat::MatrixMarket),
        _ => None,
    }
}

/// Write `contents` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| anyhow!("{} has no file name", path.display()))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".tmp-{file_name}"));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Shortest decimal form that round-trips to the same f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn schema_line(name: &str) -> String {
    format!("# schema: baycount/{name}/{SCHEMA_VERSION}\n")
}

/// Validate a `# schema:` line against the expected file kind; files
/// without a declaration pass (external data), unknown versions fail.
fn check_schema(first_line: &str, name: &str) -> Result<bool> {
    let Some(rest) = first_line.trim().strip_prefix("# schema:") else {
        return Ok(false);
    };
    let decl = rest.trim();
    let expected = format!("baycount/{name}/{SCHEMA_VERSION}");
    if decl != expected {
        bail!("unsupported schema {decl:?}; this reader understands {expected:?}");
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Counts
// ---------------------------------------------------------------------------

pub fn read_counts(path: &Path, format: CountsFormat) -> Result<CountMatrix> {
    match format {
        CountsFormat::Tsv => read_counts_tsv(path),
        CountsFormat::MatrixMarket => read_counts_mm(path),
    }
    .with_context(|| format!("reading counts from {}", path.display()))
}

pub fn write_counts(path: &Path, counts: &CountMatrix, format: CountsFormat) -> Result<()> {
    match format {
        CountsFormat::Tsv => write_counts_tsv(path, counts),
        CountsFormat::MatrixMarket => write_counts_mm(path, counts),
    }
    .with_context(|| format!("writing counts to {}", path.display()))
}

fn parse_count(field: &str, row: usize, col: usize) -> Result<u64> {
    let trimmed = field.trim();
    if trimmed.starts_with('-') {
        bail!("negative count {trimmed:?} at data row {row}, column {col}");
    }
    trimmed
        .parse::<u64>()
        .map_err(|_| anyhow!("non-integer count {trimmed:?} at data row {row}, column {col}"))
}

fn read_counts_tsv(path: &Path) -> Result<CountMatrix> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let mut header: Option<String> = None;
    let mut checked_schema = false;
    for line in lines.by_ref() {
        let line = line?;
        if !checked_schema {
            checked_schema = true;
            if check_schema(&line, "counts-tsv")? {
                continue;
            }
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        header = Some(line);
        break;
    }
    let header = header.ok_or_else(|| anyhow!("empty counts file"))?;
    let mut cols = header.split('\t');
    cols.next(); // corner cell, typically "gene_id"
    let sample_ids: Vec<String> = cols.map(|s| s.trim().to_string()).collect();
    if sample_ids.is_empty() {
        bail!("header row has no sample ids");
    }
    let mut gene_ids = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row_num = idx + 1;
        let mut fields = line.split('\t');
        let gene = fields
            .next()
            .ok_or_else(|| anyhow!("data row {row_num} is empty"))?;
        gene_ids.push(gene.trim().to_string());
        let mut row = Vec::with_capacity(sample_ids.len());
        for (col, field) in fields.enumerate() {
            row.push(parse_count(field, row_num, col + 1)?);
        }
        if row.len() != sample_ids.len() {
            bail!(
                "ragged row: data row {row_num} has {} counts for {} samples",
                row.len(),
                sample_ids.len()
            );
        }
        values.extend(row);
    }
    if gene_ids.is_empty() {
        bail!("no data rows");
    }
    let matrix = Array2::from_shape_vec((gene_ids.len(), sample_ids.len()), values)
        .expect("dimensions checked per row");
    CountMatrix::new(matrix, gene_ids, sample_ids).map_err(|e| anyhow!(e))
}

fn write_counts_tsv(path: &Path, counts: &CountMatrix) -> Result<()> {
    let mut out = schema_line("counts-tsv");
    out.push_str("gene_id");
    for sid in counts.sample_ids() {
        out.push('\t');
        out.push_str(sid);
    }
    out.push('\n');
    for (i, gid) in counts.gene_ids().iter().enumerate() {
        out.push_str(gid);
        for j in 0..counts.n_samples() {
            let _ = write!(out, "\t{}", counts.get(i, j));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

fn sidecar(path: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(suffix);
    path.with_file_name(name)
}

fn read_id_file(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading id sidecar {}", path.display()))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.trim().to_string())
        .collect())
}

fn read_counts_mm(path: &Path) -> Result<CountMatrix> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let banner = lines
        .next()
        .ok_or_else(|| anyhow!("empty matrix-market file"))??;
    let tokens: Vec<&str> = banner.split_whitespace().collect();
    if tokens.len() < 5
        || tokens[0] != "%%MatrixMarket"
        || tokens[1] != "matrix"
        || tokens[2] != "coordinate"
    {
        bail!("expected a %%MatrixMarket matrix coordinate banner, got {banner:?}");
    }
    if tokens[3] != "integer" {
        bail!("counts require the integer field, got {:?}", tokens[3]);
    }
    if tokens[4] != "general" {
        bail!("counts require general symmetry, got {:?}", tokens[4]);
    }
    let mut dims: Option<(usize, usize, usize)> = None;
    let mut entries: Vec<(usize, usize, u64)> = Vec::new();
    let mut data_row = 0usize;
    for line in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('%') {
            if let Some(decl) = comment.trim().strip_prefix("baycount-schema:") {
                let expected = format!("counts-mm/{SCHEMA_VERSION}");
                if decl.trim() != expected {
                    bail!("unsupported schema {:?}", decl.trim());
                }
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if dims.is_none() {
            if fields.len() != 3 {
                bail!("size line must hold rows cols nnz, got {trimmed:?}");
            }
            let g: usize = fields[0].parse().context("parsing row count")?;
            let s: usize = fields[1].parse().context("parsing column count")?;
            let nnz: usize = fields[2].parse().context("parsing nonzero count")?;
            dims = Some((g, s, nnz));
            continue;
        }
        data_row += 1;
        if fields.len() != 3 {
            bail!("entry {data_row} must hold row col value, got {trimmed:?}");
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|_| anyhow!("bad row index at entry {data_row}"))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|_| anyhow!("bad column index at entry {data_row}"))?;
        let v = parse_count(fields[2], data_row, 3)?;
        entries.push((i, j, v));
    }
    let (g, s, nnz) = dims.ok_or_else(|| anyhow!("missing size line"))?;
    if entries.len() != nnz {
        bail!("size line declared {nnz} entries, found {}", entries.len());
    }
    let mut values = Array2::zeros((g, s));
    let mut seen = vec![false; g * s];
    for (idx, (i, j, v)) in entries.into_iter().enumerate() {
        if i < 1 || i > g || j < 1 || j > s {
            bail!("entry {} index ({i}, {j}) outside {g}x{s}", idx + 1);
        }
        if std::mem::replace(&mut seen[(i - 1) * s + (j - 1)], true) {
            bail!("duplicate entry for ({i}, {j})");
        }
        values[(i - 1, j - 1)] = v;
    }
    let gene_ids = read_id_file(&sidecar(path, ".rows"))?;
    let sample_ids = read_id_file(&sidecar(path, ".cols"))?;
    if gene_ids.len() != g {
        bail!("row sidecar lists {} ids for {g} rows", gene_ids.len());
    }
    if sample_ids.len() != s {
        bail!("column sidecar lists {} ids for {s} columns", sample_ids.len());
    }
    CountMatrix::new(values, gene_ids, sample_ids).map_err(|e| anyhow!(e))
}

fn write_counts_mm(path: &Path, counts: &CountMatrix) -> Result<()> {
    let nnz = counts.values().iter().filter(|&&v| v > 0).count();
    let mut out = String::new();
    out.push_str("%%MatrixMarket matrix coordinate integer general\n");
    let _ = write!(out, "%baycount-schema: counts-mm/{SCHEMA_VERSION}\n");
    let _ = writeln!(out, "{} {} {nnz}", counts.n_genes(), counts.n_samples());
    for i in 0..counts.n_genes() {
        for j in 0..counts.n_samples() {
            let v = counts.get(i, j);
            if v > 0 {
                let _ = writeln!(out, "{} {} {v}", i + 1, j + 1);
            }
        }
    }
    write_atomic(path, out.as_bytes())?;
    write_atomic(
        &sidecar(path, ".rows"),
        counts.gene_ids().join("\n").as_bytes(),
    )?;
    write_atomic(
        &sidecar(path, ".cols"),
        counts.sample_ids().join("\n").as_bytes(),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Chain storage
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainConfigEcho {
    pub burn_in: usize,
    pub total_iterations: usize,
    pub thin: usize,
    pub seed: u64,
    pub store_draws: bool,
    pub crt_exact_head: Option<u64>,
}

impl From<&ChainConfig> for ChainConfigEcho {
    fn from(c: &ChainConfig) -> Self {
        ChainConfigEcho {
            burn_in: c.burn_in,
            total_iterations: c.total_iterations,
            thin: c.thin,
            seed: c.seed,
            store_draws: c.store_draws,
            crt_exact_head: c.crt_exact_head,
        }
    }
}

impl From<&ChainConfigEcho> for ChainConfig {
    fn from(c: &ChainConfigEcho) -> Self {
        ChainConfig {
            burn_in: c.burn_in,
            total_iterations: c.total_iterations,
            thin: c.thin,
            seed: c.seed,
            store_draws: c.store_draws,
            crt_exact_head: c.crt_exact_head,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperparametersEcho {
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

impl From<&Hyperparameters> for HyperparametersEcho {
    fn from(h: &Hyperparameters) -> Self {
        HyperparametersEcho {
            eta: h.eta,
            delta: h.delta,
            a0: h.a0,
            b0: h.b0,
            e0: h.e0,
            f0: h.f0,
            g0: h.g0,
            h0: h.h0,
            u0: h.u0,
            v0: h.v0,
        }
    }
}

impl From<&HyperparametersEcho> for Hyperparameters {
    fn from(h: &HyperparametersEcho) -> Self {
        Hyperparameters {
            eta: h.eta,
            delta: h.delta,
            a0: h.a0,
            b0: h.b0,
            e0: h.e0,
            f0: h.f0,
            g0: h.g0,
            h0: h.h0,
            u0: h.u0,
            v0: h.v0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub mean_sweep_seconds: f64,
}

/// `fit.json`: everything needed to interpret a stored chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitMeta {
    pub schema_version: u32,
    pub k: usize,
    pub n_genes: usize,
    pub n_samples: usize,
    pub chain: ChainConfigEcho,
    pub hyperparameters: HyperparametersEcho,
    pub gene_ids: Vec<String>,
    pub sample_ids: Vec<String>,
    pub kept_draws: usize,
    pub timings: Timings,
}

fn matrix_csv(name: &str, headers: &[String], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = schema_line(name);
    out.push_str("draw");
    for h in headers {
        out.push(',');
        out.push_str(h);
    }
    out.push('\n');
    for (idx, row) in rows.enumerate() {
        let _ = write!(out, "{}", idx + 1);
        for v in row {
            let _ = write!(out, ",{}", fmt_f64(v));
        }
        out.push('\n');
    }
    out
}

fn parse_matrix_csv(path: &Path, name: &str, expect_cols: usize) -> Result<Vec<Vec<f64>>> {
    let mut text = String::new();
    fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_string(&mut text)?;
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| anyhow!("{name}: empty file"))?;
    if !check_schema(first, name)? {
        bail!("{name}: missing schema declaration");
    }
    let header = lines.next().ok_or_else(|| anyhow!("{name}: missing header"))?;
    let cols = header.split(',').count();
    if cols != expect_cols + 1 {
        bail!("{name}: expected {} columns, found {cols}", expect_cols + 1);
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        fields.next(); // draw index
        let row: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| anyhow!("{name}: bad number {f:?} at draw {}", i + 1))
            })
            .collect::<Result<_>>()?;
        if row.len() != expect_cols {
            bail!("{name}: ragged draw {}", i + 1);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn phi_headers(g: usize, k: usize) -> Vec<String> {
    let mut h = Vec::with_capacity(g * k);
    for i in 0..g {
        for kk in 0..k {
            h.push(format!("g{}_f{}", i + 1, kk + 1));
        }
    }
    h
}

fn theta_headers(k: usize, s: usize) -> Vec<String> {
    let mut h = Vec::with_capacity(k * s);
    for kk in 0..k {
        for j in 0..s {
            h.push(format!("f{}_s{}", kk + 1, j + 1));
        }
    }
    h
}

fn indexed_headers(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Write a fitted chain (metadata, log-likelihood trace, and, when stored,
/// the full draws) under `dir`.
pub fn write_chain(
    dir: &Path,
    chain: &ChainOutput,
    cfg: &ChainConfig,
    hp: &Hyperparameters,
    gene_ids: &[String],
    sample_ids: &[String],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let total: f64 = chain.sweep_seconds.iter().sum();
    let meta = FitMeta {
        schema_version: SCHEMA_VERSION,
        k: chain.k,
        n_genes: gene_ids.len(),
        n_samples: sample_ids.len(),
        chain: cfg.into(),
        hyperparameters: hp.into(),
        gene_ids: gene_ids.to_vec(),
        sample_ids: sample_ids.to_vec(),
        kept_draws: chain.kept(),
        timings: Timings {
            total_seconds: total,
            mean_sweep_seconds: total / chain.sweep_seconds.len().max(1) as f64,
        },
    };
    write_atomic(
        &dir.join("fit.json"),
        serde_json::to_string_pretty(&meta)?.as_bytes(),
    )?;

    let mut loglik = schema_line("loglik");
    loglik.push_str("draw,loglik\n");
    for (i, ll) in chain.loglik_trace.iter().enumerate() {
        let _ = writeln!(loglik, "{},{}", i + 1, fmt_f64(*ll));
    }
    write_atomic(&dir.join("loglik.csv"), loglik.as_bytes())?;

    if let Some(draws) = &chain.draws {
        let ddir = dir.join("draws");
        fs::create_dir_all(&ddir)?;
        let g = gene_ids.len();
        let s = sample_ids.len();
        let k = chain.k;
        write_atomic(
            &ddir.join("phi.csv"),
            matrix_csv(
                "draws-phi",
                &phi_headers(g, k),
                draws.iter().map(|d| d.phi.iter().copied().collect()),
            )
            .as_bytes(),
        )?;
        write_atomic(
            &ddir.join("theta.csv"),
            matrix_csv(
                "draws-theta",
                &theta_headers(k, s),
                draws.iter().map(|d| d.theta.iter().copied().collect()),
            )
            .as_bytes(),
        )?;
        write_atomic(
            &ddir.join("alpha.csv"),
            matrix_csv(
                "draws-alpha",
                &indexed_headers("g", g),
                draws.iter().map(|d| d.alpha.clone()),
            )
            .as_bytes(),
        )?;
        write_atomic(
            &ddir.join("zeta.csv"),
            matrix_csv(
                "draws-zeta",
                &indexed_headers("s", s),
                draws.iter().map(|d| d.zeta.clone()),
            )
            .as_bytes(),
        )?;
        write_atomic(
            &ddir.join("p.csv"),
            matrix_csv(
                "draws-p",
                &indexed_headers("s", s),
                draws.iter().map(|d| d.p.clone()),
            )
            .as_bytes(),
        )?;
        write_atomic(
            &ddir.join("r.csv"),
            matrix_csv(
                "draws-r",
                &indexed_headers("f", k),
                draws.iter().map(|d| d.r.clone()),
            )
            .as_bytes(),
        )?;
        write_atomic(
            &ddir.join("c.csv"),
            matrix_csv(
                "draws-c",
                &indexed_headers("s", s),
                draws.iter().map(|d| d.c.clone()),
            )
            .as_bytes(),
        )?;
        write_atomic(
            &ddir.join("scalars.csv"),
            matrix_csv(
                "draws-scalars",
                &["lambda".into(), "gamma0".into(), "c0".into()],
                draws.iter().map(|d| vec![d.lambda, d.gamma0, d.c0]),
            )
            .as_bytes(),
        )?;
    }
    Ok(())
}

/// Read a chain directory back into memory. Draws are reconstructed when the
/// fit stored them; streaming moments are recomputed from the draws.
pub fn read_chain(dir: &Path) -> Result<(ChainOutput, FitMeta)> {
    let meta_text = fs::read_to_string(dir.join("fit.json"))
        .with_context(|| format!("reading {}", dir.join("fit.json").display()))?;
    let meta: FitMeta = serde_json::from_str(&meta_text).context("parsing fit.json")?;
    if meta.schema_version != SCHEMA_VERSION {
        bail!(
            "fit.json declares schema version {}, this reader understands {SCHEMA_VERSION}",
            meta.schema_version
        );
    }
    let (g, k, s) = (meta.n_genes, meta.k, meta.n_samples);

    let loglik_text = fs::read_to_string(dir.join("loglik.csv"))?;
    let mut loglik_lines = loglik_text.lines();
    let first = loglik_lines.next().ok_or_else(|| anyhow!("empty loglik.csv"))?;
    if !check_schema(first, "loglik")? {
        bail!("loglik.csv: missing schema declaration");
    }
    loglik_lines.next(); // header
    let loglik_trace: Vec<f64> = loglik_lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let field = l.split(',').nth(1).ok_or_else(|| anyhow!("bad loglik row {l:?}"))?;
            field
                .parse::<f64>()
                .map_err(|_| anyhow!("bad loglik value {field:?}"))
        })
        .collect::<Result<_>>()?;

    let ddir = dir.join("draws");
    let draws = if meta.chain.store_draws && ddir.is_dir() {
        let phi = parse_matrix_csv(&ddir.join("phi.csv"), "draws-phi", g * k)?;
        let theta = parse_matrix_csv(&ddir.join("theta.csv"), "draws-theta", k * s)?;
        let alpha = parse_matrix_csv(&ddir.join("alpha.csv"), "draws-alpha", g)?;
        let zeta = parse_matrix_csv(&ddir.join("zeta.csv"), "draws-zeta", s)?;
        let p = parse_matrix_csv(&ddir.join("p.csv"), "draws-p", s)?;
        let r = parse_matrix_csv(&ddir.join("r.csv"), "draws-r", k)?;
        let c = parse_matrix_csv(&ddir.join("c.csv"), "draws-c", s)?;
        let scalars = parse_matrix_csv(&ddir.join("scalars.csv"), "draws-scalars", 3)?;
        let n = phi.len();
        for (name, len) in [
            ("theta", theta.len()),
            ("alpha", alpha.len()),
            ("zeta", zeta.len()),
            ("p", p.len()),
            ("r", r.len()),
            ("c", c.len()),
            ("scalars", scalars.len()),
        ] {
            if len != n {
                bail!("draw files disagree on the draw count ({name}: {len} vs phi: {n})");
            }
        }
        let mut states = Vec::with_capacity(n);
        for d in 0..n {
            states.push(ModelState {
                phi: Array2::from_shape_vec((g, k), phi[d].clone())?,
                theta: Array2::from_shape_vec((k, s), theta[d].clone())?,
                alpha: alpha[d].clone(),
                lambda: scalars[d][0],
                zeta: zeta[d].clone(),
                p: p[d].clone(),
                r: r[d].clone(),
                c: c[d].clone(),
                gamma0: scalars[d][1],
                c0: scalars[d][2],
            });
        }
        Some(states)
    } else {
        None
    };

    let mut moments = StreamingMoments::new(g, k, s);
    if let Some(states) = &draws {
        for st in states {
            moments.update(st);
        }
    }
    let chain = ChainOutput {
        k,
        draws,
        moments,
        loglik_trace,
        sweep_seconds: Vec::new(),
    };
    Ok((chain, meta))
}

/// Flat `key = value` config file; `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {} is not key = value: {raw:?}", lineno + 1);
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}
