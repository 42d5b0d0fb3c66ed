//! Experiment driver shared by the command-line binary and the examples:
//! configuration resolution with an auditable echo, deterministic CSV/JSON
//! emission, and one entry point per experiment family.
//!
//! Every run embeds its fully resolved configuration and the crate version
//! in the output header; reruns with the same configuration and seeds are
//! byte-identical apart from the timestamp line.

use crate::configspace::{binomial, ConfigSpace};
use crate::disorder::{force_endpoints, generate_iid, quantize_to_grid, DisorderField};
use crate::ensemble::CanonicalMeasure;
use crate::error::{Error, Result};
use crate::kmc::{
    equilibrium_check, relaxation_time, two_block_statistic_exact, two_block_statistic_mc,
    waiting_time_ks, CheckStatus, KmcState,
};
use crate::lattice::{congestion, Boundary, LatticeGeometry};
use crate::spectra::{
    bl_variance_constant, certify_disordered_exchange, certify_homogeneous_exchange, kawasaki_gap,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Exact sectors at most this large are evaluated by enumeration; larger
/// ones fall back to Monte Carlo.
const EXACT_SECTOR_LIMIT: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Fully resolved experiment configuration. Defaults < config file < flags;
/// the winner is echoed into every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Config {
    pub d: usize,
    pub sizes: Vec<usize>,
    /// Particle number; `None` means the half-filled sector per size.
    pub n: Option<usize>,
    /// Disorder bound K; 0 is the homogeneous field.
    pub k: f64,
    /// Replicates per instance where randomness enters.
    pub seeds: usize,
    pub seed0: u64,
    /// Micro window radius for block comparisons.
    pub kwin: usize,
    /// Macro window fraction; the macro radius is floor(delta * L).
    pub delta: f64,
    pub events: u64,
    /// Equilibrium draws per Monte Carlo block-statistic replicate.
    pub samples: usize,
    /// Observation grid spacing; 0 picks a per-size default.
    pub sample_dt: f64,
    /// Trajectory length for relaxation runs; 0 picks a per-size default.
    pub horizon: f64,
    /// Acceptance thresholds, echoed with every run.
    pub band_ratio_max: f64,
    pub trend_factor_max: f64,
    pub variation_max: f64,
    pub p_threshold: f64,
    pub relax_factor: f64,
    pub slope_target: f64,
    pub slope_tolerance: f64,
    pub pencil_slack: f64,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    /// Worker threads; 0 uses all available.
    pub workers: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            d: 1,
            sizes: Vec::new(),
            n: None,
            k: 0.0,
            seeds: 10,
            seed0: 1,
            kwin: 1,
            delta: 0.25,
            events: 1_000_000,
            samples: 4000,
            sample_dt: 0.0,
            horizon: 0.0,
            band_ratio_max: 3.0,
            trend_factor_max: 1.2,
            variation_max: 0.25,
            p_threshold: 1e-3,
            relax_factor: 2.0,
            slope_target: 2.0,
            slope_tolerance: 0.4,
            pencil_slack: 1e-9,
            out_dir: std::env::var_os("LATGAS_OUT_DIR")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(".")),
            format: OutputFormat::Csv,
            workers: 0,
        }
    }
}

/// Partial configuration from a TOML file or command-line flags; unset
/// fields fall through to the next layer down.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub d: Option<usize>,
    pub sizes: Option<Vec<usize>>,
    pub n: Option<usize>,
    pub k: Option<f64>,
    pub seeds: Option<usize>,
    pub seed0: Option<u64>,
    pub kwin: Option<usize>,
    pub delta: Option<f64>,
    pub events: Option<f64>,
    pub samples: Option<usize>,
    pub sample_dt: Option<f64>,
    pub horizon: Option<f64>,
    pub band_ratio_max: Option<f64>,
    pub trend_factor_max: Option<f64>,
    pub variation_max: Option<f64>,
    pub p_threshold: Option<f64>,
    pub relax_factor: Option<f64>,
    pub slope_target: Option<f64>,
    pub slope_tolerance: Option<f64>,
    pub pencil_slack: Option<f64>,
    pub out_dir: Option<String>,
    pub format: Option<String>,
    pub workers: Option<usize>,
}

impl ConfigPatch {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config file: {e}")))
    }
}

impl Config {
    /// Apply patches lowest precedence first.
    pub fn resolve(patches: &[ConfigPatch]) -> Result<Config> {
        let mut cfg = Config::default();
        for p in patches {
            if let Some(v) = p.d {
                cfg.d = v;
            }
            if let Some(v) = &p.sizes {
                cfg.sizes = v.clone();
            }
            if let Some(v) = p.n {
                cfg.n = Some(v);
            }
            if let Some(v) = p.k {
                cfg.k = v;
            }
            if let Some(v) = p.seeds {
                cfg.seeds = v;
            }
            if let Some(v) = p.seed0 {
                cfg.seed0 = v;
            }
            if let Some(v) = p.kwin {
                cfg.kwin = v;
            }
            if let Some(v) = p.delta {
                cfg.delta = v;
            }
            if let Some(v) = p.events {
                cfg.events = float_count("events", v)?;
            }
            if let Some(v) = p.samples {
                cfg.samples = v;
            }
            if let Some(v) = p.sample_dt {
                cfg.sample_dt = v;
            }
            if let Some(v) = p.horizon {
                cfg.horizon = v;
            }
            if let Some(v) = p.band_ratio_max {
                cfg.band_ratio_max = v;
            }
            if let Some(v) = p.trend_factor_max {
                cfg.trend_factor_max = v;
            }
            if let Some(v) = p.variation_max {
                cfg.variation_max = v;
            }
            if let Some(v) = p.p_threshold {
                cfg.p_threshold = v;
            }
            if let Some(v) = p.relax_factor {
                cfg.relax_factor = v;
            }
            if let Some(v) = p.slope_target {
                cfg.slope_target = v;
            }
            if let Some(v) = p.slope_tolerance {
                cfg.slope_tolerance = v;
            }
            if let Some(v) = p.pencil_slack {
                cfg.pencil_slack = v;
            }
            if let Some(v) = &p.out_dir {
                cfg.out_dir = PathBuf::from(v);
            }
            if let Some(v) = &p.format {
                cfg.format = match v.as_str() {
                    "csv" => OutputFormat::Csv,
                    "json" => OutputFormat::Json,
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "format must be csv or json, got {other}"
                        )))
                    }
                };
            }
            if let Some(v) = p.workers {
                cfg.workers = v;
            }
        }
        if cfg.k < 0.0 || !cfg.k.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "K must be a nonnegative finite real, got {}",
                cfg.k
            )));
        }
        if cfg.d == 0 {
            return Err(Error::InvalidArgument("d must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// "4..14" (inclusive), "8,16,32", or a single integer.
pub fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::Parse("empty size list".into()));
    }
    if let Some((a, b)) = text.split_once("..") {
        let lo: usize = a
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("size range start: {a:?}")))?;
        let hi: usize = b
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("size range end: {b:?}")))?;
        if hi < lo {
            return Err(Error::Parse(format!("size range {lo}..{hi} is empty")));
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|part| {
            part.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("size list entry: {part:?}")))
        })
        .collect()
}

/// Integer counts, optionally in scientific notation ("1e6").
pub fn parse_count(text: &str) -> Result<u64> {
    let text = text.trim();
    if let Ok(v) = text.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = text
        .parse()
        .map_err(|_| Error::Parse(format!("count: {text:?}")))?;
    float_count(text, v)
}

fn float_count(what: &str, v: f64) -> Result<u64> {
    if !v.is_finite() || !(1.0..=9.0e18).contains(&v) || v.fract() != 0.0 {
        return Err(Error::Parse(format!(
            "count must be a positive integer, got {what} = {v}"
        )));
    }
    Ok(v as u64)
}

/// One output record; the CSV column set is fixed across subcommands.
#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub d: usize,
    pub l: usize,
    pub n: usize,
    pub k: f64,
    pub seed: u64,
    pub quantity: String,
    pub value: f64,
    pub method: String,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Report {
    /// Output file stem.
    pub name: String,
    pub rows: Vec<Row>,
    pub pass: bool,
    /// Human-readable per-aggregate lines for the terminal summary.
    pub notes: Vec<String>,
}

impl Report {
    fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }
}

impl Row {
    /// One CSV record under the fixed column header.
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.d,
            self.l,
            self.n,
            self.k,
            self.seed,
            self.quantity,
            self.value,
            self.method,
            self.residual
        )
    }
}

/// Write the report under the configured output directory and return the
/// file path. CSV carries the config echo as comment lines; JSON nests it.
pub fn emit(report: &Report, cfg: &Config) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    match cfg.format {
        OutputFormat::Csv => {
            let path = cfg.out_dir.join(format!("{}.csv", report.name));
            let mut text = String::new();
            text.push_str(&format!("# latgas {VERSION}\n"));
            text.push_str(&format!("# timestamp: {stamp}\n"));
            text.push_str(&format!("# config: {}\n", cfg.echo()));
            text.push_str("d,L,N,K,seed,quantity,value,method,residual\n");
            for row in &report.rows {
                text.push_str(&row.csv_line());
                text.push('\n');
            }
            std::fs::write(&path, text)?;
            Ok(path)
        }
        OutputFormat::Json => {
            let path = cfg.out_dir.join(format!("{}.json", report.name));
            let doc = serde_json::json!({
                "version": VERSION,
                "timestamp": stamp,
                "config": cfg,
                "pass": report.pass,
                "rows": report.rows,
            });
            std::fs::write(
                &path,
                serde_json::to_string_pretty(&doc).expect("serializes"),
            )?;
            Ok(path)
        }
    }
}

/// Run `body` on a rayon pool sized by the config (0 = default pool).
fn with_pool<T: Send>(cfg: &Config, body: impl FnOnce() -> T + Send) -> Result<T> {
    if cfg.workers == 0 {
        Ok(body())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
        Ok(pool.install(body))
    }
}

fn free_box(d: usize, l: usize) -> Result<Arc<LatticeGeometry>> {
    Ok(Arc::new(LatticeGeometry::build_box(d, l, Boundary::Free)?))
}

fn ring(d: usize, l: usize) -> Result<Arc<LatticeGeometry>> {
    Ok(Arc::new(LatticeGeometry::build_box(
        d,
        l,
        Boundary::Periodic,
    )?))
}

fn half_sector(cfg: &Config, n_sites: usize) -> Result<usize> {
    let n = cfg.n.unwrap_or(n_sites / 2);
    if n == 0 || n >= n_sites {
        return Err(Error::InvalidArgument(format!(
            "--N must satisfy 0 < N < {n_sites}, got {n}"
        )));
    }
    Ok(n)
}

fn require_sizes(cfg: &Config, min: usize) -> Result<Vec<usize>> {
    if cfg.sizes.is_empty() {
        return Err(Error::InvalidArgument("missing --L size list".into()));
    }
    for &l in &cfg.sizes {
        if l < min {
            return Err(Error::InvalidArgument(format!(
                "--L must be at least {min}, got {l}"
            )));
        }
    }
    Ok(cfg.sizes.clone())
}

fn scan_field(geom: &LatticeGeometry, k: f64, seed: u64) -> Result<DisorderField> {
    if k == 0.0 {
        Ok(DisorderField::zero(geom.n_sites))
    } else {
        generate_iid(geom, k, seed)
    }
}

/// Kawasaki gaps over the size list; checks that gap * L^2 stays within
/// the configured band (widened by e^{2K} under disorder).
pub fn run_gap_scan(cfg: &Config) -> Result<Report> {
    let sizes = require_sizes(cfg, 2)?;
    let replicates: u64 = if cfg.k == 0.0 {
        1
    } else {
        cfg.seeds.max(1) as u64
    };
    let mut instances = Vec::new();
    for &l in &sizes {
        for r in 0..replicates {
            instances.push((l, r));
        }
    }
    let results: Vec<Result<Vec<Row>>> = with_pool(cfg, || {
        instances
            .par_iter()
            .map(|&(l, r)| -> Result<Vec<Row>> {
                let geom = free_box(cfg.d, l)?;
                let n = half_sector(cfg, geom.n_sites)?;
                let seed = cfg.seed0 + r;
                let field = scan_field(&geom, cfg.k, seed)?;
                let gap = kawasaki_gap(&geom, &field, n)?;
                let l2 = (l * l) as f64;
                let method = gap.method.as_str().to_string();
                Ok(vec![
                    Row {
                        d: cfg.d,
                        l,
                        n,
                        k: cfg.k,
                        seed,
                        quantity: "gap".into(),
                        value: gap.gap,
                        method: method.clone(),
                        residual: gap.residual,
                    },
                    Row {
                        d: cfg.d,
                        l,
                        n,
                        k: cfg.k,
                        seed,
                        quantity: "gap_L2".into(),
                        value: gap.gap * l2,
                        method,
                        residual: gap.residual,
                    },
                ])
            })
            .collect()
    })?;
    let mut report = Report {
        name: "gap_scan".into(),
        rows: Vec::new(),
        pass: true,
        notes: Vec::new(),
    };
    for rows in results {
        report.rows.extend(rows?);
    }
    report
        .rows
        .sort_by(|a, b| (a.l, a.seed, &a.quantity).cmp(&(b.l, b.seed, &b.quantity)));
    let scaled: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.quantity == "gap_L2")
        .map(|r| r.value)
        .collect();
    let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().copied().fold(0.0f64, f64::max);
    let band = hi / lo;
    let limit = cfg.band_ratio_max * (2.0 * cfg.k).exp();
    report.rows.push(Row {
        d: cfg.d,
        l: 0,
        n: 0,
        k: cfg.k,
        seed: 0,
        quantity: "band_ratio".into(),
        value: band,
        method: "aggregate".into(),
        residual: 0.0,
    });
    report.pass = band <= limit * (1.0 + 1e-12);
    report.note(format!(
        "gap*L^2 in [{lo:.6}, {hi:.6}], band ratio {band:.4} vs limit {limit:.4}"
    ));
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifySuite {
    /// Endpoint exchange vs weighted chain of bonds at zero field.
    ChainWeights,
    /// Endpoint exchange vs unweighted chain under bounded disorder.
    PathBound,
    /// Variance comparison constant |sites| / gap of the all-pairs form.
    VarianceTrend,
}

fn chain_weight_vectors(bonds: usize) -> Vec<(&'static str, Vec<f64>)> {
    let uniform = vec![1.0 / bonds as f64; bonds];
    let geo_raw: Vec<f64> = (0..bonds).map(|i| 0.5f64.powi(i as i32)).collect();
    let geo_sum: f64 = geo_raw.iter().sum();
    let geometric = geo_raw.iter().map(|v| v / geo_sum).collect();
    let ramp_raw: Vec<f64> = (0..bonds).map(|i| (i + 1) as f64).collect();
    let ramp_sum: f64 = ramp_raw.iter().sum();
    let ramp = ramp_raw.iter().map(|v| v / ramp_sum).collect();
    vec![
        ("uniform", uniform),
        ("geometric", geometric),
        ("ramp", ramp),
    ]
}

pub fn run_verify(cfg: &Config, suite: VerifySuite) -> Result<Report> {
    match suite {
        VerifySuite::ChainWeights => verify_chain_weights(cfg),
        VerifySuite::PathBound => verify_path_bound(cfg),
        VerifySuite::VarianceTrend => verify_variance_trend(cfg),
    }
}

fn verify_chain_weights(cfg: &Config) -> Result<Report> {
    let sizes = if cfg.sizes.is_empty() {
        (2..=8).collect()
    } else {
        require_sizes(cfg, 2)?
    };
    let mut report = Report {
        name: "verify_chain_weights".into(),
        rows: Vec::new(),
        pass: true,
        notes: Vec::new(),
    };
    let mut worst = 0.0f64;
    for &k_sites in &sizes {
        for (wname, rho) in chain_weight_vectors(k_sites - 1) {
            for n in 1..k_sites {
                match certify_homogeneous_exchange(k_sites, n, &rho) {
                    Ok(r) => {
                        let ok = r.pass
                            && (k_sites != 2 || (r.lambda_max - 1.0).abs() <= cfg.pencil_slack);
                        report.pass &= ok;
                        worst = worst.max(r.lambda_max);
                        report.rows.push(Row {
                            d: 1,
                            l: k_sites,
                            n,
                            k: 0.0,
                            seed: 0,
                            quantity: format!("pencil_{wname}"),
                            value: r.lambda_max,
                            method: r.method.as_str().into(),
                            residual: r.residual,
                        });
                    }
                    Err(Error::KernelEscape { residual }) => {
                        report.pass = false;
                        report.note(format!(
                            "k={k_sites} N={n} {wname}: kernel containment failed ({residual:.3e})"
                        ));
                        report.rows.push(Row {
                            d: 1,
                            l: k_sites,
                            n,
                            k: 0.0,
                            seed: 0,
                            quantity: format!("pencil_{wname}"),
                            value: f64::INFINITY,
                            method: "kernel-escape".into(),
                            residual,
                        });
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    report.note(format!(
        "worst ratio {worst:.9} vs bound 1 (slack {:.0e})",
        cfg.pencil_slack
    ));
    Ok(report)
}

fn verify_path_bound(cfg: &Config) -> Result<Report> {
    let sizes = if cfg.sizes.is_empty() {
        (4..=10).collect()
    } else {
        require_sizes(cfg, 2)?
    };
    let mut report = Report {
        name: "verify_path_bound".into(),
        rows: Vec::new(),
        pass: true,
        notes: Vec::new(),
    };
    let replicates: u64 = if cfg.k == 0.0 {
        1
    } else {
        cfg.seeds.max(1) as u64
    };
    let mut instances = Vec::new();
    for &l in &sizes {
        for r in 0..replicates {
            instances.push((l, r));
        }
    }
    type PathOut = (Vec<Row>, bool, f64, f64);
    let results: Vec<Result<PathOut>> = with_pool(cfg, || {
        instances
            .par_iter()
            .map(|&(l, rep)| -> Result<PathOut> {
                let geom = free_box(1, l)?;
                let seed = cfg.seed0 + rep;
                let field = if cfg.k == 0.0 {
                    DisorderField::zero(l)
                } else {
                    let raw = generate_iid(&geom, cfg.k, seed)?;
                    let (quant, _) = quantize_to_grid(&raw, l)?;
                    force_endpoints(&quant, &geom)?
                };
                let mut rows = Vec::new();
                let mut pass = true;
                let mut worst = 0.0f64;
                let mut bound = 0.0f64;
                for n in 1..l {
                    match certify_disordered_exchange(&field, n) {
                        Ok(r) => {
                            let mut ok = r.pass;
                            if cfg.k == 0.0 {
                                ok &= r.lambda_max <= (l - 1) as f64 + cfg.pencil_slack;
                            }
                            pass &= ok;
                            worst = worst.max(r.lambda_max);
                            bound = r.bound;
                            rows.push(Row {
                                d: 1,
                                l,
                                n,
                                k: cfg.k,
                                seed,
                                quantity: "pencil_path".into(),
                                value: r.lambda_max,
                                method: r.method.as_str().into(),
                                residual: r.residual,
                            });
                        }
                        Err(Error::KernelEscape { residual }) => {
                            pass = false;
                            rows.push(Row {
                                d: 1,
                                l,
                                n,
                                k: cfg.k,
                                seed,
                                quantity: "pencil_path".into(),
                                value: f64::INFINITY,
                                method: "kernel-escape".into(),
                                residual,
                            });
                        }
                        Err(e) => return Err(e),
                    }
                }
                Ok((rows, pass, worst, bound))
            })
            .collect()
    })?;
    let mut worst_global = 0.0f64;
    let mut bound_global = 0.0f64;
    for item in results {
        let (rows, pass, worst, bound) = item?;
        report.rows.extend(rows);
        report.pass &= pass;
        if worst > worst_global {
            worst_global = worst;
        }
        bound_global = bound_global.max(bound);
    }
    report.rows.sort_by_key(|a| (a.l, a.seed, a.n));
    report.note(format!(
        "worst ratio {worst_global:.6}; largest bound {bound_global:.3}; slack factor {:.3}",
        bound_global / worst_global.max(f64::MIN_POSITIVE)
    ));
    if cfg.k == 0.0 {
        report.note("zero-field runs also checked against the tight bound L-1");
    }
    Ok(report)
}

fn verify_variance_trend(cfg: &Config) -> Result<Report> {
    let sizes = if cfg.sizes.is_empty() {
        (4..=12).collect()
    } else {
        require_sizes(cfg, 2)?
    };
    let mut report = Report {
        name: "verify_variance_trend".into(),
        rows: Vec::new(),
        pass: true,
        notes: Vec::new(),
    };
    let mut flat_values = Vec::new();
    for &m in &sizes {
        let n = half_sector(cfg, m)?;
        let c = bl_variance_constant(&vec![0.0; m], n)?;
        flat_values.push(c);
        report.rows.push(Row {
            d: 1,
            l: m,
            n,
            k: 0.0,
            seed: 0,
            quantity: "c_emp".into(),
            value: c,
            method: "dense".into(),
            residual: 0.0,
        });
    }
    let lo = flat_values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = flat_values.iter().copied().fold(0.0f64, f64::max);
    let variation = hi / lo - 1.0;
    report.pass &= variation <= cfg.variation_max;
    report.note(format!(
        "homogeneous c_emp varies by {:.2}% (limit {:.0}%)",
        variation * 100.0,
        cfg.variation_max * 100.0
    ));
    let (trend_first, trend_last);
    if cfg.k > 0.0 {
        let mut aggregates = Vec::new();
        for &m in &sizes {
            let n = half_sector(cfg, m)?;
            let geom = free_box(1, m)?;
            let mut size_max = 0.0f64;
            for rep in 0..cfg.seeds.max(1) as u64 {
                let seed = cfg.seed0 + rep;
                let field = generate_iid(&geom, cfg.k, seed)?;
                let c = bl_variance_constant(&field.values, n)?;
                size_max = size_max.max(c);
                report.rows.push(Row {
                    d: 1,
                    l: m,
                    n,
                    k: cfg.k,
                    seed,
                    quantity: "c_emp".into(),
                    value: c,
                    method: "dense".into(),
                    residual: 0.0,
                });
            }
            aggregates.push(size_max);
        }
        trend_first = aggregates[0];
        trend_last = *aggregates.last().expect("nonempty sizes");
        report.note(format!(
            "disordered per-size max c_emp: first {trend_first:.4}, last {trend_last:.4}"
        ));
    } else {
        trend_first = flat_values[0];
        trend_last = *flat_values.last().expect("nonempty sizes");
    }
    let trend_ok = trend_last <= cfg.trend_factor_max * trend_first;
    report.pass &= trend_ok;
    report.note(format!(
        "trend: last {:.4} vs {:.2} x first = {:.4} -> {}",
        trend_last,
        cfg.trend_factor_max,
        cfg.trend_factor_max * trend_first,
        if trend_ok { "ok" } else { "violated" }
    ));
    Ok(report)
}

/// Exact route-congestion counts with the d=1 closed form asserted.
pub fn run_congestion(cfg: &Config) -> Result<Report> {
    let sizes = if cfg.sizes.is_empty() {
        (2..=32).collect()
    } else {
        require_sizes(cfg, 2)?
    };
    let mut report = Report {
        name: "congestion".into(),
        rows: Vec::new(),
        pass: true,
        notes: Vec::new(),
    };
    for &l in &sizes {
        let geom = free_box(cfg.d, l)?;
        let rep = congestion(&geom)?;
        report.rows.push(Row {
            d: cfg.d,
            l,
            n: 0,
            k: 0.0,
            seed: 0,
            quantity: "congestion_max".into(),
            value: rep.max as f64,
            method: "exact".into(),
            residual: 0.0,
        });
        report.rows.push(Row {
            d: cfg.d,
            l,
            n: 0,
            k: 0.0,
            seed: 0,
            quantity: "congestion_nominal".into(),
            value: rep.nominal,
            method: "closed-form".into(),
            residual: 0.0,
        });
        if cfg.d == 1 {
            let closed = (0..l - 1)
                .map(|i| ((i + 1) * (l - i - 1)) as u64)
                .max()
                .unwrap_or(0);
            if rep.max != closed {
                report.pass = false;
                report.note(format!(
                    "L={l}: exact max {} disagrees with closed form {closed}",
                    rep.max
                ));
            }
            if l % 2 == 0 && (rep.max as f64 - rep.nominal).abs() > 1e-9 {
                report.pass = false;
                report.note(format!(
                    "L={l}: exact max {} misses nominal {}",
                    rep.max, rep.nominal
                ));
            }
        }
    }
    if report.pass {
        report.note("exact congestion matches the closed form at every size");
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KmcMode {
    Equilibrium,
    Relax,
    TwoBlock,
}

fn equilibrium_sample_dt(cfg: &Config, l: usize) -> f64 {
    if cfg.sample_dt > 0.0 {
        cfg.sample_dt
    } else {
        ((l * l) as f64 / 9.0).max(1.0)
    }
}

fn relax_defaults(cfg: &Config, l: usize) -> (f64, f64) {
    let tau_guess = (l * l) as f64 / 19.7 * (2.0 * cfg.k).exp();
    let horizon = if cfg.horizon > 0.0 {
        cfg.horizon
    } else {
        1000.0 * tau_guess
    };
    let dt = if cfg.sample_dt > 0.0 {
        cfg.sample_dt
    } else {
        (tau_guess / 20.0).max(0.02)
    };
    (horizon, dt)
}

pub fn run_kmc(cfg: &Config, mode: KmcMode) -> Result<Report> {
    match mode {
        KmcMode::Equilibrium => kmc_equilibrium(cfg),
        KmcMode::Relax => kmc_relax(cfg),
        KmcMode::TwoBlock => kmc_two_block(cfg),
    }
}

fn kmc_field(geom: &Arc<LatticeGeometry>, k: f64, l: usize, seed: u64) -> Result<DisorderField> {
    if k == 0.0 {
        Ok(DisorderField::zero(geom.n_sites))
    } else {
        let raw = generate_iid(geom, k, seed)?;
        let (quant, _) = quantize_to_grid(&raw, l)?;
        Ok(quant)
    }
}

fn kmc_equilibrium(cfg: &Config) -> Result<Report> {
    let sizes = require_sizes(cfg, 2)?;
    let mut report = Report {
        name: "kmc_equilibrium".into(),
        rows: Vec::new(),
        pass: true,
        notes: Vec::new(),
    };
    for &l in &sizes {
        let geom = ring(cfg.d, l)?;
        let n = half_sector(cfg, geom.n_sites)?;
        let seed = cfg.seed0;
        let field = kmc_field(&geom, cfg.k, l, seed)?;
        let measure = CanonicalMeasure::from_field(&field, n)?;
        let mut state = KmcState::from_equilibrium(Arc::clone(&geom), &field, n, seed)?;
        let dt = equilibrium_sample_dt(cfg, l);
        let eq = equilibrium_check(&mut state, &measure, cfg.events, dt)?;
        let ks = waiting_time_ks(&mut state, 20_000)?;
        let ok = eq.status == CheckStatus::Pass && ks.p_value > cfg.p_threshold;
        report.pass &= ok;
        for (quantity, value, residual) in [
            ("chi_square", eq.chi_square, eq.dof as f64),
            ("chi_square_p", eq.p_value, 0.0),
            ("tv_distance", eq.tv_distance, 0.0),
            ("ks_p", ks.p_value, ks.statistic),
        ] {
            report.rows.push(Row {
                d: cfg.d,
                l,
                n,
                k: cfg.k,
                seed,
                quantity: quantity.into(),
                value,
                method: "kmc".into(),
                residual,
            });
        }
        report.note(format!(
            "L={l}: chi2 {:.2} (dof {}), p {:.4}, tv {:.4}, KS p {:.4}, {} samples -> {}",
            eq.chi_square,
            eq.dof,
            eq.p_value,
            eq.tv_distance,
            ks.p_value,
            eq.n_samples,
            eq.status.as_str()
        ));
    }
    Ok(report)
}

fn kmc_relax(cfg: &Config) -> Result<Report> {
    let sizes = require_sizes(cfg, 2)?;
    let mut report = Report {
        name: "kmc_relax".into(),
        rows: Vec::new(),
        pass: true,
        notes: Vec::new(),
    };
    let replicates = cfg.seeds.clamp(1, 64) as u64;
    let mut taus = Vec::new();
    for &l in &sizes {
        let geom = free_box(cfg.d, l)?;
        let n = half_sector(cfg, geom.n_sites)?;
        let field = kmc_field(&geom, cfg.k, l, cfg.seed0)?;
        let (horizon, dt) = relax_defaults(cfg, l);
        let profile = crate::kmc::cosine_profile(&geom);
        let runs: Vec<Result<(u64, f64, f64, bool)>> = with_pool(cfg, || {
            (0..replicates)
                .into_par_iter()
                .map(|rep| {
                    let seed = cfg.seed0 + rep;
                    let mut state = KmcState::from_equilibrium(Arc::clone(&geom), &field, n, seed)?;
                    let tr = relaxation_time(&mut state, &profile, horizon, dt)?;
                    Ok((seed, tr.tau, tr.standard_error, tr.inconclusive))
                })
                .collect()
        })?;
        let mut mean_tau = 0.0;
        let mut any_inconclusive = false;
        for run in runs {
            let (seed, tau, se, inconclusive) = run?;
            mean_tau += tau;
            any_inconclusive |= inconclusive;
            report.rows.push(Row {
                d: cfg.d,
                l,
                n,
                k: cfg.k,
                seed,
                quantity: "tau".into(),
                value: tau,
                method: if inconclusive {
                    "kmc-inconclusive"
                } else {
                    "kmc"
                }
                .into(),
                residual: se,
            });
        }
        mean_tau /= replicates as f64;
        taus.push((l, mean_tau));
        report.pass &= !any_inconclusive;
        // Exact gap comparison whenever the sector is enumerable.
        if binomial(l, n) <= EXACT_SECTOR_LIMIT {
            let gap = kawasaki_gap(&geom, &field, n)?;
            let ratio = mean_tau * gap.gap;
            let ok = ratio >= 1.0 / cfg.relax_factor && ratio <= cfg.relax_factor;
            report.pass &= ok;
            report.rows.push(Row {
                d: cfg.d,
                l,
                n,
                k: cfg.k,
                seed: cfg.seed0,
                quantity: "tau_gap_product".into(),
                value: ratio,
                method: gap.method.as_str().into(),
                residual: gap.residual,
            });
            report.note(format!(
                "L={l}: mean tau {mean_tau:.4}, 1/gap {:.4}, ratio {ratio:.3} ({})",
                1.0 / gap.gap,
                if ok {
                    "within factor"
                } else {
                    "OUTSIDE factor"
                }
            ));
        } else {
            report.note(format!("L={l}: mean tau {mean_tau:.4}"));
        }
    }
    if taus.len() >= 3 {
        let slope = log_log_slope(&taus);
        let ok = (slope - cfg.slope_target).abs() <= cfg.slope_tolerance;
        report.pass &= ok;
        report.rows.push(Row {
            d: cfg.d,
            l: 0,
            n: 0,
            k: cfg.k,
            seed: cfg.seed0,
            quantity: "tau_slope".into(),
            value: slope,
            method: "aggregate".into(),
            residual: 0.0,
        });
        report.note(format!(
            "log-log slope {slope:.3} vs target {} +- {}",
            cfg.slope_target, cfg.slope_tolerance
        ));
    }
    Ok(report)
}

fn log_log_slope(points: &[(usize, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(l, tau) in points {
        let x = (l as f64).ln();
        let y = tau.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn kmc_two_block(cfg: &Config) -> Result<Report> {
    let sizes = require_sizes(cfg, 2)?;
    let mut report = Report {
        name: "two_block".into(),
        rows: Vec::new(),
        pass: true,
        notes: Vec::new(),
    };
    let f = |r: f64| r * r;
    let phi = |_: &[f64]| 1.0;
    let replicates = cfg.seeds.max(1) as u64;
    let mut means = Vec::new();
    for &l in &sizes {
        let geom = ring(cfg.d, l)?;
        let n = half_sector(cfg, geom.n_sites)?;
        let enumerable = binomial(geom.n_sites, n) <= EXACT_SECTOR_LIMIT;
        let per_seed: Vec<Result<(u64, f64, f64, &'static str)>> = with_pool(cfg, || {
            (0..replicates)
                .into_par_iter()
                .map(|rep| {
                    let seed = cfg.seed0 + rep;
                    let field = kmc_field(&geom, cfg.k, l, seed)?;
                    if enumerable {
                        let space = ConfigSpace::new(Arc::clone(&geom), n)?;
                        let measure = CanonicalMeasure::from_field(&field, n)?;
                        let v = two_block_statistic_exact(
                            &space, &measure, &f, &phi, cfg.kwin, cfg.delta,
                        )?;
                        Ok((seed, v, 0.0, "exact"))
                    } else {
                        let (v, se) = two_block_statistic_mc(
                            &geom,
                            &field,
                            n,
                            &f,
                            &phi,
                            cfg.kwin,
                            cfg.delta,
                            cfg.samples,
                            seed,
                        )?;
                        Ok((seed, v, se, "mc"))
                    }
                })
                .collect()
        })?;
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut is_exact_flat = false;
        for item in per_seed {
            let (seed, v, se, method) = item?;
            sum += v;
            count += 1;
            report.rows.push(Row {
                d: cfg.d,
                l,
                n,
                k: cfg.k,
                seed,
                quantity: "two_block".into(),
                value: v,
                method: method.into(),
                residual: se,
            });
            // Replicates of the homogeneous exact value are identical;
            // keep one row instead of twenty copies.
            if cfg.k == 0.0 && method == "exact" {
                is_exact_flat = true;
                break;
            }
        }
        let mean = sum / count as f64;
        if is_exact_flat {
            means.push((l, mean));
        } else {
            means.push((l, mean));
            report.rows.push(Row {
                d: cfg.d,
                l,
                n,
                k: cfg.k,
                seed: cfg.seed0,
                quantity: "two_block_mean".into(),
                value: mean,
                method: "aggregate".into(),
                residual: 0.0,
            });
        }
        report.note(format!("L={l}: mean statistic {mean:.6}"));
    }
    let mut decreasing = true;
    for pair in means.windows(2) {
        if pair[1].1 >= pair[0].1 {
            decreasing = false;
            report.note(format!(
                "not decreasing: L={} gives {:.6} >= L={} gives {:.6}",
                pair[1].0, pair[1].1, pair[0].0, pair[0].1
            ));
        }
    }
    if means.len() >= 2 {
        report.pass &= decreasing;
        if decreasing {
            report.note("statistic strictly decreases across the size list");
        }
    }
    Ok(report)
}

/// Load a config file if given; used by the binary ahead of flag overlay.
pub fn load_patch(path: Option<&Path>) -> Result<ConfigPatch> {
    match path {
        None => Ok(ConfigPatch::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            ConfigPatch::from_toml(&text)
        }
    }
}
