//! Seeded GP simulation and the four experiment drivers.
//!
//! Determinism contract: every report is a pure function of (config, seed).
//! Replicate r draws from a counter-based stream keyed by (seed, r); site
//! designs draw from disjoint high-bit streams; parallel fan-out assembles
//! results in replicate order, so thread count never changes a byte.

use crate::error::{Error, Result};
use crate::inference::CorrelationFactor;
use crate::kernel::{
    gram_matrix, matern_kernel_partials, norm_constant, correlation_vector, truncation_bound,
    MaternParams, TruncationPolicy,
};
use crate::spectrum::{ManifoldSpec, Point};
use crate::rng::CounterRng;
use crate::stats;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Site-index streams sit in the upper half of the stream space so they can
/// never collide with replicate streams (replicate < 2^62).
const SITE_STREAM: u64 = 1 << 63;
const PAIR_STREAM: u64 = 0b11 << 62;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SiteDesign {
    EquallySpaced,
    UniformRandom,
}

impl SiteDesign {
    pub fn name(&self) -> &'static str {
        match self {
            SiteDesign::EquallySpaced => "equally-spaced",
            SiteDesign::UniformRandom => "uniform-random",
        }
    }

    pub fn parse(s: &str) -> Result<SiteDesign> {
        match s {
            "equally-spaced" => Ok(SiteDesign::EquallySpaced),
            "uniform-random" => Ok(SiteDesign::UniformRandom),
            other => Err(Error::Parse(format!(
                "unknown design {other:?}; expected equally-spaced or uniform-random"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub manifold: ManifoldSpec,
    pub nu: f64,
    pub sigma0_sq: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub design: SiteDesign,
    pub n_schedule: Vec<usize>,
    pub replicates: u64,
    pub seed: u64,
    pub eps: f64,
}

impl ExperimentConfig {
    /// The experiment setting the asymptotic claims are exercised at:
    /// rough field (nu = 1/2), sigma0^2 = 0.1, truth range 2, fitted range 1.
    pub fn default_circle() -> ExperimentConfig {
        ExperimentConfig {
            manifold: ManifoldSpec::Circle,
            nu: 0.5,
            sigma0_sq: 0.1,
            alpha0: 2.0,
            alpha1: 1.0,
            design: SiteDesign::EquallySpaced,
            n_schedule: vec![25, 50, 100, 200, 400],
            replicates: 200,
            seed: 1,
            eps: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("nu", self.nu),
            ("sigma0_sq", self.sigma0_sq),
            ("alpha0", self.alpha0),
            ("alpha1", self.alpha1),
            ("eps", self.eps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name: match name {
                        "nu" => "nu",
                        "sigma0_sq" => "sigma0_sq",
                        "alpha0" => "alpha0",
                        "alpha1" => "alpha1",
                        _ => "eps",
                    },
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if self.n_schedule.is_empty() {
            return Err(Error::InvalidParameter {
                name: "n_schedule",
                reason: "must be a nonempty increasing sequence".into(),
            });
        }
        if self.n_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter {
                name: "n_schedule",
                reason: format!("must be strictly increasing, got {:?}", self.n_schedule),
            });
        }
        if self.n_schedule[0] == 0 {
            return Err(Error::InvalidParameter {
                name: "n_schedule",
                reason: "site counts must be at least 1".into(),
            });
        }
        if self.replicates == 0 {
            return Err(Error::InvalidParameter {
                name: "replicates",
                reason: "need at least one replicate".into(),
            });
        }
        Ok(())
    }

    fn policy(&self) -> TruncationPolicy {
        TruncationPolicy::new(self.eps)
    }

    /// Canonical text rendering; equal configs render identically, and the
    /// report hash is the FNV-1a digest of these bytes.
    pub fn canonical_string(&self) -> String {
        let manifold = match &self.manifold {
            ManifoldSpec::Circle => "circle".to_string(),
            ManifoldSpec::Sphere2 => "sphere2".to_string(),
            ManifoldSpec::SphereD { d } => format!("sphere:{d}"),
            ManifoldSpec::Custom(c) => format!(
                "custom:d={},v={:.17e},levels={}",
                self.manifold.dimension(),
                self.manifold.volume(),
                c.levels()
            ),
        };
        let schedule: Vec<String> = self.n_schedule.iter().map(|n| n.to_string()).collect();
        format!(
            "manifold={manifold};nu={:.17e};sigma0_sq={:.17e};alpha0={:.17e};alpha1={:.17e};design={};n_schedule={};replicates={};seed={};eps={:.17e}",
            self.nu,
            self.sigma0_sq,
            self.alpha0,
            self.alpha1,
            self.design.name(),
            schedule.join(","),
            self.replicates,
            self.seed,
            self.eps,
        )
    }

    pub fn config_hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical_string().as_bytes()))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Parse a config from flat `key = value` text or a JSON object (detected
/// by a leading brace). Unknown keys come back untouched for the caller.
pub fn parse_config(text: &str) -> Result<(ExperimentConfig, BTreeMap<String, String>)> {
    let pairs = if text.trim_start().starts_with('{') {
        json_pairs(text)?
    } else {
        flat_pairs(text)?
    };
    build_config(pairs)
}

fn flat_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!("config line {}: expected `key = value`, got {raw:?}", lineno + 1))
        })?;
        let key = k.trim().to_string();
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Parse(format!("config line {}: duplicate key {key:?}", lineno + 1)));
        }
    }
    Ok(out)
}

fn json_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config JSON: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Parse("config JSON must be an object".into()))?;
    let mut out = BTreeMap::new();
    for (k, val) in obj {
        let s = match val {
            Value::String(s) => s.clone(),
            Value::Array(xs) => {
                let parts: Result<Vec<String>> = xs
                    .iter()
                    .map(|x| match x {
                        Value::Number(n) => Ok(n.to_string()),
                        other => Err(Error::Parse(format!("config key {k:?}: bad array element {other}"))),
                    })
                    .collect();
                parts?.join(",")
            }
            Value::Number(n) => n.to_string(),
            Value::Bool(b) => b.to_string(),
            other => {
                return Err(Error::Parse(format!("config key {k:?}: unsupported value {other}")));
            }
        };
        out.insert(k.clone(), s);
    }
    Ok(out)
}

fn build_config(
    mut pairs: BTreeMap<String, String>,
) -> Result<(ExperimentConfig, BTreeMap<String, String>)> {
    let mut cfg = ExperimentConfig::default_circle();
    if let Some(m) = pairs.remove("manifold") {
        cfg.manifold = parse_manifold_name(&m)?;
    }
    if let Some(v) = pairs.remove("nu") {
        cfg.nu = parse_f64("nu", &v)?;
    }
    if let Some(v) = pairs.remove("sigma0_sq") {
        cfg.sigma0_sq = parse_f64("sigma0_sq", &v)?;
    }
    if let Some(v) = pairs.remove("alpha0") {
        cfg.alpha0 = parse_f64("alpha0", &v)?;
    }
    if let Some(v) = pairs.remove("alpha1") {
        cfg.alpha1 = parse_f64("alpha1", &v)?;
    }
    if let Some(v) = pairs.remove("design") {
        cfg.design = SiteDesign::parse(&v)?;
    }
    if let Some(v) = pairs.remove("n_schedule") {
        let ns: Result<Vec<usize>> = v
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("n_schedule entry {p:?} is not an integer")))
            })
            .collect();
        cfg.n_schedule = ns?;
    }
    if let Some(v) = pairs.remove("replicates") {
        cfg.replicates = v
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::Parse(format!("replicates {v:?} is not an integer")))?;
    }
    if let Some(v) = pairs.remove("seed") {
        cfg.seed = v
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::Parse(format!("seed {v:?} is not a 64-bit integer")))?;
    }
    if let Some(v) = pairs.remove("eps") {
        cfg.eps = parse_f64("eps", &v)?;
    }
    cfg.validate()?;
    Ok((cfg, pairs))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("{key} value {v:?} is not a real number")))
}

/// Manifold names as the CLI spells them: circle, sphere2, sphere:<d>,
/// custom:<file> (the file is loaded here).
pub fn parse_manifold_name(s: &str) -> Result<ManifoldSpec> {
    match s {
        "circle" => Ok(ManifoldSpec::Circle),
        "sphere2" => Ok(ManifoldSpec::Sphere2),
        _ => {
            if let Some(d) = s.strip_prefix("sphere:") {
                let d: u32 = d
                    .parse()
                    .map_err(|_| Error::Parse(format!("sphere dimension {d:?} is not an integer")))?;
                ManifoldSpec::sphere_d(d)
            } else if let Some(path) = s.strip_prefix("custom:") {
                // An unreadable spectrum file is a bad argument, not an I/O
                // failure mid-computation; keep it in the Parse class.
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Parse(format!("cannot read spectrum file {path:?}: {e}")))?;
                Ok(ManifoldSpec::Custom(crate::spectrum::parse_custom_spectrum(
                    &text,
                )?))
            } else {
                Err(Error::Parse(format!(
                    "unknown manifold {s:?}; expected circle, sphere2, sphere:<d>, or custom:<file>"
                )))
            }
        }
    }
}

/// Deterministic site layout for one (design, n, seed) triple.
pub fn design_sites(
    m: &ManifoldSpec,
    design: SiteDesign,
    n: usize,
    seed: u64,
) -> Result<Vec<Point>> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "need at least one site".into(),
        });
    }
    let mut rng = CounterRng::new(seed, SITE_STREAM | n as u64);
    match (m, design) {
        (ManifoldSpec::Circle, SiteDesign::EquallySpaced) => {
            Ok((0..n).map(|i| Point::circle(i as f64 / n as f64).unwrap()).collect())
        }
        (ManifoldSpec::Circle, SiteDesign::UniformRandom) => {
            Ok((0..n).map(|_| Point::circle(rng.next_uniform()).unwrap()).collect())
        }
        (ManifoldSpec::Sphere2, SiteDesign::EquallySpaced) => {
            // Fibonacci lattice: near-uniform, no exact poles.
            let golden = PI * (3.0 - 5.0f64.sqrt());
            Ok((0..n)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * i as f64;
                    Point::sphere2(r * phi.cos(), r * phi.sin(), z).unwrap()
                })
                .collect())
        }
        (ManifoldSpec::Sphere2, SiteDesign::UniformRandom) => {
            Ok((0..n)
                .map(|_| {
                    let z = 2.0 * rng.next_uniform() - 1.0;
                    let phi = 2.0 * PI * rng.next_uniform();
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    Point::sphere2(r * phi.cos(), r * phi.sin(), z).unwrap()
                })
                .collect())
        }
        (ManifoldSpec::SphereD { d }, SiteDesign::UniformRandom) => (0..n)
            .map(|_| {
                let mut v = vec![0.0; *d as usize + 1];
                rng.fill_standard_normal(&mut v);
                Point::sphere_d(v)
            })
            .collect(),
        (ManifoldSpec::SphereD { .. }, SiteDesign::EquallySpaced) => Err(Error::InvalidParameter {
            name: "design",
            reason: "no equally-spaced layout is defined for higher spheres; use uniform-random"
                .into(),
        }),
        (ManifoldSpec::Custom(_), _) => Err(Error::InvalidParameter {
            name: "manifold",
            reason: "custom spectra carry no point set, so site designs are unavailable".into(),
        }),
    }
}

/// Exact finite-dimensional draw z = sigma L u with L L^T = Gamma and u
/// standard normal from the (seed, replicate) stream.
pub fn sample_gp(
    m: &ManifoldSpec,
    p: &MaternParams,
    t: &TruncationPolicy,
    sites: &[Point],
    seed: u64,
    replicate: u64,
) -> Result<Vec<f64>> {
    let gram = gram_matrix(m, p, t, sites)?;
    let factor = CorrelationFactor::new(&gram.correlation)?;
    Ok(draw(&factor.lower(), p.sigma2, seed, replicate))
}

fn draw(lower: &DMatrix<f64>, sigma2: f64, seed: u64, replicate: u64) -> Vec<f64> {
    let n = lower.nrows();
    let mut rng = CounterRng::new(seed, replicate);
    let mut u = vec![0.0; n];
    rng.fill_standard_normal(&mut u);
    let z = lower * DVector::from_column_slice(&u) * sigma2.sqrt();
    z.iter().cloned().collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) => format!("{x:.16e}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub experiment: &'static str,
    pub columns: Vec<&'static str>,
    pub records: Vec<Vec<Cell>>,
    pub summary: Value,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.records {
            debug_assert_eq!(row.len(), self.columns.len());
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Summary JSON with sorted keys, stable across runs.
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary is valid JSON")
    }
}

/// Correlation factors for simulation (truth range) and fitting (model
/// range) over one site set, built once and reused across replicates.
struct FitMachine {
    lower0: DMatrix<f64>,
    factor1: CorrelationFactor,
    sigma0: f64,
    n: usize,
}

impl FitMachine {
    fn new(cfg: &ExperimentConfig, sites: &[Point]) -> Result<FitMachine> {
        let t = cfg.policy();
        let p0 = MaternParams::new(cfg.nu, 1.0, cfg.alpha0)?;
        let p1 = MaternParams::new(cfg.nu, 1.0, cfg.alpha1)?;
        let gram0 = gram_matrix(&cfg.manifold, &p0, &t, sites)?;
        let factor0 = CorrelationFactor::new(&gram0.correlation)?;
        let lower0 = factor0.lower();
        let factor1 = if cfg.alpha1 == cfg.alpha0 {
            factor0
        } else {
            let gram1 = gram_matrix(&cfg.manifold, &p1, &t, sites)?;
            CorrelationFactor::new(&gram1.correlation)?
        };
        Ok(FitMachine {
            lower0,
            factor1,
            sigma0: cfg.sigma0_sq.sqrt(),
            n: sites.len(),
        })
    }

    /// sigma2_hat fitted under alpha1 on data simulated under
    /// (sigma0_sq, alpha0), for replicates 0..R in order.
    fn fitted_variances(&self, seed: u64, replicates: u64) -> Vec<f64> {
        (0..replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = CounterRng::new(seed, r);
                let mut u = vec![0.0; self.n];
                rng.fill_standard_normal(&mut u);
                let z = &self.lower0 * DVector::from_column_slice(&u) * self.sigma0;
                self.factor1.quad_form(&z) / self.n as f64
            })
            .collect()
    }
}

fn base_summary(cfg: &ExperimentConfig, experiment: &str) -> serde_json::Map<String, Value> {
    let mut map = serde_json::Map::new();
    map.insert("experiment".into(), json!(experiment));
    map.insert("seed".into(), json!(cfg.seed));
    map.insert("config_hash".into(), json!(cfg.config_hash()));
    map.insert("design".into(), json!(cfg.design.name()));
    map.insert("manifold".into(), json!(cfg.manifold.kind_name()));
    map
}

/// Simulate under the truth, fit the variance under the misspecified range,
/// and track sigma2_hat / C_{nu,alpha1} against its limit sigma0^2 / C_{nu,alpha0}.
pub fn exp_consistency(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let t = cfg.policy();
    let c0 = norm_constant(&cfg.manifold, &MaternParams::new(cfg.nu, 1.0, cfg.alpha0)?, &t)?.value;
    let c1 = norm_constant(&cfg.manifold, &MaternParams::new(cfg.nu, 1.0, cfg.alpha1)?, &t)?.value;
    let target = cfg.sigma0_sq / c0;

    let mut records = Vec::new();
    let mut per_n = Vec::new();
    for &n in &cfg.n_schedule {
        let sites = design_sites(&cfg.manifold, cfg.design, n, cfg.seed)?;
        let machine = FitMachine::new(cfg, &sites)?;
        let hats = machine.fitted_variances(cfg.seed, cfg.replicates);
        let mut abs_rel = Vec::with_capacity(hats.len());
        for (r, &hat) in hats.iter().enumerate() {
            let estimate = hat / c1;
            abs_rel.push((estimate - target).abs() / target);
            records.push(vec![
                Cell::Int(n as i64),
                Cell::Int(r as i64),
                Cell::Real(hat),
                Cell::Real(estimate),
                Cell::Real(target),
            ]);
        }
        per_n.push(json!({
            "n": n,
            "mean_abs_rel_error": stats::mean(&abs_rel),
        }));
    }

    let mut summary = base_summary(cfg, "consistency");
    summary.insert("target".into(), json!(target));
    summary.insert("per_n".into(), Value::Array(per_n));
    Ok(ExperimentReport {
        experiment: "consistency",
        columns: vec!["n", "replicate", "sigma2_hat", "estimate", "target"],
        records,
        summary: Value::Object(summary),
    })
}

/// Distribution of the centered, scaled variance estimate
/// s_r = sqrt(n) (sigma2_hat / sigma1^2 - 1) against its N(0,2) limit claim.
pub fn exp_normality(cfg: &ExperimentConfig, n: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "normality statistic needs at least two sites".into(),
        });
    }
    let t = cfg.policy();
    let c0 = norm_constant(&cfg.manifold, &MaternParams::new(cfg.nu, 1.0, cfg.alpha0)?, &t)?.value;
    let c1 = norm_constant(&cfg.manifold, &MaternParams::new(cfg.nu, 1.0, cfg.alpha1)?, &t)?.value;
    let sigma1_sq = cfg.sigma0_sq * c1 / c0;

    let sites = design_sites(&cfg.manifold, cfg.design, n, cfg.seed)?;
    let machine = FitMachine::new(cfg, &sites)?;
    let hats = machine.fitted_variances(cfg.seed, cfg.replicates);
    let sqrt_n = (n as f64).sqrt();
    let stats_vec: Vec<f64> = hats.iter().map(|h| sqrt_n * (h / sigma1_sq - 1.0)).collect();

    let records: Vec<Vec<Cell>> = hats
        .iter()
        .zip(&stats_vec)
        .enumerate()
        .map(|(r, (&hat, &s))| vec![Cell::Int(r as i64), Cell::Real(hat), Cell::Real(s)])
        .collect();

    let mean = stats::mean(&stats_vec);
    let variance = stats::sample_variance(&stats_vec);
    let limit_cdf = |x: f64| stats::standard_normal_cdf(x / 2.0f64.sqrt());
    let ks = stats::ks_distance(&stats_vec, limit_cdf);
    let ks_p = stats::ks_p_value(ks, stats_vec.len());
    let hist = stats::histogram(&stats_vec, -8.5, 8.5, 34);

    let mut summary = base_summary(cfg, "normality");
    summary.insert("n".into(), json!(n));
    summary.insert("sigma1_sq".into(), json!(sigma1_sq));
    summary.insert("mean".into(), json!(mean));
    summary.insert("variance".into(), json!(variance));
    summary.insert("ks_distance".into(), json!(ks));
    summary.insert("ks_p_value".into(), json!(ks_p));
    summary.insert(
        "histogram".into(),
        json!({
            "lo": hist.lo,
            "hi": hist.hi,
            "counts": hist.counts,
            "outside": hist.outside,
        }),
    );
    Ok(ExperimentReport {
        experiment: "normality",
        columns: vec!["replicate", "sigma2_hat", "stat"],
        records,
        summary: Value::Object(summary),
    })
}

/// Predictive efficiency ratios along the schedule, plus the sampled ratio
/// with the fitted variance plugged into the numerator.
pub fn exp_prediction(cfg: &ExperimentConfig, x0: &Point) -> Result<ExperimentReport> {
    cfg.validate()?;
    if !x0.lies_on(&cfg.manifold) {
        return Err(Error::ManifoldMismatch);
    }
    let t = cfg.policy();
    let c0 = norm_constant(&cfg.manifold, &MaternParams::new(cfg.nu, 1.0, cfg.alpha0)?, &t)?.value;
    let c1 = norm_constant(&cfg.manifold, &MaternParams::new(cfg.nu, 1.0, cfg.alpha1)?, &t)?.value;
    let sigma1_sq = cfg.sigma0_sq * c1 / c0;

    let mut records = Vec::new();
    let mut per_n = Vec::new();
    for &n in &cfg.n_schedule {
        let sites = design_sites(&cfg.manifold, cfg.design, n, cfg.seed)?;
        let quads = PredictionQuads::new(cfg, &sites, x0)?;
        // Thm-style deterministic ratios under the truth measure.
        let r1 = (cfg.sigma0_sq * quads.q01) / (cfg.sigma0_sq * quads.q00);
        let r2_det = (sigma1_sq * quads.q11) / (cfg.sigma0_sq * quads.q01);

        let machine = FitMachine::new(cfg, &sites)?;
        let hats = machine.fitted_variances(cfg.seed, cfg.replicates);
        let mut sampled = Vec::with_capacity(hats.len());
        for (r, &hat) in hats.iter().enumerate() {
            let r2 = (hat * quads.q11) / (cfg.sigma0_sq * quads.q01);
            sampled.push(r2);
            records.push(vec![
                Cell::Int(n as i64),
                Cell::Int(r as i64),
                Cell::Real(hat),
                Cell::Real(r2),
            ]);
        }
        per_n.push(json!({
            "n": n,
            "r1": r1,
            "r2_deterministic": r2_det,
            "r2_sampled_mean": stats::mean(&sampled),
        }));
    }

    let mut summary = base_summary(cfg, "prediction");
    summary.insert("sigma1_sq".into(), json!(sigma1_sq));
    summary.insert("per_n".into(), Value::Array(per_n));
    Ok(ExperimentReport {
        experiment: "prediction",
        columns: vec!["n", "replicate", "sigma2_hat", "r2_sampled"],
        records,
        summary: Value::Object(summary),
    })
}

/// Correlation-scale risks of the alpha1-weights and alpha0-weights
/// predictors: q_ab = 1 - 2 w_b' gamma_a + w_b' Gamma_a w_b.
struct PredictionQuads {
    q00: f64,
    q01: f64,
    q11: f64,
}

impl PredictionQuads {
    fn new(cfg: &ExperimentConfig, sites: &[Point], x0: &Point) -> Result<PredictionQuads> {
        let t = cfg.policy();
        let m = &cfg.manifold;
        let p0 = MaternParams::new(cfg.nu, 1.0, cfg.alpha0)?;
        let p1 = MaternParams::new(cfg.nu, 1.0, cfg.alpha1)?;
        let gram0 = gram_matrix(m, &p0, &t, sites)?;
        let gamma0 = correlation_vector(m, &p0, &t, sites, x0)?;
        let gram1 = gram_matrix(m, &p1, &t, sites)?;
        let gamma1 = correlation_vector(m, &p1, &t, sites, x0)?;
        let f0 = CorrelationFactor::new(&gram0.correlation)?;
        let f1 = CorrelationFactor::new(&gram1.correlation)?;
        let w0 = f0.solve(&gamma0);
        let w1 = f1.solve(&gamma1);
        let risk = |g: &DMatrix<f64>, gam: &DVector<f64>, w: &DVector<f64>| {
            (1.0 - 2.0 * w.dot(gam) + (g * w).dot(w)).max(0.0)
        };
        Ok(PredictionQuads {
            q00: risk(&gram0.correlation, &gamma0, &w0),
            q01: risk(&gram0.correlation, &gamma0, &w1),
            q11: risk(&gram1.correlation, &gamma1, &w1),
        })
    }
}

/// Partial-sum truncation error against the analytic bound on the sphere.
pub fn exp_truncation(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if !matches!(cfg.manifold, ManifoldSpec::Sphere2) {
        return Err(Error::InvalidParameter {
            name: "manifold",
            reason: "the truncation experiment is defined on sphere2".into(),
        });
    }
    let p = MaternParams::new(cfg.nu, cfg.sigma0_sq, cfg.alpha0)?;
    let t = cfg.policy();
    let grid: [u64; 3] = [10, 100, 1000];
    let pairs = cfg.replicates.min(50) as usize;

    let mut rng = CounterRng::new(cfg.seed, PAIR_STREAM);
    let draw_point = |rng: &mut CounterRng| {
        let z = 2.0 * rng.next_uniform() - 1.0;
        let phi = 2.0 * PI * rng.next_uniform();
        let r = (1.0 - z * z).max(0.0).sqrt();
        Point::sphere2(r * phi.cos(), r * phi.sin(), z).unwrap()
    };

    // One streaming pass per pair over every cut and its reference.
    let mut cuts: Vec<u64> = Vec::new();
    for &g in &grid {
        cuts.push(g);
        cuts.push((g * 100).min(t.max_terms));
    }
    let mut max_err = vec![0.0f64; grid.len()];
    for _ in 0..pairs {
        let x = draw_point(&mut rng);
        let y = draw_point(&mut rng);
        let parts = matern_kernel_partials(&cfg.manifold, &p, &cuts, &x, &y)?;
        for (i, _) in grid.iter().enumerate() {
            let err = (parts[2 * i] - parts[2 * i + 1]).abs();
            max_err[i] = max_err[i].max(err);
        }
    }

    let mut records = Vec::new();
    let mut all_within = true;
    let mut rows = Vec::new();
    for (i, &g) in grid.iter().enumerate() {
        let bound = truncation_bound(&p, g);
        let within = max_err[i] <= bound;
        all_within &= within;
        records.push(vec![
            Cell::Int(g as i64),
            Cell::Real(max_err[i]),
            Cell::Real(bound),
            Cell::Int(within as i64),
        ]);
        rows.push(json!({
            "n_terms": g,
            "max_abs_err": max_err[i],
            "bound": bound,
            "within": within,
        }));
    }

    let mut summary = base_summary(cfg, "truncation");
    summary.insert("pairs".into(), json!(pairs));
    summary.insert("all_within".into(), json!(all_within));
    summary.insert("grid".into(), Value::Array(rows));
    Ok(ExperimentReport {
        experiment: "truncation",
        columns: vec!["n_terms", "max_abs_err", "bound", "within"],
        records,
        summary: Value::Object(summary),
    })
}
