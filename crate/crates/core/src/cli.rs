//! The `ba-forms` command-line front end.
//!
//! Settings resolve as flag, then `--config` file (flat `key = value`),
//! then built-in default. Randomized commands need a seed from one of
//! those or from `BA_FORMS_SEED`.
//!
//! Exit codes: 0 success, 1 a checked inequality or identity failed,
//! 2 usage, configuration or input error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exterior::{binomial, enumerate_multi_indices, hodge_star, FormVector};
use crate::fieldio::{read_field_file, write_field_file};
use crate::grid::{random_band_limited_vector, GridSpec};
use crate::haar::{
    bilinear_bound, bilinear_haar_sum, haar_fuzz, BellmanPoint, BellmanProber, DyadicFunction,
    HaarFuzzConfig, HaarSuite,
};
use crate::heat::{embedding_fuzz, lp_pairing_identity, EmbeddingFuzzConfig, Quadrature, ValueSpace};
use crate::operator::{apply_s_k, build_multiplier, multiplier_from_wedge, norm_search, FormField, NormSearchConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable consulted when no seed is configured.
pub const SEED_ENV: &str = "BA_FORMS_SEED";

#[derive(Parser, Debug)]
#[command(name = "ba-forms", version, about = "Beurling-Ahlfors operator on forms: apply, search and verify")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the verification suites.
    Verify,
    /// Apply S_k to a field file and write the result to --out.
    Apply {
        /// Input field file.
        input: PathBuf,
    },
    /// Search for large ||S_k f||_p / ||f||_p.
    Norm,
    /// Fuzz the bilinear embedding inequality.
    Embed,
    /// Probe the Bellman function at random midpoint triples.
    Bellman,
}

#[derive(Args, Debug, Default)]
struct Options {
    #[arg(long, global = true)]
    m: Option<usize>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Points per axis: one size for every axis or a comma list.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Box side lengths: one value or a comma list.
    #[arg(long = "box", global = true)]
    box_length: Option<String>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(long = "quad-T", global = true)]
    quad_t: Option<f64>,
    #[arg(long = "quad-nodes", global = true)]
    quad_nodes: Option<usize>,
    /// Worker threads; 0 lets the pool decide.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Suites to run (comma list or repeated).
    #[arg(long, global = true, value_delimiter = ',')]
    suite: Vec<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dimension of the value space E.
    #[arg(long = "dim-e", global = true)]
    dim_e: Option<usize>,
    #[arg(long = "inject-fault", global = true, hide = true)]
    inject_fault: bool,
}

const CONFIG_KEYS: &[&str] = &[
    "m", "k", "p", "grid", "box", "trials", "seed", "depth", "budget", "quad-T", "quad-nodes", "jobs",
    "suite", "out", "dim-e",
];

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key = value, found {line:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("unknown key {key:?}"),
            });
        }
        map.insert(key.to_string(), value.to_string());
    }
    Ok(map)
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    /// Spatial dimension; `None` means the command default (2).
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub p: Option<f64>,
    pub grid: Option<String>,
    pub box_length: Option<String>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub depth: Option<usize>,
    pub budget: Option<usize>,
    pub quad_t: Option<f64>,
    pub quad_nodes: usize,
    pub jobs: usize,
    pub suites: Vec<Suite>,
    pub out: Option<PathBuf>,
    pub dim_e: Option<usize>,
    pub inject_fault: bool,
}

fn pick<T: FromStr>(flag: Option<T>, config: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match config.get(key) {
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Usage(format!("config value {v:?} for {key} is invalid"))),
        None => Ok(None),
    }
}

impl Settings {
    fn resolve(opts: Options, env_seed: Option<String>) -> Result<Self> {
        let config = match &opts.config {
            Some(path) => parse_config(&fs::read_to_string(path)?)?,
            None => BTreeMap::new(),
        };
        let mut seed = pick(opts.seed, &config, "seed")?;
        if seed.is_none() {
            if let Some(v) = env_seed {
                seed = Some(
                    v.trim()
                        .parse()
                        .map_err(|_| Error::Usage(format!("{SEED_ENV}={v:?} is not an integer")))?,
                );
            }
        }
        let suite_names: Vec<String> = if !opts.suite.is_empty() {
            opts.suite.clone()
        } else {
            config
                .get("suite")
                .map(|s| s.split(',').map(|x| x.trim().to_string()).collect())
                .unwrap_or_default()
        };
        let suites = suite_names
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| s.parse())
            .collect::<Result<Vec<Suite>>>()?;
        Ok(Self {
            m: pick(opts.m, &config, "m")?,
            k: pick(opts.k, &config, "k")?,
            p: pick(opts.p, &config, "p")?,
            grid: pick(opts.grid, &config, "grid")?,
            box_length: pick(opts.box_length, &config, "box")?,
            trials: pick(opts.trials, &config, "trials")?,
            seed,
            depth: pick(opts.depth, &config, "depth")?,
            budget: pick(opts.budget, &config, "budget")?,
            quad_t: pick(opts.quad_t, &config, "quad-T")?,
            quad_nodes: pick(opts.quad_nodes, &config, "quad-nodes")?.unwrap_or(64),
            jobs: pick(opts.jobs, &config, "jobs")?.unwrap_or(0),
            suites,
            out: pick(opts.out, &config, "out")?,
            dim_e: pick(opts.dim_e, &config, "dim-e")?,
            inject_fault: opts.inject_fault,
        })
    }

    pub fn dimension(&self) -> usize {
        self.m.unwrap_or(2)
    }

    fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::Usage(format!("this command is randomized; pass --seed, set seed in --config, or set {SEED_ENV}"))
        })
    }

    /// Grid for dimension `m`, defaulting to `default_n` points per axis on
    /// a box of side `2π`.
    fn grid_spec(&self, m: usize, default_n: usize) -> Result<GridSpec> {
        let sizes: Vec<usize> = match &self.grid {
            None => vec![default_n; m],
            Some(s) => expand(parse_list(s, "grid")?, m, "grid")?,
        };
        let lengths: Vec<f64> = match &self.box_length {
            None => vec![2.0 * std::f64::consts::PI; m],
            Some(s) => expand(parse_list(s, "box")?, m, "box")?,
        };
        GridSpec::new(sizes, lengths).map_err(|e| Error::Usage(e.to_string()))
    }
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(|c| c == ',' || c == 'x')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Usage(format!("invalid --{what} entry {t:?}")))
        })
        .collect()
}

fn expand<T: Clone>(v: Vec<T>, m: usize, what: &str) -> Result<Vec<T>> {
    match v.len() {
        1 => Ok(vec![v[0].clone(); m]),
        n if n == m => Ok(v),
        n => Err(Error::Usage(format!("--{what} has {n} entries, expected 1 or {m}"))),
    }
}

/// A verification suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Hodge,
    MultiplierMatch,
    LpIdentity,
    Embedding,
    Burkholder,
    BilinearHaar,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Hodge,
        Suite::MultiplierMatch,
        Suite::LpIdentity,
        Suite::Embedding,
        Suite::Burkholder,
        Suite::BilinearHaar,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Hodge => "hodge",
            Suite::MultiplierMatch => "multiplier_match",
            Suite::LpIdentity => "lp_identity",
            Suite::Embedding => "embedding",
            Suite::Burkholder => "burkholder",
            Suite::BilinearHaar => "bilinear_haar",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|x| x.name()).collect();
                Error::Usage(format!("unknown suite {s:?}; choose from {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checks: usize,
    pub violations: usize,
    /// Largest normalized error or slack seen; the suite's tolerance is
    /// applied to this quantity.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

struct Tally {
    checks: usize,
    violations: usize,
    worst: f64,
    tolerance: f64,
}

impl Tally {
    fn new(tolerance: f64) -> Self {
        Self {
            checks: 0,
            violations: 0,
            worst: f64::NEG_INFINITY,
            tolerance,
        }
    }

    fn record(&mut self, err: f64) {
        self.checks += 1;
        if !(err <= self.tolerance) {
            self.violations += 1;
        }
        if err.is_nan() || err > self.worst {
            self.worst = err;
        }
    }

    fn finish(self, suite: Suite) -> SuiteReport {
        SuiteReport {
            name: suite.name(),
            checks: self.checks,
            violations: self.violations,
            worst: self.worst,
            tolerance: self.tolerance,
            passed: self.violations == 0,
        }
    }
}

fn random_xi(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let xi: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        if xi.iter().any(|&x| x != 0.0) {
            return xi;
        }
    }
}

fn suite_rng(seed: u64, suite: Suite) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5851_F42D_4C95_7F2D_u64.wrapping_mul(suite as u64 + 1)))
}

fn suite_hodge(s: &Settings, seed: u64) -> Result<SuiteReport> {
    let mut t = Tally::new(1e-10);
    for m in 1..=6 {
        for k in 0..=m {
            let sign = if (k * (m - k)) % 2 == 0 { 1.0 } else { -1.0 };
            for i in enumerate_multi_indices(m, k)? {
                let e = FormVector::basis(&i);
                let back = hodge_star(&hodge_star(&e));
                let expected = e.scale(sign.into());
                t.record(back.max_abs_diff(&expected));
            }
        }
    }
    let mut rng = suite_rng(seed, Suite::Hodge);
    let trials = s.trials.unwrap_or(3);
    for m in 2..=4 {
        let g = GridSpec::cube(m, 8)?;
        for k in 0..=m {
            for _ in 0..trials {
                let f = FormField::new(k, random_band_limited_vector(&g, binomial(m, k), &mut rng))?;
                let lhs = apply_s_k(&f)?.hodge_star().to_spatial();
                let rhs = apply_s_k(&f.hodge_star())?.to_spatial();
                let scale = f.field().to_spatial().max_abs().max(f64::MIN_POSITIVE);
                let diff = lhs.field().add_scaled(rhs.field(), 1.0).max_abs();
                t.record(diff / scale);
            }
        }
    }
    Ok(t.finish(Suite::Hodge))
}

fn suite_multiplier(s: &Settings, seed: u64) -> Result<SuiteReport> {
    let mut t = Tally::new(1e-12);
    let mut rng = suite_rng(seed, Suite::MultiplierMatch);
    let trials = s.trials.unwrap_or(20);
    for m in 1..=5 {
        for k in 0..=m {
            for _ in 0..trials {
                let xi = random_xi(m, &mut rng);
                let mut entry = build_multiplier(m, k, &xi)?;
                if s.inject_fault {
                    entry[(0, 0)] += 1e-3;
                }
                let wedge = multiplier_from_wedge(m, k, &xi)?;
                t.record((&entry - &wedge).abs().max());
                let n = entry.nrows();
                t.record((entry.transpose() * &entry - DMatrix::identity(n, n)).abs().max());
            }
        }
    }
    Ok(t.finish(Suite::MultiplierMatch))
}

fn suite_lp_identity(s: &Settings, seed: u64) -> Result<SuiteReport> {
    // Records the worse of the analytic mismatch (tolerance 1e-10) and
    // the quadrature gap scaled onto the same tolerance (1e-4 -> 1e-10).
    let mut t = Tally::new(1e-10);
    let mut rng = suite_rng(seed, Suite::LpIdentity);
    let trials = s.trials.unwrap_or(4);
    let dim = s.dim_e.unwrap_or(1);
    for m in [2, 3] {
        let g = s.grid_spec(m, if m == 2 { 16 } else { 8 })?;
        let quad = match s.quad_t {
            Some(h) => Quadrature::with_horizon(&g, h, s.quad_nodes)?,
            None => Quadrature::for_grid(&g, s.quad_nodes)?,
        };
        for _ in 0..trials {
            let phi = random_band_limited_vector(&g, dim, &mut rng);
            let psi = random_band_limited_vector(&g, dim, &mut rng);
            let scale = phi.lp_norm(2.0) * psi.lp_norm(2.0);
            for j in 1..=m {
                for k in 1..=m {
                    let id = lp_pairing_identity(&phi, &psi, j, k, &quad)?;
                    let analytic = (id.lhs - id.rhs_analytic).norm() / scale;
                    let quadrature = (id.rhs_quadrature - id.rhs_analytic).norm() / scale;
                    t.record(analytic.max(quadrature * 1e-6));
                }
            }
        }
    }
    Ok(t.finish(Suite::LpIdentity))
}

fn embedding_config(s: &Settings, seed: u64, default_trials: usize) -> Result<EmbeddingFuzzConfig> {
    let m = s.dimension();
    let spaces = match (s.dim_e, s.k) {
        (Some(d), _) => vec![ValueSpace::Euclidean(d)],
        (None, Some(k)) => vec![ValueSpace::Euclidean(1), ValueSpace::Euclidean(3), ValueSpace::Forms(k)],
        (None, None) => vec![
            ValueSpace::Euclidean(1),
            ValueSpace::Euclidean(3),
            ValueSpace::Forms(1.min(m)),
        ],
    };
    if let Some(k) = s.k {
        if k > m {
            return Err(Error::Usage(format!("k = {k} exceeds m = {m}")));
        }
    }
    Ok(EmbeddingFuzzConfig {
        spec: s.grid_spec(m, 16)?,
        exponents: match s.p {
            Some(p) => vec![p],
            None => vec![2.0, 2.5, 3.0, 4.0, 8.0],
        },
        spaces,
        trials_per_case: s.trials.unwrap_or(default_trials),
        nodes: s.quad_nodes,
        horizon: s.quad_t,
        seed,
    })
}

fn suite_embedding(s: &Settings, seed: u64) -> Result<SuiteReport> {
    let summary = embedding_fuzz(&embedding_config(s, seed, 4)?)?;
    let mut t = Tally::new(crate::heat::EMBEDDING_TOLERANCE);
    for r in &summary.records {
        t.record(r.slack.max(r.l1_slack));
    }
    Ok(t.finish(Suite::Embedding))
}

fn suite_haar(s: &Settings, seed: u64, suite: Suite) -> Result<SuiteReport> {
    let (haar, exponents, default_depth) = match suite {
        Suite::Burkholder => (HaarSuite::Burkholder, vec![2.0, 3.0, 4.0, 8.0], 8),
        _ => (HaarSuite::BilinearHaar, vec![2.0, 3.0, 8.0], 10),
    };
    let summary = haar_fuzz(&HaarFuzzConfig {
        suite: haar,
        exponents: s.p.map(|p| vec![p]).unwrap_or(exponents),
        dims: s.dim_e.map(|d| vec![d]).unwrap_or_else(|| vec![1, 2, 4]),
        max_depth: s.depth.unwrap_or(default_depth),
        trials_per_case: s.trials.map(|t| t * 50).unwrap_or(1000),
        seed: seed ^ suite as u64,
    })?;
    let mut t = Tally::new(crate::haar::HAAR_TOLERANCE);
    t.checks = summary.trials;
    t.violations = summary.violations;
    t.worst = summary.max_slack;
    if suite == Suite::BilinearHaar {
        // Depth-1 equality case at p = 2: the sum and the bound are both 1.
        let f = DyadicFunction::scalar(&[1.0, -1.0])?;
        let gap = (bilinear_haar_sum(&f, &f)? - 1.0).abs().max((bilinear_bound(&f, &f, 2.0) - 1.0).abs());
        t.record(gap);
    }
    Ok(t.finish(suite))
}

fn run_suite(suite: Suite, s: &Settings, seed: u64) -> Result<SuiteReport> {
    match suite {
        Suite::Hodge => suite_hodge(s, seed),
        Suite::MultiplierMatch => suite_multiplier(s, seed),
        Suite::LpIdentity => suite_lp_identity(s, seed),
        Suite::Embedding => suite_embedding(s, seed),
        Suite::Burkholder | Suite::BilinearHaar => suite_haar(s, seed, suite),
    }
}

/// Outcome of a command: a JSON report, optional CSV, and an exit code.
pub struct CommandOutput {
    pub report: Value,
    pub csv: Option<String>,
    pub exit: i32,
}

fn with_header(command: &str, mut body: Value) -> Value {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    if let Value::Object(map) = &mut body {
        map.insert("command".into(), json!(command));
        map.insert("timestamp".into(), json!(stamp));
    }
    body
}

pub fn cmd_verify(s: &Settings) -> Result<CommandOutput> {
    let seed = s.require_seed()?;
    let mut suites = s.suites.clone();
    if suites.is_empty() {
        suites = Suite::ALL.to_vec();
    }
    suites.sort();
    suites.dedup();
    let reports = suites
        .iter()
        .map(|&suite| run_suite(suite, s, seed))
        .collect::<Result<Vec<_>>>()?;
    let violations: usize = reports.iter().map(|r| r.violations).sum();
    let mut csv = String::from("suite,checks,violations,worst,tolerance,passed\n");
    for r in &reports {
        writeln!(csv, "{},{},{},{:e},{:e},{}", r.name, r.checks, r.violations, r.worst, r.tolerance, r.passed).unwrap();
    }
    let report = with_header(
        "verify",
        json!({
            "seed": seed,
            "suites": reports,
            "violations": violations,
            "passed": violations == 0,
        }),
    );
    Ok(CommandOutput {
        report,
        csv: Some(csv),
        exit: if violations == 0 { EXIT_OK } else { EXIT_VIOLATION },
    })
}

pub fn cmd_apply(s: &Settings, input: &Path) -> Result<CommandOutput> {
    let out = s
        .out
        .clone()
        .ok_or_else(|| Error::Usage("apply needs --out for the output field file".into()))?;
    let field = read_field_file(input)?;
    if s.m.is_some_and(|m| m != field.m()) || s.k.is_some_and(|k| k != field.k()) {
        return Err(Error::Usage(format!(
            "file holds (m, k) = ({}, {}), which does not match the requested values",
            field.m(),
            field.k()
        )));
    }
    let image = apply_s_k(&field)?;
    write_field_file(&out, &image)?;
    let report = with_header(
        "apply",
        json!({
            "m": field.m(),
            "k": field.k(),
            "grid": field.spec().sizes(),
            "output": out.display().to_string(),
        }),
    );
    Ok(CommandOutput {
        report,
        csv: None,
        exit: EXIT_OK,
    })
}

pub fn cmd_norm(s: &Settings) -> Result<CommandOutput> {
    let seed = s.require_seed()?;
    let k = s.k.unwrap_or(1);
    let p = s.p.unwrap_or(3.0);
    let m = s.dimension();
    let spec = s.grid_spec(m, 16)?;
    let config = NormSearchConfig {
        restarts: s.trials.unwrap_or(10),
        budget: s.budget.unwrap_or(40),
        seed,
        ..NormSearchConfig::default()
    };
    let r = norm_search(m, k, p, &spec, &config)?;
    let mut csv = String::from("iteration,ratio\n");
    for t in &r.trace {
        writeln!(csv, "{},{}", t.iteration, t.ratio).unwrap();
    }
    Ok(CommandOutput {
        exit: if r.violated { EXIT_VIOLATION } else { EXIT_OK },
        report: with_header("norm", serde_json::to_value(&r).expect("serializable")),
        csv: Some(csv),
    })
}

pub fn cmd_embed(s: &Settings) -> Result<CommandOutput> {
    let seed = s.require_seed()?;
    let config = embedding_config(s, seed, 20)?;
    let summary = embedding_fuzz(&config)?;
    let mut csv = String::from("trial,p,space,lhs,rhs,slack,l1_lhs,l1_rhs,l1_slack\n");
    for r in &summary.records {
        let space = match r.space {
            ValueSpace::Euclidean(d) => format!("R^{d}"),
            ValueSpace::Forms(k) => format!("Lambda_{k}"),
        };
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.trial, r.p, space, r.lhs, r.rhs, r.slack, r.l1_lhs, r.l1_rhs, r.l1_slack
        )
        .unwrap();
    }
    let mut body = serde_json::to_value(&summary).expect("serializable");
    body["m"] = json!(s.dimension());
    body["grid"] = json!(config.spec.sizes());
    body["exponents"] = json!(config.exponents);
    body["spaces"] = json!(config.spaces);
    Ok(CommandOutput {
        exit: if summary.violations == 0 { EXIT_OK } else { EXIT_VIOLATION },
        report: with_header("embed", body),
        csv: Some(csv),
    })
}

fn random_point(p: f64, dim: usize, rng: &mut ChaCha8Rng) -> Result<BellmanPoint> {
    let q = p / (p - 1.0);
    let xi: Vec<f64> = (0..dim).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let gamma: Vec<f64> = (0..dim).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let big_xi = n(&xi).powf(p) * rng.gen_range(1.1..3.0) + rng.gen_range(0.01..0.5);
    let big_gamma = n(&gamma).powf(q) * rng.gen_range(1.1..3.0) + rng.gen_range(0.01..0.5);
    BellmanPoint::new(big_xi, big_gamma, xi, gamma, p)
}

#[derive(Serialize)]
struct ProbeRow {
    big_xi: f64,
    big_gamma: f64,
    norm_xi: f64,
    norm_gamma: f64,
    estimate: Option<f64>,
    size_bound: f64,
}

pub fn cmd_bellman(s: &Settings) -> Result<CommandOutput> {
    let seed = s.require_seed()?;
    let p = s.p.unwrap_or(3.0);
    if !(p >= 2.0) {
        return Err(Error::Usage(format!("bellman needs p >= 2, got {p}")));
    }
    let dim = s.dim_e.unwrap_or(1);
    let depth = s.depth.unwrap_or(5);
    let budget = s.budget.unwrap_or(8);
    let trials = s.trials.unwrap_or(10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prober = BellmanProber::new(seed);
    let mut rows = Vec::new();
    let mut superadditivity_failures = 0;
    let mut no_sample = 0;
    let mut max_slack = f64::NEG_INFINITY;
    let row = |a: &BellmanPoint, est: Option<f64>, rows: &mut Vec<ProbeRow>| {
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        rows.push(ProbeRow {
            big_xi: a.big_xi,
            big_gamma: a.big_gamma,
            norm_xi: n(&a.xi),
            norm_gamma: n(&a.gamma),
            estimate: est,
            size_bound: a.size_bound(),
        });
    };
    for _ in 0..trials {
        let minus = random_point(p, dim, &mut rng)?;
        let plus = random_point(p, dim, &mut rng)?;
        let r = prober.probe_midpoint(&minus, &plus, depth, budget)?;
        row(&minus, r.b_minus, &mut rows);
        row(&plus, r.b_plus, &mut rows);
        row(&r.midpoint, r.b_mid, &mut rows);
        if r.superadditive(1e-12) == Some(false) {
            superadditivity_failures += 1;
        }
        if r.lower_bound.is_none() {
            no_sample += 1;
        }
    }
    let mut violations = superadditivity_failures;
    for r in &rows {
        if let Some(b) = r.estimate {
            let slack = b - r.size_bound;
            max_slack = max_slack.max(slack);
            if slack > 1e-9 {
                violations += 1;
            }
        }
    }
    let mut csv = String::from("Xi,Gamma,norm_xi,norm_gamma,estimate,size_bound\n");
    for r in &rows {
        let est = r.estimate.map(|v| v.to_string()).unwrap_or_else(|| "no_sample".into());
        writeln!(csv, "{},{},{},{},{},{}", r.big_xi, r.big_gamma, r.norm_xi, r.norm_gamma, est, r.size_bound).unwrap();
    }
    let body = json!({
        "p": p,
        "dim_E": dim,
        "depth": depth,
        "budget": budget,
        "trials": trials,
        "probes": rows.len(),
        "violations": violations,
        "superadditivity_failures": superadditivity_failures,
        "no_sample_triples": no_sample,
        "max_slack": max_slack,
        "estimates": rows,
    });
    Ok(CommandOutput {
        exit: if violations == 0 { EXIT_OK } else { EXIT_VIOLATION },
        report: with_header("bellman", body),
        csv: Some(csv),
    })
}

fn emit(output: &CommandOutput, out: Option<&Path>, is_apply: bool) -> Result<()> {
    let text = serde_json::to_string_pretty(&output.report).expect("serializable") + "\n";
    match out {
        Some(path) if !is_apply => {
            fs::write(path, &text)?;
            if let Some(csv) = &output.csv {
                fs::write(path.with_extension("csv"), csv)?;
            }
        }
        _ => print!("{text}"),
    }
    Ok(())
}

fn dispatch(command: &Command, s: &Settings) -> Result<i32> {
    let output = match command {
        Command::Verify => cmd_verify(s)?,
        Command::Apply { input } => cmd_apply(s, input)?,
        Command::Norm => cmd_norm(s)?,
        Command::Embed => cmd_embed(s)?,
        Command::Bellman => cmd_bellman(s)?,
    };
    emit(&output, s.out.as_deref(), matches!(command, Command::Apply { .. }))?;
    Ok(output.exit)
}

/// Runs the CLI on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let settings = match Settings::resolve(cli.opts, std::env::var(SEED_ENV).ok()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(settings.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(&cli.command, &settings)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(args: &[&str]) -> Settings {
        let mut full = vec!["ba-forms", "verify"];
        full.extend_from_slice(args);
        let cli = Cli::try_parse_from(full).unwrap();
        Settings::resolve(cli.opts, None).unwrap()
    }

    #[test]
    fn config_parsing() {
        let c = parse_config("# comment\nm = 3\n\nseed=7 # trailing\n").unwrap();
        assert_eq!(c["m"], "3");
        assert_eq!(c["seed"], "7");
        assert!(matches!(parse_config("m 3"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config("\nbogus = 1"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn precedence_flag_config_env() {
        let dir = std::env::temp_dir().join(format!("ba-forms-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        fs::write(&path, "m = 3\nseed = 11\nsuite = hodge, burkholder\n").unwrap();
        let p = path.to_str().unwrap();
        let s = settings(&["--config", p]);
        assert_eq!((s.dimension(), s.seed), (3, Some(11)));
        assert_eq!(s.suites, vec![Suite::Hodge, Suite::Burkholder]);
        let s = settings(&["--config", p, "--m", "4", "--seed", "5"]);
        assert_eq!((s.dimension(), s.seed), (4, Some(5)));
        let cli = Cli::try_parse_from(["ba-forms", "norm"]).unwrap();
        let s = Settings::resolve(cli.opts, Some("99".into())).unwrap();
        assert_eq!(s.seed, Some(99));
        let cli = Cli::try_parse_from(["ba-forms", "norm", "--config", p]).unwrap();
        let s = Settings::resolve(cli.opts, Some("99".into())).unwrap();
        assert_eq!(s.seed, Some(11));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn grid_flags() {
        let s = settings(&["--grid", "8,16", "--box", "1.0"]);
        let g = s.grid_spec(2, 4).unwrap();
        assert_eq!(g.sizes(), &[8, 16]);
        assert_eq!(g.box_length(), &[1.0, 1.0]);
        assert!(settings(&["--grid", "8,16,32"]).grid_spec(2, 4).is_err());
        assert!(settings(&["--grid", "12"]).grid_spec(2, 4).is_err());
    }

    #[test]
    fn unknown_suite_is_usage_error() {
        let cli = Cli::try_parse_from(["ba-forms", "verify", "--suite", "nope"]).unwrap();
        assert!(matches!(Settings::resolve(cli.opts, None), Err(Error::Usage(_))));
    }

    #[test]
    fn missing_seed_is_usage_error() {
        let s = settings(&[]);
        assert!(matches!(cmd_verify(&s), Err(Error::Usage(_))));
    }

    #[test]
    fn fault_injection_trips_multiplier_match() {
        let mut s = settings(&["--seed", "1", "--trials", "2"]);
        assert!(suite_multiplier(&s, 1).unwrap().passed);
        s.inject_fault = true;
        let r = suite_multiplier(&s, 1).unwrap();
        assert!(!r.passed);
        assert!(r.worst >= 1e-3 * 0.999);
    }
}
