//! Config-driven experiment runner.
//!
//! Every command reads one JSON config, writes `summary.json` plus named CSV
//! files into the output directory, and is deterministic given config and
//! seed. The output directory is `--out`, else `TRANSOP_OUT_DIR`, else the
//! config's `output_dir`, else `transop-out`.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::{GridDensity, NormReport};
use crate::error::Error;
use crate::io::write_columns;
use crate::lyverify::{
    compute_bv_constants, compute_lip_constants, compute_w11_constants, verify_ly, LyConstants, VerifyReport,
};
use crate::maps::{
    CircleMapConfig, FiberMap, KellerParams, MapSpec, PerturbationFamily, PiecewiseConfig, SmoothCircleMap,
    SolenoidMap, TrigPoly,
};
use crate::response::{
    default_response_ladder, keller_experiment, keller_path, linear_response, stability_curve, FdPoint, KellerRow,
    StabilityCurve, StabilityOptions,
};
use crate::rng;
use crate::solenoid::{
    existence_pipeline, push_leaf, solenoid_equilibrium, DiscreteLeafMeasure, SolenoidMeasure, SolenoidOperator,
};
use crate::stats::{
    clt_check, correlation_integrals, equilibrium_decay, CorrelationMode, DecaySeries, Observable, WeakNorm,
};
use crate::transfer::TransferContext;
use crate::ulam::{invariant_vector, UlamOperator};

pub const OUT_DIR_ENV: &str = "TRANSOP_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "transop-out";
/// Invariant vectors up to this many cells are echoed in the summary.
const SUMMARY_LEVELS_MAX: usize = 256;

#[derive(Debug, Parser)]
#[command(
    name = "transop",
    version,
    about = "Transfer-operator experiments for expanding maps"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Experiment,
    /// JSON config for the chosen experiment.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the environment and the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for every random stream (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Invariant,
    UlamStudy,
    Decay,
    Ly,
    Stability,
    Response,
    Keller,
    Clt,
    Solenoid,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Invariant => "invariant",
            Self::UlamStudy => "ulam-study",
            Self::Decay => "decay",
            Self::Ly => "ly",
            Self::Stability => "stability",
            Self::Response => "response",
            Self::Keller => "keller",
            Self::Clt => "clt",
            Self::Solenoid => "solenoid",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Config file could not be read or does not match the schema.
    Config { path: String, message: String },
    /// A numerical module or the output writer failed.
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Run(_) => 1,
        }
    }

    /// One-line JSON diagnostic for stderr.
    pub fn to_json(&self) -> String {
        let v = match self {
            Self::Config { path, message } => serde_json::json!({
                "error": "config",
                "field": path,
                "message": message,
            }),
            Self::Run(e) => serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
            }),
        };
        v.to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config { path, message } => write!(f, "config error at `{path}`: {message}"),
            Self::Run(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Run(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

// ---------------------------------------------------------------- configs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedMap {
    Doubling,
    /// `4x + 0.01 sin(8πx)`.
    QuarticSine,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapChoice {
    Named { name: NamedMap },
    Circle(CircleMapConfig),
    Piecewise(PiecewiseConfig),
    Keller(KellerParams),
}

impl MapChoice {
    pub fn build(&self) -> crate::Result<MapSpec> {
        Ok(match self {
            Self::Named {
                name: NamedMap::Doubling,
            } => SmoothCircleMap::doubling().into(),
            Self::Named {
                name: NamedMap::QuarticSine,
            } => SmoothCircleMap::quartic_sine().into(),
            Self::Circle(c) => SmoothCircleMap::try_from(c.clone())?.into(),
            Self::Piecewise(c) => {
                crate::maps::PiecewiseExpandingMap::new(c.breakpoints.clone(), c.branches.clone())?.into()
            }
            Self::Keller(p) => KellerParams::new(p.a, p.b, p.r)?.to_map()?.into(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub base: MapChoice,
    /// Defaults to `sin(2πx)/(2π)`.
    #[serde(default)]
    pub direction: Option<TrigPoly>,
}

impl FamilyConfig {
    fn build(&self) -> crate::Result<PerturbationFamily> {
        let base = self.base.build()?;
        Ok(match &self.direction {
            Some(d) => PerturbationFamily::new(base, d.clone()),
            None => PerturbationFamily::with_default_direction(base),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantConfig {
    pub map: MapChoice,
    pub k: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UlamStudyConfig {
    pub map: MapChoice,
    pub ks: Vec<usize>,
    /// Finest partition, used as the reference; must be a multiple of every `k`.
    pub reference_k: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationConfig {
    pub psi: Observable,
    pub mode: CorrelationMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    pub map: MapChoice,
    pub grid: usize,
    pub steps: usize,
    /// Projected to zero average before iterating.
    pub observable: Observable,
    #[serde(default = "default_weak_norm")]
    pub weak_norm: WeakNorm,
    #[serde(default)]
    pub correlation: Option<CorrelationConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_weak_norm() -> WeakNorm {
    WeakNorm::L1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormChoice {
    W11,
    Lip,
    Bv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyConfig {
    pub map: MapChoice,
    pub trials: usize,
    pub n_max: usize,
    pub resolution: usize,
    /// Defaults to `w11` for circle maps and `bv` for piecewise maps.
    #[serde(default)]
    pub norm: Option<NormChoice>,
    #[serde(default = "default_lip_horizon")]
    pub lip_horizon: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_lip_horizon() -> usize {
    12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub family: FamilyConfig,
    pub deltas: Vec<f64>,
    pub k: usize,
    #[serde(default)]
    pub probes: usize,
    #[serde(default = "default_probe_grid")]
    pub probe_grid: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_probe_grid() -> usize {
    2048
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseConfig {
    pub family: FamilyConfig,
    pub grid: usize,
    pub tol: f64,
    /// Defaults to `10^{-1}, 10^{-1.5}, …, 10^{-4}`.
    #[serde(default)]
    pub ladder: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KellerConfig {
    /// Explicit parameters; when absent, the shrinking-window path for
    /// `path_steps` is used.
    #[serde(default)]
    pub params: Option<Vec<KellerParams>>,
    #[serde(default)]
    pub path_steps: Option<(u32, u32)>,
    pub k: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltConfig {
    pub map: MapChoice,
    pub observable: Observable,
    pub samples: usize,
    pub horizon: usize,
    /// Grid for the invariant density and the Green-Kubo sum.
    pub grid: usize,
    #[serde(default = "default_repeats")]
    pub repeats: u64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_repeats() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolenoidConfig {
    /// Base circle map, doubling by default.
    #[serde(default)]
    pub base: Option<CircleMapConfig>,
    pub fiber: FiberMap,
    pub k: usize,
    pub steps: usize,
    /// Random signed measures for the contraction checks.
    #[serde(default)]
    pub probes: u64,
    /// Fiber heights of the two starting measures.
    #[serde(default = "default_starts")]
    pub starts: (f64, f64),
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_starts() -> (f64, f64) {
    (0.0, 1.0)
}

// ---------------------------------------------------------------- plumbing

#[derive(Serialize)]
struct Summary<'a, C: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_sha256: &'a str,
    seed: u64,
    config: &'a C,
    result: R,
}

struct Run<'a, C> {
    command: Experiment,
    config: C,
    hash: String,
    seed: u64,
    out: &'a Path,
}

impl<C: Serialize> Run<'_, C> {
    fn csv(&self, name: &str, headers: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> CliResult<()> {
        Ok(write_columns(&self.out.join(name), headers, rows)?)
    }

    fn finish<R: Serialize>(&self, result: R) -> CliResult<()> {
        let summary = Summary {
            tool: "transop",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.name(),
            config_sha256: &self.hash,
            seed: self.seed,
            config: &self.config,
            result,
        };
        let mut text = serde_json::to_string_pretty(&summary).expect("summary is plain data");
        text.push('\n');
        std::fs::write(self.out.join("summary.json"), text)?;
        Ok(())
    }
}

fn parse_config<C: DeserializeOwned>(raw: &[u8]) -> CliResult<C> {
    let de = &mut serde_json::Deserializer::from_slice(raw);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

trait Common {
    fn seed(&self) -> Option<u64>;
    fn output_dir(&self) -> Option<&Path>;
}

macro_rules! common {
    ($($t:ty),*) => {$(
        impl Common for $t {
            fn seed(&self) -> Option<u64> {
                self.seed
            }
            fn output_dir(&self) -> Option<&Path> {
                self.output_dir.as_deref()
            }
        }
    )*};
}

common!(
    InvariantConfig,
    UlamStudyConfig,
    DecayConfig,
    LyConfig,
    StabilityConfig,
    ResponseConfig,
    KellerConfig,
    CltConfig,
    SolenoidConfig
);

fn prepare<'a, C: DeserializeOwned + Common>(cli: &Cli, raw: &[u8], out: &'a mut PathBuf) -> CliResult<Run<'a, C>> {
    let config: C = parse_config(raw)?;
    let hash = hex::encode(Sha256::digest(raw));
    let seed = cli.seed.or(config.seed()).unwrap_or(0);
    *out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| config.output_dir().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    std::fs::create_dir_all(&*out)?;
    Ok(Run {
        command: cli.command,
        config,
        hash,
        seed,
        out,
    })
}

pub fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let raw = std::fs::read(&cli.config).map_err(|e| CliError::Config {
        path: cli.config.display().to_string(),
        message: e.to_string(),
    })?;
    let mut out = PathBuf::new();
    match cli.command {
        Experiment::Invariant => invariant(&prepare(cli, &raw, &mut out)?),
        Experiment::UlamStudy => ulam_study(&prepare(cli, &raw, &mut out)?),
        Experiment::Decay => decay(&prepare(cli, &raw, &mut out)?),
        Experiment::Ly => ly(&prepare(cli, &raw, &mut out)?),
        Experiment::Stability => stability(&prepare(cli, &raw, &mut out)?),
        Experiment::Response => response(&prepare(cli, &raw, &mut out)?),
        Experiment::Keller => keller(&prepare(cli, &raw, &mut out)?),
        Experiment::Clt => clt(&prepare(cli, &raw, &mut out)?),
        Experiment::Solenoid => solenoid(&prepare(cli, &raw, &mut out)?),
    }
}

// ---------------------------------------------------------------- commands

#[derive(Serialize)]
struct InvariantResult {
    k: usize,
    iterations: usize,
    residual: f64,
    rate_estimate: f64,
    cesaro: bool,
    norms: NormReport,
    levels: Option<Vec<f64>>,
}

fn invariant(run: &Run<InvariantConfig>) -> CliResult<()> {
    let map = run.config.map.build()?;
    let inv = invariant_vector(&UlamOperator::build(&map, run.config.k)?)?;
    inv.vector.write_csv(&run.out.join("invariant.csv"))?;
    let levels = inv.vector.levels();
    run.finish(InvariantResult {
        k: run.config.k,
        iterations: inv.iterations,
        residual: inv.residual,
        rate_estimate: inv.rate_estimate,
        cesaro: inv.cesaro,
        norms: inv.vector.to_density().norms(),
        levels: (levels.len() <= SUMMARY_LEVELS_MAX).then_some(levels),
    })
}

#[derive(Serialize)]
struct UlamStudyRow {
    k: usize,
    iterations: usize,
    residual: f64,
    rate_estimate: f64,
    cesaro: bool,
    l1_to_reference: f64,
}

fn ulam_study(run: &Run<UlamStudyConfig>) -> CliResult<()> {
    let c = &run.config;
    if let Some(&bad) = c.ks.iter().find(|&&k| k == 0 || !c.reference_k.is_multiple_of(k)) {
        return Err(
            Error::InvalidArgument(format!("k = {bad} does not divide reference_k = {}", c.reference_k)).into(),
        );
    }
    let map = c.map.build()?;
    let reference = invariant_vector(&UlamOperator::build(&map, c.reference_k)?)?.vector;
    let mut rows = Vec::with_capacity(c.ks.len());
    for &k in &c.ks {
        let inv = invariant_vector(&UlamOperator::build(&map, k)?)?;
        let factor = c.reference_k / k;
        let coarse: Vec<f64> = reference
            .masses
            .chunks(factor)
            .map(|ch| ch.iter().sum::<f64>() * k as f64)
            .collect();
        rows.push(UlamStudyRow {
            k,
            iterations: inv.iterations,
            residual: inv.residual,
            rate_estimate: inv.rate_estimate,
            cesaro: inv.cesaro,
            l1_to_reference: inv.vector.l1_distance_cellwise(|i| coarse[i]),
        });
    }
    run.csv(
        "ulam_study.csv",
        &["k", "l1_to_reference", "iterations", "residual", "rate_estimate"],
        rows.iter().map(|r| {
            vec![
                r.k as f64,
                r.l1_to_reference,
                r.iterations as f64,
                r.residual,
                r.rate_estimate,
            ]
        }),
    )?;
    run.finish(serde_json::json!({ "reference_k": c.reference_k, "rows": rows }))
}

#[derive(Serialize)]
struct DecayResult {
    decay: DecaySeries,
    correlations: Option<Vec<f64>>,
}

fn decay(run: &Run<DecayConfig>) -> CliResult<()> {
    let c = &run.config;
    let ctx = TransferContext::new(c.map.build()?, c.grid)?;
    let h = ctx.fixed_density(1e-13, 100_000)?.density;
    let g = c.observable.sample(&ctx);
    let series = equilibrium_decay(&ctx, &g, c.steps, c.weak_norm, true, Some(&h))?;
    run.csv(
        "decay.csv",
        &["n", "value"],
        series.values.iter().enumerate().map(|(n, &v)| vec![n as f64, v]),
    )?;
    let correlations = match &c.correlation {
        Some(cc) => {
            let psi = cc.psi.sample(&ctx);
            let s = correlation_integrals(&ctx, &psi, &g, c.steps, cc.mode, Some(&h))?;
            run.csv(
                "correlations.csv",
                &["n", "value"],
                s.iter().enumerate().map(|(n, &v)| vec![n as f64, v]),
            )?;
            Some(s)
        }
        None => None,
    };
    run.finish(DecayResult {
        decay: series,
        correlations,
    })
}

#[derive(Serialize)]
struct LyResult<'a> {
    constants: &'a LyConstants,
    rate: f64,
    density_bound: f64,
    report: &'a VerifyReport,
    passed: bool,
}

fn ly(run: &Run<LyConfig>) -> CliResult<()> {
    let c = &run.config;
    let map = c.map.build()?;
    let norm = c.norm.unwrap_or(match map {
        MapSpec::Circle(_) => NormChoice::W11,
        MapSpec::Piecewise(_) => NormChoice::Bv,
    });
    let constants = match (norm, &map) {
        (NormChoice::W11, MapSpec::Circle(m)) => compute_w11_constants(m)?,
        (NormChoice::Lip, MapSpec::Circle(_)) => {
            compute_lip_constants(&TransferContext::new(map.clone(), c.resolution)?, c.lip_horizon)?
        }
        (NormChoice::Bv, MapSpec::Piecewise(m)) => compute_bv_constants(m)?,
        (NormChoice::Bv, MapSpec::Circle(m)) => compute_bv_constants(&m.to_piecewise()?)?,
        (_, MapSpec::Piecewise(_)) => return Err(Error::Unsupported("the W11 and Lip norm pairs").into()),
    };
    let report = verify_ly(&map, &constants, c.trials, c.n_max, c.resolution, run.seed)?;
    run.csv(
        "ly_trials.csv",
        &["trial", "worst_slack", "worst_n", "strong_initial"],
        report
            .records
            .iter()
            .map(|r| vec![r.trial as f64, r.worst_slack, r.worst_n as f64, r.strong_initial]),
    )?;
    run.finish(LyResult {
        constants: &constants,
        rate: constants.rate(),
        density_bound: constants.density_bound(),
        report: &report,
        passed: report.passed(),
    })
}

fn stability(run: &Run<StabilityConfig>) -> CliResult<()> {
    let c = &run.config;
    let fam = c.family.build()?;
    let opts = StabilityOptions {
        k: c.k,
        probes: c.probes,
        probe_grid: c.probe_grid,
        seed: run.seed,
    };
    let curve: StabilityCurve = stability_curve(&fam, &c.deltas, &opts)?;
    let (c1, c2) = curve.model;
    run.csv(
        "stability.csv",
        &["delta", "gap", "model"],
        curve
            .deltas
            .iter()
            .zip(&curve.gaps)
            .map(|(&d, &g)| vec![d, g, c1 * d * d.ln().abs() + c2 * d]),
    )?;
    run.finish(curve)
}

#[derive(Serialize)]
struct ResponseSummary<'a> {
    grid: usize,
    neumann_terms: usize,
    truncation_residual: f64,
    removed_mean: f64,
    response_l1: f64,
    response_sup: f64,
    fd: &'a [FdPoint],
    monotone: bool,
    floor_limited: bool,
}

fn response(run: &Run<ResponseConfig>) -> CliResult<()> {
    let c = &run.config;
    let fam = c.family.build()?;
    let ladder = c.ladder.clone().unwrap_or_else(default_response_ladder);
    let r = linear_response(&fam, c.grid, c.tol, &ladder)?;
    let hhat: &GridDensity = &r.response_density;
    run.csv(
        "response.csv",
        &["x", "response"],
        hhat.nodes().zip(hhat.values()).map(|(x, &v)| vec![x, v]),
    )?;
    run.csv(
        "fd.csv",
        &["delta", "fd_error", "richardson_error"],
        r.fd.iter()
            .map(|p| vec![p.delta, p.fd_error, p.richardson_error.unwrap_or(f64::NAN)]),
    )?;
    run.finish(ResponseSummary {
        grid: r.grid,
        neumann_terms: r.neumann_terms,
        truncation_residual: r.truncation_residual,
        removed_mean: r.removed_mean,
        response_l1: hhat.l1_norm(),
        response_sup: hhat.sup_norm(),
        fd: &r.fd,
        monotone: r.monotone,
        floor_limited: r.floor_limited,
    })
}

fn keller(run: &Run<KellerConfig>) -> CliResult<()> {
    let c = &run.config;
    let path = match (&c.params, c.path_steps) {
        (Some(p), None) => p.clone(),
        (None, Some((from, to))) => keller_path(from..=to)?,
        _ => {
            return Err(Error::InvalidArgument("give exactly one of `params` and `path_steps`".into()).into());
        }
    };
    let rows: Vec<KellerRow> = keller_experiment(&path, c.k)?;
    run.csv(
        "keller.csv",
        &[
            "a",
            "b",
            "r",
            "window_mass",
            "distance_a",
            "distance_b",
            "iterations",
            "residual",
        ],
        rows.iter().map(|r| {
            vec![
                r.params.a,
                r.params.b,
                r.params.r,
                r.window_mass,
                r.distance_a,
                r.distance_b,
                r.iterations as f64,
                r.residual,
            ]
        }),
    )?;
    let mut headers = vec!["x".to_string()];
    headers.extend((0..rows.len()).map(|i| format!("level_{i}")));
    let headers: Vec<&str> = headers.iter().map(String::as_str).collect();
    let levels: Vec<Vec<f64>> = rows.iter().map(|r| r.density.levels()).collect();
    run.csv(
        "keller_densities.csv",
        &headers,
        (0..c.k).map(|i| {
            let mut row = vec![(i as f64 + 0.5) / c.k as f64];
            row.extend(levels.iter().map(|l| l[i]));
            row
        }),
    )?;
    run.finish(serde_json::json!({ "rows": rows }))
}

#[derive(Serialize)]
struct CltSummary {
    repeats: Vec<crate::stats::CltResult>,
    ks_passes: usize,
    worst_sigma_agreement: f64,
}

fn clt(run: &Run<CltConfig>) -> CliResult<()> {
    let c = &run.config;
    let ctx = TransferContext::new(c.map.build()?, c.grid)?;
    let h = ctx.fixed_density(1e-13, 100_000)?.density;
    let repeats = (0..c.repeats)
        .map(|i| clt_check(&ctx, &h, &c.observable, c.samples, c.horizon, run.seed.wrapping_add(i)))
        .collect::<crate::Result<Vec<_>>>()?;
    run.csv(
        "clt.csv",
        &["seed", "ks_statistic", "ks_critical", "sigma_hat", "gk_sigma"],
        repeats
            .iter()
            .map(|r| vec![r.seed as f64, r.ks_statistic, r.ks_critical, r.sigma_hat, r.gk_sigma]),
    )?;
    run.finish(CltSummary {
        ks_passes: repeats.iter().filter(|r| r.ks_passed()).count(),
        worst_sigma_agreement: repeats.iter().map(|r| r.sigma_agreement()).fold(0.0, f64::max),
        repeats,
    })
}

#[derive(Serialize)]
struct SolenoidSummary {
    decay: DecaySeries,
    step_violations: usize,
    max_atoms: usize,
    weak_contraction_violations: usize,
    leaf_contraction_violations: usize,
    existence_increments: Vec<f64>,
    invariance_defect: f64,
}

fn random_measure(seed: u64, index: u64, k: usize) -> crate::Result<SolenoidMeasure> {
    let mut r = rng::stream(seed, index);
    let leaves = (0..k)
        .map(|_| {
            let n = r.gen_range(1..6);
            DiscreteLeafMeasure::from_atoms((0..n).map(|_| (r.gen::<f64>(), r.gen_range(-1.0..1.0))).collect())
        })
        .collect();
    SolenoidMeasure::new(leaves)
}

fn solenoid(run: &Run<SolenoidConfig>) -> CliResult<()> {
    let c = &run.config;
    let base = match &c.base {
        Some(b) => SmoothCircleMap::try_from(b.clone())?,
        None => SmoothCircleMap::doubling(),
    };
    let map = SolenoidMap::new(base, c.fiber.clone())?;
    let op = SolenoidOperator::new(map, c.k)?;
    let alpha = c.fiber.alpha;
    let (mut weak, mut leafwise) = (0, 0);
    for p in 0..c.probes {
        let mu = random_measure(run.seed, p, c.k)?;
        weak += usize::from(op.apply(&mu)?.one_norm() > mu.one_norm() + 1e-9);
        for (i, leaf) in mu.leaves().iter().enumerate() {
            let mut atoms: Vec<(f64, f64)> = leaf.atoms().collect();
            atoms.push((0.5, -leaf.total_mass()));
            let probe = DiscreteLeafMeasure::from_atoms(atoms);
            let x = (i as f64 + 0.5) / c.k as f64;
            let pushed = push_leaf(|y| c.fiber.eval(x, y), alpha, &probe)?;
            leafwise += usize::from(pushed.w10_norm() > alpha * probe.w10_norm() + 1e-12);
        }
    }
    let (y_mu, y_nu) = c.starts;
    let eq = solenoid_equilibrium(
        &op,
        &SolenoidMeasure::uniform_atoms(c.k, y_mu),
        &SolenoidMeasure::uniform_atoms(c.k, y_nu),
        c.steps,
    )?;
    let ex = existence_pipeline(&op, &SolenoidMeasure::uniform_atoms(c.k, y_mu), c.steps)?;
    run.csv(
        "solenoid_decay.csv",
        &["n", "value"],
        eq.decay.values.iter().enumerate().map(|(n, &v)| vec![n as f64, v]),
    )?;
    run.finish(SolenoidSummary {
        decay: eq.decay,
        step_violations: eq.violations,
        max_atoms: eq.max_atoms,
        weak_contraction_violations: weak,
        leaf_contraction_violations: leafwise,
        existence_increments: ex.increments,
        invariance_defect: ex.invariance_defect,
    })
}
