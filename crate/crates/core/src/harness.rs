//! Monte Carlo power estimation and experiment grids.
//!
//! Replicate `i` of a scenario is a pure function of `(scenario, i)`, so
//! replicates can be farmed out in any order and the aggregated counts do not
//! depend on scheduling. All methods requested for a cell are applied to the
//! same simulated datasets, and every `ρ` on a grid reuses the same designs
//! and noise.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simgen::{self, Scenario};
use crate::sketch::{self, SketchSummary, TwoSampleData};
use crate::testing::{self, Method, TestConfig, ThresholdMode};
use crate::theory;
use crate::variance;

pub const THREADS_ENV: &str = "COMPSKETCH_THREADS";

/// Where the tests get their noise level from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSource {
    /// The scenario's true `σ`, or an explicit override.
    #[default]
    Oracle,
    /// Sample-size weighted moment estimates from each sample.
    Pooled,
    /// Moment estimate on the sketched model `(W, Z)`.
    Sketched,
}

impl std::str::FromStr for SigmaSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(SigmaSource::Oracle),
            "pooled" => Ok(SigmaSource::Pooled),
            "sketched" => Ok(SigmaSource::Sketched),
            _ => Err(Error::InvalidParameter(format!("unknown sigma source '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Replicates on the rayon pool; sequential when built without `parallel`.
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessConfig {
    pub mode: ThresholdMode,
    pub epsilon: f64,
    pub sigma_source: SigmaSource,
    pub sigma_override: Option<f64>,
    pub lrt_level: f64,
    pub execution: Execution,
    /// Record wall time; off by default so output files are reproducible.
    pub timing: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            mode: ThresholdMode::Simulation,
            epsilon: 0.0,
            sigma_source: SigmaSource::Oracle,
            sigma_override: None,
            lrt_level: 0.05,
            execution: Execution::Parallel,
            timing: false,
        }
    }
}

/// One Monte Carlo cell. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub n1: usize,
    pub n2: usize,
    pub p: usize,
    pub k: usize,
    pub rho: f64,
    pub sigma: f64,
    pub design: String,
    pub noise: String,
    pub method: Method,
    pub mode: ThresholdMode,
    pub nu: f64,
    /// Replicates that completed; numerically failed ones are excluded.
    pub reps: usize,
    pub power: f64,
    pub mc_se: f64,
    pub seed: u64,
    pub wall_time_ms: u64,
}

impl PowerRow {
    pub fn rejections(&self) -> usize {
        (self.power * self.reps as f64).round() as usize
    }
}

pub const CSV_COLUMNS: [&str; 16] = [
    "n1", "n2", "p", "k", "rho", "sigma", "design", "noise", "method", "mode", "nu", "reps", "power", "mc_se",
    "seed", "wall_time_ms",
];

pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidParameter(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        _ => Ok(None),
    }
}

/// Caps the global worker pool. Must run before any parallel work.
pub fn init_thread_pool(threads: usize) -> Result<()> {
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn run_indexed<T, F>(n: usize, execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution == Execution::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = execution;
    (0..n).map(f).collect()
}

fn sigma_hat(scenario: &Scenario, data: &TwoSampleData, summary: &SketchSummary, cfg: &HarnessConfig) -> Result<f64> {
    match cfg.sigma_source {
        SigmaSource::Oracle => Ok(cfg.sigma_override.unwrap_or(scenario.sigma)),
        SigmaSource::Pooled => Ok(variance::pooled_sigma2(data)?.sigma_hat()),
        SigmaSource::Sketched => Ok(variance::sketched_sigma2(summary)?.sigma_hat()),
    }
}

/// Decisions of each method on replicate `rep`.
fn replicate(scenario: &Scenario, rep: usize, methods: &[Method], cfg: &HarnessConfig) -> Result<Vec<bool>> {
    let (data, _) = simgen::gen_dataset(scenario, rep as u64)?;
    let mut sketched: Option<(SketchSummary, TestConfig)> = None;
    if methods.iter().any(|&m| m != Method::Lrt) {
        let summary = sketch::project_summary(&data)?;
        let s = sigma_hat(scenario, &data, &summary, cfg)?;
        let config = TestConfig::with_defaults(data.p(), data.m(), Some(scenario.k), s, cfg.epsilon, cfg.mode)?;
        sketched = Some((summary, config));
    }
    methods
        .iter()
        .map(|&method| match (method, &sketched) {
            (Method::Sparse, Some((s, c))) => Ok(testing::evaluate_sparse(s, c).reject),
            (Method::Dense, Some((s, c))) => Ok(testing::evaluate_dense(s, c).reject),
            (Method::Lrt, _) => Ok(testing::lrt_test(&data, cfg.lrt_level)?.reject),
            _ => unreachable!("sketch statistics are computed whenever a sketch method is requested"),
        })
        .collect()
}

/// Rejection counts per method and the number of replicates that completed.
fn aggregate(outcomes: Vec<Result<Vec<bool>>>, methods: usize) -> Result<(Vec<usize>, usize)> {
    let reps = outcomes.len();
    let mut counts = vec![0usize; methods];
    let mut failed = 0usize;
    let mut last_failure = None;
    for outcome in outcomes {
        match outcome {
            Ok(decisions) => {
                for (c, d) in counts.iter_mut().zip(decisions) {
                    *c += d as usize;
                }
            }
            Err(e) if e.is_numerical() => {
                failed += 1;
                last_failure = Some(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    if failed > 0 && failed * 100 >= reps {
        return Err(Error::FailureBudget {
            failed,
            reps,
            budget: (reps - 1) / 100,
            last: last_failure.unwrap_or_default(),
        });
    }
    if failed > 0 {
        log::warn!("{failed} of {reps} replicates failed numerically and were excluded");
    }
    Ok((counts, reps - failed))
}

fn nu_or_nan(s: &Scenario) -> f64 {
    theory::nu(s.n1, s.n2, s.p, s.k, s.rho, s.sigma).unwrap_or(f64::NAN)
}

/// Power of each of `methods` on `reps` replicates of `scenario`, in the
/// order of `methods`.
///
/// Replicates that fail numerically are dropped as long as they are fewer
/// than 1% of `reps`; otherwise the cell fails. Any other error aborts.
pub fn estimate_power_multi(
    scenario: &Scenario,
    methods: &[Method],
    cfg: &HarnessConfig,
    reps: usize,
) -> Result<Vec<PowerRow>> {
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be at least 1".into()));
    }
    if methods.is_empty() {
        return Ok(Vec::new());
    }
    scenario.validate()?;
    let start = Instant::now();
    let outcomes = run_indexed(reps, cfg.execution, |rep| replicate(scenario, rep, methods, cfg));

    let (counts, done) = aggregate(outcomes, methods.len())?;
    let wall_time_ms = if cfg.timing { start.elapsed().as_millis() as u64 } else { 0 };
    let nu = nu_or_nan(scenario);
    Ok(methods
        .iter()
        .zip(counts)
        .map(|(&method, hits)| {
            let power = hits as f64 / done as f64;
            PowerRow {
                n1: scenario.n1,
                n2: scenario.n2,
                p: scenario.p,
                k: scenario.k,
                rho: scenario.rho,
                sigma: scenario.sigma,
                design: scenario.design_kind.to_string(),
                noise: scenario.noise_kind.to_string(),
                method,
                mode: cfg.mode,
                nu,
                reps: done,
                power,
                mc_se: (power * (1.0 - power) / done as f64).sqrt(),
                seed: scenario.seed,
                wall_time_ms,
            }
        })
        .collect())
}

pub fn estimate_power(scenario: &Scenario, method: Method, cfg: &HarnessConfig, reps: usize) -> Result<PowerRow> {
    let mut rows = estimate_power_multi(scenario, &[method], cfg, reps)?;
    Ok(rows.remove(0))
}

/// The parameter varied across a phase-transition grid.
#[derive(Debug, Clone, PartialEq)]
pub enum GridAxis {
    P(Vec<usize>),
    /// `n1` values with `n1 + n2` held at the base scenario's total.
    N1(Vec<usize>),
}

/// Signal levels of a grid, either as `ρ` directly or as `ν` converted to
/// `ρ` separately for each grid point.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalGrid {
    Rho(Vec<f64>),
    Nu(Vec<f64>),
}

impl SignalGrid {
    fn len(&self) -> usize {
        match self {
            SignalGrid::Rho(v) | SignalGrid::Nu(v) => v.len(),
        }
    }

    fn rho_at(&self, sc: &Scenario, i: usize) -> Result<f64> {
        match self {
            SignalGrid::Rho(v) => Ok(v[i]),
            SignalGrid::Nu(v) => theory::rho_for_nu(sc.n1, sc.n2, sc.p, sc.k, sc.sigma, v[i]),
        }
    }
}

fn run_cells(cells: Vec<Scenario>, methods: &[Method], cfg: &HarnessConfig, reps: usize) -> Result<Vec<PowerRow>> {
    let mut rows = Vec::with_capacity(cells.len() * methods.len());
    for cell in &cells {
        rows.extend(estimate_power_multi(cell, methods, cfg, reps)?);
    }
    Ok(rows)
}

/// Power over `axis × signal`, one row per (grid point, signal level, method).
pub fn phase_transition_grid(
    base: &Scenario,
    axis: &GridAxis,
    signal: &SignalGrid,
    methods: &[Method],
    cfg: &HarnessConfig,
    reps: usize,
) -> Result<Vec<PowerRow>> {
    let total = base.n1 + base.n2;
    let points: Vec<Scenario> = match axis {
        GridAxis::P(ps) => ps.iter().map(|&p| Scenario { p, ..base.clone() }).collect(),
        GridAxis::N1(n1s) => n1s
            .iter()
            .map(|&n1| {
                if n1 >= total {
                    return Err(Error::Dimension(format!("n1 = {n1} leaves no room for n2 with n1 + n2 = {total}")));
                }
                Ok(Scenario { n1, n2: total - n1, ..base.clone() })
            })
            .collect::<Result<_>>()?,
    };
    let mut cells = Vec::with_capacity(points.len() * signal.len());
    for point in &points {
        for i in 0..signal.len() {
            cells.push(point.with_rho(signal.rho_at(point, i)?));
        }
    }
    run_cells(cells, methods, cfg, reps)
}

/// Sparsity levels `{1, 10, ⌊√p⌋, ⌊p/10⌋, p}`, deduplicated and within `1..=p`.
pub fn default_sparsity_levels(p: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = [1, 10, (p as f64).sqrt().floor() as usize, p / 10, p]
        .into_iter()
        .filter(|&k| k >= 1 && k <= p)
        .collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// Power over `ks × rhos` for each method. The likelihood ratio test is
/// dropped when `p ≥ min(n1, n2)`, where it is undefined.
pub fn comparison_grid(
    base: &Scenario,
    ks: &[usize],
    rhos: &[f64],
    methods: &[Method],
    cfg: &HarnessConfig,
    reps: usize,
) -> Result<Vec<PowerRow>> {
    let lrt_ok = base.p < base.n1.min(base.n2);
    let methods: Vec<Method> = methods.iter().copied().filter(|&m| m != Method::Lrt || lrt_ok).collect();
    if !lrt_ok {
        log::info!("likelihood ratio test skipped: p = {} ≥ min(n1, n2) = {}", base.p, base.n1.min(base.n2));
    }
    let mut cells = Vec::with_capacity(ks.len() * rhos.len());
    for &k in ks {
        for &rho in rhos {
            cells.push(Scenario { k, rho, ..base.clone() });
        }
    }
    run_cells(cells, &methods, cfg, reps)
}

/// Writes rows with a header line in the fixed column order.
pub fn write_csv<W: Write>(rows: &[PowerRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
