//! The sparse and dense complementary-sketching tests and the classical
//! F-test baseline.

use std::fmt;
use std::str::FromStr;

use faer::{Col, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::sketch::{self, SketchSummary, TwoSampleData, RANK_CUTOFF};
use crate::special;

/// Column norms at or below this fraction of the largest are treated as zero.
const ZERO_NORM_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sparse,
    Dense,
    Lrt,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sparse => "sparse",
            Method::Dense => "dense",
            Method::Lrt => "lrt",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Method::Sparse),
            "dense" => Ok(Method::Dense),
            "lrt" => Ok(Method::Lrt),
            _ => Err(Error::InvalidParameter(format!("unknown method `{s}`"))),
        }
    }
}

/// Which family of default tuning parameters to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `ω = σ̂√((4+ε)log p)`, `τ = σ̂²k log p`,
    /// `η = σ̂²(m + 2√((2+ε)m log p) + 2(1+ε)log p)`.
    Theory,
    /// `ω = 2σ̂√(log p)`, `τ = σ̂² log p`, `η = σ̂²(m + √(8m log p) + 4 log p)`.
    #[default]
    Simulation,
}

impl ThresholdMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdMode::Theory => "theory",
            ThresholdMode::Simulation => "simulation",
        }
    }
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ThresholdMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theory" => Ok(ThresholdMode::Theory),
            "simulation" => Ok(ThresholdMode::Simulation),
            _ => Err(Error::InvalidParameter(format!("unknown threshold mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub omega: f64,
    pub tau: f64,
    pub eta: f64,
}

/// Default `(ω, τ, η)` for a problem with `p` covariates and sketch dimension `m`.
pub fn default_thresholds(
    p: usize,
    m: usize,
    k: Option<usize>,
    sigma_hat: f64,
    epsilon: f64,
    mode: ThresholdMode,
) -> Result<Thresholds> {
    if p < 2 || m < 1 {
        return Err(Error::InvalidParameter(format!(
            "thresholds need p ≥ 2 and m ≥ 1 (got p = {p}, m = {m})"
        )));
    }
    if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma_hat = {sigma_hat}")));
    }
    thresholds_at(p as f64, m as f64, k, sigma_hat, epsilon, mode)
}

/// Same formulas with real-valued `p`; exposed for formula checks at
/// non-integer `log p`.
pub fn thresholds_at(
    p: f64,
    m: f64,
    k: Option<usize>,
    sigma_hat: f64,
    epsilon: f64,
    mode: ThresholdMode,
) -> Result<Thresholds> {
    let lp = p.ln();
    let s2 = sigma_hat * sigma_hat;
    match mode {
        ThresholdMode::Simulation => Ok(Thresholds {
            omega: 2.0 * sigma_hat * lp.sqrt(),
            tau: s2 * lp,
            eta: s2 * (m + (8.0 * m * lp).sqrt() + 4.0 * lp),
        }),
        ThresholdMode::Theory => {
            if !(epsilon >= 0.0) {
                return Err(Error::InvalidParameter(format!("epsilon = {epsilon}")));
            }
            let k = k.ok_or(Error::MissingSparsity)?;
            Ok(Thresholds {
                omega: sigma_hat * ((4.0 + epsilon) * lp).sqrt(),
                tau: s2 * k as f64 * lp,
                eta: s2 * (m + 2.0 * ((2.0 + epsilon) * m * lp).sqrt() + 2.0 * (1.0 + epsilon) * lp),
            })
        }
    }
}

/// Tuning parameters of the sparse and dense tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub sigma_hat: f64,
    pub omega: f64,
    pub tau: f64,
    pub eta: f64,
    pub epsilon: f64,
}

impl TestConfig {
    pub fn new(sigma_hat: f64, omega: f64, tau: f64, eta: f64, epsilon: f64) -> Result<Self> {
        let cfg = Self { sigma_hat, omega, tau, eta, epsilon };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config carrying the mode's default thresholds.
    pub fn with_defaults(
        p: usize,
        m: usize,
        k: Option<usize>,
        sigma_hat: f64,
        epsilon: f64,
        mode: ThresholdMode,
    ) -> Result<Self> {
        let t = default_thresholds(p, m, k, sigma_hat, epsilon, mode)?;
        Self::new(sigma_hat, t.omega, t.tau, t.eta, epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_hat > 0.0
            && self.omega >= 0.0
            && self.tau > 0.0
            && self.eta > 0.0
            && [self.sigma_hat, self.omega, self.tau, self.eta].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid test config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    pub m: usize,
    pub p: usize,
    /// `#{j : |Q_j| ≥ ω}`; sparse test only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exceedances: Option<usize>,
    /// Columns of `W` with (numerically) zero norm, whose `Q_j` was set to 0.
    pub zero_norm_columns: usize,
}

/// Decision record of one test.
///
/// For `lrt`, `threshold` holds the level and `reject == (p_value ≤ level)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestOutcome {
    pub method: Method,
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    pub p_value: Option<f64>,
    pub diagnostics: Diagnostics,
}

/// Standardised correlations `Q_j = (WᵀZ)_j / ‖W_j‖₂`, together with the
/// number of zero-norm columns (for which `Q_j = 0`).
pub fn q_statistics(summary: &SketchSummary) -> (Vec<f64>, usize) {
    let top = summary.col_sq_norms.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = ZERO_NORM_RTOL * ZERO_NORM_RTOL * top;
    let mut zeros = 0;
    let q = summary
        .wtz
        .iter()
        .zip(&summary.col_sq_norms)
        .map(|(&wz, &c)| {
            if c <= cutoff || c == 0.0 {
                zeros += 1;
                0.0
            } else {
                wz / c.sqrt()
            }
        })
        .collect();
    if zeros > 0 {
        log::warn!("{zeros} sketched design column(s) have zero norm; their Q_j set to 0");
    }
    (q, zeros)
}

/// `T = Σ_j Q_j² 1{|Q_j| ≥ ω}`.
pub fn sparse_statistic(q: &[f64], omega: f64) -> f64 {
    q.iter()
        .filter(|v| v.abs() >= omega)
        .fold(0.0, |acc, v| acc + v * v)
}

/// Applies the sparse test to precomputed sketch statistics.
pub fn evaluate_sparse(summary: &SketchSummary, config: &TestConfig) -> TestOutcome {
    let (q, zeros) = q_statistics(summary);
    let statistic = sparse_statistic(&q, config.omega);
    TestOutcome {
        method: Method::Sparse,
        statistic,
        threshold: config.tau,
        reject: statistic >= config.tau,
        p_value: None,
        diagnostics: Diagnostics {
            m: summary.m,
            p: summary.p(),
            exceedances: Some(q.iter().filter(|v| v.abs() >= config.omega).count()),
            zero_norm_columns: zeros,
        },
    }
}

/// Applies the dense test `‖Z‖² ≥ η` to precomputed sketch statistics.
pub fn evaluate_dense(summary: &SketchSummary, config: &TestConfig) -> TestOutcome {
    let statistic = summary.z_sq_norm;
    TestOutcome {
        method: Method::Dense,
        statistic,
        threshold: config.eta,
        reject: statistic >= config.eta,
        p_value: None,
        diagnostics: Diagnostics {
            m: summary.m,
            p: summary.p(),
            exceedances: None,
            zero_norm_columns: 0,
        },
    }
}

/// Sparse test: sketch, standardise, hard-threshold at `ω`, reject if `T ≥ τ`.
pub fn sparse_test(data: &TwoSampleData, config: &TestConfig, seed: u64) -> Result<TestOutcome> {
    config.validate()?;
    let sk = sketch::complementary_sketch(data, seed)?;
    Ok(evaluate_sparse(&sk.summary(), config))
}

/// Dense test: reject if `‖Z‖₂² ≥ η`.
pub fn dense_test(data: &TwoSampleData, config: &TestConfig, seed: u64) -> Result<TestOutcome> {
    config.validate()?;
    let sk = sketch::complementary_sketch(data, seed)?;
    Ok(evaluate_dense(&sk.summary(), config))
}

/// Residual sum of squares of the least-squares fit of `y` on `x`.
fn least_squares_rss(x: MatRef<'_, f64>, y: &Col<f64>, what: &str) -> Result<f64> {
    let p = x.ncols();
    let qr = x.qr();
    let r = qr.thin_R();
    let diag: Vec<f64> = (0..p).map(|i| r[(i, i)].abs()).collect();
    let top = diag.iter().cloned().fold(0.0f64, f64::max);
    if top == 0.0 || diag.iter().any(|&d| d <= RANK_CUTOFF * top) {
        return Err(Error::Singular(format!("{what} design is rank deficient")));
    }
    let q = qr.compute_thin_Q();
    let fitted = &q * (q.transpose() * y);
    Ok(linalg::sq_norm((y - &fitted).as_ref()))
}

/// Classical likelihood-ratio F-test of `β1 = β2`, rejecting when the
/// `F_{p, n−2p}` upper-tail p-value is at most `level`.
pub fn lrt_test(data: &TwoSampleData, level: f64) -> Result<TestOutcome> {
    let (n1, n2, p) = (data.n1(), data.n2(), data.p());
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level = {level}")));
    }
    if p >= n1.min(n2) {
        return Err(Error::Dimension(format!(
            "likelihood ratio test needs p < min(n1, n2); got p = {p}, n1 = {n1}, n2 = {n2}"
        )));
    }
    let y1: Col<f64> = data.y1().to_owned();
    let y2: Col<f64> = data.y2().to_owned();
    let rss1 = least_squares_rss(data.x1(), &y1, "X1")? + least_squares_rss(data.x2(), &y2, "X2")?;
    let stacked: Mat<f64> = data.stacked_design();
    let rss0 = least_squares_rss(stacked.as_ref(), &data.stacked_response(), "stacked")?;

    let df1 = p as f64;
    let df2 = (n1 + n2 - 2 * p) as f64;
    let y_sq = linalg::sq_norm(y1.as_ref()) + linalg::sq_norm(y2.as_ref());
    let exact = 1e-20 * y_sq.max(f64::MIN_POSITIVE);
    let diff = (rss0 - rss1).max(0.0);

    let (f, p_value) = if rss1 <= exact {
        if diff <= exact {
            // degenerate perfect fit under both models: no evidence
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = (diff / df1) / (rss1 / df2);
        (f, special::f_sf(f, df1, df2))
    };

    Ok(TestOutcome {
        method: Method::Lrt,
        statistic: f,
        threshold: level,
        reject: p_value <= level,
        p_value: Some(p_value),
        diagnostics: Diagnostics {
            m: data.m(),
            p,
            exceedances: None,
            zero_norm_columns: 0,
        },
    })
}
