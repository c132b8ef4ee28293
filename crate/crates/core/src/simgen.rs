//! Seeded synthetic two-sample regression data.

use std::fmt;
use std::str::FromStr;

use faer::{Col, Mat};
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, gaussian_vector, std_normal};
use crate::seeding::{self, Stream};
use crate::sketch::TwoSampleData;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    GaussianIid,
    /// Rows `N(0, Σ)` with `Σ_{jl} = base^|j−l|`.
    GaussianAr { base: f64 },
    Rademacher,
    /// Balanced one-way layout: `n/p` consecutive rows per level.
    Anova,
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesignKind::GaussianIid => f.write_str("gaussian_iid"),
            DesignKind::GaussianAr { base } => write!(f, "gaussian_ar({base})"),
            DesignKind::Rademacher => f.write_str("rademacher"),
            DesignKind::Anova => f.write_str("anova"),
        }
    }
}

impl FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_iid" => Ok(DesignKind::GaussianIid),
            "rademacher" => Ok(DesignKind::Rademacher),
            "anova" => Ok(DesignKind::Anova),
            _ => {
                let base = s
                    .strip_prefix("gaussian_ar(")
                    .and_then(|rest| rest.strip_suffix(')'))
                    .and_then(|b| b.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown design kind '{s}'")))?;
                Ok(DesignKind::GaussianAr { base })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// `t₄/√2`, unit variance.
    T4Scaled,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::T4Scaled => "t4_scaled",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "t4_scaled" => Ok(NoiseKind::T4Scaled),
            _ => Err(Error::InvalidParameter(format!("unknown noise kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub design_kind: DesignKind,
    pub noise_kind: NoiseKind,
    pub n1: usize,
    pub n2: usize,
    pub p: usize,
    pub k: usize,
    pub rho: f64,
    pub sigma: f64,
    pub seed: u64,
    /// Place the difference on `k` random coordinates instead of the first `k`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub random_support: bool,
}

impl Scenario {
    pub fn gaussian(n1: usize, n2: usize, p: usize, k: usize, rho: f64, sigma: f64, seed: u64) -> Self {
        Self {
            design_kind: DesignKind::GaussianIid,
            noise_kind: NoiseKind::Gaussian,
            n1,
            n2,
            p,
            k,
            rho,
            sigma,
            seed,
            random_support: false,
        }
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self { rho, ..self.clone() }
    }

    /// `σ = 0` is accepted so that noiseless fixtures can be generated.
    pub fn validate(&self) -> Result<()> {
        let Scenario { n1, n2, p, k, .. } = *self;
        if n1 == 0 || n2 == 0 || p == 0 {
            return Err(Error::Dimension(format!("n1, n2 and p must be positive (n1 = {n1}, n2 = {n2}, p = {p})")));
        }
        if n1 + n2 <= p {
            return Err(Error::Dimension(format!("need n1 + n2 > p (n1 + n2 = {}, p = {p})", n1 + n2)));
        }
        if k == 0 || k > p {
            return Err(Error::InvalidParameter(format!("need 1 ≤ k ≤ p (k = {k}, p = {p})")));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be finite and ≥ 0, got {}", self.rho)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be finite and ≥ 0, got {}", self.sigma)));
        }
        if let DesignKind::GaussianAr { base } = self.design_kind {
            if !(base > 0.0 && base < 1.0) {
                return Err(Error::InvalidParameter(format!("AR base must lie in (0, 1), got {base}")));
            }
        }
        if self.design_kind == DesignKind::Anova && (!n1.is_multiple_of(p) || !n2.is_multiple_of(p)) {
            return Err(Error::Dimension(format!("anova design needs p | n1 and p | n2 (n1 = {n1}, n2 = {n2}, p = {p})")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub beta1: Col<f64>,
    pub beta2: Col<f64>,
    /// `β₂ − β₁`
    pub delta: Col<f64>,
    /// `(β₁ − β₂)/2`
    pub theta: Col<f64>,
}

pub fn gen_design<R: Rng + ?Sized>(kind: DesignKind, n: usize, p: usize, rng: &mut R) -> Result<Mat<f64>> {
    match kind {
        DesignKind::GaussianIid => Ok(gaussian_matrix(n, p, rng)),
        DesignKind::GaussianAr { base } => {
            if !(base > 0.0 && base < 1.0) {
                return Err(Error::InvalidParameter(format!("AR base must lie in (0, 1), got {base}")));
            }
            // x = L g with L the Cholesky factor of the AR Toeplitz matrix;
            // applying L row by row is the AR(1) recursion.
            let g = gaussian_matrix(n, p, rng);
            let innov = (1.0 - base * base).sqrt();
            let mut x = Mat::<f64>::zeros(n, p);
            for i in 0..n {
                x[(i, 0)] = g[(i, 0)];
            }
            for j in 1..p {
                for i in 0..n {
                    x[(i, j)] = base * x[(i, j - 1)] + innov * g[(i, j)];
                }
            }
            Ok(x)
        }
        DesignKind::Rademacher => {
            let mut x = Mat::<f64>::zeros(n, p);
            for j in 0..p {
                for i in 0..n {
                    x[(i, j)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
                }
            }
            Ok(x)
        }
        DesignKind::Anova => {
            if p == 0 || !n.is_multiple_of(p) {
                return Err(Error::Dimension(format!("anova design needs p | n (n = {n}, p = {p})")));
            }
            let d = n / p;
            Ok(Mat::from_fn(n, p, |i, j| if i / d == j { 1.0 } else { 0.0 }))
        }
    }
}

/// `β₁ ~ N(0, I_p)` and `β₂ = β₁ + Δ` with `Δ` uniform on the radius-`ρ`
/// sphere of its `k`-dimensional support.
pub fn gen_truth<R: Rng + ?Sized>(p: usize, k: usize, rho: f64, random_support: bool, rng: &mut R) -> Result<GroundTruth> {
    if k == 0 || k > p {
        return Err(Error::InvalidParameter(format!("need 1 ≤ k ≤ p (k = {k}, p = {p})")));
    }
    let beta1 = gaussian_vector(p, rng);
    let mut dir = gaussian_vector(k, rng);
    let mut norm = dir.norm_l2();
    while norm == 0.0 {
        dir = gaussian_vector(k, rng);
        norm = dir.norm_l2();
    }
    let support: Vec<usize> = if random_support {
        let mut idx = rand::seq::index::sample(rng, p, k).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..k).collect()
    };
    let mut delta = Col::<f64>::zeros(p);
    for (t, &j) in support.iter().enumerate() {
        delta[j] = rho * (dir[t] / norm);
    }
    let beta2 = &beta1 + &delta;
    let theta = Col::from_fn(p, |j| (beta1[j] - beta2[j]) / 2.0);
    Ok(GroundTruth { beta1, beta2, delta, theta })
}

pub fn gen_noise<R: Rng + ?Sized>(kind: NoiseKind, n: usize, sigma: f64, rng: &mut R) -> Col<f64> {
    match kind {
        NoiseKind::Gaussian => Col::from_fn(n, |_| sigma * std_normal(rng)),
        NoiseKind::T4Scaled => Col::from_fn(n, |_| {
            let z = std_normal(rng);
            let v: f64 = (0..4).map(|_| std_normal(rng).powi(2)).sum();
            sigma * z / (v / 4.0).sqrt() / std::f64::consts::SQRT_2
        }),
    }
}

/// Replicate `rep` of `scenario`. Designs, truth and noise each come from
/// their own stream keyed by `(seed, rep)`, so for a fixed seed every `ρ`
/// sees the same designs and noise.
pub fn gen_dataset(scenario: &Scenario, rep: u64) -> Result<(TwoSampleData, GroundTruth)> {
    scenario.validate()?;
    let seed = scenario.seed;
    let x1 = gen_design(scenario.design_kind, scenario.n1, scenario.p, &mut seeding::stream_rng(seed, rep, Stream::Design1))?;
    let x2 = gen_design(scenario.design_kind, scenario.n2, scenario.p, &mut seeding::stream_rng(seed, rep, Stream::Design2))?;
    let truth = gen_truth(
        scenario.p,
        scenario.k,
        scenario.rho,
        scenario.random_support,
        &mut seeding::stream_rng(seed, rep, Stream::Truth),
    )?;
    let e1 = gen_noise(scenario.noise_kind, scenario.n1, scenario.sigma, &mut seeding::stream_rng(seed, rep, Stream::Noise1));
    let e2 = gen_noise(scenario.noise_kind, scenario.n2, scenario.sigma, &mut seeding::stream_rng(seed, rep, Stream::Noise2));
    let y1 = &x1 * &truth.beta1 + e1;
    let y2 = &x2 * &truth.beta2 + e2;
    Ok((TwoSampleData::new(x1, y1, x2, y2)?, truth))
}
