//! Closed-form constants, detection limits and random-matrix validators.
//!
//! Sample sizes enter through `r = n1/n2` and `s = p/m` with `m = n1 + n2 − p`.
//! `κ1 = r/((1+r)²(1+s))` sets the effective sample size `nκ1` of the
//! two-sample problem: it is the almost-sure limit of `‖a‖₁/p`, where
//! `a_j = λ_j(1 − λ_j)` and `λ_j` are the eigenvalues of a matrix-variate Beta
//! matrix `(S1+S2)^{-1/2} S1 (S1+S2)^{-1/2}`.

use faer::{Mat, Side};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::Serialize;
use statrs::distribution::{ChiSquared as ChiSquaredLaw, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::seeding::{self, Stream};
use crate::special;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticRegime {
    /// `n1/n2`
    pub r: f64,
    /// `p/m`
    pub s: f64,
}

impl AsymptoticRegime {
    pub fn new(r: f64, s: f64) -> Result<Self> {
        if !(r > 0.0 && s > 0.0 && r.is_finite() && s.is_finite()) {
            return Err(Error::InvalidParameter(format!("regime needs r, s > 0 (r = {r}, s = {s})")));
        }
        Ok(Self { r, s })
    }

    pub fn from_sizes(n1: usize, n2: usize, p: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 || p == 0 || n1 + n2 <= p {
            return Err(Error::Dimension(format!(
                "need n1, n2, p ≥ 1 and n1 + n2 > p (n1 = {n1}, n2 = {n2}, p = {p})"
            )));
        }
        Self::new(n1 as f64 / n2 as f64, p as f64 / (n1 + n2 - p) as f64)
    }

    pub fn kappa1(&self) -> f64 {
        kappa1(self.r, self.s)
    }

    pub fn kappa2(&self) -> f64 {
        kappa2(self.r, self.s)
    }

    /// Limits of `(p/n1, p/n2)`.
    pub fn aspect_ratios(&self) -> (f64, f64) {
        let (r, s) = (self.r, self.s);
        ((s + s * r) / (r + s * r), (s + s * r) / (1.0 + s))
    }

    /// Support `[t_ℓ, t_r]` of the continuous part of the limiting spectrum.
    pub fn spectral_edges(&self) -> (f64, f64) {
        let (xi, eta) = self.aspect_ratios();
        spectral_edges(xi, eta)
    }
}

pub fn kappa1(r: f64, s: f64) -> f64 {
    r / ((1.0 + r).powi(2) * (1.0 + s))
}

pub fn kappa2(r: f64, s: f64) -> f64 {
    let num = r * (r + s - r * s + r * r * s + r * s * s);
    let den = (1.0 + r).powi(4) * (1.0 + s).powi(3);
    (num / den).sqrt()
}

/// Edges `t_ℓ, t_r` of the limiting Beta-matrix spectrum for
/// `p/n1 → ξ`, `p/n2 → η`.
pub fn spectral_edges(xi: f64, eta: f64) -> (f64, f64) {
    let base = (xi + eta) * eta + xi * eta * (xi - eta);
    let spread = 2.0 * xi * eta * (xi - xi * eta + eta).sqrt();
    let den = (xi + eta).powi(2);
    ((base - spread) / den, (base + spread) / den)
}

fn log_p(p: usize) -> Result<f64> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!("need p ≥ 2, got {p}")));
    }
    Ok((p as f64).ln())
}

/// Signal-to-threshold ratio `r n ρ² / (σ²(1+s)(1+r)² k log p)`.
pub fn nu(n1: usize, n2: usize, p: usize, k: usize, rho: f64, sigma: f64) -> Result<f64> {
    let reg = AsymptoticRegime::from_sizes(n1, n2, p)?;
    let lp = log_p(p)?;
    if k == 0 || !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("need k ≥ 1 and σ > 0 (k = {k}, σ = {sigma})")));
    }
    let n = (n1 + n2) as f64;
    Ok(reg.r * n * rho * rho / (sigma * sigma * (1.0 + reg.s) * (1.0 + reg.r).powi(2) * k as f64 * lp))
}

/// The `ρ ≥ 0` at which [`nu`] equals `target`.
pub fn rho_for_nu(n1: usize, n2: usize, p: usize, k: usize, sigma: f64, target: f64) -> Result<f64> {
    if !(target >= 0.0) {
        return Err(Error::InvalidParameter(format!("ν = {target}")));
    }
    let unit = nu(n1, n2, p, k, 1.0, sigma)?;
    Ok((target / unit).sqrt())
}

/// Sufficient `‖θ‖₂` for the sparse test: `√(7σ²k log p / (λ̲² n κ1))`.
pub fn rho_sparse_upper(
    n1: usize,
    n2: usize,
    p: usize,
    k: usize,
    sigma: f64,
    lambda_lower: f64,
) -> Result<f64> {
    let reg = AsymptoticRegime::from_sizes(n1, n2, p)?;
    let lp = log_p(p)?;
    let n = (n1 + n2) as f64;
    Ok((7.0 * sigma * sigma * k as f64 * lp / (lambda_lower * lambda_lower * n * reg.kappa1())).sqrt())
}

/// Sufficient `‖θ‖₂` for the dense test: `√(2σ²√(m log p) / (n κ1 λ̲))`.
pub fn rho_dense_upper(n1: usize, n2: usize, p: usize, sigma: f64, lambda_lower: f64) -> Result<f64> {
    let reg = AsymptoticRegime::from_sizes(n1, n2, p)?;
    let lp = log_p(p)?;
    let n = (n1 + n2) as f64;
    let m = (n1 + n2 - p) as f64;
    Ok((2.0 * sigma * sigma * (m * lp).sqrt() / (n * reg.kappa1() * lambda_lower)).sqrt())
}

/// Wishart(n, I_p) draw. Uses the Bartlett factor `S = LLᵀ` (with
/// `L_jj² ~ χ²_{n−j+1}`, `L_ij ~ N(0,1)` below the diagonal) when `n ≥ p`,
/// and `GᵀG` for an explicit Gaussian `G` otherwise.
pub fn wishart<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Mat<f64> {
    if n < p {
        let g = linalg::gaussian_matrix(n, p, rng);
        return g.transpose() * &g;
    }
    let mut l = Mat::<f64>::zeros(p, p);
    for j in 0..p {
        let df = (n - j) as f64;
        let chi = ChiSquared::new(df).expect("positive degrees of freedom");
        l[(j, j)] = chi.sample(rng).sqrt();
        for i in (j + 1)..p {
            l[(i, j)] = StandardNormal.sample(rng);
        }
    }
    &l * l.transpose()
}

/// Eigenvalues, ascending, of `B = (S1+S2)^{-1/2} S1 (S1+S2)^{-1/2}` for
/// independent `S_i ~ Wishart(n_i, I_p)`. Values are clamped into `[0, 1]`.
pub fn beta_spectrum(n1: usize, n2: usize, p: usize, seed: u64) -> Result<Vec<f64>> {
    if n1 + n2 <= p || p == 0 {
        return Err(Error::Dimension(format!("need n1 + n2 > p ≥ 1 (n1 = {n1}, n2 = {n2}, p = {p})")));
    }
    let s1 = wishart(n1, p, &mut seeding::stream_rng(seed, 0, Stream::Spectrum));
    let s2 = wishart(n2, p, &mut seeding::stream_rng(seed, 1, Stream::Spectrum));
    let total = &s1 + &s2;

    let evd = total
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let vals: Vec<f64> = (0..p).map(|i| evd.S()[i].max(0.0)).collect();
    let top = vals.iter().cloned().fold(0.0f64, f64::max);
    if vals.iter().any(|&v| v <= 1e-12 * top) {
        return Err(Error::Singular("S1 + S2 is numerically singular".into()));
    }
    let u = evd.U();
    let scaled = Mat::from_fn(p, p, |i, j| u[(i, j)] / vals[j].sqrt());
    let inv_sqrt = &scaled * u.transpose();
    let b = &inv_sqrt * &s1 * &inv_sqrt;
    let mut eig = b
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigenvalues failed: {e:?}")))?;
    for v in eig.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(eig)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumMoments {
    /// `‖a‖₁/p`
    pub a_l1: f64,
    /// `‖a‖₂/√p`
    pub a_l2: f64,
    pub min: f64,
    pub max: f64,
}

pub fn spectrum_moments(eigenvalues: &[f64]) -> SpectrumMoments {
    let p = eigenvalues.len() as f64;
    let a: Vec<f64> = eigenvalues.iter().map(|l| l * (1.0 - l)).collect();
    SpectrumMoments {
        a_l1: a.iter().sum::<f64>() / p,
        a_l2: (a.iter().map(|v| v * v).sum::<f64>() / p).sqrt(),
        min: eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min),
        max: eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsResult {
    pub label: String,
    pub samples: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// Outcome of checking the law of the triangular QR factor of a Gaussian matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BartlettReport {
    pub n: usize,
    pub p: usize,
    pub reps: usize,
    /// `T_jj²` against `χ²_{n−j+1}`, one entry per diagonal position.
    pub diagonal: Vec<KsResult>,
    /// All strictly-upper entries pooled against `N(0, 1)`.
    pub off_diagonal: KsResult,
    pub min_diagonal: f64,
    /// Largest `‖QᵀQ − I‖_max` over the draws.
    pub max_orthonormality_error: f64,
}

impl BartlettReport {
    pub fn min_p_value(&self) -> f64 {
        self.diagonal
            .iter()
            .chain(std::iter::once(&self.off_diagonal))
            .map(|k| k.p_value)
            .fold(1.0, f64::min)
    }
}

fn ks(label: String, mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> KsResult {
    let n = sample.len();
    let d = special::ks_statistic(&mut sample, cdf);
    KsResult { label, samples: n, statistic: d, p_value: special::ks_pvalue(d, n) }
}

/// Draws `reps` Gaussian `n × p` matrices, factors each as `QT` with
/// nonnegative `diag(T)`, and tests the entries of `T` against their laws.
pub fn bartlett_qr_check(n: usize, p: usize, reps: usize, seed: u64) -> Result<BartlettReport> {
    if n < p || p == 0 || reps < 2 {
        return Err(Error::InvalidParameter(format!(
            "need n ≥ p ≥ 1 and reps ≥ 2 (n = {n}, p = {p}, reps = {reps})"
        )));
    }
    let mut diag: Vec<Vec<f64>> = vec![Vec::with_capacity(reps); p];
    let mut off = Vec::with_capacity(reps * p * (p - 1) / 2);
    let mut min_diag = f64::INFINITY;
    let mut orth_err = 0.0f64;
    let eye = Mat::<f64>::identity(p, p);

    for rep in 0..reps {
        let mut rng = seeding::stream_rng(seed, rep as u64, Stream::Bartlett);
        let x = linalg::gaussian_matrix(n, p, &mut rng);
        let qr = x.qr();
        let mut q = qr.compute_thin_Q();
        let mut t = qr.thin_R().to_owned();
        for j in 0..p {
            if t[(j, j)] < 0.0 {
                for c in 0..p {
                    t[(j, c)] = -t[(j, c)];
                }
                for i in 0..n {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        let qtq = q.transpose() * &q;
        orth_err = orth_err.max(linalg::max_abs_diff(qtq.as_ref(), eye.as_ref()));
        for j in 0..p {
            min_diag = min_diag.min(t[(j, j)]);
            diag[j].push(t[(j, j)] * t[(j, j)]);
            for c in (j + 1)..p {
                off.push(t[(j, c)]);
            }
        }
    }

    let diagonal = diag
        .into_iter()
        .enumerate()
        .map(|(j, sample)| {
            let df = (n - j) as f64;
            let law = ChiSquaredLaw::new(df).expect("positive degrees of freedom");
            ks(format!("T[{0},{0}]^2 ~ chi2({1})", j + 1, n - j), sample, |x| law.cdf(x))
        })
        .collect();
    let normal = Normal::standard();
    let off_diagonal = if off.is_empty() {
        KsResult { label: "off-diagonal ~ N(0,1)".into(), samples: 0, statistic: 0.0, p_value: 1.0 }
    } else {
        ks("off-diagonal ~ N(0,1)".into(), off, |x| normal.cdf(x))
    };

    Ok(BartlettReport {
        n,
        p,
        reps,
        diagonal,
        off_diagonal,
        min_diagonal: min_diag,
        max_orthonormality_error: orth_err,
    })
}
