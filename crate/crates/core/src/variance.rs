//! Method-of-moments estimation of the noise variance.
//!
//! For an isotropic Gaussian design the moment estimator is
//!
//! ```text
//! σ̂² = (n + p + 1)/(n(n + 1)) · ‖Y‖² − 1/(n(n + 1)) · ‖XᵀY‖²
//! ```
//!
//! It can go negative in small samples, so every estimate is floored at
//! `1e-8 · ‖Y‖²/n`.

use faer::{ColRef, MatRef};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::sketch::{SketchSummary, TwoSampleData};
use crate::testing::q_statistics;

const FLOOR_FRACTION: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaEstimate {
    pub sigma2_hat: f64,
    /// Unfloored per-sample estimates (pooled estimator only).
    pub per_sample: Option<(f64, f64)>,
    pub floor_applied: bool,
}

impl SigmaEstimate {
    pub fn sigma_hat(&self) -> f64 {
        self.sigma2_hat.sqrt()
    }
}

fn floor_for(y_sq: f64, n: usize) -> f64 {
    (FLOOR_FRACTION * y_sq / n as f64).max(f64::MIN_POSITIVE)
}

fn moment_estimate(n: usize, p: usize, y_sq: f64, xty_sq: f64) -> f64 {
    let n = n as f64;
    let p = p as f64;
    ((n + p + 1.0) * y_sq - xty_sq) / (n * (n + 1.0))
}

/// Unfloored estimate and its floor.
fn dicker_raw(x: MatRef<'_, f64>, y: ColRef<'_, f64>) -> Result<(f64, f64)> {
    let (n, p) = (x.nrows(), x.ncols());
    if n != y.nrows() {
        return Err(Error::Dimension(format!(
            "design has {n} rows but response has length {}",
            y.nrows()
        )));
    }
    if n < 2 {
        return Err(Error::Dimension(format!("need n ≥ 2 rows, got {n}")));
    }
    let y_sq = linalg::sq_norm(y);
    let xty = x.transpose() * y;
    let raw = moment_estimate(n, p, y_sq, linalg::sq_norm(xty.as_ref()));
    Ok((raw, floor_for(y_sq, n)))
}

/// Moment estimator of `σ²` for one sample, floored at `1e-8·‖Y‖²/n`.
pub fn dicker_sigma2(x: MatRef<'_, f64>, y: ColRef<'_, f64>) -> Result<f64> {
    let (raw, floor) = dicker_raw(x, y)?;
    Ok(raw.max(floor))
}

/// Per-sample moment estimates combined as an `n_i`-weighted average.
pub fn pooled_sigma2(data: &TwoSampleData) -> Result<SigmaEstimate> {
    let (r1, f1) = dicker_raw(data.x1(), data.y1())?;
    let (r2, f2) = dicker_raw(data.x2(), data.y2())?;
    let (n1, n2) = (data.n1() as f64, data.n2() as f64);
    let pooled = (n1 * r1.max(f1) + n2 * r2.max(f2)) / (n1 + n2);
    Ok(SigmaEstimate {
        sigma2_hat: pooled,
        per_sample: Some((r1, r2)),
        floor_applied: r1 < f1 || r2 < f2,
    })
}

/// Moment estimator applied to the sketched one-sample problem `(W, Z)`.
///
/// Columns of `W` are rescaled to squared norm `m`, so the cross term is
/// `m‖Q‖²` and the estimator reads `((m+p+1)‖Z‖² − m‖Q‖²)/(m(m+1))`.
/// Under the null `Z = ξ` and this is exactly unbiased; unlike the per-sample
/// estimator it does not see the nuisance coefficients at all.
pub fn sketched_sigma2(summary: &SketchSummary) -> Result<SigmaEstimate> {
    let m = summary.m;
    if m < 2 {
        return Err(Error::Dimension(format!("need sketch dimension m ≥ 2, got {m}")));
    }
    let (q, _) = q_statistics(summary);
    let q_sq: f64 = q.iter().map(|v| v * v).sum();
    let raw = moment_estimate(m, summary.p(), summary.z_sq_norm, m as f64 * q_sq);
    let floor = floor_for(summary.z_sq_norm, m);
    Ok(SigmaEstimate {
        sigma2_hat: raw.max(floor),
        per_sample: None,
        floor_applied: raw < floor,
    })
}

/// Estimates `σ²` from the leading `⌈fraction·n_i⌉` rows of each sample and
/// returns the remaining rows for testing, so the estimate is independent of
/// the data the test sees.
pub fn split_sigma2(data: &TwoSampleData, fraction: f64) -> Result<(SigmaEstimate, TwoSampleData)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("split fraction {fraction}")));
    }
    let rows1 = (fraction * data.n1() as f64).ceil() as usize;
    let rows2 = (fraction * data.n2() as f64).ceil() as usize;
    if rows1 < 2 || rows2 < 2 || rows1 >= data.n1() || rows2 >= data.n2() {
        return Err(Error::Dimension(format!(
            "split of {fraction} leaves ({rows1}, {rows2}) estimation rows out of ({}, {})",
            data.n1(),
            data.n2()
        )));
    }
    let (head, tail) = data.split_rows(rows1, rows2);
    let est = pooled_sigma2(&head)?;
    let tail = TwoSampleData::new(
        tail.x1().to_owned(),
        tail.y1().to_owned(),
        tail.x2().to_owned(),
        tail.y2().to_owned(),
    )?;
    Ok((est, tail))
}
