//! Collection-path transfer function: estimation and correction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{model_value, FitResult};
use crate::error::{Error, Result};
use crate::spectrum::Spectrum;

/// Polynomial degree of the smooth trend removed from a blackbody reference.
pub const DEFAULT_DETREND_DEGREE: usize = 1;
/// Savitzky–Golay window (bins) applied to fit residual ratios.
pub const DEFAULT_SMOOTHING_WINDOW: usize = 41;

/// Bins whose fitted model falls below this many counts are not trusted.
const MIN_MODEL_COUNTS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMethod {
    Blackbody,
    Residual,
}

/// Per-bin multiplicative throughput relative to a smooth path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseEstimate {
    pub factors: Vec<f64>,
    pub method: ResponseMethod,
    /// Bins whose factor was clamped to 1 because the model was near zero.
    pub clamped: Vec<usize>,
}

impl ResponseEstimate {
    pub fn identity(n_bins: usize, method: ResponseMethod) -> Self {
        Self {
            factors: vec![1.0; n_bins],
            method,
            clamped: Vec::new(),
        }
    }
}

/// Least-squares polynomial trend in Legendre polynomials on `x ∈ [−1, 1]`.
fn polynomial_trend(values: &[f64], degree: usize) -> Result<Vec<f64>> {
    let n = values.len();
    if degree + 1 > n {
        return Err(Error::contract("polynomial degree too high for the number of bins"));
    }
    let xs: Vec<f64> = (0..n)
        .map(|i| 2.0 * i as f64 / (n - 1) as f64 - 1.0)
        .collect();
    let basis = DMatrix::from_fn(n, degree + 1, |i, k| legendre(k, xs[i]));
    let y = DVector::from_column_slice(values);
    let coef = basis
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    Ok((basis * coef).iter().copied().collect())
}

fn legendre(k: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    match k {
        0 => p0,
        1 => p1,
        _ => {
            for m in 1..k {
                let m = m as f64;
                let p2 = ((2.0 * m + 1.0) * x * p1 - m * p0) / (m + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// Transfer function from a blackbody lamp seen through the same path: the
/// reference divided by its low-order polynomial trend.
pub fn estimate_response_blackbody(reference: &Spectrum, degree: usize) -> Result<ResponseEstimate> {
    reference.validate()?;
    if let Some(i) = reference.counts.iter().position(|&c| c <= 0.0) {
        return Err(Error::contract(format!("blackbody reference has non-positive bin {i}")));
    }
    let trend = polynomial_trend(&reference.counts, degree)?;
    if let Some(i) = trend.iter().position(|&t| t <= 0.0) {
        return Err(Error::IllConditioned(format!("polynomial trend non-positive at bin {i}")));
    }
    Ok(ResponseEstimate {
        factors: reference.counts.iter().zip(&trend).map(|(r, t)| r / t).collect(),
        method: ResponseMethod::Blackbody,
        clamped: Vec::new(),
    })
}

/// Local quadratic (Savitzky–Golay) smoothing. Windows are truncated at the
/// edges rather than padded.
pub fn savitzky_golay(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    let half = (window / 2).max(1);
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            // Normal equations for y ≈ c0 + c1·d + c2·d², d = j − i.
            let mut s = [0.0f64; 5];
            let mut t = [0.0f64; 3];
            for (j, &v) in values.iter().enumerate().take(hi).skip(lo) {
                let d = j as f64 - i as f64;
                let mut pw = 1.0;
                for sk in s.iter_mut() {
                    *sk += pw;
                    pw *= d;
                }
                t[0] += v;
                t[1] += v * d;
                t[2] += v * d * d;
            }
            let m = nalgebra::Matrix3::new(s[0], s[1], s[2], s[1], s[2], s[3], s[2], s[3], s[4]);
            match m.try_inverse() {
                Some(inv) => (inv * nalgebra::Vector3::new(t[0], t[1], t[2]))[0],
                None => t[0] / s[0],
            }
        })
        .collect()
}

/// Transfer function from the residuals of a fit: observed over fitted model,
/// smoothed with a `window`-bin Savitzky–Golay filter. Bins where the model is
/// below one count are clamped to 1 and listed in `clamped`.
pub fn estimate_response_residual(
    s: &Spectrum,
    fit: &FitResult,
    window: usize,
) -> Result<ResponseEstimate> {
    s.validate()?;
    fit.params.validate()?;
    let p = fit.params.to_array();
    let mut clamped = Vec::new();
    let ratio: Vec<f64> = s
        .iter()
        .enumerate()
        .map(|(i, (l, y))| {
            let m = model_value(&p, l);
            if m < MIN_MODEL_COUNTS {
                clamped.push(i);
                1.0
            } else {
                y / m
            }
        })
        .collect();
    let mut factors = savitzky_golay(&ratio, window);
    for &i in &clamped {
        factors[i] = 1.0;
    }
    for f in factors.iter_mut() {
        *f = f.max(1e-6);
    }
    Ok(ResponseEstimate {
        factors,
        method: ResponseMethod::Residual,
        clamped,
    })
}

/// Divide out the transfer function bin by bin.
pub fn correct_spectrum(s: &Spectrum, r: &ResponseEstimate) -> Result<Spectrum> {
    if s.counts.len() != r.factors.len() {
        return Err(Error::contract(format!(
            "response has {} factors for {} bins",
            r.factors.len(),
            s.counts.len()
        )));
    }
    if r.factors.iter().any(|&f| !(f > 0.0)) {
        return Err(Error::contract("response factors must be positive"));
    }
    Spectrum::new(
        s.grid,
        s.counts.iter().zip(&r.factors).map(|(c, f)| c / f).collect(),
        s.exposure_s,
    )
}

/// RMS of `a − b`.
pub fn rms_difference(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()).max(1);
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64).sqrt()
}

/// RMS of `a − b` relative to the RMS modulation of `b` about unity.
pub fn relative_rms_disagreement(a: &[f64], b: &[f64]) -> f64 {
    let ones = vec![1.0; b.len()];
    rms_difference(a, b) / rms_difference(b, &ones)
}
