//! Lorentzian line estimation: weighted least squares, an affine-invariant
//! ensemble sampler, and instrument-response calibration.

mod lsq;
mod mcmc;
mod response;

pub use lsq::{fit_least_squares, LsqOptions, Weighting};
pub use mcmc::{
    acceptance_probability, fit_ensemble_mcmc, stretch_move, stretch_z, Ensemble, SamplerConfig,
};
pub use response::{
    correct_spectrum, estimate_response_blackbody, estimate_response_residual,
    relative_rms_disagreement, rms_difference, savitzky_golay, ResponseEstimate, ResponseMethod,
    DEFAULT_DETREND_DEGREE, DEFAULT_SMOOTHING_WINDOW,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral_model::LorentzianParams;
use crate::spectrum::Spectrum;

pub const N_PARAMS: usize = 4;

/// Point estimates and standard errors for one spectral fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: LorentzianParams,
    /// Standard errors in the same order and units as `params`.
    pub sigmas: LorentzianParams,
    /// Post-burn-in samples, `[center, fwhm, amplitude, baseline]`.
    pub posterior: Option<Vec<[f64; 4]>>,
    /// Reduced chi-square under the shot + readout noise model.
    pub goodness: f64,
}

/// Model value and its gradient with respect to `[center, fwhm, amplitude, baseline]`.
#[inline]
pub(crate) fn model_and_gradient(p: &[f64; 4], lambda: f64) -> (f64, [f64; 4]) {
    let [c, fwhm, a, b] = *p;
    let h = 0.5 * fwhm;
    let x = lambda - c;
    let d = x * x + h * h;
    let shape = h * h / d;
    let d2 = d * d;
    (
        b + a * shape,
        [a * h * h * 2.0 * x / d2, a * h * x * x / d2, shape, 1.0],
    )
}

#[inline]
pub(crate) fn model_value(p: &[f64; 4], lambda: f64) -> f64 {
    let h = 0.5 * p[1];
    let x = lambda - p[0];
    p[3] + p[2] * h * h / (x * x + h * h)
}

/// Per-bin variance of the shot + readout noise model.
#[inline]
pub(crate) fn noise_variance(model: f64, readout_sigma: f64) -> f64 {
    model.max(1.0) + readout_sigma * readout_sigma
}

pub(crate) fn reduced_chi2(s: &Spectrum, p: &[f64; 4], readout_sigma: f64) -> f64 {
    let chi2: f64 = s
        .iter()
        .map(|(l, y)| {
            let m = model_value(p, l);
            (y - m).powi(2) / noise_variance(m, readout_sigma)
        })
        .sum();
    chi2 / (s.counts.len().saturating_sub(N_PARAMS)).max(1) as f64
}

fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    v[idx]
}

/// Rejects spectra with fewer than five bins standing clear of the noise floor.
pub(crate) fn check_signal(s: &Spectrum, readout_sigma: f64) -> Result<()> {
    s.validate()?;
    let floor = percentile(&s.counts, 0.05);
    let sigma = noise_variance(floor.max(0.0), readout_sigma).sqrt();
    let above = s.counts.iter().filter(|&&c| c - floor > 5.0 * sigma).count();
    if above < 5 {
        return Err(Error::IllConditioned(format!(
            "only {above} bins rise above the baseline; need at least 5"
        )));
    }
    Ok(())
}

/// Moment-style starting point: low-percentile baseline, smoothed peak, and
/// half-maximum crossings for the width.
pub fn initial_guess(s: &Spectrum) -> LorentzianParams {
    let n = s.counts.len();
    let half_w = (n / 500).max(1);
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half_w);
            let hi = (i + half_w + 1).min(n);
            s.counts[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let baseline = percentile(&s.counts, 0.02).max(0.0);
    let peak = smooth
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(n / 2);
    let amplitude = (smooth[peak] - baseline).max(0.0);
    let half = baseline + 0.5 * amplitude;
    let left = (0..peak).rev().find(|&i| smooth[i] < half);
    let right = (peak + 1..n).find(|&i| smooth[i] < half);
    let step = s.grid.step_nm;
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => (r - l) as f64 * step,
        (Some(l), None) => 2.0 * (peak - l) as f64 * step,
        (None, Some(r)) => 2.0 * (r - peak) as f64 * step,
        (None, None) => 0.25 * n as f64 * step,
    }
    .max(2.0 * step);
    LorentzianParams {
        center_nm: s.grid.wavelength(peak),
        fwhm_nm: fwhm,
        amplitude,
        baseline,
    }
}
