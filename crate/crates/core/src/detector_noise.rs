//! CCD and APD detector models.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::spectrum::{Spectrum, DEFAULT_N_BINS};

/// Nanodiamond count rate, counts/s.
pub const NANODIAMOND_COUNT_RATE: f64 = 3e5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdModel {
    /// Readout noise, counts per bin.
    pub readout_sigma: f64,
    pub n_bins: usize,
}

impl Default for CcdModel {
    fn default() -> Self {
        Self {
            readout_sigma: 10.0,
            n_bins: DEFAULT_N_BINS,
        }
    }
}

impl CcdModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.readout_sigma >= 0.0) {
            return Err(Error::contract("readout sigma must be non-negative"));
        }
        if self.n_bins == 0 {
            return Err(Error::contract("CCD needs at least one bin"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApdModel {
    /// Dark count rate, counts/s.
    pub dark_rate: f64,
}

impl Default for ApdModel {
    fn default() -> Self {
        Self { dark_rate: 50.0 }
    }
}

impl ApdModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.dark_rate >= 0.0) {
            return Err(Error::contract("dark rate must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Detector {
    Ccd(CcdModel),
    Apd(ApdModel),
}

/// One Poisson draw. Poisson(0) is exactly zero.
pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<f64> {
    if mean < 0.0 || !mean.is_finite() {
        return Err(Error::contract(format!("Poisson mean must be finite and ≥ 0, got {mean}")));
    }
    if mean == 0.0 {
        return Ok(0.0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::contract(e.to_string()))?;
    Ok(d.sample(rng))
}

/// Photon shot noise then additive Gaussian readout, bin by bin in grid order.
pub fn sample_ccd_spectrum(expected: &Spectrum, ccd: &CcdModel, seed: u64) -> Result<Spectrum> {
    let mut rng = seed::rng(seed);
    sample_ccd_with(expected, ccd, &mut rng)
}

pub fn sample_ccd_with<R: Rng + ?Sized>(
    expected: &Spectrum,
    ccd: &CcdModel,
    rng: &mut R,
) -> Result<Spectrum> {
    ccd.validate()?;
    expected.validate()?;
    if let Some(i) = expected.counts.iter().position(|&c| c < 0.0) {
        return Err(Error::contract(format!("negative expected counts in bin {i}")));
    }
    let readout = Normal::new(0.0, ccd.readout_sigma).map_err(|e| Error::contract(e.to_string()))?;
    let mut counts = Vec::with_capacity(expected.counts.len());
    for &mu in &expected.counts {
        let shot = poisson(mu, rng)?;
        let noise = if ccd.readout_sigma > 0.0 {
            readout.sample(rng)
        } else {
            0.0
        };
        counts.push(shot + noise);
    }
    Spectrum::new(expected.grid, counts, expected.exposure_s)
}

/// Photon counts on an APD over `duration` seconds, dark counts included.
pub fn sample_apd_counts(rate: f64, apd: &ApdModel, duration: f64, seed: u64) -> Result<u64> {
    let mut rng = seed::rng(seed);
    sample_apd_with(rate, apd, duration, &mut rng)
}

pub fn sample_apd_with<R: Rng + ?Sized>(
    rate: f64,
    apd: &ApdModel,
    duration: f64,
    rng: &mut R,
) -> Result<u64> {
    apd.validate()?;
    if !(rate >= 0.0) {
        return Err(Error::contract(format!("count rate must be non-negative, got {rate}")));
    }
    if !(duration > 0.0) {
        return Err(Error::contract("duration must be positive"));
    }
    Ok(poisson((rate + apd.dark_rate) * duration, rng)? as u64)
}

/// Signal-to-noise ratio after integrating `signal_rate` for `t` seconds.
///
/// CCD: the signal is spread evenly over `n_bins`; per-bin SNR is
/// `(R·t/n) / √(R·t/n + σ²)`. APD: integrated SNR `R·t / √(R·t + D·t)`.
pub fn snr(signal_rate: f64, detector: &Detector, t: f64) -> f64 {
    match detector {
        Detector::Ccd(ccd) => {
            let per_bin = signal_rate * t / ccd.n_bins as f64;
            per_bin / (per_bin + ccd.readout_sigma * ccd.readout_sigma).sqrt()
        }
        Detector::Apd(apd) => {
            let s = signal_rate * t;
            s / (s + apd.dark_rate * t).sqrt()
        }
    }
}

/// Shortest exposure reaching `target_snr`, closed form of [`snr`] = target.
pub fn min_exposure(signal_rate: f64, detector: &Detector, target_snr: f64) -> Result<f64> {
    if !(signal_rate > 0.0) {
        return Err(Error::NoSolution(format!(
            "SNR {target_snr} unreachable at signal rate {signal_rate}"
        )));
    }
    if !(target_snr > 0.0) {
        return Err(Error::contract("target SNR must be positive"));
    }
    let s2 = target_snr * target_snr;
    Ok(match detector {
        Detector::Ccd(ccd) => {
            ccd.validate()?;
            let var = ccd.readout_sigma * ccd.readout_sigma;
            // x² = S²(x + σ²) for the per-bin signal x.
            let x = 0.5 * (s2 + (s2 * s2 + 4.0 * s2 * var).sqrt());
            x * ccd.n_bins as f64 / signal_rate
        }
        Detector::Apd(apd) => {
            apd.validate()?;
            s2 * (signal_rate + apd.dark_rate) / (signal_rate * signal_rate)
        }
    })
}

/// Detection bandwidth `1 / (2 t*)`, with `t*` from [`min_exposure`].
pub fn detection_bandwidth(signal_rate: f64, detector: &Detector, target_snr: f64) -> Result<f64> {
    Ok(0.5 / min_exposure(signal_rate, detector, target_snr)?)
}
