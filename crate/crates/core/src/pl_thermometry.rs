//! PL thermometry: spectral fit → peak position → temperature, plus the
//! precision-versus-integration-time analysis.

use nalgebra::Matrix4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector_noise::{sample_ccd_spectrum, CcdModel};
use crate::error::{Error, Result};
use crate::line_fitter::{
    correct_spectrum, fit_ensemble_mcmc, fit_least_squares, initial_guess, FitResult, LsqOptions,
    ResponseEstimate, SamplerConfig,
};
use crate::seed;
use crate::spectral_model::{
    synthesize_background, synthesize_expected_spectrum, EmitterEnsemble, InstrumentResponse,
    LorentzianParams, ThermoCalibration,
};
use crate::spectrum::{Spectrum, WavelengthGrid};
use crate::stats;

/// Bulk signal count rate, counts/s.
pub const BULK_BRIGHTNESS_CPS: f64 = 1e7;
/// Flat spectral background of the bulk sample, counts/s per bin.
pub const BULK_BACKGROUND_CPS_PER_BIN: f64 = 2e4;

/// Inverse of the calibration's centre map.
pub fn peak_to_temperature(center_nm: f64, cal: &ThermoCalibration) -> Result<f64> {
    cal.validate()?;
    let t = cal.t_ref + (center_nm - cal.center_ref_nm) / cal.d_center_dT;
    cal.check_window(t)?;
    Ok(t)
}

/// Inverse of the calibration's linewidth map.
pub fn linewidth_to_temperature(fwhm_nm: f64, cal: &ThermoCalibration) -> Result<f64> {
    cal.validate()?;
    if cal.d_fwhm_dT == 0.0 {
        return Err(Error::NoSolution("calibration has no linewidth susceptibility".into()));
    }
    let t = cal.t_ref + (fwhm_nm - cal.fwhm_ref_nm) / cal.d_fwhm_dT;
    cal.check_window(t)?;
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitterChoice {
    LeastSquares(LsqOptions),
    Mcmc {
        config: SamplerConfig,
        readout_sigma: f64,
        seed: u64,
    },
}

impl Default for FitterChoice {
    fn default() -> Self {
        FitterChoice::LeastSquares(LsqOptions::default())
    }
}

impl FitterChoice {
    pub fn fit(&self, s: &Spectrum, init: &LorentzianParams) -> Result<FitResult> {
        match self {
            FitterChoice::LeastSquares(opts) => fit_least_squares(s, init, opts),
            FitterChoice::Mcmc {
                config,
                readout_sigma,
                seed,
            } => fit_ensemble_mcmc(s, init, config, *readout_sigma, *seed),
        }
    }

    /// Same fitter with its sampler seed replaced (no-op for least squares).
    pub fn reseeded(&self, new_seed: u64) -> Self {
        match *self {
            FitterChoice::Mcmc {
                config,
                readout_sigma,
                ..
            } => FitterChoice::Mcmc {
                config,
                readout_sigma,
                seed: new_seed,
            },
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub temperature_K: f64,
    pub sigma_T_K: f64,
    pub fit: FitResult,
}

/// Optional response correction, Lorentzian fit, and peak → temperature.
pub fn measure_temperature(
    s: &Spectrum,
    cal: &ThermoCalibration,
    fitter: &FitterChoice,
    response: Option<&ResponseEstimate>,
) -> Result<Reading> {
    let corrected;
    let s = match response {
        Some(r) => {
            corrected = correct_spectrum(s, r)?;
            &corrected
        }
        None => s,
    };
    let fit = fitter.fit(s, &initial_guess(s))?;
    let temperature_K = peak_to_temperature(fit.params.center_nm, cal)?;
    Ok(Reading {
        temperature_K,
        sigma_T_K: fit.sigmas.center_nm / cal.d_center_dT.abs(),
        fit,
    })
}

/// Everything needed to simulate and read one PL spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlSimConfig {
    pub cal: ThermoCalibration,
    pub ensemble: EmitterEnsemble,
    pub grid: WavelengthGrid,
    pub brightness_cps: f64,
    pub background_cps_per_bin: f64,
    pub ccd: CcdModel,
    pub response: InstrumentResponse,
    pub temperature_K: f64,
    pub fitter: FitterChoice,
}

impl PlSimConfig {
    pub fn bulk() -> Self {
        let cal = ThermoCalibration::bulk();
        Self {
            ensemble: EmitterEnsemble::strained(&cal),
            cal,
            grid: WavelengthGrid::default(),
            brightness_cps: BULK_BRIGHTNESS_CPS,
            background_cps_per_bin: BULK_BACKGROUND_CPS_PER_BIN,
            ccd: CcdModel::default(),
            response: InstrumentResponse::flat(),
            temperature_K: 295.0,
            fitter: FitterChoice::LeastSquares(LsqOptions::default()),
        }
    }

    pub fn expected_spectrum(&self, t: f64, exposure_s: f64) -> Result<Spectrum> {
        let signal = synthesize_expected_spectrum(
            &self.ensemble,
            &self.cal,
            t,
            &self.grid,
            self.brightness_cps,
            exposure_s,
            &self.response,
        )?;
        let background =
            synthesize_background(&self.grid, self.background_cps_per_bin, exposure_s, &self.response)?;
        signal.add(&background)
    }

    pub fn sample_spectrum(&self, t: f64, exposure_s: f64, seed: u64) -> Result<Spectrum> {
        sample_ccd_spectrum(&self.expected_spectrum(t, exposure_s)?, &self.ccd, seed)
    }
}

impl Default for PlSimConfig {
    fn default() -> Self {
        Self::bulk()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPoint {
    pub integration_time_s: f64,
    pub sigma_T_K: f64,
    /// Linewidth-channel precision over the same repeats.
    pub width_sigma_T_K: f64,
    /// Expected signal photons per exposure.
    pub total_photons: f64,
    pub failed_fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionCurve {
    pub points: Vec<PrecisionPoint>,
    /// Exponent `e` of `σ_T ∝ N_ph^e`.
    pub fitted_exponent: f64,
    pub fitted_exponent_se: f64,
    /// `σ_T·√t` fitted with the exponent fixed at −½.
    pub sensitivity_mK_per_rtHz: f64,
    pub width_sensitivity_mK_per_rtHz: f64,
}

/// Temperature precision from repeated seeded exposures at each integration
/// time. Repeats run in parallel; results depend only on `seed`.
pub fn precision_vs_time(
    cfg: &PlSimConfig,
    times: &[f64],
    n_repeats: usize,
    seed: u64,
) -> Result<PrecisionCurve> {
    if n_repeats < 30 {
        return Err(Error::contract("precision estimates need at least 30 repeats"));
    }
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::contract("integration times must be positive"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::contract("integration times must be strictly increasing"));
    }
    let mut points = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let point_seed = seed::derive(seed, i as u64);
        let expected = cfg.expected_spectrum(cfg.temperature_K, t)?;
        let outcomes: Vec<Option<(f64, f64)>> = (0..n_repeats)
            .into_par_iter()
            .map(|r| {
                let rs = seed::derive(point_seed, r as u64);
                let s = sample_ccd_spectrum(&expected, &cfg.ccd, rs).ok()?;
                let fitter = cfg.fitter.reseeded(seed::derive(rs, 1));
                let reading = measure_temperature(&s, &cfg.cal, &fitter, None).ok()?;
                Some((reading.temperature_K, reading.fit.params.fwhm_nm))
            })
            .collect();
        let ok: Vec<(f64, f64)> = outcomes.iter().flatten().copied().collect();
        let failed = n_repeats - ok.len();
        if failed as f64 > 0.05 * n_repeats as f64 {
            return Err(Error::DataQuality(format!(
                "{failed} of {n_repeats} fits failed at integration time {t} s"
            )));
        }
        let temps: Vec<f64> = ok.iter().map(|v| v.0).collect();
        let widths: Vec<f64> = ok.iter().map(|v| v.1).collect();
        points.push(PrecisionPoint {
            integration_time_s: t,
            sigma_T_K: stats::std_dev(&temps),
            width_sigma_T_K: stats::std_dev(&widths) / cfg.cal.d_fwhm_dT,
            total_photons: cfg.brightness_cps * t,
            failed_fits: failed,
        });
    }
    let photons: Vec<f64> = points.iter().map(|p| p.total_photons).collect();
    let sigmas: Vec<f64> = points.iter().map(|p| p.sigma_T_K).collect();
    let fit = stats::log_log_slope(&photons, &sigmas);
    let eta = |sig: &dyn Fn(&PrecisionPoint) -> f64| {
        1e3 * stats::mean(
            &points
                .iter()
                .map(|p| (sig(p) * p.integration_time_s.sqrt()).ln())
                .collect::<Vec<_>>(),
        )
        .exp()
    };
    Ok(PrecisionCurve {
        fitted_exponent: fit.slope,
        fitted_exponent_se: fit.slope_se,
        sensitivity_mK_per_rtHz: eta(&|p| p.sigma_T_K),
        width_sensitivity_mK_per_rtHz: eta(&|p| p.width_sigma_T_K),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeSensitivity {
    pub sensitivity_mK_per_rtHz: f64,
    pub volume_um3: f64,
    pub per_volume: f64,
}

/// Sensitivity scaled to the sensing volume, `η·√V`.
pub fn sensitivity_per_volume(sensitivity_mK_per_rtHz: f64, volume_um3: f64) -> Result<VolumeSensitivity> {
    if !(sensitivity_mK_per_rtHz > 0.0 && volume_um3 > 0.0) {
        return Err(Error::contract("sensitivity and volume must be positive"));
    }
    Ok(VolumeSensitivity {
        sensitivity_mK_per_rtHz,
        volume_um3,
        per_volume: sensitivity_mK_per_rtHz * volume_um3.sqrt(),
    })
}

/// Cramér–Rao bound on `(σ_center, σ_fwhm)` for a single Lorentzian on a flat
/// background sampled at bin centres, under shot + readout noise.
pub fn cramer_rao_bound(
    line: &LorentzianParams,
    grid: &WavelengthGrid,
    readout_sigma: f64,
) -> Result<(f64, f64)> {
    let p = line.to_array();
    let mut fisher = Matrix4::zeros();
    for l in grid.wavelengths() {
        let (m, g) = crate::line_fitter::model_and_gradient(&p, l);
        let g = nalgebra::Vector4::from(g);
        fisher += g * g.transpose() / (m.max(1.0) + readout_sigma * readout_sigma);
    }
    let cov = fisher
        .try_inverse()
        .ok_or_else(|| Error::IllConditioned("singular Fisher information".into()))?;
    Ok((cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt()))
}

/// Lorentzian equivalent of a single-population PL spectrum: the line that
/// [`PlSimConfig::expected_spectrum`] produces with a flat response.
pub fn equivalent_line(cfg: &PlSimConfig, t: f64, exposure_s: f64) -> Result<LorentzianParams> {
    let base = crate::spectral_model::line_params_at(&cfg.cal, t)?;
    let photons = cfg.brightness_cps * exposure_s * base.amplitude;
    Ok(LorentzianParams {
        center_nm: base.center_nm,
        fwhm_nm: base.fwhm_nm,
        amplitude: photons * cfg.grid.step_nm * 2.0 / (std::f64::consts::PI * base.fwhm_nm),
        baseline: cfg.background_cps_per_bin * exposure_s,
    })
}

/// Shot-noise-limited sensitivity `σ_T·√t` (mK/√Hz) predicted by the
/// Cramér–Rao bound at a 1 s exposure.
pub fn crb_sensitivity(cfg: &PlSimConfig) -> Result<f64> {
    let line = equivalent_line(cfg, cfg.cal.t_ref, 1.0)?;
    let (sc, _) = cramer_rao_bound(&line, &cfg.grid, cfg.ccd.readout_sigma)?;
    Ok(1e3 * sc / cfg.cal.d_center_dT.abs())
}

/// Reference linewidth for which [`crb_sensitivity`] equals `target_mK`,
/// by bisection on `[lo_nm, hi_nm]`.
pub fn derive_fwhm_for_sensitivity(
    cfg: &PlSimConfig,
    target_mK: f64,
    lo_nm: f64,
    hi_nm: f64,
) -> Result<f64> {
    let eta = |fwhm: f64| -> Result<f64> {
        let mut c = cfg.clone();
        c.cal.fwhm_ref_nm = fwhm;
        crb_sensitivity(&c)
    };
    let (mut lo, mut hi) = (lo_nm, hi_nm);
    let (flo, fhi) = (eta(lo)? - target_mK, eta(hi)? - target_mK);
    if flo.signum() == fhi.signum() {
        return Err(Error::NoSolution(format!(
            "sensitivity {target_mK} mK/√Hz not bracketed by [{lo_nm}, {hi_nm}] nm"
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if (eta(mid)? - target_mK).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
