//! Temperature-dependent forward model of the SiV zero-phonon line.
//!
//! Produces noiseless expected-count spectra for an ensemble of emitters,
//! including strain sub-ensembles and a multiplicative interference fringe
//! on the collection path.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{Spectrum, WavelengthGrid};

/// Peak-position susceptibility, nm/K.
pub const ZPL_SHIFT_NM_PER_K: f64 = 0.0124;
/// Linewidth susceptibility, nm/K.
pub const ZPL_BROADENING_NM_PER_K: f64 = 0.030;
/// Strain offset of the sub-ensembles, in kelvin-equivalent.
pub const STRAIN_OFFSET_K: f64 = 2.0;
/// Relative spread of the shift susceptibility across sub-ensembles.
pub const SUSCEPTIBILITY_SCATTER: f64 = 0.03;

/// Bulk linewidth for which the Cramér–Rao bound of the bulk pipeline
/// (10 MHz signal, 2e4 counts/s/bin background, 10-count readout) gives
/// 348.5 mK/√Hz. See `examples/derive_defaults.rs`.
pub const BULK_FWHM_REF_NM: f64 = 10.0;
/// Nanodiamond linewidth used for the PLE contrast calibration.
pub const NANODIAMOND_FWHM_REF_NM: f64 = 1.2;
/// Target PLE contrast per kelvin at the maximum-contrast wavelength.
pub const PLE_SUSCEPTIBILITY_PER_K: f64 = 0.013;
/// Quantum-efficiency slope that brings the nanodiamond max-contrast
/// susceptibility to 1.3 %/K. See `examples/derive_defaults.rs`.
pub const NANODIAMOND_QE_SLOPE_PER_K: f64 = -0.005_907_236;

/// Lorentzian line shape on a constant baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianParams {
    pub center_nm: f64,
    pub fwhm_nm: f64,
    /// Peak height above baseline, counts.
    pub amplitude: f64,
    pub baseline: f64,
}

impl LorentzianParams {
    pub fn new(center_nm: f64, fwhm_nm: f64, amplitude: f64, baseline: f64) -> Result<Self> {
        let p = Self {
            center_nm,
            fwhm_nm,
            amplitude,
            baseline,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.center_nm, self.fwhm_nm, self.amplitude, self.baseline]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::contract("Lorentzian parameters must be finite"));
        }
        if self.fwhm_nm <= 0.0 {
            return Err(Error::contract(format!("fwhm must be positive, got {}", self.fwhm_nm)));
        }
        if self.amplitude < 0.0 || self.baseline < 0.0 {
            return Err(Error::contract("amplitude and baseline must be non-negative"));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.center_nm, self.fwhm_nm, self.amplitude, self.baseline]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            center_nm: v[0],
            fwhm_nm: v[1],
            amplitude: v[2],
            baseline: v[3],
        }
    }

    /// Integrated line area in count·nm.
    pub fn area(&self) -> f64 {
        0.5 * PI * self.amplitude * self.fwhm_nm
    }
}

/// `baseline + amplitude · (Γ/2)² / ((λ−λ0)² + (Γ/2)²)`.
#[inline]
pub fn eval_lorentzian(p: &LorentzianParams, lambda_nm: f64) -> f64 {
    let h = 0.5 * p.fwhm_nm;
    let x = lambda_nm - p.center_nm;
    p.baseline + p.amplitude * h * h / (x * x + h * h)
}

/// Linear temperature dictionary for the ZPL around a reference point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoCalibration {
    pub t_ref: f64,
    pub center_ref_nm: f64,
    pub fwhm_ref_nm: f64,
    pub d_center_dT: f64,
    pub d_fwhm_dT: f64,
    /// Fractional quantum-efficiency change per kelvin.
    pub qe_slope: f64,
    pub linear_window_K: f64,
}

#[allow(non_snake_case)]
impl ThermoCalibration {
    /// Bulk CVD diamond as used for PL thermometry.
    pub fn bulk() -> Self {
        Self {
            t_ref: 295.0,
            center_ref_nm: 738.0,
            fwhm_ref_nm: BULK_FWHM_REF_NM,
            d_center_dT: ZPL_SHIFT_NM_PER_K,
            d_fwhm_dT: ZPL_BROADENING_NM_PER_K,
            qe_slope: 0.0,
            linear_window_K: 5.0,
        }
    }

    /// SiV nanodiamonds as used for PLE thermometry.
    pub fn nanodiamond() -> Self {
        Self {
            fwhm_ref_nm: NANODIAMOND_FWHM_REF_NM,
            qe_slope: NANODIAMOND_QE_SLOPE_PER_K,
            ..Self::bulk()
        }
    }

    pub fn with_window(self, linear_window_K: f64) -> Self {
        Self {
            linear_window_K,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        // The sign of d_center_dT is deliberately free here: mirrored
        // calibrations are used to probe symmetry of the PLE search.
        if self.d_center_dT == 0.0 || !self.d_center_dT.is_finite() {
            return Err(Error::contract("d_center_dT must be non-zero"));
        }
        if self.d_fwhm_dT < 0.0 {
            return Err(Error::contract("d_fwhm_dT must be non-negative"));
        }
        if !(self.linear_window_K > 0.0) {
            return Err(Error::contract("linear window must be positive"));
        }
        if !(self.fwhm_ref_nm > 0.0) {
            return Err(Error::contract("reference fwhm must be positive"));
        }
        Ok(())
    }

    pub fn check_window(&self, t: f64) -> Result<()> {
        if !t.is_finite() || (t - self.t_ref).abs() > self.linear_window_K * (1.0 + 1e-12) {
            return Err(Error::OutOfRange {
                temperature_k: t,
                t_ref_k: self.t_ref,
                window_k: self.linear_window_K,
            });
        }
        Ok(())
    }

    /// Relative quantum efficiency, unity at `t_ref`.
    pub fn quantum_efficiency(&self, t: f64) -> f64 {
        1.0 + self.qe_slope * (t - self.t_ref)
    }

    pub fn center_at(&self, t: f64) -> f64 {
        self.center_ref_nm + self.d_center_dT * (t - self.t_ref)
    }

    pub fn fwhm_at(&self, t: f64) -> f64 {
        self.fwhm_ref_nm + self.d_fwhm_dT * (t - self.t_ref)
    }
}

impl Default for ThermoCalibration {
    fn default() -> Self {
        Self::bulk()
    }
}

/// Line parameters at temperature `t` with amplitude equal to the relative
/// quantum efficiency and zero baseline.
pub fn line_params_at(cal: &ThermoCalibration, t: f64) -> Result<LorentzianParams> {
    cal.check_window(t)?;
    Ok(LorentzianParams {
        center_nm: cal.center_at(t),
        fwhm_nm: cal.fwhm_at(t),
        amplitude: cal.quantum_efficiency(t),
        baseline: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubEnsemble {
    pub center_offset_nm: f64,
    pub fwhm_scale: f64,
    pub weight: f64,
}

/// Strain-split population of emitters. Sub-ensemble `i` of `n` has its shift
/// susceptibility scaled by `1 + s·(2i/(n−1) − 1)`, spreading it linearly over
/// `[1−s, 1+s]` in list order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterEnsemble {
    pub sub_ensembles: Vec<SubEnsemble>,
    pub susceptibility_scatter: f64,
}

impl EmitterEnsemble {
    pub fn single() -> Self {
        Self {
            sub_ensembles: vec![SubEnsemble {
                center_offset_nm: 0.0,
                fwhm_scale: 1.0,
                weight: 1.0,
            }],
            susceptibility_scatter: 0.0,
        }
    }

    /// Three sub-ensembles at −2 K, 0 and +2 K equivalent strain offsets
    /// (weights ¼, ½, ¼) with ±3 % susceptibility scatter.
    pub fn strained(cal: &ThermoCalibration) -> Self {
        let off = STRAIN_OFFSET_K * cal.d_center_dT;
        let sub = |center_offset_nm, weight| SubEnsemble {
            center_offset_nm,
            fwhm_scale: 1.0,
            weight,
        };
        Self {
            sub_ensembles: vec![sub(-off, 0.25), sub(0.0, 0.5), sub(off, 0.25)],
            susceptibility_scatter: SUSCEPTIBILITY_SCATTER,
        }
    }

    /// Single population displaced by `offset_nm`.
    pub fn offset(offset_nm: f64) -> Self {
        let mut e = Self::single();
        e.sub_ensembles[0].center_offset_nm = offset_nm;
        e
    }

    pub fn validate(&self) -> Result<()> {
        if self.sub_ensembles.is_empty() {
            return Err(Error::contract("ensemble needs at least one sub-ensemble"));
        }
        if self.sub_ensembles.iter().any(|s| !(s.weight > 0.0) || !(s.fwhm_scale > 0.0)) {
            return Err(Error::contract("sub-ensemble weights and fwhm scales must be positive"));
        }
        let total: f64 = self.sub_ensembles.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("sub-ensemble weights sum to {total}, not 1")));
        }
        if !(0.0..1.0).contains(&self.susceptibility_scatter) {
            return Err(Error::contract("susceptibility scatter must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn susceptibility_factor(&self, i: usize) -> f64 {
        let n = self.sub_ensembles.len();
        if n < 2 {
            return 1.0;
        }
        1.0 + self.susceptibility_scatter * (2.0 * i as f64 / (n - 1) as f64 - 1.0)
    }
}

impl Default for EmitterEnsemble {
    fn default() -> Self {
        Self::single()
    }
}

/// Per-sub-ensemble line shapes at temperature `t`, each with unit area
/// scaled by its weight and the relative quantum efficiency.
pub fn sub_ensemble_lines(
    ensemble: &EmitterEnsemble,
    cal: &ThermoCalibration,
    t: f64,
) -> Result<Vec<LorentzianParams>> {
    ensemble.validate()?;
    let base = line_params_at(cal, t)?;
    let dt = t - cal.t_ref;
    Ok(ensemble
        .sub_ensembles
        .iter()
        .enumerate()
        .map(|(i, sub)| {
            let fwhm = base.fwhm_nm * sub.fwhm_scale;
            let area = sub.weight * base.amplitude;
            LorentzianParams {
                center_nm: cal.center_ref_nm
                    + sub.center_offset_nm
                    + cal.d_center_dT * ensemble.susceptibility_factor(i) * dt,
                fwhm_nm: fwhm,
                amplitude: area * 2.0 / (PI * fwhm),
                baseline: 0.0,
            }
        })
        .collect())
}

/// Collection-path throughput `1 + depth·sin(2πλ/period + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstrumentResponse {
    pub fringe_depth: f64,
    pub fringe_period_nm: f64,
    pub fringe_phase: f64,
}

impl InstrumentResponse {
    pub fn flat() -> Self {
        Self {
            fringe_depth: 0.0,
            fringe_period_nm: 1.0,
            fringe_phase: 0.0,
        }
    }

    pub fn fringe(depth: f64, period_nm: f64, phase: f64) -> Result<Self> {
        let r = Self {
            fringe_depth: depth,
            fringe_period_nm: period_nm,
            fringe_phase: phase,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.fringe_depth) {
            return Err(Error::contract("fringe depth must lie in [0, 1)"));
        }
        if !(self.fringe_period_nm > 0.0) {
            return Err(Error::contract("fringe period must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn factor(&self, lambda_nm: f64) -> f64 {
        1.0 + self.fringe_depth
            * (2.0 * PI * lambda_nm / self.fringe_period_nm + self.fringe_phase).sin()
    }

    pub fn factors(&self, grid: &WavelengthGrid) -> Vec<f64> {
        grid.wavelengths().map(|l| self.factor(l)).collect()
    }
}

impl Default for InstrumentResponse {
    fn default() -> Self {
        Self::flat()
    }
}

/// Noiseless ensemble spectrum. The full (untruncated) line integral equals
/// `brightness · exposure · QE(t)` counts before the fringe is applied, so
/// `brightness` is the signal count rate at `t_ref`.
pub fn synthesize_expected_spectrum(
    ensemble: &EmitterEnsemble,
    cal: &ThermoCalibration,
    t: f64,
    grid: &WavelengthGrid,
    brightness: f64,
    exposure: f64,
    resp: &InstrumentResponse,
) -> Result<Spectrum> {
    grid.validate()?;
    resp.validate()?;
    if !(brightness >= 0.0) {
        return Err(Error::contract("brightness must be non-negative"));
    }
    if !(exposure > 0.0) {
        return Err(Error::contract("exposure must be positive"));
    }
    let lines = sub_ensemble_lines(ensemble, cal, t)?;
    let photons = brightness * exposure;
    let counts = grid
        .wavelengths()
        .map(|l| {
            let signal: f64 = lines.iter().map(|p| eval_lorentzian(p, l)).sum();
            photons * grid.step_nm * signal * resp.factor(l)
        })
        .collect();
    Spectrum::new(*grid, counts, exposure)
}

/// Flat background of `rate_per_bin` counts/s in every bin, passed through the
/// same collection path.
pub fn synthesize_background(
    grid: &WavelengthGrid,
    rate_per_bin: f64,
    exposure: f64,
    resp: &InstrumentResponse,
) -> Result<Spectrum> {
    if !(rate_per_bin >= 0.0) {
        return Err(Error::contract("background rate must be non-negative"));
    }
    let counts = grid
        .wavelengths()
        .map(|l| rate_per_bin * exposure * resp.factor(l))
        .collect();
    Spectrum::new(*grid, counts, exposure)
}

/// Planck spectral radiance shape (arbitrary units) at wavelength `lambda_nm`.
pub fn planck(lambda_nm: f64, temperature_k: f64) -> f64 {
    const HC_OVER_K_NM_K: f64 = 1.438_776_877e7;
    let x = HC_OVER_K_NM_K / (lambda_nm * temperature_k);
    lambda_nm.powi(-5) / x.exp_m1()
}

/// Blackbody lamp seen through the collection path, scaled so the unfringed
/// spectrum is `mid_counts` at the grid centre.
pub fn synthesize_blackbody_reference(
    grid: &WavelengthGrid,
    lamp_temperature_k: f64,
    mid_counts: f64,
    exposure: f64,
    resp: &InstrumentResponse,
) -> Result<Spectrum> {
    if !(lamp_temperature_k > 0.0) {
        return Err(Error::contract("lamp temperature must be positive"));
    }
    let mid = 0.5 * (grid.start_nm + grid.end_nm());
    let norm = mid_counts / planck(mid, lamp_temperature_k);
    let counts = grid
        .wavelengths()
        .map(|l| norm * planck(l, lamp_temperature_k) * resp.factor(l))
        .collect();
    Spectrum::new(*grid, counts, exposure)
}
