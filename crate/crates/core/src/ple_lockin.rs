//! PLE thermometry: contrast under near-resonant excitation, the probe
//! wavelength of maximum contrast, and a square-wave lock-in on heater power.

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::detector_noise::{sample_apd_with, ApdModel};
use crate::error::{Error, Result};
use crate::seed;
use crate::spectral_model::ThermoCalibration;
use crate::stats;

/// Intensities below this are treated as a probe sitting on no signal.
const MIN_INTENSITY: f64 = 1e-12;

/// Relative spread of the line-shift coefficient between nanodiamonds.
pub const NANODIAMOND_SHIFT_SPREAD: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detection {
    /// Expected counts, no sampling.
    Noiseless,
    Apd(ApdModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PleConfig {
    pub probe_wavelength_nm: f64,
    /// PSB count rate at `t_ref`, counts/s.
    pub psb_collection_rate: f64,
    pub below_saturation: bool,
    pub detection: Detection,
    /// Linear intensity drift: the rate runs from `1 − drift_frac` to
    /// `1 + drift_frac` times nominal across the trace.
    pub drift_frac: f64,
    /// Per-bin multiplicative Gaussian fluorescence noise (standard deviation).
    pub intensity_noise_frac: f64,
}

impl PleConfig {
    pub fn new(probe_wavelength_nm: f64, psb_collection_rate: f64) -> Self {
        Self {
            probe_wavelength_nm,
            psb_collection_rate,
            below_saturation: true,
            detection: Detection::Apd(ApdModel::default()),
            drift_frac: 0.0,
            intensity_noise_frac: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.below_saturation {
            return Err(Error::contract("PLE model is only valid below saturation"));
        }
        if !(self.psb_collection_rate > 0.0) {
            return Err(Error::contract("PSB collection rate must be positive"));
        }
        if !self.probe_wavelength_nm.is_finite() {
            return Err(Error::contract("probe wavelength must be finite"));
        }
        if !(0.0..1.0).contains(&self.drift_frac) {
            return Err(Error::contract("drift fraction must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.intensity_noise_frac) {
            return Err(Error::contract("intensity noise fraction must lie in [0, 1)"));
        }
        if let Detection::Apd(apd) = &self.detection {
            apd.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockInConfig {
    pub mod_freq_hz: f64,
    /// Fraction of each cycle with the heater on.
    pub duty: f64,
    pub duration_s: f64,
    pub heater_power_W: f64,
    pub bin_duration_s: f64,
}

impl Default for LockInConfig {
    fn default() -> Self {
        Self {
            mod_freq_hz: 80.0,
            duty: 0.5,
            duration_s: 10.0,
            heater_power_W: 1e-3,
            bin_duration_s: 1.0 / (16.0 * 80.0),
        }
    }
}

impl LockInConfig {
    /// Same modulation with `bins_per_cycle` bins in each period.
    pub fn at_frequency(self, mod_freq_hz: f64, bins_per_cycle: usize) -> Self {
        Self {
            mod_freq_hz,
            bin_duration_s: 1.0 / (bins_per_cycle as f64 * mod_freq_hz),
            ..self
        }
    }

    /// Bins per cycle and heated bins per cycle.
    fn layout(&self) -> Result<(usize, usize)> {
        if !(self.mod_freq_hz > 0.0) {
            return Err(Error::contract("modulation frequency must be positive"));
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(Error::contract("duty must lie in (0, 1)"));
        }
        if !(self.bin_duration_s > 0.0) {
            return Err(Error::contract("bin duration must be positive"));
        }
        if !(self.heater_power_W >= 0.0) {
            return Err(Error::contract("heater power must be non-negative"));
        }
        let per_cycle = 1.0 / (self.mod_freq_hz * self.bin_duration_s);
        let n = per_cycle.round();
        if (per_cycle - n).abs() > 1e-6 * n {
            return Err(Error::contract(format!(
                "bins do not align with the modulation period ({per_cycle} bins per cycle)"
            )));
        }
        let n = n as usize;
        if n < 10 {
            return Err(Error::contract("need at least 10 bins per modulation cycle"));
        }
        let on = self.duty * n as f64;
        let n_on = on.round();
        if (on - n_on).abs() > 1e-6 * n as f64 || n_on < 1.0 || n_on as usize >= n {
            return Err(Error::contract(format!(
                "duty {} does not fall on a bin edge with {n} bins per cycle",
                self.duty
            )));
        }
        if self.duration_s * self.mod_freq_hz < 10.0 {
            return Err(Error::contract("trace must span at least 10 modulation cycles"));
        }
        Ok((n, n_on as usize))
    }
}

/// First-order thermal response of the probed spot to heater power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalResponseModel {
    pub steady_state_dT_per_W: f64,
    pub time_constant_s: f64,
}

impl Default for ThermalResponseModel {
    fn default() -> Self {
        Self {
            steady_state_dT_per_W: 1000.0,
            time_constant_s: 1e-4,
        }
    }
}

impl ThermalResponseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.steady_state_dT_per_W > 0.0 && self.time_constant_s > 0.0) {
            return Err(Error::contract("thermal gain and time constant must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockInTrace {
    pub bin_counts: Vec<f64>,
    pub bin_duration_s: f64,
    /// Heater on (`true`) or off for each bin.
    pub reference: Vec<bool>,
    /// Bin-averaged temperature rise above the base temperature, K.
    pub delta_T_K: Vec<f64>,
}

/// Relative PLE intensity: `QE(t)` times a unit-peak Lorentzian at `λ_p`.
pub fn ple_intensity(lambda_p: f64, t: f64, cal: &ThermoCalibration, cfg: &PleConfig) -> Result<f64> {
    cfg.validate()?;
    cal.validate()?;
    cal.check_window(t)?;
    Ok(intensity_unchecked(lambda_p, t, cal))
}

fn intensity_unchecked(lambda_p: f64, t: f64, cal: &ThermoCalibration) -> f64 {
    let h = 0.5 * cal.fwhm_at(t);
    let x = lambda_p - cal.center_at(t);
    cal.quantum_efficiency(t) * h * h / (x * x + h * h)
}

/// `∂I/∂T` at `(λ_p, t)`, analytic.
fn intensity_slope(lambda_p: f64, t: f64, cal: &ThermoCalibration) -> f64 {
    let h = 0.5 * cal.fwhm_at(t);
    let x = lambda_p - cal.center_at(t);
    let d = x * x + h * h;
    let l = h * h / d;
    let dl_dc = 2.0 * h * h * x / (d * d);
    let dl_dh = 2.0 * h * x * x / (d * d);
    cal.qe_slope * l
        + cal.quantum_efficiency(t) * (dl_dc * cal.d_center_dT + dl_dh * 0.5 * cal.d_fwhm_dT)
}

/// Fractional intensity drop `(I(t0) − I(t0 + dT)) / I(t0)`.
pub fn contrast(
    lambda_p: f64,
    t0: f64,
    dT: f64,
    cal: &ThermoCalibration,
    cfg: &PleConfig,
) -> Result<f64> {
    let i0 = ple_intensity(lambda_p, t0, cal, cfg)?;
    let i1 = ple_intensity(lambda_p, t0 + dT, cal, cfg)?;
    if !(i0 > MIN_INTENSITY) {
        return Err(Error::DegenerateProbe);
    }
    Ok((i0 - i1) / i0)
}

/// Probe wavelength maximising the intensity change per kelvin, searched on
/// the side of the line that the thermal shift moves away from.
pub fn max_contrast_wavelength(cal: &ThermoCalibration, cfg: &PleConfig, t0: f64) -> Result<f64> {
    cfg.validate()?;
    cal.validate()?;
    cal.check_window(t0)?;
    let c = cal.center_at(t0);
    let side = -cal.d_center_dT.signum();
    let span = 5.0 * cal.fwhm_at(t0);
    let objective = |l: f64| intensity_slope(l, t0, cal).abs();
    let n = 2000;
    let at = |k: usize| c + side * span * k as f64 / n as f64;
    let best = (0..=n)
        .max_by(|&a, &b| objective(at(a)).total_cmp(&objective(at(b))))
        .unwrap_or(0);
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(n)));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 * c.abs() {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = objective(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = objective(x1);
        }
    }
    Ok(0.5 * (a + b))
}

/// Contributions to the contrast per kelvin at `dT → 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastBreakdown {
    pub shift_per_K: f64,
    pub broadening_per_K: f64,
    pub quantum_efficiency_per_K: f64,
}

impl ContrastBreakdown {
    pub fn total_per_K(&self) -> f64 {
        self.shift_per_K + self.broadening_per_K + self.quantum_efficiency_per_K
    }
}

pub fn contrast_breakdown(
    lambda_p: f64,
    t0: f64,
    cal: &ThermoCalibration,
    cfg: &PleConfig,
) -> Result<ContrastBreakdown> {
    let i0 = ple_intensity(lambda_p, t0, cal, cfg)?;
    if !(i0 > MIN_INTENSITY) {
        return Err(Error::DegenerateProbe);
    }
    let only = |d_center_dT: f64, d_fwhm_dT: f64, qe_slope: f64| {
        let c = ThermoCalibration {
            d_center_dT,
            d_fwhm_dT,
            qe_slope,
            ..*cal
        };
        // With the other terms zeroed the intensity at t0 is unchanged.
        -intensity_slope(lambda_p, t0, &c) / i0
    };
    Ok(ContrastBreakdown {
        shift_per_K: only(cal.d_center_dT, 0.0, 0.0),
        broadening_per_K: only(cal.d_center_dT, cal.d_fwhm_dT, 0.0) - only(cal.d_center_dT, 0.0, 0.0),
        quantum_efficiency_per_K: only(cal.d_center_dT, 0.0, cal.qe_slope)
            - only(cal.d_center_dT, 0.0, 0.0),
    })
}

/// `qe_slope` for which the contrast per kelvin at the maximum-contrast
/// wavelength equals `target_per_K` for a step of `dT`.
pub fn calibrate_qe_slope(
    cal: &ThermoCalibration,
    cfg: &PleConfig,
    target_per_K: f64,
    dT: f64,
) -> Result<f64> {
    let susceptibility = |qe: f64| -> Result<f64> {
        let c = ThermoCalibration { qe_slope: qe, ..*cal };
        let lp = max_contrast_wavelength(&c, cfg, c.t_ref)?;
        Ok(contrast(lp, c.t_ref, dT, &c, cfg)? / dT)
    };
    let (mut lo, mut hi) = (-0.05, 0.05);
    let f_lo = susceptibility(lo)? - target_per_K;
    let f_hi = susceptibility(hi)? - target_per_K;
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSolution(format!(
            "susceptibility {target_per_K}/K is not reachable by a QE slope in [-0.05, 0.05]/K"
        )));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if (susceptibility(mid)? - target_per_K).signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exact bin average of a first-order response relaxing from `t_start` toward
/// `target` over one bin, and the value at the end of the bin.
fn relax_bin(t_start: f64, target: f64, bin: f64, tau: f64) -> (f64, f64) {
    let r = bin / tau;
    let decay = (-r).exp();
    let avg = target + (t_start - target) * (-(-r).exp_m1()) / r;
    (avg, target + (t_start - target) * decay)
}

/// Photon-count trace under square-wave heating. The heater is on for the
/// first `duty` of each cycle; the thermal state starts in its periodic
/// steady state. The base temperature is the calibration's `t_ref`.
pub fn simulate_lockin_trace(
    ple: &PleConfig,
    lock: &LockInConfig,
    thermal: &ThermalResponseModel,
    cal: &ThermoCalibration,
    seed: u64,
) -> Result<LockInTrace> {
    ple.validate()?;
    thermal.validate()?;
    cal.validate()?;
    let (per_cycle, n_on) = lock.layout()?;
    let n_bins = (lock.duration_s / lock.bin_duration_s + 1e-9).floor() as usize;
    let bin = lock.bin_duration_s;
    let tau = thermal.time_constant_s;
    let heated = thermal.steady_state_dT_per_W * lock.heater_power_W;
    cal.check_window(cal.t_ref + heated)?;

    // Periodic steady state: iterate whole cycles until the start converges.
    let mut state = 0.0;
    for _ in 0..10_000 {
        let before = state;
        for k in 0..per_cycle {
            let target = if k < n_on { heated } else { 0.0 };
            state = relax_bin(state, target, bin, tau).1;
        }
        if (state - before).abs() <= 1e-15 * heated.max(1.0) {
            break;
        }
    }

    let i_ref = intensity_unchecked(ple.probe_wavelength_nm, cal.t_ref, cal);
    if !(i_ref > MIN_INTENSITY) {
        return Err(Error::DegenerateProbe);
    }
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, 1.0).map_err(|e| Error::contract(e.to_string()))?;
    let mut bin_counts = Vec::with_capacity(n_bins);
    let mut reference = Vec::with_capacity(n_bins);
    let mut delta_T_K = Vec::with_capacity(n_bins);
    for k in 0..n_bins {
        let on = k % per_cycle < n_on;
        let (avg, end) = relax_bin(state, if on { heated } else { 0.0 }, bin, tau);
        state = end;
        let rel = intensity_unchecked(ple.probe_wavelength_nm, cal.t_ref + avg, cal) / i_ref;
        let progress = if n_bins > 1 { k as f64 / (n_bins - 1) as f64 } else { 0.5 };
        let mut rate = ple.psb_collection_rate * rel * (1.0 + ple.drift_frac * (2.0 * progress - 1.0));
        if ple.intensity_noise_frac > 0.0 {
            let g: f64 = noise.sample(&mut rng);
            rate = (rate * (1.0 + ple.intensity_noise_frac * g)).max(0.0);
        }
        let counts = match &ple.detection {
            Detection::Noiseless => rate * bin,
            Detection::Apd(apd) => sample_apd_with(rate, apd, bin, &mut rng)? as f64,
        };
        bin_counts.push(counts);
        reference.push(on);
        delta_T_K.push(avg);
    }
    Ok(LockInTrace {
        bin_counts,
        bin_duration_s: bin,
        reference,
        delta_T_K,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demodulated {
    pub contrast: f64,
    pub sigma: f64,
    pub n_cycles: usize,
}

/// Square-wave demodulation. A cycle runs from one off→on reference edge to
/// the next; partial cycles at either end are discarded.
pub fn demodulate(trace: &LockInTrace) -> Result<Demodulated> {
    let n = trace.bin_counts.len();
    if trace.reference.len() != n {
        return Err(Error::contract("reference and counts differ in length"));
    }
    if !(trace.bin_duration_s > 0.0) {
        return Err(Error::contract("bin duration must be positive"));
    }
    let edges: Vec<usize> = (0..n)
        .filter(|&k| trace.reference[k] && (k == 0 || !trace.reference[k - 1]))
        .collect();
    if edges.len() < 11 {
        return Err(Error::contract(format!(
            "need at least 10 full modulation cycles, found {}",
            edges.len().saturating_sub(1)
        )));
    }
    let mut on_sum = 0.0;
    let mut off_sum = 0.0;
    let mut on_bins = 0usize;
    let mut off_bins = 0usize;
    let mut per_cycle = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        let (mut on, mut off, mut n_on, mut n_off) = (0.0, 0.0, 0usize, 0usize);
        for k in w[0]..w[1] {
            if trace.reference[k] {
                on += trace.bin_counts[k];
                n_on += 1;
            } else {
                off += trace.bin_counts[k];
                n_off += 1;
            }
        }
        if n_off == 0 {
            return Err(Error::contract("reference has a cycle with no off phase"));
        }
        on_sum += on;
        off_sum += off;
        on_bins += n_on;
        off_bins += n_off;
        let (mon, moff) = (on / n_on as f64, off / n_off as f64);
        per_cycle.push(if moff > 0.0 { (moff - mon) / moff } else { 0.0 });
    }
    let mean_on = on_sum / on_bins as f64;
    let mean_off = off_sum / off_bins as f64;
    if !(mean_off > 0.0) {
        return Err(Error::DegenerateProbe);
    }
    Ok(Demodulated {
        contrast: (mean_off - mean_on) / mean_off,
        sigma: stats::std_dev(&per_cycle) / (per_cycle.len() as f64).sqrt(),
        n_cycles: per_cycle.len(),
    })
}

/// Contrast susceptibility from separately measured slopes against heater
/// power: `(ΔI/I₀/ΔP) · (dλ/dT) / (Δλ/ΔP)`.
pub fn susceptibility_chain(dI_per_Ph: f64, dLambda_per_Ph: f64, d_center_dT: f64) -> Result<f64> {
    if dLambda_per_Ph == 0.0 || !dLambda_per_Ph.is_finite() {
        return Err(Error::contract("line shift per heater power must be non-zero"));
    }
    Ok(dI_per_Ph * d_center_dT / dLambda_per_Ph)
}

/// Mean-normalised two-colour signal `2(I_b − I_r)/(I_b + I_r)` at `t0 + dT`.
pub fn two_sided_contrast(
    lambda_red: f64,
    lambda_blue: f64,
    t0: f64,
    dT: f64,
    cal: &ThermoCalibration,
    cfg: &PleConfig,
) -> Result<f64> {
    cal.validate()?;
    cal.check_window(t0)?;
    let c = cal.center_at(t0);
    if !(lambda_red > c && c > lambda_blue) {
        return Err(Error::contract(format!(
            "need λ_red > {c} nm > λ_blue, got red {lambda_red} and blue {lambda_blue}"
        )));
    }
    let t = t0 + dT;
    let ib = ple_intensity(lambda_blue, t, cal, cfg)?;
    let ir = ple_intensity(lambda_red, t, cal, cfg)?;
    if !(ib + ir > MIN_INTENSITY) {
        return Err(Error::DegenerateProbe);
    }
    Ok(2.0 * (ib - ir) / (ib + ir))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSweepPoint {
    pub heater_power_W: f64,
    pub contrast: f64,
    pub sigma: f64,
    /// Steady-state ZPL shift under continuous heating, nm.
    pub line_shift_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSweep {
    pub points: Vec<PowerSweepPoint>,
    pub dI_per_Ph: f64,
    pub dLambda_per_Ph: f64,
    pub susceptibility_per_K: f64,
}

/// Lock-in contrast and line shift at each heater power, and the resulting
/// susceptibility through [`susceptibility_chain`]. Slopes are fitted through
/// the origin-free regression of the sweep.
pub fn power_sweep(
    ple: &PleConfig,
    lock: &LockInConfig,
    thermal: &ThermalResponseModel,
    cal: &ThermoCalibration,
    powers_W: &[f64],
    seed: u64,
) -> Result<PowerSweep> {
    if powers_W.len() < 2 {
        return Err(Error::contract("a power sweep needs at least two powers"));
    }
    let points = powers_W
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let cfg = LockInConfig {
                heater_power_W: p,
                ..*lock
            };
            let d = demodulate(&simulate_lockin_trace(ple, &cfg, thermal, cal, seed::derive(seed, i as u64))?)?;
            Ok(PowerSweepPoint {
                heater_power_W: p,
                contrast: d.contrast,
                sigma: d.sigma,
                line_shift_nm: cal.d_center_dT * thermal.steady_state_dT_per_W * p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let p: Vec<f64> = points.iter().map(|q| q.heater_power_W).collect();
    let di = stats::linear_regression(&p, &points.iter().map(|q| q.contrast).collect::<Vec<_>>()).slope;
    let dl = stats::linear_regression(&p, &points.iter().map(|q| q.line_shift_nm).collect::<Vec<_>>()).slope;
    Ok(PowerSweep {
        susceptibility_per_K: susceptibility_chain(di, dl, cal.d_center_dT)?,
        dI_per_Ph: di,
        dLambda_per_Ph: dl,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPoint {
    pub mod_freq_hz: f64,
    /// Demodulated contrast divided by the steady-state temperature rise, 1/K.
    pub susceptibility_per_K: f64,
    pub sigma_per_K: f64,
}

/// Recovered susceptibility against modulation frequency at fixed bins per
/// cycle. Each point integrates `n_cycles` full modulation cycles.
#[allow(clippy::too_many_arguments)]
pub fn frequency_sweep(
    ple: &PleConfig,
    lock: &LockInConfig,
    thermal: &ThermalResponseModel,
    cal: &ThermoCalibration,
    freqs_hz: &[f64],
    bins_per_cycle: usize,
    n_cycles: usize,
    seed: u64,
) -> Result<Vec<FrequencyPoint>> {
    let heated = thermal.steady_state_dT_per_W * lock.heater_power_W;
    if !(heated > 0.0) {
        return Err(Error::contract("frequency sweep needs a non-zero heater power"));
    }
    freqs_hz
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let cfg = LockInConfig {
                duration_s: n_cycles as f64 / f,
                ..lock.at_frequency(f, bins_per_cycle)
            };
            let d = demodulate(&simulate_lockin_trace(ple, &cfg, thermal, cal, seed::derive(seed, i as u64))?)?;
            Ok(FrequencyPoint {
                mod_freq_hz: f,
                susceptibility_per_K: d.contrast / heated,
                sigma_per_K: d.sigma / heated,
            })
        })
        .collect()
}

/// Maximum-contrast susceptibilities of `n` nanodiamonds whose shift
/// coefficients scatter by [`NANODIAMOND_SHIFT_SPREAD`].
pub fn nanodiamond_susceptibilities(
    cal: &ThermoCalibration,
    cfg: &PleConfig,
    n: usize,
    dT: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = seed::rng(seed);
    (0..n)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            let c = ThermoCalibration {
                d_center_dT: cal.d_center_dT * (1.0 + NANODIAMOND_SHIFT_SPREAD * g),
                ..*cal
            };
            let lp = max_contrast_wavelength(&c, cfg, c.t_ref)?;
            Ok(contrast(lp, c.t_ref, dT, &c, cfg)? / dT)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn nd() -> (ThermoCalibration, PleConfig) {
        let cal = ThermoCalibration::nanodiamond();
        let cfg = PleConfig::new(cal.center_ref_nm - 0.2, 3e5);
        (cal, cfg)
    }

    fn pure_shift() -> ThermoCalibration {
        ThermoCalibration {
            qe_slope: 0.0,
            d_fwhm_dT: 0.0,
            ..ThermoCalibration::nanodiamond()
        }
    }

    #[test]
    fn on_resonance_unit_intensity() {
        let (_, cfg) = nd();
        let cal = pure_shift();
        for t in [292.0, 295.0, 298.5] {
            let i = ple_intensity(cal.center_at(t), t, &cal, &cfg).unwrap();
            assert_relative_eq!(i, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn blue_probe_dims_on_heating() {
        let (cal, cfg) = nd();
        let lp = cal.center_ref_nm - 0.4;
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let i = ple_intensity(lp, 291.0 + 0.4 * k as f64, &cal, &cfg).unwrap();
            assert!(i < prev);
            prev = i;
        }
    }

    #[test]
    fn saturation_and_window_guarded() {
        let (cal, mut cfg) = nd();
        assert!(ple_intensity(738.0, 310.0, &cal, &cfg).is_err());
        cfg.below_saturation = false;
        assert!(matches!(ple_intensity(738.0, 295.0, &cal, &cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn calibrated_susceptibility() {
        let (cal, cfg) = nd();
        let lp = max_contrast_wavelength(&cal, &cfg, 295.0).unwrap();
        assert_eq!(contrast(lp, 295.0, 0.0, &cal, &cfg).unwrap(), 0.0);
        for dT in [0.25, 0.5, 1.0, 2.0, 3.0, 4.0] {
            let s = contrast(lp, 295.0, dT, &cal, &cfg).unwrap() / dT;
            assert!((s - 0.013).abs() <= 0.001, "dT {dT}: {s}");
        }
        let one = contrast(lp, 295.0, 1.0, &cal, &cfg).unwrap();
        let two = contrast(lp, 295.0, 2.0, &cal, &cfg).unwrap();
        assert!((two / (2.0 * one) - 1.0).abs() < 0.05);
    }

    #[test]
    fn shift_dominates_contrast() {
        let (cal, cfg) = nd();
        let lp = max_contrast_wavelength(&cal, &cfg, 295.0).unwrap();
        let b = contrast_breakdown(lp, 295.0, &cal, &cfg).unwrap();
        assert!(b.shift_per_K > 0.5 * b.total_per_K(), "{b:?}");
        let direct = (contrast(lp, 295.0, 1e-4, &cal, &cfg).unwrap()) / 1e-4;
        assert!((b.total_per_K() - direct).abs() < 1e-5);
    }

    #[test]
    fn stored_qe_slope_reproduces_calibration() {
        let (cal, cfg) = nd();
        let q = calibrate_qe_slope(&cal, &cfg, 0.013, 1.0).unwrap();
        assert!((q - cal.qe_slope).abs() < 1e-6, "{q}");
    }

    #[test]
    fn pure_shift_optimum_is_inflection() {
        let (_, cfg) = nd();
        let cal = pure_shift();
        let lp = max_contrast_wavelength(&cal, &cfg, 295.0).unwrap();
        let expected = cal.center_ref_nm - cal.fwhm_ref_nm / (2.0 * 3f64.sqrt());
        assert!((lp - expected).abs() < 1e-7, "{lp} vs {expected}");
    }

    #[test]
    fn qe_droop_pulls_optimum_inward() {
        let (_, cfg) = nd();
        let pure = pure_shift();
        let droop = ThermoCalibration { qe_slope: -0.005, ..pure };
        let a = max_contrast_wavelength(&pure, &cfg, 295.0).unwrap();
        let b = max_contrast_wavelength(&droop, &cfg, 295.0).unwrap();
        assert!(b > a && b < pure.center_ref_nm);
    }

    #[test]
    fn mirrored_calibration_reflects_optimum() {
        let (cal, cfg) = nd();
        let mirror = ThermoCalibration { d_center_dT: -cal.d_center_dT, ..cal };
        let a = max_contrast_wavelength(&cal, &cfg, 295.0).unwrap();
        let b = max_contrast_wavelength(&mirror, &cfg, 295.0).unwrap();
        assert!((a + b - 2.0 * cal.center_ref_nm).abs() < 1e-7);
    }

    #[test]
    fn antisymmetric_contrast_for_pure_shift() {
        let (_, cfg) = nd();
        let cal = ThermoCalibration { qe_slope: 0.0, ..ThermoCalibration::nanodiamond() };
        let lp = cal.center_ref_nm - 0.3;
        for dT in [0.05, 0.1, 0.2, 0.5] {
            let up = contrast(lp, 295.0, dT, &cal, &cfg).unwrap();
            let dn = contrast(lp, 295.0, -dT, &cal, &cfg).unwrap();
            assert!((up + dn).abs() < 0.1 * dT * dT, "dT {dT}: {up} {dn}");
        }
    }

    #[test]
    fn chain_algebra() {
        assert_eq!(susceptibility_chain(0.7, 0.0124, 0.0124).unwrap(), 0.7);
        assert!(susceptibility_chain(0.7, 0.0, 0.0124).is_err());
    }

    #[test]
    fn two_sided_symmetry_and_scale() {
        let (_, cfg) = nd();
        let cal = pure_shift();
        let d = cal.fwhm_ref_nm / (2.0 * 3f64.sqrt());
        let (r, b) = (cal.center_ref_nm + d, cal.center_ref_nm - d);
        assert_eq!(two_sided_contrast(r, b, 295.0, 0.0, &cal, &cfg).unwrap(), 0.0);
        assert!(two_sided_contrast(b, r, 295.0, 0.0, &cal, &cfg).is_err());
        // A common intensity factor cancels exactly.
        let bright = PleConfig { psb_collection_rate: 7.0 * cfg.psb_collection_rate, ..cfg };
        for dT in [0.3, 1.0] {
            assert_eq!(
                two_sided_contrast(r, b, 295.0, dT, &cal, &cfg).unwrap(),
                two_sided_contrast(r, b, 295.0, dT, &cal, &bright).unwrap()
            );
        }
    }

    #[test]
    fn two_sided_doubles_single_sided_slope() {
        let (_, cfg) = nd();
        let cal = pure_shift();
        let d = cal.fwhm_ref_nm / (2.0 * 3f64.sqrt());
        let (r, b) = (cal.center_ref_nm + d, cal.center_ref_nm - d);
        let h = 1e-4;
        let two = -two_sided_contrast(r, b, 295.0, h, &cal, &cfg).unwrap() / h;
        let one = contrast(b, 295.0, h, &cal, &cfg).unwrap() / h;
        // At x = −h/√3: |∂L/∂λ0| = 3√3/(8h) and L = 3/4.
        let hw = 0.5 * cal.fwhm_ref_nm;
        let analytic = 3.0 * 3f64.sqrt() / (8.0 * hw) / 0.75 * cal.d_center_dT;
        assert!((one / analytic - 1.0).abs() < 1e-3, "{one} {analytic}");
        assert!((two / one - 2.0).abs() < 0.01, "{two} {one}");
    }

    #[test]
    fn noiseless_two_level_trace() {
        let trace = LockInTrace {
            bin_counts: (0..400).map(|k| if k % 20 < 10 { 98.0 } else { 100.0 }).collect(),
            bin_duration_s: 1e-3,
            reference: (0..400).map(|k| k % 20 < 10).collect(),
            delta_T_K: vec![0.0; 400],
        };
        let d = demodulate(&trace).unwrap();
        assert_relative_eq!(d.contrast, 0.02, epsilon = 1e-15);
        assert_eq!(d.n_cycles, 19);
    }

    #[test]
    fn too_few_cycles_rejected() {
        let trace = LockInTrace {
            bin_counts: vec![1.0; 100],
            bin_duration_s: 1e-3,
            reference: (0..100).map(|k| k % 20 < 10).collect(),
            delta_T_K: vec![0.0; 100],
        };
        assert!(matches!(demodulate(&trace), Err(Error::Contract(_))));
    }

    #[test]
    fn misaligned_bins_rejected() {
        let (cal, mut cfg) = nd();
        cfg.detection = Detection::Noiseless;
        let lock = LockInConfig { bin_duration_s: 1.0 / (80.0 * 15.5), ..Default::default() };
        let th = ThermalResponseModel::default();
        assert!(matches!(simulate_lockin_trace(&cfg, &lock, &th, &cal, 0), Err(Error::Contract(_))));
        let lock = LockInConfig { duty: 0.33, ..Default::default() };
        assert!(simulate_lockin_trace(&cfg, &lock, &th, &cal, 0).is_err());
    }

    #[test]
    fn instantaneous_response_is_two_level() {
        let (cal, mut cfg) = nd();
        cfg.detection = Detection::Noiseless;
        let lock = LockInConfig { duration_s: 0.5, ..Default::default() };
        let th = ThermalResponseModel { time_constant_s: 1e-18, ..Default::default() };
        let tr = simulate_lockin_trace(&cfg, &lock, &th, &cal, 0).unwrap();
        let on: Vec<f64> = tr.bin_counts.iter().zip(&tr.reference).filter(|p| *p.1).map(|p| *p.0).collect();
        let off: Vec<f64> = tr.bin_counts.iter().zip(&tr.reference).filter(|p| !*p.1).map(|p| *p.0).collect();
        assert!(on.iter().all(|&c| (c - on[0]).abs() < 1e-9 * on[0]));
        assert!(off.iter().all(|&c| (c - off[0]).abs() < 1e-9 * off[0]));
        assert!(on[0] < off[0]);
    }

    #[test]
    fn noiseless_demodulation_unbiased_for_any_duty() {
        let (cal, mut cfg) = nd();
        cfg.detection = Detection::Noiseless;
        cfg.probe_wavelength_nm = max_contrast_wavelength(&cal, &cfg, 295.0).unwrap();
        let th = ThermalResponseModel { time_constant_s: 1e-18, ..Default::default() };
        let want = contrast(cfg.probe_wavelength_nm, 295.0, 1.0, &cal, &cfg).unwrap();
        for duty in [0.25, 0.5, 0.75] {
            let lock = LockInConfig { duty, duration_s: 0.5, ..Default::default() };
            let d = demodulate(&simulate_lockin_trace(&cfg, &lock, &th, &cal, 0).unwrap()).unwrap();
            assert!((d.contrast - want).abs() < 1e-12, "duty {duty}: {} vs {want}", d.contrast);
        }
    }

    #[test]
    fn relax_bin_limits() {
        let (avg, end) = relax_bin(0.0, 1.0, 1.0, 1e-9);
        assert!((avg - 1.0).abs() < 1e-8 && (end - 1.0).abs() < 1e-12);
        let (avg, end) = relax_bin(0.0, 1.0, 1e-9, 1.0);
        assert!(avg < 1e-8 && end < 1e-8);
    }
}
