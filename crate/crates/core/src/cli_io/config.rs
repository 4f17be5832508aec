//! Run configuration. Numeric keys must carry a unit suffix and unknown keys
//! are rejected, so a misspelt parameter never falls back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Suffixes accepted on keys holding physical quantities.
pub const UNIT_SUFFIXES: &[&str] = &[
    "_nm", "_K", "_s", "_W", "_hz", "_um", "_cps", "_cps_per_bin", "_counts", "_per_K",
    "_K_per_W", "_W_per_mK", "_frac", "_rad",
];

/// Numeric keys that are dimensionless by nature.
pub const DIMENSIONLESS_KEYS: &[&str] = &["seed", "stretch_a", "duty", "absorbance", "detrend_degree"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PlSweep,
    Precision,
    PleLockin,
    HeatMap,
    CalibrateResponse,
    Fit,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::PlSweep => "pl-sweep",
            ExperimentKind::Precision => "precision",
            ExperimentKind::PleLockin => "ple-lockin",
            ExperimentKind::HeatMap => "heat-map",
            ExperimentKind::CalibrateResponse => "calibrate-response",
            ExperimentKind::Fit => "fit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Bulk,
    Nanodiamond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitterKind {
    Lsq,
    Mcmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingKind {
    NoiseModel,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionKind {
    Apd,
    Noiseless,
}

/// PL spectrum simulation and fitting, shared by the PL experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlBlock {
    pub preset: Preset,
    pub fwhm_ref_nm: Option<f64>,
    pub linear_window_K: Option<f64>,
    pub temperature_K: f64,
    pub brightness_cps: f64,
    pub background_cps_per_bin: f64,
    pub readout_sigma_counts: f64,
    pub center_nm: f64,
    pub step_nm: f64,
    pub n_bins: usize,
    pub strained: bool,
    pub fringe_depth_frac: f64,
    pub fringe_period_nm: f64,
    pub fringe_phase_rad: f64,
    pub fitter: FitterKind,
    pub weighting: WeightingKind,
    pub n_walkers: usize,
    pub n_steps: usize,
    pub n_burn_in: usize,
    pub stretch_a: f64,
}

impl Default for PlBlock {
    fn default() -> Self {
        Self {
            preset: Preset::Bulk,
            fwhm_ref_nm: None,
            linear_window_K: None,
            temperature_K: 295.0,
            brightness_cps: crate::pl_thermometry::BULK_BRIGHTNESS_CPS,
            background_cps_per_bin: crate::pl_thermometry::BULK_BACKGROUND_CPS_PER_BIN,
            readout_sigma_counts: 10.0,
            center_nm: 738.0,
            step_nm: crate::spectrum::DEFAULT_STEP_NM,
            n_bins: crate::spectrum::DEFAULT_N_BINS,
            strained: true,
            fringe_depth_frac: 0.0,
            fringe_period_nm: 5.0,
            fringe_phase_rad: 0.0,
            fitter: FitterKind::Lsq,
            weighting: WeightingKind::NoiseModel,
            n_walkers: 32,
            n_steps: 2000,
            n_burn_in: 500,
            stretch_a: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlSweepBlock {
    pub temperatures_K: Vec<f64>,
    pub exposure_s: f64,
    pub linear_window_K: f64,
}

impl Default for PlSweepBlock {
    fn default() -> Self {
        Self {
            temperatures_K: (0..13).map(|i| 289.0 + i as f64).collect(),
            exposure_s: 1.0,
            linear_window_K: 7.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecisionBlock {
    pub times_s: Vec<f64>,
    pub n_repeats: usize,
}

impl Default for PrecisionBlock {
    fn default() -> Self {
        Self {
            times_s: vec![0.5, 1.581_138_830_084_189_8, 5.0, 15.811_388_300_841_896, 50.0],
            n_repeats: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PleBlock {
    /// Probe detuning from the line centre; the maximum-contrast wavelength
    /// is used when absent.
    pub probe_offset_nm: Option<f64>,
    pub psb_rate_cps: f64,
    pub detection: DetectionKind,
    pub dark_cps: f64,
    pub drift_frac: f64,
    pub intensity_noise_frac: f64,
    pub mod_freq_hz: f64,
    pub duty: f64,
    pub duration_s: f64,
    pub heater_power_W: f64,
    pub n_bins_per_cycle: usize,
    pub steady_state_K_per_W: f64,
    pub time_constant_s: f64,
    pub contrast_steps_K: Vec<f64>,
    pub sweep_powers_W: Vec<f64>,
    pub sweep_freqs_hz: Vec<f64>,
}

impl Default for PleBlock {
    fn default() -> Self {
        Self {
            probe_offset_nm: None,
            psb_rate_cps: crate::detector_noise::NANODIAMOND_COUNT_RATE,
            detection: DetectionKind::Apd,
            dark_cps: 50.0,
            drift_frac: 0.0,
            intensity_noise_frac: 0.0,
            mod_freq_hz: 80.0,
            duty: 0.5,
            duration_s: 10.0,
            heater_power_W: 1e-3,
            n_bins_per_cycle: 16,
            steady_state_K_per_W: 1000.0,
            time_constant_s: 2e-5,
            contrast_steps_K: vec![0.25, 0.5, 1.0, 2.0, 3.0, 4.0],
            sweep_powers_W: vec![0.5e-3, 1e-3, 1.5e-3, 2e-3],
            sweep_freqs_hz: vec![10.0, 20.0, 40.0, 80.0, 160.0, 320.0, 640.0, 1280.0, 2560.0, 5120.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatBlock {
    pub n_pads_x: usize,
    pub n_pads_y: usize,
    pub pitch_um: f64,
    pub origin_x_um: f64,
    pub origin_y_um: f64,
    pub probe_x_um: f64,
    pub probe_y_um: f64,
    pub pad_size_um: f64,
    pub pad_thickness_nm: f64,
    pub conductivity_W_per_mK: f64,
    pub absorbance: f64,
    pub spot_fwhm_um: f64,
    pub heater_power_W: f64,
    pub scan_x0_um: f64,
    pub scan_y0_um: f64,
    pub scan_step_um: f64,
    pub n_scan_x: usize,
    pub n_scan_y: usize,
    pub exclusion_radius_um: f64,
    pub noise_frac: f64,
    /// Conductivity assumed by the absorbance fit; defaults to the true one.
    pub fit_conductivity_W_per_mK: Option<f64>,
}

impl Default for HeatBlock {
    fn default() -> Self {
        use crate::heat_transport as ht;
        Self {
            n_pads_x: 9,
            n_pads_y: 9,
            pitch_um: 4.0,
            origin_x_um: -16.0,
            origin_y_um: -16.0,
            probe_x_um: 2.0,
            probe_y_um: 2.0,
            pad_size_um: ht::DEFAULT_PAD_SIZE_UM,
            pad_thickness_nm: ht::DEFAULT_PAD_THICKNESS_NM,
            conductivity_W_per_mK: ht::DEFAULT_CONDUCTIVITY,
            absorbance: ht::EXPECTED_GOLD_ABSORBANCE,
            spot_fwhm_um: ht::DEFAULT_SPOT_FWHM_UM,
            heater_power_W: 1e-3,
            scan_x0_um: -18.0,
            scan_y0_um: -18.0,
            scan_step_um: 0.25,
            n_scan_x: 145,
            n_scan_y: 145,
            exclusion_radius_um: 1.0,
            noise_frac: 0.05,
            fit_conductivity_W_per_mK: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseBlock {
    pub fringe_depth_frac: f64,
    pub fringe_period_nm: f64,
    pub fringe_phase_rad: f64,
    pub lamp_temperature_K: f64,
    pub lamp_peak_counts: f64,
    pub lamp_exposure_s: f64,
    pub spectrum_exposure_s: f64,
    pub detrend_degree: usize,
    pub n_smoothing_bins: usize,
}

impl Default for ResponseBlock {
    fn default() -> Self {
        Self {
            fringe_depth_frac: 0.1,
            fringe_period_nm: 5.0,
            fringe_phase_rad: 0.7,
            lamp_temperature_K: 3000.0,
            lamp_peak_counts: 1e6,
            lamp_exposure_s: 1.0,
            spectrum_exposure_s: 100.0,
            detrend_degree: crate::line_fitter::DEFAULT_DETREND_DEGREE,
            n_smoothing_bins: crate::line_fitter::DEFAULT_SMOOTHING_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitBlock {
    /// Spectrum CSV to fit; a spectrum is simulated from `[pl]` when absent.
    pub input_path: Option<PathBuf>,
    pub exposure_s: f64,
}

impl Default for FitBlock {
    fn default() -> Self {
        Self {
            input_path: None,
            exposure_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub pl: PlBlock,
    #[serde(default)]
    pub pl_sweep: PlSweepBlock,
    #[serde(default)]
    pub precision: PrecisionBlock,
    #[serde(default)]
    pub ple: PleBlock,
    #[serde(default)]
    pub heat: HeatBlock,
    #[serde(default)]
    pub response: ResponseBlock,
    #[serde(default)]
    pub fit: FitBlock,
}

impl RunConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment: Some(experiment),
            seed: 0,
            output_dir: None,
            pl: PlBlock::default(),
            pl_sweep: PlSweepBlock::default(),
            precision: PrecisionBlock::default(),
            ple: PleBlock::default(),
            heat: HeatBlock::default(),
            response: ResponseBlock::default(),
            fit: FitBlock::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        check_units(&value, "")?;
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn is_numeric(v: &toml::Value) -> bool {
    match v {
        toml::Value::Integer(_) | toml::Value::Float(_) => true,
        toml::Value::Array(items) => !items.is_empty() && items.iter().all(is_numeric),
        _ => false,
    }
}

/// True when a numeric key names its unit or is dimensionless by design.
pub fn key_has_unit(key: &str) -> bool {
    key.starts_with("n_")
        || DIMENSIONLESS_KEYS.contains(&key)
        || UNIT_SUFFIXES.iter().any(|s| key.ends_with(s))
}

fn check_units(table: &toml::Table, prefix: &str) -> Result<()> {
    for (key, value) in table {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match value {
            toml::Value::Table(t) => check_units(t, &path)?,
            v if is_numeric(v) && !key_has_unit(key) => {
                return Err(Error::Config(format!(
                    "key `{path}` holds a number but has no unit suffix (one of {})",
                    UNIT_SUFFIXES.join(", ")
                )));
            }
            _ => {}
        }
    }
    Ok(())
}
