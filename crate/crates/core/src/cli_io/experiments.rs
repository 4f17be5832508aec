//! The runnable experiments. Each is a pure function of the configuration.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::*;
use super::spectrum_io::{import_spectrum, spectrum_to_csv};
use super::table::Table;
use crate::detector_noise::{sample_ccd_spectrum, ApdModel, CcdModel};
use crate::error::{Error, Result};
use crate::heat_transport::{
    fit_absorbance, scan_heat_map, steady_state_delta_T, HeatObservation, HeatScene, HeaterGrid,
};
use crate::line_fitter::{
    estimate_response_blackbody, estimate_response_residual, initial_guess,
    relative_rms_disagreement, rms_difference, fit_least_squares, LsqOptions, ResponseEstimate,
    SamplerConfig, Weighting,
};
use crate::pl_thermometry::{
    crb_sensitivity, measure_temperature, precision_vs_time, FitterChoice, PlSimConfig,
};
use crate::ple_lockin::{
    contrast, contrast_breakdown, demodulate, frequency_sweep, max_contrast_wavelength,
    power_sweep, simulate_lockin_trace, Detection, LockInConfig, PleConfig, ThermalResponseModel,
};
use crate::seed;
use crate::spectral_model::{
    synthesize_blackbody_reference, EmitterEnsemble, InstrumentResponse, ThermoCalibration,
    PLE_SUSCEPTIBILITY_PER_K,
};
use crate::spectrum::{Spectrum, WavelengthGrid};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Tables, scalar results and checks of one experiment, plus any extra
/// files as `(name, contents)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub files: Vec<(String, String)>,
}

impl ExperimentOutput {
    fn value(&mut self, key: &str, v: f64) {
        self.summary.insert(key.to_string(), v);
    }
}

pub fn calibration(b: &PlBlock) -> Result<ThermoCalibration> {
    let mut cal = match b.preset {
        Preset::Bulk => ThermoCalibration::bulk(),
        Preset::Nanodiamond => ThermoCalibration::nanodiamond(),
    };
    if let Some(f) = b.fwhm_ref_nm {
        cal.fwhm_ref_nm = f;
    }
    if let Some(w) = b.linear_window_K {
        cal.linear_window_K = w;
    }
    cal.validate()?;
    Ok(cal)
}

pub fn pl_sim(b: &PlBlock) -> Result<PlSimConfig> {
    let cal = calibration(b)?;
    let grid = WavelengthGrid::centered(b.center_nm, b.step_nm, b.n_bins)?;
    let response = if b.fringe_depth_frac > 0.0 {
        InstrumentResponse::fringe(b.fringe_depth_frac, b.fringe_period_nm, b.fringe_phase_rad)?
    } else {
        InstrumentResponse::flat()
    };
    let fitter = match b.fitter {
        FitterKind::Lsq => FitterChoice::LeastSquares(LsqOptions {
            weighting: match b.weighting {
                WeightingKind::NoiseModel => Weighting::NoiseModel,
                WeightingKind::Uniform => Weighting::Uniform,
            },
            ..LsqOptions::default().with_readout(b.readout_sigma_counts)
        }),
        FitterKind::Mcmc => FitterChoice::Mcmc {
            config: SamplerConfig {
                n_walkers: b.n_walkers,
                n_steps: b.n_steps,
                burn_in: b.n_burn_in,
                stretch_a: b.stretch_a,
            },
            readout_sigma: b.readout_sigma_counts,
            seed: 0,
        },
    };
    Ok(PlSimConfig {
        ensemble: if b.strained {
            EmitterEnsemble::strained(&cal)
        } else {
            EmitterEnsemble::single()
        },
        cal,
        grid,
        brightness_cps: b.brightness_cps,
        background_cps_per_bin: b.background_cps_per_bin,
        ccd: CcdModel {
            readout_sigma: b.readout_sigma_counts,
            n_bins: b.n_bins,
        },
        response,
        temperature_K: b.temperature_K,
        fitter,
    })
}

pub fn pl_sweep(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let mut sim = pl_sim(&cfg.pl)?;
    sim.cal.linear_window_K = cfg.pl_sweep.linear_window_K;
    let temps = &cfg.pl_sweep.temperatures_K;
    if temps.len() < 3 {
        return Err(Error::Config("pl-sweep needs at least 3 temperatures".into()));
    }
    let exposure = cfg.pl_sweep.exposure_s;
    let readings = temps
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let s = seed::derive(cfg.seed, i as u64);
            let spectrum = sim.sample_spectrum(t, exposure, s)?;
            measure_temperature(&spectrum, &sim.cal, &sim.fitter.reseeded(seed::derive(s, 1)), None)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = Table::new(
        "pl_sweep",
        &[
            "temperature_K",
            "center_nm",
            "sigma_center_nm",
            "fwhm_nm",
            "sigma_fwhm_nm",
            "measured_temperature_K",
            "sigma_T_K",
        ],
    );
    for (t, r) in temps.iter().zip(&readings) {
        let p = &r.fit.params;
        let e = &r.fit.sigmas;
        table.push(vec![*t, p.center_nm, e.center_nm, p.fwhm_nm, e.fwhm_nm, r.temperature_K, r.sigma_T_K])?;
    }
    let centers: Vec<f64> = readings.iter().map(|r| r.fit.params.center_nm).collect();
    let line = stats::linear_regression(temps, &centers);
    let injected = sim.cal.d_center_dT;
    let mut out = ExperimentOutput::default();
    out.value("slope_nm_per_K", line.slope);
    out.value("slope_se_nm_per_K", line.slope_se);
    out.value("injected_slope_nm_per_K", injected);
    out.checks.push(Check::new(
        "susceptibility_within_3_sigma",
        (line.slope - injected).abs() < 3.0 * line.slope_se,
        format!("slope {:.6} ± {:.6} nm/K vs {injected} nm/K", line.slope, line.slope_se),
    ));
    out.tables.push(table);
    Ok(out)
}

pub fn precision(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let sim = pl_sim(&cfg.pl)?;
    let curve = precision_vs_time(&sim, &cfg.precision.times_s, cfg.precision.n_repeats, cfg.seed)?;
    let mut table = Table::new(
        "precision",
        &[
            "integration_time_s",
            "total_photons_counts",
            "sigma_T_K",
            "width_sigma_T_K",
            "failed_fits_count",
        ],
    );
    for p in &curve.points {
        table.push(vec![
            p.integration_time_s,
            p.total_photons,
            p.sigma_T_K,
            p.width_sigma_T_K,
            p.failed_fits as f64,
        ])?;
    }
    let crb = crb_sensitivity(&sim)?;
    let mut out = ExperimentOutput::default();
    out.value("fitted_exponent", curve.fitted_exponent);
    out.value("fitted_exponent_se", curve.fitted_exponent_se);
    out.value("sensitivity_mK_per_rtHz", curve.sensitivity_mK_per_rtHz);
    out.value("width_sensitivity_mK_per_rtHz", curve.width_sensitivity_mK_per_rtHz);
    out.value("crb_sensitivity_mK_per_rtHz", crb);
    out.value(
        "width_to_peak_ratio",
        curve.width_sensitivity_mK_per_rtHz / curve.sensitivity_mK_per_rtHz,
    );
    out.checks.push(Check::new(
        "shot_noise_exponent",
        (curve.fitted_exponent + 0.5).abs() <= 0.05,
        format!("exponent {:.4}", curve.fitted_exponent),
    ));
    out.checks.push(Check::new(
        "sensitivity_near_cramer_rao",
        (curve.sensitivity_mK_per_rtHz / crb - 1.0).abs() <= 0.2,
        format!("{:.1} mK/√Hz vs bound {crb:.1}", curve.sensitivity_mK_per_rtHz),
    ));
    out.tables.push(table);
    Ok(out)
}

pub fn ple_lockin(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let b = &cfg.ple;
    let cal = ThermoCalibration::nanodiamond();
    let mut ple = PleConfig::new(cal.center_ref_nm, b.psb_rate_cps);
    ple.detection = match b.detection {
        DetectionKind::Apd => Detection::Apd(ApdModel { dark_rate: b.dark_cps }),
        DetectionKind::Noiseless => Detection::Noiseless,
    };
    ple.drift_frac = b.drift_frac;
    ple.intensity_noise_frac = b.intensity_noise_frac;
    ple.probe_wavelength_nm = match b.probe_offset_nm {
        Some(o) => cal.center_ref_nm + o,
        None => max_contrast_wavelength(&cal, &ple, cal.t_ref)?,
    };
    let lp = ple.probe_wavelength_nm;
    let t0 = cal.t_ref;
    let mut out = ExperimentOutput::default();
    out.value("probe_wavelength_nm", lp);
    out.value("probe_offset_nm", lp - cal.center_ref_nm);

    let mut steps = Table::new("ple_contrast", &["delta_T_K", "contrast_frac", "susceptibility_per_K"]);
    for &dt in &b.contrast_steps_K {
        let c = contrast(lp, t0, dt, &cal, &ple)?;
        steps.push(vec![dt, c, if dt != 0.0 { c / dt } else { 0.0 }])?;
    }
    let parts = contrast_breakdown(lp, t0, &cal, &ple)?;
    out.value("shift_per_K", parts.shift_per_K);
    out.value("broadening_per_K", parts.broadening_per_K);
    out.value("quantum_efficiency_per_K", parts.quantum_efficiency_per_K);
    out.value("model_susceptibility_per_K", parts.total_per_K());
    let one_kelvin = contrast(lp, t0, 1.0, &cal, &ple)?;
    out.checks.push(Check::new(
        "model_susceptibility",
        (one_kelvin - PLE_SUSCEPTIBILITY_PER_K).abs() <= 0.001,
        format!("{:.4} %/K at 1 K", 100.0 * one_kelvin),
    ));

    let thermal = ThermalResponseModel {
        steady_state_dT_per_W: b.steady_state_K_per_W,
        time_constant_s: b.time_constant_s,
    };
    thermal.validate()?;
    let lock = LockInConfig {
        mod_freq_hz: b.mod_freq_hz,
        duty: b.duty,
        duration_s: b.duration_s,
        heater_power_W: b.heater_power_W,
        bin_duration_s: 1.0 / (b.n_bins_per_cycle as f64 * b.mod_freq_hz),
    };
    let heated = thermal.steady_state_dT_per_W * lock.heater_power_W;
    let trace = simulate_lockin_trace(&ple, &lock, &thermal, &cal, seed::derive(cfg.seed, 0))?;
    let demod = demodulate(&trace)?;
    let expected = contrast(lp, t0, heated, &cal, &ple)?;
    out.value("lockin_delta_T_K", heated);
    out.value("lockin_contrast_frac", demod.contrast);
    out.value("lockin_sigma_frac", demod.sigma);
    out.value("lockin_expected_frac", expected);
    out.value("lockin_cycles", demod.n_cycles as f64);
    out.checks.push(Check::new(
        "lockin_recovers_contrast",
        (demod.contrast - expected).abs() <= 2.0 * demod.sigma,
        format!("{:.5} ± {:.5} vs {expected:.5}", demod.contrast, demod.sigma),
    ));
    let mut trace_table = Table::new("ple_trace", &["time_s", "counts_counts", "heater_on_flag", "delta_T_K"]);
    for (k, ((c, on), dt)) in trace.bin_counts.iter().zip(&trace.reference).zip(&trace.delta_T_K).enumerate() {
        trace_table.push(vec![k as f64 * trace.bin_duration_s, *c, f64::from(u8::from(*on)), *dt])?;
    }

    let sweep = power_sweep(&ple, &lock, &thermal, &cal, &b.sweep_powers_W, seed::derive(cfg.seed, 1))?;
    let mut sweep_table = Table::new(
        "ple_power_sweep",
        &["heater_power_W", "contrast_frac", "sigma_frac", "line_shift_nm"],
    );
    for p in &sweep.points {
        sweep_table.push(vec![p.heater_power_W, p.contrast, p.sigma, p.line_shift_nm])?;
    }
    out.value("chain_susceptibility_per_K", sweep.susceptibility_per_K);

    let noiseless = PleConfig {
        detection: Detection::Noiseless,
        drift_frac: 0.0,
        intensity_noise_frac: 0.0,
        ..ple
    };
    let freq = frequency_sweep(
        &noiseless,
        &lock,
        &thermal,
        &cal,
        &b.sweep_freqs_hz,
        b.n_bins_per_cycle,
        20,
        seed::derive(cfg.seed, 2),
    )?;
    let mut freq_table = Table::new("ple_frequency_sweep", &["mod_freq_hz", "susceptibility_per_K"]);
    for p in &freq {
        freq_table.push(vec![p.mod_freq_hz, p.susceptibility_per_K])?;
    }
    out.checks.push(Check::new(
        "frequency_rolloff_monotone",
        freq.windows(2).all(|w| w[1].susceptibility_per_K <= w[0].susceptibility_per_K),
        format!("{} frequencies", freq.len()),
    ));

    out.tables.extend([steps, sweep_table, freq_table, trace_table]);
    Ok(out)
}

fn heat_scene(b: &HeatBlock) -> Result<HeatScene> {
    let mut scene = HeatScene::periodic_array(
        b.n_pads_x,
        b.n_pads_y,
        b.pitch_um,
        [b.origin_x_um, b.origin_y_um],
        [b.probe_x_um, b.probe_y_um],
    )?;
    scene.pad_size_um = b.pad_size_um;
    scene.pad_thickness_nm = b.pad_thickness_nm;
    scene.substrate_conductivity = b.conductivity_W_per_mK;
    scene.absorbance = b.absorbance;
    scene.validate()?;
    Ok(scene)
}

pub fn heat_map(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let b = &cfg.heat;
    let scene = heat_scene(b)?;
    let grid = HeaterGrid {
        x0_um: b.scan_x0_um,
        y0_um: b.scan_y0_um,
        dx_um: b.scan_step_um,
        dy_um: b.scan_step_um,
        nx: b.n_scan_x,
        ny: b.n_scan_y,
        exclusion_radius_um: b.exclusion_radius_um,
    };
    let map = scan_heat_map(&scene, &grid, b.heater_power_W, b.spot_fwhm_um)?;
    let mut map_table = Table::new("heat_map", &["x_um", "y_um", "delta_T_K", "masked_flag"]);
    for k in 0..grid.len() {
        let [x, y] = grid.node(k % grid.nx, k / grid.nx);
        map_table.push(vec![x, y, map.delta_T_K[k], f64::from(u8::from(map.masked[k]))])?;
    }

    // Heater parked on each pad centre, with multiplicative read-out noise.
    let mut rng = seed::rng(seed::derive(cfg.seed, 0));
    let p = scene.probe_position_um;
    let mut radial = Table::new("heat_radial", &["distance_um", "delta_T_K", "model_delta_T_K"]);
    let mut obs = Vec::new();
    for &c in &scene.pad_centers_um {
        let r = (c[0] - p[0]).hypot(c[1] - p[1]);
        if r <= b.exclusion_radius_um {
            continue;
        }
        let model = steady_state_delta_T(&scene, c, b.heater_power_W, b.spot_fwhm_um)?;
        let g: f64 = StandardNormal.sample(&mut rng);
        let observed = model * (1.0 + b.noise_frac * g);
        radial.push(vec![r, observed, model])?;
        obs.push(HeatObservation {
            heater_um: c,
            delta_T_K: observed,
        });
    }
    let mut out = ExperimentOutput::default();
    let dist = radial.column("distance_um").unwrap_or_default();
    let sampled = stats::log_log_slope(&dist, &radial.column("delta_T_K").unwrap_or_default());
    out.value("pad_centre_exponent", sampled.slope);
    out.value("pad_centre_exponent_se", sampled.slope_se);
    out.checks.push(Check::new(
        "pad_centre_falloff",
        (sampled.slope + 1.0).abs() <= 0.10,
        format!("exponent {:.4}", sampled.slope),
    ));

    let far = far_field_exponent(&scene, b.heater_power_W, b.spot_fwhm_um)?;
    out.value("far_field_exponent", far);
    out.checks.push(Check::new(
        "far_field_falloff",
        (far + 1.0).abs() <= 0.02,
        format!("exponent {far:.6}"),
    ));

    let model_scene = HeatScene {
        substrate_conductivity: b.fit_conductivity_W_per_mK.unwrap_or(b.conductivity_W_per_mK),
        ..scene.clone()
    };
    let fit = fit_absorbance(&obs, &model_scene, b.heater_power_W, b.spot_fwhm_um)?;
    out.value("absorbance_fit", fit.absorbance);
    out.value("absorbance_se", fit.standard_error);
    out.value("absorbance_true", b.absorbance);
    out.value("absorbance_ratio", fit.absorbance / b.absorbance);
    let ratio = fit.absorbance / b.absorbance;
    out.checks.push(Check::new(
        "absorbance_within_factor_2",
        (0.5..=2.0 * (1.0 + 1e-9)).contains(&ratio),
        format!("fitted {:.4} vs {}", fit.absorbance, b.absorbance),
    ));
    out.tables.extend([map_table, radial]);
    Ok(out)
}

/// Log-log slope of the temperature rise from one pad against probe
/// distance over 3 to 30 pad sizes.
pub fn far_field_exponent(scene: &HeatScene, p_h: f64, spot_fwhm_um: f64) -> Result<f64> {
    let size = scene.pad_size_um;
    let single = HeatScene {
        pad_centers_um: vec![[0.0, 0.0]],
        ..scene.clone()
    };
    let radii: Vec<f64> = (0..25).map(|k| 3.0 * size * 10f64.powf(k as f64 / 24.0)).collect();
    let dts = radii
        .iter()
        .map(|&r| {
            let s = HeatScene {
                probe_position_um: [r, 0.0],
                ..single.clone()
            };
            steady_state_delta_T(&s, [0.0, 0.0], p_h, spot_fwhm_um)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(stats::log_log_slope(&radii, &dts).slope)
}

pub fn calibrate_response(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let b = &cfg.response;
    let mut sim = pl_sim(&cfg.pl)?;
    let fringe = InstrumentResponse::fringe(b.fringe_depth_frac, b.fringe_period_nm, b.fringe_phase_rad)?;
    sim.response = fringe;
    let grid = sim.grid;

    let lamp = synthesize_blackbody_reference(&grid, b.lamp_temperature_K, b.lamp_peak_counts, b.lamp_exposure_s, &fringe)?;
    let lamp = sample_ccd_spectrum(&lamp, &sim.ccd, seed::derive(cfg.seed, 0))?;
    let from_lamp = estimate_response_blackbody(&lamp, b.detrend_degree)?;

    let spectrum = sim.sample_spectrum(sim.temperature_K, b.spectrum_exposure_s, seed::derive(cfg.seed, 1))?;
    let lsq = LsqOptions::default().with_readout(sim.ccd.readout_sigma).unchecked();
    let prelim = fit_least_squares(&spectrum, &initial_guess(&spectrum), &lsq)?;
    let from_residual = estimate_response_residual(&spectrum, &prelim, b.n_smoothing_bins)?;

    let truth = fringe.factors(&grid);
    let mut table = Table::new(
        "response",
        &["wavelength_nm", "true_response_frac", "blackbody_response_frac", "residual_response_frac"],
    );
    for (i, l) in grid.wavelengths().enumerate() {
        table.push(vec![l, truth[i], from_lamp.factors[i], from_residual.factors[i]])?;
    }
    let mut out = ExperimentOutput::default();
    let closure = relative_rms_disagreement(&from_lamp.factors, &from_residual.factors);
    out.value("closure_disagreement_frac", closure);
    out.value("blackbody_vs_truth_frac", relative_rms_disagreement(&from_lamp.factors, &truth));
    out.value("residual_vs_truth_frac", relative_rms_disagreement(&from_residual.factors, &truth));
    out.value("clamped_bins", from_residual.clamped.len() as f64);
    out.value(
        "blackbody_residual_rms_frac",
        rms_difference(&from_lamp.factors, &from_residual.factors),
    );
    out.checks.push(Check::new(
        "response_closure",
        closure <= 0.10,
        format!("relative RMS disagreement {:.4}", closure),
    ));

    let fitter = FitterChoice::LeastSquares(lsq);
    let read = |r: Option<&ResponseEstimate>| measure_temperature(&spectrum, &sim.cal, &fitter, r);
    out.value("true_temperature_K", sim.temperature_K);
    out.value("uncorrected_temperature_K", read(None)?.temperature_K);
    out.value("blackbody_corrected_temperature_K", read(Some(&from_lamp))?.temperature_K);
    out.value("residual_corrected_temperature_K", read(Some(&from_residual))?.temperature_K);
    out.tables.push(table);
    Ok(out)
}

pub fn fit(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let sim = pl_sim(&cfg.pl)?;
    let mut out = ExperimentOutput::default();
    let spectrum: Spectrum = match &cfg.fit.input_path {
        Some(path) => import_spectrum(path)?,
        None => {
            let s = sim.sample_spectrum(sim.temperature_K, cfg.fit.exposure_s, seed::derive(cfg.seed, 0))?;
            out.files.push(("spectrum.csv".to_string(), spectrum_to_csv(&s)));
            s
        }
    };
    let fitter = sim.fitter.reseeded(seed::derive(cfg.seed, 1));
    let r = measure_temperature(&spectrum, &sim.cal, &fitter, None)?;
    let mut table = Table::new(
        "fit",
        &[
            "center_nm",
            "sigma_center_nm",
            "fwhm_nm",
            "sigma_fwhm_nm",
            "amplitude_counts",
            "sigma_amplitude_counts",
            "baseline_counts",
            "sigma_baseline_counts",
            "reduced_chi2_ratio",
            "temperature_K",
            "sigma_T_K",
        ],
    );
    let (p, e) = (&r.fit.params, &r.fit.sigmas);
    table.push(vec![
        p.center_nm,
        e.center_nm,
        p.fwhm_nm,
        e.fwhm_nm,
        p.amplitude,
        e.amplitude,
        p.baseline,
        e.baseline,
        r.fit.goodness,
        r.temperature_K,
        r.sigma_T_K,
    ])?;
    out.value("temperature_K", r.temperature_K);
    out.value("sigma_T_K", r.sigma_T_K);
    out.tables.push(table);
    Ok(out)
}

pub fn execute(kind: ExperimentKind, cfg: &RunConfig) -> Result<ExperimentOutput> {
    match kind {
        ExperimentKind::PlSweep => pl_sweep(cfg),
        ExperimentKind::Precision => precision(cfg),
        ExperimentKind::PleLockin => ple_lockin(cfg),
        ExperimentKind::HeatMap => heat_map(cfg),
        ExperimentKind::CalibrateResponse => calibrate_response(cfg),
        ExperimentKind::Fit => fit(cfg),
    }
}
