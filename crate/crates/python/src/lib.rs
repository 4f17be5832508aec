//! Python bindings: simulate and read PL spectra, and run whole experiments.

use std::path::Path;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sivtherm::cli_io::{run_config, RunConfig};
use sivtherm::pl_thermometry::{self, PlSimConfig};
use sivtherm::spectral_model::ThermoCalibration;
use sivtherm::{Spectrum, WavelengthGrid};

create_exception!(sivtherm_py, SivthermError, PyException);

fn to_py(e: sivtherm::Error) -> PyErr {
    SivthermError::new_err((e.kind(), e.to_string()))
}

fn preset(name: &str) -> PyResult<PlSimConfig> {
    let mut sim = PlSimConfig::bulk();
    match name {
        "bulk" => {}
        "nanodiamond" => sim.cal = ThermoCalibration::nanodiamond(),
        other => return Err(SivthermError::new_err(("config", format!("unknown preset `{other}`")))),
    }
    Ok(sim)
}

fn spectrum_from(wavelengths_nm: &[f64], counts: Vec<f64>, exposure_s: f64) -> PyResult<Spectrum> {
    if wavelengths_nm.len() < 2 {
        return Err(SivthermError::new_err(("contract", "need at least two wavelength bins")));
    }
    let step = (wavelengths_nm[wavelengths_nm.len() - 1] - wavelengths_nm[0]) / (wavelengths_nm.len() - 1) as f64;
    let grid = WavelengthGrid::new(wavelengths_nm[0], step, wavelengths_nm.len()).map_err(to_py)?;
    Spectrum::new(grid, counts, exposure_s).map_err(to_py)
}

/// Simulated CCD spectrum as `(wavelengths_nm, counts)`.
#[pyfunction]
#[pyo3(signature = (temperature_K, exposure_s=1.0, seed=0, preset_name="bulk"))]
#[allow(non_snake_case)]
fn simulate_spectrum(
    temperature_K: f64,
    exposure_s: f64,
    seed: u64,
    preset_name: &str,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let sim = preset(preset_name)?;
    let s = sim.sample_spectrum(temperature_K, exposure_s, seed).map_err(to_py)?;
    Ok((s.grid.wavelengths().collect(), s.counts))
}

/// Fit a spectrum and map the line centre to temperature.
#[pyfunction]
#[pyo3(signature = (wavelengths_nm, counts, exposure_s=1.0, preset_name="bulk"))]
fn measure_temperature<'py>(
    py: Python<'py>,
    wavelengths_nm: Vec<f64>,
    counts: Vec<f64>,
    exposure_s: f64,
    preset_name: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let sim = preset(preset_name)?;
    let s = spectrum_from(&wavelengths_nm, counts, exposure_s)?;
    let r = pl_thermometry::measure_temperature(&s, &sim.cal, &sim.fitter, None).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("temperature_K", r.temperature_K)?;
    d.set_item("sigma_T_K", r.sigma_T_K)?;
    d.set_item("center_nm", r.fit.params.center_nm)?;
    d.set_item("fwhm_nm", r.fit.params.fwhm_nm)?;
    d.set_item("goodness", r.fit.goodness)?;
    Ok(d)
}

/// Shot-noise-limited sensitivity of the preset in mK/√Hz.
#[pyfunction]
#[pyo3(signature = (preset_name="bulk"))]
fn crb_sensitivity(preset_name: &str) -> PyResult<f64> {
    pl_thermometry::crb_sensitivity(&preset(preset_name)?).map_err(to_py)
}

/// Run an experiment from TOML text, writing into `out_dir`; returns the report as JSON.
#[pyfunction]
fn run_experiment(config_toml: &str, out_dir: &str) -> PyResult<String> {
    let cfg = RunConfig::from_toml_str(config_toml).map_err(to_py)?;
    let report = run_config(&cfg, Path::new(out_dir)).map_err(to_py)?;
    serde_json::to_string(&report).map_err(|e| SivthermError::new_err(("config", e.to_string())))
}

#[pymodule]
fn sivtherm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SivthermError", m.py().get_type::<SivthermError>())?;
    m.add_function(wrap_pyfunction!(simulate_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(measure_temperature, m)?)?;
    m.add_function(wrap_pyfunction!(crb_sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
