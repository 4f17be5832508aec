//! Re-derives the two model constants stored as defaults:
//! the bulk reference linewidth and the nanodiamond QE slope.
//!
//! `cargo run --release --example derive_defaults`

use sivtherm::pl_thermometry::{crb_sensitivity, derive_fwhm_for_sensitivity, PlSimConfig};
use sivtherm::ple_lockin::{calibrate_qe_slope, contrast_breakdown, max_contrast_wavelength, PleConfig};
use sivtherm::spectral_model::{
    ThermoCalibration, BULK_FWHM_REF_NM, NANODIAMOND_QE_SLOPE_PER_K, PLE_SUSCEPTIBILITY_PER_K,
};

fn main() -> sivtherm::Result<()> {
    let sim = PlSimConfig::bulk();
    let lo = derive_fwhm_for_sensitivity(&sim, 337.0, 1.0, 30.0)?;
    let hi = derive_fwhm_for_sensitivity(&sim, 360.0, 1.0, 30.0)?;
    println!("bulk reference linewidth");
    println!("  337 mK/√Hz at fwhm {lo:.4} nm");
    println!("  360 mK/√Hz at fwhm {hi:.4} nm");
    println!(
        "  stored {BULK_FWHM_REF_NM} nm -> {:.1} mK/√Hz",
        crb_sensitivity(&sim)?
    );

    let cal = ThermoCalibration::nanodiamond();
    let ple = PleConfig::new(cal.center_ref_nm, 1.0);
    let qe = calibrate_qe_slope(&cal, &ple, PLE_SUSCEPTIBILITY_PER_K, 1.0)?;
    let fitted = ThermoCalibration { qe_slope: qe, ..cal };
    let lp = max_contrast_wavelength(&fitted, &ple, fitted.t_ref)?;
    let parts = contrast_breakdown(lp, fitted.t_ref, &fitted, &ple)?;
    println!("nanodiamond QE slope for {} %/K", 100.0 * PLE_SUSCEPTIBILITY_PER_K);
    println!("  derived {qe:.9} /K (stored {NANODIAMOND_QE_SLOPE_PER_K})");
    println!("  probe at centre {:+.5} nm", lp - fitted.center_ref_nm);
    println!(
        "  shift {:+.3} %/K, broadening {:+.3} %/K, QE {:+.3} %/K",
        100.0 * parts.shift_per_K,
        100.0 * parts.broadening_per_K,
        100.0 * parts.quantum_efficiency_per_K
    );
    Ok(())
}
