use proptest::prelude::*;
use rayon::prelude::*;

use sivtherm::pl_thermometry::*;
use sivtherm::spectral_model::*;
use sivtherm::{seed, stats, WavelengthGrid};

#[test]
fn sweep_recovers_shift_coefficient() {
    let mut sim = PlSimConfig::bulk();
    sim.cal = sim.cal.with_window(7.0);
    let temps: Vec<f64> = (0..15).map(|k| 288.0 + k as f64).collect();
    let centers: Vec<f64> = temps
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let s = sim.sample_spectrum(t, 1.0, seed::derive(71, i as u64)).unwrap();
            sim.fitter.fit(&s, &sivtherm::line_fitter::initial_guess(&s)).unwrap().params.center_nm
        })
        .collect();
    let fit = stats::linear_regression(&temps, &centers);
    assert!((fit.slope - ZPL_SHIFT_NM_PER_K).abs() < 3.0 * fit.slope_se, "{} ± {}", fit.slope, fit.slope_se);
}

#[test]
fn strain_offset_biases_absolutes_but_not_differences() {
    for sign in [-1.0, 1.0] {
        let sim = PlSimConfig {
            ensemble: EmitterEnsemble::offset(sign * STRAIN_OFFSET_K * ZPL_SHIFT_NM_PER_K),
            ..PlSimConfig::bulk()
        };
        let cal = sim.cal.with_window(7.0);
        let pairs: Vec<(f64, f64)> = (0..100u64)
            .into_par_iter()
            .map(|i| {
                let read = |t: f64, k: u64| {
                    let s = sim.sample_spectrum(t, 1.0, seed::derive(seed::derive(72, i), k)).unwrap();
                    measure_temperature(&s, &cal, &sim.fitter, None).unwrap().temperature_K
                };
                (read(295.0, 0), read(296.0, 1))
            })
            .collect();
        let offsets: Vec<f64> = pairs.iter().map(|p| p.0 - 295.0).collect();
        let diffs: Vec<f64> = pairs.iter().map(|p| p.1 - p.0 - 1.0).collect();
        assert!((stats::mean(&offsets) - sign * STRAIN_OFFSET_K).abs() < 0.2);
        let se = stats::std_dev(&diffs) / 10.0;
        assert!(stats::mean(&diffs).abs() < 3.0 * se, "bias {} ± {se}", stats::mean(&diffs));
    }
}

#[test]
fn shot_noise_exponent_with_negligible_readout() {
    let sim = PlSimConfig::bulk();
    let curve = precision_vs_time(&sim, &[0.5, 1.5, 5.0, 15.0, 50.0], 200, 73).unwrap();
    assert!((-0.55..=-0.45).contains(&curve.fitted_exponent), "{}", curve.fitted_exponent);
    assert!(curve.points.iter().all(|p| p.sigma_T_K > 0.0));
}

#[test]
fn crb_band_brackets_default_linewidth() {
    let sim = PlSimConfig::bulk();
    let lo = derive_fwhm_for_sensitivity(&sim, 337.0, 1.0, 30.0).unwrap();
    let hi = derive_fwhm_for_sensitivity(&sim, 360.0, 1.0, 30.0).unwrap();
    assert!(lo < BULK_FWHM_REF_NM && BULK_FWHM_REF_NM < hi, "[{lo}, {hi}]");
    let eta = crb_sensitivity(&sim).unwrap();
    assert!((337.0..=360.0).contains(&eta));
}

#[test]
fn volume_figures() {
    assert_eq!(sensitivity_per_volume(521.0, 0.004).unwrap().per_volume.round(), 33.0);
    let confocal = sensitivity_per_volume(360.0, 4.0).unwrap().per_volume;
    assert_eq!(confocal, 720.0);
    assert!((confocal / 691.0 - 1.0).abs() < 0.05);
    assert_eq!(sensitivity_per_volume(348.5, 1.0).unwrap().per_volume, 348.5);
    assert!(sensitivity_per_volume(348.5, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lorentzian_is_symmetric(c in 700.0..780.0f64, w in 0.1..20.0f64, d in 0.0..50.0f64) {
        let p = LorentzianParams::new(c, w, 3.0, 0.5).unwrap();
        prop_assert!((eval_lorentzian(&p, c + d) - eval_lorentzian(&p, c - d)).abs() <= 1e-12);
    }

    #[test]
    fn calibration_is_exactly_linear(t1 in 290.0..300.0f64, t2 in 290.0..300.0f64) {
        let cal = ThermoCalibration::bulk();
        let lhs = cal.center_at(t1) + cal.center_at(t2);
        let rhs = 2.0 * cal.center_at(0.5 * (t1 + t2));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
        let back = peak_to_temperature(cal.center_at(t1), &cal).unwrap();
        prop_assert!((back - t1).abs() < 1e-9);
        let back = linewidth_to_temperature(cal.fwhm_at(t1), &cal).unwrap();
        prop_assert!((back - t1).abs() < 1e-9);
    }

    #[test]
    fn spectrum_peaks_at_the_line_centre(t in 290.0..300.0f64) {
        let cal = ThermoCalibration::nanodiamond();
        let grid = WavelengthGrid::default();
        let s = synthesize_expected_spectrum(&EmitterEnsemble::single(), &cal, t, &grid, 1e6, 1.0, &InstrumentResponse::flat()).unwrap();
        let peak = s.argmax();
        let c = cal.center_at(t);
        prop_assert!((grid.wavelength(peak) - c).abs() <= 0.5 * grid.step_nm + 1e-9);
    }

    #[test]
    fn expected_counts_scale_with_exposure(t in 290.0..300.0f64, e in 0.01..10.0f64) {
        let sim = PlSimConfig::bulk();
        let one = sim.expected_spectrum(t, e).unwrap();
        let two = sim.expected_spectrum(t, 2.0 * e).unwrap();
        for (a, b) in one.counts.iter().zip(&two.counts) {
            prop_assert!((2.0 * a - b).abs() <= 1e-9 * b);
        }
    }
}
