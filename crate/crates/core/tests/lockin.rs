use sivtherm::detector_noise::ApdModel;
use sivtherm::ple_lockin::*;
use sivtherm::spectral_model::ThermoCalibration;

fn setup(rate: f64, detection: Detection) -> (ThermoCalibration, PleConfig) {
    let cal = ThermoCalibration::nanodiamond();
    let mut ple = PleConfig::new(cal.center_ref_nm, rate);
    ple.detection = detection;
    ple.probe_wavelength_nm = max_contrast_wavelength(&cal, &ple, cal.t_ref).unwrap();
    (cal, ple)
}

/// RK4 integration of dT/dt = (G·P(t) − T)/τ from rest, then bin averages of
/// the last `n_keep` bins.
fn ode_bin_averages(lock: &LockInConfig, thermal: &ThermalResponseModel, n_total: usize, n_keep: usize) -> Vec<f64> {
    let per_cycle = (1.0 / (lock.mod_freq_hz * lock.bin_duration_s)).round() as usize;
    let n_on = (lock.duty * per_cycle as f64).round() as usize;
    let sub = 400;
    let h = lock.bin_duration_s / sub as f64;
    let target = thermal.steady_state_dT_per_W * lock.heater_power_W;
    let tau = thermal.time_constant_s;
    let mut t = 0.0;
    let mut out = Vec::new();
    for k in 0..n_total {
        let drive = if k % per_cycle < n_on { target } else { 0.0 };
        let f = |x: f64| (drive - x) / tau;
        let mut acc = 0.0;
        for _ in 0..sub {
            let k1 = f(t);
            let k2 = f(t + 0.5 * h * k1);
            let k3 = f(t + 0.5 * h * k2);
            let k4 = f(t + h * k3);
            let next = t + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            acc += 0.5 * (t + next) / sub as f64;
            t = next;
        }
        if k + n_keep >= n_total {
            out.push(acc);
        }
    }
    out
}

#[test]
fn thermal_trace_matches_ode_at_unit_tau_f() {
    let (cal, ple) = setup(1e5, Detection::Noiseless);
    let lock = LockInConfig {
        duration_s: 0.25,
        heater_power_W: 1e-4,
        ..LockInConfig::default().at_frequency(80.0, 20)
    };
    let thermal = ThermalResponseModel {
        steady_state_dT_per_W: 1000.0,
        time_constant_s: 1.0 / 80.0,
    };
    let trace = simulate_lockin_trace(&ple, &lock, &thermal, &cal, 1).unwrap();
    let n = trace.delta_T_K.len();
    // Forty warm-up cycles bring the ODE to its periodic state.
    let oracle = ode_bin_averages(&lock, &thermal, n + 40 * 20, n);
    for (a, b) in trace.delta_T_K.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-6 * 0.1, "{a} vs {b}");
    }

    // Attenuation of the demodulated contrast follows the ODE depth.
    let (mut on, mut off) = (0.0, 0.0);
    for (k, v) in oracle.iter().enumerate() {
        if trace.reference[k] {
            on += v;
        } else {
            off += v;
        }
    }
    let half = (n / 2) as f64;
    let depth = (on / half - off / half) / 0.1;
    assert!(depth < 0.9, "depth {depth}");
    let fast = ThermalResponseModel {
        time_constant_s: 1e-18,
        ..thermal
    };
    let slow = demodulate(&trace).unwrap().contrast;
    let instant = demodulate(&simulate_lockin_trace(&ple, &lock, &fast, &cal, 1).unwrap()).unwrap().contrast;
    let ratio = slow / instant;
    assert!((ratio - depth).abs() < 0.01 * depth, "ratio {ratio} vs depth {depth}");
}

#[test]
fn zero_heater_power_is_null() {
    let (cal, ple) = setup(3e5, Detection::Apd(ApdModel::default()));
    let lock = LockInConfig {
        heater_power_W: 0.0,
        ..LockInConfig::default()
    };
    let thermal = ThermalResponseModel::default();
    let mut outside = 0;
    for s in 0..20 {
        let d = demodulate(&simulate_lockin_trace(&ple, &lock, &thermal, &cal, s).unwrap()).unwrap();
        outside += usize::from(d.contrast.abs() > 2.0 * d.sigma);
    }
    // Expected about one in twenty.
    assert!(outside <= 4, "{outside} of 20 outside 2σ");
}

#[test]
fn coverage_at_1e5_counts_per_phase() {
    let (cal, ple) = setup(2e4, Detection::Apd(ApdModel { dark_rate: 0.0 }));
    let lock = LockInConfig::default();
    let thermal = ThermalResponseModel {
        time_constant_s: 1e-18,
        ..ThermalResponseModel::default()
    };
    let truth = contrast(ple.probe_wavelength_nm, cal.t_ref, 1.0, &cal, &ple).unwrap();
    assert!((truth - 0.013).abs() < 1e-3);
    let hits = (0..200)
        .filter(|&s| {
            let d = demodulate(&simulate_lockin_trace(&ple, &lock, &thermal, &cal, 1000 + s).unwrap()).unwrap();
            (d.contrast - truth).abs() <= 2.0 * d.sigma
        })
        .count();
    assert!(hits >= 190, "{hits} of 200 within 2σ");
}

#[test]
fn linear_drift_rejected() {
    let (cal, ple) = setup(3e5, Detection::Noiseless);
    let lock = LockInConfig::default();
    let thermal = ThermalResponseModel::default();
    let base = demodulate(&simulate_lockin_trace(&ple, &lock, &thermal, &cal, 0).unwrap()).unwrap();
    for drift in [0.01, 0.05] {
        let drifted = PleConfig { drift_frac: drift, ..ple };
        let d = demodulate(&simulate_lockin_trace(&drifted, &lock, &thermal, &cal, 0).unwrap()).unwrap();
        assert!((d.contrast - base.contrast).abs() < 1e-3, "drift {drift}: {} vs {}", d.contrast, base.contrast);
    }
}

#[test]
fn end_to_end_matches_model_within_2_sigma() {
    let (cal, ple) = setup(3e5, Detection::Apd(ApdModel::default()));
    let thermal = ThermalResponseModel {
        time_constant_s: 1e-18,
        ..ThermalResponseModel::default()
    };
    let truth = contrast(ple.probe_wavelength_nm, cal.t_ref, 1.0, &cal, &ple).unwrap();
    let d = demodulate(&simulate_lockin_trace(&ple, &LockInConfig::default(), &thermal, &cal, 77).unwrap()).unwrap();
    assert!((d.contrast - truth).abs() <= 2.0 * d.sigma, "{} ± {} vs {truth}", d.contrast, d.sigma);
}

#[test]
fn chain_reproduces_direct_susceptibility() {
    let (cal, ple) = setup(3e5, Detection::Noiseless);
    let thermal = ThermalResponseModel {
        time_constant_s: 1e-18,
        ..ThermalResponseModel::default()
    };
    let sweep = power_sweep(&ple, &LockInConfig::default(), &thermal, &cal, &[2.5e-4, 5e-4, 7.5e-4, 1e-3], 0).unwrap();
    let direct = contrast(ple.probe_wavelength_nm, cal.t_ref, 1.0, &cal, &ple).unwrap();
    let rel = (sweep.susceptibility_per_K / direct - 1.0).abs();
    assert!(rel < 0.03, "chain {} vs direct {direct}", sweep.susceptibility_per_K);
}

#[test]
fn frequency_rolloff_is_monotone() {
    let (cal, ple) = setup(3e5, Detection::Noiseless);
    let thermal = ThermalResponseModel {
        time_constant_s: 2e-3,
        ..ThermalResponseModel::default()
    };
    let freqs = [10.0, 40.0, 80.0, 160.0, 320.0, 640.0];
    let pts = frequency_sweep(&ple, &LockInConfig::default(), &thermal, &cal, &freqs, 16, 20, 0).unwrap();
    for w in pts.windows(2) {
        assert!(w[1].susceptibility_per_K < w[0].susceptibility_per_K, "{w:?}");
    }
    assert!(pts.last().unwrap().susceptibility_per_K < 0.5 * pts[0].susceptibility_per_K);
}

#[test]
fn nanodiamond_spread_below_one_percent() {
    let (cal, ple) = setup(3e5, Detection::Noiseless);
    let s = nanodiamond_susceptibilities(&cal, &ple, 50, 1.0, 5).unwrap();
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    let sd = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s.len() - 1) as f64).sqrt();
    assert!(sd / mean < 0.01, "relative spread {}", sd / mean);
}
