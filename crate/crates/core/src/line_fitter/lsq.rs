use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::{check_signal, model_and_gradient, noise_variance, reduced_chi2, FitResult};
use crate::error::{Error, Result};
use crate::spectral_model::LorentzianParams;
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Plain sum of squared residuals; sigmas scaled by the residual variance.
    Uniform,
    /// Residuals weighted by the shot + readout variance of the current model,
    /// re-evaluated every iteration.
    NoiseModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsqOptions {
    pub weighting: Weighting,
    pub readout_sigma: f64,
    pub max_iterations: usize,
    /// Relative parameter-step tolerance for convergence.
    pub tolerance: f64,
    /// Reject converged fits whose reduced chi-square exceeds this.
    pub max_reduced_chi2: Option<f64>,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::NoiseModel,
            readout_sigma: 10.0,
            max_iterations: 200,
            tolerance: 1e-10,
            max_reduced_chi2: Some(10.0),
        }
    }
}

impl LsqOptions {
    pub fn with_readout(self, readout_sigma: f64) -> Self {
        Self {
            readout_sigma,
            ..self
        }
    }

    pub fn unchecked(self) -> Self {
        Self {
            max_reduced_chi2: None,
            ..self
        }
    }
}

struct Normal {
    jtj: Matrix4<f64>,
    jtr: Vector4<f64>,
}

fn weights(s: &Spectrum, p: &[f64; 4], opts: &LsqOptions) -> Vec<f64> {
    match opts.weighting {
        Weighting::Uniform => vec![1.0; s.counts.len()],
        Weighting::NoiseModel => s
            .grid
            .wavelengths()
            .map(|l| 1.0 / noise_variance(super::model_value(p, l), opts.readout_sigma))
            .collect(),
    }
}

fn cost(s: &Spectrum, p: &[f64; 4], w: &[f64]) -> f64 {
    s.iter()
        .zip(w)
        .map(|((l, y), w)| w * (y - super::model_value(p, l)).powi(2))
        .sum()
}

fn normal_equations(s: &Spectrum, p: &[f64; 4], w: &[f64]) -> Normal {
    let mut jtj = Matrix4::zeros();
    let mut jtr = Vector4::zeros();
    for ((l, y), &w) in s.iter().zip(w) {
        let (m, g) = model_and_gradient(p, l);
        let g = Vector4::from(g);
        jtj += g * g.transpose() * w;
        jtr += g * (w * (y - m));
    }
    Normal { jtj, jtr }
}

fn project(p: &mut [f64; 4]) -> bool {
    p[2] = p[2].max(0.0);
    p[3] = p[3].max(0.0);
    p[1] > 0.0 && p.iter().all(|v| v.is_finite())
}

fn covariance(s: &Spectrum, p: &[f64; 4], opts: &LsqOptions) -> Result<Matrix4<f64>> {
    let w = weights(s, p, opts);
    let Normal { jtj, .. } = normal_equations(s, p, &w);
    let inv = jtj
        .try_inverse()
        .ok_or_else(|| Error::IllConditioned("singular normal matrix at optimum".into()))?;
    let scale = match opts.weighting {
        Weighting::NoiseModel => 1.0,
        Weighting::Uniform => {
            cost(s, p, &w) / (s.counts.len().saturating_sub(super::N_PARAMS)).max(1) as f64
        }
    };
    let cov = inv * scale;
    if (0..4).any(|k| !(cov[(k, k)] >= 0.0) || !cov[(k, k)].is_finite()) {
        return Err(Error::IllConditioned("non-positive variance at optimum".into()));
    }
    Ok(cov)
}

fn result(s: &Spectrum, p: [f64; 4], cov: &Matrix4<f64>, readout_sigma: f64) -> FitResult {
    FitResult {
        params: LorentzianParams::from_array(p),
        sigmas: LorentzianParams::from_array([0, 1, 2, 3].map(|k| cov[(k, k)].sqrt())),
        posterior: None,
        goodness: reduced_chi2(s, &p, readout_sigma),
    }
}

/// Levenberg–Marquardt fit of a single Lorentzian on a constant baseline.
/// Amplitude and baseline are projected onto `[0, ∞)`; steps that make the
/// width non-positive are rejected.
pub fn fit_least_squares(
    s: &Spectrum,
    init: &LorentzianParams,
    opts: &LsqOptions,
) -> Result<FitResult> {
    check_signal(s, opts.readout_sigma)?;
    init.validate()?;
    if !s.grid.contains(init.center_nm) {
        return Err(Error::contract(format!(
            "initial centre {} nm lies outside the grid",
            init.center_nm
        )));
    }

    let mut p = init.to_array();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let w = weights(s, &p, opts);
        let Normal { jtj, jtr } = normal_equations(s, &p, &w);
        let c0 = cost(s, &p, &w);
        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = jtj;
            for k in 0..4 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(f64::MIN_POSITIVE);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2], p[3] + step[3]];
            if !project(&mut trial) {
                lambda *= 4.0;
                continue;
            }
            let c1 = cost(s, &trial, &w);
            if c1 <= c0 {
                let small = (0..4).all(|k| {
                    (trial[k] - p[k]).abs() <= opts.tolerance * (p[k].abs() + opts.tolerance)
                });
                p = trial;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                converged = small;
                break;
            }
            lambda *= 4.0;
        }
        // No downhill step at any damping: we are at a (projected) minimum.
        if !accepted {
            converged = true;
        }
        if converged {
            break;
        }
    }

    if !converged {
        let best = match covariance(s, &p, opts) {
            Ok(cov) => result(s, p, &cov, opts.readout_sigma),
            Err(_) => FitResult {
                params: LorentzianParams::from_array(p),
                sigmas: LorentzianParams::from_array([f64::NAN; 4]),
                posterior: None,
                goodness: reduced_chi2(s, &p, opts.readout_sigma),
            },
        };
        return Err(Error::NotConverged {
            iterations,
            best: Box::new(best),
        });
    }
    let cov = covariance(s, &p, opts)?;
    let fit = result(s, p, &cov, opts.readout_sigma);
    if let Some(limit) = opts.max_reduced_chi2 {
        if !(fit.goodness <= limit) {
            return Err(Error::PoorFit {
                goodness: fit.goodness,
                limit,
            });
        }
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector_noise::{sample_ccd_spectrum, CcdModel};
    use crate::line_fitter::initial_guess;
    use crate::seed;
    use crate::spectral_model::eval_lorentzian;
    use crate::spectrum::WavelengthGrid;

    fn synth(p: &LorentzianParams, grid: &WavelengthGrid) -> Spectrum {
        Spectrum::new(*grid, grid.wavelengths().map(|l| eval_lorentzian(p, l)).collect(), 1.0)
            .unwrap()
    }

    fn truth() -> LorentzianParams {
        LorentzianParams::new(738.03, 1.2, 5e4, 200.0).unwrap()
    }

    #[test]
    fn recovers_noiseless_line() {
        let grid = WavelengthGrid::default();
        let s = synth(&truth(), &grid);
        let t = truth().to_array();
        let init = LorentzianParams::from_array([t[0] + 0.12, t[1] * 1.1, t[2] * 0.9, t[3] * 1.1]);
        for weighting in [Weighting::Uniform, Weighting::NoiseModel] {
            let opts = LsqOptions { weighting, ..Default::default() };
            let fit = fit_least_squares(&s, &init, &opts).unwrap();
            let got = fit.params.to_array();
            for k in 0..4 {
                assert!((got[k] - t[k]).abs() <= 1e-6 * t[k].abs(), "{weighting:?} k={k}");
            }
            assert!(fit.goodness < 1e-6);
        }
    }

    #[test]
    fn flat_spectrum_is_ill_conditioned() {
        let grid = WavelengthGrid::default();
        let flat = Spectrum::new(grid, vec![100.0; grid.n_bins], 1.0).unwrap();
        let init = truth();
        assert!(matches!(
            fit_least_squares(&flat, &init, &LsqOptions::default()),
            Err(Error::IllConditioned(_))
        ));
        let noisy = sample_ccd_spectrum(&flat, &CcdModel::default(), 5).unwrap();
        assert!(matches!(
            fit_least_squares(&noisy, &init, &LsqOptions::default()),
            Err(Error::IllConditioned(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_best_so_far() {
        let grid = WavelengthGrid::default();
        let s = synth(&truth(), &grid);
        let init = LorentzianParams::new(738.5, 2.0, 3e4, 100.0).unwrap();
        let opts = LsqOptions { max_iterations: 1, ..Default::default() };
        match fit_least_squares(&s, &init, &opts) {
            Err(Error::NotConverged { iterations, best }) => {
                assert_eq!(iterations, 1);
                assert!(best.params.center_nm.is_finite());
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    // A start on the baseline far from the peak must either find the line or
    // be rejected; a wrong answer never passes silently.
    #[test]
    fn far_start_is_recovered_or_rejected() {
        let grid = WavelengthGrid::default();
        let expected = synth(&truth(), &grid);
        for k in 0..20 {
            let s = sample_ccd_spectrum(&expected, &CcdModel::default(), seed::derive(3, k)).unwrap();
            let init = LorentzianParams::new(grid.start_nm + 1.0 + 0.5 * k as f64, 0.3, 100.0, 200.0)
                .unwrap();
            match fit_least_squares(&s, &init, &LsqOptions::default()) {
                Ok(fit) => {
                    assert!((fit.params.center_nm - truth().center_nm).abs() < 5.0 * fit.sigmas.center_nm);
                }
                Err(Error::PoorFit { .. } | Error::NotConverged { .. } | Error::IllConditioned(_)) => {}
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn initial_guess_is_close() {
        let grid = WavelengthGrid::default();
        let g = initial_guess(&synth(&truth(), &grid));
        assert!((g.center_nm - 738.03).abs() < 0.05);
        assert!((g.fwhm_nm / 1.2 - 1.0).abs() < 0.2);
    }

    #[test]
    fn uniform_fit_is_scale_invariant() {
        let grid = WavelengthGrid::default();
        let expected = synth(&truth(), &grid);
        let s = sample_ccd_spectrum(&expected, &CcdModel::default(), 9).unwrap();
        let opts = LsqOptions { weighting: Weighting::Uniform, ..Default::default() }.unchecked();
        let a = fit_least_squares(&s, &initial_guess(&s), &opts).unwrap();
        for c in [0.25, 3.0, 1e3] {
            let scaled = s.scaled(c);
            let opts_c = LsqOptions { readout_sigma: 10.0 * c, ..opts };
            let b = fit_least_squares(&scaled, &initial_guess(&scaled), &opts_c).unwrap();
            let rel = (a.params.center_nm - b.params.center_nm).abs() / a.params.center_nm;
            assert!(rel < 1e-9, "c={c} rel={rel}");
        }
    }

    #[test]
    fn translation_equivariance() {
        let grid = WavelengthGrid::default();
        let expected = synth(&truth(), &grid);
        let s = sample_ccd_spectrum(&expected, &CcdModel::default(), 21).unwrap();
        let a = fit_least_squares(&s, &initial_guess(&s), &LsqOptions::default()).unwrap();
        let delta = 3.37;
        let moved = Spectrum { grid: grid.shifted(delta), ..s.clone() };
        let b = fit_least_squares(&moved, &initial_guess(&moved), &LsqOptions::default()).unwrap();
        assert!((b.params.center_nm - a.params.center_nm - delta).abs() < 1e-9);
    }
}
