//! Affine-invariant ensemble sampler (Goodman & Weare stretch move).
//!
//! The ensemble is split into two halves; each half is updated against the
//! frozen complementary half. All random numbers for a half-sweep are drawn
//! before any log-probability is evaluated, so results depend only on the seed
//! even though proposals are evaluated in parallel.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_signal, fit_least_squares, model_value, noise_variance, reduced_chi2, FitResult,
    LsqOptions, N_PARAMS,
};
use crate::error::{Error, Result};
use crate::seed;
use crate::spectral_model::LorentzianParams;
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_walkers: usize,
    pub n_steps: usize,
    pub burn_in: usize,
    pub stretch_a: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_walkers: 32,
            n_steps: 2000,
            burn_in: 500,
            stretch_a: 2.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_walkers < 2 * dim {
            return Err(Error::contract(format!(
                "need at least {} walkers for {dim} parameters, got {}",
                2 * dim,
                self.n_walkers
            )));
        }
        if !(self.stretch_a > 1.0) {
            return Err(Error::contract("stretch scale must exceed 1"));
        }
        if self.burn_in >= self.n_steps {
            return Err(Error::contract("burn-in must be shorter than the chain"));
        }
        Ok(())
    }
}

/// Walker positions with their cached log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub positions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
}

impl Ensemble {
    pub fn new<F>(positions: Vec<Vec<f64>>, log_prob: &F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        if positions.len() < 2 {
            return Err(Error::contract("ensemble needs at least two walkers"));
        }
        let dim = positions[0].len();
        if dim == 0 || positions.iter().any(|p| p.len() != dim) {
            return Err(Error::contract("walkers must share a non-zero dimension"));
        }
        let log_probs = positions.iter().map(|p| log_prob(p)).collect();
        Ok(Self {
            positions,
            log_probs,
        })
    }

    pub fn dim(&self) -> usize {
        self.positions[0].len()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Stretch factor from a uniform draw `u ∈ [0, 1)`; the density of `z` is
/// proportional to `1/√z` on `[1/a, a]`.
#[inline]
pub fn stretch_z(a: f64, u: f64) -> f64 {
    let s = (a - 1.0) * u + 1.0;
    s * s / a
}

/// Metropolis acceptance probability `min(1, z^(d−1) · exp(Δ log p))`.
#[inline]
pub fn acceptance_probability(z: f64, dim: usize, delta_log_prob: f64) -> f64 {
    let log_ratio = (dim as f64 - 1.0) * z.ln() + delta_log_prob;
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

/// One full sweep over the ensemble. Returns the number of accepted moves.
pub fn stretch_move<F, R>(ens: &mut Ensemble, log_prob: &F, a: f64, rng: &mut R) -> Result<usize>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    if ens.len() < 2 {
        return Err(Error::contract("stretch move needs at least two walkers"));
    }
    if !(a > 1.0) {
        return Err(Error::contract("stretch scale must exceed 1"));
    }
    if let Some(k) = ens.log_probs.iter().position(|lp| !lp.is_finite()) {
        return Err(Error::contract(format!("walker {k} has non-finite log-probability")));
    }
    let n = ens.len();
    let dim = ens.dim();
    let split = n / 2;
    let halves = [(0..split), (split..n)];
    let mut accepted = 0;
    for h in 0..2 {
        let active = halves[h].clone();
        let other = halves[1 - h].clone();
        let draws: Vec<(usize, f64, f64)> = active
            .clone()
            .map(|_| {
                let j = rng.random_range(other.clone());
                let z = stretch_z(a, rng.random::<f64>());
                let u = rng.random::<f64>();
                (j, z, u)
            })
            .collect();
        let proposals: Vec<(Vec<f64>, f64)> = active
            .clone()
            .zip(&draws)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(k, &(j, z, _))| {
                let xk = &ens.positions[k];
                let xj = &ens.positions[j];
                let y: Vec<f64> = xk.iter().zip(xj).map(|(a, b)| b + z * (a - b)).collect();
                let lp = log_prob(&y);
                (y, if lp.is_nan() { f64::NEG_INFINITY } else { lp })
            })
            .collect();
        for ((k, (y, lp)), &(_, z, u)) in active.zip(proposals).zip(&draws) {
            if lp == f64::NEG_INFINITY {
                continue;
            }
            if u < acceptance_probability(z, dim, lp - ens.log_probs[k]) {
                ens.positions[k] = y;
                ens.log_probs[k] = lp;
                accepted += 1;
            }
        }
    }
    Ok(accepted)
}

/// Gaussian log-likelihood with shot + readout variance per bin, and a flat
/// prior restricting the centre to the grid and width, amplitude and baseline
/// to their physical ranges.
fn log_posterior(s: &Spectrum, readout_sigma: f64, p: &[f64]) -> f64 {
    let [c, fwhm, a, b] = [p[0], p[1], p[2], p[3]];
    if !(fwhm > 0.0 && a >= 0.0 && b >= 0.0) || !s.grid.contains(c) {
        return f64::NEG_INFINITY;
    }
    let q = [c, fwhm, a, b];
    -0.5 * s
        .iter()
        .map(|(l, y)| {
            let m = model_value(&q, l);
            let v = noise_variance(m, readout_sigma);
            (y - m).powi(2) / v + v.ln()
        })
        .sum::<f64>()
}

/// Posterior means and standard deviations of the line parameters.
///
/// Walkers start in a Gaussian cloud around a noise-weighted least-squares
/// solution (or around `init` with 1 % spreads if that fit fails).
pub fn fit_ensemble_mcmc(
    s: &Spectrum,
    init: &LorentzianParams,
    cfg: &SamplerConfig,
    readout_sigma: f64,
    seed: u64,
) -> Result<FitResult> {
    cfg.validate(N_PARAMS)?;
    check_signal(s, readout_sigma)?;
    init.validate()?;

    let lsq = LsqOptions::default().with_readout(readout_sigma).unchecked();
    let (start, spread) = match fit_least_squares(s, init, &lsq) {
        Ok(fit) => (fit.params.to_array(), fit.sigmas.to_array()),
        Err(_) => {
            let p = init.to_array();
            let spread = [
                0.01 * init.fwhm_nm,
                0.01 * init.fwhm_nm,
                0.01 * init.amplitude.max(1.0),
                0.01 * init.baseline.max(1.0),
            ];
            (p, spread)
        }
    };

    let target = |p: &[f64]| log_posterior(s, readout_sigma, p);
    let mut rng = seed::rng(seed);
    let mut positions = Vec::with_capacity(cfg.n_walkers);
    while positions.len() < cfg.n_walkers {
        let p: Vec<f64> = (0..N_PARAMS)
            .map(|k| {
                let g: f64 = StandardNormal.sample(&mut rng);
                start[k] + spread[k].max(1e-12) * g
            })
            .collect();
        if target(&p).is_finite() {
            positions.push(p);
        }
    }
    let mut ens = Ensemble::new(positions, &target)?;

    let kept = cfg.n_steps - cfg.burn_in;
    let mut samples = Vec::with_capacity(kept * cfg.n_walkers);
    let mut accepted = 0usize;
    for step in 0..cfg.n_steps {
        let acc = stretch_move(&mut ens, &target, cfg.stretch_a, &mut rng)?;
        if step >= cfg.burn_in {
            accepted += acc;
            samples.extend(ens.positions.iter().map(|p| [p[0], p[1], p[2], p[3]]));
        }
    }
    let acceptance = accepted as f64 / (kept * cfg.n_walkers) as f64;
    if acceptance < 0.05 {
        return Err(Error::MixingFailure { acceptance });
    }

    let n = samples.len() as f64;
    let mut mean = [0.0; 4];
    for smp in &samples {
        for k in 0..4 {
            mean[k] += smp[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 4];
    for smp in &samples {
        for k in 0..4 {
            var[k] += (smp[k] - mean[k]).powi(2);
        }
    }
    let sd = var.map(|v| (v / (n - 1.0)).sqrt());

    Ok(FitResult {
        params: LorentzianParams::from_array(mean),
        sigmas: LorentzianParams::from_array(sd),
        goodness: reduced_chi2(s, &mean, readout_sigma),
        posterior: Some(samples),
    })
}
