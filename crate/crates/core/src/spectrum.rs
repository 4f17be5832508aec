use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spectrometer resolution, nm per bin.
pub const DEFAULT_STEP_NM: f64 = 0.025;
/// CCD width in bins.
pub const DEFAULT_N_BINS: usize = 1500;

/// Uniform wavelength axis. Bin `i` is centred on `start_nm + i * step_nm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid {
    pub start_nm: f64,
    pub step_nm: f64,
    pub n_bins: usize,
}

impl WavelengthGrid {
    pub fn new(start_nm: f64, step_nm: f64, n_bins: usize) -> Result<Self> {
        let grid = Self {
            start_nm,
            step_nm,
            n_bins,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid of `n_bins` bins whose middle sits on `center_nm`.
    pub fn centered(center_nm: f64, step_nm: f64, n_bins: usize) -> Result<Self> {
        let half = (n_bins as f64 - 1.0) / 2.0;
        Self::new(center_nm - half * step_nm, step_nm, n_bins)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_nm > 0.0 && self.step_nm.is_finite()) {
            return Err(Error::contract(format!(
                "grid step must be positive, got {}",
                self.step_nm
            )));
        }
        if self.n_bins < 2 {
            return Err(Error::contract("grid needs at least 2 bins"));
        }
        if !self.start_nm.is_finite() {
            return Err(Error::contract("grid start must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn wavelength(&self, i: usize) -> f64 {
        self.start_nm + i as f64 * self.step_nm
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_bins).map(|i| self.wavelength(i))
    }

    pub fn end_nm(&self) -> f64 {
        self.wavelength(self.n_bins - 1)
    }

    /// Index of the bin whose centre is nearest `lambda_nm`, if inside the grid.
    pub fn bin_of(&self, lambda_nm: f64) -> Option<usize> {
        let x = ((lambda_nm - self.start_nm) / self.step_nm).round();
        (x >= 0.0 && (x as usize) < self.n_bins).then_some(x as usize)
    }

    pub fn contains(&self, lambda_nm: f64) -> bool {
        let half = 0.5 * self.step_nm;
        lambda_nm >= self.start_nm - half && lambda_nm <= self.end_nm() + half
    }

    pub fn shifted(&self, delta_nm: f64) -> Self {
        Self {
            start_nm: self.start_nm + delta_nm,
            ..*self
        }
    }
}

impl Default for WavelengthGrid {
    fn default() -> Self {
        Self::centered(738.0, DEFAULT_STEP_NM, DEFAULT_N_BINS).expect("default grid is valid")
    }
}

/// Wavelength-binned counts from one exposure. Counts are real-valued: expected
/// spectra are never integral, and readout noise makes observed ones fractional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub grid: WavelengthGrid,
    pub counts: Vec<f64>,
    pub exposure_s: f64,
}

impl Spectrum {
    pub fn new(grid: WavelengthGrid, counts: Vec<f64>, exposure_s: f64) -> Result<Self> {
        let s = Self {
            grid,
            counts,
            exposure_s,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn zeros(grid: WavelengthGrid, exposure_s: f64) -> Result<Self> {
        Self::new(grid, vec![0.0; grid.n_bins], exposure_s)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.counts.len() != self.grid.n_bins {
            return Err(Error::contract(format!(
                "spectrum has {} counts for {} bins",
                self.counts.len(),
                self.grid.n_bins
            )));
        }
        if !(self.exposure_s > 0.0 && self.exposure_s.is_finite()) {
            return Err(Error::contract(format!(
                "exposure must be positive, got {}",
                self.exposure_s
            )));
        }
        if let Some(i) = self.counts.iter().position(|c| !c.is_finite()) {
            return Err(Error::contract(format!("non-finite count in bin {i}")));
        }
        Ok(())
    }

    /// Total counts in the spectrum (N_ph for a photon-limited exposure).
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.wavelengths().zip(self.counts.iter().copied())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            counts: self.counts.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }

    /// Bin-wise sum. Grids must match exactly.
    pub fn add(&self, other: &Spectrum) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::contract("cannot add spectra on different grids"));
        }
        Ok(Self {
            counts: self
                .counts
                .iter()
                .zip(&other.counts)
                .map(|(a, b)| a + b)
                .collect(),
            ..self.clone()
        })
    }

    pub fn argmax(&self) -> usize {
        self.counts
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
            .0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_matches_ccd_geometry() {
        let g = WavelengthGrid::default();
        assert_eq!(g.n_bins, 1500);
        assert_eq!(g.step_nm, 0.025);
        let mid = 0.5 * (g.start_nm + g.end_nm());
        assert!((mid - 738.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(WavelengthGrid::new(700.0, 0.0, 10).is_err());
        assert!(WavelengthGrid::new(700.0, -0.1, 10).is_err());
        assert!(WavelengthGrid::new(700.0, 0.1, 1).is_err());
    }

    #[test]
    fn spectrum_length_checked() {
        let g = WavelengthGrid::new(700.0, 0.1, 4).unwrap();
        assert!(Spectrum::new(g, vec![0.0; 3], 1.0).is_err());
        assert!(Spectrum::new(g, vec![0.0; 4], 0.0).is_err());
        assert!(Spectrum::new(g, vec![0.0, f64::NAN, 0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn bin_lookup() {
        let g = WavelengthGrid::new(700.0, 0.5, 10).unwrap();
        assert_eq!(g.bin_of(700.0), Some(0));
        assert_eq!(g.bin_of(701.2), Some(2));
        assert_eq!(g.bin_of(699.0), None);
        assert_eq!(g.bin_of(705.0), None);
    }
}
