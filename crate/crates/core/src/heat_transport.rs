//! Steady-state heating of a probe by a laser-heated array of gold pads on a
//! glass substrate. Each absorbing region acts as a point source whose
//! temperature rise falls off as `P / (2πκr)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::stats;

pub const DEFAULT_PAD_SIZE_UM: f64 = 2.0;
pub const DEFAULT_PAD_THICKNESS_NM: f64 = 50.0;
/// Glass-like substrate, W/(m·K).
pub const DEFAULT_CONDUCTIVITY: f64 = 1.0;
/// Heating-spot FWHM at the optical resolution, µm.
pub const DEFAULT_SPOT_FWHM_UM: f64 = 0.3;
/// Nominal absorbance of a 50 nm gold film at 520 nm.
pub const EXPECTED_GOLD_ABSORBANCE: f64 = 0.35;
pub const DEFAULT_SUBGRID: usize = 4;

const FWHM_TO_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatScene {
    pub pad_centers_um: Vec<[f64; 2]>,
    pub pad_size_um: f64,
    /// Metadata only; the thermal model is two-dimensional in the pads.
    pub pad_thickness_nm: f64,
    pub substrate_conductivity: f64,
    pub absorbance: f64,
    pub probe_position_um: [f64; 2],
}

impl HeatScene {
    pub fn new(pad_centers_um: Vec<[f64; 2]>, probe_position_um: [f64; 2]) -> Result<Self> {
        let s = Self {
            pad_centers_um,
            pad_size_um: DEFAULT_PAD_SIZE_UM,
            pad_thickness_nm: DEFAULT_PAD_THICKNESS_NM,
            substrate_conductivity: DEFAULT_CONDUCTIVITY,
            absorbance: EXPECTED_GOLD_ABSORBANCE,
            probe_position_um,
        };
        s.validate()?;
        Ok(s)
    }

    /// `nx × ny` pads on a square lattice of `pitch_um`, the first centred on
    /// `origin_um`.
    pub fn periodic_array(
        nx: usize,
        ny: usize,
        pitch_um: f64,
        origin_um: [f64; 2],
        probe_position_um: [f64; 2],
    ) -> Result<Self> {
        let mut pads = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                pads.push([
                    origin_um[0] + ix as f64 * pitch_um,
                    origin_um[1] + iy as f64 * pitch_um,
                ]);
            }
        }
        Self::new(pads, probe_position_um)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.substrate_conductivity > 0.0) {
            return Err(Error::contract("substrate conductivity must be positive"));
        }
        if !(0.0..=1.0).contains(&self.absorbance) {
            return Err(Error::contract("absorbance must lie in [0, 1]"));
        }
        if !(self.pad_size_um > 0.0) {
            return Err(Error::contract("pad size must be positive"));
        }
        let s = self.pad_size_um * (1.0 - 1e-12);
        for (i, a) in self.pad_centers_um.iter().enumerate() {
            if !(a[0].is_finite() && a[1].is_finite()) {
                return Err(Error::contract(format!("pad {i} has a non-finite centre")));
            }
            for (j, b) in self.pad_centers_um.iter().enumerate().skip(i + 1) {
                if (a[0] - b[0]).abs() < s && (a[1] - b[1]).abs() < s {
                    return Err(Error::contract(format!("pads {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }

    /// Scene moved rigidly by `d`, probe included.
    pub fn translated(&self, d: [f64; 2]) -> Self {
        Self {
            pad_centers_um: self
                .pad_centers_um
                .iter()
                .map(|p| [p[0] + d[0], p[1] + d[1]])
                .collect(),
            probe_position_um: [self.probe_position_um[0] + d[0], self.probe_position_um[1] + d[1]],
            ..self.clone()
        }
    }

    fn pad_bounds(&self, c: &[f64; 2]) -> ([f64; 2], [f64; 2]) {
        let h = 0.5 * self.pad_size_um;
        ([c[0] - h, c[0] + h], [c[1] - h, c[1] + h])
    }
}

fn check_beam(p_h: f64, spot_fwhm_um: f64) -> Result<f64> {
    if !(p_h >= 0.0 && p_h.is_finite()) {
        return Err(Error::contract("heater power must be non-negative"));
    }
    if !(spot_fwhm_um > 0.0) {
        return Err(Error::contract("spot FWHM must be positive"));
    }
    Ok(spot_fwhm_um / FWHM_TO_SIGMA)
}

/// Fraction of a 1-D normal `N(mu, sigma²)` inside `[a, b]`.
fn interval_mass(a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    let k = std::f64::consts::SQRT_2 * sigma;
    0.5 * (erf((b - mu) / k) - erf((a - mu) / k))
}

/// Mean of `N(mu, sigma²)` truncated to `[a, b]`.
fn interval_centroid(a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    let mass = interval_mass(a, b, mu, sigma);
    if mass < 1e-14 {
        return 0.5 * (a + b);
    }
    let phi = |x: f64| (-0.5 * ((x - mu) / sigma).powi(2)).exp() / (2.0 * PI).sqrt();
    (mu + sigma * (phi(a) - phi(b)) / mass).clamp(a, b)
}

/// Power absorbed from a Gaussian spot at `r_h`: absorbance times the part of
/// the beam landing on any pad.
pub fn absorbed_power(scene: &HeatScene, r_h: [f64; 2], p_h: f64, spot_fwhm_um: f64) -> Result<f64> {
    let sigma = check_beam(p_h, spot_fwhm_um)?;
    let overlap: f64 = scene
        .pad_centers_um
        .iter()
        .map(|c| {
            let (x, y) = scene.pad_bounds(c);
            interval_mass(x[0], x[1], r_h[0], sigma) * interval_mass(y[0], y[1], r_h[1], sigma)
        })
        .sum();
    Ok(scene.absorbance * p_h * overlap)
}

fn point_source(power: f64, kappa: f64, from: [f64; 2], to: [f64; 2]) -> Result<f64> {
    let r = (from[0] - to[0]).hypot(from[1] - to[1]);
    if r < 1e-9 {
        return Err(Error::Singularity {
            x_um: to[0],
            y_um: to[1],
        });
    }
    Ok(power / (2.0 * PI * kappa * r * 1e-6))
}

/// Temperature rise at the probe with every illuminated pad split into an
/// `n × n` grid of cells, each a point source at its absorbed-power centroid.
pub fn delta_T_subdivided(
    scene: &HeatScene,
    r_h: [f64; 2],
    p_h: f64,
    spot_fwhm_um: f64,
    n: usize,
) -> Result<f64> {
    let sigma = check_beam(p_h, spot_fwhm_um)?;
    if n == 0 {
        return Err(Error::contract("sub-grid needs at least one cell"));
    }
    let cell = scene.pad_size_um / n as f64;
    let mut total = 0.0;
    for c in &scene.pad_centers_um {
        let (x, y) = scene.pad_bounds(c);
        if interval_mass(x[0], x[1], r_h[0], sigma) * interval_mass(y[0], y[1], r_h[1], sigma) == 0.0 {
            continue;
        }
        for i in 0..n {
            let (xa, xb) = (x[0] + i as f64 * cell, x[0] + (i + 1) as f64 * cell);
            let mx = interval_mass(xa, xb, r_h[0], sigma);
            if mx == 0.0 {
                continue;
            }
            let cx = interval_centroid(xa, xb, r_h[0], sigma);
            for j in 0..n {
                let (ya, yb) = (y[0] + j as f64 * cell, y[0] + (j + 1) as f64 * cell);
                let power = scene.absorbance * p_h * mx * interval_mass(ya, yb, r_h[1], sigma);
                if power == 0.0 {
                    continue;
                }
                let cy = interval_centroid(ya, yb, r_h[1], sigma);
                total += point_source(power, scene.substrate_conductivity, [cx, cy], scene.probe_position_um)?;
            }
        }
    }
    Ok(total)
}

/// Temperature rise at the probe. Beyond one pad size the absorbed power acts
/// as a single point source at the heater; closer in, the pads are subdivided
/// [`DEFAULT_SUBGRID`]-fold per side.
pub fn steady_state_delta_T(scene: &HeatScene, r_h: [f64; 2], p_h: f64, spot_fwhm_um: f64) -> Result<f64> {
    let p = scene.probe_position_um;
    let r = (p[0] - r_h[0]).hypot(p[1] - r_h[1]);
    if r < 1e-9 {
        return Err(Error::Singularity {
            x_um: r_h[0],
            y_um: r_h[1],
        });
    }
    if r >= scene.pad_size_um {
        let absorbed = absorbed_power(scene, r_h, p_h, spot_fwhm_um)?;
        point_source(absorbed, scene.substrate_conductivity, r_h, p)
    } else {
        delta_T_subdivided(scene, r_h, p_h, spot_fwhm_um, DEFAULT_SUBGRID)
    }
}

/// Rectangular raster of heater positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeaterGrid {
    pub x0_um: f64,
    pub y0_um: f64,
    pub dx_um: f64,
    pub dy_um: f64,
    pub nx: usize,
    pub ny: usize,
    /// Nodes closer than this to the probe are masked.
    pub exclusion_radius_um: f64,
}

impl HeaterGrid {
    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::contract("heater grid must be non-empty"));
        }
        if !(self.dx_um > 0.0 && self.dy_um > 0.0) {
            return Err(Error::contract("heater grid spacing must be positive"));
        }
        if !(self.exclusion_radius_um >= 0.0) {
            return Err(Error::contract("exclusion radius must be non-negative"));
        }
        Ok(())
    }

    /// Node `(ix, iy)`, row-major index `iy·nx + ix`.
    pub fn node(&self, ix: usize, iy: usize) -> [f64; 2] {
        [self.x0_um + ix as f64 * self.dx_um, self.y0_um + iy as f64 * self.dy_um]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMap {
    pub grid: HeaterGrid,
    pub heater_power_W: f64,
    /// Row-major temperature rise at the probe, K. Masked nodes hold 0.
    pub delta_T_K: Vec<f64>,
    pub masked: Vec<bool>,
}

impl ScanMap {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.delta_T_K[iy * self.grid.nx + ix]
    }
}

/// Temperature rise at the probe for every heater node, in parallel.
pub fn scan_heat_map(scene: &HeatScene, grid: &HeaterGrid, p_h: f64, spot_fwhm_um: f64) -> Result<ScanMap> {
    scene.validate()?;
    grid.validate()?;
    check_beam(p_h, spot_fwhm_um)?;
    let p = scene.probe_position_um;
    let cells: Vec<(f64, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let r_h = grid.node(k % grid.nx, k / grid.nx);
            let r = (r_h[0] - p[0]).hypot(r_h[1] - p[1]);
            if r <= grid.exclusion_radius_um || r < 1e-9 {
                return Ok((0.0, true));
            }
            Ok((steady_state_delta_T(scene, r_h, p_h, spot_fwhm_um)?, false))
        })
        .collect::<Result<_>>()?;
    let (delta_T_K, masked) = cells.into_iter().unzip();
    Ok(ScanMap {
        grid: *grid,
        heater_power_W: p_h,
        delta_T_K,
        masked,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatObservation {
    pub heater_um: [f64; 2],
    pub delta_T_K: f64,
}

/// Unmasked map nodes as observations.
pub fn observations_from_map(map: &ScanMap) -> Vec<HeatObservation> {
    (0..map.grid.len())
        .filter(|&k| !map.masked[k])
        .map(|k| HeatObservation {
            heater_um: map.grid.node(k % map.grid.nx, k / map.grid.nx),
            delta_T_K: map.delta_T_K[k],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorbanceFit {
    pub absorbance: f64,
    pub standard_error: f64,
    pub n_points: usize,
}

/// One-parameter fit of the absorbance with every other scene parameter
/// fixed. Residuals are weighted relative to the model (multiplicative
/// noise), so the estimate is the mean of observed over unit-absorbance
/// model and the error its standard error.
pub fn fit_absorbance(
    observed: &[HeatObservation],
    scene: &HeatScene,
    p_h: f64,
    spot_fwhm_um: f64,
) -> Result<AbsorbanceFit> {
    let unit = HeatScene {
        absorbance: 1.0,
        ..scene.clone()
    };
    unit.validate()?;
    if observed.iter().all(|o| o.delta_T_K == 0.0) {
        return Err(Error::IllPosed("all observed temperature rises are zero".into()));
    }
    let p = scene.probe_position_um;
    let mut ratios = Vec::with_capacity(observed.len());
    let mut radii: Vec<f64> = Vec::new();
    for o in observed {
        if !o.delta_T_K.is_finite() {
            return Err(Error::contract("observed temperature rise must be finite"));
        }
        let g = steady_state_delta_T(&unit, o.heater_um, p_h, spot_fwhm_um)?;
        if g <= 0.0 {
            continue;
        }
        ratios.push(o.delta_T_K / g);
        radii.push((o.heater_um[0] - p[0]).hypot(o.heater_um[1] - p[1]));
    }
    radii.sort_by(f64::total_cmp);
    radii.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if radii.len() < 5 {
        return Err(Error::contract(format!(
            "absorbance fit needs at least 5 distinct radii, got {}",
            radii.len()
        )));
    }
    let n = ratios.len();
    Ok(AbsorbanceFit {
        absorbance: stats::mean(&ratios),
        standard_error: stats::std_dev(&ratios) / (n as f64).sqrt(),
        n_points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_pad() -> HeatScene {
        let mut s = HeatScene::new(vec![[0.0, 0.0]], [20.0, 0.0]).unwrap();
        s.absorbance = 0.4;
        s
    }

    /// Midpoint-rule 2-D quadrature of the Gaussian spot over one pad.
    fn quadrature_fraction(pad: [f64; 2], size: f64, r_h: [f64; 2], fwhm: f64, n: usize) -> f64 {
        let sigma = fwhm / FWHM_TO_SIGMA;
        let h = size / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = pad[0] - 0.5 * size + (i as f64 + 0.5) * h;
                let y = pad[1] - 0.5 * size + (j as f64 + 0.5) * h;
                let r2 = (x - r_h[0]).powi(2) + (y - r_h[1]).powi(2);
                acc += (-0.5 * r2 / (sigma * sigma)).exp();
            }
        }
        acc * h * h / (2.0 * PI * sigma * sigma)
    }

    #[test]
    fn centred_spot_fully_absorbed() {
        let s = single_pad();
        let p = absorbed_power(&s, [0.0, 0.0], 1e-3, 0.3).unwrap();
        assert!((p / (0.4e-3) - 1.0).abs() < 0.01);
    }

    #[test]
    fn distant_spot_not_absorbed() {
        let s = single_pad();
        assert!(absorbed_power(&s, [1.0 + 5.0 * 0.3, 0.0], 1e-3, 0.3).unwrap() < 1e-9);
        assert!(absorbed_power(&s, [1.0 + 5.0 * 0.3, 0.0], 1.0, 0.3).unwrap() < 1e-6);
    }

    #[test]
    fn edge_spot_half_absorbed() {
        let s = single_pad();
        let p = absorbed_power(&s, [1.0, 0.0], 1e-3, 0.3).unwrap();
        assert!((p / (0.2e-3) - 1.0).abs() < 0.02);
    }

    #[test]
    fn overlap_matches_quadrature() {
        let s = single_pad();
        for r_h in [[0.3, -0.2], [0.9, 0.95], [1.2, 0.0], [-0.7, 1.1]] {
            for fwhm in [0.3, 1.0] {
                let closed = absorbed_power(&s, r_h, 1.0, fwhm).unwrap() / s.absorbance;
                let quad = quadrature_fraction([0.0, 0.0], 2.0, r_h, fwhm, 600);
                assert!((closed - quad).abs() < 1e-5, "{r_h:?} {fwhm}: {closed} {quad}");
            }
        }
    }

    #[test]
    fn point_source_formula() {
        let mut s = HeatScene::new(vec![[0.0, 0.0]], [5.0, 0.0]).unwrap();
        s.absorbance = 1.0;
        // Spot ≪ pad at the centre: absorbed power equals incident power.
        let dt = steady_state_delta_T(&s, [0.0, 0.0], 0.5e-3, 0.01).unwrap();
        let expected = 0.5e-3 / (2.0 * PI * 1.0 * 5e-6);
        assert_relative_eq!(dt, expected, max_relative = 1e-12);
        assert!((dt - 15.915).abs() < 1e-3);
    }

    #[test]
    fn far_field_and_linearity() {
        let s = single_pad();
        let a = steady_state_delta_T(&s, [0.0, 0.0], 1e-3, 0.3).unwrap();
        let far = HeatScene { probe_position_um: [40.0, 0.0], ..s.clone() };
        let b = steady_state_delta_T(&far, [0.0, 0.0], 1e-3, 0.3).unwrap();
        assert_relative_eq!(a, 2.0 * b, max_relative = 1e-12);
        let c = steady_state_delta_T(&s, [0.0, 0.0], 2e-3, 0.3).unwrap();
        assert_relative_eq!(c, 2.0 * a, max_relative = 1e-12);
    }

    #[test]
    fn coincident_probe_is_singular() {
        let s = HeatScene::new(vec![[0.0, 0.0]], [0.0, 0.0]).unwrap();
        assert!(matches!(
            steady_state_delta_T(&s, [0.0, 0.0], 1e-3, 0.3),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn subgrid_refinement_converges() {
        let s = HeatScene::new(vec![[0.0, 0.0]], [2.5, 0.4]).unwrap();
        for r_h in [[0.0, 0.0], [0.5, 0.5], [-0.8, 0.2]] {
            let coarse = delta_T_subdivided(&s, r_h, 1e-3, 1.0, 4).unwrap();
            let fine = delta_T_subdivided(&s, r_h, 1e-3, 1.0, 8).unwrap();
            assert!((coarse / fine - 1.0).abs() < 0.01, "{r_h:?}: {coarse} {fine}");
        }
    }

    #[test]
    fn overlapping_pads_rejected() {
        assert!(HeatScene::new(vec![[0.0, 0.0], [1.0, 1.0]], [9.0, 9.0]).is_err());
        assert!(HeatScene::new(vec![[0.0, 0.0], [2.0, 0.0]], [9.0, 9.0]).is_ok());
        let mut s = single_pad();
        s.absorbance = 1.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn empty_scene_map_is_zero() {
        let s = HeatScene::new(Vec::new(), [0.0, 0.0]).unwrap();
        let g = HeaterGrid { x0_um: -5.0, y0_um: -5.0, dx_um: 0.5, dy_um: 0.5, nx: 21, ny: 21, exclusion_radius_um: 1.0 };
        let m = scan_heat_map(&s, &g, 1e-3, 0.3).unwrap();
        assert!(m.delta_T_K.iter().all(|&v| v == 0.0));
        assert!(m.masked.iter().any(|&b| b));
    }

    #[test]
    fn map_peaks_on_pad() {
        let s = HeatScene::new(vec![[4.0, 3.0]], [0.0, 0.0]).unwrap();
        let g = HeaterGrid { x0_um: -6.0, y0_um: -6.0, dx_um: 0.25, dy_um: 0.25, nx: 49, ny: 49, exclusion_radius_um: 1.0 };
        let m = scan_heat_map(&s, &g, 1e-3, 0.3).unwrap();
        let k = (0..g.len()).max_by(|&a, &b| m.delta_T_K[a].total_cmp(&m.delta_T_K[b])).unwrap();
        let node = g.node(k % g.nx, k / g.nx);
        assert!((node[0] - 4.0).abs() <= 1.0 && (node[1] - 3.0).abs() <= 1.0, "{node:?}");
    }

    #[test]
    fn absorbance_self_consistency() {
        let mut s = HeatScene::periodic_array(6, 6, 4.0, [-10.0, -10.0], [1.0, 1.0]).unwrap();
        s.absorbance = 0.27;
        let obs: Vec<HeatObservation> = s
            .pad_centers_um
            .iter()
            .map(|&c| HeatObservation { heater_um: c, delta_T_K: steady_state_delta_T(&s, c, 1e-3, 0.3).unwrap() })
            .collect();
        let fit = fit_absorbance(&obs, &s, 1e-3, 0.3).unwrap();
        assert!((fit.absorbance / 0.27 - 1.0).abs() < 1e-9);
        let zeros: Vec<HeatObservation> = obs.iter().map(|o| HeatObservation { delta_T_K: 0.0, ..*o }).collect();
        assert!(matches!(fit_absorbance(&zeros, &s, 1e-3, 0.3), Err(Error::IllPosed(_))));
        assert!(fit_absorbance(&obs[..3], &s, 1e-3, 0.3).is_err());
    }
}
