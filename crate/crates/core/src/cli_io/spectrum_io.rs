//! Spectrum CSV: `#` metadata lines, a `wavelength_nm,counts` header, rows.
//!
//! ```text
//! # exposure_s = 1
//! # start_nm = 719.2625
//! # step_nm = 0.025
//! # n_bins = 1500
//! wavelength_nm,counts
//! 719.2625,20113
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectrum::{Spectrum, WavelengthGrid};

const HEADER: &str = "wavelength_nm,counts";

pub fn spectrum_to_csv(s: &Spectrum) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# exposure_s = {}", s.exposure_s);
    let _ = writeln!(out, "# start_nm = {}", s.grid.start_nm);
    let _ = writeln!(out, "# step_nm = {}", s.grid.step_nm);
    let _ = writeln!(out, "# n_bins = {}", s.grid.n_bins);
    out.push_str(HEADER);
    out.push('\n');
    for (l, c) in s.iter() {
        let _ = writeln!(out, "{l},{c}");
    }
    out
}

pub fn export_spectrum(s: &Spectrum, path: &Path) -> Result<()> {
    std::fs::write(path, spectrum_to_csv(s))?;
    Ok(())
}

pub fn import_spectrum(path: &Path) -> Result<Spectrum> {
    parse_spectrum_csv(&std::fs::read_to_string(path)?)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn number(line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("{what} `{}` is not a number", field.trim())))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what} is not finite")));
    }
    Ok(v)
}

pub fn parse_spectrum_csv(text: &str) -> Result<Spectrum> {
    let mut meta: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut header_line = None;
    let mut wavelengths = Vec::new();
    let mut counts = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if header_line.is_some() {
                return Err(parse_err(line, "metadata after the column header"));
            }
            if let Some((key, value)) = rest.split_once('=') {
                meta.insert(key.trim().to_string(), (line, value.trim().to_string()));
            }
            continue;
        }
        if header_line.is_none() {
            if trimmed != HEADER {
                return Err(parse_err(line, format!("expected header `{HEADER}`, found `{trimmed}`")));
            }
            header_line = Some(line);
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", fields.len())));
        }
        let l = number(line, fields[0], "wavelength")?;
        let c = number(line, fields[1], "count")?;
        if let Some(&prev) = wavelengths.last() {
            if l == prev {
                return Err(parse_err(line, format!("duplicate wavelength {l} nm")));
            }
            if l < prev {
                return Err(parse_err(line, format!("wavelength {l} nm is not increasing")));
            }
        }
        wavelengths.push(l);
        counts.push(c);
    }
    let header_line = header_line.ok_or_else(|| parse_err(0, "missing column header"))?;
    let get = |key: &str| -> Result<f64> {
        let (line, v) = meta
            .get(key)
            .ok_or_else(|| parse_err(header_line, format!("missing metadata `{key}`")))?;
        number(*line, v, key)
    };
    let exposure = get("exposure_s")?;
    let start = get("start_nm")?;
    let step = get("step_nm")?;
    let n_bins = get("n_bins")?;
    if n_bins.fract() != 0.0 || n_bins < 1.0 {
        return Err(parse_err(meta["n_bins"].0, "n_bins must be a positive integer"));
    }
    let grid = WavelengthGrid::new(start, step, n_bins as usize)
        .map_err(|e| parse_err(header_line, e.to_string()))?;
    if wavelengths.len() != grid.n_bins {
        return Err(parse_err(
            header_line + wavelengths.len(),
            format!("{} rows for {} bins", wavelengths.len(), grid.n_bins),
        ));
    }
    for (i, &l) in wavelengths.iter().enumerate() {
        if (l - grid.wavelength(i)).abs() > 1e-6 * step {
            return Err(parse_err(
                header_line + 1 + i,
                format!("wavelength {l} nm off the declared grid ({} nm)", grid.wavelength(i)),
            ));
        }
    }
    Spectrum::new(grid, counts, exposure).map_err(|e| parse_err(header_line, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Spectrum {
        let grid = WavelengthGrid::default();
        Spectrum::new(grid, (0..grid.n_bins).map(|i| (i * 7 % 13) as f64 + 0.25).collect(), 2.5).unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let s = sample();
        let back = parse_spectrum_csv(&spectrum_to_csv(&s)).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.grid.n_bins, 1500);
    }

    #[test]
    fn duplicate_row_named() {
        let text = "# exposure_s = 1\n# start_nm = 700\n# step_nm = 0.5\n# n_bins = 3\nwavelength_nm,counts\n700,1\n700,2\n701,3\n";
        match parse_spectrum_csv(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 7);
                assert!(message.contains("duplicate"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_monotone_nan_and_missing_metadata() {
        let head = "# exposure_s = 1\n# start_nm = 700\n# step_nm = 0.5\n# n_bins = 3\nwavelength_nm,counts\n";
        let e = parse_spectrum_csv(&format!("{head}700,1\n700.5,2\n700.25,3\n")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 8, .. }));
        let e = parse_spectrum_csv(&format!("{head}700,1\n700.5,NaN\n701,3\n")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 7, .. }));
        let e = parse_spectrum_csv("# start_nm = 700\n# step_nm = 0.5\n# n_bins = 1\nwavelength_nm,counts\n700,1\n")
            .unwrap_err();
        assert!(matches!(e, Error::Parse { message, .. } if message.contains("exposure_s")));
    }
}
