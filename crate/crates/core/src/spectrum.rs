//! Wavelength-sampled spectral densities.
//!
//! [`Spectrum`] is the common currency between the coating simulation, the
//! emitter model and the analysis pipeline. Grids may be non-uniform; all
//! integrals use the trapezoidal rule on the stored samples, with linear
//! interpolation at window edges that fall between samples.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    wavelengths_nm: Vec<f64>,
    values: Vec<f64>,
    /// Column name of the value axis, written as the CSV header (e.g. `counts_per_s`).
    pub quantity: String,
    pub background_corrected: bool,
    pub label: String,
}

impl Spectrum {
    pub fn new(wavelengths_nm: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if wavelengths_nm.is_empty() {
            return Err(Error::invalid("wavelengths_nm", "grid is empty"));
        }
        if wavelengths_nm.len() != values.len() {
            return Err(Error::invalid(
                "values",
                format!(
                    "length {} does not match grid length {}",
                    values.len(),
                    wavelengths_nm.len()
                ),
            ));
        }
        if wavelengths_nm.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::invalid("wavelengths_nm", "must be finite and > 0"));
        }
        if wavelengths_nm.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("wavelengths_nm", "grid must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "must be finite"));
        }
        Ok(Self {
            wavelengths_nm,
            values,
            quantity: "value".to_string(),
            background_corrected: false,
            label: String::new(),
        })
    }

    /// Samples `f` on `grid`.
    pub fn from_fn(grid: &[f64], f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&w| f(w)).collect();
        Self::new(grid.to_vec(), values)
    }

    pub fn with_quantity(mut self, quantity: impl Into<String>) -> Self {
        self.quantity = quantity.into();
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths_nm
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min_wavelength(&self) -> f64 {
        self.wavelengths_nm[0]
    }

    pub fn max_wavelength(&self) -> f64 {
        *self.wavelengths_nm.last().unwrap()
    }

    pub fn contains(&self, wavelength_nm: f64) -> bool {
        wavelength_nm >= self.min_wavelength() && wavelength_nm <= self.max_wavelength()
    }

    /// Linear interpolation; `None` outside the grid.
    pub fn interpolate(&self, wavelength_nm: f64) -> Option<f64> {
        if !self.contains(wavelength_nm) {
            return None;
        }
        let w = &self.wavelengths_nm;
        let i = w.partition_point(|&x| x < wavelength_nm);
        if i == 0 {
            return Some(self.values[0]);
        }
        let (x0, x1) = (w[i - 1], w[i]);
        let (y0, y1) = (self.values[i - 1], self.values[i]);
        Some(y0 + (y1 - y0) * (wavelength_nm - x0) / (x1 - x0))
    }

    /// Index and value of the largest sample.
    pub fn argmax(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
    }

    pub fn max_value(&self) -> f64 {
        self.argmax().1
    }

    /// Largest sample within `[lo, hi]`, as `(wavelength, value)`.
    pub fn peak_in(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        self.wavelengths_nm
            .iter()
            .zip(&self.values)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .fold(None, |best: Option<(f64, f64)>, (&w, &v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((w, v)),
            })
    }

    /// Half-maximum crossings `(lo, hi)` around the global peak, linearly
    /// interpolated. `None` if the peak is not bracketed within the grid.
    pub fn half_maximum_crossings(&self) -> Option<(f64, f64)> {
        let (ipk, peak) = self.argmax();
        if !(peak > 0.0) {
            return None;
        }
        let half = 0.5 * peak;
        let w = &self.wavelengths_nm;
        let v = &self.values;
        let cross = |i: usize, j: usize| w[i] + (half - v[i]) * (w[j] - w[i]) / (v[j] - v[i]);
        let lo = (1..=ipk).rev().find(|&i| v[i - 1] < half).map(|i| cross(i - 1, i))?;
        let hi = (ipk..w.len() - 1).find(|&i| v[i + 1] < half).map(|i| cross(i, i + 1))?;
        Some((lo, hi))
    }

    pub fn fwhm(&self) -> Option<f64> {
        self.half_maximum_crossings().map(|(lo, hi)| hi - lo)
    }

    /// Trapezoidal integral over the whole grid.
    pub fn integrate(&self) -> f64 {
        self.wavelengths_nm
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(w, v)| 0.5 * (v[0] + v[1]) * (w[1] - w[0]))
            .sum()
    }

    /// Trapezoidal integral over `[lo, hi]`, which must lie inside the grid.
    pub fn integrate_range(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi) {
            return Err(Error::invalid("integration window", format!("[{lo}, {hi}] is empty")));
        }
        if !self.contains(lo) || !self.contains(hi) {
            return Err(Error::Domain(format!(
                "integration window [{lo}, {hi}] nm escapes grid [{}, {}] nm",
                self.min_wavelength(),
                self.max_wavelength()
            )));
        }
        let w = &self.wavelengths_nm;
        let v = &self.values;
        let start = w.partition_point(|&x| x <= lo);
        let end = w.partition_point(|&x| x < hi);
        let mut xs = Vec::with_capacity(end.saturating_sub(start) + 2);
        let mut ys = Vec::with_capacity(xs.capacity());
        xs.push(lo);
        ys.push(self.interpolate(lo).unwrap());
        for i in start..end {
            xs.push(w[i]);
            ys.push(v[i]);
        }
        xs.push(hi);
        ys.push(self.interpolate(hi).unwrap());
        Ok(xs
            .windows(2)
            .zip(ys.windows(2))
            .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
            .sum())
    }

    /// Resamples onto `grid` by linear interpolation. Points outside the
    /// source grid are dropped, so the result may be shorter than `grid`.
    pub fn resample(&self, grid: &[f64]) -> Result<Spectrum> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = grid
            .iter()
            .filter_map(|&w| self.interpolate(w).map(|v| (w, v)))
            .unzip();
        let mut out = Spectrum::new(xs, ys)?;
        out.quantity = self.quantity.clone();
        out.label = self.label.clone();
        out.background_corrected = self.background_corrected;
        Ok(out)
    }

    /// Applies `f(wavelength, value)` pointwise.
    pub fn map(&self, mut f: impl FnMut(f64, f64) -> f64) -> Spectrum {
        let values = self
            .wavelengths_nm
            .iter()
            .zip(&self.values)
            .map(|(&w, &v)| f(w, v))
            .collect();
        Spectrum {
            wavelengths_nm: self.wavelengths_nm.clone(),
            values,
            quantity: self.quantity.clone(),
            background_corrected: self.background_corrected,
            label: self.label.clone(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Spectrum {
        self.map(|_, v| v * factor)
    }

    /// Fraction of `other`'s span covered by this grid, in `[0, 1]`.
    pub fn overlap_fraction(&self, other: &Spectrum) -> f64 {
        let lo = self.min_wavelength().max(other.min_wavelength());
        let hi = self.max_wavelength().min(other.max_wavelength());
        let span = (self.max_wavelength() - self.min_wavelength())
            .min(other.max_wavelength() - other.min_wavelength());
        if hi <= lo {
            0.0
        } else if span <= 0.0 {
            1.0
        } else {
            ((hi - lo) / span).min(1.0)
        }
    }

    /// Reads a two-column CSV with one header line. The header of the second
    /// column becomes [`Spectrum::quantity`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Spectrum> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 {
            return Err(Error::invalid(
                "csv header",
                format!("expected 2 columns, found {}", headers.len()),
            ));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record[i].parse::<f64>().map_err(|e| {
                    Error::invalid("csv value", format!("data row {}: {:?}: {e}", line + 1, &record[i]))
                })
            };
            xs.push(parse(0)?);
            ys.push(parse(1)?);
        }
        Ok(Spectrum::new(xs, ys)?.with_quantity(&headers[1]))
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Spectrum> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self::read_csv(file)?.with_label(label))
    }

    /// Writes `wavelength_nm,<quantity>` followed by one row per sample.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["wavelength_nm", self.quantity.as_str()])?;
        for (w, v) in self.wavelengths_nm.iter().zip(&self.values) {
            wtr.write_record([w.to_string(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `count` equally spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count).map(|i| lo + step * i as f64).collect()
        }
    }
}

/// Uniform grid with spacing `coarse_step` on `[lo, hi]`, refined to
/// `fine_step` inside each `(center, half_width)` region.
pub fn refined_grid(lo: f64, hi: f64, coarse_step: f64, refinements: &[(f64, f64, f64)]) -> Vec<f64> {
    let n = ((hi - lo) / coarse_step).round() as usize + 1;
    let mut grid = linspace(lo, hi, n);
    for &(center, half_width, fine_step) in refinements {
        let a = (center - half_width).max(lo);
        let b = (center + half_width).min(hi);
        let m = ((b - a) / fine_step).round() as usize + 1;
        grid.extend(linspace(a, b, m));
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * b.abs().max(1.0));
    grid
}
