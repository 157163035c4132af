//! Evaluation of measured spectra: background removal, free-space
//! reconstruction, resonance integration, experimental Purcell factors and
//! saturation fits.

use log::warn;

use crate::constants::PI;
use crate::error::{ensure_non_negative, ensure_positive, Error, FitDiagnostic, Result};
use crate::lm::{self, Bounds, LeastSquaresProblem, LmConfig};
use crate::spectrum::Spectrum;

/// Transmissive band of the plane mirror, used to fit the scale factor b.
pub const TRANSMISSIVE_WINDOW_NM: (f64, f64) = (590.0, 690.0);
/// Integration range for the free-space emission.
pub const FREE_SPACE_BAND_NM: (f64, f64) = (590.0, 770.0);
/// Resonance integration range in units of the linewidth.
pub const RESONANCE_WINDOW_FWHM: f64 = 3.0;
pub const DEFAULT_COLLECTION_EFFICIENCY: f64 = 0.05;

/// Minimum fraction of grid overlap for two spectra to be combined.
const MIN_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum Background {
    Spectrum(Spectrum),
    Constant(f64),
    /// `offset + slope·λ` with λ in nm.
    Linear { offset: f64, slope_per_nm: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundCorrection {
    pub spectrum: Spectrum,
    /// Points that went negative and were clamped to zero.
    pub clamped: usize,
}

/// Subtracts the background pointwise and clamps negative results to zero.
/// A background spectrum is interpolated onto the raw grid; raw points outside
/// its range are dropped.
pub fn background_correct(raw: &Spectrum, background: &Background) -> Result<BackgroundCorrection> {
    let (base, bg): (Spectrum, Vec<f64>) = match background {
        Background::Constant(c) => (raw.clone(), vec![*c; raw.len()]),
        Background::Linear { offset, slope_per_nm } => (
            raw.clone(),
            raw.wavelengths().iter().map(|w| offset + slope_per_nm * w).collect(),
        ),
        Background::Spectrum(b) => {
            let overlap = raw.overlap_fraction(b);
            if overlap < MIN_OVERLAP {
                return Err(Error::GridMismatch(format!(
                    "background covers {:.0}% of the raw spectrum",
                    overlap * 100.0
                )));
            }
            let inside: Vec<f64> = raw.wavelengths().iter().copied().filter(|&w| b.contains(w)).collect();
            let base = raw.resample(&inside)?;
            let values = inside.iter().map(|&w| b.interpolate(w).unwrap()).collect();
            (base, values)
        }
    };
    let mut clamped = 0;
    let values: Vec<f64> = base
        .values()
        .iter()
        .zip(&bg)
        .map(|(v, b)| {
            let d = v - b;
            if d < 0.0 {
                clamped += 1;
                0.0
            } else {
                d
            }
        })
        .collect();
    if clamped > 0 {
        warn!("background correction of '{}': {clamped} negative points clamped to zero", raw.label);
    }
    let mut spectrum = Spectrum::new(base.wavelengths().to_vec(), values)?
        .with_quantity(raw.quantity.clone())
        .with_label(raw.label.clone());
    spectrum.background_corrected = true;
    Ok(BackgroundCorrection { spectrum, clamped })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFactorFit {
    pub b: f64,
    /// RMS of `S_m − b·T₂·S₀` relative to the largest measured value.
    pub residual: f64,
    pub points: usize,
    /// Relative change of b when every overlapping point, including the stop
    /// band, enters the fit. `None` if the overlap equals the window.
    pub window_sensitivity: Option<f64>,
}

fn scale_factor_on(s_m: &Spectrum, t2: &Spectrum, s0: &Spectrum, lo: f64, hi: f64) -> Option<(f64, f64, usize)> {
    let (mut sxy, mut sxx, mut peak) = (0.0, 0.0, 0.0_f64);
    let mut pairs = Vec::new();
    for (&w, &y) in s_m.wavelengths().iter().zip(s_m.values()) {
        if w < lo || w > hi {
            continue;
        }
        let (Some(t), Some(s)) = (t2.interpolate(w), s0.interpolate(w)) else {
            continue;
        };
        let x = t * s;
        sxy += x * y;
        sxx += x * x;
        peak = peak.max(y.abs());
        pairs.push((x, y));
    }
    if pairs.is_empty() || sxx <= 0.0 {
        return None;
    }
    let b = sxy / sxx;
    let ss: f64 = pairs.iter().map(|(x, y)| (y - b * x).powi(2)).sum();
    let rms = (ss / pairs.len() as f64).sqrt();
    Some((b, if peak > 0.0 { rms / peak } else { 0.0 }, pairs.len()))
}

/// Least-squares b in `S_m ≈ b·T₂·S₀` over `window_nm`.
pub fn fit_scale_factor_b(s_m: &Spectrum, t2: &Spectrum, s0: &Spectrum, window_nm: (f64, f64)) -> Result<ScaleFactorFit> {
    let (b, residual, points) = scale_factor_on(s_m, t2, s0, window_nm.0, window_nm.1).ok_or_else(|| {
        Error::GridMismatch(format!(
            "no usable overlap of S_m, T2 and S0 within [{}, {}] nm (or the regressor T2·S0 is zero)",
            window_nm.0, window_nm.1
        ))
    })?;
    let window_sensitivity = scale_factor_on(s_m, t2, s0, f64::NEG_INFINITY, f64::INFINITY)
        .filter(|&(_, _, n)| n > points)
        .map(|(b_all, _, _)| (b_all - b) / b);
    Ok(ScaleFactorFit {
        b,
        residual,
        points,
        window_sensitivity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonancePeak {
    pub lambda0_nm: f64,
    pub fwhm_nm: f64,
    /// Integral over the window, counts/s.
    pub integrated_power: f64,
    /// Share of an ideal Lorentzian inside the window.
    pub window_fraction: f64,
}

impl ResonancePeak {
    /// Window integral extrapolated to the full Lorentzian line.
    pub fn corrected_power(&self) -> f64 {
        self.integrated_power / self.window_fraction
    }
}

/// Integrates `s_c` over `λ₀ ± 1.5·fwhm`.
pub fn integrate_resonance(s_c: &Spectrum, lambda0_nm: f64, fwhm_nm: f64) -> Result<ResonancePeak> {
    integrate_resonance_window(s_c, lambda0_nm, fwhm_nm, RESONANCE_WINDOW_FWHM)
}

/// Integrates `s_c` over a window `width_fwhm` linewidths wide.
pub fn integrate_resonance_window(s_c: &Spectrum, lambda0_nm: f64, fwhm_nm: f64, width_fwhm: f64) -> Result<ResonancePeak> {
    ensure_positive("fwhm_nm", fwhm_nm)?;
    ensure_positive("width_fwhm", width_fwhm)?;
    let half = 0.5 * width_fwhm * fwhm_nm;
    let integrated_power = s_c.integrate_range(lambda0_nm - half, lambda0_nm + half)?;
    Ok(ResonancePeak {
        lambda0_nm,
        fwhm_nm,
        integrated_power,
        window_fraction: (2.0 / PI) * width_fwhm.atan(),
    })
}

/// Largest value in `[lo, hi]` and its half-maximum width, found by walking
/// outward from the maximum.
pub fn locate_resonance(s_c: &Spectrum, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let (lambda0, peak) = s_c
        .peak_in(lo, hi)
        .ok_or_else(|| Error::Domain(format!("no samples in [{lo}, {hi}] nm")))?;
    if !(peak > 0.0) {
        return Err(Error::Domain(format!("no positive signal in [{lo}, {hi}] nm")));
    }
    let w = s_c.wavelengths();
    let v = s_c.values();
    let i = w.partition_point(|&x| x < lambda0);
    let half = 0.5 * peak;
    let cross = |a: usize, b: usize| w[a] + (half - v[a]) * (w[b] - w[a]) / (v[b] - v[a]);
    let left = (1..=i).rev().find(|&k| v[k - 1] < half).map(|k| cross(k - 1, k));
    let right = (i..w.len() - 1).find(|&k| v[k + 1] < half).map(|k| cross(k, k + 1));
    match (left, right) {
        (Some(l), Some(r)) => Ok((lambda0, r - l)),
        _ => Err(Error::Domain(format!("resonance at {lambda0} nm not resolved on the grid"))),
    }
}

/// C = (P_c/P_fs)·(η_Ω/η_c).
pub fn experimental_effective_purcell(p_c: f64, p_fs: f64, eta_omega: f64, eta_c: f64) -> Result<f64> {
    ensure_non_negative("p_c", p_c)?;
    ensure_positive("p_fs", p_fs)?;
    ensure_efficiency("eta_omega", eta_omega)?;
    ensure_efficiency("eta_c", eta_c)?;
    Ok(p_c / p_fs * eta_omega / eta_c)
}

/// Peak of a Lorentzian line of area `p_c` and FWHM `delta_lambda_nm`.
pub fn peak_spectral_density(p_c: f64, delta_lambda_nm: f64) -> Result<f64> {
    ensure_non_negative("p_c", p_c)?;
    ensure_positive("delta_lambda_nm", delta_lambda_nm)?;
    Ok(2.0 * p_c / (PI * delta_lambda_nm))
}

/// C₀ = (S_c,max/S_fs(λ₀))·(η_Ω/η_c).
pub fn experimental_ideal_purcell(s_c_max: f64, s_fs_at_lambda0: f64, eta_omega: f64, eta_c: f64) -> Result<f64> {
    ensure_non_negative("s_c_max", s_c_max)?;
    ensure_positive("s_fs_at_lambda0", s_fs_at_lambda0)?;
    ensure_efficiency("eta_omega", eta_omega)?;
    ensure_efficiency("eta_c", eta_c)?;
    Ok(s_c_max / s_fs_at_lambda0 * eta_omega / eta_c)
}

fn ensure_efficiency(field: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 && value <= 1.0 {
        Ok(value)
    } else {
        Err(Error::invalid(field, format!("must lie in (0, 1], got {value}")))
    }
}

/// Peak intensity 2P/(πw²) of a Gaussian beam, GW/m², for power in W and
/// waist in µm.
pub fn intensity_from_power(power_w: f64, waist_um: f64) -> Result<f64> {
    ensure_non_negative("power_w", power_w)?;
    ensure_positive("waist_um", waist_um)?;
    let w = waist_um * 1e-6;
    Ok(2.0 * power_w / (PI * w * w) * 1e-9)
}

/// Inverse of [`intensity_from_power`], W.
pub fn power_for_intensity(intensity_gw_m2: f64, waist_um: f64) -> Result<f64> {
    ensure_non_negative("intensity_gw_m2", intensity_gw_m2)?;
    ensure_positive("waist_um", waist_um)?;
    let w = waist_um * 1e-6;
    Ok(intensity_gw_m2 * 1e9 * PI * w * w / 2.0)
}

/// Share of a dipole's emission entering a cone of numerical aperture `na`
/// in a homogeneous medium of index `n`, with the dipole perpendicular to
/// the optical axis and averaged over its azimuth. Interfaces and the mirror
/// are ignored; a rough cross-check for the collection efficiency input.
pub fn dipole_collection_efficiency(na: f64, n: f64) -> Result<f64> {
    ensure_positive("n", n)?;
    ensure_non_negative("na", na)?;
    if na > n {
        return Err(Error::invalid("na", format!("NA {na} exceeds the medium index {n}")));
    }
    let c = (1.0 - (na / n).powi(2)).sqrt();
    Ok((3.0 * (1.0 - c) + (1.0 - c.powi(3))) / 8.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationFit {
    pub p_inf: f64,
    /// GW/m².
    pub i_sat: f64,
    /// counts/s per GW/m².
    pub a: f64,
    /// RMS residual relative to the largest count rate.
    pub residual: f64,
    pub iterations: usize,
}

impl SaturationFit {
    pub fn model(&self, intensity: f64) -> f64 {
        saturation_model(intensity, self.p_inf, self.i_sat, self.a)
    }

    /// Share of the linear background in the total signal at `intensity`.
    pub fn background_fraction(&self, intensity: f64) -> f64 {
        let total = self.model(intensity);
        if total > 0.0 {
            self.a * intensity / total
        } else {
            0.0
        }
    }
}

/// P = P∞·I/(I_sat + I) + a·I.
pub fn saturation_model(intensity: f64, p_inf: f64, i_sat: f64, a: f64) -> f64 {
    p_inf * intensity / (i_sat + intensity) + a * intensity
}

/// Removes the linear term `a·I`, leaving the saturating emitter signal.
pub fn remove_linear_background(intensities: &[f64], counts: &[f64], a: f64) -> Vec<f64> {
    intensities.iter().zip(counts).map(|(i, c)| c - a * i).collect()
}

struct SaturationProblem<'a> {
    intensities: &'a [f64],
    counts: &'a [f64],
    scale: f64,
}

impl LeastSquaresProblem for SaturationProblem<'_> {
    fn num_params(&self) -> usize {
        3
    }

    fn num_residuals(&self) -> usize {
        self.counts.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for ((o, &i), &c) in out.iter_mut().zip(self.intensities).zip(self.counts) {
            *o = (saturation_model(i, p[0], p[1], p[2]) - c) / self.scale;
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut nalgebra::DMatrix<f64>) {
        for (row, &i) in self.intensities.iter().enumerate() {
            let d = p[1] + i;
            out[(row, 0)] = i / d / self.scale;
            out[(row, 1)] = -p[0] * i / (d * d) / self.scale;
            out[(row, 2)] = i / self.scale;
        }
    }
}

/// Best non-negative (P∞, a) for a fixed I_sat and the resulting cost.
fn profile_saturation(intensities: &[f64], counts: &[f64], i_sat: f64) -> (f64, f64, f64) {
    let u: Vec<f64> = intensities.iter().map(|i| i / (i_sat + i)).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (uu, uv, vv) = (dot(&u, &u), dot(&u, intensities), dot(intensities, intensities));
    let (uy, vy) = (dot(&u, counts), dot(intensities, counts));
    let det = uu * vv - uv * uv;
    let (mut p, mut a) = if det.abs() > 1e-300 {
        ((uy * vv - vy * uv) / det, (vy * uu - uy * uv) / det)
    } else {
        (uy / uu, 0.0)
    };
    if a < 0.0 {
        a = 0.0;
        p = (uy / uu).max(0.0);
    }
    if p < 0.0 {
        p = 0.0;
        a = (vy / vv).max(0.0);
    }
    let cost = intensities
        .iter()
        .zip(counts)
        .map(|(&i, &c)| (saturation_model(i, p, i_sat, a) - c).powi(2))
        .sum();
    (p, a, cost)
}

/// Fits P∞, I_sat and a. The intensity scan starts a bounded
/// Levenberg-Marquardt refinement from the best profiled I_sat.
pub fn fit_saturation(intensities: &[f64], counts: &[f64]) -> Result<SaturationFit> {
    if intensities.len() != counts.len() {
        return Err(Error::invalid("counts", "length differs from intensities"));
    }
    if intensities.len() < 4 {
        return Err(Error::invalid("intensities", "need at least four points"));
    }
    for &i in intensities {
        ensure_non_negative("intensities", i)?;
    }
    let i_max = intensities.iter().copied().fold(0.0, f64::max);
    let i_min = intensities.iter().copied().filter(|&i| i > 0.0).fold(f64::INFINITY, f64::min);
    let c_max = counts.iter().copied().fold(0.0, f64::max);
    if !(i_max > 0.0) || !(c_max > 0.0) {
        return Err(Error::invalid("counts", "no positive signal"));
    }

    let steps = 400;
    let (lo, hi) = ((i_min / 100.0).ln(), (i_max * 1e3).ln());
    let (mut best_isat, mut best) = (i_max, (0.0, 0.0, f64::INFINITY));
    for k in 0..=steps {
        let i_sat = (lo + (hi - lo) * k as f64 / steps as f64).exp();
        let trial = profile_saturation(intensities, counts, i_sat);
        if trial.2 < best.2 {
            best = trial;
            best_isat = i_sat;
        }
    }

    let problem = SaturationProblem {
        intensities,
        counts,
        scale: c_max,
    };
    let bounds = Bounds {
        lower: vec![0.0, i_min * 1e-3, 0.0],
        upper: vec![f64::INFINITY, i_max * 1e4, f64::INFINITY],
    };
    let report = lm::minimize(&problem, &[best.0, best_isat, best.1], &bounds, &LmConfig::default())?;
    let (p_inf, i_sat, a) = (report.params[0], report.params[1], report.params[2]);
    let fit = SaturationFit {
        p_inf,
        i_sat,
        a,
        residual: (2.0 * report.cost / counts.len() as f64).sqrt(),
        iterations: report.iterations,
    };

    let saturating_share = p_inf * i_max / (i_sat + i_max) / c_max;
    if i_sat > 10.0 * i_max || saturating_share < 1e-3 {
        return Err(Error::Unidentifiable {
            param: "i_sat",
            reason: format!(
                "data show no saturation up to {i_max} GW/m² (fitted I_sat = {i_sat:.3e}, saturating share {saturating_share:.2e})"
            ),
            best: Box::new(FitDiagnostic {
                params: report.params,
                cost: report.cost,
                iterations: report.iterations,
            }),
        });
    }
    if i_sat < i_min || i_sat > i_max {
        warn!("fitted I_sat = {i_sat:.3} GW/m² lies outside the sampled range [{i_min}, {i_max}]");
    }
    Ok(fit)
}

/// Inputs of one spectrum triple plus the cavity spectrum.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub label: String,
    /// Free-space emission measured through the plane mirror.
    pub s_m: Spectrum,
    /// Plane-mirror transmission.
    pub t2: Spectrum,
    /// Reference free-space spectrum shape.
    pub s0: Spectrum,
    /// Cavity emission spectrum.
    pub s_c: Spectrum,
    pub lambda0_nm: f64,
    /// Width defining the integration window.
    pub fwhm_nm: f64,
    /// Cavity linewidth δλ for the peak density; defaults to `fwhm_nm`.
    pub linewidth_nm: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct AnalysisSettings {
    pub eta_omega: f64,
    pub eta_c: f64,
    pub free_space_band_nm: (f64, f64),
    pub fit_window_nm: (f64, f64),
    pub window_fwhm: f64,
}

impl AnalysisSettings {
    pub fn new(eta_omega: f64, eta_c: f64) -> Self {
        AnalysisSettings {
            eta_omega,
            eta_c,
            free_space_band_nm: FREE_SPACE_BAND_NM,
            fit_window_nm: TRANSMISSIVE_WINDOW_NM,
            window_fwhm: RESONANCE_WINDOW_FWHM,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub label: String,
    pub scale: ScaleFactorFit,
    pub peak: ResonancePeak,
    pub linewidth_nm: f64,
    pub p_fs: f64,
    pub s_fs_at_lambda0: f64,
    /// From the raw window integral.
    pub c_raw: f64,
    pub c0_raw: f64,
    /// From the window-corrected line power.
    pub c: f64,
    pub c0: f64,
}

pub const SUMMARY_HEADER: [&str; 7] = ["label", "lambda0_nm", "fwhm_nm", "Pc", "Pfs", "C", "C0"];

impl AnalysisReport {
    /// Row matching [`SUMMARY_HEADER`]: raw P_c, window-corrected C and C₀.
    pub fn summary_row(&self) -> [String; 7] {
        [
            self.label.clone(),
            format!("{:.6}", self.peak.lambda0_nm),
            format!("{:.6}", self.peak.fwhm_nm),
            format!("{:.6e}", self.peak.integrated_power),
            format!("{:.6e}", self.p_fs),
            format!("{:.6e}", self.c),
            format!("{:.6e}", self.c0),
        ]
    }

    pub fn key_value_block(&self) -> String {
        let sens = self
            .scale
            .window_sensitivity
            .map_or_else(|| "n/a".to_string(), |s| format!("{s:.6e}"));
        let lines = [
            ("label", self.label.clone()),
            ("lambda0_nm", format!("{:.6}", self.peak.lambda0_nm)),
            ("fwhm_nm", format!("{:.6}", self.peak.fwhm_nm)),
            ("linewidth_nm", format!("{:.6}", self.linewidth_nm)),
            ("b", format!("{:.6e}", self.scale.b)),
            ("b_residual", format!("{:.6e}", self.scale.residual)),
            ("b_window_sensitivity", sens),
            ("Pc_window", format!("{:.6e}", self.peak.integrated_power)),
            ("window_fraction", format!("{:.6}", self.peak.window_fraction)),
            ("Pc_corrected", format!("{:.6e}", self.peak.corrected_power())),
            ("Pfs", format!("{:.6e}", self.p_fs)),
            ("Sfs_at_lambda0", format!("{:.6e}", self.s_fs_at_lambda0)),
            ("C_raw", format!("{:.6e}", self.c_raw)),
            ("C", format!("{:.6e}", self.c)),
            ("C0_raw", format!("{:.6e}", self.c0_raw)),
            ("C0", format!("{:.6e}", self.c0)),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Free-space reconstruction, resonance integration and both experimental
/// Purcell factors for one measurement.
pub fn analyze(set: &MeasurementSet, settings: &AnalysisSettings) -> Result<AnalysisReport> {
    let scale = fit_scale_factor_b(&set.s_m, &set.t2, &set.s0, settings.fit_window_nm)?;
    let s_fs = set.s0.scaled(scale.b);
    let (lo, hi) = settings.free_space_band_nm;
    let p_fs = s_fs.integrate_range(lo, hi)?;
    let s_fs_at_lambda0 = s_fs
        .interpolate(set.lambda0_nm)
        .ok_or_else(|| Error::Domain(format!("λ0 = {} nm outside the reference spectrum", set.lambda0_nm)))?;
    let peak = integrate_resonance_window(&set.s_c, set.lambda0_nm, set.fwhm_nm, settings.window_fwhm)?;
    let linewidth_nm = set.linewidth_nm.unwrap_or(set.fwhm_nm);
    let eo = settings.eta_omega;
    let ec = settings.eta_c;
    let c_raw = experimental_effective_purcell(peak.integrated_power, p_fs, eo, ec)?;
    let c = experimental_effective_purcell(peak.corrected_power(), p_fs, eo, ec)?;
    let c0_raw = experimental_ideal_purcell(
        peak_spectral_density(peak.integrated_power, linewidth_nm)?,
        s_fs_at_lambda0,
        eo,
        ec,
    )?;
    let c0 = experimental_ideal_purcell(
        peak_spectral_density(peak.corrected_power(), linewidth_nm)?,
        s_fs_at_lambda0,
        eo,
        ec,
    )?;
    Ok(AnalysisReport {
        label: set.label.clone(),
        scale,
        peak,
        linewidth_nm,
        p_fs,
        s_fs_at_lambda0,
        c_raw,
        c0_raw,
        c,
        c0,
    })
}
