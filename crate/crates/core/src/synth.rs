//! Synthetic measurements generated from the rate model, for closed-loop
//! checks of the analysis pipeline and for demo data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::{AnalysisSettings, MeasurementSet};
use crate::cavity::cavity_linewidth;
use crate::constants::PI;
use crate::emitter::{free_space_spectrum, lorentzian};
use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::purcell::{cavity_emission_rate, ideal_purcell, CouplingContext};
use crate::spectrum::{refined_grid, Spectrum};

pub const DEFAULT_INSTRUMENT_FWHM_NM: f64 = 0.1;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Multiplies every sample by `1 + ε`, ε ~ N(0, relative²).
pub fn add_multiplicative_noise(spectrum: &Spectrum, relative: f64, rng: &mut impl Rng) -> Result<Spectrum> {
    ensure_non_negative("noise", relative)?;
    if relative == 0.0 {
        return Ok(spectrum.clone());
    }
    let normal = Normal::new(0.0, relative).map_err(|e| Error::invalid("noise", e.to_string()))?;
    Ok(spectrum.map(|_, v| v * (1.0 + normal.sample(rng))))
}

/// Convolution with a unit-area Gaussian of the given FWHM; the integral is
/// preserved away from the grid edges.
pub fn convolve_gaussian(spectrum: &Spectrum, fwhm_nm: f64) -> Result<Spectrum> {
    ensure_non_negative("instrument_fwhm_nm", fwhm_nm)?;
    if fwhm_nm == 0.0 || spectrum.len() < 2 {
        return Ok(spectrum.clone());
    }
    let sigma = fwhm_nm / (8.0 * 2f64.ln()).sqrt();
    let reach = 5.0 * sigma;
    let w = spectrum.wavelengths();
    let v = spectrum.values();
    let n = w.len();
    let weights: Vec<f64> = (0..n)
        .map(|j| {
            let left = if j > 0 { w[j] - w[j - 1] } else { 0.0 };
            let right = if j + 1 < n { w[j + 1] - w[j] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect();
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    let values = (0..n)
        .map(|i| {
            let lo = w.partition_point(|&x| x < w[i] - reach);
            let hi = w.partition_point(|&x| x <= w[i] + reach);
            (lo..hi)
                .map(|j| {
                    let d = (w[i] - w[j]) / sigma;
                    v[j] * weights[j] * norm * (-0.5 * d * d).exp()
                })
                .sum()
        })
        .collect();
    let mut out = Spectrum::new(w.to_vec(), values)?
        .with_quantity(spectrum.quantity.clone())
        .with_label(spectrum.label.clone());
    out.background_corrected = spectrum.background_corrected;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SyntheticSetup {
    pub context: CouplingContext,
    pub eta_omega: f64,
    pub eta_c: f64,
    /// Detected free-space count rate integrated over the grid, counts/s.
    pub free_space_counts: f64,
    /// Plane-mirror transmission, must cover the grid.
    pub plane_transmission: Spectrum,
    /// Wavelength grid; `None` picks [`default_grid`].
    pub grid_nm: Option<Vec<f64>>,
    pub instrument_fwhm_nm: f64,
    /// Relative multiplicative noise on the measured spectra.
    pub noise: f64,
}

/// Model values the analysis should recover.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticTruth {
    /// R/γ₀ from the rate model.
    pub c: f64,
    /// Ideal Purcell factor with Q = λ₀/δλ.
    pub c0: f64,
    pub q: f64,
    pub linewidth_nm: f64,
    pub b: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticMeasurement {
    pub set: MeasurementSet,
    pub truth: SyntheticTruth,
    /// Settings matching the generator: free-space band equal to the grid.
    pub settings: AnalysisSettings,
}

/// 450–1400 nm at 0.5 nm, refined to δλ/40 within ±60 δλ of the resonance.
pub fn default_grid(lambda0_nm: f64, linewidth_nm: f64) -> Vec<f64> {
    refined_grid(450.0, 1400.0, 0.5, &[(lambda0_nm, 60.0 * linewidth_nm, linewidth_nm / 40.0)])
}

/// Generates S_m = T₂·S_fs, the reference shape S₀ and the cavity line S_c.
/// The free-space spectrum carries `free_space_counts` and the cavity line
/// carries `free_space_counts · η_c · C / η_Ω`.
pub fn synthesize(setup: &SyntheticSetup, rng: &mut impl Rng) -> Result<SyntheticMeasurement> {
    let ctx = &setup.context;
    ctx.validate()?;
    ensure_positive("free_space_counts", setup.free_space_counts)?;
    ensure_positive("eta_omega", setup.eta_omega)?;
    ensure_positive("eta_c", setup.eta_c)?;
    let lambda0 = ctx.lambda0_nm();
    let budget = ctx.budget_at_resonance()?;
    let linewidth = cavity_linewidth(lambda0, ctx.geometry.d_eff_um(), &budget)?;
    let q = lambda0 / linewidth;
    let r = cavity_emission_rate(ctx, ctx.omega_c())?;
    let gamma0 = ctx.emitter.gamma0;
    let c = r / gamma0;
    let c0 = ideal_purcell(lambda0, q, ctx.volume(), ctx.field_factor())?;

    let grid = setup.grid_nm.clone().unwrap_or_else(|| default_grid(lambda0, linewidth));
    let density = free_space_spectrum(&ctx.emitter, &grid)?;
    let area = density.integrate();
    let peak = density.max_value();
    let s0 = density.scaled(1.0 / peak).with_quantity("value").with_label("reference");
    let s_fs = density.scaled(setup.free_space_counts / area);
    let b = setup.free_space_counts * peak / area;

    let t2 = &setup.plane_transmission;
    if !t2.contains(s_fs.min_wavelength()) || !t2.contains(s_fs.max_wavelength()) {
        return Err(Error::GridMismatch("plane transmission does not cover the synthesis grid".into()));
    }
    let s_m = s_fs
        .map(|w, v| v * t2.interpolate(w).unwrap())
        .with_quantity("counts_per_s")
        .with_label("free_space_through_mirror");
    let s_m = add_multiplicative_noise(&s_m, setup.noise, rng)?;

    let line_counts = setup.free_space_counts * setup.eta_c * c / setup.eta_omega;
    let s_c = Spectrum::from_fn(&grid, |w| line_counts * lorentzian(w - lambda0, linewidth))?
        .with_quantity("counts_per_s")
        .with_label("cavity");
    let s_c = convolve_gaussian(&s_c, setup.instrument_fwhm_nm)?;
    let mut s_c = add_multiplicative_noise(&s_c, setup.noise, rng)?;
    s_c.background_corrected = true;

    let mut settings = AnalysisSettings::new(setup.eta_omega, setup.eta_c);
    settings.free_space_band_nm = (grid[0], grid[grid.len() - 1]);
    Ok(SyntheticMeasurement {
        set: MeasurementSet {
            label: "synthetic".into(),
            s_m,
            t2: t2.clone(),
            s0,
            s_c,
            lambda0_nm: lambda0,
            fwhm_nm: linewidth,
            linewidth_nm: Some(linewidth),
        },
        truth: SyntheticTruth {
            c,
            c0,
            q,
            linewidth_nm: linewidth,
            b,
        },
        settings,
    })
}

/// Count rates P∞I/(I_sat+I) + aI with multiplicative noise.
pub fn synthesize_saturation(intensities: &[f64], p_inf: f64, i_sat: f64, a: f64, noise: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    ensure_non_negative("noise", noise)?;
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).map_err(|e| Error::invalid("noise", e.to_string()))?;
    Ok(intensities
        .iter()
        .map(|&i| {
            let clean = crate::analysis::saturation_model(i, p_inf, i_sat, a);
            if noise == 0.0 {
                clean
            } else {
                clean * (1.0 + normal.sample(rng))
            }
        })
        .collect())
}
