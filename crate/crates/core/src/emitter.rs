//! NV emission model: ZPL plus phonon sidebands as Lorentzians in frequency.
//!
//! Each transition `k` has weight ζₖ, centre ωₖ and dephasing width γₖ*
//! (FWHM, rad/s). The free-space spectral density in angular frequency is
//! `S(ω) = Σ ζₖ (2/π) γₖ* / (γₖ*² + 4(ω − ωₖ)²)`; wavelength densities carry
//! the Jacobian `|dω/dλ| = 2πc/λ²`.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constants::{
    angular_to_mhz, angular_to_thz, mhz_to_angular, thz_to_angular, wavelength_to_angular, PI, SPEED_OF_LIGHT,
};
use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::lm::{self, Bounds, LeastSquaresProblem, LmConfig};
use crate::spectrum::Spectrum;

/// Frequency of the zero-phonon line, THz.
pub const ZPL_FREQUENCY_THZ: f64 = 470.0;
/// Spacing of the effective phonon ladder, THz.
pub const PHONON_SPACING_THZ: f64 = 16.0;
/// Huang-Rhys factor of NV centres in bulk diamond.
pub const BULK_HUANG_RHYS: f64 = 3.2;
/// Radiative rate of typical nanodiamond NVs, γ/2π in MHz.
pub const NANODIAMOND_GAMMA0_MHZ: f64 = 8.0;

const FITTED_WEIGHTS: [f64; 6] = [0.02, 0.25, 0.44, 0.24, 0.06, 0.01];
const FITTED_WIDTHS_THZ: [f64; 6] = [3.0, 23.0, 25.0, 29.0, 34.0, 40.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Centre angular frequency ωₖ, rad/s.
    pub omega: f64,
    /// Branching weight ζₖ.
    pub weight: f64,
    /// Dephasing FWHM γₖ*, rad/s.
    pub gamma_star: f64,
}

impl Transition {
    pub fn new(omega: f64, weight: f64, gamma_star: f64) -> Result<Self> {
        ensure_positive("omega", omega)?;
        ensure_non_negative("weight", weight)?;
        ensure_non_negative("gamma_star", gamma_star)?;
        Ok(Self {
            omega,
            weight,
            gamma_star,
        })
    }

    /// Transition specified by ω/2π and γ*/2π in THz.
    pub fn from_thz(frequency_thz: f64, weight: f64, gamma_star_thz: f64) -> Result<Self> {
        Self::new(thz_to_angular(frequency_thz), weight, thz_to_angular(gamma_star_thz))
    }

    pub fn wavelength_nm(&self) -> f64 {
        crate::constants::angular_to_wavelength(self.omega)
    }

    /// Unit-area Lorentzian in angular frequency, per rad/s.
    pub fn lineshape(&self, omega: f64) -> f64 {
        lorentzian(omega - self.omega, self.gamma_star)
    }
}

/// Unit-area Lorentzian of FWHM `fwhm` at detuning `delta`.
pub fn lorentzian(delta: f64, fwhm: f64) -> f64 {
    (2.0 / PI) * fwhm / (fwhm * fwhm + 4.0 * delta * delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmitterModel {
    /// Radiative decay rate γ₀, rad/s.
    pub gamma0: f64,
    pub huang_rhys: f64,
    transitions: Vec<Transition>,
}

impl EmitterModel {
    /// Transition frequencies must strictly decrease with `k`. The weights are
    /// stored as given; see [`EmitterModel::normalized`].
    pub fn new(gamma0: f64, huang_rhys: f64, transitions: Vec<Transition>) -> Result<Self> {
        ensure_positive("gamma0", gamma0)?;
        ensure_non_negative("huang_rhys", huang_rhys)?;
        if transitions.is_empty() {
            return Err(Error::invalid("transitions", "model needs at least one transition"));
        }
        if transitions.windows(2).any(|w| w[1].omega >= w[0].omega) {
            return Err(Error::invalid(
                "transitions",
                "frequencies must strictly decrease with phonon number",
            ));
        }
        Ok(Self {
            gamma0,
            huang_rhys,
            transitions,
        })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn weight_sum(&self) -> f64 {
        self.transitions.iter().map(|t| t.weight).sum()
    }

    /// Copy with weights rescaled to sum to one.
    pub fn normalized(&self) -> EmitterModel {
        let total = self.weight_sum();
        let mut out = self.clone();
        if total > 0.0 {
            for t in &mut out.transitions {
                t.weight /= total;
            }
        }
        out
    }

    pub fn with_weights_scaled(&self, factor: f64) -> EmitterModel {
        let mut out = self.clone();
        for t in &mut out.transitions {
            t.weight *= factor;
        }
        out
    }

    /// Free-space spectral density per rad/s.
    pub fn angular_density(&self, omega: f64) -> f64 {
        self.transitions.iter().map(|t| t.weight * t.lineshape(omega)).sum()
    }

    /// Free-space spectral density per nm.
    pub fn wavelength_density(&self, wavelength_nm: f64) -> f64 {
        let omega = wavelength_to_angular(wavelength_nm);
        self.angular_density(omega) * angular_jacobian(wavelength_nm)
    }
}

/// `|dω/dλ|` in rad/s per nm.
pub fn angular_jacobian(wavelength_nm: f64) -> f64 {
    let lambda_m = wavelength_nm * 1e-9;
    2.0 * PI * SPEED_OF_LIGHT / (lambda_m * lambda_m) * 1e-9
}

/// ζₖ = e^{−D} Dᵏ / k! for k = 0..=k_max.
pub fn franck_condon_weights(huang_rhys: f64, k_max: usize) -> Result<Vec<f64>> {
    ensure_non_negative("huang_rhys", huang_rhys)?;
    let mut weights = Vec::with_capacity(k_max + 1);
    let mut term = (-huang_rhys).exp();
    for k in 0..=k_max {
        if k > 0 {
            term *= huang_rhys / k as f64;
        }
        weights.push(term);
    }
    Ok(weights)
}

/// ωₖ = 2π(470 − 16k) THz.
pub fn phonon_ladder_thz(k: usize) -> f64 {
    ZPL_FREQUENCY_THZ - PHONON_SPACING_THZ * k as f64
}

/// The six-transition room-temperature model fitted to the reference
/// free-space spectrum, γ₀ = 2π × 8 MHz. Weights sum to 1.02 and are kept as is.
pub fn reference_emitter_model() -> EmitterModel {
    let transitions = FITTED_WEIGHTS
        .iter()
        .zip(FITTED_WIDTHS_THZ)
        .enumerate()
        .map(|(k, (&w, g))| Transition::from_thz(phonon_ladder_thz(k), w, g).unwrap())
        .collect();
    EmitterModel::new(mhz_to_angular(NANODIAMOND_GAMMA0_MHZ), BULK_HUANG_RHYS, transitions).unwrap()
}

/// Samples the model's wavelength density on `grid_nm`.
pub fn free_space_spectrum(model: &EmitterModel, grid_nm: &[f64]) -> Result<Spectrum> {
    if grid_nm.is_empty() {
        return Err(Error::invalid("grid", "wavelength grid is empty"));
    }
    let spectrum = Spectrum::from_fn(grid_nm, |w| model.wavelength_density(w))?;
    Ok(spectrum.with_quantity("density_per_nm").with_label("free_space_model"))
}

/// η_λ = S(λ₀) / max S.
pub fn spectral_detuning_factor(spectrum: &Spectrum, lambda0_nm: f64) -> Result<f64> {
    let at = spectrum.interpolate(lambda0_nm).ok_or_else(|| {
        Error::Domain(format!(
            "λ0 = {lambda0_nm} nm outside spectrum grid [{}, {}] nm",
            spectrum.min_wavelength(),
            spectrum.max_wavelength()
        ))
    })?;
    let peak = spectrum.max_value();
    if peak <= 0.0 {
        return Err(Error::invalid("spectrum", "maximum is not positive"));
    }
    Ok((at / peak).clamp(0.0, 1.0))
}

/// Serialized emitter model (THz / MHz with their 2π factors removed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterModelConfig {
    pub gamma0_over_2pi_mhz: f64,
    #[serde(default = "default_huang_rhys")]
    pub huang_rhys: f64,
    pub transitions: Vec<TransitionConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionConfig {
    pub frequency_thz: f64,
    pub zeta: f64,
    pub gamma_star_thz: f64,
}

fn default_huang_rhys() -> f64 {
    BULK_HUANG_RHYS
}

impl TryFrom<&EmitterModelConfig> for EmitterModel {
    type Error = Error;

    fn try_from(cfg: &EmitterModelConfig) -> Result<Self> {
        let transitions = cfg
            .transitions
            .iter()
            .map(|t| Transition::from_thz(t.frequency_thz, t.zeta, t.gamma_star_thz))
            .collect::<Result<Vec<_>>>()?;
        EmitterModel::new(mhz_to_angular(cfg.gamma0_over_2pi_mhz), cfg.huang_rhys, transitions)
    }
}

impl From<&EmitterModel> for EmitterModelConfig {
    fn from(model: &EmitterModel) -> Self {
        EmitterModelConfig {
            gamma0_over_2pi_mhz: angular_to_mhz(model.gamma0),
            huang_rhys: model.huang_rhys,
            transitions: model
                .transitions
                .iter()
                .map(|t| TransitionConfig {
                    frequency_thz: angular_to_thz(t.omega),
                    zeta: t.weight,
                    gamma_star_thz: angular_to_thz(t.gamma_star),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpectrumFitOptions {
    /// Prior for the initial weights.
    pub huang_rhys_prior: f64,
    /// Initial γₖ*/2π for every transition, THz.
    pub initial_width_thz: f64,
    pub gamma0: f64,
    /// Divide the measured spectrum by its integral before fitting.
    pub normalize_area: bool,
    pub max_iterations: usize,
}

impl Default for SpectrumFitOptions {
    fn default() -> Self {
        SpectrumFitOptions {
            huang_rhys_prior: BULK_HUANG_RHYS,
            initial_width_thz: 25.0,
            gamma0: mhz_to_angular(NANODIAMOND_GAMMA0_MHZ),
            normalize_area: false,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumFit {
    pub model: EmitterModel,
    /// RMS of the residuals divided by the spectrum peak.
    pub rms_relative: f64,
    /// Franck-Condon weights at the prior Huang-Rhys factor, for comparison.
    pub franck_condon_prior: Vec<f64>,
    /// Scale divided out of the measurement when `normalize_area` is set, else 1.
    pub area_scale: f64,
    pub iterations: usize,
}

const MIN_WIDTH_THZ: f64 = 0.05;
const MAX_WIDTH_THZ: f64 = 200.0;

/// Model evaluated in ordinary frequency (THz) for conditioning; the density
/// per nm is `Σ ζₖ L(f; fₖ, gₖ) · |df/dλ|`.
struct SidebandProblem<'a> {
    freqs_thz: Vec<f64>,
    jacobian_thz_per_nm: Vec<f64>,
    data: &'a [f64],
    scale: f64,
    centres_thz: Vec<f64>,
}

impl SidebandProblem<'_> {
    fn k(&self) -> usize {
        self.centres_thz.len()
    }
}

impl LeastSquaresProblem for SidebandProblem<'_> {
    fn num_params(&self) -> usize {
        2 * self.k()
    }

    fn num_residuals(&self) -> usize {
        self.data.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let k = self.k();
        for (i, o) in out.iter_mut().enumerate() {
            let f = self.freqs_thz[i];
            let s: f64 = (0..k)
                .map(|j| p[j] * lorentzian(f - self.centres_thz[j], p[k + j]))
                .sum();
            *o = (s * self.jacobian_thz_per_nm[i] - self.data[i]) / self.scale;
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let k = self.k();
        for i in 0..self.data.len() {
            let f = self.freqs_thz[i];
            let jac = self.jacobian_thz_per_nm[i] / self.scale;
            for j in 0..k {
                let g = p[k + j];
                let d = f - self.centres_thz[j];
                let denom = g * g + 4.0 * d * d;
                out[(i, j)] = jac * (2.0 / PI) * g / denom;
                out[(i, k + j)] = jac * p[j] * (2.0 / PI) * (4.0 * d * d - g * g) / (denom * denom);
            }
        }
    }
}

/// Fits ζₖ ≥ 0 and γₖ* > 0 for `k_count` transitions on the fixed ladder
/// ωₖ = 2π(470 − 16k) THz.
pub fn fit_spectrum_model(measured: &Spectrum, k_count: usize, options: &SpectrumFitOptions) -> Result<SpectrumFit> {
    if k_count == 0 {
        return Err(Error::invalid("k_count", "need at least one transition"));
    }
    let n_params = 2 * k_count;
    if measured.len() < 10 * n_params {
        return Err(Error::invalid(
            "measured",
            format!("{} samples for {n_params} parameters; need at least 10x", measured.len()),
        ));
    }
    if !measured.background_corrected {
        warn!("fitting spectrum '{}' that is not flagged as background corrected", measured.label);
    }
    let mut data: Vec<f64> = measured.values().to_vec();
    let peak = data.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::invalid("measured", "spectrum is identically zero"));
    }
    let area_scale = if options.normalize_area {
        let area = measured.integrate();
        data.iter_mut().for_each(|v| *v /= area);
        area
    } else {
        1.0
    };
    let scale = peak / area_scale;

    let freqs_thz = measured
        .wavelengths()
        .iter()
        .map(|&w| SPEED_OF_LIGHT / (w * 1e-9) * 1e-12)
        .collect();
    let jacobian_thz_per_nm = measured
        .wavelengths()
        .iter()
        .map(|&w| SPEED_OF_LIGHT / (w * 1e-9).powi(2) * 1e-9 * 1e-12)
        .collect();
    let centres_thz: Vec<f64> = (0..k_count).map(phonon_ladder_thz).collect();
    let problem = SidebandProblem {
        freqs_thz,
        jacobian_thz_per_nm,
        data: &data,
        scale,
        centres_thz: centres_thz.clone(),
    };

    let prior = franck_condon_weights(options.huang_rhys_prior, k_count - 1)?;
    let mut initial = prior.clone();
    initial.extend(std::iter::repeat_n(options.initial_width_thz, k_count));
    let bounds = Bounds {
        lower: [vec![0.0; k_count], vec![MIN_WIDTH_THZ; k_count]].concat(),
        upper: [vec![f64::INFINITY; k_count], vec![MAX_WIDTH_THZ; k_count]].concat(),
    };
    let config = LmConfig {
        max_iterations: options.max_iterations,
        ..LmConfig::default()
    };
    let report = lm::minimize(&problem, &initial, &bounds, &config)?;

    let transitions = (0..k_count)
        .map(|j| Transition::from_thz(centres_thz[j], report.params[j], report.params[k_count + j]))
        .collect::<Result<Vec<_>>>()?;
    let model = EmitterModel::new(options.gamma0, options.huang_rhys_prior, transitions)?;
    let rms_relative = (2.0 * report.cost / measured.len() as f64).sqrt();
    Ok(SpectrumFit {
        model,
        rms_relative,
        franck_condon_prior: prior,
        area_scale,
        iterations: report.iterations,
    })
}
