//! Purcell factors, emitter-cavity coupling and the multi-transition rate model.
//!
//! Two pictures are kept side by side: the closed-form ideal/effective Purcell
//! factors, and the dissipative rate model in which every phonon transition
//! `k` couples to the cavity with `g₀ₖ` and decays at `Γₖ = κₖ + γ₀ + γₖ*`.

use std::fmt;

use log::{debug, warn};
use rayon::prelude::*;

use crate::cavity::{
    cavity_decay_rate, cavity_linewidth, finesse, mode_volume, quality_factor, BudgetModel, BudgetSource,
    CavityGeometry, MirrorBudget,
};
use crate::constants::{angular_to_mhz, wavelength_to_angular, PI, SPEED_OF_LIGHT};
use crate::emitter::{free_space_spectrum, spectral_detuning_factor, EmitterModel, Transition};
use crate::error::{ensure_non_negative, ensure_positive, ensure_unit_interval, Error, Result};
use crate::quad::adaptive_simpson;
use crate::spectrum::linspace;

const QUADRATURE_TOLERANCE: f64 = 1e-9;

/// Grid used to derive η_λ and Q_em from an emitter model, nm.
const EMITTER_GRID_NM: (f64, f64, usize) = (500.0, 1100.0, 12_001);

fn purcell_prefactor(lambda_nm: f64) -> f64 {
    let lambda_um = lambda_nm * 1e-3;
    3.0 * lambda_um.powi(3) / (4.0 * PI * PI)
}

/// C₀ = (3λ³/4π²)(Q/V)·field_factor, λ in nm and V in µm³.
pub fn ideal_purcell(lambda_nm: f64, q: f64, volume_um3: f64, field_factor: f64) -> Result<f64> {
    ensure_positive("lambda_nm", lambda_nm)?;
    ensure_positive("q", q)?;
    ensure_positive("volume_um3", volume_um3)?;
    ensure_unit_interval("field_factor", field_factor)?;
    Ok(purcell_prefactor(lambda_nm) * q / volume_um3 * field_factor)
}

/// Broadband-emitter Purcell factor C = (3λ₀³/4π²)(Q_em/V)·η_λ·field_factor.
pub fn effective_purcell(lambda0_nm: f64, q_em: f64, volume_um3: f64, eta_lambda: f64, field_factor: f64) -> Result<f64> {
    ensure_unit_interval("eta_lambda", eta_lambda)?;
    Ok(ideal_purcell(lambda0_nm, q_em, volume_um3, field_factor)? * eta_lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationAverage {
    pub eta_theta: f64,
    /// ∫ p(θ) cosθ dθ over [0, π/2].
    pub normalization: f64,
}

/// Averages cos²θ over a polar distribution p(θ) with measure cosθ dθ on
/// [0, π/2].
pub fn orientation_average(p: impl Fn(f64) -> f64) -> OrientationAverage {
    let half_pi = 0.5 * PI;
    let normalization = adaptive_simpson(&|t: f64| p(t) * t.cos(), 0.0, half_pi, QUADRATURE_TOLERANCE);
    let moment = adaptive_simpson(&|t: f64| p(t) * t.cos().powi(3), 0.0, half_pi, QUADRATURE_TOLERANCE);
    OrientationAverage {
        eta_theta: moment / normalization,
        normalization,
    }
}

/// η_θ for randomly oriented dipoles under polarized excitation. Below
/// saturation the excitation selects p(θ) = (3/2)cos²θ (η_θ = 4/5); deep in
/// saturation every dipole is excited equally (η_θ = 2/3).
pub fn orientation_factor(saturated: bool) -> f64 {
    if saturated {
        orientation_average(|_| 1.0).eta_theta
    } else {
        orientation_average(|t| 1.5 * t.cos().powi(2)).eta_theta
    }
}

/// How the dipole projection enters: a single emitter with known angle, or
/// an ensemble average where cosθ is replaced by √η_θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Orientation {
    Aligned { cos_theta: f64 },
    Ensemble { eta_theta: f64 },
}

impl Orientation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Orientation::Aligned { cos_theta } => ensure_unit_interval("cos_theta", cos_theta.abs()).map(|_| ()),
            Orientation::Ensemble { eta_theta } => ensure_unit_interval("eta_theta", eta_theta).map(|_| ()),
        }
    }

    /// Factor multiplying the coupling amplitude.
    pub fn amplitude(&self) -> f64 {
        match *self {
            Orientation::Aligned { cos_theta } => cos_theta.abs(),
            Orientation::Ensemble { eta_theta } => eta_theta.sqrt(),
        }
    }

    /// Factor multiplying rates: cos²θ or η_θ.
    pub fn power(&self) -> f64 {
        self.amplitude().powi(2)
    }
}

/// g₀ₖ = √(3πc³ ζₖ η_E γ₀ / (2ωₖ² V)) · orientation amplitude, rad/s.
pub fn coupling_rate(transition: &Transition, volume_um3: f64, eta_e: f64, gamma0: f64, orientation_amplitude: f64) -> Result<f64> {
    ensure_positive("volume_um3", volume_um3)?;
    ensure_unit_interval("eta_e", eta_e)?;
    ensure_positive("gamma0", gamma0)?;
    ensure_unit_interval("orientation_amplitude", orientation_amplitude)?;
    let volume = volume_um3 * 1e-18;
    let w = transition.omega;
    let g2 = 3.0 * PI * SPEED_OF_LIGHT.powi(3) * transition.weight * eta_e * gamma0 / (2.0 * w * w * volume);
    Ok(g2.sqrt() * orientation_amplitude)
}

/// α = N·(4g₀²/κ)/γ*.
pub fn collective_figure_of_merit(n_emitters: usize, g0: f64, kappa: f64, gamma_star: f64) -> Result<f64> {
    ensure_non_negative("g0", g0)?;
    ensure_positive("kappa", kappa)?;
    ensure_positive("gamma_star", gamma_star)?;
    Ok(n_emitters as f64 * 4.0 * g0 * g0 / kappa / gamma_star)
}

/// Emitter spectrum properties entering the broadband Purcell formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterBand {
    pub peak_nm: f64,
    pub fwhm_nm: f64,
    pub eta_lambda: f64,
}

impl EmitterBand {
    /// Q_em = λ_peak / FWHM.
    pub fn q_emitter(&self) -> f64 {
        self.peak_nm / self.fwhm_nm
    }
}

pub fn emitter_band(model: &EmitterModel, lambda0_nm: f64) -> Result<EmitterBand> {
    let (lo, hi, n) = EMITTER_GRID_NM;
    let spectrum = free_space_spectrum(model, &linspace(lo, hi, n))?;
    let (i, _) = spectrum.argmax();
    let fwhm_nm = spectrum
        .fwhm()
        .ok_or_else(|| Error::Domain("emitter spectrum half maximum not bracketed on the model grid".into()))?;
    Ok(EmitterBand {
        peak_nm: spectrum.wavelengths()[i],
        fwhm_nm,
        eta_lambda: spectral_detuning_factor(&spectrum, lambda0_nm)?,
    })
}

#[derive(Debug, Clone)]
pub struct CouplingContext {
    /// Cavity geometry; its wavelength is the resonance λ₀.
    pub geometry: CavityGeometry,
    pub budget: BudgetSource,
    pub emitter: EmitterModel,
    pub eta_e: f64,
    pub orientation: Orientation,
    /// Derived from the emitter spectrum when unset.
    pub eta_lambda: Option<f64>,
    /// Derived from the emitter spectrum width when unset.
    pub q_emitter: Option<f64>,
    /// Overrides the Gaussian-mode volume of `geometry`.
    pub volume_um3: Option<f64>,
    pub n_emitters: usize,
}

impl CouplingContext {
    pub fn new(geometry: CavityGeometry, budget: impl Into<BudgetSource>, emitter: EmitterModel) -> Self {
        CouplingContext {
            geometry,
            budget: budget.into(),
            emitter,
            eta_e: 1.0,
            orientation: Orientation::Ensemble {
                eta_theta: orientation_factor(false),
            },
            eta_lambda: None,
            q_emitter: None,
            volume_um3: None,
            n_emitters: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_unit_interval("eta_e", self.eta_e)?;
        self.orientation.validate()?;
        if let Some(eta) = self.eta_lambda {
            ensure_unit_interval("eta_lambda", eta)?;
        }
        if let Some(q) = self.q_emitter {
            ensure_positive("q_emitter", q)?;
        }
        if let Some(v) = self.volume_um3 {
            ensure_positive("volume_um3", v)?;
        }
        if self.n_emitters == 0 {
            return Err(Error::invalid("n_emitters", "need at least one emitter"));
        }
        Ok(())
    }

    pub fn lambda0_nm(&self) -> f64 {
        self.geometry.wavelength_nm()
    }

    pub fn omega_c(&self) -> f64 {
        wavelength_to_angular(self.lambda0_nm())
    }

    pub fn volume(&self) -> f64 {
        self.volume_um3.unwrap_or_else(|| mode_volume(&self.geometry))
    }

    /// η_E · (cos²θ or η_θ).
    pub fn field_factor(&self) -> f64 {
        self.eta_e * self.orientation.power()
    }

    pub fn budget_at_resonance(&self) -> Result<MirrorBudget> {
        self.budget.budget_at(self.lambda0_nm())
    }

    pub fn quality_factor(&self) -> Result<f64> {
        let budget = self.budget_at_resonance()?;
        quality_factor(self.lambda0_nm(), cavity_linewidth(self.lambda0_nm(), self.geometry.d_eff_um(), &budget)?)
    }

    /// κ at `wavelength_nm`; where the coatings stop being a resonator (the
    /// transmissive band) the resonance budget is used instead.
    pub fn kappa_at(&self, wavelength_nm: f64) -> Result<f64> {
        let d = self.geometry.d_eff_um();
        match self.budget.budget_at(wavelength_nm).and_then(|b| cavity_decay_rate(d, &b)) {
            Ok(kappa) => Ok(kappa),
            Err(err) => {
                debug!("κ at {wavelength_nm:.1} nm unavailable ({err}); using the resonance budget");
                cavity_decay_rate(d, &self.budget_at_resonance()?)
            }
        }
    }

    /// η_λ and Q_em, taken from overrides or the emitter spectrum.
    pub fn spectral_factors(&self) -> Result<(f64, f64)> {
        if let (Some(eta), Some(q)) = (self.eta_lambda, self.q_emitter) {
            return Ok((eta, q));
        }
        let band = emitter_band(&self.emitter, self.lambda0_nm())?;
        Ok((
            self.eta_lambda.unwrap_or(band.eta_lambda),
            self.q_emitter.unwrap_or_else(|| band.q_emitter()),
        ))
    }

    pub fn couplings(&self) -> Result<Vec<f64>> {
        let v = self.volume();
        let amp = self.orientation.amplitude();
        self.emitter
            .transitions()
            .iter()
            .map(|t| coupling_rate(t, v, self.eta_e, self.emitter.gamma0, amp))
            .collect()
    }
}

/// Contribution of one transition to the cavity emission rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRate {
    pub g0: f64,
    pub kappa: f64,
    /// Γₖ = κₖ + γ₀ + γₖ*.
    pub total_decay: f64,
    /// Δₖ = ω_c − ωₖ.
    pub detuning: f64,
    pub rate: f64,
}

pub fn transition_rates(context: &CouplingContext, omega_c: f64) -> Result<Vec<TransitionRate>> {
    context.validate()?;
    ensure_positive("omega_c", omega_c)?;
    let couplings = context.couplings()?;
    context
        .emitter
        .transitions()
        .iter()
        .zip(couplings)
        .map(|(t, g0)| {
            let kappa = context.kappa_at(t.wavelength_nm())?;
            let total_decay = kappa + context.emitter.gamma0 + t.gamma_star;
            let detuning = omega_c - t.omega;
            let rate = 4.0 * g0 * g0 * total_decay / (total_decay * total_decay + 4.0 * detuning * detuning);
            Ok(TransitionRate {
                g0,
                kappa,
                total_decay,
                detuning,
                rate,
            })
        })
        .collect()
}

/// R(ω_c) = Σₖ 4g₀ₖ²Γₖ / (Γₖ² + 4Δₖ²), rad/s.
pub fn cavity_emission_rate(context: &CouplingContext, omega_c: f64) -> Result<f64> {
    Ok(transition_rates(context, omega_c)?.iter().map(|t| t.rate).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurcellResult {
    pub c0: f64,
    /// Broadband formula.
    pub c: f64,
    /// Rate model, R/γ₀.
    pub c_rate_model: f64,
    pub couplings: Vec<f64>,
    pub r: f64,
    pub alpha: f64,
    pub q: f64,
    pub kappa: f64,
    pub volume_um3: f64,
    pub eta_lambda: f64,
    pub q_emitter: f64,
}

/// Evaluates every figure of merit for the cavity resonance of `context`.
/// α uses the transition with the largest coupling.
pub fn evaluate(context: &CouplingContext) -> Result<PurcellResult> {
    context.validate()?;
    let lambda0 = context.lambda0_nm();
    let volume = context.volume();
    let q = context.quality_factor()?;
    let (eta_lambda, q_emitter) = context.spectral_factors()?;
    let ff = context.field_factor();
    let c0 = ideal_purcell(lambda0, q, volume, ff)?;
    let c = effective_purcell(lambda0, q_emitter, volume, eta_lambda, ff)?;
    let rates = transition_rates(context, context.omega_c())?;
    let r: f64 = rates.iter().map(|t| t.rate).sum();
    let kappa = context.kappa_at(lambda0)?;
    let (strongest, g_max) = rates
        .iter()
        .map(|t| t.g0)
        .enumerate()
        .fold((0, 0.0), |best, (i, g)| if g > best.1 { (i, g) } else { best });
    let alpha = collective_figure_of_merit(
        context.n_emitters,
        g_max,
        kappa,
        context.emitter.transitions()[strongest].gamma_star.max(f64::MIN_POSITIVE),
    )?;
    Ok(PurcellResult {
        c0,
        c,
        c_rate_model: r / context.emitter.gamma0,
        couplings: rates.iter().map(|t| t.g0).collect(),
        r,
        alpha,
        q,
        kappa,
        volume_um3: volume,
        eta_lambda,
        q_emitter,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedEntry {
    pub index: usize,
    pub value: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable<T> {
    pub rows: Vec<T>,
    pub skipped: Vec<SkippedEntry>,
}

fn collect_sweep<T: Send>(values: &[f64], eval: impl Fn(f64) -> Result<T> + Sync) -> SweepTable<T> {
    let results: Vec<Result<T>> = values.par_iter().map(|&v| eval(v)).collect();
    let mut table = SweepTable {
        rows: Vec::with_capacity(values.len()),
        skipped: Vec::new(),
    };
    for (index, (value, result)) in values.iter().zip(results).enumerate() {
        match result {
            Ok(row) => table.rows.push(row),
            Err(err) => {
                warn!("sweep entry {index} ({value}) skipped: {err}");
                table.skipped.push(SkippedEntry {
                    index,
                    value: *value,
                    reason: err.to_string(),
                });
            }
        }
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeSweepRow {
    pub d_eff_um: f64,
    pub volume_um3: f64,
    pub c_broadband: f64,
    pub c_rate_model: f64,
}

/// Effective Purcell factor versus cavity length at the template's resonance
/// wavelength; the mode volume and κ are recomputed for each length.
pub fn sweep_mode_volume(template: &CouplingContext, d_eff_um: &[f64]) -> Result<SweepTable<VolumeSweepRow>> {
    template.validate()?;
    let (eta_lambda, q_emitter) = template.spectral_factors()?;
    let mut base = template.clone();
    base.volume_um3 = None;
    base.eta_lambda = Some(eta_lambda);
    base.q_emitter = Some(q_emitter);
    let lambda0 = base.lambda0_nm();
    Ok(collect_sweep(d_eff_um, |d| {
        let mut ctx = base.clone();
        ctx.geometry = base.geometry.with_length(d)?;
        let volume = ctx.volume();
        let c_broadband = effective_purcell(lambda0, q_emitter, volume, eta_lambda, ctx.field_factor())?;
        let c_rate_model = cavity_emission_rate(&ctx, ctx.omega_c())? / ctx.emitter.gamma0;
        Ok(VolumeSweepRow {
            d_eff_um: d,
            volume_um3: volume,
            c_broadband,
            c_rate_model,
        })
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualitySweepRow {
    pub lambda0_nm: f64,
    pub q: f64,
    pub c0: f64,
}

/// Ideal Purcell factor at each resonance wavelength, with Q from the
/// wavelength-dependent mirror budget.
pub fn sweep_quality_factor(template: &CouplingContext, lambda0_nm: &[f64]) -> Result<SweepTable<QualitySweepRow>> {
    template.validate()?;
    Ok(collect_sweep(lambda0_nm, |lambda| {
        let mut ctx = template.clone();
        ctx.geometry = template.geometry.at_wavelength(lambda)?;
        let q = ctx.quality_factor()?;
        Ok(QualitySweepRow {
            lambda0_nm: lambda,
            q,
            c0: ideal_purcell(lambda, q, ctx.volume(), ctx.field_factor())?,
        })
    }))
}

/// Ideal Purcell factor for explicit quality factors at the template's λ₀.
pub fn sweep_quality_values(template: &CouplingContext, q_values: &[f64]) -> Result<SweepTable<QualitySweepRow>> {
    template.validate()?;
    let lambda = template.lambda0_nm();
    let volume = template.volume();
    let ff = template.field_factor();
    Ok(collect_sweep(q_values, |q| {
        Ok(QualitySweepRow {
            lambda0_nm: lambda,
            q,
            c0: ideal_purcell(lambda, q, volume, ff)?,
        })
    }))
}

/// Design for the strong-coupling outlook. The cavity is assumed resonant
/// with the zero-phonon line (transition 0).
#[derive(Debug, Clone)]
pub struct OutlookDesign {
    pub geometry: CavityGeometry,
    pub budget: MirrorBudget,
    pub emitter: EmitterModel,
    /// Replaces the zero-phonon dephasing rate, rad/s.
    pub zpl_gamma_star: Option<f64>,
    pub eta_e: f64,
    pub cos_theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongCouplingReport {
    pub finesse: f64,
    pub kappa: f64,
    pub gamma0: f64,
    pub gamma_star: f64,
    pub g00: f64,
    pub volume_um3: f64,
    pub rate_model_c: f64,
    pub strong: bool,
}

impl StrongCouplingReport {
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("finesse", format!("{:.0}", self.finesse)),
            ("kappa_over_2pi_mhz", format!("{:.3}", angular_to_mhz(self.kappa))),
            ("two_g00_over_2pi_mhz", format!("{:.3}", angular_to_mhz(2.0 * self.g00))),
            ("gamma0_over_2pi_mhz", format!("{:.3}", angular_to_mhz(self.gamma0))),
            ("gamma_star_over_2pi_mhz", format!("{:.3}", angular_to_mhz(self.gamma_star))),
            ("mode_volume_um3", format!("{:.4}", self.volume_um3)),
            ("rate_model_c", format!("{:.3}", self.rate_model_c)),
            ("strong_coupling", self.strong.to_string()),
        ]
    }

    pub fn key_value_block(&self) -> String {
        self.key_values().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

impl fmt::Display for StrongCouplingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "finesse F: {:.0}", self.finesse)?;
        writeln!(f, "mode volume: {:.3} um^3", self.volume_um3)?;
        writeln!(f, "kappa/2pi: {:.1} MHz", angular_to_mhz(self.kappa))?;
        writeln!(f, "2g00/2pi: {:.3} GHz", angular_to_mhz(2.0 * self.g00) * 1e-3)?;
        writeln!(f, "gamma0/2pi: {:.1} MHz", angular_to_mhz(self.gamma0))?;
        writeln!(f, "gamma*/2pi: {:.1} MHz", angular_to_mhz(self.gamma_star))?;
        if self.strong {
            writeln!(f, "strong coupling: YES for γ*/2π < {:.0} MHz", angular_to_mhz(self.gamma_star))?;
        } else {
            let limit = self.kappa.max(self.gamma0).max(self.gamma_star);
            writeln!(
                f,
                "strong coupling: NO (2g00/2pi = {:.1} MHz does not exceed {:.1} MHz)",
                angular_to_mhz(2.0 * self.g00),
                angular_to_mhz(limit)
            )?;
        }
        writeln!(f, "rate-model C: {:.1}", self.rate_model_c)
    }
}

/// Strong coupling requires 2g₀₀ > max(κ, γ₀, γ*).
pub fn strong_coupling_report(design: &OutlookDesign) -> Result<StrongCouplingReport> {
    let mut transitions = design.emitter.transitions().to_vec();
    if let Some(gs) = design.zpl_gamma_star {
        ensure_non_negative("zpl_gamma_star", gs)?;
        transitions[0].gamma_star = gs;
    }
    let emitter = EmitterModel::new(design.emitter.gamma0, design.emitter.huang_rhys, transitions)?;
    let zpl = emitter.transitions()[0];
    let mut ctx = CouplingContext::new(design.geometry, design.budget, emitter.clone());
    ctx.eta_e = design.eta_e;
    ctx.orientation = Orientation::Aligned {
        cos_theta: design.cos_theta,
    };
    ctx.validate()?;
    let kappa = cavity_decay_rate(design.geometry.d_eff_um(), &design.budget)?;
    let g00 = coupling_rate(&zpl, ctx.volume(), ctx.eta_e, emitter.gamma0, ctx.orientation.amplitude())?;
    let rate = cavity_emission_rate(&ctx, zpl.omega)?;
    let strong = 2.0 * g00 > kappa.max(emitter.gamma0).max(zpl.gamma_star);
    Ok(StrongCouplingReport {
        finesse: finesse(&design.budget)?,
        kappa,
        gamma0: emitter.gamma0,
        gamma_star: zpl.gamma_star,
        g00,
        volume_um3: ctx.volume(),
        rate_model_c: rate / emitter.gamma0,
        strong,
    })
}
