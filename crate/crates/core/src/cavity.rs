//! Plane-concave Fabry-Perot geometry and loss budget.
//!
//! Lengths follow the lab convention: wavelengths in nm, the effective cavity
//! length and the mirror radius in µm, mode volumes in µm³. The effective
//! length includes the field penetration into both coatings; use
//! [`air_gap_um`] to recover the physical mirror separation.

use serde::{Deserialize, Serialize};

use crate::constants::{PI, SPEED_OF_LIGHT};
use crate::error::{ensure_positive, Error, Result};
use crate::stack::{stack_response, LayerStack};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityGeometry {
    d_eff_um: f64,
    radius_um: f64,
    wavelength_nm: f64,
}

/// Conditions under which the Gaussian-mode formulas lose accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParaxialWarning {
    /// `d_eff / r` above 0.5.
    NearStabilityEdge,
    /// Waist smaller than the wavelength.
    TightWaist,
}

impl CavityGeometry {
    pub fn new(d_eff_um: f64, radius_um: f64, wavelength_nm: f64) -> Result<Self> {
        ensure_positive("d_eff_um", d_eff_um)?;
        ensure_positive("radius_um", radius_um)?;
        ensure_positive("wavelength_nm", wavelength_nm)?;
        if d_eff_um >= radius_um {
            return Err(Error::invalid(
                "d_eff_um",
                format!("unstable plane-concave cavity: d_eff = {d_eff_um} µm >= r = {radius_um} µm"),
            ));
        }
        Ok(Self {
            d_eff_um,
            radius_um,
            wavelength_nm,
        })
    }

    pub fn d_eff_um(&self) -> f64 {
        self.d_eff_um
    }

    pub fn radius_um(&self) -> f64 {
        self.radius_um
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.wavelength_nm
    }

    /// Same mirrors probed at a different wavelength.
    pub fn at_wavelength(&self, wavelength_nm: f64) -> Result<Self> {
        Self::new(self.d_eff_um, self.radius_um, wavelength_nm)
    }

    pub fn with_length(&self, d_eff_um: f64) -> Result<Self> {
        Self::new(d_eff_um, self.radius_um, self.wavelength_nm)
    }

    /// Free spectral range in wavelength at the geometry's wavelength, nm.
    pub fn free_spectral_range_nm(&self) -> f64 {
        self.wavelength_nm * self.wavelength_nm / (2.0 * self.d_eff_um * 1e3)
    }

    /// Free spectral range `c / 2d`, Hz.
    pub fn free_spectral_range_hz(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.d_eff_um * 1e-6)
    }

    pub fn paraxial_warnings(&self) -> Vec<ParaxialWarning> {
        let mut warnings = Vec::new();
        if self.d_eff_um / self.radius_um > 0.5 {
            warnings.push(ParaxialWarning::NearStabilityEdge);
        }
        if mode_waist(self) < self.wavelength_nm * 1e-3 {
            warnings.push(ParaxialWarning::TightWaist);
        }
        warnings
    }

    /// Effective length at which the mode volume at `wavelength_nm` equals
    /// `volume_um3`, searched on the short branch `d_eff ∈ (0, r/2]`.
    pub fn length_for_volume(radius_um: f64, wavelength_nm: f64, volume_um3: f64) -> Result<Self> {
        ensure_positive("volume_um3", volume_um3)?;
        let volume_at = |d: f64| -> f64 {
            CavityGeometry::new(d, radius_um, wavelength_nm)
                .map(|g| mode_volume(&g))
                .unwrap_or(f64::NAN)
        };
        let (mut lo, mut hi) = (radius_um * 1e-9, radius_um * 0.5);
        if !(volume_at(lo) < volume_um3 && volume_at(hi) >= volume_um3) {
            return Err(Error::Domain(format!(
                "no effective length below r/2 gives V = {volume_um3} µm³"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if volume_at(mid) < volume_um3 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self::new(0.5 * (lo + hi), radius_um, wavelength_nm)
    }
}

/// Fundamental resonance wavelengths `2d/q` inside `[lambda_min_nm, lambda_max_nm]`, ascending.
pub fn fundamental_resonances(d_eff_um: f64, lambda_min_nm: f64, lambda_max_nm: f64) -> Vec<f64> {
    let two_d = 2.0 * d_eff_um * 1e3;
    let q_min = (two_d / lambda_max_nm).ceil().max(1.0) as u64;
    let q_max = (two_d / lambda_min_nm).floor() as u64;
    let mut out: Vec<f64> = (q_min..=q_max).map(|q| two_d / q as f64).collect();
    out.reverse();
    out
}

/// `d_eff = λ₁λ₂ / [2(λ₂ − λ₁)]` from two adjacent fundamental resonances, µm.
pub fn effective_length_from_modes(lambda1_nm: f64, lambda2_nm: f64) -> Result<f64> {
    ensure_positive("lambda1_nm", lambda1_nm)?;
    ensure_positive("lambda2_nm", lambda2_nm)?;
    if lambda2_nm <= lambda1_nm {
        return Err(Error::invalid("lambda2_nm", "must exceed lambda1_nm"));
    }
    Ok(lambda1_nm * lambda2_nm / (2.0 * (lambda2_nm - lambda1_nm)) * 1e-3)
}

/// Higher-order transverse mode spacing
/// `Δλ = λ² arccos(√(1 − d/r)) / (2π d)`, nm.
pub fn transverse_mode_spacing(geometry: &CavityGeometry) -> f64 {
    let lambda = geometry.wavelength_nm;
    let d_nm = geometry.d_eff_um * 1e3;
    let gouy = (1.0 - geometry.d_eff_um / geometry.radius_um).sqrt().acos();
    lambda * lambda * gouy / (2.0 * PI * d_nm)
}

/// Inverts [`transverse_mode_spacing`] for the mirror radius, µm.
pub fn roc_from_transverse_splitting(spacing_nm: f64, wavelength_nm: f64, d_eff_um: f64) -> Result<f64> {
    ensure_positive("wavelength_nm", wavelength_nm)?;
    ensure_positive("d_eff_um", d_eff_um)?;
    if spacing_nm == 0.0 {
        return Err(Error::Unbounded(
            "zero transverse splitting corresponds to a planar mirror (r → ∞)".into(),
        ));
    }
    ensure_positive("spacing_nm", spacing_nm)?;
    let d_nm = d_eff_um * 1e3;
    let limit = wavelength_nm * wavelength_nm / (4.0 * d_nm);
    if spacing_nm >= limit {
        return Err(Error::Domain(format!(
            "splitting {spacing_nm} nm reaches the stability limit λ²/4d = {limit} nm"
        )));
    }
    let gouy = 2.0 * PI * d_nm * spacing_nm / (wavelength_nm * wavelength_nm);
    let s = gouy.sin();
    Ok(d_eff_um / (s * s))
}

/// `w₀² = (λ/π) √(r d − d²)`; returns w₀ in µm.
pub fn mode_waist(geometry: &CavityGeometry) -> f64 {
    let lambda_um = geometry.wavelength_nm * 1e-3;
    let (r, d) = (geometry.radius_um, geometry.d_eff_um);
    (lambda_um / PI * (r * d - d * d).sqrt()).sqrt()
}

/// `V = π w₀² d / 4`, µm³.
pub fn mode_volume(geometry: &CavityGeometry) -> f64 {
    let w0 = mode_waist(geometry);
    PI * w0 * w0 * geometry.d_eff_um / 4.0
}

/// Mirror separation with the coating penetration removed, µm.
pub fn air_gap_um(d_eff_um: f64, penetration_fiber_um: f64, penetration_plane_um: f64) -> f64 {
    d_eff_um - penetration_fiber_um - penetration_plane_um
}

/// Transmission and loss of the fiber mirror (1) and the plane mirror (2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorBudget {
    pub t1: f64,
    pub l1: f64,
    pub t2: f64,
    pub l2: f64,
}

impl MirrorBudget {
    pub fn new(t1: f64, l1: f64, t2: f64, l2: f64) -> Result<Self> {
        for (field, v) in [("t1", t1), ("l1", l1), ("t2", t2), ("l2", l2)] {
            if !(v.is_finite() && (0.0..1.0).contains(&v)) {
                return Err(Error::invalid(field, format!("must lie in [0, 1), got {v}")));
            }
        }
        let total = t1 + l1 + t2 + l2;
        if total >= 1.0 {
            return Err(Error::invalid("mirror budget", format!("total loss {total} >= 1")));
        }
        Ok(Self { t1, l1, t2, l2 })
    }

    /// All four entries in ppm.
    pub fn from_ppm(t1: f64, l1: f64, t2: f64, l2: f64) -> Result<Self> {
        Self::new(t1 * 1e-6, l1 * 1e-6, t2 * 1e-6, l2 * 1e-6)
    }

    /// Two identical mirrors with `per_mirror` total loss, split as pure transmission.
    pub fn symmetric(per_mirror: f64) -> Result<Self> {
        Self::new(per_mirror, 0.0, per_mirror, 0.0)
    }

    pub fn total(&self) -> f64 {
        self.t1 + self.l1 + self.t2 + self.l2
    }

    pub fn r1(&self) -> f64 {
        1.0 - self.t1 - self.l1
    }

    pub fn r2(&self) -> f64 {
        1.0 - self.t2 - self.l2
    }

    /// `√(R₁R₂)`.
    pub fn geometric_reflectivity(&self) -> f64 {
        (self.r1() * self.r2()).sqrt()
    }

    fn require_resonator(&self) -> Result<()> {
        if self.total() <= 0.0 {
            return Err(Error::invalid("mirror budget", "all entries are zero"));
        }
        if self.r1() <= 0.0 || self.r2() <= 0.0 {
            return Err(Error::invalid("mirror budget", "a mirror has zero reflectivity"));
        }
        Ok(())
    }
}

/// Wavelength-dependent mirror budget.
pub trait BudgetModel: Sync {
    fn budget_at(&self, wavelength_nm: f64) -> Result<MirrorBudget>;
}

impl BudgetModel for MirrorBudget {
    fn budget_at(&self, _wavelength_nm: f64) -> Result<MirrorBudget> {
        Ok(*self)
    }
}

/// Transmissions from the coating simulation, losses carried as measured scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct CoatingBudget {
    pub fiber: LayerStack,
    pub plane: LayerStack,
    pub loss_fiber: f64,
    pub loss_plane: f64,
}

impl BudgetModel for CoatingBudget {
    fn budget_at(&self, wavelength_nm: f64) -> Result<MirrorBudget> {
        let t1 = stack_response(&self.fiber, wavelength_nm)?.transmittance;
        let t2 = stack_response(&self.plane, wavelength_nm)?.transmittance;
        MirrorBudget::new(t1, self.loss_fiber, t2, self.loss_plane)
    }
}

/// Either a fixed budget or one derived from coating stacks.
#[derive(Debug, Clone, PartialEq)]
pub enum BudgetSource {
    Scalar(MirrorBudget),
    Coatings(Box<CoatingBudget>),
}

impl BudgetModel for BudgetSource {
    fn budget_at(&self, wavelength_nm: f64) -> Result<MirrorBudget> {
        match self {
            BudgetSource::Scalar(b) => Ok(*b),
            BudgetSource::Coatings(c) => c.budget_at(wavelength_nm),
        }
    }
}

impl From<MirrorBudget> for BudgetSource {
    fn from(b: MirrorBudget) -> Self {
        BudgetSource::Scalar(b)
    }
}

impl From<CoatingBudget> for BudgetSource {
    fn from(c: CoatingBudget) -> Self {
        BudgetSource::Coatings(Box::new(c))
    }
}

/// `F = π (R₁R₂)^{1/4} / (1 − √(R₁R₂))`.
pub fn finesse(budget: &MirrorBudget) -> Result<f64> {
    budget.require_resonator()?;
    let r = budget.geometric_reflectivity();
    Ok(PI * r.sqrt() / (1.0 - r))
}

/// Full linewidth `δλ = λ₀² (T₁+T₂+L₁+L₂) / (4π d √(R₁R₂))`, nm.
pub fn cavity_linewidth(lambda0_nm: f64, d_eff_um: f64, budget: &MirrorBudget) -> Result<f64> {
    ensure_positive("lambda0_nm", lambda0_nm)?;
    ensure_positive("d_eff_um", d_eff_um)?;
    budget.require_resonator()?;
    let d_nm = d_eff_um * 1e3;
    Ok(lambda0_nm * lambda0_nm * budget.total() / (4.0 * PI * d_nm * budget.geometric_reflectivity()))
}

pub fn quality_factor(lambda0_nm: f64, linewidth_nm: f64) -> Result<f64> {
    ensure_positive("lambda0_nm", lambda0_nm)?;
    ensure_positive("linewidth_nm", linewidth_nm)?;
    Ok(lambda0_nm / linewidth_nm)
}

/// Energy decay rate `κ = c (T₁+T₂+L₁+L₂) / (2 d √(R₁R₂))`, rad/s.
pub fn cavity_decay_rate(d_eff_um: f64, budget: &MirrorBudget) -> Result<f64> {
    ensure_positive("d_eff_um", d_eff_um)?;
    budget.require_resonator()?;
    Ok(SPEED_OF_LIGHT * budget.total() / (2.0 * d_eff_um * 1e-6 * budget.geometric_reflectivity()))
}

/// Probability that an intracavity photon leaves through the plane mirror, `T₂ / Σ`.
pub fn outcoupling_efficiency(budget: &MirrorBudget) -> Result<f64> {
    let total = budget.total();
    if total <= 0.0 {
        return Err(Error::invalid("mirror budget", "all entries are zero"));
    }
    Ok(budget.t2 / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn measured_budget() -> MirrorBudget {
        MirrorBudget::from_ppm(810.0, 71.0, 1900.0, 23.0).unwrap()
    }

    #[test]
    fn effective_length_from_adjacent_modes() {
        assert_abs_diff_eq!(effective_length_from_modes(715.0, 755.0).unwrap(), 6.7478, epsilon = 1e-4);
        assert_relative_eq!(effective_length_from_modes(700.0, 1400.0).unwrap(), 0.7, max_relative = 1e-12);
        assert!(effective_length_from_modes(755.0, 715.0).is_err());
        assert!(effective_length_from_modes(700.0, 700.0).is_err());
    }

    #[test]
    fn resonances_invert_to_length() {
        let modes = fundamental_resonances(10.0, 650.0, 850.0);
        assert!(modes.len() >= 2);
        for pair in modes.windows(2) {
            let d = effective_length_from_modes(pair[0], pair[1]).unwrap();
            assert_relative_eq!(d, 10.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn transverse_spacing_and_inverse() {
        let g = CavityGeometry::new(6.75, 100.0, 715.0).unwrap();
        let dl = transverse_mode_spacing(&g);
        let oracle = 715.0_f64.powi(2) * (1.0_f64 - 0.0675).sqrt().acos() / (2.0 * PI * 6750.0);
        assert_relative_eq!(dl, oracle, max_relative = 1e-14);
        assert_abs_diff_eq!(dl, 3.2, epsilon = 0.05);
        let r = roc_from_transverse_splitting(dl, 715.0, 6.75).unwrap();
        assert_relative_eq!(r, 100.0, max_relative = 1e-9);
    }

    #[test]
    fn transverse_spacing_vanishes_in_planar_limit() {
        let mut last = f64::INFINITY;
        for r in [1e2, 1e4, 1e6, 1e8] {
            let g = CavityGeometry::new(5.0, r, 700.0).unwrap();
            let s = transverse_mode_spacing(&g);
            assert!(s < last);
            last = s;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn roc_inversion_edge_cases() {
        assert!(matches!(roc_from_transverse_splitting(0.0, 715.0, 6.75), Err(Error::Unbounded(_))));
        let limit = 715.0 * 715.0 / (4.0 * 6750.0);
        assert!(matches!(roc_from_transverse_splitting(limit, 715.0, 6.75), Err(Error::Domain(_))));
        let large = roc_from_transverse_splitting(1e-6, 715.0, 6.75).unwrap();
        assert!(large > 1e9);
    }

    #[test]
    fn waist_and_volume_at_shortest_length() {
        let g = CavityGeometry::new(4.3, 100.0, 780.0).unwrap();
        let w0 = mode_waist(&g);
        assert_relative_eq!(w0, 2.24, max_relative = 0.05);
        let v = mode_volume(&g);
        assert_relative_eq!(v, 17.0, max_relative = 0.1);
        assert!(g.paraxial_warnings().is_empty());
    }

    #[test]
    fn unstable_geometry_is_rejected() {
        assert!(CavityGeometry::new(100.0, 100.0, 780.0).is_err());
        assert!(CavityGeometry::new(120.0, 100.0, 780.0).is_err());
        assert!(CavityGeometry::new(0.0, 100.0, 780.0).is_err());
    }

    #[test]
    fn waist_grows_with_radius() {
        let mut last = 0.0;
        for r in [10.0, 20.0, 50.0, 100.0, 300.0, 1000.0] {
            let w = mode_waist(&CavityGeometry::new(5.0, r, 710.0).unwrap());
            assert!(w > last);
            last = w;
        }
    }

    #[test]
    fn volume_linear_in_waist_squared() {
        let g = CavityGeometry::new(8.0, 100.0, 710.0).unwrap();
        let w0 = mode_waist(&g);
        assert_relative_eq!(mode_volume(&g) / (w0 * w0), PI * 8.0 / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn length_for_evaluation_volume() {
        let g = CavityGeometry::length_for_volume(100.0, 710.0, 19.0).unwrap();
        assert_abs_diff_eq!(g.d_eff_um(), 5.0, epsilon = 0.1);
        assert_relative_eq!(mode_volume(&g), 19.0, max_relative = 1e-9);
    }

    #[test]
    fn paraxial_warnings_fire_near_stability_edge() {
        let g = CavityGeometry::new(9.0, 10.0, 780.0).unwrap();
        assert!(g.paraxial_warnings().contains(&ParaxialWarning::NearStabilityEdge));
    }

    #[test]
    fn finesse_examples() {
        let f = finesse(&MirrorBudget::symmetric(20e-6).unwrap()).unwrap();
        assert_relative_eq!(f, 157_080.0, max_relative = 1e-3);
        let total = 2.0 * PI / 30_000.0;
        let f = finesse(&MirrorBudget::symmetric(total / 2.0).unwrap()).unwrap();
        assert_relative_eq!(f, 30_000.0, max_relative = 1e-3);
        assert!(finesse(&MirrorBudget::new(0.0, 0.0, 0.0, 0.0).unwrap()).is_err());
        assert!(MirrorBudget::new(0.5, 0.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn linewidth_and_quality_factor() {
        let b = MirrorBudget::symmetric(209e-6 / 2.0).unwrap();
        let dl = cavity_linewidth(780.0, 4.3, &b).unwrap();
        assert_abs_diff_eq!(dl, 2.36e-3, epsilon = 0.02e-3);
        let q = quality_factor(780.0, dl).unwrap();
        assert_relative_eq!(q, 3.3e5, max_relative = 0.02);
        let doubled = cavity_linewidth(780.0, 8.6, &b).unwrap();
        assert_relative_eq!(doubled, dl / 2.0, max_relative = 1e-12);
        // δλ = FSR / F
        let fsr = 780.0 * 780.0 / (2.0 * 4300.0);
        assert_relative_eq!(dl, fsr / finesse(&b).unwrap(), max_relative = 1e-3);
        assert_relative_eq!(quality_factor(780.0, 780.0).unwrap(), 1.0);
    }

    #[test]
    fn long_cavity_quality_factor() {
        // F = 20000 as a symmetric budget at d = 39 µm
        let per_mirror = PI / 20_000.0;
        let b = MirrorBudget::symmetric(per_mirror).unwrap();
        let dl = cavity_linewidth(780.0, 39.0, &b).unwrap();
        assert_relative_eq!(quality_factor(780.0, dl).unwrap(), 2.0e6, max_relative = 0.01);
    }

    #[test]
    fn decay_rate_outlook_design() {
        let b = MirrorBudget::symmetric(20e-6).unwrap();
        let kappa = cavity_decay_rate(2.0, &b).unwrap();
        assert_relative_eq!(kappa / (2.0 * PI), 480e6, max_relative = 0.01);
        let fsr = SPEED_OF_LIGHT / (2.0 * 2.0e-6);
        assert_relative_eq!(kappa, 2.0 * PI * fsr / finesse(&b).unwrap(), max_relative = 1e-3);
        assert_relative_eq!(cavity_decay_rate(4.0, &b).unwrap(), kappa / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn outcoupling_examples() {
        assert_abs_diff_eq!(outcoupling_efficiency(&measured_budget()).unwrap(), 0.678, epsilon = 1e-3);
        let only_t2 = MirrorBudget::new(0.0, 0.0, 1e-3, 0.0).unwrap();
        assert_eq!(outcoupling_efficiency(&only_t2).unwrap(), 1.0);
        assert_eq!(outcoupling_efficiency(&MirrorBudget::symmetric(1e-4).unwrap()).unwrap(), 0.5);
        assert!(outcoupling_efficiency(&MirrorBudget::new(0.0, 0.0, 0.0, 0.0).unwrap()).is_err());
    }

    #[test]
    fn coating_budget_reflects_simulated_transmissions() {
        let coatings = CoatingBudget {
            fiber: crate::stack::calibrated_fiber_coating(),
            plane: crate::stack::calibrated_plane_coating(),
            loss_fiber: 71e-6,
            loss_plane: 23e-6,
        };
        let b = coatings.budget_at(710.0).unwrap();
        assert!(b.t2 > b.t1);
        // transmissive band: no resonator
        assert!(coatings.budget_at(640.0).is_err());
    }

    #[test]
    fn air_gap_subtracts_penetration() {
        assert_abs_diff_eq!(air_gap_um(6.75, 0.4, 1.0), 5.35, epsilon = 1e-12);
    }
}
