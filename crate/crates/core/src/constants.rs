//! Physical constants and default material parameters.

pub use std::f64::consts::PI;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Refractive index of Ta₂O₅ used for the high-index coating layers.
pub const N_TA2O5: f64 = 2.10;

/// Refractive index of SiO₂ (coating low-index layers and fused-silica substrates).
pub const N_SIO2: f64 = 1.46;

/// Converts a vacuum wavelength in nm to angular frequency in rad/s.
pub fn wavelength_to_angular(wavelength_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / (wavelength_nm * 1e-9)
}

/// Converts an angular frequency in rad/s to a vacuum wavelength in nm.
pub fn angular_to_wavelength(omega: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / omega * 1e9
}

/// `2π × f` for `f` given in THz.
pub fn thz_to_angular(f_thz: f64) -> f64 {
    2.0 * PI * f_thz * 1e12
}

/// `ω / 2π` in THz.
pub fn angular_to_thz(omega: f64) -> f64 {
    omega / (2.0 * PI) / 1e12
}

/// `2π × f` for `f` given in MHz.
pub fn mhz_to_angular(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz * 1e6
}

pub fn angular_to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI) / 1e6
}
