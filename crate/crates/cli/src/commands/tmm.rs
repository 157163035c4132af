use nvcavity::stack::{
    penetration_depth, stack_response, stop_band, surface_field_factor, transmission_spectrum, STOP_BAND_MIN_REFLECTANCE,
};
use nvcavity::Spectrum;

use super::Run;
use crate::config::TmmConfig;
use crate::error::{CliError, CliResult, InSection};
use crate::output::{key_values, num};

pub fn run(run: &Run) -> CliResult<()> {
    let default = TmmConfig::default();
    let cfg = run.loaded.config.tmm.as_ref().unwrap_or(&default);
    let mut mirrors = Vec::new();
    for name in ["fiber", "plane"] {
        if let Some(m) = run.loaded.coating(name)? {
            mirrors.push((name, m.0));
        }
    }
    if mirrors.is_empty() {
        return Err(CliError::invalid("coatings", "configure coatings.fiber and/or coatings.plane"));
    }

    let mut out = run.output("tmm")?;
    let mut summary = String::new();
    for (name, stack) in &mirrors {
        let t = transmission_spectrum(stack, cfg.lambda_min_nm, cfg.lambda_max_nm, cfg.samples).in_section("tmm")?;
        let r_values = t
            .wavelengths()
            .iter()
            .map(|&w| stack_response(stack, w).map(|r| r.reflectance))
            .collect::<nvcavity::Result<Vec<_>>>()?;
        let r = Spectrum::new(t.wavelengths().to_vec(), r_values)?.with_quantity("reflectance");
        out.write_spectrum(&format!("transmission_{name}.csv"), &t)?;
        out.write_spectrum(&format!("reflection_{name}.csv"), &r)?;

        let at = cfg.report_wavelength_nm;
        let resp = stack_response(stack, at).in_section("tmm")?;
        let centre = centre_of_reflectance(&r);
        let band = stop_band(
            stack,
            centre,
            cfg.lambda_min_nm,
            cfg.lambda_max_nm,
            cfg.samples,
            1.0 - STOP_BAND_MIN_REFLECTANCE,
        )?;
        let pen = penetration_depth(stack, at)?;
        let eta_e = surface_field_factor(stack, at, 0.0)?;
        let band_text = band.map_or_else(|| "none".to_string(), |(lo, hi)| format!("{} {}", num(lo), num(hi)));
        summary.push_str(&format!("[{name}]\n"));
        summary.push_str(&key_values(&[
            ("layers", stack.layers().len().to_string()),
            ("report_wavelength_nm", num(at)),
            ("transmittance_ppm", format!("{:.3}", resp.transmittance * 1e6)),
            ("reflectance", format!("{:.9}", resp.reflectance)),
            ("reflection_phase_rad", format!("{:.6}", resp.reflection_phase)),
            ("penetration_depth_um", format!("{:.6}", pen.depth_um)),
            ("penetration_in_stop_band", pen.in_stop_band.to_string()),
            ("surface_field_factor", format!("{:.6}", eta_e)),
            ("stop_band_nm", band_text),
            ("stop_band_min_reflectance", num(STOP_BAND_MIN_REFLECTANCE)),
        ]));
        println!(
            "{name}: T({at} nm) = {:.1} ppm, stop band {}",
            resp.transmittance * 1e6,
            band.map_or_else(|| "not found".to_string(), |(lo, hi)| format!("{lo:.1}-{hi:.1} nm"))
        );
    }
    out.write_report("tmm_summary.txt", &summary)?;
    out.finish()
}

/// Wavelength of the highest sampled reflectance, used to anchor the stop band.
fn centre_of_reflectance(r: &Spectrum) -> f64 {
    let (i, _) = r.argmax();
    r.wavelengths()[i]
}
