use nvcavity::cavity::{
    air_gap_um, cavity_decay_rate, cavity_linewidth, finesse, mode_volume, mode_waist, outcoupling_efficiency,
    quality_factor, BudgetModel,
};
use nvcavity::constants::angular_to_mhz;
use nvcavity::purcell::evaluate;
use nvcavity::stack::penetration_depth;

use super::Run;
use crate::error::{CliError, CliResult, InSection};
use crate::output::{key_values, num};

pub fn run(run: &Run) -> CliResult<()> {
    let geometry = run.loaded.geometry()?;
    let lambda0 = geometry.wavelength_nm();
    let d = geometry.d_eff_um();
    let budget = run.loaded.budget()?.budget_at(lambda0).in_section("budget")?;
    let linewidth = cavity_linewidth(lambda0, d, &budget)?;
    let mut lines = vec![
        ("d_eff_um", num(d)),
        ("radius_um", num(geometry.radius_um())),
        ("lambda0_nm", num(lambda0)),
        ("waist_um", format!("{:.6}", mode_waist(&geometry))),
        ("mode_volume_um3", format!("{:.6}", mode_volume(&geometry))),
        ("fsr_nm", format!("{:.6}", geometry.free_spectral_range_nm())),
        ("fsr_ghz", format!("{:.6}", geometry.free_spectral_range_hz() * 1e-9)),
        ("t1_ppm", format!("{:.3}", budget.t1 * 1e6)),
        ("l1_ppm", format!("{:.3}", budget.l1 * 1e6)),
        ("t2_ppm", format!("{:.3}", budget.t2 * 1e6)),
        ("l2_ppm", format!("{:.3}", budget.l2 * 1e6)),
        ("finesse", format!("{:.1}", finesse(&budget)?)),
        ("linewidth_nm", format!("{:.6e}", linewidth)),
        ("quality_factor", format!("{:.6e}", quality_factor(lambda0, linewidth)?)),
        ("kappa_over_2pi_mhz", format!("{:.3}", angular_to_mhz(cavity_decay_rate(d, &budget)?))),
        ("eta_c", format!("{:.6}", outcoupling_efficiency(&budget)?)),
    ];
    let warnings = geometry.paraxial_warnings();
    lines.push((
        "paraxial_warnings",
        if warnings.is_empty() {
            "none".to_string()
        } else {
            warnings.iter().map(|w| format!("{w:?}")).collect::<Vec<_>>().join(" ")
        },
    ));
    for w in &warnings {
        log::warn!("paraxial approximation strained: {w:?}");
    }

    if let (Some((fiber, _)), Some((plane, _))) = (run.loaded.coating("fiber")?, run.loaded.coating("plane")?) {
        let p1 = penetration_depth(&fiber, lambda0)?;
        let p2 = penetration_depth(&plane, lambda0)?;
        lines.push(("penetration_fiber_um", format!("{:.6}", p1.depth_um)));
        lines.push(("penetration_plane_um", format!("{:.6}", p2.depth_um)));
        lines.push(("air_gap_um", format!("{:.6}", air_gap_um(d, p1.depth_um, p2.depth_um))));
    }

    // Purcell figures need the coupling inputs; a cavity-only config skips them.
    match run.loaded.coupling_context(geometry) {
        Ok(ctx) => {
            let res = evaluate(&ctx)?;
            lines.extend([
                ("eta_e", format!("{:.6}", ctx.eta_e)),
                ("orientation_factor", format!("{:.6}", ctx.orientation.power())),
                ("eta_lambda", format!("{:.6}", res.eta_lambda)),
                ("q_emitter", format!("{:.6}", res.q_emitter)),
                ("C0", format!("{:.6e}", res.c0)),
                ("C_broadband", format!("{:.6e}", res.c)),
                ("C_rate_model", format!("{:.6e}", res.c_rate_model)),
                ("alpha", format!("{:.6e}", res.alpha)),
            ]);
        }
        Err(CliError::Validation { field, reason }) => {
            log::warn!("Purcell figures skipped: invalid {field}: {reason}");
        }
        Err(other) => return Err(other),
    }

    let body = key_values(&lines);
    print!("{body}");
    let mut out = run.output("cavity")?;
    out.write_report("cavity_report.txt", &body)?;
    out.finish()
}
