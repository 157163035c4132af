use nvcavity::cavity::CavityGeometry;
use nvcavity::constants::mhz_to_angular;
use nvcavity::purcell::{strong_coupling_report, OutlookDesign};

use super::Run;
use crate::error::{CliError, CliResult, InSection};

pub fn run(run: &Run) -> CliResult<()> {
    let cfg = run
        .loaded
        .config
        .outlook
        .as_ref()
        .ok_or_else(|| CliError::invalid("outlook", "section is required"))?;
    let design = OutlookDesign {
        geometry: CavityGeometry::new(cfg.d_eff_um, cfg.radius_um, cfg.lambda0_nm).in_section("outlook")?,
        budget: cfg.budget.scalar("outlook.budget")?,
        emitter: run.loaded.emitter()?,
        zpl_gamma_star: cfg.zpl_gamma_star_over_2pi_mhz.map(mhz_to_angular),
        eta_e: cfg.eta_e,
        cos_theta: cfg.cos_theta,
    };
    let report = strong_coupling_report(&design).in_section("outlook")?;
    print!("{report}");
    let mut out = run.output("outlook")?;
    out.write_report("outlook.txt", &format!("{}{report}", report.key_value_block()))?;
    out.finish()
}
