use nvcavity::cavity::CavityGeometry;
use nvcavity::purcell::{sweep_mode_volume, sweep_quality_factor, sweep_quality_values, QualitySweepRow, SkippedEntry};

use super::{log_log_slope, Run};
use crate::error::{CliError, CliResult, InSection};
use crate::output::{key_values, num, PlotData};

pub const VOLUME_HEADER: [&str; 4] = ["d_eff_um", "V_um3", "C_broadband", "C_rate_model"];
pub const QUALITY_HEADER: [&str; 3] = ["lambda0_nm", "Q", "C0"];

pub fn run(run: &Run) -> CliResult<()> {
    let cfg = run
        .loaded
        .config
        .purcell_sweep
        .as_ref()
        .ok_or_else(|| CliError::invalid("purcell_sweep", "section is required"))?;
    let cavity = run.loaded.config.cavity.as_ref();
    let radius = cfg
        .radius_um
        .or(cavity.map(|c| c.radius_um))
        .ok_or_else(|| CliError::invalid("purcell_sweep.radius_um", "required (or set cavity.radius_um)"))?;
    let lambda0 = cfg
        .lambda0_nm
        .or(cavity.map(|c| c.lambda0_nm))
        .ok_or_else(|| CliError::invalid("purcell_sweep.lambda0_nm", "required (or set cavity.lambda0_nm)"))?;
    if cfg.volume.is_none() && cfg.quality.is_none() {
        return Err(CliError::invalid("purcell_sweep", "needs a [purcell_sweep.volume] or [purcell_sweep.quality] table"));
    }

    let mut out = run.output("purcell-sweep")?;
    let mut plot = PlotData::new();
    let mut summary = Vec::new();
    let mut skipped_lines = String::new();

    if let Some(vol) = &cfg.volume {
        let lengths = vol.d_eff_um.points("purcell_sweep.volume.d_eff_um")?;
        // Any stable length works as template; each row sets its own.
        let template_geometry = CavityGeometry::new(0.25 * radius, radius, lambda0).in_section("purcell_sweep")?;
        let ctx = run.loaded.coupling_context(template_geometry)?;
        let table = sweep_mode_volume(&ctx, &lengths)?;
        let rows: Vec<Vec<String>> = table
            .rows
            .iter()
            .map(|r| vec![num(r.d_eff_um), num(r.volume_um3), num(r.c_broadband), num(r.c_rate_model)])
            .collect();
        out.write_table("volume_sweep.csv", &VOLUME_HEADER, &rows)?;
        let v: Vec<f64> = table.rows.iter().map(|r| r.volume_um3).collect();
        let cb: Vec<f64> = table.rows.iter().map(|r| r.c_broadband).collect();
        let cr: Vec<f64> = table.rows.iter().map(|r| r.c_rate_model).collect();
        plot.series("C_broadband", "V_um3", "C", v.iter().copied().zip(cb.iter().copied()));
        plot.series("C_rate_model", "V_um3", "C", v.iter().copied().zip(cr.iter().copied()));
        let slope = |y: &[f64]| log_log_slope(&v, y).map_or_else(|| "n/a".to_string(), |s| format!("{s:.4}"));
        summary.push(("volume_points", table.rows.len().to_string()));
        summary.push(("volume_skipped", table.skipped.len().to_string()));
        summary.push(("slope_log_C_broadband_vs_log_V", slope(&cb)));
        summary.push(("slope_log_C_rate_model_vs_log_V", slope(&cr)));
        skipped_lines.push_str(&skipped_text("volume", "d_eff_um", &table.skipped));
    }

    if let Some(q) = &cfg.quality {
        if q.lambda0_nm.is_none() && q.q.is_none() {
            return Err(CliError::invalid("purcell_sweep.quality", "needs lambda0_nm and/or q"));
        }
        let geometry = CavityGeometry::new(q.d_eff_um, radius, lambda0).in_section("purcell_sweep.quality")?;
        let ctx = run.loaded.coupling_context(geometry)?;
        let mut rows: Vec<QualitySweepRow> = Vec::new();
        if let Some(grid) = &q.lambda0_nm {
            let table = sweep_quality_factor(&ctx, &grid.points("purcell_sweep.quality.lambda0_nm")?)?;
            skipped_lines.push_str(&skipped_text("quality", "lambda0_nm", &table.skipped));
            rows.extend(table.rows);
        }
        if let Some(grid) = &q.q {
            let table = sweep_quality_values(&ctx, &grid.points("purcell_sweep.quality.q")?)?;
            skipped_lines.push_str(&skipped_text("quality", "q", &table.skipped));
            rows.extend(table.rows);
        }
        let csv_rows: Vec<Vec<String>> = rows.iter().map(|r| vec![num(r.lambda0_nm), num(r.q), num(r.c0)]).collect();
        out.write_table("quality_sweep.csv", &QUALITY_HEADER, &csv_rows)?;
        plot.series("C0", "Q", "C0", rows.iter().map(|r| (r.q, r.c0)));
        summary.push(("quality_points", rows.len().to_string()));
        if let Some(best) = rows.iter().max_by(|a, b| a.c0.total_cmp(&b.c0)) {
            summary.push(("max_C0", format!("{:.3}", best.c0)));
            summary.push(("max_C0_Q", format!("{:.6e}", best.q)));
            summary.push(("max_C0_lambda0_nm", num(best.lambda0_nm)));
        }
    }

    let mut body = key_values(&summary);
    body.push_str(&skipped_lines);
    print!("{body}");
    out.write_report("sweep_summary.txt", &body)?;
    out.write_report("sweep_plot_data.txt", &plot.render())?;
    out.finish()
}

fn skipped_text(sweep: &str, key: &str, skipped: &[SkippedEntry]) -> String {
    skipped
        .iter()
        .map(|s| format!("skipped {sweep}[{}] {key} = {}: {}\n", s.index, num(s.value), s.reason))
        .collect()
}
