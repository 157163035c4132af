use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nvcavity::analysis::{
    analyze, dipole_collection_efficiency, locate_resonance, AnalysisReport, AnalysisSettings, MeasurementSet,
    SUMMARY_HEADER,
};
use nvcavity::cavity::{outcoupling_efficiency, BudgetModel};
use nvcavity::stack::{stack_response, transmission_spectrum};
use nvcavity::synth::{rng_from_seed, synthesize, SyntheticSetup};
use nvcavity::Spectrum;

use super::Run;
use crate::config::{AnalyzeConfig, SynthConfig};
use crate::error::{CliError, CliResult, InSection};
use crate::output::{key_values, Output};

pub fn run(run: &Run, files: &[PathBuf], synthetic: bool) -> CliResult<()> {
    let default = AnalyzeConfig::default();
    let cfg = run.loaded.config.analyze.as_ref().unwrap_or(&default);
    let eta_omega = resolve_eta_omega(cfg)?;
    if synthetic {
        return run_synthetic(run, cfg, eta_omega);
    }

    let field_path = |field: &str, p: &Option<PathBuf>| -> CliResult<PathBuf> {
        let p = p
            .as_ref()
            .ok_or_else(|| CliError::invalid(format!("analyze.{field}"), "required"))?;
        run.loaded.input_file(&format!("analyze.{field}"), p)
    };
    let s_m = read_shared("analyze.through_mirror", &field_path("through_mirror", &cfg.through_mirror)?)?;
    let s0 = read_shared("analyze.reference", &field_path("reference", &cfg.reference)?)?;
    let t2 = match &cfg.t2 {
        Some(_) => read_shared("analyze.t2", &field_path("t2", &cfg.t2)?)?,
        None => {
            let (plane, _) = run
                .loaded
                .coating("plane")?
                .ok_or_else(|| CliError::invalid("analyze.t2", "required when coatings.plane is not configured"))?;
            let values = s_m
                .wavelengths()
                .iter()
                .map(|&w| stack_response(&plane, w).map(|r| r.transmittance))
                .collect::<nvcavity::Result<Vec<_>>>()?;
            Spectrum::new(s_m.wavelengths().to_vec(), values)?.with_quantity("transmittance")
        }
    };

    let mut inputs: Vec<PathBuf> = cfg.cavity_spectra.iter().map(|p| run.loaded.resolve(p)).collect();
    inputs.extend(files.iter().cloned());
    if inputs.is_empty() {
        return Err(CliError::invalid("analyze.cavity_spectra", "no cavity spectra given"));
    }

    let settings_for = |lambda0: f64| -> CliResult<AnalysisSettings> {
        let eta_c = match cfg.eta_c {
            Some(e) => e,
            None => {
                let budget = run.loaded.budget().map_err(|_| {
                    CliError::invalid("analyze.eta_c", "required when no mirror budget is configured")
                })?;
                outcoupling_efficiency(&budget.budget_at(lambda0).in_section("budget")?)?
            }
        };
        Ok(apply_overrides(AnalysisSettings::new(eta_omega, eta_c), cfg))
    };
    let instrument = cfg.instrument_fwhm_nm;

    let mut out = run.output("analyze")?;
    let mut labels = BTreeSet::new();
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for path in &inputs {
        let result = (|| -> CliResult<AnalysisReport> {
            let s_c = Spectrum::from_csv_path(path)?;
            let (lo, hi) = cfg
                .search_nm
                .map(|[a, b]| (a, b))
                .unwrap_or((s_c.min_wavelength(), s_c.max_wavelength()));
            let (lambda0, fwhm) = locate_resonance(&s_c, lo, hi)?;
            let mut settings = settings_for(lambda0)?;
            let window_width = cfg.linewidth_nm.unwrap_or(fwhm);
            settings.window_fwhm = instrument_window(settings.window_fwhm, window_width, instrument);
            let set = MeasurementSet {
                label: unique_label(&mut labels, &s_c.label),
                s_m: s_m.clone(),
                t2: t2.clone(),
                s0: s0.clone(),
                s_c,
                lambda0_nm: lambda0,
                fwhm_nm: window_width,
                linewidth_nm: cfg.linewidth_nm,
            };
            let report = analyze(&set, &settings)?;
            Ok(report)
        })();
        match result {
            Ok(report) => {
                let body = format!("source = {}\n{}", path.display(), report.key_value_block());
                out.write_report(&format!("report_{}.txt", report.label), &body)?;
                println!("{}: C = {:.3e}, C0 = {:.1}", report.label, report.c, report.c0);
                reports.push(report);
            }
            Err(err) => {
                log::error!("{}: {err}", path.display());
                errors.push(format!("{}: {err}", path.display()));
            }
        }
    }

    if !reports.is_empty() {
        write_summary(&mut out, &reports)?;
    }
    if !errors.is_empty() {
        let body: String = errors.iter().map(|e| format!("error = {e}\n")).collect();
        out.write_report("errors.txt", &body)?;
    }
    out.finish()?;
    match (reports.len(), errors.len()) {
        (_, 0) => Ok(()),
        (0, n) => Err(CliError::runtime(format!("all {n} inputs failed"))),
        (ok, failed) => Err(CliError::PartialBatch {
            failed,
            total: ok + failed,
        }),
    }
}

fn resolve_eta_omega(cfg: &AnalyzeConfig) -> CliResult<f64> {
    match (cfg.eta_omega, cfg.collection_na) {
        (Some(e), None) => {
            if e > 0.0 && e <= 1.0 {
                Ok(e)
            } else {
                Err(CliError::invalid("analyze.eta_omega", format!("must lie in (0, 1], got {e}")))
            }
        }
        (None, Some(na)) => dipole_collection_efficiency(na, cfg.medium_index).in_section("analyze"),
        (Some(_), Some(_)) => Err(CliError::invalid("analyze.eta_omega", "excludes collection_na")),
        (None, None) => Err(CliError::invalid(
            "analyze.eta_omega",
            "required (collection efficiency of the free-space setup, or give collection_na)",
        )),
    }
}

fn apply_overrides(mut settings: AnalysisSettings, cfg: &AnalyzeConfig) -> AnalysisSettings {
    if let Some([a, b]) = cfg.free_space_band_nm {
        settings.free_space_band_nm = (a, b);
    }
    if let Some([a, b]) = cfg.fit_window_nm {
        settings.fit_window_nm = (a, b);
    }
    if let Some(w) = cfg.window_fwhm {
        settings.window_fwhm = w;
    }
    settings
}

/// Window width in units of `fwhm_nm`, at least six instrument widths so a
/// blurred line is integrated whole; the blur only redistributes counts.
fn instrument_window(window_fwhm: f64, fwhm_nm: f64, instrument_fwhm_nm: f64) -> f64 {
    window_fwhm.max(6.0 * instrument_fwhm_nm / fwhm_nm)
}

/// Shared inputs are not batch items: a bad one is a configuration error.
fn read_shared(field: &str, path: &Path) -> CliResult<Spectrum> {
    Spectrum::from_csv_path(path).map_err(|e| CliError::invalid(field, format!("{}: {e}", path.display())))
}

fn unique_label(used: &mut BTreeSet<String>, label: &str) -> String {
    let base = if label.is_empty() { "spectrum" } else { label };
    let mut candidate = base.to_string();
    let mut n = 2;
    while !used.insert(candidate.clone()) {
        candidate = format!("{base}_{n}");
        n += 1;
    }
    candidate
}

fn write_summary(out: &mut Output, reports: &[AnalysisReport]) -> CliResult<()> {
    let rows: Vec<Vec<String>> = reports.iter().map(|r| r.summary_row().to_vec()).collect();
    out.write_table("summary.csv", &SUMMARY_HEADER, &rows)?;
    Ok(())
}

/// Generates S_m, S₀, T₂ and S_c from the rate model, writes them, and runs
/// the analysis on the result next to the model truth.
fn run_synthetic(run: &Run, cfg: &AnalyzeConfig, eta_omega: f64) -> CliResult<()> {
    let default = SynthConfig::default();
    let syn = run.loaded.config.synthesize.as_ref().unwrap_or(&default);
    let geometry = run.loaded.geometry()?;
    let ctx = run.loaded.coupling_context(geometry)?;
    let (plane, _) = run.loaded.require_coating("plane")?;
    let eta_c = match cfg.eta_c {
        Some(e) => e,
        None => outcoupling_efficiency(&ctx.budget_at_resonance().in_section("budget")?)?,
    };
    let setup = SyntheticSetup {
        context: ctx,
        eta_omega,
        eta_c,
        free_space_counts: syn.free_space_counts_per_s,
        plane_transmission: transmission_spectrum(&plane, 440.0, 1410.0, 9701)?,
        grid_nm: None,
        instrument_fwhm_nm: syn.instrument_fwhm_nm,
        noise: syn.noise,
    };
    let m = synthesize(&setup, &mut rng_from_seed(run.seed)).in_section("synthesize")?;

    let mut out = run.output("analyze")?;
    out.set_seed(run.seed);
    out.write_spectrum("synthetic/through_mirror.csv", &m.set.s_m)?;
    out.write_spectrum("synthetic/reference.csv", &m.set.s0)?;
    out.write_spectrum("synthetic/t2.csv", &m.set.t2)?;
    out.write_spectrum("synthetic/cavity.csv", &m.set.s_c)?;

    let mut settings = apply_overrides(m.settings, cfg);
    settings.window_fwhm = instrument_window(settings.window_fwhm, m.set.fwhm_nm, syn.instrument_fwhm_nm);
    let report = analyze(&m.set, &settings)?;
    let mut body = report.key_value_block();
    body.push_str(&key_values(&[
        ("truth_C", format!("{:.6e}", m.truth.c)),
        ("truth_C0", format!("{:.6e}", m.truth.c0)),
        ("truth_Q", format!("{:.6e}", m.truth.q)),
        ("truth_b", format!("{:.6e}", m.truth.b)),
        ("relative_error_C", format!("{:+.4}", report.c / m.truth.c - 1.0)),
        ("relative_error_C0", format!("{:+.4}", report.c0 / m.truth.c0 - 1.0)),
    ]));
    out.write_report(&format!("report_{}.txt", report.label), &body)?;
    write_summary(&mut out, std::slice::from_ref(&report))?;
    println!(
        "synthetic: C = {:.3e} (model {:.3e}), C0 = {:.1} (model {:.1})",
        report.c, m.truth.c, report.c0, m.truth.c0
    );
    out.finish()
}
