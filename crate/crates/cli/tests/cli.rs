use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

use nvcavity::cavity::{CavityGeometry, MirrorBudget};
use nvcavity::emitter::reference_emitter_model;
use nvcavity::purcell::{evaluate, CouplingContext, Orientation};

fn example_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/volume_sweep.toml")
}

fn nvcavity(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvcavity")).args(args).output().unwrap()
}

fn run_with(config: &Path, out: &Path, args: &[&str]) -> Output {
    let mut all = vec!["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    all.extend_from_slice(args);
    nvcavity(&all)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn key_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing in\n{text}"))
        .to_string()
}

fn sha256_hex(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

fn read_csv(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn tmm_rows_and_transmission_at_710() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(&example_config(), dir.path(), &["tmm"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("transmission_plane.csv"));
    assert_eq!(header, "wavelength_nm,transmittance");
    assert_eq!(rows.len(), 1000);
    let near = rows
        .iter()
        .min_by(|a, b| (a[0] - 710.0).abs().total_cmp(&(b[0] - 710.0).abs()))
        .unwrap();
    assert!((near[0] - 710.0).abs() < 0.2);
    let t_ppm = near[1] * 1e6;
    assert!((t_ppm / 1900.0 - 1.0).abs() < 0.2, "T2 = {t_ppm} ppm");
    let (rheader, rrows) = read_csv(&dir.path().join("reflection_fiber.csv"));
    assert_eq!(rheader, "wavelength_nm,reflectance");
    assert_eq!(rrows.len(), 1000);

    let summary = fs::read_to_string(dir.path().join("tmm_summary.txt")).unwrap();
    assert!(summary.starts_with(&format!("# config_sha256 = {}", sha256_hex(&example_config()))));
}

#[test]
fn empty_layer_list_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[coatings.plane]\nlayers = []\n");
    let o = run_with(&cfg, &dir.path().join("out"), &["tmm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("coatings.plane.layers"), "{}", stderr(&o));
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[cavity]\nd_eff_um = 4.3\nradius = 100\n");
    let o = run_with(&cfg, &dir.path().join("out"), &["cavity"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("radius"), "{err}");
}

#[test]
fn explicit_layers_match_quarter_wave_design() {
    let dir = tempfile::tempdir().unwrap();
    let (h, l) = (780.0 / (4.0 * 2.10), 780.0 / (4.0 * 1.46));
    let mut layers = String::new();
    for _ in 0..17 {
        layers.push_str(&format!("{{ index = 2.10, thickness_nm = {h} }}, {{ index = 1.46, thickness_nm = {l} }}, "));
    }
    let text = format!(
        "[coatings.fiber]\nlayers = [{layers}]\n[coatings.plane.quarter_wave]\ncenter_wavelength_nm = 780\nn_high = 2.10\nn_low = 1.46\npairs = 17\n"
    );
    let cfg = write_config(dir.path(), &text);
    let o = run_with(&cfg, dir.path(), &["tmm"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, a) = read_csv(&dir.path().join("transmission_fiber.csv"));
    let (_, b) = read_csv(&dir.path().join("transmission_plane.csv"));
    for (x, y) in a.iter().zip(&b) {
        assert!((x[1] - y[1]).abs() <= 1e-9 * y[1].max(1e-12), "{x:?} vs {y:?}");
    }
}

#[test]
fn volume_sweep_reports_inverse_volume_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(&example_config(), dir.path(), &["purcell-sweep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("sweep_summary.txt")).unwrap();
    for key in ["slope_log_C_broadband_vs_log_V", "slope_log_C_rate_model_vs_log_V"] {
        let s: f64 = key_value(&summary, key).parse().unwrap();
        assert!((s + 1.0).abs() <= 0.05, "{key} = {s}");
    }
    let c0: f64 = key_value(&summary, "max_C0").parse().unwrap();
    assert!((200.0..=400.0).contains(&c0), "max C0 = {c0}");

    let (header, rows) = read_csv(&dir.path().join("volume_sweep.csv"));
    assert_eq!(header, "d_eff_um,V_um3,C_broadband,C_rate_model");
    assert_eq!(rows.len(), 35);
    let (qheader, _) = read_csv(&dir.path().join("quality_sweep.csv"));
    assert_eq!(qheader, "lambda0_nm,Q,C0");

    let plot = fs::read_to_string(dir.path().join("sweep_plot_data.txt")).unwrap();
    assert!(plot.starts_with("# config_sha256 = "));
    assert_eq!(plot.lines().filter(|l| l.starts_with("C_rate_model ")).count(), 35);
}

#[test]
fn single_point_sweep_equals_direct_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[budget]\nt1_ppm = 810\nl1_ppm = 71\nt2_ppm = 1900\nl2_ppm = 23\n\
                [coupling]\neta_e = 0.55\neta_theta = 0.8\n\
                [purcell_sweep]\nradius_um = 100\nlambda0_nm = 710\n\
                [purcell_sweep.volume]\nd_eff_um = [8.5]\n";
    let cfg = write_config(dir.path(), text);
    let o = run_with(&cfg, dir.path(), &["purcell-sweep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read_csv(&dir.path().join("volume_sweep.csv"));
    assert_eq!(rows.len(), 1);

    let geometry = CavityGeometry::new(8.5, 100.0, 710.0).unwrap();
    let budget = MirrorBudget::from_ppm(810.0, 71.0, 1900.0, 23.0).unwrap();
    let mut ctx = CouplingContext::new(geometry, budget, reference_emitter_model());
    ctx.eta_e = 0.55;
    ctx.orientation = Orientation::Ensemble { eta_theta: 0.8 };
    let direct = evaluate(&ctx).unwrap();
    let row = &rows[0];
    assert_eq!(row[0], 8.5);
    assert!((row[1] / direct.volume_um3 - 1.0).abs() < 1e-12);
    assert!((row[2] / direct.c - 1.0).abs() < 1e-12);
    assert!((row[3] / direct.c_rate_model - 1.0).abs() < 1e-12);
}

#[test]
fn unstable_sweep_entries_are_reported_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[budget]\nper_mirror_ppm = 500\n[coupling]\neta_e = 0.5\n\
                [purcell_sweep]\nradius_um = 20\nlambda0_nm = 710\n\
                [purcell_sweep.volume]\nd_eff_um = [5, 10, 25, 30]\n";
    let cfg = write_config(dir.path(), text);
    let o = run_with(&cfg, dir.path(), &["purcell-sweep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read_csv(&dir.path().join("volume_sweep.csv"));
    assert_eq!(rows.len(), 2);
    let summary = fs::read_to_string(dir.path().join("sweep_summary.txt")).unwrap();
    assert_eq!(key_value(&summary, "volume_skipped"), "2");
    assert!(summary.contains("skipped volume[2] d_eff_um = 25"));
}

#[test]
fn synthetic_analysis_recovers_model_purcell_factor() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(&example_config(), dir.path(), &["--seed", "5", "analyze", "--synthesize"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("report_synthetic.txt")).unwrap();
    let err_c: f64 = key_value(&report, "relative_error_C").parse().unwrap();
    let err_c0: f64 = key_value(&report, "relative_error_C0").parse().unwrap();
    assert!(err_c.abs() <= 0.10, "C error {err_c}");
    assert!(err_c0.abs() <= 0.10, "C0 error {err_c0}");
    assert!(report.contains("# seed = 5"));
    let (header, rows) = read_csv_labelled(&dir.path().join("summary.csv"));
    assert_eq!(header, "label,lambda0_nm,fwhm_nm,Pc,Pfs,C,C0");
    assert_eq!(rows.len(), 1);
}

fn read_csv_labelled(path: &Path) -> (String, Vec<String>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().map(str::to_string);
    let header = lines.next().unwrap();
    (header, lines.collect())
}

/// Synthetic inputs written by `analyze --synthesize`, plus a config that
/// analyzes them from files.
fn file_analysis_setup(dir: &Path) -> PathBuf {
    let o = run_with(&example_config(), &dir.join("gen"), &["analyze", "--synthesize"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = "[budget]\nt1_ppm = 810\nl1_ppm = 71\nt2_ppm = 1900\nl2_ppm = 23\n\
                [analyze]\neta_omega = 0.05\nthrough_mirror = \"gen/synthetic/through_mirror.csv\"\n\
                reference = \"gen/synthetic/reference.csv\"\nt2 = \"gen/synthetic/t2.csv\"\n\
                free_space_band_nm = [450, 1400]\nlinewidth_nm = 0.016692887\ninstrument_fwhm_nm = 0.1\n";
    write_config(dir, text)
}

#[test]
fn batch_with_malformed_file_is_a_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = file_analysis_setup(dir.path());
    let cavity = dir.path().join("gen/synthetic/cavity.csv");
    let a = dir.path().join("run_a.csv");
    let b = dir.path().join("run_b.csv");
    let bad = dir.path().join("run_bad.csv");
    fs::copy(&cavity, &a).unwrap();
    fs::copy(&cavity, &b).unwrap();
    fs::write(&bad, "wavelength_nm,counts_per_s\n700,1\n701,oops\n").unwrap();
    let inputs: Vec<String> = [&a, &bad, &b].iter().map(|p| sha256_hex(p)).collect();

    let out = dir.path().join("out");
    let o = run_with(&cfg, &out, &["analyze", a.to_str().unwrap(), bad.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(out.join("report_run_a.txt").is_file());
    assert!(out.join("report_run_b.txt").is_file());
    assert!(!out.join("report_run_bad.txt").exists());
    let errors = fs::read_to_string(out.join("errors.txt")).unwrap();
    assert_eq!(errors.lines().filter(|l| l.starts_with("error = ")).count(), 1);
    assert!(errors.contains("run_bad.csv"));
    let (_, rows) = read_csv_labelled(&out.join("summary.csv"));
    assert_eq!(rows.len(), 2);

    // read-only with respect to its inputs
    let after: Vec<String> = [&a, &bad, &b].iter().map(|p| sha256_hex(p)).collect();
    assert_eq!(inputs, after);

    let report = fs::read_to_string(out.join("report_run_a.txt")).unwrap();
    let c: f64 = key_value(&report, "C").parse().unwrap();
    let truth = fs::read_to_string(dir.path().join("gen/report_synthetic.txt")).unwrap();
    let c_true: f64 = key_value(&truth, "truth_C").parse().unwrap();
    assert!((c / c_true - 1.0).abs() <= 0.10, "{c} vs {c_true}");
}

#[test]
fn missing_collection_efficiency_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[analyze]\nreference = \"s0.csv\"\n");
    let o = run_with(&cfg, dir.path(), &["analyze", "x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("analyze.eta_omega"), "{}", stderr(&o));
}

#[test]
fn missing_referenced_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[analyze]\neta_omega = 0.05\neta_c = 0.68\nthrough_mirror = \"nope.csv\"\nreference = \"s0.csv\"\n",
    );
    let o = run_with(&cfg, dir.path(), &["analyze", "x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("analyze.through_mirror"), "{}", stderr(&o));
}

#[test]
fn outlook_report_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_with(&example_config(), a.path(), &["outlook"]);
    let second = run_with(&example_config(), b.path(), &["outlook"]);
    assert!(first.status.success(), "{}", stderr(&first));
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(
        fs::read(a.path().join("outlook.txt")).unwrap(),
        fs::read(b.path().join("outlook.txt")).unwrap()
    );
    assert_eq!(
        fs::read(a.path().join("manifest.txt")).unwrap(),
        fs::read(b.path().join("manifest.txt")).unwrap()
    );

    let text = stdout(&first);
    assert!(text.contains("strong coupling: YES for γ*/2π < 500 MHz"), "{text}");
    let report = fs::read_to_string(a.path().join("outlook.txt")).unwrap();
    let f: f64 = key_value(&report, "finesse").parse().unwrap();
    let kappa: f64 = key_value(&report, "kappa_over_2pi_mhz").parse().unwrap();
    let two_g: f64 = key_value(&report, "two_g00_over_2pi_mhz").parse().unwrap();
    let c: f64 = key_value(&report, "rate_model_c").parse().unwrap();
    assert!((150_000.0..165_000.0).contains(&f), "F = {f}");
    assert!((450.0..510.0).contains(&kappa), "κ/2π = {kappa}");
    assert!((1000.0..1200.0).contains(&two_g), "2g/2π = {two_g}");
    assert!(c > 130.0);
}

#[test]
fn lossy_outlook_design_is_not_strongly_coupled() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[outlook]\nd_eff_um = 2\nradius_um = 10\nlambda0_nm = 637\nzpl_gamma_star_over_2pi_mhz = 500\n\
                [outlook.budget]\nper_mirror_ppm = 5000\n";
    let cfg = write_config(dir.path(), text);
    let o = run_with(&cfg, dir.path(), &["outlook"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("strong coupling: NO"), "{}", stdout(&o));
}

#[test]
fn fitted_emitter_model_feeds_back_into_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(&example_config(), dir.path(), &["--seed", "3", "fit-spectrum", "--synthesize"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("fit_spectrum_report.txt")).unwrap();
    let rms: f64 = key_value(&report, "rms_relative").parse().unwrap();
    assert!(rms < 0.05, "rms {rms}");

    let text = "[cavity]\nd_eff_um = 6.75\nradius_um = 100\nlambda0_nm = 710\n\
                [budget]\nt1_ppm = 810\nl1_ppm = 71\nt2_ppm = 1900\nl2_ppm = 23\n\
                [emitter]\nfile = \"fitted_model.toml\"\n[coupling]\neta_e = 0.55\n";
    let cfg = write_config(dir.path(), text);
    let o = run_with(&cfg, &dir.path().join("cav"), &["cavity"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cav = fs::read_to_string(dir.path().join("cav/cavity_report.txt")).unwrap();
    let c: f64 = key_value(&cav, "C_rate_model").parse().unwrap();
    assert!(c > 0.0);
}

#[test]
fn saturation_fit_round_trip_and_unidentifiable_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(&example_config(), dir.path(), &["fit-saturation", "--synthesize"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit = fs::read_to_string(dir.path().join("saturation_fit.txt")).unwrap();
    let i_sat: f64 = key_value(&fit, "i_sat_GW_m2").parse().unwrap();
    assert!((i_sat / 3.5 - 1.0).abs() < 0.15, "I_sat = {i_sat}");
    let (header, rows) = read_csv(&dir.path().join("saturation_curve.csv"));
    assert_eq!(header, "intensity_GW_m2,counts_per_s");
    assert_eq!(rows.len(), 40);

    // refit from the written data file
    let data = dir.path().join("saturation_data.csv");
    let o = run_with(&example_config(), &dir.path().join("refit"), &["fit-saturation", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let refit = fs::read_to_string(dir.path().join("refit/saturation_fit.txt")).unwrap();
    assert_eq!(key_value(&refit, "i_sat_GW_m2"), key_value(&fit, "i_sat_GW_m2"));

    // far below saturation the curve is a straight line: runtime failure
    let linear = dir.path().join("linear.csv");
    let mut text = String::from("intensity_GW_m2,counts_per_s\n");
    for k in 1..=20 {
        text.push_str(&format!("{},{}\n", 0.01 * k as f64, 100.0 * k as f64));
    }
    fs::write(&linear, text).unwrap();
    let o = run_with(&example_config(), &dir.path().join("lin"), &["fit-saturation", linear.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn synthetic_outputs_depend_only_on_config_and_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let args = ["--seed", "11", "fit-saturation", "--synthesize"];
    run_with(&example_config(), a.path(), &args);
    run_with(&example_config(), b.path(), &args);
    run_with(&example_config(), c.path(), &["--seed", "12", "fit-saturation", "--synthesize"]);
    let m = |d: &Path| fs::read_to_string(d.join("manifest.txt")).unwrap();
    assert_eq!(m(a.path()), m(b.path()));
    assert_ne!(m(a.path()), m(c.path()));
    assert!(m(a.path()).starts_with(&format!("# config_sha256 = {}", sha256_hex(&example_config()))));
}

#[test]
fn cavity_report_from_mode_pair() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(&example_config(), dir.path(), &["cavity"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("cavity_report.txt")).unwrap();
    let d: f64 = key_value(&report, "d_eff_um").parse().unwrap();
    assert!((d - 6.75).abs() < 0.005);
    let eta_c: f64 = key_value(&report, "eta_c").parse().unwrap();
    assert!((eta_c - 0.678).abs() < 0.002);
}
