use std::fs;
use std::path::PathBuf;

use nvcavity::analysis::fit_saturation;
use nvcavity::constants::{angular_to_thz, mhz_to_angular};
use nvcavity::emitter::{fit_spectrum_model, franck_condon_weights, free_space_spectrum, EmitterModelConfig, SpectrumFitOptions};
use nvcavity::spectrum::linspace;
use nvcavity::synth::{add_multiplicative_noise, rng_from_seed, synthesize_saturation};
use nvcavity::Spectrum;

use super::Run;
use crate::config::{FitSaturationConfig, FitSpectrumConfig, Grid};
use crate::error::{CliError, CliResult, InSection};
use crate::output::{key_values, num};

pub const SATURATION_HEADER: [&str; 2] = ["intensity_GW_m2", "counts_per_s"];

pub fn spectrum(run: &Run, input: Option<PathBuf>, synthetic: bool) -> CliResult<()> {
    let default = FitSpectrumConfig::default();
    let cfg = run.loaded.config.fit_spectrum.as_ref().unwrap_or(&default);
    let mut out = run.output("fit-spectrum")?;

    let measured = if synthetic {
        let grid = match &cfg.synth_wavelength_nm {
            Some(g) => g.points("fit_spectrum.synth_wavelength_nm")?,
            None => linspace(550.0, 1000.0, 901),
        };
        let clean = free_space_spectrum(&run.loaded.emitter()?, &grid)?;
        let noisy = add_multiplicative_noise(&clean, cfg.synth_noise, &mut rng_from_seed(run.seed))
            .in_section("fit_spectrum")?
            .with_quantity("value");
        out.set_seed(run.seed);
        out.write_spectrum("synthetic_spectrum.csv", &noisy)?;
        noisy
    } else {
        let path = match input {
            Some(p) => p,
            None => {
                let p = cfg
                    .input
                    .as_ref()
                    .ok_or_else(|| CliError::invalid("fit_spectrum.input", "required (or pass a file)"))?;
                run.loaded.input_file("fit_spectrum.input", p)?
            }
        };
        Spectrum::from_csv_path(&path).map_err(|e| CliError::invalid("fit_spectrum.input", format!("{}: {e}", path.display())))?
    };

    let mut options = SpectrumFitOptions {
        normalize_area: cfg.normalize_area,
        ..SpectrumFitOptions::default()
    };
    if let Some(d) = cfg.huang_rhys_prior {
        options.huang_rhys_prior = d;
    }
    if let Some(w) = cfg.initial_width_thz {
        options.initial_width_thz = w;
    }
    if let Some(g) = cfg.gamma0_over_2pi_mhz {
        options.gamma0 = mhz_to_angular(g);
    }
    if let Some(n) = cfg.max_iterations {
        options.max_iterations = n;
    }
    let fit = fit_spectrum_model(&measured, cfg.transitions, &options).in_section("fit_spectrum")?;

    let model_cfg = EmitterModelConfig::from(&fit.model);
    let toml_text = toml::to_string(&model_cfg).map_err(|e| CliError::runtime(e.to_string()))?;
    out.write_report("fitted_model.toml", &toml_text)?;

    let fitted = measured
        .map(|w, _| fit.area_scale * fit.model.wavelength_density(w))
        .with_quantity("value")
        .with_label("fit");
    out.write_spectrum("fitted_spectrum.csv", &fitted)?;

    let fc = franck_condon_weights(options.huang_rhys_prior, cfg.transitions - 1)?;
    let mut body = key_values(&[
        ("transitions", cfg.transitions.to_string()),
        ("samples", measured.len().to_string()),
        ("rms_relative", format!("{:.6e}", fit.rms_relative)),
        ("area_scale", format!("{:.6e}", fit.area_scale)),
        ("iterations", fit.iterations.to_string()),
        ("weight_sum", format!("{:.6}", fit.model.weight_sum())),
    ]);
    body.push_str("# k frequency_thz wavelength_nm zeta zeta_franck_condon gamma_star_thz\n");
    for (k, t) in fit.model.transitions().iter().enumerate() {
        body.push_str(&format!(
            "transition {k} {:.4} {:.3} {:.6} {:.6} {:.4}\n",
            angular_to_thz(t.omega),
            t.wavelength_nm(),
            t.weight,
            fc[k],
            angular_to_thz(t.gamma_star)
        ));
    }
    print!("{body}");
    out.write_report("fit_spectrum_report.txt", &body)?;
    out.finish()
}

pub fn saturation(run: &Run, input: Option<PathBuf>, synthetic: bool) -> CliResult<()> {
    let default = FitSaturationConfig::default();
    let cfg = run.loaded.config.fit_saturation.as_ref().unwrap_or(&default);
    let mut out = run.output("fit-saturation")?;

    let (intensities, counts) = if synthetic {
        let grid = cfg.synth_intensity_gw_m2.clone().unwrap_or(Grid::Range {
            start: 0.175,
            stop: 35.0,
            count: 40,
            log: true,
        });
        let i = grid.points("fit_saturation.synth_intensity_gw_m2")?;
        let c = synthesize_saturation(
            &i,
            cfg.synth_p_inf_counts_per_s,
            cfg.synth_i_sat_gw_m2,
            cfg.synth_background_counts_per_s_per_gw_m2,
            cfg.synth_noise,
            &mut rng_from_seed(run.seed),
        )
        .in_section("fit_saturation")?;
        out.set_seed(run.seed);
        let rows: Vec<Vec<String>> = i.iter().zip(&c).map(|(a, b)| vec![num(*a), num(*b)]).collect();
        out.write_table("saturation_data.csv", &SATURATION_HEADER, &rows)?;
        (i, c)
    } else {
        let path = match input {
            Some(p) => p,
            None => {
                let p = cfg
                    .input
                    .as_ref()
                    .ok_or_else(|| CliError::invalid("fit_saturation.input", "required (or pass a file)"))?;
                run.loaded.input_file("fit_saturation.input", p)?
            }
        };
        read_saturation_csv(&path)?
    };

    let fit = fit_saturation(&intensities, &counts).in_section("fit_saturation")?;
    let i_max = intensities.iter().copied().fold(0.0, f64::max);
    let body = key_values(&[
        ("points", intensities.len().to_string()),
        ("p_inf_counts_per_s", format!("{:.6e}", fit.p_inf)),
        ("i_sat_GW_m2", format!("{:.6}", fit.i_sat)),
        ("background_counts_per_s_per_GW_m2", format!("{:.6e}", fit.a)),
        ("residual", format!("{:.6e}", fit.residual)),
        ("iterations", fit.iterations.to_string()),
        ("background_fraction_at_max_intensity", format!("{:.6}", fit.background_fraction(i_max))),
    ]);
    print!("{body}");
    out.write_report("saturation_fit.txt", &body)?;
    let rows: Vec<Vec<String>> = intensities.iter().map(|&i| vec![num(i), num(fit.model(i))]).collect();
    out.write_table("saturation_curve.csv", &SATURATION_HEADER, &rows)?;
    out.finish()
}

fn read_saturation_csv(path: &std::path::Path) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let field = "fit_saturation.input";
    let bad = |reason: String| CliError::invalid(field, format!("{}: {reason}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.len() != 2 {
        return Err(bad(format!("expected 2 columns, found {}", headers.len())));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let parse = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("data row {}: {:?}: {e}", line + 1, &record[i])))
        };
        xs.push(parse(0)?);
        ys.push(parse(1)?);
    }
    Ok((xs, ys))
}
