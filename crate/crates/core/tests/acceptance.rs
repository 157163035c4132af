//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::panic;
use std::process::ExitCode;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nvcavity::analysis::{analyze, integrate_resonance, peak_spectral_density};
use nvcavity::cavity::{
    cavity_decay_rate, cavity_linewidth, effective_length_from_modes, finesse, mode_volume, mode_waist,
    outcoupling_efficiency, quality_factor, CavityGeometry, CoatingBudget, MirrorBudget,
};
use nvcavity::constants::{angular_to_mhz, mhz_to_angular, thz_to_angular, wavelength_to_angular, N_SIO2, N_TA2O5};
use nvcavity::emitter::{franck_condon_weights, lorentzian, reference_emitter_model, Transition};
use nvcavity::purcell::{
    cavity_emission_rate, collective_figure_of_merit, coupling_rate, effective_purcell, ideal_purcell,
    orientation_average, orientation_factor, strong_coupling_report, sweep_mode_volume, sweep_quality_values,
    CouplingContext, Orientation, OutlookDesign,
};
use nvcavity::spectrum::{linspace, refined_grid, Spectrum};
use nvcavity::stack::{
    build_quarter_wave_stack, calibrated_fiber_coating, calibrated_plane_coating, stack_response,
    transmission_spectrum, Layer, LayerStack, QuarterWaveDesign,
};
use nvcavity::synth::{rng_from_seed, synthesize, SyntheticSetup};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn measured_budget() -> MirrorBudget {
    MirrorBudget::from_ppm(810.0, 71.0, 1900.0, 23.0).unwrap()
}

/// T + L = 209 ppm at the coating centre, split evenly between the mirrors.
fn centre_budget() -> MirrorBudget {
    MirrorBudget::symmetric(104.5e-6).unwrap()
}

fn rate_model_context(volume_um3: f64) -> CouplingContext {
    let geometry = CavityGeometry::length_for_volume(100.0, 710.0, volume_um3).unwrap();
    let mut ctx = CouplingContext::new(geometry, measured_budget(), reference_emitter_model());
    ctx.eta_e = 0.55;
    ctx.orientation = Orientation::Ensemble { eta_theta: 0.8 };
    ctx
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
}

fn criterion_1() -> Outcome {
    let c = effective_purcell(710.0, 10.0, 19.0, 0.75, 0.55 * 0.8).map_err(|e| e.to_string())?;
    check(within(c, 4.2e-3, 5.2e-3), format!("C = {c:.3e}, expected [4.2, 5.2]e-3"))
}

fn criterion_2() -> Outcome {
    let ctx = rate_model_context(19.0);
    let r = cavity_emission_rate(&ctx, ctx.omega_c()).map_err(|e| e.to_string())?;
    let c = r / ctx.emitter.gamma0;
    check(
        within(c, 4e-3, 8e-3),
        format!("C = R/γ0 = {c:.3e} at V = {:.2} µm³, expected [4, 8]e-3", ctx.volume()),
    )
}

fn criterion_3() -> Outcome {
    let c0 = ideal_purcell(710.0, 3.5e5, 16.0, 0.44).map_err(|e| e.to_string())?;
    check(within(c0, 200.0, 400.0), format!("C0 = {c0:.1}, expected [200, 400]"))
}

fn criterion_4() -> Outcome {
    let d = effective_length_from_modes(715.0, 755.0).map_err(|e| e.to_string())?;
    let closed = 715.0 * 755.0 / (2.0 * 40.0) * 1e-3;
    let g = CavityGeometry::new(4.3, 100.0, 780.0).map_err(|e| e.to_string())?;
    let w0 = mode_waist(&g);
    let v = mode_volume(&g);
    let ok = (d - closed).abs() <= 1e-12 * closed
        && (d - 6.75).abs() < 0.005
        && within(w0, 2.1, 2.3)
        && within(v, 15.0, 18.0);
    check(ok, format!("d_eff = {d:.4} µm (closed form {closed:.4}), w0 = {w0:.3} µm, V = {v:.2} µm³"))
}

fn criterion_5() -> Outcome {
    let eta_c = outcoupling_efficiency(&measured_budget()).map_err(|e| e.to_string())?;
    let f = finesse(&centre_budget()).map_err(|e| e.to_string())?;
    let dl = cavity_linewidth(780.0, 4.3, &centre_budget()).map_err(|e| e.to_string())?;
    let q = quality_factor(780.0, dl).map_err(|e| e.to_string())?;
    let ok = (eta_c - 0.678).abs() <= 0.002 && (f / 30000.0 - 1.0).abs() <= 0.01 && within(q, 2.8e5, 3.8e5);
    check(ok, format!("η_c = {eta_c:.4}, F = {f:.0}, Q = {q:.3e}"))
}

fn criterion_6() -> Outcome {
    let design = OutlookDesign {
        geometry: CavityGeometry::new(2.0, 10.0, 637.0).map_err(|e| e.to_string())?,
        budget: MirrorBudget::symmetric(20e-6).map_err(|e| e.to_string())?,
        emitter: reference_emitter_model(),
        zpl_gamma_star: Some(mhz_to_angular(500.0)),
        eta_e: 1.0,
        cos_theta: 1.0,
    };
    let rep = strong_coupling_report(&design).map_err(|e| e.to_string())?;
    let kappa = angular_to_mhz(rep.kappa);
    let two_g = angular_to_mhz(2.0 * rep.g00) * 1e-3;
    let ok = within(rep.finesse, 150_000.0, 165_000.0)
        && within(kappa, 450.0, 510.0)
        && within(two_g, 1.0, 1.2)
        && rep.rate_model_c > 130.0
        && rep.strong;
    check(
        ok,
        format!(
            "F = {:.0}, κ/2π = {kappa:.1} MHz, 2g00/2π = {two_g:.3} GHz, C = {:.1}, strong = {}",
            rep.finesse, rep.rate_model_c, rep.strong
        ),
    )
}

fn criterion_7() -> Outcome {
    let ctx = rate_model_context(19.0);
    let lengths = linspace(5.0, 39.0, 35);
    let table = sweep_mode_volume(&ctx, &lengths).map_err(|e| e.to_string())?;
    let v: Vec<f64> = table.rows.iter().map(|r| r.volume_um3).collect();
    let c2: Vec<f64> = table.rows.iter().map(|r| r.c_broadband).collect();
    let cr: Vec<f64> = table.rows.iter().map(|r| r.c_rate_model).collect();
    let slope_broadband = log_slope(&v, &c2);
    let slope_rate = log_slope(&v, &cr);

    let q_values = linspace(1e3, 3.5e5, 25);
    let qt = sweep_quality_values(&ctx, &q_values).map_err(|e| e.to_string())?;
    let n = qt.rows.len() as f64;
    let (sx, sy) = qt.rows.iter().fold((0.0, 0.0), |(a, b), r| (a + r.q, b + r.c0));
    let (mx, my) = (sx / n, sy / n);
    let slope = qt.rows.iter().map(|r| (r.q - mx) * (r.c0 - my)).sum::<f64>()
        / qt.rows.iter().map(|r| (r.q - mx).powi(2)).sum::<f64>();
    let intercept = my - slope * mx;
    let c0_max = qt.rows.iter().map(|r| r.c0).fold(0.0, f64::max);
    let rel_intercept = intercept.abs() / c0_max;

    let low = CouplingContext {
        budget: MirrorBudget::from_ppm(100.0, 10.0, 100.0, 10.0).unwrap().into(),
        ..ctx.clone()
    };
    let high = CouplingContext {
        budget: MirrorBudget::from_ppm(1000.0, 100.0, 1000.0, 100.0).unwrap().into(),
        ..ctx.clone()
    };
    let r_low = cavity_emission_rate(&low, low.omega_c()).map_err(|e| e.to_string())?;
    let r_high = cavity_emission_rate(&high, high.omega_c()).map_err(|e| e.to_string())?;
    let kappa_ratio = high.kappa_at(710.0).unwrap() / low.kappa_at(710.0).unwrap();
    let kappa_change = (r_high / r_low - 1.0).abs();

    let ok = table.skipped.is_empty()
        && (slope_broadband + 1.0).abs() <= 0.05
        && (slope_rate + 1.0).abs() <= 0.05
        && rel_intercept < 0.01
        && (kappa_ratio - 10.0).abs() < 0.1
        && kappa_change < 0.01;
    check(
        ok,
        format!(
            "slope(C vs V) = {slope_broadband:.4} (broadband) / {slope_rate:.4} (rate model); C0(Q) intercept {:.2e} of max; ΔC = {:.2e} for κ×{kappa_ratio:.2}",
            rel_intercept, kappa_change
        ),
    )
}

fn criterion_8() -> Outcome {
    let eta = orientation_factor(false);
    let norm = orientation_average(|t| 1.5 * t.cos().powi(2)).normalization;
    let z = franck_condon_weights(3.2, 40).map_err(|e| e.to_string())?;
    let partial: Vec<f64> = z
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let monotone = partial.windows(2).all(|w| w[1] >= w[0]) && partial.iter().all(|&p| p <= 1.0 + 1e-15);
    let total = *partial.last().unwrap();
    let ok = (eta - 0.8).abs() <= 1e-6
        && (norm - 1.0).abs() <= 1e-9
        && monotone
        && (total - 1.0).abs() <= 1e-9
        && (z[0] - 0.0408).abs() <= 1e-4;
    check(
        ok,
        format!("η_θ = {eta:.9}, ∫p cosθ = {norm:.10}, Σζ(k ≤ 40) = {total:.12}, ζ0 = {:.5}", z[0]),
    )
}

fn random_stack(rng: &mut impl Rng) -> LayerStack {
    let n_layers = rng.random_range(1..=30);
    let layers = (0..n_layers)
        .map(|_| Layer::new(rng.random_range(1.3..2.6), rng.random_range(20.0..400.0)).unwrap())
        .collect();
    LayerStack::new(rng.random_range(1.0..1.5), layers, rng.random_range(1.3..1.9)).unwrap()
}

/// Independent oracle: transfer matrices in the (forward, backward) amplitude
/// basis with explicit interface matrices.
fn interface_transfer(stack: &LayerStack, lambda: f64) -> (f64, f64) {
    let mut indices = vec![stack.ambient_index()];
    indices.extend(stack.layers().iter().map(|l| l.index_at(lambda)));
    indices.push(stack.substrate_index());
    let mut m = DMatrix::<Complex64>::identity(2, 2);
    for j in 0..indices.len() - 1 {
        let (a, b) = (indices[j], indices[j + 1]);
        let r = (a - b) / (a + b);
        let t = 2.0 * a / (a + b);
        let d = DMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(1.0 / t, 0.0), Complex64::new(r / t, 0.0), Complex64::new(r / t, 0.0), Complex64::new(1.0 / t, 0.0)],
        );
        m = m * d;
        if j + 1 < indices.len() - 1 {
            let layer = &stack.layers()[j];
            let delta = 2.0 * std::f64::consts::PI * b * layer.thickness_nm / lambda;
            let p = DMatrix::from_row_slice(
                2,
                2,
                &[Complex64::from_polar(1.0, -delta), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, delta)],
            );
            m = m * p;
        }
    }
    let t = Complex64::new(1.0, 0.0) / m[(0, 0)];
    let r = m[(1, 0)] / m[(0, 0)];
    (r.norm_sqr(), stack.substrate_index() / stack.ambient_index() * t.norm_sqr())
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_sum, mut worst_recip, mut worst_oracle) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..1000 {
        let stack = random_stack(&mut rng);
        let lambda = rng.random_range(400.0..1200.0);
        let fwd = stack_response(&stack, lambda).map_err(|e| e.to_string())?;
        let rev = stack_response(&stack.reversed(), lambda).map_err(|e| e.to_string())?;
        let (r_or, t_or) = interface_transfer(&stack, lambda);
        worst_sum = worst_sum.max((fwd.reflectance + fwd.transmittance - 1.0).abs());
        worst_recip = worst_recip.max((fwd.transmittance - rev.transmittance).abs());
        worst_oracle = worst_oracle.max((fwd.reflectance - r_or).abs()).max((fwd.transmittance - t_or).abs());
    }

    let (nh, nl, ns) = (N_TA2O5, N_SIO2, N_SIO2);
    let mut worst_qw = 0.0_f64;
    for pairs in 1..=20 {
        let base = build_quarter_wave_stack(&QuarterWaveDesign {
            center_wavelength_nm: 780.0,
            n_high: nh,
            n_low: nl,
            pairs,
            substrate_index: ns,
            ambient_index: 1.0,
            terminate_with_low_quarter: false,
        })
        .map_err(|e| e.to_string())?;
        // the closed form describes (HL)^N H: terminate with one more H layer
        let mut layers = base.layers().to_vec();
        layers.push(Layer::quarter_wave(nh, 780.0).unwrap());
        let stack = LayerStack::new(1.0, layers, ns).unwrap();
        let r = stack_response(&stack, 780.0).unwrap().reflectance;
        let x = (nh / nl).powi(2 * pairs as i32) * nh * nh / ns;
        let closed = ((1.0 - x) / (1.0 + x)).powi(2);
        worst_qw = worst_qw.max((r - closed).abs());
    }
    let ok = worst_sum <= 1e-10 && worst_recip <= 1e-10 && worst_oracle <= 1e-10 && worst_qw <= 1e-8;
    check(
        ok,
        format!(
            "max |R+T−1| = {worst_sum:.1e}, max reciprocity gap = {worst_recip:.1e}, max oracle gap = {worst_oracle:.1e}, max quarter-wave gap = {worst_qw:.1e}"
        ),
    )
}

fn criterion_10() -> Outcome {
    let fwhm = 0.01;
    let grid = refined_grid(700.0, 720.0, 0.01, &[(710.0, 10.0 * fwhm, fwhm / 200.0)]);
    let line = Spectrum::from_fn(&grid, |w| lorentzian(w - 710.0, fwhm)).map_err(|e| e.to_string())?;
    let peak = integrate_resonance(&line, 710.0, fwhm).map_err(|e| e.to_string())?;
    let expected = 2.0 / std::f64::consts::PI * 3f64.atan();
    let scaled = line.scaled(4.2e4);
    let p = integrate_resonance(&scaled, 710.0, fwhm).map_err(|e| e.to_string())?;
    let s_max = peak_spectral_density(p.corrected_power(), fwhm).map_err(|e| e.to_string())?;
    let round_trip = (s_max / scaled.max_value() - 1.0).abs();
    let ok = (peak.integrated_power - expected).abs() <= 1e-3 && (peak.window_fraction - expected).abs() < 1e-12 && round_trip <= 1e-3;
    check(
        ok,
        format!(
            "window integral = {:.5} (expected {expected:.5}), peak round trip error = {round_trip:.1e}",
            peak.integrated_power
        ),
    )
}

fn closed_loop_setup(noise: f64) -> SyntheticSetup {
    let geometry = CavityGeometry::length_for_volume(100.0, 710.0, 19.0).unwrap();
    let budget = CoatingBudget {
        fiber: calibrated_fiber_coating(),
        plane: calibrated_plane_coating(),
        loss_fiber: 71e-6,
        loss_plane: 23e-6,
    };
    let mut ctx = CouplingContext::new(geometry, budget, reference_emitter_model());
    ctx.eta_e = 0.55;
    ctx.orientation = Orientation::Ensemble { eta_theta: 0.8 };
    let eta_c = outcoupling_efficiency(&ctx.budget_at_resonance().unwrap()).unwrap();
    SyntheticSetup {
        context: ctx,
        eta_omega: 0.05,
        eta_c,
        free_space_counts: 2.0e5,
        plane_transmission: transmission_spectrum(&calibrated_plane_coating(), 440.0, 1410.0, 9701).unwrap(),
        grid_nm: None,
        instrument_fwhm_nm: 0.0,
        noise,
    }
}

fn criterion_11() -> Outcome {
    let clean = synthesize(&closed_loop_setup(0.0), &mut rng_from_seed(0)).map_err(|e| e.to_string())?;
    let rep = analyze(&clean.set, &clean.settings).map_err(|e| e.to_string())?;
    let err_c = rep.c / clean.truth.c - 1.0;
    let err_c0 = rep.c0 / clean.truth.c0 - 1.0;

    let noisy_setup = closed_loop_setup(0.02);
    let (mut worst_c, mut worst_c0) = (0.0_f64, 0.0_f64);
    for seed in 0..100 {
        let m = synthesize(&noisy_setup, &mut rng_from_seed(seed)).map_err(|e| e.to_string())?;
        let r = analyze(&m.set, &m.settings).map_err(|e| e.to_string())?;
        worst_c = worst_c.max((r.c / m.truth.c - 1.0).abs());
        worst_c0 = worst_c0.max((r.c0 / m.truth.c0 - 1.0).abs());
    }
    let ok = err_c.abs() <= 0.10 && err_c0.abs() <= 0.10 && worst_c <= 0.25 && worst_c0 <= 0.25;
    check(
        ok,
        format!(
            "noiseless: C {:.3e} vs {:.3e} ({:+.2}%), C0 {:.1} vs {:.1} ({:+.2}%); 2% noise, 100 seeds: worst |ΔC| {:.1}%, |ΔC0| {:.1}%",
            rep.c,
            clean.truth.c,
            100.0 * err_c,
            rep.c0,
            clean.truth.c0,
            100.0 * err_c0,
            100.0 * worst_c,
            100.0 * worst_c0
        ),
    )
}

fn criterion_12() -> Outcome {
    let sideband = Transition::new(wavelength_to_angular(710.0), 0.44, thz_to_angular(25.0)).map_err(|e| e.to_string())?;
    let g0 = coupling_rate(&sideband, 19.0, 0.55, mhz_to_angular(8.0), 1.0).map_err(|e| e.to_string())?;
    let kappa = cavity_decay_rate(5.0, &centre_budget()).map_err(|e| e.to_string())?;
    let alpha = collective_figure_of_merit(50, g0, kappa, sideband.gamma_star).map_err(|e| e.to_string())?;
    check(
        within(alpha, 5e-4, 5e-3),
        format!(
            "g0/2π = {:.3} GHz, κ/2π = {:.0} MHz, α = {alpha:.2e}, expected [5e-4, 5e-3]",
            angular_to_mhz(g0) * 1e-3,
            angular_to_mhz(kappa)
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("effective Purcell prediction", criterion_1),
        ("rate-model agreement", criterion_2),
        ("ideal Purcell maximum", criterion_3),
        ("geometry", criterion_4),
        ("mirror budget", criterion_5),
        ("strong-coupling outlook", criterion_6),
        ("scaling laws", criterion_7),
        ("exact quadratures", criterion_8),
        ("transfer-matrix oracles", criterion_9),
        ("Lorentzian identities", criterion_10),
        ("closed-loop pipeline", criterion_11),
        ("collective figure of merit", criterion_12),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
