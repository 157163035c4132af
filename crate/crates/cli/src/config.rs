//! TOML run configuration. Every dimensional key carries its unit suffix;
//! relative paths resolve against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use nvcavity::cavity::{effective_length_from_modes, BudgetSource, CavityGeometry, CoatingBudget, MirrorBudget};
use nvcavity::constants::mhz_to_angular;
use nvcavity::emitter::{reference_emitter_model, EmitterModel, EmitterModelConfig, TransitionConfig};
use nvcavity::purcell::{orientation_factor, CouplingContext, Orientation};
use nvcavity::spectrum::linspace;
use nvcavity::stack::{build_quarter_wave_stack, surface_field_factor, Layer, LayerStack, QuarterWaveDesign};

use crate::error::{CliError, CliResult, InSection};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub coatings: CoatingsConfig,
    pub cavity: Option<CavityConfig>,
    pub budget: Option<BudgetConfig>,
    #[serde(default)]
    pub emitter: EmitterConfig,
    #[serde(default)]
    pub coupling: CouplingConfig,
    pub tmm: Option<TmmConfig>,
    pub purcell_sweep: Option<SweepConfig>,
    pub analyze: Option<AnalyzeConfig>,
    pub synthesize: Option<SynthConfig>,
    pub fit_spectrum: Option<FitSpectrumConfig>,
    pub fit_saturation: Option<FitSaturationConfig>,
    pub outlook: Option<OutlookConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoatingsConfig {
    pub fiber: Option<CoatingConfig>,
    pub plane: Option<CoatingConfig>,
}

/// Either an explicit layer list (ambient side first) or a quarter-wave design.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoatingConfig {
    #[serde(default = "one")]
    pub ambient_index: f64,
    #[serde(default = "silica")]
    pub substrate_index: f64,
    pub layers: Option<Vec<LayerConfig>>,
    pub quarter_wave: Option<QuarterWaveConfig>,
    /// Scatter + absorption loss, carried into the mirror budget.
    #[serde(default)]
    pub loss_ppm: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub index: f64,
    pub thickness_nm: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuarterWaveConfig {
    pub center_wavelength_nm: f64,
    pub n_high: f64,
    pub n_low: f64,
    pub pairs: usize,
    #[serde(default)]
    pub low_index_cap: bool,
}

fn one() -> f64 {
    1.0
}

fn silica() -> f64 {
    nvcavity::constants::N_SIO2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    pub d_eff_um: Option<f64>,
    /// Two adjacent fundamental resonances, from which d_eff follows.
    pub mode_pair_nm: Option<[f64; 2]>,
    pub radius_um: f64,
    pub lambda0_nm: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    /// Take T₁, T₂ from the coating stacks at each wavelength.
    #[serde(default)]
    pub from_coatings: bool,
    pub t1_ppm: Option<f64>,
    pub l1_ppm: Option<f64>,
    pub t2_ppm: Option<f64>,
    pub l2_ppm: Option<f64>,
    /// Symmetric shortcut: each mirror has T = per_mirror_ppm, L = 0.
    pub per_mirror_ppm: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterConfig {
    /// TOML file holding a serialized emitter model.
    pub file: Option<PathBuf>,
    pub gamma0_over_2pi_mhz: Option<f64>,
    pub huang_rhys: Option<f64>,
    pub transitions: Option<Vec<TransitionConfig>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    /// Overrides the field factor computed from the plane coating.
    pub eta_e: Option<f64>,
    pub eta_theta: Option<f64>,
    /// Single dipole at a fixed angle instead of an ensemble average.
    pub cos_theta: Option<f64>,
    pub eta_lambda: Option<f64>,
    pub q_emitter: Option<f64>,
    pub n_emitters: Option<usize>,
    #[serde(default)]
    pub emitter_height_nm: f64,
    pub volume_um3: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmmConfig {
    #[serde(default = "tmm_min")]
    pub lambda_min_nm: f64,
    #[serde(default = "tmm_max")]
    pub lambda_max_nm: f64,
    #[serde(default = "tmm_samples")]
    pub samples: usize,
    /// Wavelength quoted in the summary.
    #[serde(default = "tmm_report")]
    pub report_wavelength_nm: f64,
}

impl Default for TmmConfig {
    fn default() -> Self {
        TmmConfig {
            lambda_min_nm: tmm_min(),
            lambda_max_nm: tmm_max(),
            samples: tmm_samples(),
            report_wavelength_nm: tmm_report(),
        }
    }
}

fn tmm_min() -> f64 {
    600.0
}
fn tmm_max() -> f64 {
    850.0
}
fn tmm_samples() -> usize {
    1000
}
fn tmm_report() -> f64 {
    710.0
}

/// A list of values or an inclusive range.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        count: usize,
        #[serde(default)]
        log: bool,
    },
}

impl Grid {
    pub fn points(&self, field: &str) -> CliResult<Vec<f64>> {
        let pts = match self {
            Grid::Values(v) => v.clone(),
            Grid::Range { start, stop, count, log } => {
                if *count == 0 {
                    return Err(CliError::invalid(format!("{field}.count"), "range is empty"));
                }
                if *log {
                    if !(*start > 0.0 && *stop > 0.0) {
                        return Err(CliError::invalid(field, "log range needs positive bounds"));
                    }
                    linspace(start.ln(), stop.ln(), *count).into_iter().map(f64::exp).collect()
                } else {
                    linspace(*start, *stop, *count)
                }
            }
        };
        if pts.is_empty() {
            return Err(CliError::invalid(field, "range is empty"));
        }
        if let Some(bad) = pts.iter().find(|x| !x.is_finite()) {
            return Err(CliError::invalid(field, format!("non-finite value {bad}")));
        }
        Ok(pts)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Fall back to [cavity] when unset.
    pub radius_um: Option<f64>,
    pub lambda0_nm: Option<f64>,
    pub volume: Option<VolumeSweepConfig>,
    pub quality: Option<QualitySweepConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeSweepConfig {
    pub d_eff_um: Grid,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualitySweepConfig {
    pub d_eff_um: f64,
    /// Resonance wavelengths; Q follows from the budget at each.
    pub lambda0_nm: Option<Grid>,
    /// Explicit quality factors at the sweep λ₀.
    pub q: Option<Grid>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub eta_omega: Option<f64>,
    /// Estimate η_Ω from a dipole collected by this NA when eta_omega is unset.
    pub collection_na: Option<f64>,
    #[serde(default = "silica")]
    pub medium_index: f64,
    /// Defaults to T₂/(T₁+T₂+L₁+L₂) from the budget at λ₀.
    pub eta_c: Option<f64>,
    /// Plane-mirror transmission; computed from coatings.plane when unset.
    pub t2: Option<PathBuf>,
    /// Reference shape S₀.
    pub reference: Option<PathBuf>,
    /// Free-space spectrum through the plane mirror, S_m.
    pub through_mirror: Option<PathBuf>,
    /// Cavity spectra S_c, one report each. Command-line files are appended.
    #[serde(default)]
    pub cavity_spectra: Vec<PathBuf>,
    pub search_nm: Option<[f64; 2]>,
    pub linewidth_nm: Option<f64>,
    pub free_space_band_nm: Option<[f64; 2]>,
    pub fit_window_nm: Option<[f64; 2]>,
    pub window_fwhm: Option<f64>,
    /// Spectrometer resolution; the integration window is widened to cover it.
    #[serde(default)]
    pub instrument_fwhm_nm: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "free_space_counts")]
    pub free_space_counts_per_s: f64,
    #[serde(default = "instrument")]
    pub instrument_fwhm_nm: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            noise: 0.0,
            free_space_counts_per_s: free_space_counts(),
            instrument_fwhm_nm: instrument(),
        }
    }
}

fn free_space_counts() -> f64 {
    2.0e5
}
fn instrument() -> f64 {
    nvcavity::synth::DEFAULT_INSTRUMENT_FWHM_NM
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpectrumConfig {
    pub input: Option<PathBuf>,
    #[serde(default = "six")]
    pub transitions: usize,
    pub huang_rhys_prior: Option<f64>,
    pub initial_width_thz: Option<f64>,
    pub gamma0_over_2pi_mhz: Option<f64>,
    #[serde(default)]
    pub normalize_area: bool,
    pub max_iterations: Option<usize>,
    /// Synthetic input: configured emitter sampled on this grid.
    pub synth_wavelength_nm: Option<Grid>,
    #[serde(default = "two_percent")]
    pub synth_noise: f64,
}

impl Default for FitSpectrumConfig {
    fn default() -> Self {
        FitSpectrumConfig {
            input: None,
            transitions: six(),
            huang_rhys_prior: None,
            initial_width_thz: None,
            gamma0_over_2pi_mhz: None,
            normalize_area: false,
            max_iterations: None,
            synth_wavelength_nm: None,
            synth_noise: two_percent(),
        }
    }
}

fn six() -> usize {
    6
}
fn two_percent() -> f64 {
    0.02
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSaturationConfig {
    /// CSV "intensity_GW_m2,counts_per_s".
    pub input: Option<PathBuf>,
    #[serde(default = "p_inf")]
    pub synth_p_inf_counts_per_s: f64,
    #[serde(default = "i_sat")]
    pub synth_i_sat_gw_m2: f64,
    #[serde(default)]
    pub synth_background_counts_per_s_per_gw_m2: f64,
    pub synth_intensity_gw_m2: Option<Grid>,
    #[serde(default = "two_percent")]
    pub synth_noise: f64,
}

impl Default for FitSaturationConfig {
    fn default() -> Self {
        FitSaturationConfig {
            input: None,
            synth_p_inf_counts_per_s: p_inf(),
            synth_i_sat_gw_m2: i_sat(),
            synth_background_counts_per_s_per_gw_m2: 0.0,
            synth_intensity_gw_m2: None,
            synth_noise: two_percent(),
        }
    }
}

fn p_inf() -> f64 {
    1.0e5
}
fn i_sat() -> f64 {
    3.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlookConfig {
    pub d_eff_um: f64,
    pub radius_um: f64,
    pub lambda0_nm: f64,
    pub budget: BudgetConfig,
    pub zpl_gamma_star_over_2pi_mhz: Option<f64>,
    #[serde(default = "one")]
    pub eta_e: f64,
    #[serde(default = "one")]
    pub cos_theta: f64,
}

/// A parsed config together with where it came from.
#[derive(Debug, Default)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub sha256: String,
}

impl LoadedConfig {
    /// No `--config`: every section at its defaults, hash of the empty file.
    pub fn empty() -> Self {
        LoadedConfig {
            config: RunConfig::default(),
            base_dir: PathBuf::from("."),
            sha256: hex::encode(Sha256::digest(b"")),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::invalid("--config", format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| CliError::invalid("--config", format!("{} is not UTF-8", path.display())))?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| {
            CliError::invalid(format!("config {}", path.display()), e.to_string().trim_end().to_string())
        })?;
        Ok(LoadedConfig {
            config,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Resolves a referenced input and checks that it exists.
    pub fn input_file(&self, field: &str, path: &Path) -> CliResult<PathBuf> {
        let p = self.resolve(path);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::invalid(field, format!("file {} does not exist", p.display())))
        }
    }

    pub fn coating(&self, name: &str) -> CliResult<Option<(LayerStack, f64)>> {
        let cfg = match name {
            "fiber" => &self.config.coatings.fiber,
            _ => &self.config.coatings.plane,
        };
        cfg.as_ref()
            .map(|c| c.build(&format!("coatings.{name}")))
            .transpose()
    }

    pub fn require_coating(&self, name: &str) -> CliResult<(LayerStack, f64)> {
        self.coating(name)?
            .ok_or_else(|| CliError::invalid(format!("coatings.{name}"), "section is required"))
    }

    pub fn emitter(&self) -> CliResult<EmitterModel> {
        self.config.emitter.build(self)
    }

    pub fn geometry(&self) -> CliResult<CavityGeometry> {
        let cav = self
            .config
            .cavity
            .as_ref()
            .ok_or_else(|| CliError::invalid("cavity", "section is required"))?;
        cav.build()
    }

    /// The [budget] section, or the coatings when both are configured.
    pub fn budget(&self) -> CliResult<BudgetSource> {
        match &self.config.budget {
            Some(b) if !b.from_coatings => Ok(b.scalar("budget")?.into()),
            Some(_) => self.coating_budget(),
            None if self.config.coatings.fiber.is_some() && self.config.coatings.plane.is_some() => {
                self.coating_budget()
            }
            None => Err(CliError::invalid("budget", "section is required (or configure both coatings)")),
        }
    }

    fn coating_budget(&self) -> CliResult<BudgetSource> {
        let (fiber, loss_fiber) = self.require_coating("fiber")?;
        let (plane, loss_plane) = self.require_coating("plane")?;
        Ok(CoatingBudget {
            fiber,
            plane,
            loss_fiber,
            loss_plane,
        }
        .into())
    }

    /// Coupling context for `geometry` with the [coupling] overrides applied.
    pub fn coupling_context(&self, geometry: CavityGeometry) -> CliResult<CouplingContext> {
        let cfg = &self.config.coupling;
        let mut ctx = CouplingContext::new(geometry, self.budget()?, self.emitter()?);
        ctx.eta_e = match cfg.eta_e {
            Some(e) => e,
            None => match self.coating("plane")? {
                Some((plane, _)) => {
                    surface_field_factor(&plane, geometry.wavelength_nm(), cfg.emitter_height_nm).in_section("coupling")?
                }
                None => {
                    return Err(CliError::invalid(
                        "coupling.eta_e",
                        "required when coatings.plane is not configured",
                    ))
                }
            },
        };
        ctx.orientation = match (cfg.eta_theta, cfg.cos_theta) {
            (Some(_), Some(_)) => {
                return Err(CliError::invalid("coupling", "set at most one of eta_theta and cos_theta"))
            }
            (_, Some(c)) => Orientation::Aligned { cos_theta: c },
            (e, None) => Orientation::Ensemble {
                eta_theta: e.unwrap_or_else(|| orientation_factor(false)),
            },
        };
        ctx.eta_lambda = cfg.eta_lambda;
        ctx.q_emitter = cfg.q_emitter;
        ctx.volume_um3 = cfg.volume_um3;
        ctx.n_emitters = cfg.n_emitters.unwrap_or(1);
        ctx.validate().in_section("coupling")?;
        Ok(ctx)
    }
}

impl CoatingConfig {
    /// Stack and its loss as a fraction.
    pub fn build(&self, section: &str) -> CliResult<(LayerStack, f64)> {
        let stack = match (&self.layers, &self.quarter_wave) {
            (Some(_), Some(_)) => return Err(CliError::invalid(section, "give either `layers` or `quarter_wave`, not both")),
            (None, None) => return Err(CliError::invalid(section, "needs `layers` or `quarter_wave`")),
            (Some(layers), None) => {
                if layers.is_empty() {
                    return Err(CliError::invalid(format!("{section}.layers"), "layer list is empty"));
                }
                let built = layers
                    .iter()
                    .enumerate()
                    .map(|(i, l)| Layer::new(l.index, l.thickness_nm).in_section(&format!("{section}.layers[{i}]")))
                    .collect::<CliResult<Vec<_>>>()?;
                LayerStack::new(self.ambient_index, built, self.substrate_index).in_section(section)?
            }
            (None, Some(q)) => build_quarter_wave_stack(&QuarterWaveDesign {
                center_wavelength_nm: q.center_wavelength_nm,
                n_high: q.n_high,
                n_low: q.n_low,
                pairs: q.pairs,
                substrate_index: self.substrate_index,
                ambient_index: self.ambient_index,
                terminate_with_low_quarter: q.low_index_cap,
            })
            .in_section(&format!("{section}.quarter_wave"))?,
        };
        if !(self.loss_ppm.is_finite() && self.loss_ppm >= 0.0) {
            return Err(CliError::invalid(format!("{section}.loss_ppm"), "must be finite and >= 0"));
        }
        Ok((stack, self.loss_ppm * 1e-6))
    }
}

impl CavityConfig {
    pub fn build(&self) -> CliResult<CavityGeometry> {
        let d = match (self.d_eff_um, self.mode_pair_nm) {
            (Some(d), None) => d,
            (None, Some([a, b])) => effective_length_from_modes(a, b).in_section("cavity.mode_pair_nm")?,
            _ => return Err(CliError::invalid("cavity", "set exactly one of d_eff_um and mode_pair_nm")),
        };
        CavityGeometry::new(d, self.radius_um, self.lambda0_nm).in_section("cavity")
    }
}

impl BudgetConfig {
    pub fn scalar(&self, section: &str) -> CliResult<MirrorBudget> {
        if self.from_coatings {
            return Err(CliError::invalid(format!("{section}.from_coatings"), "not supported here"));
        }
        let four = [self.t1_ppm, self.l1_ppm, self.t2_ppm, self.l2_ppm];
        match (self.per_mirror_ppm, four) {
            (Some(p), [None, None, None, None]) => MirrorBudget::symmetric(p * 1e-6).in_section(section),
            (None, [Some(t1), Some(l1), Some(t2), Some(l2)]) => MirrorBudget::from_ppm(t1, l1, t2, l2).in_section(section),
            (Some(_), _) => Err(CliError::invalid(section, "per_mirror_ppm excludes t1_ppm/l1_ppm/t2_ppm/l2_ppm")),
            (None, _) => {
                let names = ["t1_ppm", "l1_ppm", "t2_ppm", "l2_ppm"];
                let missing = names.iter().zip(four).find(|(_, v)| v.is_none()).map(|(n, _)| *n).unwrap_or("t1_ppm");
                Err(CliError::invalid(format!("{section}.{missing}"), "required"))
            }
        }
    }
}

impl EmitterConfig {
    pub fn build(&self, loaded: &LoadedConfig) -> CliResult<EmitterModel> {
        let inline = self.transitions.is_some() || self.gamma0_over_2pi_mhz.is_some() || self.huang_rhys.is_some();
        match (&self.file, inline) {
            (Some(_), true) => Err(CliError::invalid("emitter", "file excludes inline parameters")),
            (Some(file), false) => {
                let path = loaded.input_file("emitter.file", file)?;
                let text = fs::read_to_string(&path)?;
                let cfg: EmitterModelConfig = toml::from_str(&text)
                    .map_err(|e| CliError::invalid(format!("emitter.file {}", path.display()), e.to_string()))?;
                EmitterModel::try_from(&cfg).in_section("emitter.file")
            }
            (None, true) => {
                let reference = reference_emitter_model();
                let gamma0 = self.gamma0_over_2pi_mhz.map(mhz_to_angular).unwrap_or(reference.gamma0);
                let huang_rhys = self.huang_rhys.unwrap_or(reference.huang_rhys);
                match &self.transitions {
                    Some(t) => {
                        let cfg = EmitterModelConfig {
                            gamma0_over_2pi_mhz: nvcavity::constants::angular_to_mhz(gamma0),
                            huang_rhys,
                            transitions: t.clone(),
                        };
                        EmitterModel::try_from(&cfg).in_section("emitter")
                    }
                    None => EmitterModel::new(gamma0, huang_rhys, reference.transitions().to_vec()).in_section("emitter"),
                }
            }
            (None, false) => Ok(reference_emitter_model()),
        }
    }
}
