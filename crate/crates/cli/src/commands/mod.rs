use std::path::PathBuf;

use crate::config::LoadedConfig;
use crate::error::CliResult;
use crate::output::Output;

pub mod analyze;
pub mod cavity;
pub mod fit;
pub mod outlook;
pub mod sweep;
pub mod tmm;

/// Everything a subcommand needs besides its own arguments.
pub struct Run {
    pub loaded: LoadedConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Run {
    pub fn output(&self, command: &'static str) -> CliResult<Output> {
        Output::create(&self.out_dir, &self.loaded.sha256, command)
    }
}

/// Least-squares slope of ln y against ln x.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    if lx.len() < 2 {
        return None;
    }
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx)
}
