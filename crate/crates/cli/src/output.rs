//! Output directory bookkeeping: every file written through [`Output`] is
//! hashed into `manifest.txt` at the end of the run.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use nvcavity::Spectrum;

use crate::error::{CliError, CliResult};

pub struct Output {
    dir: PathBuf,
    config_sha256: String,
    command: &'static str,
    seed: Option<u64>,
    written: Vec<(String, String)>,
}

impl Output {
    pub fn create(dir: &Path, config_sha256: &str, command: &'static str) -> CliResult<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::runtime(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            config_sha256: config_sha256.to_string(),
            command,
            seed: None,
            written: Vec::new(),
        })
    }

    /// Records that `seed` influenced the outputs.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Comment header for text reports and plot data.
    pub fn header(&self) -> String {
        let mut h = format!("# config_sha256 = {}\n# command = {}\n", self.config_sha256, self.command);
        if let Some(seed) = self.seed {
            h.push_str(&format!("# seed = {seed}\n"));
        }
        h
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        log::info!("wrote {}", path.display());
        self.written.retain(|(n, _)| n != name);
        self.written.push((name.to_string(), hex::encode(Sha256::digest(bytes))));
        Ok(path)
    }

    /// Text file prefixed with the provenance header.
    pub fn write_report(&mut self, name: &str, body: &str) -> CliResult<PathBuf> {
        let text = format!("{}{body}", self.header());
        self.write_bytes(name, text.as_bytes())
    }

    /// CSV with exactly one header line; the config hash lives in the manifest.
    pub fn write_table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<PathBuf> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(header)?;
        for row in rows {
            wtr.write_record(row)?;
        }
        let bytes = wtr.into_inner().map_err(|e| CliError::runtime(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_spectrum(&mut self, name: &str, spectrum: &Spectrum) -> CliResult<PathBuf> {
        let mut buf = Vec::new();
        spectrum.write_csv(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    /// `manifest.txt`: config hash, command, seed and one `sha256  file` line
    /// per output, sorted by name.
    pub fn finish(mut self) -> CliResult<()> {
        self.written.sort();
        let mut text = self.header();
        for (name, hash) in &self.written {
            text.push_str(&format!("{hash}  {name}\n"));
        }
        let path = self.path("manifest.txt");
        fs::write(&path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

/// Shortest representation that round-trips.
pub fn num(x: f64) -> String {
    x.to_string()
}

/// `key = value` lines.
pub fn key_values(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Plot data: whitespace-separated `series x y` after a commented header.
pub struct PlotData {
    lines: Vec<String>,
    axes: Vec<String>,
}

impl PlotData {
    pub fn new() -> Self {
        PlotData {
            lines: Vec::new(),
            axes: Vec::new(),
        }
    }

    pub fn series(&mut self, name: &str, x_label: &str, y_label: &str, points: impl IntoIterator<Item = (f64, f64)>) {
        self.axes.push(format!("# series {name}: x = {x_label}, y = {y_label}"));
        self.lines.extend(points.into_iter().map(|(x, y)| format!("{name} {} {}", num(x), num(y))));
    }

    pub fn render(&self) -> String {
        let mut s = self.axes.join("\n");
        s.push_str("\nseries x y\n");
        for l in &self.lines {
            s.push_str(l);
            s.push('\n');
        }
        s
    }
}
