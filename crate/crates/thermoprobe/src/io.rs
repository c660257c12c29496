//! File formats shared by the command-line tools: single-column
//! spectrum CSV and JSON for models and results. Floats are written
//! with 17 significant digits, so every emitted file re-ingests to
//! bit-identical values.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::chain_opt::{ChainOptimizationResult, ChainParams};
use crate::error::{Error, Result};
use crate::thermal::EnergySpectrum;

/// Shortest representation that parses back to the same double.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn spectrum_to_csv(spectrum: &EnergySpectrum) -> String {
    let mut out = String::from("energy\n");
    for level in spectrum.levels() {
        out.push_str(&format_float(*level));
        out.push('\n');
    }
    out
}

pub fn write_spectrum_csv(path: &Path, spectrum: &EnergySpectrum) -> Result<()> {
    write_file(path, &spectrum_to_csv(spectrum))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })
}

/// Strict parse of the spectrum format: a lone `energy` header, one
/// finite value per line, and the usual spectrum invariants enforced on
/// the result. Lines starting with `#` (such as a manifest reference)
/// and blank lines are skipped.
pub fn parse_spectrum_csv(text: &str) -> Result<EnergySpectrum> {
    let mut rows = text
        .lines()
        .enumerate()
        .map(|(idx, line)| (idx, line.trim()))
        .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'));
    match rows.next() {
        Some((_, header)) if header == "energy" => {}
        Some((_, header)) => {
            return Err(Error::Parse(format!(
                "expected header 'energy', found '{header}'"
            )))
        }
        None => return Err(Error::Parse("empty spectrum file".into())),
    }
    let mut levels = Vec::new();
    for (idx, cell) in rows {
        let value: f64 = cell.parse().map_err(|_| {
            Error::Parse(format!("line {}: '{cell}' is not a number", idx + 1))
        })?;
        levels.push(value);
    }
    EnergySpectrum::new(levels)
}

pub fn read_spectrum_csv(path: &Path) -> Result<EnergySpectrum> {
    parse_spectrum_csv(&read_file(path)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_file(path)?)?)
}

/// Chain parameters from either a bare parameter file or a full
/// optimization result, so optimizer output feeds directly into the
/// noise analysis.
pub fn read_chain_params(path: &Path) -> Result<ChainParams> {
    let text = read_file(path)?;
    match serde_json::from_str::<ChainParams>(&text) {
        Ok(params) => Ok(params),
        Err(first) => serde_json::from_str::<ChainOptimizationResult>(&text)
            .map(|result| result.params)
            .map_err(|_| Error::Json(first)),
    }
}
