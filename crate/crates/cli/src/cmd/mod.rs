pub mod eval;
pub mod generate;
pub mod inspect;
pub mod refine;
pub mod train;

use crate::error::CliError;
use kinepose::data::SequencePair;
use std::fs;
use std::path::Path;

/// Read a `key = value` file if given, apply `--set` overrides on top,
/// and return the merged pairs.
pub fn layered_pairs(
    file: Option<&Path>,
    overrides: &[String],
) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        pairs.extend(kinepose::config::parse_pairs(&text)?);
    }
    for arg in overrides {
        pairs.push(kinepose::config::parse_override(arg)?);
    }
    Ok(pairs)
}

/// Load every `<id>.clean.pose` / `<id>.noisy.pose` pair in a dataset
/// directory, sorted by id.
pub fn load_dataset(dir: &Path) -> Result<Vec<SequencePair>, CliError> {
    let mut ids: Vec<String> = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(id) = name.strip_suffix(".clean.pose") {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    if ids.is_empty() {
        return Err(CliError::Validation(format!(
            "no '<id>.clean.pose' files found in {}",
            dir.display()
        )));
    }
    let mut pairs = Vec::with_capacity(ids.len());
    for id in ids {
        let clean = kinepose::data::load(&dir.join(format!("{id}.clean.pose")))?;
        let noisy_path = dir.join(format!("{id}.noisy.pose"));
        if !noisy_path.exists() {
            return Err(CliError::Validation(format!(
                "missing corrupted counterpart {}",
                noisy_path.display()
            )));
        }
        let corrupted = kinepose::data::load(&noisy_path)?;
        if clean.frames() != corrupted.frames()
            || clean.keypoints != corrupted.keypoints
            || clean.dims != corrupted.dims
        {
            return Err(CliError::Validation(format!(
                "pair '{id}': clean and noisy files disagree on shape"
            )));
        }
        pairs.push(SequencePair { clean, corrupted });
    }
    Ok(pairs)
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Print to stdout, tolerating a closed pipe (e.g. `kinepose ... | head`).
pub fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

