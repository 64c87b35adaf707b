//! Versioned checkpoint: config snapshot, named parameter payload, and
//! optimizer moments, as line-oriented text with bit-exact floats.

use super::{AdamW, TrainConfig, TrainError};
use crate::config::{apply_train_config_key, train_pairs};
use crate::model::{ModelConfig, PoseRefiner};
use crate::rng::Rng;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

/// A complete training state: everything needed to resume bit-identically.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// Epochs completed.
    pub epoch: usize,
    pub global_step: usize,
    pub adam_t: usize,
    pub skipped: usize,
    pub config: TrainConfig,
    /// (name, shape, values) per parameter, in model order.
    pub params: Vec<(String, Vec<usize>, Vec<f64>)>,
    pub adam_m: Vec<(String, Vec<f64>)>,
    pub adam_v: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    /// Snapshot the current model and optimizer state.
    pub fn capture(
        model: &PoseRefiner,
        optimizer: &AdamW,
        config: &TrainConfig,
        epoch: usize,
        global_step: usize,
    ) -> Self {
        let named = model.named_params();
        let params = named
            .iter()
            .map(|(n, p)| (n.clone(), p.shape().to_vec(), p.to_vec()))
            .collect();
        let adam_m = named
            .iter()
            .zip(&optimizer.m)
            .map(|((n, _), m)| (n.clone(), m.clone()))
            .collect();
        let adam_v = named
            .iter()
            .zip(&optimizer.v)
            .map(|((n, _), v)| (n.clone(), v.clone()))
            .collect();
        Self {
            epoch,
            global_step,
            adam_t: optimizer.t,
            skipped: optimizer.skipped,
            config: config.clone(),
            params,
            adam_m,
            adam_v,
        }
    }

    /// Rebuild the model and optimizer. Fails if the stored manifest does
    /// not exactly match the model constructed from the stored config.
    pub fn restore(&self) -> Result<(PoseRefiner, AdamW), TrainError> {
        let mut rng = Rng::new(self.config.seed).derive(1);
        let model = PoseRefiner::new(self.config.model.clone(), &mut rng)?;
        let named = model.named_params();
        if named.len() != self.params.len() {
            return Err(TrainError::Manifest(format!(
                "checkpoint holds {} parameters, model expects {}",
                self.params.len(),
                named.len()
            )));
        }
        for ((name, tensor), (stored_name, shape, values)) in named.iter().zip(&self.params) {
            if name != stored_name {
                return Err(TrainError::Manifest(format!(
                    "parameter order mismatch: model '{name}' vs checkpoint '{stored_name}'"
                )));
            }
            if tensor.shape() != shape.as_slice() {
                return Err(TrainError::Manifest(format!(
                    "parameter '{name}': model shape {:?} vs checkpoint {:?}",
                    tensor.shape(),
                    shape
                )));
            }
            tensor.with_data_mut(|data| data.copy_from_slice(values));
        }

        let mut optimizer = AdamW::new(&named, self.config.adam);
        for (slot, (name, values)) in optimizer.m.iter_mut().zip(&self.adam_m) {
            if slot.len() != values.len() {
                return Err(TrainError::Manifest(format!("moment '{name}' has wrong length")));
            }
            slot.copy_from_slice(values);
        }
        for (slot, (name, values)) in optimizer.v.iter_mut().zip(&self.adam_v) {
            if slot.len() != values.len() {
                return Err(TrainError::Manifest(format!("moment '{name}' has wrong length")));
            }
            slot.copy_from_slice(values);
        }
        optimizer.t = self.adam_t;
        optimizer.skipped = self.skipped;
        Ok((model, optimizer))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "checkpoint {CHECKPOINT_VERSION}").unwrap();
        writeln!(out, "epoch {}", self.epoch).unwrap();
        writeln!(out, "global_step {}", self.global_step).unwrap();
        writeln!(out, "adam_t {}", self.adam_t).unwrap();
        writeln!(out, "skipped {}", self.skipped).unwrap();
        writeln!(out, "[config]").unwrap();
        for (k, v) in train_pairs(&self.config) {
            writeln!(out, "{k} = {v}").unwrap();
        }
        writeln!(out, "[params]").unwrap();
        for (name, shape, values) in &self.params {
            write!(out, "{name} {}", shape.len()).unwrap();
            for s in shape {
                write!(out, " {s}").unwrap();
            }
            for v in values {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        writeln!(out, "[adam_m]").unwrap();
        for (name, values) in &self.adam_m {
            write_moment(&mut out, name, values);
        }
        writeln!(out, "[adam_v]").unwrap();
        for (name, values) in &self.adam_v {
            write_moment(&mut out, name, values);
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TrainError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let perr = |line: usize, message: String| TrainError::Parse { line, message };

        let (l1, first) = lines.next().ok_or_else(|| perr(1, "empty checkpoint".into()))?;
        let version = first
            .strip_prefix("checkpoint ")
            .ok_or_else(|| perr(l1, "missing 'checkpoint <version>' header".into()))?;
        if version.trim() != CHECKPOINT_VERSION.to_string() {
            return Err(perr(l1, format!("unsupported checkpoint version '{version}'")));
        }

        let mut counter = |key: &str| -> Result<usize, TrainError> {
            let (line, text) =
                lines.next().ok_or_else(|| perr(0, format!("truncated before '{key}'")))?;
            text.strip_prefix(key)
                .map(str::trim)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| perr(line, format!("expected '{key} <n>', got '{text}'")))
        };
        let epoch = counter("epoch")?;
        let global_step = counter("global_step")?;
        let adam_t = counter("adam_t")?;
        let skipped = counter("skipped")?;

        let (line, header) = lines.next().ok_or_else(|| perr(0, "truncated".into()))?;
        if header != "[config]" {
            return Err(perr(line, format!("expected '[config]', got '{header}'")));
        }
        // Keypoints/dims placeholders are overwritten by the stored pairs.
        let mut config = TrainConfig::new(ModelConfig::new(1, 2));
        let mut section = String::new();
        for (line, text) in lines.by_ref() {
            if text.starts_with('[') {
                section = text.to_string();
                break;
            }
            if text.is_empty() {
                continue;
            }
            let (k, v) = text
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| perr(line, format!("expected 'key = value', got '{text}'")))?;
            apply_train_config_key(&mut config, k, v)?;
        }
        if section != "[params]" {
            return Err(perr(0, format!("expected '[params]' section, got '{section}'")));
        }

        let mut params = Vec::new();
        let mut adam_m = Vec::new();
        let mut adam_v = Vec::new();
        let mut stage = 0u8; // 0 = params, 1 = adam_m, 2 = adam_v
        let mut saw_end = false;
        for (line, text) in lines {
            match text {
                "[adam_m]" => {
                    stage = 1;
                    continue;
                }
                "[adam_v]" => {
                    stage = 2;
                    continue;
                }
                "end" => {
                    saw_end = true;
                    break;
                }
                "" => continue,
                _ => {}
            }
            let mut tok = text.split_whitespace();
            let name = tok
                .next()
                .ok_or_else(|| perr(line, "missing name".into()))?
                .to_string();
            if stage == 0 {
                let ndims: usize = tok
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| perr(line, format!("'{name}': missing rank")))?;
                let mut shape = Vec::with_capacity(ndims);
                for _ in 0..ndims {
                    let d: usize = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| perr(line, format!("'{name}': truncated shape")))?;
                    shape.push(d);
                }
                let numel: usize = shape.iter().product();
                let values = parse_values(&mut tok, numel)
                    .map_err(|m| perr(line, format!("'{name}': {m}")))?;
                params.push((name, shape, values));
            } else {
                let numel: usize = tok
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| perr(line, format!("'{name}': missing length")))?;
                let values = parse_values(&mut tok, numel)
                    .map_err(|m| perr(line, format!("'{name}': {m}")))?;
                if stage == 1 {
                    adam_m.push((name, values));
                } else {
                    adam_v.push((name, values));
                }
            }
        }
        if !saw_end {
            return Err(perr(0, "truncated before 'end'".into()));
        }
        Ok(Self { epoch, global_step, adam_t, skipped, config, params, adam_m, adam_v })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        fs::write(path, self.to_text())
            .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path)
            .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })?;
        Self::from_text(&text)
    }
}

fn write_moment(out: &mut String, name: &str, values: &[f64]) {
    write!(out, "{name} {}", values.len()).unwrap();
    for v in values {
        write!(out, " {v}").unwrap();
    }
    out.push('\n');
}

fn parse_values<'a>(
    tok: &mut impl Iterator<Item = &'a str>,
    numel: usize,
) -> Result<Vec<f64>, String> {
    let mut values = Vec::with_capacity(numel);
    for _ in 0..numel {
        let v: f64 = tok
            .next()
            .ok_or("truncated values")?
            .parse()
            .map_err(|_| "bad float".to_string())?;
        values.push(v);
    }
    if tok.next().is_some() {
        return Err("trailing fields".into());
    }
    Ok(values)
}
