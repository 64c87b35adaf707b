//! Dotted-key configuration: `key = value` lines with `#` comments.
//!
//! The same parser backs config files, command-line overrides, the
//! config snapshot inside checkpoints, and the effective-config echo in
//! output manifests. Unknown keys are rejected with the full list of
//! valid keys.

use crate::data::{DropoutMode, SyntheticSpec};
use crate::kinematics::VelocityDirection;
use crate::loss::{LossConfig, OnlineNorm};
use crate::model::{FeatureToggles, ModelConfig, OffsetDivisor};
use crate::trainer::{AdamConfig, TrainConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key '{key}'; valid keys: {}", valid.join(", "))]
    UnknownKey { key: String, valid: Vec<&'static str> },
    #[error("key '{key}': cannot parse '{value}' as {expected}")]
    BadValue { key: String, value: String, expected: &'static str },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Parse `key = value` lines. Blank lines and `#` comments are ignored.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Malformed {
                line: i + 1,
                message: format!("expected 'key = value', got '{line}'"),
            });
        };
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Parse a single `key=value` override argument.
pub fn parse_override(arg: &str) -> Result<(String, String), ConfigError> {
    let Some((key, value)) = arg.split_once('=') else {
        return Err(ConfigError::Malformed {
            line: 0,
            message: format!("override '{arg}' must have the form key=value"),
        });
    };
    Ok((key.trim().to_string(), value.trim().to_string()))
}

fn bad(key: &str, value: &str, expected: &'static str) -> ConfigError {
    ConfigError::BadValue { key: key.to_string(), value: value.to_string(), expected }
}

fn parse_num<T: std::str::FromStr>(
    key: &str,
    value: &str,
    expected: &'static str,
) -> Result<T, ConfigError> {
    value.parse().map_err(|_| bad(key, value, expected))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(key, value, "boolean")),
    }
}

// ── Model keys ──────────────────────────────────────────────────────

pub const MODEL_KEYS: &[&str] = &[
    "model.t_window",
    "model.interval",
    "model.keypoints",
    "model.dims",
    "model.embed_dim",
    "model.levels",
    "model.heads",
    "model.dt",
    "model.mlp_ratio",
    "model.leaky_slope",
    "model.ln_eps",
    "model.offset_divisor",
    "model.velocity_direction",
    "model.use_flow",
    "model.use_neighbors",
    "model.use_velocity",
    "model.use_acceleration",
    "model.use_wb",
    "model.memory_extra_embed",
];

pub fn apply_model_key(
    cfg: &mut ModelConfig,
    key: &str,
    value: &str,
) -> Result<bool, ConfigError> {
    match key {
        "model.t_window" => cfg.t_window = parse_num(key, value, "integer")?,
        "model.interval" => cfg.interval = parse_num(key, value, "integer")?,
        "model.keypoints" => cfg.keypoints = parse_num(key, value, "integer")?,
        "model.dims" => cfg.dims = parse_num(key, value, "integer")?,
        "model.embed_dim" => cfg.embed_dim = parse_num(key, value, "integer")?,
        "model.levels" => cfg.levels = parse_num(key, value, "integer")?,
        "model.heads" => cfg.heads = parse_num(key, value, "integer")?,
        "model.dt" => cfg.dt = parse_num(key, value, "integer")?,
        "model.mlp_ratio" => cfg.mlp_ratio = parse_num(key, value, "integer")?,
        "model.leaky_slope" => cfg.leaky_slope = parse_num(key, value, "float")?,
        "model.ln_eps" => cfg.ln_eps = parse_num(key, value, "float")?,
        "model.offset_divisor" => {
            cfg.offset_divisor = match value {
                "levels_plus_one" => OffsetDivisor::LevelsPlusOne,
                "levels" => OffsetDivisor::Levels,
                _ => return Err(bad(key, value, "levels_plus_one | levels")),
            }
        }
        "model.velocity_direction" => {
            cfg.velocity_direction = match value {
                "prev" => VelocityDirection::Prev,
                "next" => VelocityDirection::Next,
                _ => return Err(bad(key, value, "prev | next")),
            }
        }
        "model.use_flow" => cfg.features.flow = parse_bool(key, value)?,
        "model.use_neighbors" => cfg.features.neighbors = parse_bool(key, value)?,
        "model.use_velocity" => cfg.features.velocity = parse_bool(key, value)?,
        "model.use_acceleration" => cfg.features.acceleration = parse_bool(key, value)?,
        "model.use_wb" => cfg.features.wb = parse_bool(key, value)?,
        "model.memory_extra_embed" => cfg.memory_extra_embed = parse_bool(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

pub fn model_pairs(cfg: &ModelConfig) -> Vec<(String, String)> {
    let FeatureToggles { flow, neighbors, velocity, acceleration, wb } = cfg.features;
    vec![
        ("model.t_window".into(), cfg.t_window.to_string()),
        ("model.interval".into(), cfg.interval.to_string()),
        ("model.keypoints".into(), cfg.keypoints.to_string()),
        ("model.dims".into(), cfg.dims.to_string()),
        ("model.embed_dim".into(), cfg.embed_dim.to_string()),
        ("model.levels".into(), cfg.levels.to_string()),
        ("model.heads".into(), cfg.heads.to_string()),
        ("model.dt".into(), cfg.dt.to_string()),
        ("model.mlp_ratio".into(), cfg.mlp_ratio.to_string()),
        ("model.leaky_slope".into(), cfg.leaky_slope.to_string()),
        ("model.ln_eps".into(), cfg.ln_eps.to_string()),
        (
            "model.offset_divisor".into(),
            match cfg.offset_divisor {
                OffsetDivisor::LevelsPlusOne => "levels_plus_one".into(),
                OffsetDivisor::Levels => "levels".into(),
            },
        ),
        (
            "model.velocity_direction".into(),
            match cfg.velocity_direction {
                VelocityDirection::Prev => "prev".into(),
                VelocityDirection::Next => "next".into(),
            },
        ),
        ("model.use_flow".into(), flow.to_string()),
        ("model.use_neighbors".into(), neighbors.to_string()),
        ("model.use_velocity".into(), velocity.to_string()),
        ("model.use_acceleration".into(), acceleration.to_string()),
        ("model.use_wb".into(), wb.to_string()),
        ("model.memory_extra_embed".into(), cfg.memory_extra_embed.to_string()),
    ]
}

// ── Loss keys ───────────────────────────────────────────────────────

pub const LOSS_KEYS: &[&str] =
    &["loss.lambda_topk", "loss.n_topk", "loss.lambda_s", "loss.norm"];

pub fn apply_loss_key(cfg: &mut LossConfig, key: &str, value: &str) -> Result<bool, ConfigError> {
    match key {
        "loss.lambda_topk" => cfg.lambda_topk = parse_num(key, value, "float")?,
        "loss.n_topk" => cfg.n_topk = parse_num(key, value, "integer")?,
        "loss.lambda_s" => cfg.lambda_s = parse_num(key, value, "float")?,
        "loss.norm" => {
            cfg.norm = match value {
                "l1" => OnlineNorm::L1,
                "l1l2" => OnlineNorm::L1PlusL2,
                _ => return Err(bad(key, value, "l1 | l1l2")),
            }
        }
        _ => return Ok(false),
    }
    Ok(true)
}

pub fn loss_pairs(cfg: &LossConfig) -> Vec<(String, String)> {
    vec![
        ("loss.lambda_topk".into(), cfg.lambda_topk.to_string()),
        ("loss.n_topk".into(), cfg.n_topk.to_string()),
        ("loss.lambda_s".into(), cfg.lambda_s.to_string()),
        (
            "loss.norm".into(),
            match cfg.norm {
                OnlineNorm::L1 => "l1".into(),
                OnlineNorm::L1PlusL2 => "l1l2".into(),
            },
        ),
    ]
}

// ── Train keys ──────────────────────────────────────────────────────

pub const TRAIN_KEYS: &[&str] = &[
    "train.lr_init",
    "train.warmup_epochs",
    "train.total_epochs",
    "train.batch_size",
    "train.window_stride",
    "train.annotate_every",
    "train.val_fraction",
    "train.eval_stride",
    "train.seed",
    "train.checkpoint_every",
    "train.eval_every",
    "train.weight_decay",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.clip_norm",
];

pub fn apply_train_key(
    cfg: &mut TrainConfig,
    key: &str,
    value: &str,
) -> Result<bool, ConfigError> {
    match key {
        "train.lr_init" => cfg.lr_init = parse_num(key, value, "float")?,
        "train.warmup_epochs" => cfg.warmup_epochs = parse_num(key, value, "integer")?,
        "train.total_epochs" => cfg.total_epochs = parse_num(key, value, "integer")?,
        "train.batch_size" => cfg.batch_size = parse_num(key, value, "integer")?,
        "train.window_stride" => cfg.window_stride = parse_num(key, value, "integer")?,
        "train.annotate_every" => cfg.annotate_every = parse_num(key, value, "integer")?,
        "train.val_fraction" => cfg.val_fraction = parse_num(key, value, "float")?,
        "train.eval_stride" => cfg.eval_stride = parse_num(key, value, "integer")?,
        "train.seed" => cfg.seed = parse_num(key, value, "integer")?,
        "train.checkpoint_every" => cfg.checkpoint_every = parse_num(key, value, "integer")?,
        "train.eval_every" => cfg.eval_every = parse_num(key, value, "integer")?,
        "train.weight_decay" => cfg.adam.weight_decay = parse_num(key, value, "float")?,
        "train.beta1" => cfg.adam.beta1 = parse_num(key, value, "float")?,
        "train.beta2" => cfg.adam.beta2 = parse_num(key, value, "float")?,
        "train.eps" => cfg.adam.eps = parse_num(key, value, "float")?,
        "train.clip_norm" => {
            cfg.adam.clip_norm = if value == "none" {
                None
            } else {
                Some(parse_num(key, value, "float or 'none'")?)
            }
        }
        _ => return Ok(false),
    }
    Ok(true)
}

pub fn train_pairs(cfg: &TrainConfig) -> Vec<(String, String)> {
    let AdamConfig { beta1, beta2, eps, weight_decay, clip_norm } = cfg.adam;
    let mut out = vec![
        ("train.lr_init".into(), cfg.lr_init.to_string()),
        ("train.warmup_epochs".into(), cfg.warmup_epochs.to_string()),
        ("train.total_epochs".into(), cfg.total_epochs.to_string()),
        ("train.batch_size".into(), cfg.batch_size.to_string()),
        ("train.window_stride".into(), cfg.window_stride.to_string()),
        ("train.annotate_every".into(), cfg.annotate_every.to_string()),
        ("train.val_fraction".into(), cfg.val_fraction.to_string()),
        ("train.eval_stride".into(), cfg.eval_stride.to_string()),
        ("train.seed".into(), cfg.seed.to_string()),
        ("train.checkpoint_every".into(), cfg.checkpoint_every.to_string()),
        ("train.eval_every".into(), cfg.eval_every.to_string()),
        ("train.weight_decay".into(), weight_decay.to_string()),
        ("train.beta1".into(), beta1.to_string()),
        ("train.beta2".into(), beta2.to_string()),
        ("train.eps".into(), eps.to_string()),
        (
            "train.clip_norm".into(),
            clip_norm.map(|v| v.to_string()).unwrap_or_else(|| "none".into()),
        ),
    ];
    out.extend(model_pairs(&cfg.model));
    out.extend(loss_pairs(&cfg.loss));
    out
}

/// All keys accepted by a training configuration.
pub fn train_config_keys() -> Vec<&'static str> {
    TRAIN_KEYS.iter().chain(MODEL_KEYS).chain(LOSS_KEYS).copied().collect()
}

/// Apply one dotted key to a training configuration; unknown keys list
/// every valid alternative.
pub fn apply_train_config_key(
    cfg: &mut TrainConfig,
    key: &str,
    value: &str,
) -> Result<(), ConfigError> {
    if apply_train_key(cfg, key, value)?
        || apply_model_key(&mut cfg.model, key, value)?
        || apply_loss_key(&mut cfg.loss, key, value)?
    {
        return Ok(());
    }
    Err(ConfigError::UnknownKey { key: key.to_string(), valid: train_config_keys() })
}

// ── Synthetic-spec keys ─────────────────────────────────────────────

pub const SYNTHETIC_KEYS: &[&str] = &[
    "sequences",
    "frames",
    "keypoints",
    "dims",
    "fps",
    "components",
    "amp_min",
    "amp_max",
    "freq_min",
    "freq_max",
    "translation_amp",
    "translation_freq",
    "drift",
    "noise_sigma",
    "dropout_prob",
    "dropout_mode",
    "burst_prob",
    "burst_scale",
    "seed",
];

pub fn apply_synthetic_key(
    cfg: &mut SyntheticSpec,
    key: &str,
    value: &str,
) -> Result<(), ConfigError> {
    match key {
        "sequences" => cfg.sequences = parse_num(key, value, "integer")?,
        "frames" => cfg.frames = parse_num(key, value, "integer")?,
        "keypoints" => cfg.keypoints = parse_num(key, value, "integer")?,
        "dims" => cfg.dims = parse_num(key, value, "integer")?,
        "fps" => cfg.fps = parse_num(key, value, "float")?,
        "components" => cfg.components = parse_num(key, value, "integer")?,
        "amp_min" => cfg.amp_min = parse_num(key, value, "float")?,
        "amp_max" => cfg.amp_max = parse_num(key, value, "float")?,
        "freq_min" => cfg.freq_min = parse_num(key, value, "float")?,
        "freq_max" => cfg.freq_max = parse_num(key, value, "float")?,
        "translation_amp" => cfg.translation_amp = parse_num(key, value, "float")?,
        "translation_freq" => cfg.translation_freq = parse_num(key, value, "float")?,
        "drift" => cfg.drift = parse_num(key, value, "float")?,
        "noise_sigma" => cfg.noise_sigma = parse_num(key, value, "float")?,
        "dropout_mode" => {
            cfg.dropout_mode = match value {
                "hold_last" => DropoutMode::HoldLast,
                "jump" => DropoutMode::Jump,
                _ => return Err(bad(key, value, "hold_last | jump")),
            }
        }
        "dropout_prob" => cfg.dropout_prob = parse_num(key, value, "float")?,
        "burst_prob" => cfg.burst_prob = parse_num(key, value, "float")?,
        "burst_scale" => cfg.burst_scale = parse_num(key, value, "float")?,
        "seed" => cfg.seed = parse_num(key, value, "integer")?,
        _ => {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                valid: SYNTHETIC_KEYS.to_vec(),
            })
        }
    }
    Ok(())
}

pub fn synthetic_pairs(cfg: &SyntheticSpec) -> Vec<(String, String)> {
    vec![
        ("sequences".into(), cfg.sequences.to_string()),
        ("frames".into(), cfg.frames.to_string()),
        ("keypoints".into(), cfg.keypoints.to_string()),
        ("dims".into(), cfg.dims.to_string()),
        ("fps".into(), cfg.fps.to_string()),
        ("components".into(), cfg.components.to_string()),
        ("amp_min".into(), cfg.amp_min.to_string()),
        ("amp_max".into(), cfg.amp_max.to_string()),
        ("freq_min".into(), cfg.freq_min.to_string()),
        ("freq_max".into(), cfg.freq_max.to_string()),
        ("translation_amp".into(), cfg.translation_amp.to_string()),
        ("translation_freq".into(), cfg.translation_freq.to_string()),
        ("drift".into(), cfg.drift.to_string()),
        ("noise_sigma".into(), cfg.noise_sigma.to_string()),
        ("dropout_prob".into(), cfg.dropout_prob.to_string()),
        (
            "dropout_mode".into(),
            match cfg.dropout_mode {
                DropoutMode::HoldLast => "hold_last".into(),
                DropoutMode::Jump => "jump".into(),
            },
        ),
        ("burst_prob".into(), cfg.burst_prob.to_string()),
        ("burst_scale".into(), cfg.burst_scale.to_string()),
        ("seed".into(), cfg.seed.to_string()),
    ]
}
