//! Cross-attention decoder producing full-rate poses.
//!
//! Velocity and squared-acceleration features join the encoder offsets as
//! the memory stream; the refined poses, upsampled through a learnable
//! interpolation matrix, form the query/value stream. The decoder branch
//! output is projected back to pose width and added on top of the
//! interpolated refined poses, so a zero output projection leaves the
//! interpolation untouched.

use super::attention::{multi_head_attention, AttentionParams, LayerNormParams, MlpParams};
use super::{ModelConfig, ModelError};
use crate::mat::Mat;
use crate::rng::Rng;
use crate::tensor::DiffTensor;

/// Per-channel affine applied to a derivative feature.
#[derive(Debug, Clone)]
pub struct DerivativeAffine {
    pub weight: DiffTensor,
    pub bias: DiffTensor,
}

impl DerivativeAffine {
    fn new(width: usize, rng: &mut Rng) -> Self {
        Self {
            weight: DiffTensor::uniform_param(&[width, width], width, rng),
            bias: DiffTensor::zero_param(&[width]),
        }
    }
}

/// One decoder layer: pre-norm self-attention over the query stream,
/// pre-norm cross-attention against the memory, pre-norm MLP.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub self_attn: AttentionParams,
    pub cross_attn: AttentionParams,
    pub norm1: LayerNormParams,
    pub norm2: LayerNormParams,
    pub norm3: LayerNormParams,
    pub mlp: MlpParams,
}

impl DecoderLayer {
    fn new(width: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            self_attn: AttentionParams::new(width, rng),
            cross_attn: AttentionParams::new(width, rng),
            norm1: LayerNormParams::new(width),
            norm2: LayerNormParams::new(width),
            norm3: LayerNormParams::new(width),
            mlp: MlpParams::new(width, hidden, rng),
        }
    }
}

/// Full decoder parameter set.
#[derive(Debug, Clone)]
pub struct DecoderParams {
    /// Velocity affine (present when velocity features and their
    /// weight/bias are enabled).
    pub deriv_v: Option<DerivativeAffine>,
    /// Acceleration affine, applied after squaring.
    pub deriv_a: Option<DerivativeAffine>,
    /// Learnable temporal upsampling, T×T', linear-interpolation init.
    pub interp: DiffTensor,
    /// Kernel-1 convolution (K·D)→C feeding the value stream.
    pub value_w: DiffTensor,
    pub value_b: DiffTensor,
    /// Value positional embedding, T×C, zero-initialized.
    pub value_pos: DiffTensor,
    /// Memory projection, (blocks·K·D [+ C]) × C.
    pub memory_proj: DiffTensor,
    pub layers: Vec<DecoderLayer>,
    pub final_norm: LayerNormParams,
    /// Output projection C×(K·D), zero-initialized so the untrained
    /// pipeline reproduces the interpolated refined poses.
    pub output_proj: DiffTensor,
}

impl DecoderParams {
    pub fn new(cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let pose_w = cfg.pose_width();
        let c = cfg.embed_dim;
        let mem_in = cfg.memory_width();
        Self {
            deriv_v: (cfg.features.velocity && cfg.features.wb)
                .then(|| DerivativeAffine::new(pose_w, rng)),
            deriv_a: (cfg.features.acceleration && cfg.features.wb)
                .then(|| DerivativeAffine::new(pose_w, rng)),
            interp: DiffTensor::param(
                linear_interpolation_weights(cfg.t_window, cfg.sampled_frames(), cfg.interval)
                    .into_vec(),
                &[cfg.t_window, cfg.sampled_frames()],
            ),
            value_w: DiffTensor::uniform_param(&[pose_w, c], pose_w, rng),
            value_b: DiffTensor::zero_param(&[c]),
            value_pos: DiffTensor::zero_param(&[cfg.t_window, c]),
            memory_proj: DiffTensor::uniform_param(&[mem_in, c], mem_in, rng),
            layers: (0..cfg.levels)
                .map(|_| DecoderLayer::new(c, c * cfg.mlp_ratio, rng))
                .collect(),
            final_norm: LayerNormParams::new(c),
            output_proj: DiffTensor::zero_param(&[c, pose_w]),
        }
    }

    pub fn named(&self, out: &mut Vec<(String, DiffTensor)>) {
        if let Some(v) = &self.deriv_v {
            out.push(("decoder.deriv_v.w".to_string(), v.weight.clone()));
            out.push(("decoder.deriv_v.b".to_string(), v.bias.clone()));
        }
        if let Some(a) = &self.deriv_a {
            out.push(("decoder.deriv_a.w".to_string(), a.weight.clone()));
            out.push(("decoder.deriv_a.b".to_string(), a.bias.clone()));
        }
        out.push(("decoder.interp".to_string(), self.interp.clone()));
        out.push(("decoder.value.w".to_string(), self.value_w.clone()));
        out.push(("decoder.value.b".to_string(), self.value_b.clone()));
        out.push(("decoder.value_pos".to_string(), self.value_pos.clone()));
        out.push(("decoder.memory_proj".to_string(), self.memory_proj.clone()));
        for (i, layer) in self.layers.iter().enumerate() {
            let p = format!("decoder.layer{i}");
            layer.self_attn.named(&format!("{p}.self"), out);
            layer.cross_attn.named(&format!("{p}.cross"), out);
            layer.norm1.named(&format!("{p}.norm1"), out);
            layer.norm2.named(&format!("{p}.norm2"), out);
            layer.norm3.named(&format!("{p}.norm3"), out);
            layer.mlp.named(&format!("{p}.mlp"), out);
        }
        self.final_norm.named("decoder.final_norm", out);
        out.push(("decoder.output_proj".to_string(), self.output_proj.clone()));
    }
}

/// Row-stochastic linear interpolation from T' samples (at stride N) to
/// T frames. Frames past the last sample replicate it.
pub fn linear_interpolation_weights(t_full: usize, t_sampled: usize, interval: usize) -> Mat {
    let mut w = Mat::zeros(t_full, t_sampled);
    for t in 0..t_full {
        let pos = t as f64 / interval as f64;
        let lo = pos.floor() as usize;
        if lo >= t_sampled - 1 {
            w.set(t, t_sampled - 1, 1.0);
        } else {
            let frac = pos - lo as f64;
            w.set(t, lo, 1.0 - frac);
            w.set(t, lo + 1, frac);
        }
    }
    w
}

/// Derivative positional features: S_v = v·w_v + b_v and
/// S_a = a²·w_a + b_a (squared before the affine, so the sign of the
/// acceleration never matters). Without weight/bias parameters the
/// features pass through as v and a².
pub fn derivative_features(
    velocity: &DiffTensor,
    acceleration: &DiffTensor,
    deriv_v: Option<&DerivativeAffine>,
    deriv_a: Option<&DerivativeAffine>,
) -> Result<(DiffTensor, DiffTensor), ModelError> {
    let s_v = match deriv_v {
        Some(p) => velocity.matmul(&p.weight)?.add_row(&p.bias)?,
        None => velocity.clone(),
    };
    let a_sq = acceleration.mul(acceleration)?;
    let s_a = match deriv_a {
        Some(p) => a_sq.matmul(&p.weight)?.add_row(&p.bias)?,
        None => a_sq,
    };
    Ok((s_v, s_a))
}

/// Upsample refined poses to the full frame rate and embed them as the
/// decoder's value stream. Returns (interpolated poses T×(K·D),
/// value stream T×C).
pub fn interpolate_values(
    p_refined: &DiffTensor,
    params: &DecoderParams,
) -> Result<(DiffTensor, DiffTensor), ModelError> {
    let interpolated = params.interp.matmul(p_refined)?;
    let values = interpolated
        .conv1d_time(&params.value_w, &params.value_b)?
        .add(&params.value_pos)?;
    Ok((interpolated, values))
}

/// Run the cross-attention decoder. `memory_blocks` are concatenated
/// along features and projected to the memory; `values` is the query
/// stream. Returns the decoder branch output, T×(K·D) — exactly zero
/// when the output projection is zero.
pub fn decode_final(
    values: &DiffTensor,
    memory_blocks: &[&DiffTensor],
    params: &DecoderParams,
    cfg: &ModelConfig,
) -> Result<DiffTensor, ModelError> {
    let memory_in = DiffTensor::concat_cols(memory_blocks)?;
    let expected = cfg.memory_width();
    if memory_in.shape()[1] != expected {
        return Err(ModelError::Config(format!(
            "memory width {} does not match configured {} (blocks {:?})",
            memory_in.shape()[1],
            expected,
            memory_blocks.iter().map(|b| b.shape().to_vec()).collect::<Vec<_>>()
        )));
    }
    let memory = memory_in.matmul(&params.memory_proj)?;

    let mut x = values.clone();
    for layer in &params.layers {
        let normed = layer.norm1.apply(&x, cfg.ln_eps)?;
        let (self_out, _) = multi_head_attention(&normed, &normed, &layer.self_attn, cfg.heads)?;
        x = self_out.add(&x)?;

        let normed = layer.norm2.apply(&x, cfg.ln_eps)?;
        let (cross_out, _) = multi_head_attention(&normed, &memory, &layer.cross_attn, cfg.heads)?;
        x = cross_out.add(&x)?;

        let mlp_out = layer.mlp.apply(&layer.norm3.apply(&x, cfg.ln_eps)?, cfg.leaky_slope)?;
        x = mlp_out.add(&x)?;
    }
    let x = params.final_norm.apply(&x, cfg.ln_eps)?;
    Ok(x.matmul(&params.output_proj)?)
}
