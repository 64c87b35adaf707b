//! Hierarchical attention encoder.
//!
//! Stacks attention layers whose feature width doubles per level. Every
//! level's features are projected back to pose coordinates through a
//! kernel-1 convolution head; the mean of those offsets corrects the
//! input pose. Offset heads start at zero, so an untrained encoder is an
//! exact identity refiner.

use super::attention::{multi_head_attention, AttentionParams, LayerNormParams, MlpParams};
use super::{ModelConfig, ModelError};
use crate::rng::Rng;
use crate::tensor::DiffTensor;

/// One expansion level of the encoder.
#[derive(Debug, Clone)]
pub struct EncoderLevel {
    /// Doubles the feature width: (C·2^{l-1}) × (C·2^l).
    pub expand: DiffTensor,
    /// Learnable positional embedding, T'×(C·2^l), zero-initialized,
    /// shared by queries, keys, and values.
    pub pos: DiffTensor,
    pub attn: AttentionParams,
    pub norm1: LayerNormParams,
    pub norm2: LayerNormParams,
    pub mlp: MlpParams,
}

/// Kernel-1 convolution head mapping a feature width to pose width.
#[derive(Debug, Clone)]
pub struct OffsetHead {
    pub weight: DiffTensor,
    pub bias: DiffTensor,
}

impl OffsetHead {
    fn zeroed(cin: usize, cout: usize) -> Self {
        Self {
            weight: DiffTensor::zero_param(&[cin, cout]),
            bias: DiffTensor::zero_param(&[cout]),
        }
    }

    pub fn apply(&self, x: &DiffTensor) -> Result<DiffTensor, ModelError> {
        Ok(x.conv1d_time(&self.weight, &self.bias)?)
    }
}

/// Full encoder parameter set.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    /// Initial embedding matrix; rows cover the active feature blocks.
    pub w0: DiffTensor,
    pub levels: Vec<EncoderLevel>,
    /// One head per level, including level 0 (the initial embedding).
    pub offset_heads: Vec<OffsetHead>,
}

impl EncoderParams {
    pub fn new(cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let pose_w = cfg.pose_width();
        let embed_in = cfg.embed_blocks() * pose_w;
        let t_samp = cfg.sampled_frames();
        let w0 = DiffTensor::uniform_param(&[embed_in, cfg.embed_dim], embed_in, rng);

        let mut levels = Vec::with_capacity(cfg.levels);
        for l in 1..=cfg.levels {
            let win = cfg.level_width(l - 1);
            let wout = cfg.level_width(l);
            levels.push(EncoderLevel {
                expand: DiffTensor::uniform_param(&[win, wout], win, rng),
                pos: DiffTensor::zero_param(&[t_samp, wout]),
                attn: AttentionParams::new(wout, rng),
                norm1: LayerNormParams::new(wout),
                norm2: LayerNormParams::new(wout),
                mlp: MlpParams::new(wout, wout * cfg.mlp_ratio, rng),
            });
        }

        let offset_heads = (0..=cfg.levels)
            .map(|l| OffsetHead::zeroed(cfg.level_width(l), pose_w))
            .collect();

        Self { w0, levels, offset_heads }
    }

    pub fn named(&self, out: &mut Vec<(String, DiffTensor)>) {
        out.push(("encoder.w0".to_string(), self.w0.clone()));
        for (i, level) in self.levels.iter().enumerate() {
            let p = format!("encoder.level{}", i + 1);
            out.push((format!("{p}.expand"), level.expand.clone()));
            out.push((format!("{p}.pos"), level.pos.clone()));
            level.attn.named(&format!("{p}.attn"), out);
            level.norm1.named(&format!("{p}.norm1"), out);
            level.norm2.named(&format!("{p}.norm2"), out);
            level.mlp.named(&format!("{p}.mlp"), out);
        }
        for (i, head) in self.offset_heads.iter().enumerate() {
            out.push((format!("encoder.offset{i}.w"), head.weight.clone()));
            out.push((format!("encoder.offset{i}.b"), head.bias.clone()));
        }
    }
}

/// Multi-scale features and the refined pose produced by one pass.
#[derive(Debug)]
pub struct EncoderOutput {
    /// Initial embedding Z_0, T'×C.
    pub embed: DiffTensor,
    /// Per-level encoded features, T'×(C·2^l) for l = 1..=N_L.
    pub z_levels: Vec<DiffTensor>,
    /// Per-level positional offsets, each T'×(K·D), levels 0..=N_L.
    pub offsets: Vec<DiffTensor>,
    /// Mean of the offsets, T'×(K·D).
    pub offset_mean: DiffTensor,
    /// Refined input pose P + offset_mean.
    pub refined: DiffTensor,
}

/// Initial embedding: concatenate flow, current, next, and previous poses
/// along the feature axis and project by `w0`.
pub fn embed_initial(
    flow: &DiffTensor,
    p_cur: &DiffTensor,
    p_next: &DiffTensor,
    p_prev: &DiffTensor,
    w0: &DiffTensor,
) -> Result<DiffTensor, ModelError> {
    flow.same_shape(p_cur, "embed_initial")?;
    flow.same_shape(p_next, "embed_initial")?;
    flow.same_shape(p_prev, "embed_initial")?;
    Ok(DiffTensor::concat_cols(&[flow, p_cur, p_next, p_prev])?.matmul(w0)?)
}

/// One hierarchical level: expand the width, add the positional
/// embedding, then a pre-norm attention block and a pre-norm MLP block,
/// both with residuals.
pub fn encoder_level(
    z_prev: &DiffTensor,
    level: &EncoderLevel,
    cfg: &ModelConfig,
) -> Result<DiffTensor, ModelError> {
    let expanded = z_prev.matmul(&level.expand)?;
    let z = expanded.add(&level.pos)?;
    let normed = level.norm1.apply(&z, cfg.ln_eps)?;
    let (attended, _) = multi_head_attention(&normed, &normed, &level.attn, cfg.heads)?;
    let z_bar = attended.add(&z)?;
    let mlp_out = level
        .mlp
        .apply(&level.norm2.apply(&z_bar, cfg.ln_eps)?, cfg.leaky_slope)?;
    Ok(mlp_out.add(&z_bar)?)
}

/// Project every level's features to pose-width offsets and average them.
pub fn project_offsets(
    z_all: &[DiffTensor],
    heads: &[OffsetHead],
    divisor: f64,
) -> Result<(Vec<DiffTensor>, DiffTensor), ModelError> {
    if z_all.len() != heads.len() {
        return Err(ModelError::Config(format!(
            "offset head count {} != level count {}",
            heads.len(),
            z_all.len()
        )));
    }
    let mut offsets = Vec::with_capacity(z_all.len());
    for (z, head) in z_all.iter().zip(heads) {
        offsets.push(head.apply(z)?);
    }
    let mut acc = offsets[0].clone();
    for x in &offsets[1..] {
        acc = acc.add(x)?;
    }
    let mean = acc.scale(1.0 / divisor);
    Ok((offsets, mean))
}

/// P' = P + offset_mean.
pub fn refine(p: &DiffTensor, offset_mean: &DiffTensor) -> Result<DiffTensor, ModelError> {
    Ok(p.add(offset_mean)?)
}

/// Full encoder pass over the embedded feature blocks.
pub fn encode(
    params: &EncoderParams,
    cfg: &ModelConfig,
    embed_blocks: &[&DiffTensor],
    p_sampled: &DiffTensor,
) -> Result<EncoderOutput, ModelError> {
    let embed = DiffTensor::concat_cols(embed_blocks)?.matmul(&params.w0)?;

    let mut z_levels = Vec::with_capacity(cfg.levels);
    let mut z = embed.clone();
    for level in &params.levels {
        z = encoder_level(&z, level, cfg)?;
        z_levels.push(z.clone());
    }

    let mut z_all = Vec::with_capacity(cfg.levels + 1);
    z_all.push(embed.clone());
    z_all.extend(z_levels.iter().cloned());
    let (offsets, offset_mean) =
        project_offsets(&z_all, &params.offset_heads, cfg.offset_divisor())?;

    let refined = refine(p_sampled, &offset_mean)?;
    Ok(EncoderOutput { embed, z_levels, offsets, offset_mean, refined })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embed_initial_hand_computed() {
        // One keypoint, one coordinate, one frame: (1;2;3;4)·ones(4x2) = [10,10].
        let flow = DiffTensor::constant(vec![1.0], &[1, 1]);
        let cur = DiffTensor::constant(vec![2.0], &[1, 1]);
        let next = DiffTensor::constant(vec![3.0], &[1, 1]);
        let prev = DiffTensor::constant(vec![4.0], &[1, 1]);
        let w0 = DiffTensor::constant(vec![1.0; 8], &[4, 2]);
        let z0 = embed_initial(&flow, &cur, &next, &prev, &w0).unwrap();
        assert_eq!(z0.to_vec(), vec![10.0, 10.0]);
    }

    #[test]
    fn embed_initial_zero_cases() {
        let zero = DiffTensor::zeros(&[2, 3]);
        let any = DiffTensor::constant(vec![0.5; 6], &[2, 3]);
        let w0: DiffTensor = DiffTensor::constant(vec![0.25; 12 * 4], &[12, 4]);
        let z0 = embed_initial(&zero, &zero, &zero, &zero, &w0).unwrap();
        assert!(z0.to_vec().iter().all(|&v| v == 0.0));

        let w0_zero = DiffTensor::zeros(&[12, 4]);
        let z0 = embed_initial(&any, &any, &any, &any, &w0_zero).unwrap();
        assert!(z0.to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn offset_mean_arithmetic() {
        // Three heads over constant features; only the middle head is
        // non-zero and emits the constant 3, so the mean is 1.
        let t_s = 4;
        let z: Vec<DiffTensor> = (0..3).map(|_| DiffTensor::constant(vec![1.0; t_s * 2], &[t_s, 2])).collect();
        let zero_head = || OffsetHead {
            weight: DiffTensor::zero_param(&[2, 2]),
            bias: DiffTensor::zero_param(&[2]),
        };
        let mut heads = vec![zero_head(), zero_head(), zero_head()];
        heads[1].bias = DiffTensor::param(vec![3.0, 3.0], &[2]);
        let (offsets, mean) = project_offsets(&z, &heads, 3.0).unwrap();
        assert_eq!(offsets.len(), 3);
        assert!(offsets[0].to_vec().iter().all(|&v| v == 0.0));
        assert!(offsets[1].to_vec().iter().all(|&v| v == 3.0));
        assert!(mean.to_vec().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn offset_shapes_follow_the_level_widths() {
        // N_L = 5, K = 15, D = 2: six offsets, each T'×30.
        let mut cfg = ModelConfig::new(15, 2);
        cfg.t_window = 8;
        cfg.interval = 2;
        cfg.embed_dim = 4;
        cfg.levels = 5;
        cfg.heads = 2;
        cfg.validate().unwrap();
        let mut rng = Rng::new(3);
        let params = EncoderParams::new(&cfg, &mut rng);
        assert_eq!(params.offset_heads.len(), 6);
        let z_all: Vec<DiffTensor> = (0..=cfg.levels)
            .map(|l| DiffTensor::zeros(&[cfg.sampled_frames(), cfg.level_width(l)]))
            .collect();
        let (offsets, mean) =
            project_offsets(&z_all, &params.offset_heads, cfg.offset_divisor()).unwrap();
        assert_eq!(offsets.len(), 6);
        for x in &offsets {
            assert_eq!(x.shape(), &[cfg.sampled_frames(), 30]);
        }
        assert_eq!(mean.shape(), &[cfg.sampled_frames(), 30]);
    }

    #[test]
    fn head_count_mismatch_is_a_configuration_error() {
        let z = vec![DiffTensor::zeros(&[2, 4]), DiffTensor::zeros(&[2, 8])];
        let heads = vec![OffsetHead {
            weight: DiffTensor::zero_param(&[4, 2]),
            bias: DiffTensor::zero_param(&[2]),
        }];
        assert!(matches!(
            project_offsets(&z, &heads, 2.0),
            Err(ModelError::Config(_))
        ));
    }
}
