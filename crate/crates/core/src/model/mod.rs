//! The pose refinement model: hierarchical attention encoder, derivative
//! feature decoder, and the end-to-end sliding-window pipeline.

pub mod attention;
pub mod decoder;
pub mod encoder;

use crate::kinematics::{
    sample_window, KinematicFeatures, KinematicsError, PoseSequence, VelocityDirection,
};
use crate::mat::Mat;
use crate::rng::Rng;
use crate::tensor::{DiffTensor, TensorError};
use thiserror::Error;

pub use attention::{multi_head_attention, AttentionParams, LayerNormParams, MlpParams};
pub use decoder::{
    decode_final, derivative_features, interpolate_values, linear_interpolation_weights,
    DecoderParams,
};
pub use encoder::{embed_initial, encode, encoder_level, project_offsets, refine, EncoderOutput, EncoderParams};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("sequence of {frames} frames is shorter than the window length {window}")]
    SequenceTooShort { frames: usize, window: usize },
    #[error("checkpoint is for K={expected_k}, D={expected_d} but input has K={got_k}, D={got_d}")]
    IncompatiblePoseShape { expected_k: usize, expected_d: usize, got_k: usize, got_d: usize },
}

/// Divisor of the offset average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetDivisor {
    /// Mean over the N_L+1 offsets actually summed (default).
    LevelsPlusOne,
    /// Divide by N_L.
    Levels,
}

/// Which kinematic features the model consumes. All on by default;
/// switching everything off yields the minimum model that embeds only the
/// current pose and decodes from the offsets alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureToggles {
    /// Three-point keypoint flow in the embedding.
    pub flow: bool,
    /// Previous/next poses concatenated into the embedding.
    pub neighbors: bool,
    /// Velocity block in the decoder memory.
    pub velocity: bool,
    /// Squared-acceleration block in the decoder memory.
    pub acceleration: bool,
    /// Learnable weight/bias affine on the derivative features.
    pub wb: bool,
}

impl FeatureToggles {
    pub fn all() -> Self {
        Self { flow: true, neighbors: true, velocity: true, acceleration: true, wb: true }
    }

    pub fn none() -> Self {
        Self { flow: false, neighbors: false, velocity: false, acceleration: false, wb: false }
    }
}

/// All architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Sliding window length T in frames.
    pub t_window: usize,
    /// Sampling interval N: the model sees T/N frames per window.
    pub interval: usize,
    pub keypoints: usize,
    pub dims: usize,
    /// Initial embedding width C; level l is C·2^l wide.
    pub embed_dim: usize,
    /// Number of encoder levels N_L (the decoder depth mirrors it).
    pub levels: usize,
    pub heads: usize,
    /// Kinematic interval d_t, in sampled steps.
    pub dt: usize,
    pub mlp_ratio: usize,
    pub leaky_slope: f64,
    pub ln_eps: f64,
    pub offset_divisor: OffsetDivisor,
    pub velocity_direction: VelocityDirection,
    pub features: FeatureToggles,
    /// Append the level-0 embedding to the decoder memory, widening the
    /// memory projection by C.
    pub memory_extra_embed: bool,
}

impl ModelConfig {
    /// Small default: T=16 window sampled at stride 2.
    pub fn new(keypoints: usize, dims: usize) -> Self {
        Self {
            t_window: 16,
            interval: 2,
            keypoints,
            dims,
            embed_dim: 8,
            levels: 3,
            heads: 2,
            dt: 1,
            mlp_ratio: 2,
            leaky_slope: 0.01,
            ln_eps: 1e-5,
            offset_divisor: OffsetDivisor::LevelsPlusOne,
            velocity_direction: VelocityDirection::Prev,
            features: FeatureToggles::all(),
            memory_extra_embed: false,
        }
    }

    pub fn pose_width(&self) -> usize {
        self.keypoints * self.dims
    }

    pub fn sampled_frames(&self) -> usize {
        self.t_window / self.interval
    }

    pub fn level_width(&self, level: usize) -> usize {
        self.embed_dim << level
    }

    /// Feature blocks concatenated into the initial embedding.
    pub fn embed_blocks(&self) -> usize {
        1 + usize::from(self.features.flow) + 2 * usize::from(self.features.neighbors)
    }

    /// Input width of the decoder memory projection.
    pub fn memory_width(&self) -> usize {
        let blocks =
            1 + usize::from(self.features.velocity) + usize::from(self.features.acceleration);
        blocks * self.pose_width() + if self.memory_extra_embed { self.embed_dim } else { 0 }
    }

    pub fn offset_divisor(&self) -> f64 {
        match self.offset_divisor {
            OffsetDivisor::LevelsPlusOne => (self.levels + 1) as f64,
            OffsetDivisor::Levels => self.levels as f64,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Config(msg));
        if self.keypoints == 0 {
            return fail("keypoints must be >= 1".into());
        }
        if self.dims != 2 && self.dims != 3 {
            return fail(format!("dims must be 2 or 3, got {}", self.dims));
        }
        if self.interval == 0 || self.t_window == 0 {
            return fail("window and interval must be >= 1".into());
        }
        if self.t_window / self.interval == 0 {
            return fail(format!(
                "window {} sampled at interval {} yields no frames",
                self.t_window, self.interval
            ));
        }
        if self.levels == 0 {
            return fail("at least one encoder level is required".into());
        }
        if self.heads == 0 {
            return fail("heads must be >= 1".into());
        }
        for l in 0..=self.levels {
            if !self.level_width(l).is_multiple_of(self.heads) {
                return fail(format!(
                    "level {l} width {} is not divisible by {} heads",
                    self.level_width(l),
                    self.heads
                ));
            }
        }
        if self.dt == 0 {
            return fail("kinematic interval dt must be >= 1".into());
        }
        if self.mlp_ratio == 0 {
            return fail("mlp_ratio must be >= 1".into());
        }
        if self.offset_divisor == OffsetDivisor::Levels && self.levels == 0 {
            return fail("offset divisor N_L requires N_L >= 1".into());
        }
        Ok(())
    }
}

/// One full forward pass over a sampled window.
#[derive(Debug)]
pub struct ForwardOutput {
    pub encoder: EncoderOutput,
    /// Refined poses upsampled to the full window, T×(K·D).
    pub interpolated: DiffTensor,
    /// Decoder branch contribution, T×(K·D).
    pub decoder_branch: DiffTensor,
    /// Final full-rate poses P_s = interpolated + decoder branch.
    pub final_poses: DiffTensor,
}

/// The complete trainable model.
#[derive(Debug, Clone)]
pub struct PoseRefiner {
    pub config: ModelConfig,
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

impl PoseRefiner {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let encoder = EncoderParams::new(&config, rng);
        let decoder = DecoderParams::new(&config, rng);
        Ok(Self { config, encoder, decoder })
    }

    /// Stable (name, tensor) listing of every trainable parameter.
    pub fn named_params(&self) -> Vec<(String, DiffTensor)> {
        let mut out = Vec::new();
        self.encoder.named(&mut out);
        self.decoder.named(&mut out);
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grad(&self) {
        for (_, p) in self.named_params() {
            p.zero_grad();
        }
    }

    /// Forward pass over one sampled window (T'×(K·D)).
    pub fn forward(&self, sampled: &Mat) -> Result<ForwardOutput, ModelError> {
        let cfg = &self.config;
        let expected = (cfg.sampled_frames(), cfg.pose_width());
        if (sampled.rows(), sampled.cols()) != expected {
            return Err(ModelError::Config(format!(
                "window shape {}x{} does not match configured {}x{}",
                sampled.rows(),
                sampled.cols(),
                expected.0,
                expected.1
            )));
        }
        let feats = KinematicFeatures::compute(sampled, cfg.dt, cfg.velocity_direction)?;

        let p = DiffTensor::from_mat(sampled);
        let flow = DiffTensor::from_mat(&feats.flow);
        let prev = DiffTensor::from_mat(&feats.prev_poses);
        let next = DiffTensor::from_mat(&feats.next_poses);

        let mut blocks: Vec<&DiffTensor> = Vec::with_capacity(4);
        if cfg.features.flow {
            blocks.push(&flow);
        }
        blocks.push(&p);
        if cfg.features.neighbors {
            blocks.push(&next);
            blocks.push(&prev);
        }
        let enc = encode(&self.encoder, cfg, &blocks, &p)?;

        let velocity = DiffTensor::from_mat(match cfg.velocity_direction {
            VelocityDirection::Prev => &feats.velocity_prev,
            VelocityDirection::Next => &feats.velocity_next,
        });
        let acceleration = DiffTensor::from_mat(&feats.acceleration);
        let (s_v, s_a) = derivative_features(
            &velocity,
            &acceleration,
            self.decoder.deriv_v.as_ref(),
            self.decoder.deriv_a.as_ref(),
        )?;

        let (interpolated, values) = interpolate_values(&enc.refined, &self.decoder)?;

        let mut memory_blocks: Vec<&DiffTensor> = Vec::with_capacity(4);
        if cfg.features.velocity {
            memory_blocks.push(&s_v);
        }
        if cfg.features.acceleration {
            memory_blocks.push(&s_a);
        }
        memory_blocks.push(&enc.offset_mean);
        if cfg.memory_extra_embed {
            memory_blocks.push(&enc.embed);
        }
        let branch = decode_final(&values, &memory_blocks, &self.decoder, cfg)?;
        let final_poses = interpolated.add(&branch)?;

        Ok(ForwardOutput { encoder: enc, interpolated, decoder_branch: branch, final_poses })
    }

    /// Refine a whole sequence with overlapping windows; overlapping
    /// predictions are averaged per frame. Visibility and metadata are
    /// preserved from the input.
    pub fn refine_sequence(
        &self,
        seq: &PoseSequence,
        stride: usize,
    ) -> Result<PoseSequence, ModelError> {
        let cfg = &self.config;
        if seq.keypoints != cfg.keypoints || seq.dims != cfg.dims {
            return Err(ModelError::IncompatiblePoseShape {
                expected_k: cfg.keypoints,
                expected_d: cfg.dims,
                got_k: seq.keypoints,
                got_d: seq.dims,
            });
        }
        let frames = seq.frames();
        if frames < cfg.t_window {
            return Err(ModelError::SequenceTooShort { frames, window: cfg.t_window });
        }
        let stride = stride.max(1);
        let width = cfg.pose_width();
        let mut sums = vec![0.0; frames * width];
        let mut counts = vec![0u32; frames];

        let last_start = frames - cfg.t_window;
        let mut starts: Vec<usize> = (0..=last_start).step_by(stride).collect();
        if *starts.last().unwrap() != last_start {
            starts.push(last_start);
        }
        for start in starts {
            let window = seq.slice(start, cfg.t_window)?;
            let (sampled, _) = sample_window(&window, cfg.t_window, cfg.interval)?;
            let out = self.forward(&sampled)?;
            let poses = out.final_poses.to_vec();
            for t in 0..cfg.t_window {
                counts[start + t] += 1;
                for c in 0..width {
                    sums[(start + t) * width + c] += poses[t * width + c];
                }
            }
        }

        let mut coords = vec![0.0; frames * width];
        for t in 0..frames {
            let n = counts[t] as f64;
            for c in 0..width {
                coords[t * width + c] = sums[t * width + c] / n;
            }
        }
        Ok(PoseSequence {
            keypoints: seq.keypoints,
            dims: seq.dims,
            coords,
            visibility: seq.visibility.clone(),
            meta: seq.meta.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::SequenceMeta;

    fn tiny_config() -> ModelConfig {
        let mut cfg = ModelConfig::new(4, 2);
        cfg.t_window = 8;
        cfg.interval = 2;
        cfg.embed_dim = 4;
        cfg.levels = 2;
        cfg.heads = 2;
        cfg
    }

    #[test]
    fn config_width_law() {
        let cfg = tiny_config();
        assert_eq!(cfg.level_width(0), 4);
        assert_eq!(cfg.level_width(1), 8);
        assert_eq!(cfg.level_width(2), 16);
        cfg.validate().unwrap();
    }

    #[test]
    fn config_rejects_indivisible_heads() {
        let mut cfg = tiny_config();
        cfg.heads = 3;
        assert!(matches!(cfg.validate(), Err(ModelError::Config(_))));
    }

    #[test]
    fn untrained_encoder_is_identity_refiner() {
        let cfg = tiny_config();
        let mut rng = Rng::new(5);
        let model = PoseRefiner::new(cfg.clone(), &mut rng).unwrap();
        let window = Mat::from_fn(cfg.sampled_frames(), cfg.pose_width(), |t, c| {
            (t as f64 * 0.1) + (c as f64 * 0.01)
        });
        let out = model.forward(&window).unwrap();
        // Zero-initialized offset heads leave the pose untouched, bitwise.
        assert_eq!(out.encoder.refined.to_vec(), window.data());
        // Zero-initialized output projection keeps the decoder branch silent.
        assert!(out.decoder_branch.to_vec().iter().all(|&x| x == 0.0));
        assert_eq!(out.final_poses.to_vec(), out.interpolated.to_vec());
    }

    #[test]
    fn refine_sequence_identity_at_full_rate() {
        let mut cfg = tiny_config();
        cfg.interval = 1;
        let mut rng = Rng::new(6);
        let model = PoseRefiner::new(cfg.clone(), &mut rng).unwrap();
        let frames = 12;
        let coords: Vec<f64> = (0..frames * cfg.pose_width())
            .map(|i| (i as f64 * 0.37).sin())
            .collect();
        let seq = PoseSequence::new(
            cfg.keypoints,
            cfg.dims,
            coords.clone(),
            vec![true; frames * cfg.keypoints],
            SequenceMeta::generic("id", cfg.keypoints),
        )
        .unwrap();
        let refined = model.refine_sequence(&seq, 4).unwrap();
        for (a, b) in refined.coords.iter().zip(&coords) {
            assert!((a - b).abs() < 1e-6, "identity pipeline drifted: {a} vs {b}");
        }
        assert_eq!(refined.visibility, seq.visibility);
    }

    #[test]
    fn too_short_sequence_is_rejected() {
        let cfg = tiny_config();
        let mut rng = Rng::new(7);
        let model = PoseRefiner::new(cfg.clone(), &mut rng).unwrap();
        let seq = PoseSequence::new(
            cfg.keypoints,
            cfg.dims,
            vec![0.0; 4 * cfg.pose_width()],
            vec![true; 4 * cfg.keypoints],
            SequenceMeta::generic("short", cfg.keypoints),
        )
        .unwrap();
        assert!(matches!(
            model.refine_sequence(&seq, 1),
            Err(ModelError::SequenceTooShort { .. })
        ));
    }

    #[test]
    fn feature_toggles_change_widths() {
        let mut cfg = tiny_config();
        cfg.features = FeatureToggles::none();
        cfg.validate().unwrap();
        assert_eq!(cfg.embed_blocks(), 1);
        assert_eq!(cfg.memory_width(), cfg.pose_width());
        let mut rng = Rng::new(8);
        let model = PoseRefiner::new(cfg.clone(), &mut rng).unwrap();
        let window = Mat::zeros(cfg.sampled_frames(), cfg.pose_width());
        let out = model.forward(&window).unwrap();
        assert_eq!(out.final_poses.shape(), &[cfg.t_window, cfg.pose_width()]);
        assert!(model.decoder.deriv_v.is_none());
    }

    #[test]
    fn param_names_are_unique() {
        let mut rng = Rng::new(9);
        let model = PoseRefiner::new(tiny_config(), &mut rng).unwrap();
        let params = model.named_params();
        let mut names: Vec<&str> = params.iter().map(|(n, _)| n.as_str()).collect();
        let before = names.len();
        names.sort_unstable();
        names.dedup();
        assert_eq!(before, names.len());
        assert!(model.param_count() > 0);
    }
}
