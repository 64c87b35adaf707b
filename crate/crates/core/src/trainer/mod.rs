//! Training loop: AdamW with warmup + cosine annealing, deterministic
//! batching, checkpointing, and validation hooks.

mod checkpoint;
mod optimizer;
mod schedule;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use optimizer::{AdamConfig, AdamW, StepOutcome};
pub use schedule::{lr_at, Schedule};

use crate::data::{collect_windows, split_pairs, DataError, SequencePair, TrainingWindow};
use crate::loss::{total_loss, LossConfig, LossError};
use crate::metrics;
use crate::model::{ModelConfig, ModelError, PoseRefiner};
use crate::rng::Rng;
use crate::tensor::{DiffTensor, TensorError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset produced no training windows")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}: total loss became non-finite")]
    Diverged { epoch: usize, last_good: Box<Checkpoint> },
    #[error("invalid training configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("checkpoint parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("checkpoint manifest mismatch: {0}")]
    Manifest(String),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Everything the training loop needs to know.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub batch_size: usize,
    /// Stride between window starts when batching a sequence.
    pub window_stride: usize,
    /// Mark only every M-th window frame as annotated (1 = dense).
    pub annotate_every: usize,
    /// Fraction of sequences held out for validation.
    pub val_fraction: f64,
    /// Window stride used when refining validation sequences.
    pub eval_stride: usize,
    pub seed: u64,
    /// Capture a checkpoint snapshot every N epochs (0 = final only).
    pub checkpoint_every: usize,
    /// Run validation every N epochs (0 = never).
    pub eval_every: usize,
    pub adam: AdamConfig,
    pub loss: LossConfig,
    pub model: ModelConfig,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            lr_init: 1e-3,
            warmup_epochs: 5,
            total_epochs: 200,
            batch_size: 64,
            window_stride: model.t_window / 2,
            annotate_every: 1,
            val_fraction: 0.2,
            eval_stride: model.t_window / 2,
            seed: 7,
            checkpoint_every: 0,
            eval_every: 0,
            loss: LossConfig::for_joints(model.keypoints),
            adam: AdamConfig::default(),
            model,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.lr_init <= 0.0 {
            return Err(TrainError::Invalid(format!("lr_init must be > 0, got {}", self.lr_init)));
        }
        if self.warmup_epochs >= self.total_epochs {
            return Err(TrainError::Invalid(format!(
                "warmup_epochs {} must be below total_epochs {}",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Invalid("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(TrainError::Invalid(format!(
                "val_fraction must be in [0, 1), got {}",
                self.val_fraction
            )));
        }
        self.model.validate()?;
        self.loss.validate(self.model.keypoints)?;
        Ok(())
    }
}

/// Aggregated metrics over a set of sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryMetrics {
    pub mpjpe: Option<f64>,
    pub accel: Option<f64>,
    /// PCK at 5% of the ground-truth bbox diagonal.
    pub pck05: Option<f64>,
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    pub loss_refined: f64,
    pub loss_final: f64,
    pub loss_online: f64,
    pub loss_total: f64,
    pub skipped_steps: usize,
    pub val: Option<SummaryMetrics>,
}

impl EpochRecord {
    /// Structured one-line text form, stable for scripting.
    pub fn to_line(&self) -> String {
        let mut line = format!(
            "epoch {} lr {} loss_refined {} loss_final {} loss_online {} loss_total {} skipped {}",
            self.epoch,
            self.lr,
            self.loss_refined,
            self.loss_final,
            self.loss_online,
            self.loss_total,
            self.skipped_steps
        );
        if let Some(val) = &self.val {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
            line.push_str(&format!(
                " val_mpjpe {} val_accel {} val_pck05 {}",
                fmt(val.mpjpe),
                fmt(val.accel),
                fmt(val.pck05)
            ));
        }
        line
    }
}

/// Final state plus per-epoch history and any periodic snapshots.
#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    /// Snapshots captured every `checkpoint_every` epochs.
    pub snapshots: Vec<Checkpoint>,
}

/// Mean refined-vs-clean metrics over sequence pairs, refining each
/// corrupted sequence with the model.
pub fn evaluate_refinement(
    model: &PoseRefiner,
    pairs: &[SequencePair],
    stride: usize,
) -> Result<SummaryMetrics, TrainError> {
    let mut reports = Vec::new();
    for pair in pairs {
        let refined = model.refine_sequence(&pair.corrupted, stride)?;
        reports.push(sequence_metrics(&refined, &pair.clean));
    }
    Ok(mean_summary(&reports))
}

/// Metrics of the corrupted inputs themselves, the refinement baseline.
pub fn evaluate_corrupted(pairs: &[SequencePair]) -> SummaryMetrics {
    let reports: Vec<SummaryMetrics> =
        pairs.iter().map(|p| sequence_metrics(&p.corrupted, &p.clean)).collect();
    mean_summary(&reports)
}

fn sequence_metrics(
    pred: &crate::kinematics::PoseSequence,
    clean: &crate::kinematics::PoseSequence,
) -> SummaryMetrics {
    let frames = clean.frames();
    let pred_m = pred.flat_frames(0, frames);
    let gt_m = clean.flat_frames(0, frames);
    let report = metrics::evaluate(
        &pred_m,
        &gt_m,
        &clean.visibility,
        clean.keypoints,
        clean.dims,
        &clean.meta.joint_groups,
    );
    let pck05 = report
        .pck
        .iter()
        .find(|r| (r.threshold - 0.05).abs() < 1e-12)
        .and_then(|r| r.mean);
    SummaryMetrics { mpjpe: report.mpjpe, accel: report.accel, pck05 }
}

fn mean_summary(reports: &[SummaryMetrics]) -> SummaryMetrics {
    fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
        let present: Vec<f64> = values.flatten().collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    }
    SummaryMetrics {
        mpjpe: mean(reports.iter().map(|r| r.mpjpe)),
        accel: mean(reports.iter().map(|r| r.accel)),
        pck05: mean(reports.iter().map(|r| r.pck05)),
    }
}

/// Loss of one window against its targets, as a graph node plus report.
fn window_loss(
    model: &PoseRefiner,
    window: &TrainingWindow,
    loss_cfg: &LossConfig,
    model_cfg: &ModelConfig,
) -> Result<(DiffTensor, crate::loss::LossReport), TrainError> {
    let out = model.forward(&window.input)?;
    let gt_sampled = DiffTensor::from_mat(&window.target_sampled);
    let gt_full = DiffTensor::from_mat(&window.target);
    let (loss, report) = total_loss(
        &out.encoder.refined,
        &out.final_poses,
        &gt_sampled,
        &gt_full,
        &window.target_vis_sampled,
        &window.target_vis,
        &window.sampled_indices,
        loss_cfg,
        model_cfg.keypoints,
        model_cfg.dims,
    )?;
    Ok((loss, report))
}

/// Train a fresh model. Deterministic for a fixed config and dataset.
pub fn train(cfg: &TrainConfig, pairs: &[SequencePair]) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let mut init_rng = Rng::new(cfg.seed).derive(1);
    let model = PoseRefiner::new(cfg.model.clone(), &mut init_rng)?;
    let params = model.named_params();
    let optimizer = AdamW::new(&params, cfg.adam);
    run_epochs(model, optimizer, cfg, pairs, 0, 0)
}

/// Continue training from a checkpoint until `total_epochs`. The config
/// inside the checkpoint is used, so the schedule matches the original
/// run exactly.
pub fn resume(ckpt: &Checkpoint, pairs: &[SequencePair]) -> Result<TrainOutcome, TrainError> {
    let (model, optimizer) = ckpt.restore()?;
    run_epochs(model, optimizer, &ckpt.config, pairs, ckpt.epoch, ckpt.global_step)
}

fn run_epochs(
    model: PoseRefiner,
    mut optimizer: AdamW,
    cfg: &TrainConfig,
    pairs: &[SequencePair],
    start_epoch: usize,
    start_step: usize,
) -> Result<TrainOutcome, TrainError> {
    let (train_pairs, val_pairs) = split_pairs(pairs.to_vec(), cfg.val_fraction, cfg.seed);
    let (windows, _skipped_seqs) = collect_windows(
        &train_pairs,
        cfg.model.t_window,
        cfg.model.interval,
        cfg.window_stride.max(1),
        cfg.annotate_every.max(1),
    )?;
    if windows.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    let params = model.named_params();
    let steps_per_epoch = windows.len().div_ceil(cfg.batch_size);
    let sched = Schedule::new(
        cfg.lr_init,
        cfg.warmup_epochs * steps_per_epoch,
        cfg.total_epochs * steps_per_epoch,
    );

    let mut global_step = start_step;
    let mut history = Vec::new();
    let mut snapshots = Vec::new();
    let mut last_good = Checkpoint::capture(&model, &optimizer, cfg, start_epoch, global_step);

    for epoch in start_epoch..cfg.total_epochs {
        let mut order: Vec<usize> = (0..windows.len()).collect();
        Rng::new(cfg.seed).derive(1000 + epoch as u64).shuffle(&mut order);

        let mut sums = [0.0f64; 4];
        let mut batches = 0usize;
        let skipped_before = optimizer.skipped;
        let mut lr = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grad();
            let inv = 1.0 / batch.len() as f64;
            for &wi in batch {
                let (loss, report) = window_loss(&model, &windows[wi], &cfg.loss, &cfg.model)?;
                if !report.total.is_finite() {
                    return Err(TrainError::Diverged { epoch, last_good: Box::new(last_good) });
                }
                loss.scale(inv).backward()?;
                sums[0] += report.weighted_refined;
                sums[1] += report.weighted_final;
                sums[2] += report.online;
                sums[3] += report.total;
            }
            lr = lr_at(global_step, &sched);
            optimizer.step(&params, lr);
            global_step += 1;
            batches += 1;
        }
        let n = (batches * cfg.batch_size).min(windows.len()) as f64;

        let val = if cfg.eval_every > 0 && !val_pairs.is_empty() && (epoch + 1) % cfg.eval_every == 0
        {
            Some(evaluate_refinement(&model, &val_pairs, cfg.eval_stride.max(1))?)
        } else {
            None
        };

        history.push(EpochRecord {
            epoch,
            lr,
            loss_refined: sums[0] / n,
            loss_final: sums[1] / n,
            loss_online: sums[2] / n,
            loss_total: sums[3] / n,
            skipped_steps: optimizer.skipped - skipped_before,
            val,
        });

        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            let snap = Checkpoint::capture(&model, &optimizer, cfg, epoch + 1, global_step);
            last_good = snap.clone();
            snapshots.push(snap);
        }
    }

    let checkpoint = Checkpoint::capture(&model, &optimizer, cfg, cfg.total_epochs, global_step);
    Ok(TrainOutcome { checkpoint, history, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SyntheticSpec};

    fn tiny_setup(epochs: usize) -> (TrainConfig, Vec<SequencePair>) {
        let spec = SyntheticSpec {
            sequences: 6,
            frames: 32,
            keypoints: 4,
            noise_sigma: 0.03,
            dropout_prob: 0.0,
            ..SyntheticSpec::default()
        };
        let pairs = generate(&spec).unwrap();
        let mut model = ModelConfig::new(4, 2);
        model.t_window = 8;
        model.interval = 2;
        model.embed_dim = 4;
        model.levels = 2;
        model.heads = 2;
        let mut cfg = TrainConfig::new(model);
        cfg.total_epochs = epochs;
        cfg.warmup_epochs = 1;
        cfg.batch_size = 8;
        cfg.window_stride = 8;
        cfg.eval_every = 0;
        (cfg, pairs)
    }

    #[test]
    fn short_run_reduces_training_loss() {
        let (mut cfg, pairs) = tiny_setup(10);
        cfg.lr_init = 5e-3;
        cfg.adam.weight_decay = 0.0;
        let outcome = train(&cfg, &pairs).unwrap();
        let first = outcome.history.first().unwrap().loss_total;
        let last = outcome.history.last().unwrap().loss_total;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn identical_seeds_give_identical_histories() {
        let (cfg, pairs) = tiny_setup(2);
        let a = train(&cfg, &pairs).unwrap();
        let b = train(&cfg, &pairs).unwrap();
        assert_eq!(a.history, b.history);
        let bits = |c: &Checkpoint| -> Vec<u64> {
            c.params.iter().flat_map(|(_, _, d)| d.iter().map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&a.checkpoint), bits(&b.checkpoint));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let (cfg, _) = tiny_setup(2);
        let err = train(&cfg, &[]).unwrap_err();
        assert!(matches!(err, TrainError::EmptyDataset));
    }

    #[test]
    fn validation_hook_records_metrics() {
        let (mut cfg, pairs) = tiny_setup(2);
        cfg.eval_every = 1;
        cfg.val_fraction = 0.34;
        let outcome = train(&cfg, &pairs).unwrap();
        assert!(outcome.history.iter().all(|r| r.val.is_some()));
        let val = outcome.history[0].val.unwrap();
        assert!(val.mpjpe.unwrap() > 0.0);
    }

    #[test]
    fn untrained_model_loss_is_the_raw_input_loss() {
        // With zero-initialized offset heads and output projection the
        // pipeline is an identity at N=1, so both weighted terms equal
        // the loss of the raw input and the online term vanishes.
        let spec = SyntheticSpec {
            sequences: 1,
            frames: 8,
            keypoints: 4,
            dropout_prob: 0.0,
            ..SyntheticSpec::default()
        };
        let pair = &generate(&spec).unwrap()[0];
        let mut model_cfg = ModelConfig::new(4, 2);
        model_cfg.t_window = 8;
        model_cfg.interval = 1;
        model_cfg.embed_dim = 4;
        model_cfg.levels = 2;
        model_cfg.heads = 2;
        let model = PoseRefiner::new(model_cfg.clone(), &mut Rng::new(3)).unwrap();

        let windows =
            crate::data::sequence_windows(pair, 8, 1, 8, 1).unwrap();
        let loss_cfg = LossConfig::for_joints(4);
        let (_, report) = window_loss(&model, &windows[0], &loss_cfg, &model_cfg).unwrap();

        let raw = DiffTensor::from_mat(&windows[0].input);
        let gt = DiffTensor::from_mat(&windows[0].target);
        let baseline =
            crate::loss::weighted_loss(&raw, &gt, &windows[0].target_vis, &loss_cfg, 4, 2)
                .unwrap()
                .loss
                .item();
        assert!((report.weighted_refined - baseline).abs() < 1e-12);
        assert!((report.weighted_final - baseline).abs() < 1e-12);
        assert_eq!(report.online, 0.0);
        assert!(
            (report.total - (1.0 + loss_cfg.lambda_s) * baseline).abs() < 1e-10,
            "identity-start total should be the fixed raw-input loss"
        );
    }

    #[test]
    fn epoch_record_line_is_parseable() {
        let rec = EpochRecord {
            epoch: 3,
            lr: 0.001,
            loss_refined: 0.5,
            loss_final: 0.25,
            loss_online: 0.1,
            loss_total: 0.85,
            skipped_steps: 0,
            val: Some(SummaryMetrics { mpjpe: Some(0.04), accel: Some(0.01), pck05: None }),
        };
        let line = rec.to_line();
        assert!(line.starts_with("epoch 3 "));
        assert!(line.contains("loss_total 0.85"));
        assert!(line.contains("val_pck05 -"));
    }
}
