//! Sliding-window batching of sequence pairs.

use super::synthetic::SequencePair;
use super::DataError;
use crate::kinematics::sample_window;
use crate::mat::Mat;
use crate::rng::Rng;

/// One training example: a sampled corrupted window plus its full-rate
/// clean supervision target.
#[derive(Debug, Clone)]
pub struct TrainingWindow {
    /// Window start frame in the source sequence.
    pub start: usize,
    /// Stride-sampled corrupted poses, T'×(K·D).
    pub input: Mat,
    /// Visibility of the sampled input frames, T'×K.
    pub input_vis: Vec<bool>,
    /// Window-local frame indices of the samples, strictly increasing.
    pub sampled_indices: Vec<usize>,
    /// Clean poses for every window frame, T×(K·D).
    pub target: Mat,
    /// Supervision mask: clean visibility AND the annotation pattern.
    pub target_vis: Vec<bool>,
    /// `target_vis` restricted to the sampled frames.
    pub target_vis_sampled: Vec<bool>,
    /// Clean poses at the sampled frames, T'×(K·D).
    pub target_sampled: Mat,
}

/// Overlapping windows of one pair at the given stride. Frames are
/// annotated only every `annotate_every` steps (1 = dense supervision).
pub fn sequence_windows(
    pair: &SequencePair,
    t_window: usize,
    interval: usize,
    stride: usize,
    annotate_every: usize,
) -> Result<Vec<TrainingWindow>, DataError> {
    let frames = pair.corrupted.frames();
    if frames != pair.clean.frames() {
        return Err(DataError::Validation(format!(
            "clean ({}) and corrupted ({}) frame counts differ",
            pair.clean.frames(),
            frames
        )));
    }
    if t_window > frames {
        return Ok(Vec::new());
    }
    let stride = stride.max(1);
    let annotate_every = annotate_every.max(1);
    let k = pair.clean.keypoints;

    let mut out = Vec::new();
    let mut start = 0usize;
    while start + t_window <= frames {
        let corrupted = pair.corrupted.slice(start, t_window)?;
        let (input, sampled_indices) = sample_window(&corrupted, t_window, interval)?;

        let input_vis: Vec<bool> = sampled_indices
            .iter()
            .flat_map(|&t| corrupted.vis_frames(t, 1))
            .collect();

        let target = pair.clean.flat_frames(start, t_window);
        let mut target_vis = pair.clean.vis_frames(start, t_window);
        for t in 0..t_window {
            if t % annotate_every != 0 {
                for j in 0..k {
                    target_vis[t * k + j] = false;
                }
            }
        }
        let target_vis_sampled: Vec<bool> = sampled_indices
            .iter()
            .flat_map(|&t| target_vis[t * k..(t + 1) * k].to_vec())
            .collect();
        let mut sampled_target = Vec::with_capacity(sampled_indices.len() * target.cols());
        for &t in &sampled_indices {
            sampled_target.extend_from_slice(target.row(t));
        }
        let target_sampled =
            Mat::from_vec(sampled_indices.len(), target.cols(), sampled_target);

        out.push(TrainingWindow {
            start,
            input,
            input_vis,
            sampled_indices,
            target,
            target_vis,
            target_vis_sampled,
            target_sampled,
        });
        start += stride;
    }
    Ok(out)
}

/// Windows of every pair; sequences shorter than the window are skipped
/// and counted.
pub fn collect_windows(
    pairs: &[SequencePair],
    t_window: usize,
    interval: usize,
    stride: usize,
    annotate_every: usize,
) -> Result<(Vec<TrainingWindow>, usize), DataError> {
    let mut windows = Vec::new();
    let mut skipped = 0usize;
    for pair in pairs {
        if pair.corrupted.frames() < t_window {
            skipped += 1;
            continue;
        }
        windows.extend(sequence_windows(pair, t_window, interval, stride, annotate_every)?);
    }
    Ok((windows, skipped))
}

/// Deterministic split by sequence index: shuffles with the seed and
/// reserves `val_fraction` of the pairs for validation.
pub fn split_pairs(
    pairs: Vec<SequencePair>,
    val_fraction: f64,
    seed: u64,
) -> (Vec<SequencePair>, Vec<SequencePair>) {
    let mut indices: Vec<usize> = (0..pairs.len()).collect();
    Rng::new(seed ^ 0x5EED_5711).shuffle(&mut indices);
    let val_count = ((pairs.len() as f64) * val_fraction).round() as usize;
    let val_count = val_count.min(pairs.len());
    let val_set: std::collections::HashSet<usize> =
        indices[..val_count].iter().copied().collect();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, pair) in pairs.into_iter().enumerate() {
        if val_set.contains(&i) {
            val.push(pair);
        } else {
            train.push(pair);
        }
    }
    (train, val)
}
