//! Keypoint kinematics: window sampling, flow, velocity, acceleration.
//!
//! All features are computed from pose coordinates alone, over a window
//! that has already been sampled at a stride. The interval `d_t` is
//! measured in sampled steps. Boundary policy: flow replicates the edge
//! frame; a velocity or acceleration step that would reach outside the
//! window contributes 0.

use crate::mat::Mat;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("window of {window} frames exceeds sequence length {frames}")]
    WindowOutOfBounds { window: usize, frames: usize },
    #[error("interval must be >= 1, got {0}")]
    BadInterval(usize),
    #[error("invalid pose sequence: {0}")]
    InvalidSequence(String),
}

/// Sequence metadata carried through the pipeline and the pose file format.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMeta {
    pub id: String,
    pub source: String,
    pub fps: f64,
    pub joint_names: Vec<String>,
    pub joint_groups: Vec<String>,
}

impl SequenceMeta {
    pub fn generic(id: &str, keypoints: usize) -> Self {
        Self {
            id: id.to_string(),
            source: "unknown".to_string(),
            fps: 25.0,
            joint_names: (0..keypoints).map(|k| format!("j{k}")).collect(),
            joint_groups: vec!["all".to_string(); keypoints],
        }
    }
}

/// T frames of K keypoints with D coordinates each, plus per-joint
/// visibility. The universal input/output record of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub keypoints: usize,
    pub dims: usize,
    /// Row-major \[t]\[k]\[d].
    pub coords: Vec<f64>,
    /// Row-major \[t]\[k].
    pub visibility: Vec<bool>,
    pub meta: SequenceMeta,
}

impl PoseSequence {
    pub fn new(
        keypoints: usize,
        dims: usize,
        coords: Vec<f64>,
        visibility: Vec<bool>,
        meta: SequenceMeta,
    ) -> Result<Self, KinematicsError> {
        let seq = Self { keypoints, dims, coords, visibility, meta };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if self.keypoints == 0 {
            return Err(KinematicsError::InvalidSequence("keypoints must be >= 1".into()));
        }
        if !(self.dims == 2 || self.dims == 3) {
            return Err(KinematicsError::InvalidSequence(format!(
                "dims must be 2 or 3, got {}",
                self.dims
            )));
        }
        let per_frame = self.keypoints * self.dims;
        if self.coords.is_empty() || !self.coords.len().is_multiple_of(per_frame) {
            return Err(KinematicsError::InvalidSequence(format!(
                "coords length {} is not a positive multiple of K*D = {per_frame}",
                self.coords.len()
            )));
        }
        let frames = self.coords.len() / per_frame;
        if self.visibility.len() != frames * self.keypoints {
            return Err(KinematicsError::InvalidSequence(format!(
                "visibility length {} != T*K = {}",
                self.visibility.len(),
                frames * self.keypoints
            )));
        }
        for t in 0..frames {
            for k in 0..self.keypoints {
                if self.vis(t, k) {
                    for d in 0..self.dims {
                        if !self.get(t, k, d).is_finite() {
                            return Err(KinematicsError::InvalidSequence(format!(
                                "non-finite coordinate at frame {t}, joint {k}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.coords.len() / (self.keypoints * self.dims)
    }

    /// Feature width K*D of one flattened frame.
    pub fn pose_width(&self) -> usize {
        self.keypoints * self.dims
    }

    pub fn get(&self, t: usize, k: usize, d: usize) -> f64 {
        self.coords[(t * self.keypoints + k) * self.dims + d]
    }

    pub fn set(&mut self, t: usize, k: usize, d: usize, v: f64) {
        self.coords[(t * self.keypoints + k) * self.dims + d] = v;
    }

    pub fn vis(&self, t: usize, k: usize) -> bool {
        self.visibility[t * self.keypoints + k]
    }

    pub fn set_vis(&mut self, t: usize, k: usize, v: bool) {
        self.visibility[t * self.keypoints + k] = v;
    }

    /// Owned sub-sequence of `len` frames starting at `start`.
    pub fn slice(&self, start: usize, len: usize) -> Result<PoseSequence, KinematicsError> {
        if start + len > self.frames() {
            return Err(KinematicsError::WindowOutOfBounds {
                window: start + len,
                frames: self.frames(),
            });
        }
        let w = self.pose_width();
        Ok(PoseSequence {
            keypoints: self.keypoints,
            dims: self.dims,
            coords: self.coords[start * w..(start + len) * w].to_vec(),
            visibility: self.visibility[start * self.keypoints..(start + len) * self.keypoints]
                .to_vec(),
            meta: self.meta.clone(),
        })
    }

    /// Frames \[start, start+len) flattened to a len×(K·D) matrix.
    pub fn flat_frames(&self, start: usize, len: usize) -> Mat {
        let w = self.pose_width();
        Mat::from_vec(len, w, self.coords[start * w..(start + len) * w].to_vec())
    }

    /// Visibility flags for frames \[start, start+len), row-major T×K.
    pub fn vis_frames(&self, start: usize, len: usize) -> Vec<bool> {
        self.visibility[start * self.keypoints..(start + len) * self.keypoints].to_vec()
    }
}

/// Velocity differencing direction of Eq-style first derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityDirection {
    /// v_t = (P_t - P_{t-d_t}) / d_t
    Prev,
    /// v_t = (P_{t+d_t} - P_t) / d_t
    Next,
}

/// Flow, velocity, and acceleration derived from one sampled window.
#[derive(Debug, Clone)]
pub struct KinematicFeatures {
    pub flow: Mat,
    pub velocity_prev: Mat,
    pub velocity_next: Mat,
    /// Second difference of the selected velocity direction.
    pub acceleration: Mat,
    /// Neighbor frames used by the embedding: P_{t-d_t} with edge replication.
    pub prev_poses: Mat,
    /// P_{t+d_t} with edge replication.
    pub next_poses: Mat,
    pub interval: usize,
}

impl KinematicFeatures {
    /// All features of a sampled window at interval `d_t`.
    pub fn compute(
        sampled: &Mat,
        d_t: usize,
        direction: VelocityDirection,
    ) -> Result<Self, KinematicsError> {
        if d_t == 0 {
            return Err(KinematicsError::BadInterval(d_t));
        }
        let velocity_prev = compute_velocity(sampled, d_t, VelocityDirection::Prev)?;
        let velocity_next = compute_velocity(sampled, d_t, VelocityDirection::Next)?;
        let selected = match direction {
            VelocityDirection::Prev => &velocity_prev,
            VelocityDirection::Next => &velocity_next,
        };
        let acceleration = compute_acceleration(selected, d_t)?;
        Ok(Self {
            flow: compute_flow(sampled, d_t)?,
            prev_poses: shifted_poses(sampled, -(d_t as isize)),
            next_poses: shifted_poses(sampled, d_t as isize),
            velocity_prev,
            velocity_next,
            acceleration,
            interval: d_t,
        })
    }
}

/// Poses at frames {0, N, 2N, ...} of the first `window` frames, flattened
/// per frame, plus the window-local frame indices they came from.
pub fn sample_window(
    seq: &PoseSequence,
    window: usize,
    interval: usize,
) -> Result<(Mat, Vec<usize>), KinematicsError> {
    if interval == 0 {
        return Err(KinematicsError::BadInterval(interval));
    }
    if window == 0 || window > seq.frames() {
        return Err(KinematicsError::WindowOutOfBounds { window, frames: seq.frames() });
    }
    let samples = window / interval;
    if samples == 0 {
        return Err(KinematicsError::WindowOutOfBounds { window, frames: seq.frames() });
    }
    let indices: Vec<usize> = (0..samples).map(|i| i * interval).collect();
    let w = seq.pose_width();
    let mut data = Vec::with_capacity(indices.len() * w);
    for &t in &indices {
        data.extend_from_slice(seq.flat_frames(t, 1).data());
    }
    Ok((Mat::from_vec(indices.len(), w, data), indices))
}

fn clamp_index(t: isize, len: usize) -> usize {
    t.clamp(0, len as isize - 1) as usize
}

/// Rows shifted by `offset` sampled steps with edge replication.
fn shifted_poses(p: &Mat, offset: isize) -> Mat {
    Mat::from_fn(p.rows(), p.cols(), |t, c| {
        p.get(clamp_index(t as isize + offset, p.rows()), c)
    })
}

/// Centered three-point moving average with edge replication:
/// flow_t = (P_t + P_{t+d_t} + P_{t-d_t}) / 3.
pub fn compute_flow(p: &Mat, d_t: usize) -> Result<Mat, KinematicsError> {
    if d_t == 0 {
        return Err(KinematicsError::BadInterval(d_t));
    }
    let rows = p.rows();
    Ok(Mat::from_fn(rows, p.cols(), |t, c| {
        let prev = p.get(clamp_index(t as isize - d_t as isize, rows), c);
        let next = p.get(clamp_index(t as isize + d_t as isize, rows), c);
        (p.get(t, c) + next + prev) / 3.0
    }))
}

/// First difference over `d_t` sampled steps. Steps that would reach
/// outside the window yield 0.
pub fn compute_velocity(
    p: &Mat,
    d_t: usize,
    direction: VelocityDirection,
) -> Result<Mat, KinematicsError> {
    if d_t == 0 {
        return Err(KinematicsError::BadInterval(d_t));
    }
    let rows = p.rows();
    let step = d_t as f64;
    Ok(Mat::from_fn(rows, p.cols(), |t, c| match direction {
        VelocityDirection::Prev => {
            if t >= d_t {
                (p.get(t, c) - p.get(t - d_t, c)) / step
            } else {
                0.0
            }
        }
        VelocityDirection::Next => {
            if t + d_t < rows {
                (p.get(t + d_t, c) - p.get(t, c)) / step
            } else {
                0.0
            }
        }
    }))
}

/// Second difference: a_t = (v_t - v_{t-d_t}) / d_t, with boundary steps 0.
/// `v` must have been produced with the same `d_t`.
pub fn compute_acceleration(v: &Mat, d_t: usize) -> Result<Mat, KinematicsError> {
    if d_t == 0 {
        return Err(KinematicsError::BadInterval(d_t));
    }
    let step = d_t as f64;
    Ok(Mat::from_fn(v.rows(), v.cols(), |t, c| {
        if t >= d_t {
            (v.get(t, c) - v.get(t - d_t, c)) / step
        } else {
            0.0
        }
    }))
}
