//! Training objective: visibility-masked weighted top-k loss, per-joint
//! online mutual learning, and their weighted total.
//!
//! Per-joint error is the mean over visible frames of the L1 norm of the
//! coordinate difference. The online term compares the refined and final
//! predictions joint by joint against ground truth; whichever is closer
//! becomes a fixed (detached) target for the other, so the target side of
//! each joint receives no gradient from that joint's online term.

use crate::tensor::{DiffTensor, TensorError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("loss configuration: {0}")]
    InvalidConfig(String),
    #[error("visibility has {got} entries, expected T*K = {want}")]
    VisibilityLength { got: usize, want: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Distance used by the online term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnlineNorm {
    L1,
    /// Sum of the L1 and L2 distances with the same target selection.
    L1PlusL2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Weight λ of the top-k term.
    pub lambda_topk: f64,
    /// Number of hardest joints N_k tracked by the top-k term.
    pub n_topk: usize,
    /// Weight λ_s of the final-prediction error in the total.
    pub lambda_s: f64,
    pub norm: OnlineNorm,
}

impl LossConfig {
    /// Defaults for a skeleton of `n_joints`: λ = 0.5 with N_k half the
    /// joints, matching the normalization of the first term.
    pub fn for_joints(n_joints: usize) -> Self {
        Self {
            lambda_topk: 0.5,
            n_topk: (n_joints / 2).max(1),
            lambda_s: 1.0,
            norm: OnlineNorm::L1,
        }
    }

    pub fn validate(&self, n_joints: usize) -> Result<(), LossError> {
        if self.n_topk == 0 || self.n_topk > n_joints {
            return Err(LossError::InvalidConfig(format!(
                "n_topk must be in 1..={n_joints}, got {}",
                self.n_topk
            )));
        }
        if self.lambda_topk < 0.0 {
            return Err(LossError::InvalidConfig(format!(
                "lambda_topk must be >= 0, got {}",
                self.lambda_topk
            )));
        }
        if self.lambda_s <= 0.0 {
            return Err(LossError::InvalidConfig(format!(
                "lambda_s must be > 0, got {}",
                self.lambda_s
            )));
        }
        Ok(())
    }
}

/// Which prediction acts as the fixed target at one joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnlineTarget {
    /// The final prediction is closer to ground truth; it teaches the
    /// refined pose.
    Final,
    /// The refined pose is closer (or tied); it teaches the final
    /// prediction.
    Refined,
}

/// Weighted loss of one prediction against ground truth.
pub struct WeightedLoss {
    pub loss: DiffTensor,
    /// Per-joint error e_j; 0 for joints invisible in every frame.
    pub per_joint: Vec<f64>,
    /// Joints with at least one visible frame.
    pub evaluated: Vec<bool>,
    /// Joint ids selected by the top-k term, hardest first.
    pub topk: Vec<usize>,
    /// True when no joint was visible anywhere; the loss is then 0.
    pub all_invisible: bool,
}

/// Online mutual learning term.
pub struct OnlineLoss {
    pub loss: DiffTensor,
    /// Per-joint target choice; `None` where the joint was never visible.
    pub targets: Vec<Option<OnlineTarget>>,
}

/// Everything the trainer records about one loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub weighted_refined: f64,
    pub weighted_final: f64,
    pub online: f64,
    pub total: f64,
    pub per_joint_refined: Vec<f64>,
    pub per_joint_final: Vec<f64>,
    pub topk_refined: Vec<usize>,
    pub topk_final: Vec<usize>,
    pub all_invisible: bool,
}

fn check_shapes(
    pred: &DiffTensor,
    gt: &DiffTensor,
    vis: &[bool],
    keypoints: usize,
    dims: usize,
) -> Result<usize, LossError> {
    pred.same_shape(gt, "loss")?;
    let (t, w) = pred.dims2("loss")?;
    if w != keypoints * dims {
        return Err(TensorError::ShapeMismatch {
            op: "loss",
            lhs: vec![t, w],
            rhs: vec![t, keypoints * dims],
        }
        .into());
    }
    if vis.len() != t * keypoints {
        return Err(LossError::VisibilityLength { got: vis.len(), want: t * keypoints });
    }
    Ok(t)
}

/// T×(K·D) 0/1 mask replicating per-joint visibility over coordinates.
fn visibility_mask(vis: &[bool], frames: usize, keypoints: usize, dims: usize) -> DiffTensor {
    let mut data = Vec::with_capacity(frames * keypoints * dims);
    for t in 0..frames {
        for k in 0..keypoints {
            let on = if vis[t * keypoints + k] { 1.0 } else { 0.0 };
            data.extend(std::iter::repeat_n(on, dims));
        }
    }
    DiffTensor::constant(data, &[frames, keypoints * dims])
}

fn visible_counts(vis: &[bool], frames: usize, keypoints: usize) -> Vec<usize> {
    (0..keypoints)
        .map(|k| (0..frames).filter(|&t| vis[t * keypoints + k]).count())
        .collect()
}

/// Per-joint masked mean L1 errors as graph nodes. Joints with no visible
/// frame yield `None`.
fn per_joint_l1(
    a: &DiffTensor,
    b: &DiffTensor,
    vis: &[bool],
    frames: usize,
    keypoints: usize,
    dims: usize,
) -> Result<Vec<Option<DiffTensor>>, LossError> {
    let counts = visible_counts(vis, frames, keypoints);
    let mask = visibility_mask(vis, frames, keypoints, dims);
    let masked = a.sub(b)?.abs().mul(&mask)?;
    let mut out = Vec::with_capacity(keypoints);
    for (k, &count) in counts.iter().enumerate() {
        if count == 0 {
            out.push(None);
        } else {
            let e = masked.slice_cols(k * dims, dims)?.sum().scale(1.0 / count as f64);
            out.push(Some(e));
        }
    }
    Ok(out)
}

/// Per-joint masked mean L2 (Euclidean per frame) errors as graph nodes.
fn per_joint_l2(
    a: &DiffTensor,
    b: &DiffTensor,
    vis: &[bool],
    frames: usize,
    keypoints: usize,
    dims: usize,
) -> Result<Vec<Option<DiffTensor>>, LossError> {
    let counts = visible_counts(vis, frames, keypoints);
    let mask = visibility_mask(vis, frames, keypoints, dims);
    let diff = a.sub(b)?;
    let squared = diff.mul(&diff)?.mul(&mask)?;
    let ones = DiffTensor::constant(vec![1.0; dims], &[dims, 1]);
    let mut out = Vec::with_capacity(keypoints);
    for (k, &count) in counts.iter().enumerate() {
        if count == 0 {
            out.push(None);
        } else {
            // Row sums over the joint's coordinates, then per-frame norms.
            let norms = squared.slice_cols(k * dims, dims)?.matmul(&ones)?.sqrt();
            out.push(Some(norms.sum().scale(1.0 / count as f64)));
        }
    }
    Ok(out)
}

fn sum_nodes(nodes: &[DiffTensor]) -> DiffTensor {
    let mut acc = nodes[0].clone();
    for n in &nodes[1..] {
        acc = acc.add(n).expect("scalar add");
    }
    acc
}

/// Hardest-first joint ids by error value, ties broken by lower id.
fn topk_indices(per_joint: &[Option<f64>], k: usize) -> Vec<usize> {
    let mut present: Vec<(usize, f64)> = per_joint
        .iter()
        .enumerate()
        .filter_map(|(j, e)| e.map(|e| (j, e)))
        .collect();
    present.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    present.truncate(k);
    present.into_iter().map(|(j, _)| j).collect()
}

/// Weighted top-k loss of Eq-style form: mean per-joint error plus a
/// λ-weighted mean over the N_k hardest joints. Joints invisible in all
/// frames contribute 0 and never enter the top-k set.
pub fn weighted_loss(
    pred: &DiffTensor,
    gt: &DiffTensor,
    vis: &[bool],
    cfg: &LossConfig,
    keypoints: usize,
    dims: usize,
) -> Result<WeightedLoss, LossError> {
    cfg.validate(keypoints)?;
    let frames = check_shapes(pred, gt, vis, keypoints, dims)?;
    let errors = per_joint_l1(pred, gt, vis, frames, keypoints, dims)?;

    let evaluated: Vec<bool> = errors.iter().map(|e| e.is_some()).collect();
    if !evaluated.iter().any(|&e| e) {
        return Ok(WeightedLoss {
            loss: DiffTensor::scalar(0.0),
            per_joint: vec![0.0; keypoints],
            evaluated,
            topk: Vec::new(),
            all_invisible: true,
        });
    }

    let per_joint: Vec<f64> = errors
        .iter()
        .map(|e| e.as_ref().map(|t| t.item()).unwrap_or(0.0))
        .collect();
    let values: Vec<Option<f64>> = errors
        .iter()
        .map(|e| e.as_ref().map(|t| t.item()))
        .collect();
    let topk = topk_indices(&values, cfg.n_topk);

    let present: Vec<DiffTensor> = errors.iter().flatten().cloned().collect();
    let mean_term = sum_nodes(&present).scale(1.0 / keypoints as f64);
    let selected: Vec<DiffTensor> = topk
        .iter()
        .map(|&j| errors[j].as_ref().unwrap().clone())
        .collect();
    let topk_term = sum_nodes(&selected).scale(cfg.lambda_topk / cfg.n_topk as f64);
    let loss = mean_term.add(&topk_term)?;

    Ok(WeightedLoss { loss, per_joint, evaluated, topk, all_invisible: false })
}

/// Online mutual learning over the sampled frames shared by both
/// predictions. For each visible joint, the prediction closer to ground
/// truth becomes a detached target; the L1 (optionally plus L2) distance
/// to it is summed over joints.
pub fn online_loss(
    refined: &DiffTensor,
    final_sampled: &DiffTensor,
    gt: &DiffTensor,
    vis: &[bool],
    cfg: &LossConfig,
    keypoints: usize,
    dims: usize,
) -> Result<OnlineLoss, LossError> {
    let frames = check_shapes(refined, gt, vis, keypoints, dims)?;
    check_shapes(final_sampled, gt, vis, keypoints, dims)?;

    let err_refined = per_joint_l1(refined, gt, vis, frames, keypoints, dims)?;
    let err_final = per_joint_l1(final_sampled, gt, vis, frames, keypoints, dims)?;

    let refined_frozen = refined.detach();
    let final_frozen = final_sampled.detach();

    // Learner-side distances, lazily shared across joints.
    let l1_refined_learns =
        per_joint_l1(refined, &final_frozen, vis, frames, keypoints, dims)?;
    let l1_final_learns =
        per_joint_l1(final_sampled, &refined_frozen, vis, frames, keypoints, dims)?;
    let (l2_refined_learns, l2_final_learns) = match cfg.norm {
        OnlineNorm::L1 => (None, None),
        OnlineNorm::L1PlusL2 => (
            Some(per_joint_l2(refined, &final_frozen, vis, frames, keypoints, dims)?),
            Some(per_joint_l2(final_sampled, &refined_frozen, vis, frames, keypoints, dims)?),
        ),
    };

    let mut targets = Vec::with_capacity(keypoints);
    let mut terms: Vec<DiffTensor> = Vec::new();
    for j in 0..keypoints {
        let (Some(ef), Some(er)) = (&err_final[j], &err_refined[j]) else {
            targets.push(None);
            continue;
        };
        if ef.item() < er.item() {
            targets.push(Some(OnlineTarget::Final));
            terms.push(l1_refined_learns[j].as_ref().unwrap().clone());
            if let Some(l2) = &l2_refined_learns {
                terms.push(l2[j].as_ref().unwrap().clone());
            }
        } else {
            targets.push(Some(OnlineTarget::Refined));
            terms.push(l1_final_learns[j].as_ref().unwrap().clone());
            if let Some(l2) = &l2_final_learns {
                terms.push(l2[j].as_ref().unwrap().clone());
            }
        }
    }

    // Per-joint terms carry the same 1/N_j weighting as the first term of
    // the weighted loss, keeping the online term on the scale of its
    // siblings in the total.
    let loss = if terms.is_empty() {
        DiffTensor::scalar(0.0)
    } else {
        sum_nodes(&terms).scale(1.0 / keypoints as f64)
    };
    Ok(OnlineLoss { loss, targets })
}

/// Total objective: L_w(G, P') + λ_s · L_w(G, P_s) + L_O(P', P_s).
/// The refined pose is supervised at the sampled frames; the final pose
/// at every window frame; the online term on the sampled subset where
/// both exist.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    refined: &DiffTensor,
    final_poses: &DiffTensor,
    gt_sampled: &DiffTensor,
    gt_full: &DiffTensor,
    vis_sampled: &[bool],
    vis_full: &[bool],
    sampled_indices: &[usize],
    cfg: &LossConfig,
    keypoints: usize,
    dims: usize,
) -> Result<(DiffTensor, LossReport), LossError> {
    let refined_term = weighted_loss(refined, gt_sampled, vis_sampled, cfg, keypoints, dims)?;
    let final_term = weighted_loss(final_poses, gt_full, vis_full, cfg, keypoints, dims)?;
    let final_sampled = final_poses.gather_rows(sampled_indices)?;
    let online_term =
        online_loss(refined, &final_sampled, gt_sampled, vis_sampled, cfg, keypoints, dims)?;

    let total = refined_term
        .loss
        .add(&final_term.loss.scale(cfg.lambda_s))?
        .add(&online_term.loss)?;

    let report = LossReport {
        weighted_refined: refined_term.loss.item(),
        weighted_final: final_term.loss.item(),
        online: online_term.loss.item(),
        total: total.item(),
        per_joint_refined: refined_term.per_joint,
        per_joint_final: final_term.per_joint,
        topk_refined: refined_term.topk,
        topk_final: final_term.topk,
        all_invisible: refined_term.all_invisible && final_term.all_invisible,
    };
    Ok((total, report))
}
