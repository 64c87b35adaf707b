//! Evaluation metrics: PCK at configurable thresholds, mean per-joint
//! position error, and acceleration (jitter) error.

use crate::mat::Mat;

/// PCK scores at one threshold, with a per-group breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct PckResult {
    pub threshold: f64,
    /// Fraction correct over all evaluated joints; `None` when nothing
    /// was evaluated.
    pub mean: Option<f64>,
    /// (group name, score, evaluated joint count) in first-seen order.
    pub per_group: Vec<(String, Option<f64>, usize)>,
}

/// Full evaluation record for one prediction/ground-truth pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub pck: Vec<PckResult>,
    pub mpjpe: Option<f64>,
    pub accel: Option<f64>,
    /// (frame, joint) pairs that entered MPJPE.
    pub evaluated_joints: usize,
    /// Frames skipped by PCK because of a non-positive bbox size.
    pub skipped_frames: usize,
}

/// Conventional PCK thresholds: 20%, 10%, and 5% of the bbox size.
pub const PCK_THRESHOLDS: [f64; 3] = [0.2, 0.1, 0.05];

fn joint_distance(pred: &Mat, gt: &Mat, t: usize, k: usize, dims: usize) -> f64 {
    let mut s = 0.0;
    for d in 0..dims {
        let diff = pred.get(t, k * dims + d) - gt.get(t, k * dims + d);
        s += diff * diff;
    }
    s.sqrt()
}

/// Percentage of correct keypoints: a joint counts as correct when its
/// L2 distance to ground truth is below `threshold * bbox_size\[t\]`.
/// Frames with non-positive bbox are excluded and counted. Returns one
/// result per threshold plus the skipped-frame count.
#[allow(clippy::too_many_arguments)]
pub fn pck(
    pred: &Mat,
    gt: &Mat,
    vis: &[bool],
    bbox_size: &[f64],
    thresholds: &[f64],
    keypoints: usize,
    dims: usize,
    groups: &[String],
) -> (Vec<PckResult>, usize) {
    assert_eq!(pred.rows(), gt.rows());
    assert_eq!(pred.cols(), gt.cols());
    assert_eq!(bbox_size.len(), pred.rows());
    assert_eq!(groups.len(), keypoints);
    let frames = pred.rows();

    let group_order: Vec<String> = {
        let mut seen = Vec::new();
        for g in groups {
            if !seen.contains(g) {
                seen.push(g.clone());
            }
        }
        seen
    };

    let mut skipped = 0usize;
    let mut results = Vec::with_capacity(thresholds.len());
    for &th in thresholds {
        let mut correct_total = 0usize;
        let mut count_total = 0usize;
        let mut correct_group = vec![0usize; group_order.len()];
        let mut count_group = vec![0usize; group_order.len()];
        let mut local_skipped = 0usize;
        for t in 0..frames {
            if bbox_size[t] <= 0.0 {
                local_skipped += 1;
                continue;
            }
            for k in 0..keypoints {
                if !vis[t * keypoints + k] {
                    continue;
                }
                let gi = group_order.iter().position(|g| g == &groups[k]).unwrap();
                let hit = joint_distance(pred, gt, t, k, dims) < th * bbox_size[t];
                count_total += 1;
                count_group[gi] += 1;
                if hit {
                    correct_total += 1;
                    correct_group[gi] += 1;
                }
            }
        }
        skipped = local_skipped;
        let mean = (count_total > 0).then(|| correct_total as f64 / count_total as f64);
        let per_group = group_order
            .iter()
            .enumerate()
            .map(|(gi, name)| {
                let score =
                    (count_group[gi] > 0).then(|| correct_group[gi] as f64 / count_group[gi] as f64);
                (name.clone(), score, count_group[gi])
            })
            .collect();
        results.push(PckResult { threshold: th, mean, per_group });
    }
    (results, skipped)
}

/// Mean per-joint position error over visible (frame, joint) pairs.
/// `None` when nothing is visible.
pub fn mpjpe(pred: &Mat, gt: &Mat, vis: &[bool], keypoints: usize, dims: usize) -> Option<f64> {
    assert_eq!(pred.rows(), gt.rows());
    let frames = pred.rows();
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..frames {
        for k in 0..keypoints {
            if vis[t * keypoints + k] {
                sum += joint_distance(pred, gt, t, k, dims);
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Mean acceleration error: the second difference
/// a_t = P_{t+1} - 2·P_t + P_{t-1} of prediction and ground truth,
/// compared per (frame, joint) by L2 norm and averaged. Undefined below
/// three frames.
pub fn accel_error(pred: &Mat, gt: &Mat, keypoints: usize, dims: usize) -> Option<f64> {
    assert_eq!(pred.rows(), gt.rows());
    let frames = pred.rows();
    if frames < 3 {
        return None;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 1..frames - 1 {
        for k in 0..keypoints {
            let mut s = 0.0;
            for d in 0..dims {
                let c = k * dims + d;
                let ap = pred.get(t + 1, c) - 2.0 * pred.get(t, c) + pred.get(t - 1, c);
                let ag = gt.get(t + 1, c) - 2.0 * gt.get(t, c) + gt.get(t - 1, c);
                s += (ap - ag) * (ap - ag);
            }
            sum += s.sqrt();
            count += 1;
        }
    }
    Some(sum / count as f64)
}

/// Per-frame tight bounding-box diagonal of a pose, the bbox size used
/// for synthetic-data PCK.
pub fn bbox_diagonals(poses: &Mat, keypoints: usize, dims: usize) -> Vec<f64> {
    let frames = poses.rows();
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut diag_sq = 0.0;
        for d in 0..dims {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for k in 0..keypoints {
                let v = poses.get(t, k * dims + d);
                min = min.min(v);
                max = max.max(v);
            }
            diag_sq += (max - min) * (max - min);
        }
        out.push(diag_sq.sqrt());
    }
    out
}

/// Full metric evaluation of a prediction against ground truth, using the
/// ground truth's tight bbox diagonal for PCK.
pub fn evaluate(
    pred: &Mat,
    gt: &Mat,
    vis: &[bool],
    keypoints: usize,
    dims: usize,
    groups: &[String],
) -> MetricReport {
    let bbox = bbox_diagonals(gt, keypoints, dims);
    let (pck_results, skipped) =
        pck(pred, gt, vis, &bbox, &PCK_THRESHOLDS, keypoints, dims, groups);
    let evaluated = vis.iter().filter(|v| **v).count();
    MetricReport {
        pck: pck_results,
        mpjpe: mpjpe(pred, gt, vis, keypoints, dims),
        accel: accel_error(pred, gt, keypoints, dims),
        evaluated_joints: evaluated,
        skipped_frames: skipped,
    }
}
