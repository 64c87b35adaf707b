use crate::error::CliError;
use kinepose::data::load;
use kinepose::metrics;
use std::path::PathBuf;

pub fn run(pred_path: PathBuf, gt_path: PathBuf) -> Result<(), CliError> {
    let pred = load(&pred_path)?;
    let gt = load(&gt_path)?;
    if pred.keypoints != gt.keypoints || pred.dims != gt.dims {
        return Err(CliError::Validation(format!(
            "prediction is K={}, D={} but ground truth is K={}, D={}",
            pred.keypoints, pred.dims, gt.keypoints, gt.dims
        )));
    }
    if pred.frames() != gt.frames() {
        return Err(CliError::Validation(format!(
            "frame counts differ: prediction {} vs ground truth {}",
            pred.frames(),
            gt.frames()
        )));
    }

    let frames = gt.frames();
    let pred_m = pred.flat_frames(0, frames);
    let gt_m = gt.flat_frames(0, frames);
    let report = metrics::evaluate(
        &pred_m,
        &gt_m,
        &gt.visibility,
        gt.keypoints,
        gt.dims,
        &gt.meta.joint_groups,
    );
    super::emit(&render(&report));
    Ok(())
}

fn fmt_score(score: Option<f64>) -> String {
    score.map(|s| format!("{:6.2}", s * 100.0)).unwrap_or_else(|| "     -".to_string())
}

/// Per-group PCK table (one row per threshold, groups as columns, mean
/// last), then MPJPE and Accel.
pub fn render(report: &metrics::MetricReport) -> String {
    let mut out = String::new();
    if let Some(first) = report.pck.first() {
        out.push_str(&format!("{:>9}", ""));
        for (name, _, _) in &first.per_group {
            out.push_str(&format!(" {name:>6}"));
        }
        out.push_str("   Avg.\n");
    }
    for row in &report.pck {
        out.push_str(&format!("PCK@{:<5}", row.threshold));
        for (_, score, _) in &row.per_group {
            out.push_str(&format!(" {}", fmt_score(*score)));
        }
        out.push_str(&format!(" {}\n", fmt_score(row.mean)));
    }
    let fmt_abs = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".to_string());
    out.push_str(&format!("MPJPE {}\n", fmt_abs(report.mpjpe)));
    out.push_str(&format!("Accel {}\n", fmt_abs(report.accel)));
    out.push_str(&format!(
        "evaluated_joints {} skipped_frames {}\n",
        report.evaluated_joints, report.skipped_frames
    ));
    out
}
