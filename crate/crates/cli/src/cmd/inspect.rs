use crate::error::CliError;
use kinepose::config::train_pairs;
use kinepose::data::load;
use kinepose::trainer::Checkpoint;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

pub fn run(path: PathBuf) -> Result<(), CliError> {
    let head = {
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        text.lines().next().unwrap_or_default().to_string()
    };
    if head.starts_with("posefile") {
        inspect_posefile(path)
    } else if head.starts_with("checkpoint") {
        inspect_checkpoint(path)
    } else {
        Err(CliError::Validation(format!(
            "{}: neither a pose file nor a checkpoint (first line: '{head}')",
            path.display()
        )))
    }
}

fn inspect_posefile(path: PathBuf) -> Result<(), CliError> {
    let seq = load(&path)?;
    let mut out = String::new();
    let _ = writeln!(out, "pose file {}", path.display());
    let _ = writeln!(out, "  id        {}", seq.meta.id);
    let _ = writeln!(out, "  source    {}", seq.meta.source);
    let _ = writeln!(out, "  frames    {}", seq.frames());
    let _ = writeln!(out, "  keypoints {} ({}d)", seq.keypoints, seq.dims);
    let _ = writeln!(out, "  fps       {}", seq.meta.fps);
    let _ = writeln!(out, "  joints    {}", seq.meta.joint_names.join(" "));
    let _ = writeln!(out, "  groups    {}", seq.meta.joint_groups.join(" "));
    let visible = seq.visibility.iter().filter(|v| **v).count();
    let _ = writeln!(
        out,
        "  visibility {:.1}% ({} of {})",
        100.0 * visible as f64 / seq.visibility.len() as f64,
        visible,
        seq.visibility.len()
    );
    super::emit(&out);
    Ok(())
}

fn inspect_checkpoint(path: PathBuf) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(&path)?;
    let mut out = String::new();
    let _ = writeln!(out, "checkpoint {}", path.display());
    let _ = writeln!(out, "  epochs completed {}", ckpt.epoch);
    let _ = writeln!(out, "  global steps     {}", ckpt.global_step);
    let _ = writeln!(out, "  skipped steps    {}", ckpt.skipped);
    let total: usize = ckpt.params.iter().map(|(_, _, v)| v.len()).sum();
    let _ = writeln!(out, "  parameters       {} tensors, {total} values", ckpt.params.len());
    for (name, shape, values) in &ckpt.params {
        let _ = writeln!(out, "    {name:<28} {shape:?} ({})", values.len());
    }
    let _ = writeln!(out, "  config:");
    for (k, v) in train_pairs(&ckpt.config) {
        let _ = writeln!(out, "    {k} = {v}");
    }
    super::emit(&out);
    Ok(())
}
