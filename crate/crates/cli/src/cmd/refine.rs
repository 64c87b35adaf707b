use crate::error::CliError;
use kinepose::data::{load, save};
use kinepose::trainer::Checkpoint;
use std::path::PathBuf;

pub fn run(
    checkpoint: PathBuf,
    input: PathBuf,
    output: PathBuf,
    stride: usize,
) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(&checkpoint)?;
    let (model, _) = ckpt.restore()?;
    let seq = load(&input)?;
    let mut refined = model.refine_sequence(&seq, stride)?;
    refined.meta.source = format!("{}+refined", seq.meta.source);
    save(&refined, &output)?;
    super::emit(&format!(
        "refined {} frames ({} keypoints) -> {}\n",
        refined.frames(),
        refined.keypoints,
        output.display()
    
    ));
    Ok(())
}
