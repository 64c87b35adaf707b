use crate::error::CliError;
use kinepose::config::{apply_train_config_key, train_pairs};
use kinepose::model::ModelConfig;
use kinepose::trainer::{train, TrainConfig, TrainError};
use std::fs;
use std::path::PathBuf;

pub fn run(
    data: PathBuf,
    out: PathBuf,
    config: Option<PathBuf>,
    overrides: Vec<String>,
) -> Result<(), CliError> {
    let dataset = super::load_dataset(&data)?;
    let (k, d) = (dataset[0].clean.keypoints, dataset[0].clean.dims);

    let mut cfg = TrainConfig::new(ModelConfig::new(k, d));
    for (key, value) in super::layered_pairs(config.as_deref(), &overrides)? {
        apply_train_config_key(&mut cfg, &key, &value)?;
    }
    if cfg.model.keypoints != k || cfg.model.dims != d {
        return Err(CliError::Validation(format!(
            "configured model is K={}, D={} but the dataset has K={k}, D={d}",
            cfg.model.keypoints, cfg.model.dims
        )));
    }

    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let ckpt_path = out.join("checkpoint.ckpt");

    let outcome = match train(&cfg, &dataset) {
        Ok(outcome) => outcome,
        Err(TrainError::Diverged { epoch, last_good }) => {
            // Keep the last healthy state around before bailing out.
            last_good.save(&ckpt_path)?;
            return Err(CliError::Numerical(format!(
                "training diverged at epoch {epoch}; last good checkpoint written to {}",
                ckpt_path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };

    outcome.checkpoint.save(&ckpt_path)?;

    let mut history = String::new();
    for rec in &outcome.history {
        history.push_str(&rec.to_line());
        history.push('\n');
    }
    super::write_file(&out.join("history.txt"), &history)?;

    let mut manifest = String::from("# training manifest\n");
    for (key, value) in train_pairs(&cfg) {
        manifest.push_str(&format!("{key} = {value}\n"));
    }
    manifest.push_str(&format!("# dataset = {}\n", data.display()));
    manifest.push_str(&format!("# sequences = {}\n", dataset.len()));
    super::write_file(&out.join("manifest.txt"), &manifest)?;

    let last = outcome.history.last().expect("at least one epoch");
    super::emit(&format!(
        "trained {} epochs; final loss {:.6}; checkpoint at {}\n",
        outcome.history.len(),
        last.loss_total,
        ckpt_path.display()
    
    ));
    Ok(())
}
