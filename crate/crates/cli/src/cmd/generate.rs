use crate::error::CliError;
use kinepose::config::{apply_synthetic_key, synthetic_pairs};
use kinepose::data::{generate, save, SyntheticSpec};
use std::fs;
use std::path::PathBuf;

pub fn run(
    spec_file: Option<PathBuf>,
    out: PathBuf,
    overrides: Vec<String>,
) -> Result<(), CliError> {
    let mut spec = SyntheticSpec::default();
    for (key, value) in super::layered_pairs(spec_file.as_deref(), &overrides)? {
        apply_synthetic_key(&mut spec, &key, &value)?;
    }
    let pairs = generate(&spec)?;

    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    for pair in &pairs {
        let id = &pair.clean.meta.id;
        save(&pair.clean, &out.join(format!("{id}.clean.pose")))?;
        save(&pair.corrupted, &out.join(format!("{id}.noisy.pose")))?;
    }

    // Echo the effective spec so a run is reproducible from its manifest.
    let mut manifest = String::from("# generation manifest\n");
    for (k, v) in synthetic_pairs(&spec) {
        manifest.push_str(&format!("{k} = {v}\n"));
    }
    manifest.push_str(&format!("# wrote {} sequence pairs\n", pairs.len()));
    super::write_file(&out.join("manifest.txt"), &manifest)?;

    super::emit(&format!(
        "generated {} pairs ({} frames, {} keypoints, {}d) into {}\n",
        pairs.len(),
        spec.frames,
        spec.keypoints,
        spec.dims,
        out.display()
    
    ));
    Ok(())
}
