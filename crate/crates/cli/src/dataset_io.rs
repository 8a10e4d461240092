//! Dataset directory layout: one CSV per trajectory plus a JSON manifest
//! recording the split, seeds, and system parameters.

use koopman_core::error::{Error, Result};
use koopman_core::systems::{Dataset, Split, Trajectory};
use serde::{Deserialize, Serialize};
use std::path::Path;

const MANIFEST_SCHEMA: &str = "dataset-manifest-v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub seed: u64,
    pub dt: f64,
    pub p: usize,
    pub files: Vec<String>,
    pub split: Vec<String>,
    /// Echo of the system parameters that generated the data.
    pub system: String,
    pub notes: Vec<String>,
}

pub fn write_dataset(dataset: &Dataset, system_echo: &str, notes: Vec<String>, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut split = Vec::new();
    for (i, (traj, s)) in dataset
        .trajectories
        .iter()
        .zip(&dataset.split)
        .enumerate()
    {
        let name = format!("traj_{i:03}.csv");
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)?;
        std::fs::write(dir.join(&name), buf)?;
        files.push(name);
        split.push(match s {
            Split::Train => "train".to_string(),
            Split::Test => "test".to_string(),
        });
    }
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        seed: dataset.seed,
        dt: dataset.trajectories.first().map_or(1.0, |t| t.dt),
        p: dataset.dim(),
        files,
        split,
        system: system_echo.to_string(),
        notes,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Parse(format!("manifest encode: {e}")))?;
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<(Dataset, Manifest)> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
    if manifest.schema != MANIFEST_SCHEMA {
        return Err(Error::Parse(format!(
            "unsupported manifest schema {:?}",
            manifest.schema
        )));
    }
    if manifest.files.len() != manifest.split.len() {
        return Err(Error::Parse("manifest files/split length mismatch".into()));
    }
    let mut trajectories = Vec::with_capacity(manifest.files.len());
    let mut split = Vec::with_capacity(manifest.files.len());
    for (file, tag) in manifest.files.iter().zip(&manifest.split) {
        let reader = std::io::BufReader::new(std::fs::File::open(dir.join(file))?);
        trajectories.push(Trajectory::read_csv(reader)?);
        split.push(match tag.as_str() {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(Error::Parse(format!("unknown split tag {other:?}"))),
        });
    }
    Ok((
        Dataset {
            trajectories,
            split,
            seed: manifest.seed,
        },
        manifest,
    ))
}
