use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{format, Dataset, DatasetMetadata, DemoError, SynthTaskSpec, WildGroundTruth};

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

/// JSON index of a dataset directory. Trajectory paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub generator_version: String,
    pub seed: u64,
    pub n_points: usize,
    pub in_scene: String,
    pub in_the_wild: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<SynthTaskSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ground_truth: Vec<WildGroundTruth>,
}

/// Writes `in_scene.aina`, `wild/wild_XXX.aina` and the manifest under
/// `dir`, returning the manifest path.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf, DemoError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("wild"))?;
    let in_scene = "in_scene.aina".to_string();
    format::save(&dataset.in_scene, dir.join(&in_scene))?;
    let mut wild = Vec::with_capacity(dataset.in_the_wild.len());
    for (i, t) in dataset.in_the_wild.iter().enumerate() {
        let rel = format!("wild/wild_{i:03}.aina");
        format::save(t, dir.join(&rel))?;
        wild.push(rel);
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        generator_version: dataset.metadata.generator_version.clone(),
        seed: dataset.metadata.seed,
        n_points: dataset.n_points,
        in_scene,
        in_the_wild: wild,
        task: dataset.metadata.task.clone(),
        ground_truth: dataset.metadata.ground_truth.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
}

/// Loads a dataset from a manifest file or a directory containing one.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DemoError> {
    let path = path.as_ref();
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let manifest: DatasetManifest = serde_json::from_slice(&std::fs::read(&manifest_path)?)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(DemoError::UnsupportedVersion(manifest.version as u16));
    }
    let in_scene = format::load(base.join(&manifest.in_scene))?;
    let in_the_wild = manifest
        .in_the_wild
        .iter()
        .map(|p| format::load(base.join(p)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        in_scene,
        in_the_wild,
        n_points: manifest.n_points,
        metadata: DatasetMetadata {
            seed: manifest.seed,
            generator_version: manifest.generator_version,
            task: manifest.task,
            ground_truth: manifest.ground_truth,
        },
    })
}
