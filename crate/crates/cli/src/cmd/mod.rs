pub mod benchmark;
pub mod eval;
pub mod gradcheck;
pub mod infer;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::Result;
use tabseq::eval::GtFile;
use tabseq::imageio;
use tabseq::par;
use tabseq::preprocess::GrayImage;
use tabseq::synth::{gt_path_for, read_manifest};
use tabseq::Error;

use crate::config::RunConfig;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

/// A path given by flag or, failing that, by config key.
pub(crate) fn required_path(flag: &Option<PathBuf>, cfg: &RunConfig, key: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.path(key))
        .ok_or_else(|| invalid(format!("--{key} is required")).into())
}

pub(crate) fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// One manifest entry with its image and ground truth loaded.
pub(crate) struct CorpusItem {
    pub image_path: PathBuf,
    pub image: GrayImage,
    pub gt: GtFile,
}

/// Image paths listed in a corpus manifest, in manifest order.
pub(crate) fn corpus_images(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(read_manifest(dir)?
        .into_iter()
        .map(|e| dir.join(e.file))
        .collect())
}

/// Loads every image and ground-truth file of a corpus. Missing files are
/// all reported together before anything else happens.
pub(crate) fn load_corpus(dir: &Path) -> Result<Vec<CorpusItem>> {
    let images = corpus_images(dir)?;
    let missing: Vec<String> = images
        .iter()
        .flat_map(|p| [p.clone(), gt_path_for(p)])
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(invalid(format!("corpus files missing:\n  {}", missing.join("\n  "))).into());
    }
    if images.is_empty() {
        return Err(invalid(format!("corpus {} lists no images", dir.display())).into());
    }
    par::map(&images, |p| -> tabseq::Result<CorpusItem> {
        Ok(CorpusItem {
            image_path: p.clone(),
            image: imageio::load_gray(p)?,
            gt: GtFile::load(&gt_path_for(p))?,
        })
    })
    .into_iter()
    .map(|r| r.map_err(Into::into))
    .collect()
}
