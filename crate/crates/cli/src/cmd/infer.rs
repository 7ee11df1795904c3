use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use tabseq::experiment::infer;
use tabseq::model::{checkpoint, ModelParams};
use tabseq::postprocess::write_separator_file;
use tabseq::preprocess::{preprocess_stages, GrayImage, PreprocessConfig};
use tabseq::{imageio, par, Axis};

use super::{corpus_images, invalid, required_path, stem};
use crate::ConfigArgs;

#[derive(Args, Debug)]
pub struct InferArgs {
    /// Image files (PNG, PGM, ...).
    images: Vec<PathBuf>,
    /// Also process every image listed in this corpus manifest.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Checkpoint of a row model.
    #[arg(long)]
    row_checkpoint: Option<PathBuf>,
    /// Checkpoint of a column model.
    #[arg(long)]
    column_checkpoint: Option<PathBuf>,
    /// Output directory for `<stem>.<axis>.sep` files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write `<stem>.overlay.png` with the separators drawn in.
    #[arg(long)]
    overlay: bool,
    /// Also write every preprocessing stage as `<stem>.<axis>.<stage>.png`.
    #[arg(long)]
    dump_stages: bool,
    #[command(flatten)]
    cfg: ConfigArgs,
}

/// Path of the separator file for `image_stem` and `axis` in `dir`.
pub fn separator_path(dir: &Path, image_stem: &str, axis: Axis) -> PathBuf {
    dir.join(format!("{image_stem}.{axis}.sep"))
}

fn load_model(path: &Path, flag_axis: Axis, pre: &PreprocessConfig) -> Result<ModelParams> {
    let m = checkpoint::load(path)?;
    if m.axis() != flag_axis {
        return Err(invalid(format!(
            "{} holds a {} model but was passed as the {} checkpoint",
            path.display(),
            m.axis(),
            flag_axis
        ))
        .into());
    }
    if m.input_dim() != pre.features(flag_axis) {
        return Err(invalid(format!(
            "{} expects {} input features but the preprocessing config yields {} \
             (pass the training config with --config)",
            path.display(),
            m.input_dim(),
            pre.features(flag_axis)
        ))
        .into());
    }
    Ok(m)
}

fn write_stages(out: &Path, name: &str, img: &GrayImage, axis: Axis, pre: &PreprocessConfig) -> tabseq::Result<()> {
    let st = preprocess_stages(img, axis, pre)?;
    for (stage, bin) in [
        ("binarized", &st.binarized),
        ("cleaned", &st.cleaned),
        ("resized", &st.resized),
        ("dilated", &st.dilated),
    ] {
        imageio::save_png(&out.join(format!("{name}.{axis}.{stage}.png")), &bin.to_gray())?;
    }
    Ok(())
}

pub fn run(a: &InferArgs) -> Result<()> {
    let cfg = a.cfg.resolve(&[])?;
    let pre = cfg.preprocess(PreprocessConfig::default())?;
    let out = required_path(&a.out, &cfg, "out")?;

    let mut models = Vec::new();
    for (flag, axis) in [(&a.row_checkpoint, Axis::Row), (&a.column_checkpoint, Axis::Column)] {
        if let Some(path) = flag {
            models.push(load_model(path, axis, &pre)?);
        }
    }
    if models.is_empty() {
        return Err(invalid("pass --row-checkpoint and/or --column-checkpoint").into());
    }

    let mut paths = a.images.clone();
    if let Some(dir) = a.corpus.clone().or_else(|| cfg.path("corpus")) {
        paths.extend(corpus_images(&dir)?);
    }
    if paths.is_empty() {
        return Err(invalid("no input images").into());
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = paths.iter().map(|p| stem(p)).find(|s| !seen.insert(s.clone())) {
        return Err(invalid(format!("two inputs share the file stem `{dup}`")).into());
    }
    let images = par::map(&paths, |p| imageio::load_gray(p))
        .into_iter()
        .collect::<tabseq::Result<Vec<_>>>()?;

    let written = par::map_range(paths.len(), |i| -> tabseq::Result<usize> {
        let (img, name) = (&images[i], stem(&paths[i]));
        let mut drawn = Vec::new();
        let mut count = 0;
        for m in &models {
            let axis = m.axis();
            let seps = infer(img, m, &pre)?;
            let original = match axis {
                Axis::Column => img.width(),
                Axis::Row => img.height(),
            };
            write_separator_file(&separator_path(&out, &name, axis), &seps, pre.timesteps(axis), original)?;
            if a.dump_stages {
                write_stages(&out, &name, img, axis, &pre)?;
            }
            count += seps.len();
            drawn.push((axis, seps.positions_original));
        }
        if a.overlay {
            imageio::save_overlay(&out.join(format!("{name}.overlay.png")), img, &drawn)?;
        }
        Ok(count)
    });
    let total: usize = written.into_iter().collect::<tabseq::Result<Vec<_>>>()?.iter().sum();
    println!(
        "wrote separators for {} images ({} separators) to {}",
        paths.len(),
        total,
        out.display()
    );
    Ok(())
}
