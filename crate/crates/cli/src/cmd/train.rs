use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use tabseq::experiment::prepare_sample;
use tabseq::model::{checkpoint, init_params, ModelConfig};
use tabseq::preprocess::PreprocessConfig;
use tabseq::train::{train_with, TrainConfig};
use tabseq::{fsutil, par};

use super::{invalid, load_corpus, required_path};
use crate::ConfigArgs;

/// Checkpoint file written into the output directory.
pub const CHECKPOINT_FILE: &str = "model.tsgr";
pub const LOSS_FILE: &str = "loss.csv";
/// Resolved settings, loadable again with `--config`.
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Corpus directory with a manifest.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// row or column.
    #[arg(long)]
    axis: Option<String>,
    /// gru (default) or lstm.
    #[arg(long)]
    cell: Option<String>,
    /// Passes over the corpus (default: 10 for columns, 35 for rows).
    #[arg(long)]
    epochs: Option<String>,
    /// Hidden units per recurrent pass (default: 512 columns, 1024 rows).
    #[arg(long)]
    hidden: Option<String>,
    /// Adam learning rate (default 0.0005).
    #[arg(long = "lr")]
    learning_rate: Option<String>,
    /// Output directory for the checkpoint, loss log and resolved config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

fn resolved_text(model: &ModelConfig, pre: &PreprocessConfig, t: &TrainConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "axis={}", model.axis);
    let _ = writeln!(s, "cell={}", model.cell);
    let _ = writeln!(s, "hidden={}", model.hidden);
    let _ = writeln!(s, "seed={}", t.seed);
    let _ = writeln!(s, "epochs={}", t.epochs);
    let _ = writeln!(s, "learning_rate={}", t.learning_rate);
    let _ = writeln!(s, "beta1={}", t.beta1);
    let _ = writeln!(s, "beta2={}", t.beta2);
    let _ = writeln!(s, "epsilon={}", t.epsilon);
    let _ = writeln!(s, "content_weight={}", t.loss.content_weight);
    let _ = writeln!(s, "whitespace_weight={}", t.loss.whitespace_weight);
    let _ = writeln!(s, "target_width={}", pre.target_width);
    let _ = writeln!(s, "target_height={}", pre.target_height);
    let _ = writeln!(s, "dilation_iterations={}", pre.dilation_iterations);
    let _ = writeln!(s, "column_kernel={}x{}", pre.column_kernel.width, pre.column_kernel.height);
    let _ = writeln!(s, "row_kernel={}x{}", pre.row_kernel.width, pre.row_kernel.height);
    let _ = writeln!(s, "binarize_window={}", pre.binarize_window);
    let _ = writeln!(s, "binarize_k={}", pre.binarize_k);
    s
}

pub fn run(a: &TrainArgs) -> Result<()> {
    let cfg = a.cfg.resolve(&[
        ("axis", a.axis.clone()),
        ("cell", a.cell.clone()),
        ("epochs", a.epochs.clone()),
        ("hidden", a.hidden.clone()),
        ("learning_rate", a.learning_rate.clone()),
    ])?;
    let axis = cfg.axis()?.ok_or_else(|| invalid("--axis is required"))?;
    let pre = cfg.preprocess(PreprocessConfig::default())?;
    let train_cfg = cfg.train(axis)?;
    let model_cfg = cfg.model(axis, &pre)?;
    let corpus = required_path(&a.corpus, &cfg, "corpus")?;
    let out = required_path(&a.out, &cfg, "out")?;

    let items = load_corpus(&corpus)?;
    let samples = par::map(&items, |it| prepare_sample(&it.image, it.gt.axis(axis), &pre))
        .into_iter()
        .collect::<tabseq::Result<Vec<_>>>()?;
    eprintln!(
        "training {} {} model (D={}, H={}) on {} images for {} epochs",
        axis,
        model_cfg.cell,
        model_cfg.input_dim,
        model_cfg.hidden,
        samples.len(),
        train_cfg.epochs
    );
    let init = init_params(&model_cfg, train_cfg.seed);
    let (params, history) = train_with(&samples, &train_cfg, init, |epoch, loss| {
        eprintln!("epoch {epoch}/{} mean loss {loss:.6}", train_cfg.epochs);
    })?;

    let mut log = String::from("epoch,mean_loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(log, "{},{l}", i + 1);
    }
    checkpoint::save(&params, &out.join(CHECKPOINT_FILE))?;
    fsutil::write_atomic(&out.join(LOSS_FILE), log.as_bytes())?;
    fsutil::write_atomic(
        &out.join(CONFIG_FILE),
        resolved_text(&model_cfg, &pre, &train_cfg).as_bytes(),
    )?;
    println!("wrote {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}
