use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use tabseq::synth::{generate_corpus, write_corpus, SynthSpec};

use super::{invalid, required_path};
use crate::ConfigArgs;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of tables to generate.
    #[arg(long)]
    n: usize,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Image width in pixels.
    #[arg(long)]
    width: Option<String>,
    /// Image height in pixels.
    #[arg(long)]
    height: Option<String>,
    /// Row count range, MIN-MAX.
    #[arg(long)]
    rows: Option<String>,
    /// Column count range, MIN-MAX.
    #[arg(long)]
    cols: Option<String>,
    /// Gap range in pixels, MIN-MAX.
    #[arg(long)]
    gap: Option<String>,
    /// Probability that a cell is filled.
    #[arg(long)]
    fill_density: Option<String>,
    /// Margin between words and their cell boundary.
    #[arg(long)]
    blob_margin: Option<String>,
    /// Salt-and-pepper flip probability.
    #[arg(long)]
    noise: Option<String>,
    /// Draw horizontal ruling lines in the row gaps.
    #[arg(long)]
    ruling_lines: bool,
    #[command(flatten)]
    cfg: ConfigArgs,
}

pub fn run(a: &SynthArgs) -> Result<()> {
    let cfg = a.cfg.resolve(&[
        ("width", a.width.clone()),
        ("height", a.height.clone()),
        ("rows", a.rows.clone()),
        ("cols", a.cols.clone()),
        ("gap", a.gap.clone()),
        ("fill_density", a.fill_density.clone()),
        ("blob_margin", a.blob_margin.clone()),
        ("noise", a.noise.clone()),
        ("ruling_lines", a.ruling_lines.then(|| "true".to_string())),
    ])?;
    let spec = cfg.synth_spec(SynthSpec::default())?;
    let seed = cfg.seed()?;
    let out = required_path(&a.out, &cfg, "out")?;
    if a.n == 0 {
        return Err(invalid("--n must be at least 1").into());
    }
    let samples = generate_corpus(a.n, &spec, seed)?;
    write_corpus(&out, &samples)?;
    println!("wrote {} tables (seeds {}..{}) to {}", a.n, seed, seed + a.n as u64 - 1, out.display());
    Ok(())
}
