use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::Args;
use tabseq::experiment::run_benchmark;
use tabseq::fsutil;

use crate::ConfigArgs;

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    /// Training epochs per variant (default 20).
    #[arg(long)]
    epochs: Option<String>,
    /// Directory for `report.txt` and `report.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

pub fn run(a: &BenchmarkArgs) -> Result<()> {
    let cfg = a.cfg.resolve(&[("epochs", a.epochs.clone())])?;
    let bench = cfg.benchmark()?;
    let out = a.out.clone().or_else(|| cfg.path("out"));
    eprintln!(
        "benchmark: {} train / {} test tables of {}x{}, {} epochs, seed {}",
        bench.train_size, bench.test_size, bench.spec.width, bench.spec.height, bench.epochs, bench.seed
    );
    let start = Instant::now();
    let report = run_benchmark(&bench, &|axis, cell, epoch, loss| {
        eprintln!("{axis} {cell} epoch {epoch}/{} mean loss {loss:.6}", bench.epochs);
    })?;
    let text = report.to_text();
    print!("{text}");
    if let Some(dir) = out {
        fsutil::write_atomic(&dir.join("report.txt"), text.as_bytes())?;
        fsutil::write_atomic(&dir.join("report.csv"), report.to_csv().as_bytes())?;
    }
    eprintln!("elapsed {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
