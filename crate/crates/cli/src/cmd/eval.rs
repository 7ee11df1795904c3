use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use tabseq::eval::{separator_prf, EvalReport};
use tabseq::experiment::evaluate_with_foreground;
use tabseq::postprocess::{read_separator_file, SeparatorSet};
use tabseq::preprocess::{evaluation_foreground, PreprocessConfig};
use tabseq::{fsutil, par, Axis};

use super::infer::separator_path;
use super::{invalid, load_corpus, required_path, stem};
use crate::ConfigArgs;

/// Default separator matching tolerance, pixels.
pub const DEFAULT_TOLERANCE: usize = 5;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Corpus directory (manifest, images, ground truth).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Directory holding `<stem>.<axis>.sep` files.
    #[arg(long)]
    detections: PathBuf,
    /// row, column or both.
    #[arg(long, default_value = "both")]
    axis: String,
    /// Separator matching tolerance in pixels.
    #[arg(long)]
    tolerance: Option<String>,
    /// Directory for `eval_<axis>.csv` reports.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

pub(crate) fn parse_axes(v: &str) -> tabseq::Result<Vec<Axis>> {
    if v.eq_ignore_ascii_case("both") {
        Ok(Axis::BOTH.to_vec())
    } else {
        Ok(vec![v.parse()?])
    }
}

struct ImageResult {
    reports: Vec<EvalReport>,
    prf: Vec<(f64, f64, f64)>,
}

pub fn run(a: &EvalArgs) -> Result<()> {
    let cfg = a.cfg.resolve(&[("tolerance", a.tolerance.clone())])?;
    let axes = parse_axes(&a.axis)?;
    let tolerance: usize = cfg.get_or("tolerance", DEFAULT_TOLERANCE)?;
    let pre = cfg.preprocess(PreprocessConfig::default())?;
    let corpus = required_path(&a.corpus, &cfg, "corpus")?;

    let items = load_corpus(&corpus)?;
    let missing: Vec<String> = items
        .iter()
        .flat_map(|it| axes.iter().map(|&ax| separator_path(&a.detections, &stem(&it.image_path), ax)))
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(invalid(format!(
            "{} detection files missing:\n  {}",
            missing.len(),
            missing.join("\n  ")
        ))
        .into());
    }

    let results = par::map(&items, |it| -> tabseq::Result<ImageResult> {
        let fg = evaluation_foreground(&it.image, &pre)?;
        let name = stem(&it.image_path);
        let mut r = ImageResult {
            reports: Vec::new(),
            prf: Vec::new(),
        };
        for &axis in &axes {
            let det = read_separator_file(&separator_path(&a.detections, &name, axis), axis)?;
            let gt = it.gt.axis(axis);
            r.reports.push(evaluate_with_foreground(&fg, gt, det.as_ref())?);
            let det = det.unwrap_or_else(|| SeparatorSet::identity(axis, Vec::new()));
            r.prf.push(separator_prf(&det, &gt.separators(), tolerance));
        }
        Ok(r)
    })
    .into_iter()
    .collect::<tabseq::Result<Vec<_>>>()?;

    let n = results.len() as f64;
    let mut text = String::new();
    for (k, &axis) in axes.iter().enumerate() {
        let report = EvalReport::aggregate(results.iter().map(|r| &r.reports[k]));
        let title = match axis {
            Axis::Row => "Rows",
            Axis::Column => "Columns",
        };
        text.push_str(&report.to_table(&format!("{title} ({} images)", results.len())));
        let mean = |f: fn(&(f64, f64, f64)) -> f64| results.iter().map(|r| f(&r.prf[k])).sum::<f64>() / n;
        let _ = writeln!(
            text,
            "separator matching within {tolerance} px (mean per image): precision {:.4}, recall {:.4}, f1 {:.4}\n",
            mean(|p| p.0),
            mean(|p| p.1),
            mean(|p| p.2)
        );
        if let Some(dir) = &a.out {
            fsutil::write_atomic(&dir.join(format!("eval_{axis}.csv")), report.to_csv().as_bytes())?;
        }
    }
    print!("{text}");
    Ok(())
}
