use anyhow::Result;
use clap::Args;
use tabseq::model::CellType;
use tabseq::train::{grad_check, reduced_problem, LossConfig, REDUCED_D, REDUCED_H, REDUCED_T};

use super::eval::parse_axes;
use super::invalid;
use crate::{ConfigArgs, GateFailure};

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// gru, lstm or both.
    #[arg(long, default_value = "both")]
    cell: String,
    /// row, column or both.
    #[arg(long, default_value = "both")]
    axis: String,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    #[command(flatten)]
    cfg: ConfigArgs,
}

pub fn run(a: &GradcheckArgs) -> Result<()> {
    let cfg = a.cfg.resolve(&[])?;
    let seed = cfg.seed()?;
    let cells = if a.cell.eq_ignore_ascii_case("both") {
        vec![CellType::Gru, CellType::Lstm]
    } else {
        vec![a.cell.parse()?]
    };
    let axes = parse_axes(&a.axis)?;
    if !(a.eps > 0.0 && a.eps.is_finite()) || !(a.threshold > 0.0) {
        return Err(invalid("--eps and --threshold must be positive").into());
    }
    let loss = LossConfig::default();
    println!(
        "gradcheck eps={:e} threshold={:e} T={REDUCED_T} D={REDUCED_D} H={REDUCED_H} seed={seed}",
        a.eps, a.threshold
    );
    let mut failed = Vec::new();
    for &cell in &cells {
        for &axis in &axes {
            let (m, image, labels) = reduced_problem(cell, axis, seed);
            let r = grad_check(&m, &image, &labels, a.eps, &loss)?;
            let ok = r.max_relative_error < a.threshold;
            println!(
                "{:<5} {:<7} max relative error {:.3e} at {}[{}] over {} parameters: {}",
                cell.to_string(),
                axis.to_string(),
                r.max_relative_error,
                r.worst_block,
                r.worst_index,
                r.checked,
                if ok { "PASS" } else { "FAIL" }
            );
            if !ok {
                failed.push(format!("{cell}/{axis}"));
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(GateFailure(format!("gradient check above threshold for {}", failed.join(", "))).into())
    }
}
