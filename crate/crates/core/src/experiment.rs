//! End-to-end pipeline pieces shared by the command-line tool and the
//! tests: per-axis sample preparation, inference, per-image evaluation, and
//! the GRU-versus-LSTM benchmark on a synthetic corpus.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::eval::{evaluate_separators, evaluate_spans, EvalReport, GtStructure, Measure};
use crate::model::{forward, init_params, CellType, ModelConfig, ModelParams};
use crate::par;
use crate::postprocess::{decode, SeparatorSet};
use crate::preprocess::{evaluation_foreground, preprocess, BinaryImage, GrayImage, PreprocessConfig};
use crate::synth::{generate_corpus, labels_from_gt, SynthSample, SynthSpec};
use crate::train::{train_with, Sample, TrainConfig};
use crate::types::Axis;

/// Preprocesses `img` for `gt.axis` and derives its timestep labels.
pub fn prepare_sample(img: &GrayImage, gt: &GtStructure, pre: &PreprocessConfig) -> Result<Sample> {
    let image = preprocess(img, gt.axis, pre)?;
    let labels = labels_from_gt(gt, pre.timesteps(gt.axis))?;
    Ok((image, labels))
}

/// Separators predicted by `params` for its axis, in both coordinate
/// systems.
pub fn infer(img: &GrayImage, params: &ModelParams, pre: &PreprocessConfig) -> Result<SeparatorSet> {
    let axis = params.axis();
    if params.input_dim() != pre.features(axis) {
        return Err(invalid(format!(
            "{axis} model expects {} features per timestep but preprocessing yields {}",
            params.input_dim(),
            pre.features(axis)
        )));
    }
    let probs = forward(&preprocess(img, axis, pre)?, params)?;
    let original = match axis {
        Axis::Column => img.width(),
        Axis::Row => img.height(),
    };
    Ok(decode(&probs, axis, original))
}

/// Scores detections against ground truth on the image's evaluation
/// foreground. `None` means no detected segments at all.
pub fn evaluate_with_foreground(
    fg: &BinaryImage,
    gt: &GtStructure,
    det: Option<&SeparatorSet>,
) -> Result<EvalReport> {
    match det {
        Some(s) => evaluate_separators(s, gt, fg),
        None => evaluate_spans(&[], gt, fg),
    }
}

pub fn evaluate_image(
    img: &GrayImage,
    gt: &GtStructure,
    det: Option<&SeparatorSet>,
    pre: &PreprocessConfig,
) -> Result<EvalReport> {
    evaluate_with_foreground(&evaluation_foreground(img, pre)?, gt, det)
}

/// Settings of the GRU-versus-LSTM comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub spec: SynthSpec,
    pub preprocess: PreprocessConfig,
    pub train_size: usize,
    pub test_size: usize,
    /// Train samples use seeds `seed + i`, test samples
    /// `seed + test_seed_offset + i`; the same seed initializes the models.
    pub seed: u64,
    pub test_seed_offset: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub column_hidden: usize,
    pub row_hidden: usize,
}

impl Default for BenchmarkConfig {
    /// Desk scale: 60 train and 20 test tables of 400x128, processed at
    /// their native size, with reduced hidden sizes.
    fn default() -> Self {
        let spec = SynthSpec::default();
        BenchmarkConfig {
            preprocess: PreprocessConfig {
                target_width: spec.width,
                target_height: spec.height,
                ..PreprocessConfig::default()
            },
            spec,
            train_size: 60,
            test_size: 20,
            seed: 0,
            test_seed_offset: 10_000,
            epochs: 20,
            learning_rate: 0.0005,
            column_hidden: 64,
            row_hidden: 128,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.preprocess.validate()?;
        if self.train_size == 0 || self.test_size == 0 {
            return Err(invalid("benchmark train and test sizes must be positive"));
        }
        if self.test_seed_offset < self.train_size as u64 {
            return Err(invalid("test seeds would overlap train seeds"));
        }
        if self.column_hidden == 0 || self.row_hidden == 0 {
            return Err(invalid("hidden sizes must be positive"));
        }
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    pub fn model_config(&self, axis: Axis, cell: CellType) -> ModelConfig {
        let hidden = match axis {
            Axis::Column => self.column_hidden,
            Axis::Row => self.row_hidden,
        };
        ModelConfig::for_preprocess(axis, cell, &self.preprocess, Some(hidden))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub axis: Axis,
    pub cell: CellType,
    pub report: EvalReport,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub results: Vec<VariantResult>,
}

const CELLS: [CellType; 2] = [CellType::Gru, CellType::Lstm];

impl BenchmarkReport {
    pub fn get(&self, axis: Axis, cell: CellType) -> Option<&VariantResult> {
        self.results.iter().find(|r| r.axis == axis && r.cell == cell)
    }

    /// Two-column (GRU, LSTM) six-measure table per axis.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for axis in [Axis::Column, Axis::Row] {
            let title = match axis {
                Axis::Column => "Columns",
                Axis::Row => "Rows",
            };
            let _ = writeln!(s, "{title:<28}{:>10}{:>10}", "GRU", "LSTM");
            let cols: Vec<Option<&VariantResult>> = CELLS.iter().map(|&c| self.get(axis, c)).collect();
            for measure in Measure::ALL {
                let _ = write!(s, "{:<28}", measure.title());
                for r in &cols {
                    match r {
                        Some(r) => {
                            let _ = write!(s, "{:>9.2}%", r.report.percent(measure));
                        }
                        None => {
                            let _ = write!(s, "{:>10}", "-");
                        }
                    }
                }
                s.push('\n');
            }
            let _ = write!(s, "{:<28}", "Segments m / n");
            for r in &cols {
                let cell = r.map_or("-".to_string(), |r| format!("{}/{}", r.report.m, r.report.n));
                let _ = write!(s, "{cell:>10}");
            }
            s.push('\n');
            let _ = write!(s, "{:<28}", "Final training loss");
            for r in &cols {
                let loss = r
                    .and_then(|r| r.loss_history.last())
                    .map_or("-".to_string(), |l| format!("{l:.6}"));
                let _ = write!(s, "{loss:>10}");
            }
            s.push_str("\n\n");
        }
        s
    }

    /// `axis,cell,measure,count,percent` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("axis,cell,measure,count,percent\n");
        for r in &self.results {
            for measure in Measure::ALL {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{:.4}",
                    r.axis,
                    r.cell,
                    measure.key(),
                    r.report.count(measure),
                    r.report.percent(measure)
                );
            }
        }
        s
    }
}

/// Progress callback: `(axis, cell, epoch, mean_loss)`.
pub type Progress<'a> = &'a (dyn Fn(Axis, CellType, usize, f64) + Sync);

/// Generates the corpus, trains the four (axis, cell) variants, and
/// evaluates each on the held-out split.
pub fn run_benchmark(cfg: &BenchmarkConfig, progress: Progress<'_>) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let train_set = generate_corpus(cfg.train_size, &cfg.spec, cfg.seed)?;
    let test_set = generate_corpus(
        cfg.test_size,
        &cfg.spec,
        cfg.seed.wrapping_add(cfg.test_seed_offset),
    )?;
    let fgs: Vec<BinaryImage> = par::map(&test_set, |s| evaluation_foreground(&s.image, &cfg.preprocess))
        .into_iter()
        .collect::<Result<_>>()?;
    let prepared: Vec<Vec<Sample>> = par::map(&[Axis::Column, Axis::Row], |&axis| {
        prepare_all(&train_set, axis, &cfg.preprocess)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let variants: Vec<(usize, Axis, CellType)> = [Axis::Column, Axis::Row]
        .iter()
        .enumerate()
        .flat_map(|(k, &axis)| CELLS.iter().map(move |&cell| (k, axis, cell)))
        .collect();
    let train_cfg = cfg.train_config();
    let results = par::map(&variants, |&(k, axis, cell)| -> Result<VariantResult> {
        let init = init_params(&cfg.model_config(axis, cell), cfg.seed);
        let (params, loss_history) = train_with(&prepared[k], &train_cfg, init, |epoch, loss| {
            progress(axis, cell, epoch, loss)
        })?;
        let reports: Vec<EvalReport> = par::map_range(test_set.len(), |i| {
            let det = infer(&test_set[i].image, &params, &cfg.preprocess)?;
            evaluate_with_foreground(&fgs[i], test_set[i].gt(axis), Some(&det))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        Ok(VariantResult {
            axis,
            cell,
            report: EvalReport::aggregate(&reports),
            loss_history,
        })
    });
    Ok(BenchmarkReport {
        results: results.into_iter().collect::<Result<_>>()?,
    })
}

pub fn prepare_all(samples: &[SynthSample], axis: Axis, pre: &PreprocessConfig) -> Result<Vec<Sample>> {
    par::map(samples, |s| prepare_sample(&s.image, s.gt(axis), pre))
        .into_iter()
        .collect()
}
