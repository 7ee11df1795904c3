//! Flat `key=value` run configuration shared by every subcommand.
//!
//! Values come from an optional config file, then `--set KEY=VALUE`
//! overrides, then dedicated flags. Unknown keys are rejected as soon as
//! they are seen; values are parsed and validated when a command resolves
//! the typed configuration it needs, before it touches the file system.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tabseq::experiment::BenchmarkConfig;
use tabseq::fsutil;
use tabseq::model::{CellType, ModelConfig};
use tabseq::preprocess::{Kernel, PreprocessConfig};
use tabseq::synth::{Range, SynthSpec};
use tabseq::train::TrainConfig;
use tabseq::{Axis, Error, Result};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "seed for corpus generation, initialization and shuffling"),
    ("axis", "row or column"),
    ("cell", "gru or lstm"),
    ("hidden", "hidden units per recurrent pass"),
    ("epochs", "passes over the training set"),
    ("learning_rate", "Adam step size"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("epsilon", "Adam denominator offset"),
    ("content_weight", "loss weight of content timesteps"),
    ("whitespace_weight", "loss weight of whitespace timesteps"),
    ("target_width", "resized image width"),
    ("target_height", "resized image height"),
    ("dilation_iterations", "dilation passes"),
    ("column_kernel", "column-model dilation kernel, WxH"),
    ("row_kernel", "row-model dilation kernel, WxH"),
    ("binarize_window", "Sauvola window side"),
    ("binarize_k", "Sauvola k"),
    ("width", "synthetic image width"),
    ("height", "synthetic image height"),
    ("rows", "synthetic row count range, MIN-MAX"),
    ("cols", "synthetic column count range, MIN-MAX"),
    ("gap", "synthetic gap range in pixels, MIN-MAX"),
    ("fill_density", "probability that a synthetic cell is filled"),
    ("blob_margin", "synthetic word margin inside a cell"),
    ("ruling_lines", "draw horizontal ruling lines (true/false)"),
    ("noise", "salt-and-pepper probability"),
    ("tolerance", "separator matching tolerance in pixels"),
    ("train_size", "benchmark training images"),
    ("test_size", "benchmark test images"),
    ("test_seed_offset", "benchmark test seeds start at seed + offset"),
    ("column_hidden", "benchmark column-model hidden size"),
    ("row_hidden", "benchmark row-model hidden size"),
    ("corpus", "corpus directory"),
    ("out", "output directory"),
];

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let Some(&(k, _)) = KEYS.iter().find(|(k, _)| *k == key) else {
            return Err(invalid(format!("unknown config key `{key}`")));
        };
        self.values.insert(k, value.into().trim().to_string());
        Ok(())
    }

    /// Applies one `KEY=VALUE` assignment.
    pub fn assign(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| invalid(format!("expected KEY=VALUE, got `{pair}`")))?;
        self.set(k.trim(), v)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            cfg.assign(line)
                .map_err(|e| invalid(format!("{}:{}: {e}", origin.display(), n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fsutil::read_to_string(path)?, path)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| invalid(format!("bad value `{v}` for `{key}`"))),
        }
    }

    fn get_with<T>(&self, key: &str, parse: fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => parse(v)
                .map(Some)
                .ok_or_else(|| invalid(format!("bad value `{v}` for `{key}`"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }

    pub fn seed(&self) -> Result<u64> {
        self.get_or("seed", 0)
    }

    pub fn axis(&self) -> Result<Option<Axis>> {
        self.values.get("axis").map(|v| v.parse()).transpose()
    }

    pub fn cell(&self) -> Result<CellType> {
        Ok(self
            .values
            .get("cell")
            .map(|v| v.parse())
            .transpose()?
            .unwrap_or(CellType::Gru))
    }

    pub fn preprocess(&self, mut p: PreprocessConfig) -> Result<PreprocessConfig> {
        p.target_width = self.get_or("target_width", p.target_width)?;
        p.target_height = self.get_or("target_height", p.target_height)?;
        p.dilation_iterations = self.get_or("dilation_iterations", p.dilation_iterations)?;
        if let Some(k) = self.get_with("column_kernel", parse_kernel)? {
            p.column_kernel = k;
        }
        if let Some(k) = self.get_with("row_kernel", parse_kernel)? {
            p.row_kernel = k;
        }
        p.binarize_window = self.get_or("binarize_window", p.binarize_window)?;
        p.binarize_k = self.get_or("binarize_k", p.binarize_k)?;
        p.validate()?;
        Ok(p)
    }

    pub fn synth_spec(&self, mut s: SynthSpec) -> Result<SynthSpec> {
        s.width = self.get_or("width", s.width)?;
        s.height = self.get_or("height", s.height)?;
        for (key, field) in [("rows", &mut s.rows), ("cols", &mut s.cols), ("gap", &mut s.gap)] {
            if let Some(r) = self.get_with(key, parse_range)? {
                *field = r;
            }
        }
        s.fill_density = self.get_or("fill_density", s.fill_density)?;
        s.blob_margin = self.get_or("blob_margin", s.blob_margin)?;
        s.ruling_lines = self.get_or("ruling_lines", s.ruling_lines)?;
        s.noise = self.get_or("noise", s.noise)?;
        s.validate()?;
        Ok(s)
    }

    /// Training settings; epochs default to the axis-specific count.
    pub fn train(&self, axis: Axis) -> Result<TrainConfig> {
        let mut t = TrainConfig::for_axis(axis);
        t.epochs = self.get_or("epochs", t.epochs)?;
        t.seed = self.seed()?;
        t.learning_rate = self.get_or("learning_rate", t.learning_rate)?;
        t.beta1 = self.get_or("beta1", t.beta1)?;
        t.beta2 = self.get_or("beta2", t.beta2)?;
        t.epsilon = self.get_or("epsilon", t.epsilon)?;
        t.loss.content_weight = self.get_or("content_weight", t.loss.content_weight)?;
        t.loss.whitespace_weight = self.get_or("whitespace_weight", t.loss.whitespace_weight)?;
        t.validate()?;
        Ok(t)
    }

    pub fn model(&self, axis: Axis, pre: &PreprocessConfig) -> Result<ModelConfig> {
        let cfg = ModelConfig::for_preprocess(axis, self.cell()?, pre, self.get("hidden")?);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Benchmark settings. Resize targets default to the synthetic image
    /// size, so tables are processed at native resolution.
    pub fn benchmark(&self) -> Result<BenchmarkConfig> {
        let mut b = BenchmarkConfig::default();
        b.spec = self.synth_spec(b.spec)?;
        let native = PreprocessConfig {
            target_width: b.spec.width,
            target_height: b.spec.height,
            ..b.preprocess
        };
        b.preprocess = self.preprocess(native)?;
        b.seed = self.seed()?;
        b.train_size = self.get_or("train_size", b.train_size)?;
        b.test_size = self.get_or("test_size", b.test_size)?;
        b.test_seed_offset = self.get_or("test_seed_offset", b.test_seed_offset)?;
        b.epochs = self.get_or("epochs", b.epochs)?;
        b.learning_rate = self.get_or("learning_rate", b.learning_rate)?;
        b.column_hidden = self.get_or("column_hidden", b.column_hidden)?;
        b.row_hidden = self.get_or("row_hidden", b.row_hidden)?;
        b.validate()?;
        Ok(b)
    }
}

/// `3-6`, `3..6`, `3..=6` or a single value.
fn parse_range(v: &str) -> Option<Range> {
    let v = v.trim();
    let parts = ["..=", "..", "-"].iter().find_map(|sep| v.split_once(sep));
    let (a, b) = parts.unwrap_or((v, v));
    Some(Range::new(a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// `WxH`.
fn parse_kernel(v: &str) -> Option<Kernel> {
    let (w, h) = v.trim().split_once(['x', 'X'])?;
    Some(Kernel {
        width: w.trim().parse().ok()?,
        height: h.trim().parse().ok()?,
    })
}
