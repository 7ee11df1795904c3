//! Row and column structure extraction for cropped table images.
//!
//! A table image is binarized, stripped of ruling lines, resized to a fixed
//! raster and dilated along the axis of interest. A two-layer bi-directional
//! GRU (or LSTM) then labels every pixel column (or row) as content or
//! separator whitespace, and the midpoints of interior whitespace runs
//! become the separators. [`eval`] scores any segmentation against ground
//! truth with the six-measure correspondence-matrix protocol, and
//! [`synth`] generates tables with exact ground truth.
//!
//! Data-parallel loops (per image, per scan direction, per raster row) use
//! rayon when the default `parallel` feature is on; results are
//! bit-identical with it off.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod fsutil;
pub mod imageio;
pub mod linalg;
pub mod model;
pub mod par;
pub mod postprocess;
pub mod preprocess;
pub mod synth;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use types::{Axis, Label};
