use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error};

/// Which separators a model (or a ground-truth record) is about.
///
/// A `Column` model scans pixel columns left to right; a `Row` model scans
/// pixel rows top to bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Row,
    Column,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::Row, Axis::Column];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Row => "row",
            Axis::Column => "column",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "row" | "rows" => Ok(Axis::Row),
            "column" | "columns" | "col" => Ok(Axis::Column),
            other => Err(invalid(format!("unknown axis `{other}` (expected row or column)"))),
        }
    }
}

/// Per-timestep class. The numeric value is the class index used by the
/// softmax head everywhere in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Content = 0,
    Whitespace = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }
}
