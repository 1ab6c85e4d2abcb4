//! Dataset and scorer I/O: ground-truth JSONL, response-map files, binary
//! PGM proxies, and the two built-in scorers (perfect and contrast baseline).
//!
//! Every loader is strict. Anything a saver here would not have produced is
//! rejected with a named error rather than coerced.

mod ground_truth;
mod pgm;
mod rmap;
mod scorer;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::response_map::MapError;
use crate::supervision::TargetSet;

pub use ground_truth::{load_ground_truth, parse_ground_truth, write_ground_truth};
pub use pgm::{decode_pgm, encode_pgm, load_pgm, save_pgm, GrayImage};
pub use rmap::{
    decode_rmap, encode_rmap, load_rmap, save_rmap, save_rmap_json, RMAP_MAGIC, RMAP_VERSION,
};
pub use scorer::{baseline_scorer, oracle_scorer, BaselineConfig};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed ground-truth record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: image {image_id}: target {index} has {axis}={value} outside [0, 1]")]
    CoordinateOutOfRange {
        line: usize,
        image_id: String,
        index: usize,
        axis: char,
        value: f64,
    },
    #[error("line {line}: duplicate image_id {image_id}")]
    DuplicateImageId { line: usize, image_id: String },
    #[error("line {line}: image {image_id} has non-positive dimensions")]
    InvalidDimensions { line: usize, image_id: String },
    #[error("bad RMAP magic (expected \"RMAP\")")]
    BadMagic,
    #[error("unsupported RMAP version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("trailing data: expected {expected} bytes, found {actual}")]
    TrailingData { expected: usize, actual: usize },
    #[error("invalid response map: {0}")]
    InvalidMap(#[from] MapError),
    #[error("invalid response map JSON: {0}")]
    MapJson(String),
    #[error("unsupported netpbm variant {0} (only binary P5 is accepted)")]
    UnsupportedVariant(String),
    #[error("not a PGM file")]
    NotPgm,
    #[error("unsupported PGM maxval {0} (only 255 is accepted)")]
    UnsupportedDepth(u32),
    #[error("malformed PGM header: {0}")]
    BadHeader(&'static str),
    #[error("grid {grid_w}x{grid_h} is larger than image {width}x{height}")]
    GridLargerThanImage {
        grid_w: usize,
        grid_h: usize,
        width: u32,
        height: u32,
    },
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One evaluation frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub targets: TargetSet,
    /// Proxy image (PGM), resolved against the ground-truth file's directory.
    pub proxy: Option<PathBuf>,
    /// Precomputed response map, resolved like `proxy`.
    pub rmap: Option<PathBuf>,
}

/// An ordered collection of frames with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub frames: Vec<Frame>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn total_targets(&self) -> usize {
        self.frames.iter().map(|f| f.targets.len()).sum()
    }

    pub fn get(&self, image_id: &str) -> Option<&Frame> {
        self.frames.iter().find(|f| f.image_id == image_id)
    }
}
