//! File formats: VOX1 volumes, TMAP tensor containers, PNG frame stacks and
//! CSV tables. All multi-byte values are little-endian.

mod png;
mod tables;
mod tmap;
mod vox1;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::volume::VolumeError;

pub use self::png::{frame_name, read_png_stack, write_png_stack};
pub use self::tables::{
    read_cuboids, read_labels, read_predictions, read_predictions_from, read_probmatrix,
    read_probmatrix_from, write_batches, write_predictions, write_probmatrix, write_reliability,
    write_roi_histogram, write_roi_summary, write_sample_stats,
};
pub use self::tmap::{decode_tmap, encode_tmap, read_tmap, write_tmap};
pub use self::vox1::{
    decode_vox1, encode_vox1, read_vox1, read_vox1_raw, write_vox1, write_vox1_raw, RawVolume,
    VOX1_HEADER_LEN, VOX1_MAGIC,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:?}; expected \"VOX1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported VOX1 version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown dtype code {0}")]
    DtypeUnknown(String),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },
    #[error("{0} unexpected trailing byte(s)")]
    TrailingBytes(u64),
    #[error("malformed JSON header: {0}")]
    JsonMalformed(String),
    #[error("tensor `{name}` overlaps the previous tensor's data")]
    OverlappingOffsets { name: String },
    #[error("data region has a gap or overhang at byte {at}")]
    OffsetGap { at: u64 },
    #[error("tensor `{name}`: shape {shape:?} needs {expected} bytes but offsets span {actual}")]
    ShapeBytesMismatch {
        name: String,
        shape: Vec<usize>,
        expected: u64,
        actual: u64,
    },
    #[error("frame indices are not contiguous from 0: missing {missing}")]
    NonContiguousIndices { missing: String },
    #[error("frame {name} differs from the first frame: {detail}")]
    MixedDimensions { name: String, detail: String },
    #[error("{0}: unsupported PNG (need 8-bit gray or RGB)")]
    UnsupportedPng(String),
    #[error("no frames found in {0}")]
    EmptyStack(PathBuf),
    #[error("PNG frames must be uint8 with 1 or 3 channels")]
    NotImage,
    #[error("{0}")]
    Image(String),
    #[error("line {line}: {message}")]
    Schema { line: u64, message: String },
    #[error("line {line}: {message}")]
    Range { line: u64, message: String },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Errors from the filesystem itself, as opposed to content problems.
    pub fn is_filesystem(&self) -> bool {
        matches!(self, IoError::Io { .. })
    }
}

/// Writes via a temporary sibling and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    std::fs::write(&tmp, bytes).map_err(|e| IoError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| IoError::io(path, e))
}
