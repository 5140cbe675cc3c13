//! Frame, manifest, and checkpoint I/O.

pub mod checkpoint;
pub mod manifest;
pub mod pnm;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, NamedTensor, OptEntry};
pub use manifest::{DatasetManifest, ManifestEntry, Split};
pub use pnm::{read_mask, read_frame, write_mask, write_frame};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("checkpoint: bad magic (expected OCRX)")]
    BadMagic,
    #[error("checkpoint: unsupported version {0}")]
    BadVersion(u32),
    #[error("checkpoint: unknown model kind {0:?}")]
    UnknownModelKind(String),
    #[error("checkpoint: duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error("checkpoint: payload length mismatch for {name:?}: shape {shape:?} vs {len} values")]
    PayloadMismatch {
        name: String,
        shape: Vec<usize>,
        len: usize,
    },
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("manifest references missing file {0}")]
    MissingFile(std::path::PathBuf),
    #[error("tensor: {0}")]
    Tensor(#[from] crate::tensor::TensorError),
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;
