//! Dataset ingestion: IDX parsing, the PGM word-image corpus, padding and
//! seeded batching.

mod batch;
mod charset;
mod corpus;
mod glyph;
mod idx;

use thiserror::Error;

pub use batch::{make_batches, Batch, BatchIter};
pub use charset::{label_to_ascii, CharCode, Charset, CharsetKind};
pub use corpus::{
    decode_pgm, encode_pgm, load_corpus, parse_manifest, read_pgm, write_pgm, CorpusRecord, ManifestEntry,
};
pub use glyph::{pad_to, GlyphImage};
pub use idx::{
    encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels, IdxDataset, IMAGE_MAGIC, LABEL_MAGIC,
};

/// Side length the networks operate on; 28x28 inputs are padded up to it.
pub const IMAGE_SIZE: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("bad magic number {got} (expected {expected})")]
    BadMagic { expected: u32, got: u32 },
    #[error("truncated file: need {expected} bytes, have {got}")]
    TruncatedFile { expected: usize, got: usize },
    #[error("zero image dimension")]
    ZeroDimension,
    #[error("expected {expected} pixels, got {got}")]
    PixelCount { expected: usize, got: usize },
    #[error("pixel value {0} outside [0, 1]")]
    PixelRange(f32),
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("character or label {0} is outside the charset")]
    OutOfCharset(u32),
    #[error("unknown charset {0:?} (expected digits or letters)")]
    UnknownCharset(String),
    #[error("cannot pad {height}x{width} image to {size}")]
    TargetTooSmall { size: usize, height: usize, width: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("batch size {batch_size} invalid for {count} samples")]
    BatchSize { batch_size: usize, count: usize },
    #[error("PGM: {0}")]
    Pgm(String),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("I/O: {0}")]
    Io(String),
}

impl DataError {
    pub fn is_io(&self) -> bool {
        matches!(self, DataError::Io(_))
    }
}
