//! IDX container parsing (the MNIST distribution format).
//!
//! ```text
//! images: u32 magic = 2051 | u32 count | u32 rows | u32 cols | count*rows*cols u8
//! labels: u32 magic = 2049 | u32 count | count u8
//! ```
//! All header integers are big-endian.

use std::path::Path;

use super::{DataError, GlyphImage};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32, DataError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(DataError::TruncatedFile {
            expected: offset + 4,
            got: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], want: u32) -> Result<(), DataError> {
    let magic = be_u32(bytes, 0)?;
    if magic != want {
        return Err(DataError::BadMagic {
            expected: want,
            got: magic,
        });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<GlyphImage>, DataError> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(DataError::ZeroDimension);
    }
    let per = rows * cols;
    let expected = count
        .checked_mul(per)
        .and_then(|n| n.checked_add(16))
        .ok_or(DataError::TruncatedFile {
            expected: usize::MAX,
            got: bytes.len(),
        })?;
    if bytes.len() < expected {
        return Err(DataError::TruncatedFile {
            expected,
            got: bytes.len(),
        });
    }
    bytes[16..expected]
        .chunks_exact(per)
        .map(|px| GlyphImage::from_bytes(rows, cols, px))
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(DataError::TruncatedFile {
            expected,
            got: bytes.len(),
        });
    }
    Ok(bytes[8..expected].to_vec())
}

pub fn encode_idx_images(images: &[GlyphImage]) -> Result<Vec<u8>, DataError> {
    let (rows, cols) = images.first().map(|i| (i.height(), i.width())).unwrap_or((1, 1));
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        if (img.height(), img.width()) != (rows, cols) {
            return Err(DataError::PixelCount {
                expected: rows * cols,
                got: img.pixels().len(),
            });
        }
        out.extend(img.to_bytes());
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Paired images and integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxDataset {
    images: Vec<GlyphImage>,
    labels: Vec<u8>,
}

impl IdxDataset {
    pub fn new(images: Vec<GlyphImage>, labels: Vec<u8>) -> Result<Self, DataError> {
        if images.len() != labels.len() {
            return Err(DataError::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        Ok(Self { images, labels })
    }

    pub fn from_idx_bytes(images: &[u8], labels: &[u8]) -> Result<Self, DataError> {
        Self::new(parse_idx_images(images)?, parse_idx_labels(labels)?)
    }

    pub fn load(images: &Path, labels: &Path) -> Result<Self, DataError> {
        let read = |p: &Path| std::fs::read(p).map_err(|e| DataError::Io(format!("{}: {e}", p.display())));
        Self::from_idx_bytes(&read(images)?, &read(labels)?)
    }

    pub fn count(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[GlyphImage] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// First `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.count());
        Self {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Samples `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let end = end.min(self.count());
        let start = start.min(end);
        Self {
            images: self.images[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
        }
    }

    /// Every image centered on a `size x size` canvas.
    pub fn padded(&self, size: usize) -> Result<Self, DataError> {
        Ok(Self {
            images: self.images.iter().map(|i| i.pad_to(size)).collect::<Result<_, _>>()?,
            labels: self.labels.clone(),
        })
    }

    pub fn to_idx_bytes(&self) -> Result<(Vec<u8>, Vec<u8>), DataError> {
        Ok((encode_idx_images(&self.images)?, encode_idx_labels(&self.labels)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn parses_single_image() {
        let mut bytes = header(2051, &[1, 2, 2]);
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        bytes.extend_from_slice(&[0, 255, 128, 0]);
        let imgs = parse_idx_images(&bytes).unwrap();
        assert_eq!(imgs.len(), 1);
        assert_eq!(imgs[0].pixels(), &[0.0, 1.0, 128.0 / 255.0, 0.0]);
        assert!((imgs[0].get(1, 0) - 0.501_960_8).abs() < 1e-6);
    }

    #[test]
    fn empty_input_is_truncated() {
        assert!(matches!(parse_idx_images(&[]), Err(DataError::TruncatedFile { .. })));
        assert!(matches!(parse_idx_labels(&[]), Err(DataError::TruncatedFile { .. })));
    }

    #[test]
    fn short_payload_is_truncated() {
        let mut bytes = header(2051, &[2, 2, 2]);
        bytes.extend_from_slice(&[1, 2, 3, 4, 5]);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(DataError::TruncatedFile { expected: 24, got: 21 })
        ));
    }

    #[test]
    fn zero_dimension() {
        let bytes = header(2051, &[1, 0, 2]);
        assert!(matches!(parse_idx_images(&bytes), Err(DataError::ZeroDimension)));
    }

    #[test]
    fn labels_pass_through() {
        let mut bytes = header(2049, &[3]);
        assert_eq!(&bytes[..4], &[0, 0, 8, 1]);
        bytes.extend_from_slice(&[7, 0, 9]);
        assert_eq!(parse_idx_labels(&bytes).unwrap(), vec![7, 0, 9]);
    }

    #[test]
    fn wrong_kind_is_bad_magic() {
        let mut bytes = header(2051, &[1, 1, 1]);
        bytes.push(0);
        assert!(matches!(
            parse_idx_labels(&bytes),
            Err(DataError::BadMagic {
                expected: 2049,
                got: 2051
            })
        ));
        let labels = encode_idx_labels(&[1]);
        assert!(matches!(parse_idx_images(&labels), Err(DataError::BadMagic { .. })));
    }

    #[test]
    fn dataset_requires_equal_counts() {
        let img = GlyphImage::blank(2, 2);
        assert!(IdxDataset::new(vec![img], vec![]).is_err());
    }
}
