//! Big-endian IDX files (the MNIST / Fashion-MNIST distribution format).
//!
//! Images: magic `0x00000803`, then `u32` count, rows, cols, then
//! `count * rows * cols` unsigned bytes. Labels: magic `0x00000801`, then a
//! `u32` count and `count` bytes.

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::LabeledDataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdxFile {
    Images,
    Labels,
}

impl fmt::Display for IdxFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IdxFile::Images => "images",
            IdxFile::Labels => "labels",
        })
    }
}

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file} file: bad magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { file: IdxFile, expected: u32, found: u32 },
    #[error("{file} file truncated in {field}: need {needed} bytes, have {available}")]
    Truncated {
        file: IdxFile,
        field: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: IdxFile,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], IdxError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(IdxError::Truncated {
                file: self.file,
                field,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, IdxError> {
        let b = self.take(4, field)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<(), IdxError> {
        let found = self.u32("magic")?;
        if found != expected {
            return Err(IdxError::BadMagic {
                file: self.file,
                expected,
                found,
            });
        }
        Ok(())
    }
}

/// Parsed image file: flat pixel vectors scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<Vec<f64>>,
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    let mut r = Reader {
        bytes,
        pos: 0,
        file: IdxFile::Images,
    };
    r.magic(IMAGES_MAGIC)?;
    let count = r.u32("count")? as usize;
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    let size = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .unwrap_or(usize::MAX);
    let pixels = r.take(size, "pixels")?;
    let image_len = rows.saturating_mul(cols);
    let images = if image_len == 0 {
        vec![Vec::new(); count]
    } else {
        pixels
            .chunks_exact(image_len)
            .map(|img| img.iter().map(|&b| f64::from(b) / 255.0).collect())
            .collect()
    };
    Ok(IdxImages { rows, cols, images })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>, IdxError> {
    let mut r = Reader {
        bytes,
        pos: 0,
        file: IdxFile::Labels,
    };
    r.magic(LABELS_MAGIC)?;
    let count = r.u32("count")? as usize;
    Ok(r.take(count, "labels")?.iter().map(|&b| usize::from(b)).collect())
}

/// Pairs parsed images with labels. The class count is `max(label) + 1`.
pub fn from_bytes(images: &[u8], labels: &[u8]) -> Result<LabeledDataset, IdxError> {
    let images = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if images.images.len() != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.images.len(),
            labels: labels.len(),
        });
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok(LabeledDataset::new(images.images, labels, num_classes)
        .expect("counts checked and labels bounded by construction"))
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset, IdxError> {
    let read = |p: &Path| {
        std::fs::read(p).map_err(|source| IdxError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let images = read(images_path.as_ref())?;
    let labels = read(labels_path.as_ref())?;
    from_bytes(&images, &labels)
}
