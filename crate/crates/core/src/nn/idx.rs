//! IDX dataset files (MNIST layout), optionally gzip-compressed on disk.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

const KIND: &str = "IDX";

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(KIND, "header truncated"))
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let magic = be_u32(bytes, 0)?;
    if magic != want {
        return Err(Error::format(
            KIND,
            format!("bad magic {magic:#010x}, expected {want:#010x}"),
        ));
    }
    Ok(())
}

/// Decodes an image file into an `N x 1 x rows x cols` tensor scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let pixels = count
        .checked_mul(rows)
        .and_then(|n| n.checked_mul(cols))
        .ok_or_else(|| Error::format(KIND, "dimensions overflow"))?;
    let body = &bytes[16..];
    if body.len() != pixels {
        return Err(Error::format(
            KIND,
            format!("{count}x{rows}x{cols} images need {pixels} bytes, found {}", body.len()),
        ));
    }
    let data = body.iter().map(|&p| p as f32 / 255.0).collect();
    Tensor::new(vec![count, 1, rows, cols], data)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::format(
            KIND,
            format!("{count} labels declared, found {}", body.len()),
        ));
    }
    Ok(body.to_vec())
}

/// Reads a file, transparently inflating gzip content.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn load_idx_images(path: &Path) -> Result<Tensor> {
    parse_idx_images(&read_maybe_gz(path)?)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    parse_idx_labels(&read_maybe_gz(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Labeled images, `N x C x H x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<u8>) -> Result<Self> {
        if images.rank() != 4 {
            return Err(Error::Shape(format!(
                "dataset images must be NxCxHxW, got {:?}",
                images.dims()
            )));
        }
        if images.dims()[0] != labels.len() {
            return Err(Error::format(
                KIND,
                format!("{} images but {} labels", images.dims()[0], labels.len()),
            ));
        }
        Ok(Dataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image_dims(&self) -> &[usize] {
        &self.images.dims()[1..]
    }

    pub fn image(&self, index: usize) -> Result<Tensor> {
        self.images.slice_first(index)
    }

    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }

    /// First `n` samples (all of them if fewer).
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let per: usize = self.image_dims().iter().product();
        let mut dims = self.images.dims().to_vec();
        dims[0] = n;
        Dataset {
            images: Tensor::new(dims, self.images.data()[..n * per].to_vec()).expect("prefix"),
            labels: self.labels[..n].to_vec(),
        }
    }
}

/// Finds `<prefix>-images-idx3-ubyte[.gz]` style files inside `dir`.
fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    for candidate in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(&candidate);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::io(
        dir.join(stem),
        std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found (plain or .gz)"),
    ))
}

pub fn mnist_paths(dir: &Path, split: Split) -> Result<(PathBuf, PathBuf)> {
    Ok((
        locate(dir, &format!("{}-images-idx3-ubyte", split.prefix()))?,
        locate(dir, &format!("{}-labels-idx1-ubyte", split.prefix()))?,
    ))
}

/// Loads an MNIST split from `dir`, keeping at most `limit` samples.
pub fn load_mnist(dir: &Path, split: Split, limit: Option<usize>) -> Result<Dataset> {
    let (images, labels) = mnist_paths(dir, split)?;
    let ds = Dataset::new(load_idx_images(&images)?, load_idx_labels(&labels)?)?;
    Ok(match limit {
        Some(n) => ds.truncated(n),
        None => ds,
    })
}
