use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::SequenceSample;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Environment variable naming the directory that holds the IDX files.
pub const DATA_DIR_ENV: &str = "EPROP_DATA_DIR";

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Standard file names for a split inside `dir`: `(images, labels)`.
pub fn split_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnistDataset {
    pub rows: usize,
    pub cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl MnistDataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels.len() != rows * cols * labels.len() {
            return Err(Error::Format(format!(
                "{} pixel bytes do not match {} labels of {rows}x{cols}",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::Format(format!("label {bad} outside 0..=9")));
        }
        Ok(Self {
            rows,
            cols,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        usize::from(self.labels[i])
    }

    /// The first `n` items (or all, if fewer).
    pub fn take(&self, n: usize) -> MnistDataset {
        let n = n.min(self.len());
        MnistDataset {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[..n * self.rows * self.cols].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Serialized sequence of item `i`.
    pub fn sample(&self, i: usize, perm: Option<&PixelPermutation>) -> Result<SequenceSample> {
        serialize_pixels(self.image(i), self.label(i), perm)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format("IDX header truncated".into()))
}

/// Parses an IDX3 image file: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!("bad image magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    let need = count * rows * cols;
    if body.len() != need {
        return Err(Error::Format(format!(
            "image file has {} pixel bytes, header says {need}",
            body.len()
        )));
    }
    Ok((count, rows, cols, body.to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!("bad label magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Format(format!(
            "label file has {} bytes, header says {count}",
            body.len()
        )));
    }
    Ok(body.to_vec())
}

pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<MnistDataset> {
    let (count, rows, cols, pixels) = parse_idx_images(&fs::read(images_path)?)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?)?;
    if labels.len() != count {
        return Err(Error::Format(format!("{count} images but {} labels", labels.len())));
    }
    MnistDataset::new(rows, cols, pixels, labels)
}

pub fn load_split(dir: &Path, split: Split) -> Result<MnistDataset> {
    let (images, labels) = split_paths(dir, split);
    load_mnist_idx(&images, &labels)
}

pub fn write_idx_images<W: Write>(mut w: W, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let n = rows * cols;
    if n == 0 || pixels.len() % n != 0 {
        return Err(Error::InvalidArgument(
            "pixel buffer is not a whole number of images".into(),
        ));
    }
    w.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    w.write_all(&((pixels.len() / n) as u32).to_be_bytes())?;
    w.write_all(&(rows as u32).to_be_bytes())?;
    w.write_all(&(cols as u32).to_be_bytes())?;
    w.write_all(pixels)?;
    Ok(())
}

pub fn write_idx_labels<W: Write>(mut w: W, labels: &[u8]) -> Result<()> {
    w.write_all(&LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)?;
    Ok(())
}

/// A bijection on pixel positions. Step `t` of the sequence shows pixel `perm[t]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelPermutation(Vec<usize>);

impl PixelPermutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || seen[i] {
                return Err(Error::InvalidArgument("permutation is not a bijection".into()));
            }
            seen[i] = true;
        }
        Ok(Self(order))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn random(n: usize, rng: &mut Rng) -> Self {
        Self(rng.permutation(n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (t, &i) in self.0.iter().enumerate() {
            inv[i] = t;
        }
        Self(inv)
    }

    pub fn apply<T: Copy>(&self, items: &[T]) -> Vec<T> {
        self.0.iter().map(|&i| items[i]).collect()
    }
}

/// Row-major pixel sequence scaled to [0, 1], optionally reordered by `perm`.
pub fn serialize_pixels(image: &[u8], label: usize, perm: Option<&PixelPermutation>) -> Result<SequenceSample> {
    let scaled = |p: u8| f64::from(p) / 255.0;
    let inputs = match perm {
        None => image.iter().map(|&p| scaled(p)).collect(),
        Some(perm) => {
            if perm.len() != image.len() {
                return Err(Error::InvalidArgument(format!(
                    "permutation of {} positions for an image of {} pixels",
                    perm.len(),
                    image.len()
                )));
            }
            perm.as_slice().iter().map(|&i| scaled(image[i])).collect()
        }
    };
    Ok(SequenceSample { inputs, dim: 1, label })
}
