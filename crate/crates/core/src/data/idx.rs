//! IDX file reader/writer (the MNIST distribution format).
//!
//! Big-endian headers: images carry magic 0x00000803 and count/rows/cols,
//! labels carry magic 0x00000801 and count. Pixel bytes map to `[0, 1]`.

use std::fs;
use std::path::Path;

use super::{DataError, LabeledSet, Split, Task};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.pos + n > self.bytes.len() {
            return Err(DataError::Truncated {
                path: self.path.to_string(),
                want: self.pos + n,
                got: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32_be(&mut self) -> Result<u32, DataError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Load one image/label file pair into a labeled set.
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    task: Task,
    split: Split,
) -> Result<LabeledSet, DataError> {
    let image_bytes = fs::read(images_path)?;
    let ipath = path_str(images_path);
    let mut r = Reader {
        bytes: &image_bytes,
        pos: 0,
        path: &ipath,
    };
    let magic = r.u32_be()?;
    if magic != IMAGE_MAGIC {
        return Err(DataError::BadMagic {
            path: ipath,
            got: magic,
            want: IMAGE_MAGIC,
        });
    }
    let count = r.u32_be()? as usize;
    let rows = r.u32_be()?;
    let cols = r.u32_be()?;
    if (rows, cols) != (28, 28) {
        return Err(DataError::UnsupportedShape {
            path: ipath,
            rows,
            cols,
        });
    }
    let pixels = r.take(count * 784)?;

    let label_bytes = fs::read(labels_path)?;
    let lpath = path_str(labels_path);
    let mut r = Reader {
        bytes: &label_bytes,
        pos: 0,
        path: &lpath,
    };
    let magic = r.u32_be()?;
    if magic != LABEL_MAGIC {
        return Err(DataError::BadMagic {
            path: lpath,
            got: magic,
            want: LABEL_MAGIC,
        });
    }
    let label_count = r.u32_be()? as usize;
    if label_count != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    let labels = r.take(count)?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= 10) {
        return Err(DataError::BadLabel {
            path: lpath,
            value: bad,
        });
    }

    Ok(LabeledSet {
        inputs: pixels
            .chunks_exact(784)
            .map(|c| c.iter().map(|&b| b as f64 / 255.0).collect())
            .collect(),
        labels: labels.to_vec(),
        task,
        split,
    })
}

/// Write a labeled set as an IDX pair; pixels are quantized to bytes.
pub fn save_idx(
    set: &LabeledSet,
    images_path: &Path,
    labels_path: &Path,
) -> Result<(), DataError> {
    let mut image_bytes = Vec::with_capacity(16 + set.len() * 784);
    image_bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    image_bytes.extend_from_slice(&(set.len() as u32).to_be_bytes());
    image_bytes.extend_from_slice(&28u32.to_be_bytes());
    image_bytes.extend_from_slice(&28u32.to_be_bytes());
    for input in &set.inputs {
        for &p in input {
            image_bytes.push((p.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    fs::write(images_path, image_bytes)?;

    let mut label_bytes = Vec::with_capacity(8 + set.len());
    label_bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    label_bytes.extend_from_slice(&(set.len() as u32).to_be_bytes());
    label_bytes.extend_from_slice(&set.labels);
    fs::write(labels_path, label_bytes)?;
    Ok(())
}
