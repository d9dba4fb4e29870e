//! MNIST IDX reader.
//!
//! Layout: big-endian 32-bit header fields; magic 2051 for image files
//! (count, rows, cols follow) and 2049 for label files (count follows),
//! then the raw payload bytes.

use std::fs;
use std::path::Path;

use super::{DataError, Dataset};
use crate::numerics::{Mat, Scalar};

const IMAGES_MAGIC: u32 = 2051; // 0x00000803
const LABELS_MAGIC: u32 = 2049; // 0x00000801

fn read_all(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, DataError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected_bytes: end,
            got_bytes: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Load an MNIST image/label file pair into a normalized dataset.
pub fn load_mnist<T: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset<T>, DataError> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let img_bytes = read_all(images_path)?;
    let magic = be_u32(&img_bytes, 0, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            path: images_path.to_path_buf(),
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(&img_bytes, 4, images_path)? as usize;
    let rows = be_u32(&img_bytes, 8, images_path)? as usize;
    let cols = be_u32(&img_bytes, 12, images_path)? as usize;
    let dim = rows * cols;
    let expected = 16 + n * dim;
    if img_bytes.len() < expected {
        return Err(DataError::Truncated {
            path: images_path.to_path_buf(),
            expected_bytes: expected,
            got_bytes: img_bytes.len(),
        });
    }

    let lab_bytes = read_all(labels_path)?;
    let magic = be_u32(&lab_bytes, 0, labels_path)?;
    if magic != LABELS_MAGIC {
        return Err(DataError::BadMagic {
            path: labels_path.to_path_buf(),
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let n_labels = be_u32(&lab_bytes, 4, labels_path)? as usize;
    if n_labels != n {
        return Err(DataError::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }
    let lab_expected = 8 + n_labels;
    if lab_bytes.len() < lab_expected {
        return Err(DataError::Truncated {
            path: labels_path.to_path_buf(),
            expected_bytes: lab_expected,
            got_bytes: lab_bytes.len(),
        });
    }

    let inv = T::one() / T::from_f64(255.0);
    let data: Vec<T> = img_bytes[16..16 + n * dim]
        .iter()
        .map(|&b| T::from_usize(b as usize) * inv)
        .collect();
    let images = Mat::from_vec(n, dim, data)?;

    let mut labels = Vec::with_capacity(n);
    for (index, &b) in lab_bytes[8..8 + n].iter().enumerate() {
        if b > 9 {
            return Err(DataError::BadLabel {
                path: labels_path.to_path_buf(),
                index,
                label: b,
            });
        }
        labels.push(b as usize);
    }

    Dataset::new(images, labels, 10)
}
