//! CIFAR-10 binary-version reader.
//!
//! Each record is 3073 bytes: one label byte followed by 3072 pixel bytes in
//! channel-major order (1024 R, 1024 G, 1024 B). The channel-major layout is
//! preserved in the flattened 3072-wide rows.

use std::fs;
use std::path::Path;

use super::{DataError, Dataset};
use crate::numerics::{Mat, Scalar};

const RECORD_LEN: usize = 3073;
const PIXELS: usize = 3072;

/// Load one or more CIFAR-10 batch files into a single normalized dataset.
pub fn load_cifar10<T: Scalar, P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset<T>, DataError> {
    let mut data: Vec<T> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let inv = T::one() / T::from_f64(255.0);

    for path in batch_paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if bytes.is_empty() || !bytes.len().is_multiple_of(RECORD_LEN) {
            return Err(DataError::BadRecordSize {
                path: path.to_path_buf(),
                file_len: bytes.len(),
                record_len: RECORD_LEN,
            });
        }
        let n = bytes.len() / RECORD_LEN;
        data.reserve(n * PIXELS);
        labels.reserve(n);
        for (index, record) in bytes.chunks_exact(RECORD_LEN).enumerate() {
            let label = record[0];
            if label > 9 {
                return Err(DataError::BadLabel {
                    path: path.to_path_buf(),
                    index,
                    label,
                });
            }
            labels.push(label as usize);
            data.extend(record[1..].iter().map(|&b| T::from_usize(b as usize) * inv));
        }
    }

    let n = labels.len();
    let images = Mat::from_vec(n, PIXELS, data)?;
    Dataset::new(images, labels, 10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn single_record_file() {
        let dir = std::env::temp_dir().join("bidirnet_cifar_one");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("one.bin");
        let mut record = vec![7u8];
        record.extend(std::iter::repeat_n(51u8, PIXELS));
        fs::File::create(&path).unwrap().write_all(&record).unwrap();

        let ds: Dataset<f64> = load_cifar10(&[&path]).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dim(), PIXELS);
        assert_eq!(ds.labels, vec![7]);
        assert!((ds.images.get(0, 0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn wrong_size_is_rejected() {
        let dir = std::env::temp_dir().join("bidirnet_cifar_size");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.bin");
        fs::File::create(&path)
            .unwrap()
            .write_all(&[0u8; RECORD_LEN + 1])
            .unwrap();
        match load_cifar10::<f64, _>(&[&path]) {
            Err(DataError::BadRecordSize {
                file_len,
                record_len,
                ..
            }) => {
                assert_eq!(file_len, RECORD_LEN + 1);
                assert_eq!(record_len, RECORD_LEN);
            }
            other => panic!("expected BadRecordSize, got {other:?}"),
        }
    }

    #[test]
    fn label_above_nine_is_rejected() {
        let dir = std::env::temp_dir().join("bidirnet_cifar_label");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("label.bin");
        let mut record = vec![10u8];
        record.extend(std::iter::repeat_n(0u8, PIXELS));
        fs::File::create(&path).unwrap().write_all(&record).unwrap();
        match load_cifar10::<f64, _>(&[&path]) {
            Err(DataError::BadLabel { label, index, .. }) => {
                assert_eq!(label, 10);
                assert_eq!(index, 0);
            }
            other => panic!("expected BadLabel, got {other:?}"),
        }
    }
}
