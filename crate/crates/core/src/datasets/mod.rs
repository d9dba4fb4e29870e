//! Dataset ingestion (MNIST IDX, CIFAR-10 binary), one-hot encoding, and
//! seeded minibatching.

mod cifar10;
mod mnist;

use std::fmt;
use std::io;
use std::path::PathBuf;

pub use cifar10::load_cifar10;
pub use mnist::load_mnist;

use crate::numerics::{Mat, RngState, Scalar, ShapeError};

/// Errors raised while loading or slicing datasets.
#[derive(Debug)]
pub enum DataError {
    Io {
        path: PathBuf,
        source: io::Error,
    },
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    Truncated {
        path: PathBuf,
        expected_bytes: usize,
        got_bytes: usize,
    },
    CountMismatch {
        images: usize,
        labels: usize,
    },
    BadRecordSize {
        path: PathBuf,
        file_len: usize,
        record_len: usize,
    },
    BadLabel {
        path: PathBuf,
        index: usize,
        label: u8,
    },
    LabelOutOfRange {
        label: usize,
        n_classes: usize,
    },
    SubsetOutOfRange {
        requested: usize,
        available: usize,
    },
    Shape(ShapeError),
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            DataError::BadMagic {
                path,
                expected,
                found,
            } => write!(
                f,
                "{}: bad magic number {found:#010x}, expected {expected:#010x}",
                path.display()
            ),
            DataError::Truncated {
                path,
                expected_bytes,
                got_bytes,
            } => write!(
                f,
                "{}: truncated payload, expected {expected_bytes} bytes, got {got_bytes}",
                path.display()
            ),
            DataError::CountMismatch { images, labels } => {
                write!(
                    f,
                    "image count {images} does not match label count {labels}"
                )
            }
            DataError::BadRecordSize {
                path,
                file_len,
                record_len,
            } => write!(
                f,
                "{}: file length {file_len} is not a multiple of the {record_len}-byte record",
                path.display()
            ),
            DataError::BadLabel { path, index, label } => {
                write!(
                    f,
                    "{}: record {index} has label byte {label} > 9",
                    path.display()
                )
            }
            DataError::LabelOutOfRange { label, n_classes } => {
                write!(f, "label {label} out of range for {n_classes} classes")
            }
            DataError::SubsetOutOfRange {
                requested,
                available,
            } => {
                write!(
                    f,
                    "subset of {requested} samples requested from {available}"
                )
            }
            DataError::Shape(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for DataError {}

impl From<ShapeError> for DataError {
    fn from(e: ShapeError) -> Self {
        DataError::Shape(e)
    }
}

/// A labelled image collection with pixels normalized into `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    /// N x D, one row per sample.
    pub images: Mat<T>,
    /// One label per row of `images`, each `< n_classes`.
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(images: Mat<T>, labels: Vec<usize>, n_classes: usize) -> Result<Self, DataError> {
        if labels.len() != images.rows() {
            return Err(DataError::CountMismatch {
                images: images.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(DataError::LabelOutOfRange {
                label: bad,
                n_classes,
            });
        }
        Ok(Dataset {
            images,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Input dimensionality (784 for MNIST, 3072 for CIFAR-10).
    pub fn dim(&self) -> usize {
        self.images.cols()
    }

    /// First `n` samples of a seeded permutation, as a new dataset.
    pub fn subset(&self, n: usize, rng: &mut RngState) -> Result<Dataset<T>, DataError> {
        if n == 0 || n > self.len() {
            return Err(DataError::SubsetOutOfRange {
                requested: n,
                available: self.len(),
            });
        }
        let perm = rng.permutation(self.len());
        let mut data = Vec::with_capacity(n * self.dim());
        let mut labels = Vec::with_capacity(n);
        for &idx in perm.iter().take(n) {
            data.extend_from_slice(self.images.row(idx));
            labels.push(self.labels[idx]);
        }
        let images = Mat::from_vec(n, self.dim(), data)?;
        Dataset::new(images, labels, self.n_classes)
    }
}

/// One training batch in column-per-sample layout.
#[derive(Debug, Clone)]
pub struct Minibatch<T> {
    /// D x b inputs.
    pub x: Mat<T>,
    /// n_classes x b one-hot targets.
    pub y: Mat<T>,
}

impl<T: Scalar> Minibatch<T> {
    pub fn size(&self) -> usize {
        self.x.cols()
    }
}

/// One-hot column vector: 1 at `label`, 0 elsewhere.
pub fn one_hot<T: Scalar>(label: usize, n_classes: usize) -> Result<Mat<T>, DataError> {
    if label >= n_classes {
        return Err(DataError::LabelOutOfRange { label, n_classes });
    }
    let mut v = Mat::zeros(n_classes, 1);
    v.set(label, 0, T::one());
    Ok(v)
}

/// Iterator over one epoch of minibatches.
///
/// Covers every sample exactly once; the last batch may be short. With
/// `shuffle` off the order is dataset order; with it on, the permutation is a
/// deterministic function of `rng`.
pub struct Minibatches<'a, T> {
    ds: &'a Dataset<T>,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

pub fn minibatches<'a, T: Scalar>(
    ds: &'a Dataset<T>,
    batch_size: usize,
    rng: &mut RngState,
    shuffle: bool,
) -> Minibatches<'a, T> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let order = if shuffle {
        rng.permutation(ds.len())
    } else {
        (0..ds.len()).collect()
    };
    Minibatches {
        ds,
        order,
        batch_size,
        pos: 0,
    }
}

impl<T: Scalar> Iterator for Minibatches<'_, T> {
    type Item = Minibatch<T>;

    fn next(&mut self) -> Option<Minibatch<T>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        let b = idx.len();
        let d = self.ds.dim();
        let c = self.ds.n_classes;
        let mut x = Mat::zeros(d, b);
        let mut y = Mat::zeros(c, b);
        for (k, &sample) in idx.iter().enumerate() {
            let row = self.ds.images.row(sample);
            for (i, &px) in row.iter().enumerate() {
                x.set(i, k, px);
            }
            y.set(self.ds.labels[sample], k, T::one());
        }
        Some(Minibatch { x, y })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset(n: usize) -> Dataset<f64> {
        // dim 3, pixel value encodes the sample index for traceability
        let data: Vec<f64> = (0..n * 3).map(|i| (i / 3) as f64 / 100.0).collect();
        let images = Mat::from_vec(n, 3, data).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
        Dataset::new(images, labels, 4).unwrap()
    }

    #[test]
    fn one_hot_cases() {
        let v = one_hot::<f64>(4, 10).unwrap();
        let expected: Vec<f64> = (0..10).map(|i| if i == 4 { 1.0 } else { 0.0 }).collect();
        assert_eq!(v.as_slice(), &expected[..]);
        assert_eq!(one_hot::<f64>(0, 1).unwrap().as_slice(), &[1.0]);
        let last = one_hot::<f64>(9, 10).unwrap();
        assert_eq!(last.get(9, 0), 1.0);
        assert_eq!(last.sum(), 1.0);
        assert!(one_hot::<f64>(10, 10).is_err());
    }

    #[test]
    fn batch_partition_sizes() {
        let ds = toy_dataset(10);
        let mut rng = RngState::new(1);
        let sizes: Vec<usize> = minibatches(&ds, 3, &mut rng, false)
            .map(|b| b.size())
            .collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
    }

    #[test]
    fn unshuffled_order_is_dataset_order() {
        let ds = toy_dataset(7);
        let mut rng = RngState::new(1);
        let first = minibatches(&ds, 4, &mut rng, false).next().unwrap();
        for k in 0..4 {
            assert_eq!(first.x.get(0, k), k as f64 / 100.0);
        }
    }

    #[test]
    fn shuffle_is_seed_deterministic() {
        let ds = toy_dataset(20);
        let mut r1 = RngState::new(33);
        let mut r2 = RngState::new(33);
        let a: Vec<_> = minibatches(&ds, 6, &mut r1, true).collect();
        let b: Vec<_> = minibatches(&ds, 6, &mut r2, true).collect();
        for (ba, bb) in a.iter().zip(&b) {
            assert_eq!(ba.x, bb.x);
            assert_eq!(ba.y, bb.y);
        }
    }

    #[test]
    fn epoch_covers_every_sample_once() {
        let ds = toy_dataset(23);
        let mut rng = RngState::new(5);
        let mut seen = vec![0usize; 23];
        for batch in minibatches(&ds, 4, &mut rng, true) {
            for k in 0..batch.size() {
                let sample = (batch.x.get(0, k) * 100.0).round() as usize;
                seen[sample] += 1;
            }
        }
        assert!(
            seen.iter().all(|&c| c == 1),
            "multiset not preserved: {seen:?}"
        );
    }

    #[test]
    fn one_hot_columns_sum_to_one() {
        let ds = toy_dataset(9);
        let mut rng = RngState::new(2);
        for batch in minibatches(&ds, 4, &mut rng, true) {
            for k in 0..batch.size() {
                let col = batch.y.col(k);
                assert_eq!(col.iter().sum::<f64>(), 1.0);
                assert!(col.iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn every_epoch_partitions_the_dataset(
                n in 1usize..120,
                batch in 1usize..40,
                seed in 0u64..1000,
                shuffle in proptest::bool::ANY,
            ) {
                let ds = toy_dataset(n);
                let mut rng = RngState::new(seed);
                let mut seen = vec![0usize; n];
                let mut total = 0usize;
                for b in minibatches(&ds, batch, &mut rng, shuffle) {
                    prop_assert!(b.size() >= 1 && b.size() <= batch);
                    for k in 0..b.size() {
                        let sample = (b.x.get(0, k) * 100.0).round() as usize;
                        seen[sample] += 1;
                        let col = b.y.col(k);
                        prop_assert_eq!(col.iter().sum::<f64>(), 1.0);
                    }
                    total += b.size();
                }
                prop_assert_eq!(total, n);
                prop_assert!(seen.iter().all(|&c| c == 1));
            }
        }
    }

    #[test]
    fn subset_rules() {
        let ds = toy_dataset(50);
        let mut rng = RngState::new(9);
        let s = ds.subset(20, &mut rng).unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(s.n_classes, 4);
        assert!(ds.subset(0, &mut RngState::new(9)).is_err());
        assert!(ds.subset(51, &mut RngState::new(9)).is_err());

        // n = N is a permutation of the full dataset
        let full = ds.subset(50, &mut RngState::new(4)).unwrap();
        let mut orig: Vec<usize> = ds.labels.clone();
        let mut perm: Vec<usize> = full.labels.clone();
        orig.sort_unstable();
        perm.sort_unstable();
        assert_eq!(orig, perm);
    }
}
