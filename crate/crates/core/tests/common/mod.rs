//! Helpers shared by the integration tests.

use std::fs;
use std::path::Path;

use bidirnet::numerics::RngState;

/// Synthetic IDX pair under `dir/mnist/`: class-dependent pixel blobs with
/// noise, learnable by a small net in a few epochs.
pub fn write_synthetic_mnist(dir: &Path, n: usize, side: usize) {
    fs::create_dir_all(dir.join("mnist")).unwrap();
    let dim = side * side;
    let mut rng = RngState::new(4242);
    let mut write_split = |images_name: &str, labels_name: &str| {
        let mut images = Vec::with_capacity(16 + n * dim);
        images.extend_from_slice(&2051u32.to_be_bytes());
        images.extend_from_slice(&(n as u32).to_be_bytes());
        images.extend_from_slice(&(side as u32).to_be_bytes());
        images.extend_from_slice(&(side as u32).to_be_bytes());
        let mut labels = Vec::with_capacity(8 + n);
        labels.extend_from_slice(&2049u32.to_be_bytes());
        labels.extend_from_slice(&(n as u32).to_be_bytes());
        for s in 0..n {
            let class = (s % 10) as u8;
            labels.push(class);
            for p in 0..dim {
                let bias = if p % 10 == class as usize { 180 } else { 30 };
                let noise = (rng.next_u64() % 64) as u8;
                images.push(bias + noise);
            }
        }
        fs::write(dir.join("mnist").join(images_name), &images).unwrap();
        fs::write(dir.join("mnist").join(labels_name), &labels).unwrap();
    };
    write_split("train-images-idx3-ubyte", "train-labels-idx1-ubyte");
    write_split("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");
}
