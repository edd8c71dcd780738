#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use crwn::dataset::{Image, ImageDataset, Mnist, Split, NUM_CLASSES};
use crwn::linalg::{DenseMatrix, SeededRng};

/// Digit-like synthetic images: each class lights a different 6×6 block,
/// plus uniform noise.
pub fn synthetic_image(class: usize, rng: &mut SeededRng) -> Image {
    let (br, bc) = (4 + 6 * (class / 4), 2 + 6 * (class % 4));
    Image::from_fn(|r, c| {
        let on = (br..br + 6).contains(&r) && (bc..bc + 6).contains(&c);
        let noise = 0.3 * rng.uniform();
        if on { (0.7 + noise).min(1.0) } else { noise * 0.5 }
    })
}

pub fn synthetic_mnist(train: usize, test: usize, seed: u64) -> Arc<Mnist> {
    let mut rng = SeededRng::new(seed);
    let mut make = |n: usize, split| {
        let labels: Vec<u8> = (0..n).map(|i| (i % NUM_CLASSES) as u8).collect();
        let images = labels.iter().map(|&y| synthetic_image(usize::from(y), &mut rng)).collect();
        ImageDataset::new(images, labels, split).unwrap()
    };
    Arc::new(Mnist {
        train: make(train, Split::Train),
        test: make(test, Split::Test),
    })
}

/// Entries uniform in `[-1, 1]`.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = SeededRng::new(seed);
    let data = (0..rows * cols).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

/// Real MNIST location for data-dependent tests, if the files are present.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("CRWN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.join("t10k-labels-idx1-ubyte").exists().then_some(dir)
}

