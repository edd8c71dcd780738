//! MNIST ingestion: IDX parsing, 28×28 images and flattening.
//!
//! IDX files are big-endian: a 4-byte magic (`0x00000803` for a u8 image
//! tensor, `0x00000801` for a u8 label vector) followed by one u32 per
//! dimension and then raw bytes. Gzip-compressed files are detected by their
//! `1f 8b` prefix and inflated transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;
pub const NUM_CLASSES: usize = 10;
pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Pixels are snapped to multiples of 2⁻⁵³ so that `1 - (1 - v) == v` holds
/// exactly for every stored value.
const GRID: f64 = 9_007_199_254_740_992.0; // 2^53

#[inline]
pub(crate) fn snap(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * GRID).round() / GRID
}

/// A 28×28 grayscale image with values in `[0, 1]`, row-major.
#[derive(Clone, PartialEq)]
pub struct Image {
    px: Box<[f64; PIXELS]>,
}

impl Image {
    pub fn blank() -> Self {
        Image {
            px: Box::new([0.0; PIXELS]),
        }
    }

    pub fn filled(value: f64) -> Self {
        Image {
            px: Box::new([snap(value); PIXELS]),
        }
    }

    /// Builds an image from row-major values, clamping to `[0, 1]`.
    pub fn from_pixels(values: &[f64]) -> Result<Self> {
        if values.len() != PIXELS {
            return Err(Error::Data(format!(
                "image needs {PIXELS} pixels, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite pixel".into()));
        }
        let mut img = Image::blank();
        for (d, &s) in img.px.iter_mut().zip(values) {
            *d = snap(s);
        }
        Ok(img)
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        let mut img = Image::blank();
        for (d, &b) in img.px.iter_mut().zip(bytes) {
            *d = snap(f64::from(b) / 255.0);
        }
        img
    }

    /// Builds an image from a per-pixel function of `(row, col)`.
    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut img = Image::blank();
        for r in 0..SIDE {
            for c in 0..SIDE {
                img.px[r * SIDE + c] = snap(f(r, c));
            }
        }
        img
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.px[row * SIDE + col]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.px[..]
    }

    pub fn is_blank(&self) -> bool {
        self.px.iter().all(|&v| v == 0.0)
    }
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mass: f64 = self.px.iter().sum();
        write!(f, "Image(28x28, mass {mass:.3})")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Labeled images of one split.
#[derive(Debug, Clone)]
pub struct ImageDataset {
    pub images: Vec<Image>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl ImageDataset {
    pub fn new(images: Vec<Image>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| usize::from(l) >= NUM_CLASSES) {
            return Err(Error::Data(format!("label {bad} out of range")));
        }
        Ok(ImageDataset {
            images,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Count of examples per class.
    pub fn label_histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0; NUM_CLASSES];
        for &l in &self.labels {
            h[usize::from(l)] += 1;
        }
        h
    }

    /// The first `n` examples (or all, if fewer).
    pub fn truncated(&self, n: usize) -> ImageDataset {
        let n = n.min(self.len());
        ImageDataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }
}

/// Parsed IDX header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<u32>,
}

impl IdxHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let magic = read_u32(bytes, 0)?;
        if magic >> 16 != 0 || (magic >> 8) & 0xff != 0x08 {
            return Err(Error::Parse {
                offset: 0,
                message: format!("bad magic number {magic:#010x}: expected u8 IDX data"),
            });
        }
        let ndims = (magic & 0xff) as usize;
        let dims = (0..ndims)
            .map(|i| read_u32(bytes, 4 + 4 * i as u64))
            .collect::<Result<Vec<_>>>()?;
        Ok(IdxHeader { magic, dims })
    }

    pub fn byte_len(&self) -> usize {
        4 + 4 * self.dims.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.magic.to_be_bytes().to_vec();
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out
    }

    fn payload_len(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }
}

fn read_u32(bytes: &[u8], offset: u64) -> Result<u32> {
    let o = offset as usize;
    bytes
        .get(o..o + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            offset,
            message: format!("truncated header: file has {} bytes", bytes.len()),
        })
}

/// Reads a file, inflating it if it carries a gzip signature.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Parse {
                offset: 0,
                message: format!("{}: bad gzip stream: {e}", path.display()),
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn payload<'a>(bytes: &'a [u8], header: &IdxHeader) -> Result<&'a [u8]> {
    let start = header.byte_len();
    let need = header.payload_len();
    let have = bytes.len().saturating_sub(start);
    if have < need {
        return Err(Error::Parse {
            offset: bytes.len() as u64,
            message: format!("truncated payload: expected {need} bytes after header, found {have}"),
        });
    }
    Ok(&bytes[start..start + need])
}

/// Parses an IDX image tensor held in memory.
fn expect_magic(bytes: &[u8], expected: u32, kind: &str) -> Result<()> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad magic number {magic:#010x} for {kind}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

pub fn parse_images(bytes: &[u8]) -> Result<Vec<Image>> {
    expect_magic(bytes, IMAGE_MAGIC, "images")?;
    let header = IdxHeader::parse(bytes)?;
    for (i, &d) in header.dims[1..].iter().enumerate() {
        if d as usize != SIDE {
            return Err(Error::Parse {
                offset: 8 + 4 * i as u64,
                message: format!("image dimension {d}, expected {SIDE}"),
            });
        }
    }
    let data = payload(bytes, &header)?;
    Ok(data.chunks_exact(PIXELS).map(Image::from_bytes).collect())
}

/// Parses an IDX label vector held in memory.
pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    expect_magic(bytes, LABEL_MAGIC, "labels")?;
    let header = IdxHeader::parse(bytes)?;
    let data = payload(bytes, &header)?;
    if let Some(pos) = data.iter().position(|&l| usize::from(l) >= NUM_CLASSES) {
        return Err(Error::Parse {
            offset: (header.byte_len() + pos) as u64,
            message: format!("label {} out of range", data[pos]),
        });
    }
    Ok(data.to_vec())
}

/// Loads an image/label file pair.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<ImageDataset> {
    let images = parse_images(&read_maybe_gzip(images_path)?)?;
    let labels = parse_labels(&read_maybe_gzip(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::Parse {
            offset: 4,
            message: format!(
                "{} declares {} images but {} declares {} labels",
                images_path.display(),
                images.len(),
                labels_path.display(),
                labels.len()
            ),
        });
    }
    ImageDataset::new(images, labels, split)
}

/// Both MNIST splits.
#[derive(Debug, Clone)]
pub struct Mnist {
    pub train: ImageDataset,
    pub test: ImageDataset,
}

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

impl Mnist {
    /// Loads the four standard files from `dir`, accepting either the raw
    /// names or the same names with a `.gz` suffix.
    pub fn load_dir(dir: &Path) -> Result<Mnist> {
        let find = |name: &str| {
            let raw = dir.join(name);
            if raw.exists() {
                return Ok(raw);
            }
            let gz = dir.join(format!("{name}.gz"));
            if gz.exists() {
                return Ok(gz);
            }
            Err(Error::io(
                raw,
                std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found"),
            ))
        };
        Ok(Mnist {
            train: load_idx(&find(MNIST_FILES[0])?, &find(MNIST_FILES[1])?, Split::Train)?,
            test: load_idx(&find(MNIST_FILES[2])?, &find(MNIST_FILES[3])?, Split::Test)?,
        })
    }

    pub fn split(&self, split: Split) -> &ImageDataset {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

/// One flattened example.
#[derive(Debug, Clone)]
pub struct FlatSample {
    pub x: DenseVector,
    pub label: u8,
    /// The image had no ink; `x` is left at zero and the sample should be
    /// excluded from cosine computations.
    pub blank: bool,
}

/// Row-major flattening, optionally projected onto the unit sphere.
pub fn flatten_and_normalize(ds: &ImageDataset, unit_sphere: bool) -> Vec<FlatSample> {
    ds.images
        .iter()
        .zip(&ds.labels)
        .map(|(img, &label)| {
            let mut x = img.pixels().to_vec();
            let blank = normalize_in_place(&mut x, unit_sphere);
            FlatSample {
                x: DenseVector::from_vec(x).expect("pixels are finite"),
                label,
                blank,
            }
        })
        .collect()
}

/// Re-normalizes already flattened vectors (idempotent on unit vectors).
pub fn renormalize(samples: &[FlatSample]) -> Vec<FlatSample> {
    samples
        .iter()
        .map(|s| {
            let mut x = s.x.as_slice().to_vec();
            let blank = normalize_in_place(&mut x, true);
            FlatSample {
                x: DenseVector::from_vec(x).expect("finite"),
                label: s.label,
                blank,
            }
        })
        .collect()
}

/// Returns whether the vector was all zeros.
fn normalize_in_place(x: &mut [f64], unit_sphere: bool) -> bool {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return true;
    }
    if unit_sphere {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    false
}

/// Stacks images into an `n × 784` design matrix.
pub fn design_matrix(images: &[Image], unit_sphere: bool) -> DenseMatrix {
    let mut data = Vec::with_capacity(images.len() * PIXELS);
    for img in images {
        let start = data.len();
        data.extend_from_slice(img.pixels());
        normalize_in_place(&mut data[start..], unit_sphere);
    }
    DenseMatrix::from_vec(images.len(), PIXELS, data).expect("pixels are finite")
}
