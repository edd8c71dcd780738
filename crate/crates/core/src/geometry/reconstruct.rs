//! Approximate digit reconstruction through the encoder pseudo-inverse.
//!
//! A hidden vector `s ~ N(R_iᵀ ⊙ c_t, σ)` is mapped back to pixel space with
//! `x̄ = C⁺ s`, ignoring the ReLU.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Split, PIXELS, SIDE};
use crate::error::{Error, Result};
use crate::linalg::{sample_gaussian, Broadcast, DenseVector, SeededRng};
use crate::model::CrwnModel;
use crate::render::GrayImage;
use crate::tasks::TaskSuite;

/// How the `1/D` spread of the sampler is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    /// Per-coordinate standard deviation `scale / D`.
    Std,
    /// Per-coordinate variance `scale / D`.
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructConfig {
    pub sigma_mode: SigmaMode,
    /// Multiplies the `1/D` spread; `0` gives the deterministic mean.
    pub sigma_scale: f64,
    /// Draws averaged into one reconstruction.
    pub samples: usize,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig {
            sigma_mode: SigmaMode::Std,
            sigma_scale: 1.0,
            samples: 16,
        }
    }
}

impl ReconstructConfig {
    fn std(&self, width: usize) -> f64 {
        let spread = self.sigma_scale / width as f64;
        match self.sigma_mode {
            SigmaMode::Std => spread,
            SigmaMode::Variance => spread.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub class: usize,
    pub task_id: usize,
    /// Raw `C⁺ s` values, row-major 28×28.
    pub raw: Vec<f64>,
}

impl Reconstruction {
    /// Affine rescale of the raw values to `[0, 1]` for display.
    pub fn display(&self) -> Vec<f64> {
        let lo = self.raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            self.raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
        } else {
            vec![0.0; self.raw.len()]
        }
    }
}

/// Mean of `cfg.samples` reconstructions of class `class` under task
/// `task_id`'s context.
pub fn reconstruct_digit(
    model: &CrwnModel,
    class: usize,
    task_id: usize,
    sample_seed: u64,
    cfg: &ReconstructConfig,
) -> Result<Reconstruction> {
    let dims = model.dims();
    if class >= dims.classes {
        return Err(Error::Domain(format!(
            "class {class} out of range for {} classes",
            dims.classes
        )));
    }
    if dims.input != PIXELS {
        return Err(Error::Domain(format!(
            "reconstruction needs {PIXELS} inputs, model has {}",
            dims.input
        )));
    }
    if cfg.samples == 0 || !(cfg.sigma_scale >= 0.0) {
        return Err(Error::Domain("samples must be >= 1 and sigma_scale >= 0".into()));
    }
    let c = model.context(task_id)?.context_vector();
    let mean = DenseVector::from_vec(model.readout().anchor(class).to_vec())?.hadamard(&c)?;
    let pinv = model.encoder().pseudo_inverse()?;
    let std = cfg.std(dims.width);
    let mut rng = SeededRng::new(SeededRng::child_seed(
        sample_seed,
        &format!("reconstruct/{class}/{task_id}"),
    ));
    let mut raw = vec![0.0; PIXELS];
    for _ in 0..cfg.samples {
        let s = sample_gaussian(&mut rng, dims.width, Broadcast::Vector(&mean), Broadcast::Scalar(std))?;
        for (acc, x) in raw.iter_mut().zip(pinv.matvec(&s)?.as_slice()) {
            *acc += x;
        }
    }
    raw.iter_mut().for_each(|v| *v /= cfg.samples as f64);
    Ok(Reconstruction { class, task_id, raw })
}

/// Per-class mean images of one task split (row-major, unnormalized pixels).
pub fn class_mean_images(
    suite: &TaskSuite,
    task_id: usize,
    split: Split,
    classes: usize,
) -> Result<Vec<Vec<f64>>> {
    let images = suite.task_images(task_id, split)?;
    let labels = suite.labels_of(split);
    let mut sums = vec![vec![0.0; PIXELS]; classes];
    let mut counts = vec![0usize; classes];
    for (img, &y) in images.iter().zip(labels) {
        let k = usize::from(y);
        counts[k] += 1;
        for (s, p) in sums[k].iter_mut().zip(img.pixels()) {
            *s += p;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n == 0 {
            return Err(Error::Analysis("a class has no images in this split".into()));
        }
        s.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(sums)
}

/// `classes × tasks` grid of display-scaled reconstructions, written as PGM
/// or PNG depending on the extension of `path`.
pub fn reconstruction_grid(
    model: &CrwnModel,
    classes: &[usize],
    tasks: &[usize],
    sample_seed: u64,
    cfg: &ReconstructConfig,
    path: &Path,
) -> Result<Vec<Vec<Reconstruction>>> {
    let cells = reconstruction_cells(model, classes, tasks, sample_seed, cfg)?;
    grid_image(&cells).write(path)?;
    Ok(cells)
}

/// The reconstructions of [`reconstruction_grid`] without writing a file.
pub fn reconstruction_cells(
    model: &CrwnModel,
    classes: &[usize],
    tasks: &[usize],
    sample_seed: u64,
    cfg: &ReconstructConfig,
) -> Result<Vec<Vec<Reconstruction>>> {
    if classes.is_empty() || tasks.is_empty() {
        return Err(Error::Domain("reconstruction grid needs at least one class and one task".into()));
    }
    classes
        .iter()
        .map(|&k| {
            tasks
                .iter()
                .map(|&t| reconstruct_digit(model, k, t, sample_seed, cfg))
                .collect()
        })
        .collect()
}

/// Tiles reconstructions with a one-pixel gutter.
pub fn grid_image(cells: &[Vec<Reconstruction>]) -> GrayImage {
    let rows = cells.len();
    let cols = cells.first().map_or(0, Vec::len);
    let (w, h) = (cols * (SIDE + 1) + 1, rows * (SIDE + 1) + 1);
    let mut img = GrayImage::new(w, h);
    for (r, row) in cells.iter().enumerate() {
        for (c, rec) in row.iter().enumerate() {
            let px = rec.display();
            for y in 0..SIDE {
                for x in 0..SIDE {
                    img.set(c * (SIDE + 1) + 1 + x, r * (SIDE + 1) + 1 + y, px[y * SIDE + x]);
                }
            }
        }
    }
    img
}
