//! Task-id recoverability from representations via nearest centroids.

use serde::{Deserialize, Serialize};

use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::linalg::SeededRng;
use crate::model::CrwnModel;
use crate::tasks::{image_index, TaskSuite};
use crate::train::hidden_features;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub tasks: usize,
    pub fit_samples: usize,
    pub held_out_samples: usize,
    pub held_out_accuracy: f64,
    pub in_sample_accuracy: f64,
    pub chance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Fraction of each task's samples used to fit the centroids.
    pub fit_fraction: f64,
    pub samples_per_task: usize,
    pub split: Split,
    pub unit_sphere: bool,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            fit_fraction: 0.5,
            samples_per_task: 500,
            split: Split::Test,
            unit_sphere: true,
            seed: 0,
        }
    }
}

/// Fits one centroid per task on unit-normalized representations and
/// classifies held-out samples by the nearest centroid (Euclidean), which is
/// a linear rule in the representation.
pub fn recoverability_probe(
    model: &CrwnModel,
    suite: &TaskSuite,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    let tasks = suite.len();
    if tasks < 2 {
        return Err(Error::Analysis("probe needs at least two tasks".into()));
    }
    if !(cfg.fit_fraction > 0.0 && cfg.fit_fraction < 1.0) || cfg.samples_per_task < 2 {
        return Err(Error::Analysis(
            "probe needs fit_fraction in (0, 1) and at least 2 samples per task".into(),
        ));
    }
    let base = suite.base().split(cfg.split);
    let mut indices: Vec<usize> = (0..base.len()).collect();
    SeededRng::new(SeededRng::child_seed(cfg.seed, "probe")).shuffle(&mut indices);
    indices.truncate(cfg.samples_per_task);
    let n_fit = ((indices.len() as f64 * cfg.fit_fraction).round() as usize).clamp(1, indices.len() - 1);
    let width = model.dims().width;

    let mut centroids = vec![vec![0.0f64; width]; tasks];
    let mut fit: Vec<(usize, Vec<f32>)> = Vec::new();
    let mut held: Vec<(usize, Vec<f32>)> = Vec::new();
    for (t, spec) in suite.tasks.iter().enumerate() {
        let c = model.context(spec.task_id)?.context_vector();
        let images: Vec<_> = indices
            .iter()
            .map(|&i| spec.apply(&base.images[i], image_index(cfg.split, i)))
            .collect();
        let hidden = hidden_features(model.encoder(), &images, cfg.unit_sphere)?;
        let mut fitted = 0;
        for (k, h) in hidden.row_iter().enumerate() {
            let r: Vec<f64> = h.iter().zip(c.as_slice()).map(|(a, b)| a * b).collect();
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let unit: Vec<f32> = r.iter().map(|x| (x / norm) as f32).collect();
            if k < n_fit {
                for (s, &u) in centroids[t].iter_mut().zip(&unit) {
                    *s += f64::from(u);
                }
                fitted += 1;
                fit.push((t, unit));
            } else {
                held.push((t, unit));
            }
        }
        if fitted == 0 {
            return Err(Error::Analysis(format!(
                "task {} has no non-zero representations to fit",
                spec.label()
            )));
        }
        centroids[t].iter_mut().for_each(|s| *s /= fitted as f64);
    }
    if held.is_empty() {
        return Err(Error::Analysis("no held-out samples".into()));
    }
    let norms: Vec<f64> = centroids.iter().map(|m| m.iter().map(|x| x * x).sum()).collect();
    let classify = |u: &[f32]| {
        let mut best = (f64::NEG_INFINITY, 0);
        for (t, m) in centroids.iter().enumerate() {
            let d: f64 = m.iter().zip(u).map(|(a, &b)| a * f64::from(b)).sum();
            let score = 2.0 * d - norms[t];
            if score > best.0 {
                best = (score, t);
            }
        }
        best.1
    };
    let accuracy = |set: &[(usize, Vec<f32>)]| {
        set.iter().filter(|(t, u)| classify(u) == *t).count() as f64 / set.len() as f64
    };
    Ok(ProbeResult {
        tasks,
        fit_samples: fit.len(),
        held_out_samples: held.len(),
        held_out_accuracy: accuracy(&held),
        in_sample_accuracy: accuracy(&fit),
        chance: 1.0 / tasks as f64,
    })
}
