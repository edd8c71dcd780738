//! Cosine-similarity structure of contexts and representations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::{bootstrap_mean_difference, BootstrapInterval};
use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::linalg::{cosine_slices, SeededRng};
use crate::model::{CrwnModel, Phase};
use crate::tasks::TaskSuite;
use crate::train::hidden_features;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    Context,
    RepresentationIntraInter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub phase: Phase,
    pub kind: SimilarityKind,
}

/// Pairwise cosine similarity of `c_t = α_t v^t` over all tasks of the
/// model, in the requested phase.
pub fn context_similarity_matrix(model: &CrwnModel, phase: Phase) -> Result<SimilarityReport> {
    let ids = model.task_ids();
    let labels = ids.iter().map(|t| format!("T{t}")).collect();
    context_similarity_for(model, &ids, labels, phase)
}

/// Same as [`context_similarity_matrix`] for the tasks of a suite, in suite
/// order and with suite labels.
pub fn suite_context_similarity(
    model: &CrwnModel,
    suite: &TaskSuite,
    phase: Phase,
) -> Result<SimilarityReport> {
    let ids: Vec<usize> = suite.tasks.iter().map(|t| t.task_id).collect();
    context_similarity_for(model, &ids, suite.labels(), phase)
}

fn context_similarity_for(
    model: &CrwnModel,
    ids: &[usize],
    labels: Vec<String>,
    phase: Phase,
) -> Result<SimilarityReport> {
    let contexts = ids
        .iter()
        .map(|&t| Ok(model.context_in_phase(t, phase)?.context_vector()))
        .collect::<Result<Vec<_>>>()?;
    let n = contexts.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        matrix[i][i] = 1.0;
        for j in 0..i {
            let s = cosine_slices(contexts[i].as_slice(), contexts[j].as_slice())?;
            matrix[i][j] = s;
            matrix[j][i] = s;
        }
    }
    Ok(SimilarityReport {
        labels,
        matrix,
        phase,
        kind: SimilarityKind::Context,
    })
}

impl SimilarityReport {
    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.len();
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| self.matrix[i][j]))
    }

    pub fn mean_abs_off_diagonal(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        self.off_diagonal().map(f64::abs).sum::<f64>() / (n * (n - 1)) as f64
    }

    /// Mean over ordered pairs whose circular index offset satisfies `keep`.
    pub fn mean_at_circular_offsets(&self, keep: impl Fn(usize) -> bool) -> Option<f64> {
        let n = self.len();
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..n {
            for j in 0..n {
                let d = i.abs_diff(j);
                let offset = d.min(n - d);
                if offset > 0 && keep(offset) {
                    total += self.matrix[i][j];
                    count += 1;
                }
            }
        }
        (count > 0).then(|| total / count as f64)
    }

    /// Rows and columns permuted into `order`.
    pub fn reordered(&self, order: &[usize]) -> Result<SimilarityReport> {
        let mut seen = vec![false; self.len()];
        for &i in order {
            if i >= self.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Analysis(format!("invalid leaf order {order:?}")));
            }
        }
        if order.len() != self.len() {
            return Err(Error::Analysis("leaf order must cover every task".into()));
        }
        Ok(SimilarityReport {
            labels: order.iter().map(|&i| self.labels[i].clone()).collect(),
            matrix: order
                .iter()
                .map(|&i| order.iter().map(|&j| self.matrix[i][j]).collect())
                .collect(),
            ..self.clone()
        })
    }

    /// Strict upper triangle, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| self.matrix[i][j])
            .collect()
    }

    /// Keeps every `step`-th task starting at 0.
    pub fn subsampled(&self, step: usize) -> Result<SimilarityReport> {
        if step == 0 {
            return Err(Error::Analysis("subsampling step must be >= 1".into()));
        }
        let order: Vec<usize> = (0..self.len()).step_by(step).collect();
        let labels = order.iter().map(|&i| self.labels[i].clone()).collect();
        Ok(SimilarityReport {
            labels,
            matrix: order
                .iter()
                .map(|&i| order.iter().map(|&j| self.matrix[i][j]).collect())
                .collect(),
            ..self.clone()
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("task");
        for l in &self.labels {
            let _ = write!(s, ",{l}");
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.matrix) {
            s.push_str(l);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Unit-normalized representations `c_t ⊙ relu(C x)` sampled per
/// (task, class) cell, each computed with its own task context.
#[derive(Debug, Clone)]
pub struct RepresentationBank {
    pub labels: Vec<String>,
    width: usize,
    /// Row-major `n × width`, stored in single precision to halve memory.
    units: Vec<f32>,
    task_of: Vec<usize>,
    class_of: Vec<u8>,
    /// Samples dropped because their representation was exactly zero.
    pub excluded_zero: usize,
}

pub const DEFAULT_SAMPLES_PER_CLASS: usize = 200;

impl RepresentationBank {
    /// Draws up to `samples_per_class` images per (task, class) from
    /// `split`, choosing indices independently per cell with a fixed seed.
    pub fn collect(
        model: &CrwnModel,
        suite: &TaskSuite,
        samples_per_class: usize,
        split: Split,
        unit_sphere: bool,
        seed: u64,
    ) -> Result<Self> {
        if samples_per_class == 0 {
            return Err(Error::Analysis("samples_per_class must be >= 1".into()));
        }
        let base_labels = suite.labels_of(split);
        let classes = model.dims().classes;
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for (i, &y) in base_labels.iter().enumerate() {
            if let Some(list) = by_class.get_mut(usize::from(y)) {
                list.push(i);
            }
        }
        let width = model.dims().width;
        let mut bank = RepresentationBank {
            labels: suite.labels(),
            width,
            units: Vec::new(),
            task_of: Vec::new(),
            class_of: Vec::new(),
            excluded_zero: 0,
        };
        let base = suite.base().split(split);
        for (pos, spec) in suite.tasks.iter().enumerate() {
            let c = model.context(spec.task_id)?.context_vector();
            let mut picked = Vec::new();
            for (k, pool) in by_class.iter().enumerate() {
                let mut pool = pool.clone();
                let mut rng = SeededRng::new(SeededRng::child_seed(
                    seed,
                    &format!("cell/{}/{k}", spec.task_id),
                ));
                rng.shuffle(&mut pool);
                pool.truncate(samples_per_class);
                pool.sort_unstable();
                picked.extend(pool.into_iter().map(|i| (i, k as u8)));
            }
            let images: Vec<_> = picked
                .iter()
                .map(|&(i, _)| {
                    spec.apply(&base.images[i], crate::tasks::image_index(split, i))
                })
                .collect();
            let hidden = hidden_features(model.encoder(), &images, unit_sphere)?;
            for (h, &(_, k)) in hidden.row_iter().zip(&picked) {
                let r: Vec<f64> = h.iter().zip(c.as_slice()).map(|(a, b)| a * b).collect();
                let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    bank.excluded_zero += 1;
                    continue;
                }
                bank.units.extend(r.iter().map(|x| (x / norm) as f32));
                bank.task_of.push(pos);
                bank.class_of.push(k);
            }
        }
        Ok(bank)
    }

    pub fn len(&self) -> usize {
        self.task_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.task_of.is_empty()
    }

    fn unit(&self, i: usize) -> &[f32] {
        &self.units[i * self.width..(i + 1) * self.width]
    }

    /// Cosine similarity of two banked samples.
    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        let d: f64 = self
            .unit(i)
            .iter()
            .zip(self.unit(j))
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum();
        d.clamp(-1.0, 1.0)
    }

    fn cell_sums(&self, tasks: usize, classes: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut sums = vec![vec![0.0; self.width]; tasks * classes];
        let mut counts = vec![0; tasks * classes];
        for i in 0..self.len() {
            let cell = self.task_of[i] * classes + usize::from(self.class_of[i]);
            counts[cell] += 1;
            for (s, &u) in sums[cell].iter_mut().zip(self.unit(i)) {
                *s += f64::from(u);
            }
        }
        (sums, counts)
    }

    /// Exact means over all qualifying pairs in the bank, using the identity
    /// `Σ_{a∈A, b∈B} cos(a, b) = (Σ_A â) · (Σ_B b̂)` for disjoint sets.
    pub fn summary(&self, classes: usize) -> Result<IntraInterSummary> {
        let tasks = self.labels.len();
        let (sums, counts) = self.cell_sums(tasks, classes);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut intra = Vec::with_capacity(tasks);
        let mut intra_pairs = Vec::with_capacity(tasks);
        for t in 0..tasks {
            let mut total = 0.0;
            let mut pairs = 0usize;
            for k in 0..classes {
                for l in k + 1..classes {
                    let (a, b) = (t * classes + k, t * classes + l);
                    total += dot(&sums[a], &sums[b]);
                    pairs += counts[a] * counts[b];
                }
            }
            if pairs == 0 {
                return Err(Error::Analysis(format!(
                    "task {} has too few valid samples for intra-task pairs",
                    self.labels[t]
                )));
            }
            intra.push(total / pairs as f64);
            intra_pairs.push(pairs);
        }
        let mut inter = vec![vec![None; tasks]; tasks];
        let mut inter_pairs = vec![vec![0usize; tasks]; tasks];
        for t in 0..tasks {
            for u in t + 1..tasks {
                let mut total = 0.0;
                let mut pairs = 0;
                for k in 0..classes {
                    let (a, b) = (t * classes + k, u * classes + k);
                    total += dot(&sums[a], &sums[b]);
                    pairs += counts[a] * counts[b];
                }
                if pairs > 0 {
                    let m = Some(total / pairs as f64);
                    inter[t][u] = m;
                    inter[u][t] = m;
                    inter_pairs[t][u] = pairs;
                    inter_pairs[u][t] = pairs;
                }
            }
        }
        let weighted = |vals: &mut dyn Iterator<Item = (f64, usize)>| {
            let (s, n) = vals.fold((0.0, 0usize), |(s, n), (m, c)| (s + m * c as f64, n + c));
            (n > 0).then(|| s / n as f64)
        };
        let mean_intra = weighted(&mut intra.iter().copied().zip(intra_pairs.iter().copied()))
            .unwrap_or(f64::NAN);
        let mean_inter = weighted(&mut (0..tasks).flat_map(|t| {
            let inter = &inter;
            let inter_pairs = &inter_pairs;
            (t + 1..tasks).filter_map(move |u| inter[t][u].map(|m| (m, inter_pairs[t][u])))
        }));
        Ok(IntraInterSummary {
            labels: self.labels.clone(),
            intra,
            intra_pairs,
            inter,
            inter_pairs,
            mean_intra,
            mean_inter,
            samples: self.len(),
            excluded_zero: self.excluded_zero,
        })
    }

    /// Cosines of `n` random intra-task pairs (same task, different labels)
    /// and `n` random inter-task pairs (different tasks, same label).
    pub fn sample_pairs(&self, n: usize, rng: &mut SeededRng) -> Result<(Vec<f64>, Vec<f64>)> {
        let tasks = self.labels.len();
        let classes = self.class_of.iter().map(|&k| usize::from(k) + 1).max().unwrap_or(0);
        let mut by_task: Vec<Vec<usize>> = vec![Vec::new(); tasks];
        let mut by_cell: Vec<Vec<usize>> = vec![Vec::new(); tasks * classes];
        for i in 0..self.len() {
            by_task[self.task_of[i]].push(i);
            by_cell[self.task_of[i] * classes + usize::from(self.class_of[i])].push(i);
        }
        let intra_ok: Vec<usize> = (0..tasks)
            .filter(|&t| {
                let mut ks = by_task[t].iter().map(|&i| self.class_of[i]);
                ks.next().is_some_and(|k0| ks.any(|k| k != k0))
            })
            .collect();
        let inter_cells: Vec<(usize, usize, usize)> = (0..tasks)
            .flat_map(|t| (0..tasks).filter(move |&u| u != t).map(move |u| (t, u)))
            .flat_map(|(t, u)| (0..classes).map(move |k| (t, u, k)))
            .filter(|&(t, u, k)| {
                !by_cell[t * classes + k].is_empty() && !by_cell[u * classes + k].is_empty()
            })
            .collect();
        if intra_ok.is_empty() || inter_cells.is_empty() {
            return Err(Error::Analysis(
                "need at least one intra-task and one inter-task pair".into(),
            ));
        }
        let pick = |rng: &mut SeededRng, v: &[usize]| v[rng.below(v.len())];
        let mut intra = Vec::with_capacity(n);
        while intra.len() < n {
            let t = pick(rng, &intra_ok);
            let i = pick(rng, &by_task[t]);
            let j = pick(rng, &by_task[t]);
            if self.class_of[i] != self.class_of[j] {
                intra.push(self.cosine(i, j));
            }
        }
        let mut inter = Vec::with_capacity(n);
        while inter.len() < n {
            let (t, u, k) = inter_cells[rng.below(inter_cells.len())];
            let i = pick(rng, &by_cell[t * classes + k]);
            let j = pick(rng, &by_cell[u * classes + k]);
            inter.push(self.cosine(i, j));
        }
        Ok((intra, inter))
    }

    /// Bootstrap interval of mean intra minus mean inter similarity over
    /// `pairs` sampled pairs of each kind.
    pub fn bootstrap_intra_minus_inter(
        &self,
        pairs: usize,
        resamples: usize,
        level: f64,
        seed: u64,
    ) -> Result<BootstrapInterval> {
        let mut rng = SeededRng::new(SeededRng::child_seed(seed, "pairs"));
        let (intra, inter) = self.sample_pairs(pairs, &mut rng)?;
        let mut rng = SeededRng::new(SeededRng::child_seed(seed, "bootstrap"));
        bootstrap_mean_difference(&intra, &inter, resamples, level, &mut rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraInterSummary {
    pub labels: Vec<String>,
    /// Per task: mean cosine over pairs with different labels.
    pub intra: Vec<f64>,
    pub intra_pairs: Vec<usize>,
    /// Per task pair: mean cosine over pairs with the same label.
    pub inter: Vec<Vec<Option<f64>>>,
    pub inter_pairs: Vec<Vec<usize>>,
    pub mean_intra: f64,
    /// Absent for a single-task suite.
    pub mean_inter: Option<f64>,
    pub samples: usize,
    pub excluded_zero: usize,
}

/// Intra/inter summary on test images with the default sampling seed.
pub fn intra_inter_similarity(
    model: &CrwnModel,
    suite: &TaskSuite,
    samples_per_class: usize,
) -> Result<IntraInterSummary> {
    RepresentationBank::collect(model, suite, samples_per_class, Split::Test, true, 0)?
        .summary(model.dims().classes)
}
