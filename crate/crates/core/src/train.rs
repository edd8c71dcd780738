//! Task-incremental training of per-task contexts.
//!
//! Only `(α_t, v^t)` of the task being trained is updated. The loss is mean
//! softmax cross-entropy plus an optional `λ‖v‖₁` penalty, and gradients are
//! analytic: with `h = relu(Cx)`, `p = softmax(ŷ)` and `e = p − onehot(y)`,
//!
//! ```text
//! ∂L/∂c = mean over batch of (Rᵀ e) ⊙ h
//! ∂L/∂v = α · ∂L/∂c + λ · sign(v)
//! ∂L/∂α = v · ∂L/∂c
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{design_matrix, Image, Split};
use crate::error::{Error, Result};
use crate::linalg::{matmul, DenseMatrix, DenseVector, SeededRng};
use crate::model::{argmax, CrwnModel, FrozenEncoder, Phase, TaskContext};
use crate::tasks::TaskSuite;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub const DEFAULT_LEARNING_RATE: f64 = 0.05;
pub const DEFAULT_EPOCHS: usize = 10;
pub const DEFAULT_BATCH_SIZE: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Weight of the `‖v‖₁` penalty.
    pub l1_on_v: f64,
    pub shuffle_seed: u64,
    /// Project inputs onto the unit sphere before encoding.
    pub unit_sphere: bool,
    /// Permit training tasks out of suite order (ablations only).
    pub allow_out_of_order: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            optimizer: Optimizer::default(),
            l1_on_v: 0.0,
            shuffle_seed: 0,
            unit_sphere: true,
            allow_out_of_order: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.l1_on_v >= 0.0) {
            return Err(Error::Config(format!("l1_on_v must be >= 0, got {}", self.l1_on_v)));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(Error::Config("adam needs beta1, beta2 in [0, 1) and eps > 0".into()));
            }
        }
        Ok(())
    }
}

/// Loss and gradients with respect to one task's parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub grad_alpha: f64,
    pub grad_v: DenseVector,
    /// Correct argmax predictions in the batch.
    pub correct: usize,
}

/// Loss and gradients for a batch of raw inputs (`n × d`).
pub fn loss_and_grads(
    model: &CrwnModel,
    task_id: usize,
    inputs: &DenseMatrix,
    labels: &[u8],
    l1_on_v: f64,
) -> Result<Gradients> {
    let hidden = model.encoder().hidden_batch(inputs)?;
    let ctx = model.context(task_id)?;
    loss_and_grads_hidden(model, ctx, &hidden, labels, l1_on_v)
}

/// Same as [`loss_and_grads`] on precomputed hidden activations (`n × D`).
pub fn loss_and_grads_hidden(
    model: &CrwnModel,
    ctx: &TaskContext,
    hidden: &DenseMatrix,
    labels: &[u8],
    l1_on_v: f64,
) -> Result<Gradients> {
    let n = hidden.rows();
    if n == 0 || labels.len() != n {
        return Err(Error::Data(format!(
            "batch has {n} rows and {} labels",
            labels.len()
        )));
    }
    let classes = model.dims().classes;
    if let Some(&bad) = labels.iter().find(|&&y| usize::from(y) >= classes) {
        return Err(Error::Data(format!("label {bad} >= {classes} classes")));
    }
    let c = ctx.context_vector();
    let w = model.modulated_readout(c.as_slice())?;
    let logits = crate::linalg::matmul_transposed(hidden, &w)?;

    let mut loss = 0.0;
    let mut correct = 0;
    let mut err = vec![0.0; n * classes];
    for (i, (z, &y)) in logits.row_iter().zip(labels).enumerate() {
        let y = usize::from(y);
        if argmax(z) == y {
            correct += 1;
        }
        let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|&v| (v - zmax).exp()).collect();
        let total: f64 = exps.iter().sum();
        loss += total.ln() - (z[y] - zmax);
        let e = &mut err[i * classes..(i + 1) * classes];
        for (k, ex) in exps.iter().enumerate() {
            e[k] = ex / total;
        }
        e[y] -= 1.0;
    }
    let inv_n = 1.0 / n as f64;
    loss *= inv_n;

    // Σ_i e_i h_iᵀ as a (classes × D) matrix, then contract with R.
    let err_t = DenseMatrix::from_vec(n, classes, err)?.transpose();
    let eh = matmul(&err_t, hidden)?;
    let r = &model.readout().weights;
    let width = model.dims().width;
    let mut grad_c = vec![0.0; width];
    for (rk, mk) in r.row_iter().zip(eh.row_iter()) {
        for j in 0..width {
            grad_c[j] += rk[j] * mk[j];
        }
    }
    grad_c.iter_mut().for_each(|g| *g *= inv_n);

    let v = ctx.v.as_slice();
    let grad_alpha = v.iter().zip(&grad_c).map(|(a, b)| a * b).sum();
    let grad_v = grad_c
        .iter()
        .zip(v)
        .map(|(g, &vj)| ctx.alpha * g + l1_on_v * sign(vj))
        .collect();
    if l1_on_v > 0.0 {
        loss += l1_on_v * ctx.v.l1_norm();
    }
    Ok(Gradients {
        loss,
        grad_alpha,
        grad_v: DenseVector::from_vec(grad_v)?,
        correct,
    })
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Hidden activations `relu(C x)` for a list of images, built in chunks to
/// bound the size of the intermediate design matrix.
pub fn hidden_features(
    encoder: &FrozenEncoder,
    images: &[Image],
    unit_sphere: bool,
) -> Result<DenseMatrix> {
    const CHUNK: usize = 2048;
    let width = encoder.weights.rows();
    let mut data = Vec::with_capacity(images.len() * width);
    for chunk in images.chunks(CHUNK) {
        let x = design_matrix(chunk, unit_sphere);
        data.extend_from_slice(encoder.hidden_batch(&x)?.as_slice());
    }
    DenseMatrix::from_vec(images.len(), width, data)
}

/// Hidden activations of one task split together with its labels.
#[derive(Debug, Clone)]
pub struct TaskFeatures {
    pub task_id: usize,
    pub split: Split,
    pub hidden: DenseMatrix,
    pub labels: Vec<u8>,
}

impl TaskFeatures {
    pub fn compute(
        model: &CrwnModel,
        suite: &TaskSuite,
        task_id: usize,
        split: Split,
        unit_sphere: bool,
    ) -> Result<Self> {
        let images = suite.task_images(task_id, split)?;
        Ok(TaskFeatures {
            task_id,
            split,
            hidden: hidden_features(model.encoder(), &images, unit_sphere)?,
            labels: suite.labels_of(split).to_vec(),
        })
    }

    /// Number of argmax-correct predictions under the model's context for
    /// this task.
    pub fn correct(&self, model: &CrwnModel) -> Result<usize> {
        let logits = model.logits_from_hidden(self.task_id, &self.hidden)?;
        Ok(logits
            .row_iter()
            .zip(&self.labels)
            .filter(|(z, &y)| argmax(z) == usize::from(y))
            .count())
    }

    pub fn accuracy(&self, model: &CrwnModel) -> Result<f64> {
        if self.labels.is_empty() {
            return Err(Error::Data("accuracy of an empty split".into()));
        }
        Ok(self.correct(model)? as f64 / self.labels.len() as f64)
    }
}

/// Fraction of argmax-correct predictions of a task split.
pub fn evaluate(
    model: &CrwnModel,
    suite: &TaskSuite,
    task_id: usize,
    split: Split,
    unit_sphere: bool,
) -> Result<f64> {
    TaskFeatures::compute(model, suite, task_id, split, unit_sphere)?.accuracy(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub task_id: usize,
    pub label: String,
    pub epochs: Vec<EpochStats>,
    pub test_accuracy: f64,
    pub wall_time_secs: f64,
}

impl TrainRecord {
    /// Same numbers, ignoring wall time.
    pub fn same_numbers(&self, other: &TrainRecord) -> bool {
        self.task_id == other.task_id
            && self.epochs == other.epochs
            && self.test_accuracy.to_bits() == other.test_accuracy.to_bits()
    }
}

/// Per-coordinate optimizer state over `[α, v_0, …, v_{D−1}]`.
struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    m: Vec<f64>,
    s: Vec<f64>,
    step: i32,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, len: usize) -> Self {
        OptimizerState {
            kind,
            lr,
            m: vec![0.0; len],
            s: vec![0.0; len],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(self.step);
                let bc2 = 1.0 - beta2.powi(self.step);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.s[i] = beta2 * self.s[i] + (1.0 - beta2) * g * g;
                    let mhat = self.m[i] / bc1;
                    let shat = self.s[i] / bc2;
                    params[i] -= self.lr * mhat / (shat.sqrt() + eps);
                }
            }
        }
    }
}

/// Trains one context on precomputed features. Returns per-epoch stats.
pub fn fit_context(
    model: &mut CrwnModel,
    task_id: usize,
    train: &TaskFeatures,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Ok(Vec::new());
    }
    let n = train.labels.len();
    if n == 0 {
        return Err(Error::Data("empty training split".into()));
    }
    let width = model.dims().width;
    let mut ctx = model.context(task_id)?.clone();
    let mut params = Vec::with_capacity(width + 1);
    params.push(ctx.alpha);
    params.extend_from_slice(ctx.v.as_slice());
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate, width + 1);
    let mut rng = SeededRng::new(SeededRng::child_seed(
        cfg.shuffle_seed,
        &format!("shuffle/{task_id}"),
    ));
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = Vec::with_capacity(cfg.epochs);
    let mut grads = vec![0.0; width + 1];

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(cfg.batch_size) {
            let mut data = Vec::with_capacity(batch.len() * width);
            for &i in batch {
                data.extend_from_slice(train.hidden.row(i));
            }
            let hidden = DenseMatrix::from_vec(batch.len(), width, data)?;
            let labels: Vec<u8> = batch.iter().map(|&i| train.labels[i]).collect();
            let g = loss_and_grads_hidden(model, &ctx, &hidden, &labels, cfg.l1_on_v)?;
            loss_sum += g.loss * batch.len() as f64;
            correct += g.correct;
            grads[0] = g.grad_alpha;
            grads[1..].copy_from_slice(g.grad_v.as_slice());
            opt.update(&mut params, &grads);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Numeric(format!(
                    "training task {task_id} diverged in epoch {epoch}"
                )));
            }
            ctx.alpha = params[0];
            ctx.v = DenseVector::from_vec(params[1..].to_vec())?;
        }
        stats.push(EpochStats {
            epoch,
            loss: loss_sum / n as f64,
            accuracy: correct as f64 / n as f64,
        });
    }
    ctx.phase = Phase::Trained;
    *model.context_mut(task_id)? = ctx;
    Ok(stats)
}

/// Seed of the initial context of a task.
pub fn context_seed_for(context_seed: u64, task_id: usize) -> u64 {
    SeededRng::child_seed(context_seed, &format!("context/{task_id}"))
}

/// Enforces suite order across successive [`Trainer::train_task`] calls.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub context_seed: u64,
    next_position: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, context_seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Trainer {
            cfg,
            context_seed,
            next_position: 0,
        })
    }

    /// Trains `task_id`; earlier tasks in the suite must already have been
    /// trained by this trainer unless out-of-order training is allowed.
    pub fn train_task(
        &mut self,
        model: &mut CrwnModel,
        suite: &TaskSuite,
        task_id: usize,
    ) -> Result<TrainRecord> {
        let position = suite
            .tasks
            .iter()
            .position(|t| t.task_id == task_id)
            .ok_or_else(|| Error::Config(format!("task {task_id} not in suite")))?;
        if position != self.next_position && !self.cfg.allow_out_of_order {
            return Err(Error::Protocol(format!(
                "task {task_id} requested but the next task in suite order is position {}",
                self.next_position
            )));
        }
        let start = Instant::now();
        if model.context(task_id).is_err() {
            model.init_context(task_id, context_seed_for(self.context_seed, task_id))?;
        }
        let train = TaskFeatures::compute(model, suite, task_id, Split::Train, self.cfg.unit_sphere)?;
        let epochs = fit_context(model, task_id, &train, &self.cfg)?;
        drop(train);
        let test_accuracy = evaluate(model, suite, task_id, Split::Test, self.cfg.unit_sphere)?;
        self.next_position = self.next_position.max(position + 1);
        Ok(TrainRecord {
            task_id,
            label: suite.task(task_id)?.label(),
            epochs,
            test_accuracy,
            wall_time_secs: start.elapsed().as_secs_f64(),
        })
    }
}

/// `A[i][j]`: test accuracy on task `j` after training task `i` (`j ≤ i`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl AccuracyMatrix {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values.get(i).and_then(|r| r.get(j)).copied().flatten()
    }

    /// Mean of the last row: accuracy over all tasks at the end of training.
    pub fn final_mean(&self) -> f64 {
        let last = self.values.last().map(Vec::as_slice).unwrap_or(&[]);
        let vals: Vec<f64> = last.iter().flatten().copied().collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }

    /// Pairs `(i, j)` with `i > j` where `A[i][j] != A[j][j]` bitwise.
    pub fn forgetting_violations(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            for j in 0..i {
                let a = self.get(i, j).map(f64::to_bits);
                let b = self.get(j, j).map(f64::to_bits);
                if a.is_none() || a != b {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("after_task");
        for l in &self.labels {
            let _ = write!(s, ",{l}");
        }
        s.push('\n');
        for (i, row) in self.values.iter().enumerate() {
            let _ = write!(s, "{}", self.labels[i]);
            for v in row {
                match v {
                    Some(a) => {
                        let _ = write!(s, ",{a}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct ContinualOutcome {
    pub records: Vec<TrainRecord>,
    pub accuracy: AccuracyMatrix,
}

/// Trains every task of the suite in order, then fills the accuracy matrix
/// by replaying the context snapshot taken after each task.
pub fn run_continual(
    model: &mut CrwnModel,
    suite: &TaskSuite,
    cfg: &TrainConfig,
    context_seed: u64,
) -> Result<ContinualOutcome> {
    run_continual_with(model, suite, cfg, context_seed, |_| {})
}

/// [`run_continual`] with a callback invoked after each task.
pub fn run_continual_with(
    model: &mut CrwnModel,
    suite: &TaskSuite,
    cfg: &TrainConfig,
    context_seed: u64,
    mut on_task: impl FnMut(&TrainRecord),
) -> Result<ContinualOutcome> {
    if let Some(t) = suite.tasks.iter().find(|t| model.context(t.task_id).is_ok()) {
        return Err(Error::State(format!(
            "run_continual needs fresh contexts but task {} already has one",
            t.task_id
        )));
    }
    let mut trainer = Trainer::new(cfg.clone(), context_seed)?;
    let mut records = Vec::with_capacity(suite.len());
    let mut snapshots: Vec<BTreeMap<usize, TaskContext>> = Vec::with_capacity(suite.len());
    for spec in &suite.tasks {
        let rec = trainer.train_task(model, suite, spec.task_id)?;
        on_task(&rec);
        records.push(rec);
        snapshots.push(model.snapshot_contexts());
    }

    let n = suite.len();
    let mut values = vec![vec![None; n]; n];
    for (j, spec) in suite.tasks.iter().enumerate() {
        let test = TaskFeatures::compute(model, suite, spec.task_id, Split::Test, cfg.unit_sphere)?;
        for (i, snap) in snapshots.iter().enumerate().skip(j) {
            let state = model.with_contexts(snap.clone());
            values[i][j] = Some(test.accuracy(&state)?);
        }
    }
    Ok(ContinualOutcome {
        records,
        accuracy: AccuracyMatrix {
            labels: suite.labels(),
            values,
        },
    })
}

pub const EPOCH_CSV_HEADER: &str = "task_id,label,epoch,train_loss,train_accuracy,test_accuracy";

/// One CSV row per epoch. Wall time is left out so identical runs produce
/// identical files.
pub fn records_to_csv(records: &[TrainRecord]) -> String {
    let mut s = format!("{EPOCH_CSV_HEADER}\n");
    for r in records {
        for e in &r.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.task_id, r.label, e.epoch, e.loss, e.accuracy, r.test_accuracy
            );
        }
    }
    s
}

/// Appends epoch rows to `path`, writing the header if the file is new.
pub fn append_records_csv(path: &Path, records: &[TrainRecord]) -> Result<()> {
    use std::io::Write;
    let exists = path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let body = records_to_csv(records);
    let body = if exists {
        body.split_once('\n').map_or("", |(_, rest)| rest).to_string()
    } else {
        body
    };
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}
