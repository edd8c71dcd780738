//! The randomly weighted neuromodulated network.
//!
//! A frozen random encoder `C` (`D × d`) and frozen random readout `R`
//! (`classes × D`) are shared by every task. Each task owns a gain `α_t` and
//! a gating vector `v^t`; their product `c_t = α_t · v^t` is the task's
//! context vector and the logits are
//!
//! ```text
//! ŷ_t = R · (c_t ⊙ relu(C x))
//! ```
//!
//! Reading `diag(c_t)` as a per-task matrix `B^t` gives the equivalent form
//! `R · B^t · relu(C x)`, exposed as [`CrwnModel::forward_tgsh_form`].

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{
    matmul, matmul_transposed, pseudo_inverse, DenseMatrix, DenseVector, SeededRng,
    DEFAULT_RANK_TOL,
};

pub const DEFAULT_WIDTH: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Input dimension `d`.
    pub input: usize,
    /// Hidden width `D`.
    pub width: usize,
    /// Number of classes.
    pub classes: usize,
}

impl ModelDims {
    pub fn mnist(width: usize) -> Self {
        ModelDims {
            input: crate::dataset::PIXELS,
            width,
            classes: crate::dataset::NUM_CLASSES,
        }
    }
}

/// How the frozen matrices were drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    /// I.i.d. `N(0, 1/fan_in)`.
    GaussianFanIn,
}

#[derive(Debug)]
pub struct FrozenEncoder {
    pub weights: DenseMatrix,
    pub seed: u64,
    pub init: WeightInit,
    pinv: OnceLock<DenseMatrix>,
}

impl FrozenEncoder {
    fn generate(seed: u64, width: usize, input: usize, init: WeightInit) -> Self {
        FrozenEncoder {
            weights: gaussian_fan_in(seed, width, input),
            seed,
            init,
            pinv: OnceLock::new(),
        }
    }

    /// `relu(C x)` for every row `x` of `inputs` (`n × d` in, `n × D` out).
    pub fn hidden_batch(&self, inputs: &DenseMatrix) -> Result<DenseMatrix> {
        let mut h = matmul_transposed(inputs, &self.weights)?;
        h.map_inplace(relu);
        Ok(h)
    }

    pub fn hidden(&self, x: &DenseVector) -> Result<DenseVector> {
        let pre = self.weights.matvec(x)?;
        DenseVector::from_vec(pre.into_vec().into_iter().map(relu).collect())
    }

    /// Cached Moore–Penrose pseudo-inverse of `C` (`d × D`).
    pub fn pseudo_inverse(&self) -> Result<&DenseMatrix> {
        if let Some(p) = self.pinv.get() {
            return Ok(p);
        }
        let p = pseudo_inverse(&self.weights, DEFAULT_RANK_TOL)?;
        Ok(self.pinv.get_or_init(|| p))
    }
}

#[derive(Debug)]
pub struct FrozenReadout {
    pub weights: DenseMatrix,
    pub seed: u64,
}

impl FrozenReadout {
    /// Row `class` of `R`, the class's canonical representation.
    pub fn anchor(&self, class: usize) -> &[f64] {
        self.weights.row(class)
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn gaussian_fan_in(seed: u64, rows: usize, cols: usize) -> DenseMatrix {
    let std = 1.0 / (cols as f64).sqrt();
    let mut rng = SeededRng::new(seed);
    let data = (0..rows * cols).map(|_| std * rng.standard_normal()).collect();
    DenseMatrix::from_vec(rows, cols, data).expect("gaussian draws are finite")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Initial,
    Trained,
}

/// Per-task modulation `(α_t, v^t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub task_id: usize,
    pub alpha: f64,
    pub v: DenseVector,
    pub phase: Phase,
}

impl TaskContext {
    /// `c_t = α_t · v^t`.
    pub fn context_vector(&self) -> DenseVector {
        self.v.scaled(self.alpha)
    }
}

/// Frozen encoder and readout plus per-task contexts.
#[derive(Debug, Clone)]
pub struct CrwnModel {
    dims: ModelDims,
    weight_seed: u64,
    encoder: Arc<FrozenEncoder>,
    readout: Arc<FrozenReadout>,
    contexts: BTreeMap<usize, TaskContext>,
    initial: BTreeMap<usize, TaskContext>,
}

impl CrwnModel {
    /// Draws `C ~ N(0, 1/d)` and `R ~ N(0, 1/D)` from child streams of
    /// `weight_seed`.
    pub fn init(dims: ModelDims, weight_seed: u64) -> Result<Self> {
        if dims.input == 0 || dims.width == 0 || dims.classes == 0 {
            return Err(Error::Config(format!("model dimensions must be positive: {dims:?}")));
        }
        let encoder_seed = SeededRng::child_seed(weight_seed, "encoder");
        let readout_seed = SeededRng::child_seed(weight_seed, "readout");
        Ok(CrwnModel {
            dims,
            weight_seed,
            encoder: Arc::new(FrozenEncoder::generate(
                encoder_seed,
                dims.width,
                dims.input,
                WeightInit::GaussianFanIn,
            )),
            readout: Arc::new(FrozenReadout {
                weights: gaussian_fan_in(readout_seed, dims.classes, dims.width),
                seed: readout_seed,
            }),
            contexts: BTreeMap::new(),
            initial: BTreeMap::new(),
        })
    }

    /// Model with hand-specified frozen matrices, for tests and worked
    /// examples. Such a model cannot be checkpointed by seed.
    pub fn from_parts(encoder: DenseMatrix, readout: DenseMatrix) -> Result<Self> {
        if readout.cols() != encoder.rows() {
            return Err(Error::Dimension {
                op: "from_parts",
                left: encoder.shape(),
                right: readout.shape(),
            });
        }
        let dims = ModelDims {
            input: encoder.cols(),
            width: encoder.rows(),
            classes: readout.rows(),
        };
        Ok(CrwnModel {
            dims,
            weight_seed: 0,
            encoder: Arc::new(FrozenEncoder {
                weights: encoder,
                seed: 0,
                init: WeightInit::GaussianFanIn,
                pinv: OnceLock::new(),
            }),
            readout: Arc::new(FrozenReadout {
                weights: readout,
                seed: 0,
            }),
            contexts: BTreeMap::new(),
            initial: BTreeMap::new(),
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn weight_seed(&self) -> u64 {
        self.weight_seed
    }

    pub fn encoder(&self) -> &FrozenEncoder {
        &self.encoder
    }

    pub fn readout(&self) -> &FrozenReadout {
        &self.readout
    }

    /// Adds a fresh context: `α = 1`, `v ~ N(0, 1)` from `context_seed`.
    /// The initial state is archived for before/after comparisons.
    pub fn init_context(&mut self, task_id: usize, context_seed: u64) -> Result<&TaskContext> {
        if self.contexts.contains_key(&task_id) {
            return Err(Error::State(format!("task {task_id} already has a context")));
        }
        let mut rng = SeededRng::new(context_seed);
        let v = (0..self.dims.width).map(|_| rng.standard_normal()).collect();
        let ctx = TaskContext {
            task_id,
            alpha: 1.0,
            v: DenseVector::from_vec(v)?,
            phase: Phase::Initial,
        };
        self.initial.insert(task_id, ctx.clone());
        Ok(self.contexts.entry(task_id).or_insert(ctx))
    }

    /// Installs a context verbatim (e.g. a unit context in tests).
    pub fn set_context(&mut self, ctx: TaskContext) -> Result<()> {
        if ctx.v.len() != self.dims.width {
            return Err(Error::Dimension {
                op: "set_context",
                left: (self.dims.width, 1),
                right: (ctx.v.len(), 1),
            });
        }
        if ctx.phase == Phase::Initial {
            self.initial.insert(ctx.task_id, ctx.clone());
        } else {
            self.initial.entry(ctx.task_id).or_insert_with(|| ctx.clone());
        }
        self.contexts.insert(ctx.task_id, ctx);
        Ok(())
    }

    pub fn context(&self, task_id: usize) -> Result<&TaskContext> {
        self.contexts
            .get(&task_id)
            .ok_or(Error::MissingContext(task_id))
    }

    pub(crate) fn context_mut(&mut self, task_id: usize) -> Result<&mut TaskContext> {
        self.contexts
            .get_mut(&task_id)
            .ok_or(Error::MissingContext(task_id))
    }

    /// Context of a task in the requested phase: the archived initial
    /// context, or the current one if it has been trained.
    pub fn context_in_phase(&self, task_id: usize, phase: Phase) -> Result<&TaskContext> {
        let ctx = match phase {
            Phase::Initial => self.initial.get(&task_id),
            Phase::Trained => self.contexts.get(&task_id).filter(|c| c.phase == Phase::Trained),
        };
        ctx.ok_or_else(|| {
            Error::State(format!("task {task_id} has no context in phase {phase:?}"))
        })
    }

    pub fn task_ids(&self) -> Vec<usize> {
        self.contexts.keys().copied().collect()
    }

    pub fn contexts(&self) -> impl Iterator<Item = &TaskContext> {
        self.contexts.values()
    }

    /// Copy of the current contexts.
    pub fn snapshot_contexts(&self) -> BTreeMap<usize, TaskContext> {
        self.contexts.clone()
    }

    /// The same frozen weights with a different set of contexts.
    pub fn with_contexts(&self, contexts: BTreeMap<usize, TaskContext>) -> CrwnModel {
        CrwnModel {
            contexts,
            ..self.clone()
        }
    }

    /// `c_t ⊙ relu(C x)`: the penultimate feature map.
    pub fn representation(&self, task_id: usize, x: &DenseVector) -> Result<DenseVector> {
        let ctx = self.context(task_id)?;
        let h = self.encoder.hidden(x)?;
        ctx.context_vector().hadamard(&h)
    }

    /// `R · (c_t ⊙ relu(C x))`.
    pub fn forward(&self, task_id: usize, x: &DenseVector) -> Result<DenseVector> {
        let r = self.representation(task_id, x)?;
        self.readout.weights.matvec(&r)
    }

    /// `R · B^t · relu(C x)` with `B^t = diag(α_t v^t)` built explicitly.
    pub fn forward_tgsh_form(&self, task_id: usize, x: &DenseVector) -> Result<DenseVector> {
        let ctx = self.context(task_id)?;
        let b = DenseMatrix::from_diagonal(ctx.context_vector().as_slice());
        let h = self.encoder.hidden(x)?;
        let rb = matmul(&self.readout.weights, &b)?;
        rb.matvec(&h)
    }

    /// Class scores for a batch of hidden activations (`n × D`).
    pub fn logits_from_hidden(&self, task_id: usize, hidden: &DenseMatrix) -> Result<DenseMatrix> {
        let c = self.context(task_id)?.context_vector();
        let w = self.modulated_readout(c.as_slice())?;
        matmul_transposed(hidden, &w)
    }

    /// `R` with column `j` scaled by `c_j`.
    pub(crate) fn modulated_readout(&self, c: &[f64]) -> Result<DenseMatrix> {
        let r = &self.readout.weights;
        let data = r
            .row_iter()
            .flat_map(|row| row.iter().zip(c).map(|(a, b)| a * b))
            .collect();
        DenseMatrix::from_vec(r.rows(), r.cols(), data)
    }

    pub fn predict(&self, task_id: usize, x: &DenseVector) -> Result<usize> {
        Ok(argmax(self.forward(task_id, x)?.as_slice()))
    }

    /// SHA-256 over the frozen matrices' bit patterns.
    pub fn frozen_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for m in [&self.encoder.weights, &self.readout.weights] {
            for v in m.as_slice() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex(&h.finalize())
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let payload = CheckpointPayload {
            dims: self.dims,
            weight_seed: self.weight_seed,
            init: self.encoder.init,
            contexts: self.contexts.values().cloned().collect(),
            initial_contexts: self.initial.values().cloned().collect(),
        };
        let body = serde_json::to_vec(&payload).map_err(|e| Error::Persistence(e.to_string()))?;
        let envelope = CheckpointEnvelope {
            format_version: CHECKPOINT_VERSION,
            checksum: hex(&Sha256::digest(&body)),
            payload,
        };
        let bytes =
            serde_json::to_vec(&envelope).map_err(|e| Error::Persistence(e.to_string()))?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<CrwnModel> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let probe: VersionProbe = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Persistence(format!("corrupt checkpoint: {e}")))?;
        if probe.format_version != CHECKPOINT_VERSION {
            return Err(Error::Persistence(format!(
                "checkpoint format version {} unsupported (expected {CHECKPOINT_VERSION})",
                probe.format_version
            )));
        }
        let envelope: CheckpointEnvelope = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Persistence(format!("corrupt checkpoint: {e}")))?;
        let body = serde_json::to_vec(&envelope.payload)
            .map_err(|e| Error::Persistence(e.to_string()))?;
        if hex(&Sha256::digest(&body)) != envelope.checksum {
            return Err(Error::Persistence("checkpoint checksum mismatch".into()));
        }
        let p = envelope.payload;
        let mut model = CrwnModel::init(p.dims, p.weight_seed)?;
        for ctx in p.initial_contexts {
            model.initial.insert(ctx.task_id, ctx);
        }
        for ctx in p.contexts {
            if ctx.v.len() != p.dims.width {
                return Err(Error::Persistence(format!(
                    "context {} has width {}",
                    ctx.task_id,
                    ctx.v.len()
                )));
            }
            model.contexts.insert(ctx.task_id, ctx);
        }
        Ok(model)
    }

    /// Number of stored `(initial, current)` contexts.
    pub fn context_counts(&self) -> (usize, usize) {
        (self.initial.len(), self.contexts.len())
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointPayload {
    dims: ModelDims,
    weight_seed: u64,
    init: WeightInit,
    contexts: Vec<TaskContext>,
    initial_contexts: Vec<TaskContext>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointEnvelope {
    format_version: u32,
    checksum: String,
    payload: CheckpointPayload,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
