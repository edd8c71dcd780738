//! Task suites: each task is a fixed image transform applied to every base
//! image, standing in for the latent task identifier.

pub mod transforms;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{Image, ImageDataset, Mnist, Split, SIDE};
use crate::error::{Error, Result};
use crate::linalg::SeededRng;

/// The transform defining one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Rotate {
        degrees: f64,
    },
    CircularShift {
        px: usize,
    },
    HFlip,
    VFlip,
    GaussianBlur {
        kernel: usize,
        sigma: f64,
    },
    Perspective {
        scale: f64,
    },
    RandomErasing {
        scale: (f64, f64),
        ratio: (f64, f64),
    },
    Invert,
    RandomResizedCrop {
        size: usize,
        scale: (f64, f64),
        ratio: (f64, f64),
    },
}

impl Transform {
    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            Transform::Perspective { .. }
                | Transform::RandomErasing { .. }
                | Transform::RandomResizedCrop { .. }
        )
    }

    /// Short human-readable name, used for report labels.
    pub fn label(&self) -> String {
        match self {
            Transform::Identity => "identity".into(),
            Transform::Rotate { degrees } => format!("rot{degrees}"),
            Transform::CircularShift { px } => format!("shift{px}"),
            Transform::HFlip => "hflip".into(),
            Transform::VFlip => "vflip".into(),
            Transform::GaussianBlur { .. } => "blur".into(),
            Transform::Perspective { .. } => "perspective".into(),
            Transform::RandomErasing { .. } => "erasing".into(),
            Transform::Invert => "invert".into(),
            Transform::RandomResizedCrop { .. } => "resized_crop".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match *self {
            Transform::Rotate { degrees } if !degrees.is_finite() => bad("rotation angle must be finite".into()),
            Transform::GaussianBlur { kernel, sigma } if kernel % 2 == 0 || sigma <= 0.0 => {
                bad(format!("blur needs an odd kernel and positive sigma, got {kernel}/{sigma}"))
            }
            Transform::Perspective { scale } if !(0.0..=1.0).contains(&scale) => {
                bad(format!("perspective scale {scale} outside [0, 1]"))
            }
            Transform::RandomResizedCrop { size, .. } if size != SIDE => {
                bad(format!("resized crop size must be {SIDE}, got {size}"))
            }
            _ => Ok(()),
        }
    }
}

/// One task: its id, transform, and the seed feeding stochastic transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: usize,
    pub transform: Transform,
    pub transform_seed: u64,
}

impl TaskSpec {
    /// Applies this task's transform to the image with the given index.
    /// Stochastic transforms draw from a child stream keyed by
    /// `(transform_seed, index)`, so the result never depends on call order.
    pub fn apply(&self, img: &Image, index: u64) -> Image {
        use transforms::*;
        match &self.transform {
            Transform::Identity => img.clone(),
            Transform::Rotate { degrees } => rotate(img, *degrees),
            Transform::CircularShift { px } => circular_shift(img, *px),
            Transform::HFlip => hflip(img),
            Transform::VFlip => vflip(img),
            Transform::GaussianBlur { kernel, sigma } => gaussian_blur(img, *kernel, *sigma),
            Transform::Invert => invert(img),
            Transform::Perspective { scale } => {
                let mut rng = SeededRng::indexed(self.transform_seed, index);
                perspective_warp(img, &perspective_corners(*scale, &mut rng))
            }
            Transform::RandomErasing { scale, ratio } => {
                let mut rng = SeededRng::indexed(self.transform_seed, index);
                match erasing_rect(&mut rng, *scale, *ratio) {
                    Some(rect) => erase(img, rect),
                    None => img.clone(),
                }
            }
            Transform::RandomResizedCrop { scale, ratio, .. } => {
                let mut rng = SeededRng::indexed(self.transform_seed, index);
                resized_crop(img, crop_rect(&mut rng, *scale, *ratio))
            }
        }
    }

    pub fn label(&self) -> String {
        self.transform.label()
    }
}

/// Same as [`TaskSpec::apply`]; named for the augmentation suite.
pub fn apply_augment(img: &Image, spec: &TaskSpec, index: u64) -> Image {
    spec.apply(img, index)
}

/// Stable per-image index: test images are offset so they never share a
/// random stream with the training image of the same position.
pub fn image_index(split: Split, i: usize) -> u64 {
    match split {
        Split::Train => i as u64,
        Split::Test => (1u64 << 32) | i as u64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SuiteName {
    #[serde(rename = "rotation-mnist")]
    RotationMnist,
    #[serde(rename = "shift-mnist-1px")]
    ShiftMnist1px,
    #[serde(rename = "shift-mnist-2px")]
    ShiftMnist2px,
    #[serde(rename = "augment-mnist")]
    AugmentMnist,
    #[serde(rename = "custom")]
    Custom,
}

impl SuiteName {
    pub const ALL: [SuiteName; 4] = [
        SuiteName::RotationMnist,
        SuiteName::ShiftMnist1px,
        SuiteName::ShiftMnist2px,
        SuiteName::AugmentMnist,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::RotationMnist => "rotation-mnist",
            SuiteName::ShiftMnist1px => "shift-mnist-1px",
            SuiteName::ShiftMnist2px => "shift-mnist-2px",
            SuiteName::AugmentMnist => "augment-mnist",
            SuiteName::Custom => "custom",
        }
    }

    /// The canonical transform list of a named suite.
    pub fn transforms(self) -> Result<Vec<Transform>> {
        Ok(match self {
            SuiteName::RotationMnist => (0..36)
                .map(|i| Transform::Rotate {
                    degrees: 10.0 * i as f64,
                })
                .collect(),
            SuiteName::ShiftMnist1px => (0..28).map(|i| Transform::CircularShift { px: i }).collect(),
            SuiteName::ShiftMnist2px => (0..14)
                .map(|i| Transform::CircularShift { px: 2 * i })
                .collect(),
            SuiteName::AugmentMnist => vec![
                Transform::Identity,
                Transform::HFlip,
                Transform::VFlip,
                Transform::GaussianBlur {
                    kernel: 5,
                    sigma: 2.0,
                },
                Transform::Perspective { scale: 0.5 },
                Transform::RandomErasing {
                    scale: (0.02, 0.33),
                    ratio: (0.3, 3.3),
                },
                Transform::Invert,
                Transform::RandomResizedCrop {
                    size: SIDE,
                    scale: (0.08, 1.0),
                    ratio: (3.0 / 4.0, 4.0 / 3.0),
                },
            ],
            SuiteName::Custom => {
                return Err(Error::Config(
                    "custom suites are built from an explicit transform list".into(),
                ))
            }
        })
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "rotation-mnist" | "rotationmnist" | "rotation" => Ok(SuiteName::RotationMnist),
            "shift-mnist-1px" | "shiftmnist-1px" | "shift-1px" => Ok(SuiteName::ShiftMnist1px),
            "shift-mnist-2px" | "shiftmnist-2px" | "shift-2px" => Ok(SuiteName::ShiftMnist2px),
            "augment-mnist" | "augmentmnist" | "augment" => Ok(SuiteName::AugmentMnist),
            "custom" => Ok(SuiteName::Custom),
            _ => Err(Error::Config(format!("unknown suite name '{s}'"))),
        }
    }
}

/// An ordered list of tasks over a shared base dataset. Task data is
/// generated on demand and is a pure function of the specs and the base.
#[derive(Debug, Clone)]
pub struct TaskSuite {
    pub name: SuiteName,
    pub tasks: Vec<TaskSpec>,
    pub master_seed: u64,
    base: Arc<Mnist>,
}

impl TaskSuite {
    /// Suite from an explicit transform list.
    pub fn custom(transforms: Vec<Transform>, base: Arc<Mnist>, master_seed: u64) -> Result<Self> {
        Self::assemble(SuiteName::Custom, transforms, base, master_seed)
    }

    fn assemble(
        name: SuiteName,
        transforms: Vec<Transform>,
        base: Arc<Mnist>,
        master_seed: u64,
    ) -> Result<Self> {
        if transforms.is_empty() {
            return Err(Error::Config("a suite needs at least one task".into()));
        }
        let tasks = transforms
            .into_iter()
            .enumerate()
            .map(|(i, transform)| {
                transform.validate()?;
                Ok(TaskSpec {
                    task_id: i,
                    transform,
                    transform_seed: SeededRng::child_seed(master_seed, &format!("task/{i}")),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TaskSuite {
            name,
            tasks,
            master_seed,
            base,
        })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn base(&self) -> &Arc<Mnist> {
        &self.base
    }

    pub fn task(&self, task_id: usize) -> Result<&TaskSpec> {
        self.tasks
            .iter()
            .find(|t| t.task_id == task_id)
            .ok_or_else(|| Error::Config(format!("task {task_id} not in suite {}", self.name)))
    }

    pub fn labels(&self) -> Vec<String> {
        self.tasks.iter().map(TaskSpec::label).collect()
    }

    /// Keeps every `len / count`-th task, renumbering ids from 0. `count`
    /// must divide the suite length.
    pub fn subsample(mut self, count: usize) -> Result<Self> {
        let n = self.tasks.len();
        if count == 0 || count > n || n % count != 0 {
            return Err(Error::Config(format!(
                "cannot take {count} evenly spaced tasks from {n}"
            )));
        }
        let stride = n / count;
        self.tasks = self
            .tasks
            .into_iter()
            .step_by(stride)
            .enumerate()
            .map(|(i, mut t)| {
                t.task_id = i;
                t
            })
            .collect();
        Ok(self)
    }

    /// Restricts the base data to the first `train` / `test` examples.
    pub fn with_base_limit(mut self, train: usize, test: usize) -> Self {
        self.base = Arc::new(Mnist {
            train: self.base.train.truncated(train),
            test: self.base.test.truncated(test),
        });
        self
    }

    /// Transformed images of one task split.
    pub fn task_images(&self, task_id: usize, split: Split) -> Result<Vec<Image>> {
        let spec = self.task(task_id)?;
        let base = self.base.split(split);
        Ok(base
            .images
            .iter()
            .enumerate()
            .map(|(i, img)| spec.apply(img, image_index(split, i)))
            .collect())
    }

    pub fn task_dataset(&self, task_id: usize, split: Split) -> Result<ImageDataset> {
        let images = self.task_images(task_id, split)?;
        ImageDataset::new(images, self.base.split(split).labels.clone(), split)
    }

    pub fn labels_of(&self, split: Split) -> &[u8] {
        &self.base.split(split).labels
    }

    pub fn manifest(&self) -> SuiteManifest {
        SuiteManifest {
            name: self.name,
            master_seed: self.master_seed,
            train_size: self.base.train.len(),
            test_size: self.base.test.len(),
            tasks: self.tasks.clone(),
        }
    }
}

/// Canonical suite for a name.
pub fn build_suite(name: SuiteName, base: Arc<Mnist>, master_seed: u64) -> Result<TaskSuite> {
    TaskSuite::assemble(name, name.transforms()?, base, master_seed)
}

/// JSON description of a suite, sufficient to regenerate its data from the
/// same base files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub name: SuiteName,
    pub master_seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub tasks: Vec<TaskSpec>,
}

impl SuiteManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Persistence(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::Persistence(format!("{}: {e}", path.display())))
    }

    /// Rebuilds the suite over `base`, truncated to the recorded sizes.
    pub fn rebuild(&self, base: Arc<Mnist>) -> Result<TaskSuite> {
        if base.train.len() < self.train_size || base.test.len() < self.test_size {
            return Err(Error::Data("base dataset smaller than the manifest records".into()));
        }
        for t in &self.tasks {
            t.transform.validate()?;
        }
        let suite = TaskSuite {
            name: self.name,
            tasks: self.tasks.clone(),
            master_seed: self.master_seed,
            base,
        };
        Ok(suite.with_base_limit(self.train_size, self.test_size))
    }
}
