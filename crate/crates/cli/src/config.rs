use std::path::{Path, PathBuf};

use crwn::tasks::SuiteName;
use crwn::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DATA_DIR_ENV: &str = "CRWN_DATA_DIR";
pub const CONFIG_FILE: &str = "config.json";

/// Default MNIST directory: `$CRWN_DATA_DIR`, else `data/mnist`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub weight: u64,
    pub context: u64,
    pub shuffle: u64,
    pub transform: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Seeds {
            weight: seed,
            context: seed,
            shuffle: seed,
            transform: seed,
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::all(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub samples_per_class: usize,
    pub bootstrap_pairs: usize,
    pub bootstrap_resamples: usize,
    pub probe_samples_per_task: usize,
    pub probe_fit_fraction: f64,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            samples_per_class: crwn::geometry::similarity::DEFAULT_SAMPLES_PER_CLASS,
            bootstrap_pairs: 10_000,
            bootstrap_resamples: 2_000,
            probe_samples_per_task: 500,
            probe_fit_fraction: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub suite: SuiteName,
    /// Keep this many evenly spaced tasks of the suite.
    pub tasks: Option<usize>,
    pub data_dir: PathBuf,
    /// Truncate the base train/test splits (smoke runs).
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub input: usize,
    pub width: usize,
    pub classes: usize,
    pub seeds: Seeds,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            suite: SuiteName::RotationMnist,
            tasks: None,
            data_dir: default_data_dir(),
            train_limit: None,
            test_limit: None,
            input: crwn::dataset::PIXELS,
            width: 2000,
            classes: crwn::dataset::NUM_CLASSES,
            seeds: Seeds::default(),
            train: TrainConfig::default(),
            analysis: AnalysisConfig::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crwn::Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage("config", format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text + "\n").map_err(|e| crwn::Error::io(path, e).into())
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.input != crwn::dataset::PIXELS {
            return Err(CliError::usage("input", format!("MNIST suites need {}", crwn::dataset::PIXELS)));
        }
        if self.classes != crwn::dataset::NUM_CLASSES {
            return Err(CliError::usage("classes", format!("MNIST suites need {}", crwn::dataset::NUM_CLASSES)));
        }
        if self.width == 0 {
            return Err(CliError::usage("width", "must be >= 1"));
        }
        if self.tasks == Some(0) {
            return Err(CliError::usage("tasks", "must be >= 1"));
        }
        if self.suite == SuiteName::Custom {
            return Err(CliError::usage("suite", "custom suites are library-only"));
        }
        self.train
            .validate()
            .map_err(|e| CliError::usage("train", e.to_string()))?;
        Ok(())
    }

    /// Run directory used when none is given.
    pub fn default_output_dir(&self) -> PathBuf {
        let tasks = self.tasks.map_or(String::new(), |t| format!("-t{t}"));
        PathBuf::from("runs").join(format!(
            "{}{tasks}-w{}-s{}",
            self.suite.as_str(),
            self.width,
            self.seeds.weight
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"suite": "shift-mnist-2px", "train": {"epochs": 2}}"#).unwrap();
        assert_eq!(c.suite, SuiteName::ShiftMnist2px);
        assert_eq!(c.train.epochs, 2);
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(c.width, 2000);
    }

    #[test]
    fn validation_names_the_field() {
        let c = ExperimentConfig { width: 0, ..Default::default() };
        match c.validate() {
            Err(CliError::Usage { field, .. }) => assert_eq!(field, "width"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let c = ExperimentConfig { tasks: Some(6), seeds: Seeds::all(7), ..Default::default() };
        c.write(&p).unwrap();
        assert_eq!(ExperimentConfig::load(&p).unwrap(), c);
    }
}
