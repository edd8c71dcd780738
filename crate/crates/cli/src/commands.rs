//! The train / analyze / reconstruct / report subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crwn::dataset::{Mnist, Split};
use crwn::geometry::{
    hierarchical_cluster, reconstruction_cells, recoverability_probe, spearman,
    Correlation, ProbeConfig, ProbeResult, ReconstructConfig,
    RepresentationBank, SimilarityReport, BootstrapInterval, IntraInterSummary,
};
use crwn::geometry::reconstruct::grid_image;
use crwn::model::Phase;
use crwn::render::{heatmap, write_text};
use crwn::tasks::{build_suite, SuiteManifest, TaskSuite};
use crwn::train::{append_records_csv, run_continual_with, TrainRecord, EPOCH_CSV_HEADER};
use crwn::{CrwnModel, ModelDims};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, CONFIG_FILE};
use crate::error::{CliError, CliResult};
use crate::lock::RunLock;

pub const CHECKPOINT: &str = "checkpoint.json";
pub const SUITE_MANIFEST: &str = "suite.json";
pub const EPOCHS_CSV: &str = "epochs.csv";
pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const TRAIN_SUMMARY: &str = "train_summary.json";
pub const ANALYSIS_DIR: &str = "analysis";
pub const RECONSTRUCT_DIR: &str = "reconstruct";
pub const REPORT: &str = "report.md";

/// Published average accuracies on RotationMNIST, shown next to ours.
pub const REFERENCE_BAND: (f64, f64) = (0.949, 0.955);
const HEATMAP_CELL: usize = 12;

fn io<T>(path: &Path, r: std::io::Result<T>) -> CliResult<T> {
    r.map_err(|e| crwn::Error::io(path, e).into())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    io(path, std::fs::write(path, text + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = io(path, std::fs::read_to_string(path))?;
    serde_json::from_str(&text)
        .map_err(|e| crwn::Error::Persistence(format!("{}: {e}", path.display())).into())
}

fn require(run_dir: &Path, names: &[&str]) -> CliResult<()> {
    if !run_dir.is_dir() {
        return Err(CliError::MissingArtifacts {
            dir: run_dir.to_path_buf(),
            names: vec!["run directory".into()],
        });
    }
    let missing: Vec<String> = names
        .iter()
        .filter(|n| !run_dir.join(n).exists())
        .map(|n| n.to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::MissingArtifacts {
            dir: run_dir.to_path_buf(),
            names: missing,
        })
    }
}

/// Loads MNIST and builds the configured (possibly subsampled) suite.
pub fn load_suite(cfg: &ExperimentConfig) -> CliResult<TaskSuite> {
    let base = Arc::new(Mnist::load_dir(&cfg.data_dir)?);
    let mut suite = build_suite(cfg.suite, base, cfg.seeds.transform)?;
    if cfg.train_limit.is_some() || cfg.test_limit.is_some() {
        suite = suite.with_base_limit(
            cfg.train_limit.unwrap_or(usize::MAX),
            cfg.test_limit.unwrap_or(usize::MAX),
        );
    }
    if let Some(t) = cfg.tasks {
        suite = suite
            .subsample(t)
            .map_err(|e| CliError::usage("tasks", e.to_string()))?;
    }
    Ok(suite)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: usize,
    pub label: String,
    pub test_accuracy: f64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub suite: String,
    pub tasks: usize,
    pub final_mean_accuracy: f64,
    pub zero_forgetting: bool,
    pub forgetting_violations: usize,
    pub frozen_fingerprint: String,
    pub per_task: Vec<TaskSummary>,
    pub total_wall_time_secs: f64,
}

/// Runs the whole suite and writes every training artifact into `run_dir`.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    run_dir: &Path,
    mut progress: impl FnMut(&TrainRecord),
) -> CliResult<TrainSummary> {
    cfg.validate()?;
    let suite = load_suite(cfg)?;
    io(run_dir, std::fs::create_dir_all(run_dir))?;
    let _lock = RunLock::acquire(run_dir)?;
    cfg.write(&run_dir.join(CONFIG_FILE))?;
    suite.manifest().write(&run_dir.join(SUITE_MANIFEST))?;

    let epochs_path = run_dir.join(EPOCHS_CSV);
    io(&epochs_path, std::fs::write(&epochs_path, format!("{EPOCH_CSV_HEADER}\n")))?;
    let dims = ModelDims { input: cfg.input, width: cfg.width, classes: cfg.classes };
    let mut model = CrwnModel::init(dims, cfg.seeds.weight)?;
    let mut train = cfg.train.clone();
    train.shuffle_seed = cfg.seeds.shuffle;
    let mut csv_err = None;
    let outcome = run_continual_with(&mut model, &suite, &train, cfg.seeds.context, |rec| {
        if let Err(e) = append_records_csv(&epochs_path, std::slice::from_ref(rec)) {
            csv_err.get_or_insert(e);
        }
        progress(rec);
    })?;
    if let Some(e) = csv_err {
        return Err(e.into());
    }
    let acc_path = run_dir.join(ACCURACY_CSV);
    io(&acc_path, std::fs::write(&acc_path, outcome.accuracy.to_csv()))?;
    model.save_checkpoint(&run_dir.join(CHECKPOINT))?;

    let violations = outcome.accuracy.forgetting_violations().len();
    let summary = TrainSummary {
        suite: cfg.suite.as_str().to_string(),
        tasks: suite.len(),
        final_mean_accuracy: outcome.accuracy.final_mean(),
        zero_forgetting: violations == 0,
        forgetting_violations: violations,
        frozen_fingerprint: model.frozen_fingerprint(),
        per_task: outcome
            .records
            .iter()
            .map(|r| TaskSummary {
                task_id: r.task_id,
                label: r.label.clone(),
                test_accuracy: r.test_accuracy,
                wall_time_secs: r.wall_time_secs,
            })
            .collect(),
        total_wall_time_secs: outcome.records.iter().map(|r| r.wall_time_secs).sum(),
    };
    write_json(&run_dir.join(TRAIN_SUMMARY), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Analysis {
    ContextSim,
    IntraInter,
    Cluster,
    Probe,
    ShiftConsistency,
}

impl Analysis {
    pub const ALL: [Analysis; 5] = [
        Analysis::ContextSim,
        Analysis::IntraInter,
        Analysis::Cluster,
        Analysis::Probe,
        Analysis::ShiftConsistency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::ContextSim => "context-sim",
            Analysis::IntraInter => "intra-inter",
            Analysis::Cluster => "cluster",
            Analysis::Probe => "probe",
            Analysis::ShiftConsistency => "shift-consistency",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Analysis::ContextSim => "context cosine similarity before and after training",
            Analysis::IntraInter => "intra- vs inter-task representation similarity",
            Analysis::Cluster => "average-linkage dendrogram and sorted similarity matrix",
            Analysis::Probe => "task-id recoverability by nearest centroid",
            Analysis::ShiftConsistency => "rank agreement with a coarser run (needs --against)",
        }
    }
}

impl FromStr for Analysis {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Analysis::ALL.iter().map(|a| a.name()).collect();
                CliError::usage("which", format!("unknown analysis '{s}', expected one of {}", names.join(", ")))
            })
    }
}

/// Parses a comma-separated analysis list; blank entries are ignored.
pub fn parse_analyses(list: &str) -> CliResult<Vec<Analysis>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Analysis::from_str)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSimSummary {
    pub tasks: usize,
    pub mean_abs_off_diagonal_before: f64,
    pub mean_abs_off_diagonal_after: f64,
    /// Mean trained similarity at circular task offset 1.
    pub adjacent_mean: Option<f64>,
    /// Mean trained similarity at circular offsets `>= far_offset`.
    pub far_mean: Option<f64>,
    pub far_offset: usize,
}

/// Offset treated as "far" in the band statistic: a quarter of the cycle.
pub fn far_offset(tasks: usize) -> usize {
    tasks.div_ceil(4).max(2)
}

pub fn band_summary(before: &SimilarityReport, after: &SimilarityReport) -> ContextSimSummary {
    let far = far_offset(after.len());
    ContextSimSummary {
        tasks: after.len(),
        mean_abs_off_diagonal_before: before.mean_abs_off_diagonal(),
        mean_abs_off_diagonal_after: after.mean_abs_off_diagonal(),
        adjacent_mean: after.mean_at_circular_offsets(|o| o == 1),
        far_mean: after.mean_at_circular_offsets(|o| o >= far),
        far_offset: far,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraInterArtifact {
    pub summary: IntraInterSummary,
    pub bootstrap: BootstrapInterval,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeArtifact {
    pub trained: ProbeResult,
    pub untrained: ProbeResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftConsistencyArtifact {
    pub fine_run: PathBuf,
    pub coarse_run: PathBuf,
    pub step: usize,
    pub correlation: Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub dendrogram: crwn::geometry::Dendrogram,
    pub final_outgroup: Option<String>,
}

struct Run {
    dir: PathBuf,
    cfg: ExperimentConfig,
    model: CrwnModel,
}

impl Run {
    fn open(dir: &Path) -> CliResult<Self> {
        require(dir, &[CONFIG_FILE, SUITE_MANIFEST, CHECKPOINT])?;
        Ok(Run {
            dir: dir.to_path_buf(),
            cfg: ExperimentConfig::load(&dir.join(CONFIG_FILE))?,
            model: CrwnModel::load_checkpoint(&dir.join(CHECKPOINT))?,
        })
    }

    fn manifest(&self) -> CliResult<SuiteManifest> {
        Ok(SuiteManifest::read(&self.dir.join(SUITE_MANIFEST))?)
    }

    /// Suite order and labels without loading any images.
    fn labelled_similarity(&self, phase: Phase) -> CliResult<SimilarityReport> {
        let manifest = self.manifest()?;
        let ids: Vec<usize> = manifest.tasks.iter().map(|t| t.task_id).collect();
        let labels: Vec<String> = manifest.tasks.iter().map(|t| t.label()).collect();
        let mut report = crwn::geometry::context_similarity_matrix(&self.model, phase)?;
        let order: Vec<usize> = ids
            .iter()
            .map(|id| self.model.task_ids().iter().position(|t| t == id))
            .collect::<Option<_>>()
            .ok_or(crwn::Error::State("checkpoint lacks a suite task".into()))?;
        report = report.reordered(&order)?;
        report.labels = labels;
        Ok(report)
    }

    fn suite(&self) -> CliResult<TaskSuite> {
        let manifest = self.manifest()?;
        let base = Arc::new(Mnist::load_dir(&self.cfg.data_dir)?);
        Ok(manifest.rebuild(base)?)
    }
}

fn write_similarity(dir: &Path, stem: &str, report: &SimilarityReport) -> CliResult<Vec<PathBuf>> {
    let csv = dir.join(format!("{stem}.csv"));
    write_text(&csv, &report.to_csv())?;
    let png = dir.join(format!("{stem}.png"));
    heatmap(&report.matrix, HEATMAP_CELL).write(&png)?;
    Ok(vec![csv, png])
}

/// Runs the requested analyses on a trained run and returns the written
/// artifact paths.
pub fn cmd_analyze(
    run_dir: &Path,
    which: &[Analysis],
    against: Option<&Path>,
) -> CliResult<Vec<PathBuf>> {
    let run = Run::open(run_dir)?;
    let _lock = RunLock::acquire(run_dir)?;
    let out = run_dir.join(ANALYSIS_DIR);
    io(&out, std::fs::create_dir_all(&out))?;
    let mut written = Vec::new();
    let mut suite: Option<TaskSuite> = None;
    let acfg = run.cfg.analysis.clone();
    let unit_sphere = run.cfg.train.unit_sphere;

    for &analysis in which {
        match analysis {
            Analysis::ContextSim => {
                let before = run.labelled_similarity(Phase::Initial)?;
                let after = run.labelled_similarity(Phase::Trained)?;
                written.extend(write_similarity(&out, "context_sim_before", &before)?);
                written.extend(write_similarity(&out, "context_sim_after", &after)?);
                let p = out.join("context_sim.json");
                write_json(&p, &band_summary(&before, &after))?;
                written.push(p);
            }
            Analysis::Cluster => {
                let after = run.labelled_similarity(Phase::Trained)?;
                let dendrogram = hierarchical_cluster(&after)?;
                let sorted = after.reordered(&dendrogram.leaf_order)?;
                written.extend(write_similarity(&out, "context_sim_sorted", &sorted)?);
                let txt = out.join("dendrogram.txt");
                write_text(&txt, &dendrogram.to_text())?;
                let p = out.join("dendrogram.json");
                let final_outgroup = dendrogram.final_outgroup().map(|i| dendrogram.labels[i].clone());
                write_json(&p, &ClusterArtifact { dendrogram, final_outgroup })?;
                written.extend([txt, p]);
            }
            Analysis::IntraInter => {
                let suite = match &suite {
                    Some(s) => s,
                    None => suite.insert(run.suite()?),
                };
                let bank = RepresentationBank::collect(
                    &run.model,
                    suite,
                    acfg.samples_per_class,
                    Split::Test,
                    unit_sphere,
                    acfg.seed,
                )?;
                let summary = bank.summary(run.model.dims().classes)?;
                let bootstrap = bank.bootstrap_intra_minus_inter(
                    acfg.bootstrap_pairs,
                    acfg.bootstrap_resamples,
                    0.95,
                    acfg.seed,
                )?;
                let p = out.join("intra_inter.json");
                write_json(&p, &IntraInterArtifact { summary, bootstrap, pairs: acfg.bootstrap_pairs })?;
                written.push(p);
            }
            Analysis::Probe => {
                let suite = match &suite {
                    Some(s) => s,
                    None => suite.insert(run.suite()?),
                };
                let pcfg = ProbeConfig {
                    fit_fraction: acfg.probe_fit_fraction,
                    samples_per_task: acfg.probe_samples_per_task,
                    split: Split::Test,
                    unit_sphere,
                    seed: acfg.seed,
                };
                let trained = recoverability_probe(&run.model, suite, &pcfg)?;
                let initial = suite
                    .tasks
                    .iter()
                    .map(|t| {
                        let ctx = run.model.context_in_phase(t.task_id, Phase::Initial)?;
                        Ok((t.task_id, ctx.clone()))
                    })
                    .collect::<crwn::Result<_>>()?;
                let untrained = recoverability_probe(&run.model.with_contexts(initial), suite, &pcfg)?;
                let p = out.join("probe.json");
                write_json(&p, &ProbeArtifact { trained, untrained })?;
                written.push(p);
            }
            Analysis::ShiftConsistency => {
                let other_dir = against.ok_or_else(|| {
                    CliError::usage("against", "shift-consistency needs a second run directory")
                })?;
                let other = Run::open(other_dir)?;
                let mine = run.labelled_similarity(Phase::Trained)?;
                let theirs = other.labelled_similarity(Phase::Trained)?;
                let (fine, coarse, fine_dir, coarse_dir) = if mine.len() >= theirs.len() {
                    (mine, theirs, run_dir, other_dir)
                } else {
                    (theirs, mine, other_dir, run_dir)
                };
                if coarse.len() < 3 || fine.len() % coarse.len() != 0 {
                    return Err(CliError::usage(
                        "against",
                        format!("{} tasks do not subsample evenly to {}", fine.len(), coarse.len()),
                    ));
                }
                let step = fine.len() / coarse.len();
                let sub = fine.subsampled(step)?;
                let correlation = spearman(&sub.upper_triangle(), &coarse.upper_triangle())?;
                let p = out.join("shift_consistency.json");
                write_json(
                    &p,
                    &ShiftConsistencyArtifact {
                        fine_run: fine_dir.to_path_buf(),
                        coarse_run: coarse_dir.to_path_buf(),
                        step,
                        correlation,
                    },
                )?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

/// Reconstruction grid as PGM and PNG plus the raw values as CSV.
pub fn cmd_reconstruct(
    run_dir: &Path,
    classes: &[usize],
    tasks: &[usize],
    seed: u64,
    cfg: &ReconstructConfig,
) -> CliResult<Vec<PathBuf>> {
    let run = Run::open(run_dir)?;
    let dims = run.model.dims();
    if classes.is_empty() {
        return Err(CliError::usage("classes", "at least one class is required"));
    }
    if tasks.is_empty() {
        return Err(CliError::usage("tasks", "at least one task is required"));
    }
    if let Some(k) = classes.iter().find(|&&k| k >= dims.classes) {
        return Err(CliError::usage("classes", format!("class {k} >= {}", dims.classes)));
    }
    let known = run.model.task_ids();
    if let Some(t) = tasks.iter().find(|t| !known.contains(t)) {
        return Err(CliError::usage("tasks", format!("task {t} is not in this run")));
    }
    let _lock = RunLock::acquire(run_dir)?;
    let out = run_dir.join(RECONSTRUCT_DIR);
    io(&out, std::fs::create_dir_all(&out))?;
    let cells = reconstruction_cells(&run.model, classes, tasks, seed, cfg)?;
    let grid = grid_image(&cells);
    let (pgm, png, csv) = (out.join("grid.pgm"), out.join("grid.png"), out.join("raw.csv"));
    grid.write(&pgm)?;
    grid.write(&png)?;
    let mut text = String::from("class,task_id");
    for i in 0..crwn::dataset::PIXELS {
        let _ = write!(text, ",p{i}");
    }
    text.push('\n');
    for rec in cells.iter().flatten() {
        let _ = write!(text, "{},{}", rec.class, rec.task_id);
        for v in &rec.raw {
            let _ = write!(text, ",{v}");
        }
        text.push('\n');
    }
    write_text(&csv, &text)?;
    Ok(vec![pgm, png, csv])
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

/// Builds `report.md` from whatever artifacts exist. Missing analyses are
/// listed as gaps; missing training output is an error.
pub fn cmd_report(run_dir: &Path) -> CliResult<String> {
    require(run_dir, &[CONFIG_FILE, TRAIN_SUMMARY])?;
    let cfg = ExperimentConfig::load(&run_dir.join(CONFIG_FILE))?;
    let train: TrainSummary = read_json(&run_dir.join(TRAIN_SUMMARY))?;
    let analysis = run_dir.join(ANALYSIS_DIR);
    let mut gaps = Vec::new();
    let mut load = |name: &str| -> Option<PathBuf> {
        let p = analysis.join(name);
        if p.exists() {
            Some(p)
        } else {
            gaps.push(format!("{ANALYSIS_DIR}/{name}"));
            None
        }
    };
    let sim: Option<ContextSimSummary> = load("context_sim.json").map(|p| read_json(&p)).transpose()?;
    let ii: Option<IntraInterArtifact> = load("intra_inter.json").map(|p| read_json(&p)).transpose()?;
    let probe: Option<ProbeArtifact> = load("probe.json").map(|p| read_json(&p)).transpose()?;
    let cluster: Option<ClusterArtifact> = load("dendrogram.json").map(|p| read_json(&p)).transpose()?;
    let shift: Option<ShiftConsistencyArtifact> = {
        let p = analysis.join("shift_consistency.json");
        p.exists().then(|| read_json(&p)).transpose()?
    };

    let mut s = String::new();
    let _ = writeln!(s, "# Run report: {}\n", run_dir.display());
    let _ = writeln!(
        s,
        "Suite `{}`, {} tasks, width {}, seeds weight={} context={} shuffle={} transform={}.\n",
        train.suite, train.tasks, cfg.width, cfg.seeds.weight, cfg.seeds.context, cfg.seeds.shuffle, cfg.seeds.transform
    );
    let _ = writeln!(s, "## Accuracy\n");
    let _ = writeln!(s, "- mean final test accuracy: {:.4}", train.final_mean_accuracy);
    if train.suite == crwn::tasks::SuiteName::RotationMnist.as_str() {
        let _ = writeln!(
            s,
            "- published reference band (RotationMNIST): {:.3} to {:.3}",
            REFERENCE_BAND.0, REFERENCE_BAND.1
        );
    }
    let _ = writeln!(
        s,
        "- zero forgetting (A[i][j] == A[j][j] bitwise): {} ({} violations)",
        if train.zero_forgetting { "yes" } else { "NO" },
        train.forgetting_violations
    );
    let _ = writeln!(s, "\n| task | label | test accuracy |\n|---:|---|---:|");
    for t in &train.per_task {
        let _ = writeln!(s, "| {} | {} | {:.4} |", t.task_id, t.label, t.test_accuracy);
    }
    let _ = writeln!(s, "\n## Geometry\n");
    if let Some(sim) = &sim {
        let _ = writeln!(s, "- mean |off-diagonal| context similarity before training: {:.4}", sim.mean_abs_off_diagonal_before);
        let _ = writeln!(
            s,
            "- adjacency band: offset 1 mean {} vs offset >= {} mean {}",
            fmt_opt(sim.adjacent_mean),
            sim.far_offset,
            fmt_opt(sim.far_mean)
        );
    }
    if let Some(ii) = &ii {
        let _ = writeln!(
            s,
            "- intra-task similarity {:.4}, inter-task similarity {} (difference 95% CI [{:.4}, {:.4}] over {} pairs)",
            ii.summary.mean_intra,
            fmt_opt(ii.summary.mean_inter),
            ii.bootstrap.low,
            ii.bootstrap.high,
            ii.pairs
        );
    }
    if let Some(p) = &probe {
        let _ = writeln!(
            s,
            "- task-id probe accuracy: trained {:.4}, untrained {:.4}, chance {:.4}",
            p.trained.held_out_accuracy, p.untrained.held_out_accuracy, p.trained.chance
        );
    }
    if let Some(c) = &cluster {
        let _ = writeln!(
            s,
            "- dendrogram leaf order: {}",
            c.dendrogram.leaf_order.iter().map(|&i| c.dendrogram.labels[i].as_str()).collect::<Vec<_>>().join(" ")
        );
        let _ = writeln!(s, "- final merge outgroup: {}", c.final_outgroup.as_deref().unwrap_or("none"));
    }
    if let Some(sh) = &shift {
        let _ = writeln!(
            s,
            "- shift consistency: Spearman rho {:.4}, p = {:.3e}, n = {}",
            sh.correlation.rho, sh.correlation.p_value, sh.correlation.n
        );
    }
    if !gaps.is_empty() {
        let _ = writeln!(s, "\n## Gaps\n");
        for g in &gaps {
            let _ = writeln!(s, "- missing {g}");
        }
    }
    let path = run_dir.join(REPORT);
    write_text(&path, &s)?;
    Ok(s)
}
