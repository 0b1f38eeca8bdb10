//! Experiment grids and summary reports.
//!
//! A grid file is JSON:
//!
//! ```json
//! {
//!   "dataset": "data",
//!   "output_root": "runs",
//!   "seed": 0,
//!   "analyze": true,
//!   "defaults": { "epochs": 30 },
//!   "axes": { "model": ["embodied", "vision-pool"], "fraction": [0.1, 1.0], "seed": [0, 1] },
//!   "runs": [ { "id": "shuffled", "shuffle_joints": true } ]
//! }
//! ```
//!
//! Every entry of `runs` and every point of the `axes` product becomes one
//! run config: `defaults` first, then the run's own keys. `seed` is the
//! default run seed. Axes runs get generated ids.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{error, info};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::envsim::{load_dataset, read_manifest};
use crate::error::{EclError, Result};
use crate::harness::{read_record, train, PreparedDataset, RunConfig, TrainRecord, CHECKPOINT_FINAL, CONFIG_FILE};
use crate::models::NUM_CLASSES;
use crate::neuro::analyze::{fmt_opt, read_summary, AnalysisSummary, ANALYSIS_DIR, SUMMARY_FILE};
use crate::neuro::stats::{permutations, spearman_test, PERMUTATIONS, PERMUTATION_SEED};
use crate::neuro::{analyze_run, AnalysisOptions};

pub const OUTPUT_ENV: &str = "ECL_OUT";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// Axis order of the expansion, outermost first.
const AXES: [&str; 7] = ["model", "fraction", "curriculum", "shuffle_joints", "lambda", "motor_ablation", "seed"];

fn default_true() -> bool {
    true
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub dataset: PathBuf,
    #[serde(default = "default_output_root")]
    pub output_root: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Analyze every run after training.
    #[serde(default = "default_true")]
    pub analyze: bool,
    /// Per-number accuracy that counts a numerosity as learned.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub defaults: Map<String, Value>,
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<Value>>,
    #[serde(default)]
    pub runs: Vec<Map<String, Value>>,
}

fn default_output_root() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub dataset: PathBuf,
    pub output_root: PathBuf,
    pub seed: u64,
    pub analyze: bool,
    pub threshold: f64,
    pub runs: Vec<RunConfig>,
}

/// `ECL_OUT` when set and nonempty, else `configured`.
pub fn resolve_output_root(configured: &Path, env: Option<&str>) -> PathBuf {
    match env {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured.to_path_buf(),
    }
}

pub fn env_output_root(configured: &Path) -> PathBuf {
    resolve_output_root(configured, std::env::var(OUTPUT_ENV).ok().as_deref())
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        other => other.to_string(),
    }
}

fn axes_product(axes: &BTreeMap<String, Vec<Value>>) -> Result<Vec<Vec<(String, Value)>>> {
    for (k, values) in axes {
        if !AXES.contains(&k.as_str()) {
            return Err(EclError::Config(format!("unknown grid axis {k:?}; known axes: {}", AXES.join(", "))));
        }
        if values.is_empty() {
            return Err(EclError::Config(format!("grid axis {k:?} has no values")));
        }
    }
    let mut points: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    for name in AXES {
        let Some(values) = axes.get(name) else { continue };
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((name.to_string(), v.clone()));
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

fn build_run(grid: &GridFile, overrides: &Map<String, Value>, what: &str) -> Result<RunConfig> {
    let mut merged = Map::new();
    merged.insert("seed".into(), Value::from(grid.seed));
    merged.extend(grid.defaults.clone());
    merged.extend(overrides.clone());
    merged.insert("dataset".into(), Value::String(grid.dataset.display().to_string()));
    let cfg: RunConfig = serde_json::from_value(Value::Object(merged)).map_err(|e| EclError::Parse {
        what: what.into(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentGrid {
    /// Parses and expands a grid. Ids must be unique.
    pub fn from_json(text: &str, what: &str) -> Result<Self> {
        let file: GridFile = serde_json::from_str(text).map_err(|e| EclError::json(what, e))?;
        Self::expand(file, what)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(EclError::MissingPath(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| EclError::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn expand(file: GridFile, what: &str) -> Result<Self> {
        if !(file.threshold > 0.0 && file.threshold <= 1.0) {
            return Err(EclError::Config(format!("threshold must be in (0, 1], got {}", file.threshold)));
        }
        let mut runs = Vec::new();
        for (i, r) in file.runs.iter().enumerate() {
            if !r.contains_key("id") {
                return Err(EclError::Config(format!("runs[{i}] has no id")));
            }
            runs.push(build_run(&file, r, &format!("{what}: runs[{i}]"))?);
        }
        if !file.axes.is_empty() {
            for point in axes_product(&file.axes)? {
                let mut overrides = Map::new();
                let mut id = Vec::new();
                for (k, v) in point {
                    id.push(match k.as_str() {
                        "model" => value_label(&v),
                        "fraction" => format!("f{}", value_label(&v)),
                        "shuffle_joints" => if v == Value::Bool(true) { "shuffled".into() } else { "intact".into() },
                        "lambda" => format!("lambda{}", value_label(&v)),
                        "motor_ablation" => if v == Value::Bool(true) { "ablated".into() } else { "motor".into() },
                        "seed" => format!("s{}", value_label(&v)),
                        _ => value_label(&v),
                    });
                    overrides.insert(k, v);
                }
                overrides.insert("id".into(), Value::String(id.join("_")));
                runs.push(build_run(&file, &overrides, &format!("{what}: axes"))?);
            }
        }
        if runs.is_empty() {
            return Err(EclError::Config(format!("{what}: grid defines no runs")));
        }
        let mut seen = BTreeSet::new();
        for r in &runs {
            if !seen.insert(r.id.as_str()) {
                return Err(EclError::Config(format!("duplicate run id {:?}", r.id)));
            }
            if r.id.is_empty() || r.id.contains(['/', '\\']) || r.id == "." || r.id == ".." {
                return Err(EclError::Config(format!("run id {:?} is not a valid directory name", r.id)));
            }
        }
        Ok(ExperimentGrid {
            dataset: file.dataset,
            output_root: file.output_root,
            seed: file.seed,
            analyze: file.analyze,
            threshold: file.threshold,
            runs,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridOutcome {
    pub trained: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<(String, String)>,
}

impl GridOutcome {
    pub fn success(&self) -> bool {
        self.failed.is_empty()
    }
}

/// Whether a run directory holds a completed training run.
pub fn is_complete(run_dir: &Path) -> bool {
    run_dir.join(CHECKPOINT_FINAL).is_file()
}

/// Trains (and optionally analyzes) every run of the grid under `root`,
/// skipping runs that already finished. Failures of single runs are
/// collected; configuration and dataset problems abort before any training.
pub fn run_grid(grid: &ExperimentGrid, root: &Path) -> Result<GridOutcome> {
    let manifest = read_manifest(&grid.dataset)?;
    for r in &grid.runs {
        manifest.subset(r.fraction)?;
    }
    let mut outcome = GridOutcome::default();
    let pending: Vec<&RunConfig> = grid
        .runs
        .iter()
        .filter(|r| {
            let dir = root.join(&r.id);
            let done = is_complete(&dir);
            let analyzed = !grid.analyze || dir.join(ANALYSIS_DIR).join(SUMMARY_FILE).is_file();
            !(done && analyzed)
        })
        .collect();
    let data = if pending.iter().any(|r| !is_complete(&root.join(&r.id))) {
        info!("loading dataset {}", grid.dataset.display());
        Some(PreparedDataset::<f32>::new(&load_dataset(&grid.dataset)?)?)
    } else {
        None
    };
    for run in &grid.runs {
        let dir = root.join(&run.id);
        let mut cfg = run.clone();
        cfg.output_root = root.to_path_buf();
        let step = || -> Result<bool> {
            let mut trained = false;
            if !is_complete(&dir) {
                info!("training {}", cfg.id);
                train(&cfg, data.as_ref().expect("dataset loaded for pending runs"), Some(&dir))?;
                trained = true;
            }
            if grid.analyze && !dir.join(ANALYSIS_DIR).join(SUMMARY_FILE).is_file() {
                let opts = AnalysisOptions {
                    dataset: Some(grid.dataset.clone()),
                    ..AnalysisOptions::default()
                };
                analyze_run(&dir, &opts)?;
            }
            Ok(trained)
        };
        match step() {
            Ok(true) => outcome.trained.push(run.id.clone()),
            Ok(false) => {
                info!("skipping completed run {}", run.id);
                outcome.skipped.push(run.id.clone())
            }
            Err(e) => {
                error!("run {} failed: {e}", run.id);
                outcome.failed.push((run.id.clone(), e.to_string()));
            }
        }
    }
    Ok(outcome)
}

/// First epoch (1-based) at which each numerosity's validation accuracy
/// reaches `threshold`; `epochs + 1` when it never does.
pub fn epochs_to_threshold(record: &TrainRecord, threshold: f64) -> Vec<usize> {
    let censored = record.epochs.len() + 1;
    (0..NUM_CLASSES)
        .map(|k| {
            record
                .per_number
                .iter()
                .position(|row| row[k].is_some_and(|a| a >= threshold))
                .map_or(censored, |e| e + 1)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMetrics {
    pub layer: usize,
    pub rsa_rho: f64,
    pub rsa_p: f64,
    pub jpca_r: Option<f64>,
    pub jpca_slope_deg: Option<f64>,
    pub jpca_quality: Option<f64>,
    pub jpca_r2: Option<f64>,
    pub rotation_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub model: String,
    pub fraction: f64,
    pub curriculum: String,
    pub shuffle_joints: bool,
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best_val_motor_mse: Option<f64>,
    pub final_val_acc: f64,
    pub final_val_motor_mse: Option<f64>,
    pub epochs_to_threshold: Vec<usize>,
    pub acquisition_rho: Option<f64>,
    pub acquisition_p: Option<f64>,
    /// Present once the run has been analyzed (embodied runs only).
    pub layers: Vec<LayerMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub threshold: f64,
    pub runs: Vec<RunSummary>,
}

fn layer_metrics(summary: &AnalysisSummary) -> Vec<LayerMetrics> {
    summary
        .layers
        .iter()
        .map(|l| LayerMetrics {
            layer: l.layer,
            rsa_rho: l.rsa.rho,
            rsa_p: l.rsa.p,
            jpca_r: l.jpca.phases.as_ref().and_then(|p| p.pearson_r),
            jpca_slope_deg: l.jpca.phases.as_ref().map(|p| p.slope_deg),
            jpca_quality: l.jpca.quality,
            jpca_r2: l.jpca.r2,
            rotation_fraction: l.jpca.rotation_fraction,
        })
        .collect()
}

/// Metrics of one completed run directory.
pub fn summarize_run(run_dir: &Path, threshold: f64) -> Result<RunSummary> {
    let config = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
    let record = read_record(run_dir)?;
    let ett = epochs_to_threshold(&record, threshold);
    let numerosity: Vec<f64> = (1..=NUM_CLASSES).map(|n| n as f64).collect();
    let ett_f: Vec<f64> = ett.iter().map(|&e| e as f64).collect();
    let acquisition = spearman_test(&numerosity, &ett_f, &permutations(NUM_CLASSES, PERMUTATIONS, PERMUTATION_SEED));
    let layers = if run_dir.join(ANALYSIS_DIR).join(SUMMARY_FILE).is_file() {
        layer_metrics(&read_summary(run_dir)?)
    } else {
        Vec::new()
    };
    let best = record.best();
    let last = record.final_metrics();
    Ok(RunSummary {
        run: config.id.clone(),
        model: config.model.name().into(),
        fraction: config.fraction,
        curriculum: serde_json::to_value(config.curriculum)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        shuffle_joints: config.shuffle_joints,
        seed: config.seed,
        epochs: record.epochs.len(),
        best_epoch: record.best_epoch,
        best_val_acc: best.val_count_acc,
        best_val_motor_mse: best.val_motor_mse,
        final_val_acc: last.val_count_acc,
        final_val_motor_mse: last.val_motor_mse,
        epochs_to_threshold: ett,
        acquisition_rho: acquisition.map(|a| a.0),
        acquisition_p: acquisition.map(|a| a.1),
        layers,
    })
}

pub fn report_csv(report: &SummaryReport) -> String {
    let mut out = String::from(
        "run,model,fraction,curriculum,shuffle_joints,seed,epochs,best_epoch,best_val_acc,best_val_motor_mse,\
         final_val_acc,final_val_motor_mse",
    );
    for l in 1..=2 {
        write!(out, ",rsa_rho_l{l},rsa_p_l{l},jpca_r_l{l},jpca_slope_l{l},jpca_quality_l{l}").unwrap();
    }
    for n in 1..=NUM_CLASSES {
        write!(out, ",ett_{n}").unwrap();
    }
    out.push_str(",acquisition_rho,acquisition_p\n");
    for r in &report.runs {
        write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.run,
            r.model,
            r.fraction,
            r.curriculum,
            r.shuffle_joints,
            r.seed,
            r.epochs,
            r.best_epoch,
            r.best_val_acc,
            fmt_opt(r.best_val_motor_mse),
            r.final_val_acc,
            fmt_opt(r.final_val_motor_mse)
        )
        .unwrap();
        for l in 1..=2 {
            match r.layers.iter().find(|m| m.layer == l) {
                Some(m) => write!(
                    out,
                    ",{},{},{},{},{}",
                    m.rsa_rho,
                    m.rsa_p,
                    fmt_opt(m.jpca_r),
                    fmt_opt(m.jpca_slope_deg),
                    fmt_opt(m.jpca_quality)
                )
                .unwrap(),
                None => out.push_str(",,,,,"),
            }
        }
        for e in &r.epochs_to_threshold {
            write!(out, ",{e}").unwrap();
        }
        writeln!(out, ",{},{}", fmt_opt(r.acquisition_rho), fmt_opt(r.acquisition_p)).unwrap();
    }
    out
}

/// Aggregates every completed run directory directly under `root` (sorted
/// by name) into `report.csv` and `report.json`.
pub fn report(root: &Path, threshold: f64) -> Result<SummaryReport> {
    if !root.is_dir() {
        return Err(EclError::MissingPath(root.to_path_buf()));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| EclError::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join(CONFIG_FILE).is_file() && is_complete(p))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(EclError::EmptyReport(root.to_path_buf()));
    }
    let runs = dirs.iter().map(|d| summarize_run(d, threshold)).collect::<Result<Vec<_>>>()?;
    let report = SummaryReport { threshold, runs };
    let csv_path = root.join(REPORT_CSV);
    fs::write(&csv_path, report_csv(&report)).map_err(|e| EclError::io(&csv_path, e))?;
    let json_path = root.join(REPORT_JSON);
    let json = serde_json::to_string_pretty(&report).map_err(|e| EclError::json("report", e))?;
    fs::write(&json_path, json + "\n").map_err(|e| EclError::io(&json_path, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::EpochMetrics;

    fn record(per_number: Vec<Vec<Option<f64>>>) -> TrainRecord {
        let epochs = (1..=per_number.len())
            .map(|epoch| EpochMetrics {
                epoch,
                val_count_acc: 0.5,
                val_motor_mse: None,
                train_loss: 1.0,
            })
            .collect();
        TrainRecord {
            epochs,
            per_number,
            best_epoch: 1,
        }
    }

    #[test]
    fn threshold_epochs_and_censoring() {
        // numerosity n reaches 0.8 at epoch 10 n, 100 epochs in total
        let rows: Vec<Vec<Option<f64>>> = (1..=100)
            .map(|e| (1..=10).map(|n| Some(if e >= 10 * n { 0.9 } else { 0.1 })).collect())
            .collect();
        let ett = epochs_to_threshold(&record(rows.clone()), 0.8);
        assert_eq!(ett, (1..=10).map(|n| 10 * n).collect::<Vec<_>>());
        let truncated = record(rows[..35].to_vec());
        assert_eq!(epochs_to_threshold(&truncated, 0.8), vec![10, 20, 30, 36, 36, 36, 36, 36, 36, 36]);
        let numerosity: Vec<f64> = (1..=10).map(|n| n as f64).collect();
        let ett_f: Vec<f64> = ett.iter().map(|&e| e as f64).collect();
        let (rho, p) = spearman_test(&numerosity, &ett_f, &permutations(10, 2000, 1)).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
        assert!(p < 0.01);
    }

    #[test]
    fn missing_accuracy_never_counts() {
        let rows = vec![vec![None; 10], vec![Some(0.8); 10]];
        assert_eq!(epochs_to_threshold(&record(rows), 0.8), vec![2; 10]);
    }

    #[test]
    fn grid_expansion_order_and_ids() {
        let text = r#"{
            "dataset": "d",
            "seed": 7,
            "defaults": {"epochs": 3},
            "axes": {"seed": [1, 2], "model": ["embodied", "vision-pool"], "curriculum": ["random", "hard-to-easy"]},
            "runs": [{"id": "extra", "fraction": 0.5}]
        }"#;
        let grid = ExperimentGrid::from_json(text, "grid").unwrap();
        let ids: Vec<&str> = grid.runs.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(
            ids,
            [
                "extra",
                "embodied_random_s1",
                "embodied_random_s2",
                "embodied_hard-to-easy_s1",
                "embodied_hard-to-easy_s2",
                "vision-pool_random_s1",
                "vision-pool_random_s2",
                "vision-pool_hard-to-easy_s1",
                "vision-pool_hard-to-easy_s2"
            ]
        );
        assert_eq!(grid.runs[0].seed, 7);
        assert_eq!(grid.runs[0].fraction, 0.5);
        assert!(grid.runs.iter().all(|r| r.epochs == 3 && r.dataset == Path::new("d")));
        assert_eq!(grid.output_root, Path::new("runs"));
        assert_eq!(grid.threshold, DEFAULT_THRESHOLD);
        // expansion is a pure function of the text
        assert_eq!(ExperimentGrid::from_json(text, "grid").unwrap(), grid);
    }

    #[test]
    fn grid_rejections() {
        let dup = r#"{"dataset": "d", "runs": [{"id": "a"}, {"id": "a", "seed": 3}]}"#;
        assert!(matches!(ExperimentGrid::from_json(dup, "g"), Err(EclError::Config(m)) if m.contains("duplicate")));
        let bad_axis = r#"{"dataset": "d", "axes": {"colour": ["red"]}}"#;
        assert!(ExperimentGrid::from_json(bad_axis, "g").is_err());
        let unknown_key = r#"{"dataset": "d", "runs": [{"id": "a", "epoch": 3}]}"#;
        assert!(matches!(ExperimentGrid::from_json(unknown_key, "g"), Err(EclError::Parse { .. })));
        let malformed = "{\n  \"dataset\": \"d\",\n  \"runs\": [\n}";
        match ExperimentGrid::from_json(malformed, "g") {
            Err(EclError::Parse { message, .. }) => assert!(message.contains("line 4"), "{message}"),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(ExperimentGrid::from_json(r#"{"dataset": "d"}"#, "g").is_err());
        assert!(ExperimentGrid::from_json(r#"{"dataset": "d", "runs": [{"seed": 1}]}"#, "g").is_err());
    }

    #[test]
    fn output_root_override() {
        let cfg = Path::new("runs");
        assert_eq!(resolve_output_root(cfg, None), PathBuf::from("runs"));
        assert_eq!(resolve_output_root(cfg, Some("")), PathBuf::from("runs"));
        assert_eq!(resolve_output_root(cfg, Some("/tmp/x")), PathBuf::from("/tmp/x"));
    }

    #[test]
    fn empty_root_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(report(dir.path(), 0.8), Err(EclError::EmptyReport(_))));
        fs::create_dir(dir.path().join("unfinished")).unwrap();
        assert!(matches!(report(dir.path(), 0.8), Err(EclError::EmptyReport(_))));
    }
}
