//! Per-run analysis: loads a trained checkpoint, collects validation traces
//! and writes the `analysis/` directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::load_checkpoint;
use crate::envsim::load_dataset;
use crate::error::{EclError, Result};
use crate::harness::{init_model, PreparedDataset, RunConfig, CHECKPOINT_BEST, CHECKPOINT_FINAL, CONFIG_FILE};
use crate::models::{ActivationTrace, CountingModel, SequenceInput, NUM_CLASSES};
use crate::neuro::gradcam::{grad_cam, upsample_bilinear, write_pgm};
use crate::neuro::jpca::{jpca_analysis, JpcaFit, PhaseRegression, JPCA_DIMS};
use crate::neuro::pca::pca;
use crate::neuro::rsa::{compute_rdm, distance_structure, rsa_spearman, DistanceStructure, Rdm, RsaResult};
use crate::neuro::stats::LinearFit;
use crate::neuro::tuning::{classify_detectors, flag_selective, preferred_numerosity, selectivity, tuning_curves};
use crate::scalar::Scalar;

pub const ANALYSIS_DIR: &str = "analysis";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LSTM_LAYERS: [usize; 2] = [1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointChoice {
    Best,
    #[default]
    Final,
}

impl CheckpointChoice {
    pub fn file_name(self) -> &'static str {
        match self {
            CheckpointChoice::Best => CHECKPOINT_BEST,
            CheckpointChoice::Final => CHECKPOINT_FINAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    /// LSTM layer for `rdm.csv` and `pca_coords.csv`; the other files cover both.
    pub layer: usize,
    pub checkpoint: CheckpointChoice,
    pub k: usize,
    /// Dataset directory; defaults to the one named in the run config.
    pub dataset: Option<PathBuf>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            layer: 1,
            checkpoint: CheckpointChoice::Final,
            k: JPCA_DIMS,
            dataset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JpcaSummary {
    pub r2: Option<f64>,
    pub omega: f64,
    pub quality: Option<f64>,
    pub rotation_fraction: Option<f64>,
    pub plane_rotation_fraction: Option<f64>,
    pub phases: Option<PhaseRegression>,
}

impl From<&JpcaFit> for JpcaSummary {
    fn from(f: &JpcaFit) -> Self {
        JpcaSummary {
            r2: f.r2,
            omega: f.omega,
            quality: f.quality,
            rotation_fraction: f.rotation_fraction,
            plane_rotation_fraction: f.plane_rotation_fraction,
            phases: f.phases.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: usize,
    pub rsa: RsaResult,
    pub selective_units: usize,
    /// Count of selective units preferring each numerosity.
    pub preferred_histogram: Vec<usize>,
    pub positive_detectors: usize,
    pub negative_detectors: usize,
    pub positive_log_fit: Option<LinearFit>,
    pub negative_log_fit: Option<LinearFit>,
    pub distance: DistanceStructure,
    pub jpca: JpcaSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub run: String,
    pub model: String,
    pub checkpoint: CheckpointChoice,
    pub layer: usize,
    pub episodes: usize,
    /// Empty for vision-only runs.
    pub layers: Vec<LayerSummary>,
    pub gradcam_maps: Vec<String>,
}

/// Evaluation-mode traces of every input, in input order.
pub fn collect_traces<S: Scalar>(model: &CountingModel<S>, inputs: &[&SequenceInput<S>]) -> Result<Vec<ActivationTrace<S>>> {
    inputs
        .par_iter()
        .map(|inp| {
            model
                .predict(inp)?
                .trace
                .ok_or_else(|| EclError::Config("model does not record hidden-state traces".into()))
        })
        .collect()
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| EclError::io(path, e))
}

pub fn rdm_csv(rdm: &Rdm) -> String {
    let n = rdm.size();
    let mut out = String::from("numerosity");
    for j in 1..=n {
        write!(out, ",{j}").unwrap();
    }
    out.push('\n');
    for i in 0..n {
        write!(out, "{}", i + 1).unwrap();
        for v in rdm.row(i) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn jpca_csv(fits: &[JpcaFit]) -> String {
    let mut out = String::from("layer,R2,omega,quality,rotation_fraction");
    for n in 1..=NUM_CLASSES {
        write!(out, ",phase_{n}").unwrap();
    }
    out.push_str(",pearson_r,slope_deg,plane_rotation_fraction\n");
    for f in fits {
        write!(
            out,
            "{},{},{},{},{}",
            f.layer,
            fmt_opt(f.r2),
            f.omega,
            fmt_opt(f.quality),
            fmt_opt(f.rotation_fraction)
        )
        .unwrap();
        for n in 0..NUM_CLASSES {
            let phase = f.phases.as_ref().and_then(|p| p.phases_deg.get(n).copied());
            write!(out, ",{}", fmt_opt(phase)).unwrap();
        }
        writeln!(
            out,
            ",{},{},{}",
            fmt_opt(f.phases.as_ref().and_then(|p| p.pearson_r)),
            fmt_opt(f.phases.as_ref().map(|p| p.slope_deg)),
            fmt_opt(f.plane_rotation_fraction)
        )
        .unwrap();
    }
    out
}

/// Grad-CAM for the first validation episode of every numerosity, each conv
/// block, true class. Maps are upsampled to the input resolution.
fn write_gradcams<S: Scalar>(model: &CountingModel<S>, val: &[&SequenceInput<S>], dir: &Path) -> Result<Vec<String>> {
    let blocks = match model {
        CountingModel::Embodied(m) => m.visual.blocks.len(),
        CountingModel::Vision(m) => m.visual.blocks.len(),
    };
    let mut picks: Vec<&SequenceInput<S>> = Vec::new();
    for n in 1..=NUM_CLASSES {
        if let Some(inp) = val.iter().find(|s| s.label == n) {
            picks.push(inp);
        }
    }
    let jobs: Vec<(&SequenceInput<S>, usize)> = picks.iter().flat_map(|&p| (1..=blocks).map(move |l| (p, l))).collect();
    let maps = jobs
        .par_iter()
        .map(|&(inp, layer)| {
            let map = grad_cam(model, inp, inp.label, layer)?;
            let img = inp.images.last().expect("nonempty episode");
            Ok((format!("{}_conv{layer}.pgm", inp.episode_id), upsample_bilinear(&map, img.dim(1), img.dim(2))))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut names = Vec::with_capacity(maps.len());
    for (name, map) in maps {
        write_pgm(&dir.join(&name), &map)?;
        names.push(name);
    }
    Ok(names)
}

/// Writes all analysis outputs of a trained run under `<run>/analysis/`.
pub fn analyze_run(run_dir: &Path, opts: &AnalysisOptions) -> Result<AnalysisSummary> {
    if !LSTM_LAYERS.contains(&opts.layer) {
        return Err(EclError::Config(format!("LSTM layer must be 1 or 2, got {}", opts.layer)));
    }
    let config = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
    let mut model = init_model::<f32>(&config);
    let ckpt = run_dir.join(opts.checkpoint.file_name());
    if !ckpt.exists() {
        return Err(EclError::MissingPath(ckpt));
    }
    load_checkpoint(&ckpt, &mut model)?;
    let data_dir = opts.dataset.clone().unwrap_or_else(|| config.dataset.clone());
    let data = PreparedDataset::<f32>::new(&load_dataset(&data_dir)?)?;
    let val = data.val_split()?;
    let out = run_dir.join(ANALYSIS_DIR);
    fs::create_dir_all(&out).map_err(|e| EclError::io(&out, e))?;
    info!("analyzing {} ({} validation episodes)", run_dir.display(), val.len());

    let gradcam_maps = write_gradcams(&model, &val, &out.join("gradcam"))?;
    let mut summary = AnalysisSummary {
        run: config.id.clone(),
        model: config.model.name().into(),
        checkpoint: opts.checkpoint,
        layer: opts.layer,
        episodes: val.len(),
        layers: Vec::new(),
        gradcam_maps,
    };
    if matches!(model, CountingModel::Embodied(_)) {
        let traces = collect_traces(&model, &val)?;
        let mut rsa_text = String::from("layer,rho,p\n");
        let mut tuning_text = String::from("unit,layer");
        for n in 1..=NUM_CLASSES {
            write!(tuning_text, ",m{n}").unwrap();
        }
        tuning_text.push_str(",S,class,preferred\n");
        let mut fits = Vec::new();
        for layer in LSTM_LAYERS {
            let rdm = compute_rdm(&traces, layer)?;
            if layer == opts.layer {
                write_file(&out.join("rdm.csv"), &rdm_csv(&rdm))?;
            }
            let rsa = rsa_spearman(&rdm)?;
            writeln!(rsa_text, "{layer},{},{}", rsa.rho, rsa.p).unwrap();

            let curves = tuning_curves(&traces, layer)?;
            let s: Vec<f64> = curves.iter().map(|c| selectivity(&c.means)).collect();
            let flagged = flag_selective(&s);
            let means: Vec<Vec<f64>> = curves.iter().map(|c| c.means.clone()).collect();
            let detectors = classify_detectors(&means);
            let mut histogram = vec![0usize; NUM_CLASSES];
            for (i, c) in curves.iter().enumerate() {
                write!(tuning_text, "{},{layer}", c.unit).unwrap();
                for m in &c.means {
                    write!(tuning_text, ",{m}").unwrap();
                }
                let preferred = if flagged[i] {
                    let p = preferred_numerosity(&c.means);
                    histogram[p - 1] += 1;
                    p.to_string()
                } else {
                    String::new()
                };
                writeln!(tuning_text, ",{},{},{preferred}", s[i], detectors.classes[i].name()).unwrap();
            }

            let fit = jpca_analysis(&traces, layer, opts.k)?;
            summary.layers.push(LayerSummary {
                layer,
                rsa,
                selective_units: flagged.iter().filter(|&&f| f).count(),
                preferred_histogram: histogram,
                positive_detectors: detectors.n_positive,
                negative_detectors: detectors.n_negative,
                positive_log_fit: detectors.positive_fit,
                negative_log_fit: detectors.negative_fit,
                distance: distance_structure(&rdm),
                jpca: JpcaSummary::from(&fit),
            });
            fits.push(fit);
        }
        write_file(&out.join("rsa.csv"), &rsa_text)?;
        write_file(&out.join("tuning.csv"), &tuning_text)?;
        write_file(&out.join("jpca.csv"), &jpca_csv(&fits))?;

        let finals: Vec<Vec<f64>> = traces
            .iter()
            .map(|t| Ok(t.final_state(opts.layer)?.iter().map(|v| v.as_f64()).collect()))
            .collect::<Result<_>>()?;
        let geometry = pca(&finals, 2.min(finals.len()))?;
        let mut coords = String::from("numerosity,pc1,pc2\n");
        for (t, p) in traces.iter().zip(&geometry.projections) {
            let pc = |i: usize| fmt_opt(p.get(i).copied());
            writeln!(coords, "{},{},{}", t.label, pc(0), pc(1)).unwrap();
        }
        write_file(&out.join("pca_coords.csv"), &coords)?;
    }
    let json = serde_json::to_string_pretty(&summary).map_err(|e| EclError::json("analysis summary", e))?;
    write_file(&out.join(SUMMARY_FILE), &(json + "\n"))?;
    Ok(summary)
}

/// Reads `analysis/summary.json` of a run.
pub fn read_summary(run_dir: &Path) -> Result<AnalysisSummary> {
    let path = run_dir.join(ANALYSIS_DIR).join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| EclError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| EclError::json("analysis summary", e))
}
