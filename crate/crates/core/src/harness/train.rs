//! The training loop and the run-directory files it writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_update, save_checkpoint, AdamState, Parameterized};
use crate::envsim::{Dataset, DatasetManifest};
use crate::error::{EclError, Result};
use crate::harness::batching::{order_curriculum, shuffle_joints};
use crate::harness::config::RunConfig;
use crate::harness::evaluate::evaluate;
use crate::models::{motor_targets, CountingModel, MotorTarget, SequenceInput, NUM_CLASSES};
use crate::scalar::Scalar;

pub const LEARNING_CURVE: &str = "learning_curve.csv";
pub const PER_NUMBER: &str = "per_number.csv";
pub const CHECKPOINT_BEST: &str = "checkpoint_best.bin";
pub const CHECKPOINT_FINAL: &str = "checkpoint_final.bin";
pub const CONFIG_FILE: &str = "config.json";

/// Network inputs for every episode of a dataset, keyed by episode id.
#[derive(Debug, Clone)]
pub struct PreparedDataset<S> {
    pub manifest: DatasetManifest,
    inputs: BTreeMap<String, SequenceInput<S>>,
}

impl<S: Scalar> PreparedDataset<S> {
    /// Converts every episode (next-pose motor targets).
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let inputs = dataset
            .episodes
            .par_iter()
            .map(|ep| Ok((ep.episode_id.clone(), SequenceInput::from_episode(ep, MotorTarget::NextPose)?)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .collect();
        Ok(PreparedDataset {
            manifest: dataset.manifest.clone(),
            inputs,
        })
    }

    pub fn get(&self, id: &str) -> Result<&SequenceInput<S>> {
        self.inputs
            .get(id)
            .ok_or_else(|| EclError::Config(format!("episode {id} is listed in the manifest but not loaded")))
    }

    fn collect(&self, ids: &[String]) -> Result<Vec<&SequenceInput<S>>> {
        ids.iter().map(|id| self.get(id)).collect()
    }

    /// Training episodes of a data fraction, in subset order.
    pub fn train_split(&self, fraction: f64) -> Result<Vec<&SequenceInput<S>>> {
        self.collect(self.manifest.subset(fraction)?)
    }

    pub fn val_split(&self) -> Result<Vec<&SequenceInput<S>>> {
        self.collect(&self.manifest.split.val)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub val_count_acc: f64,
    pub val_motor_mse: Option<f64>,
    pub train_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub epochs: Vec<EpochMetrics>,
    /// `epochs x 10` validation accuracy per numerosity.
    pub per_number: Vec<Vec<Option<f64>>>,
    /// 1-based epoch with the highest validation accuracy (earliest on ties).
    pub best_epoch: usize,
}

impl TrainRecord {
    pub fn best(&self) -> &EpochMetrics {
        &self.epochs[self.best_epoch - 1]
    }

    pub fn final_metrics(&self) -> &EpochMetrics {
        self.epochs.last().expect("at least one epoch")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub record: TrainRecord,
    pub best_model: CountingModel<S>,
    pub final_model: CountingModel<S>,
}

fn with_targets<S: Scalar>(input: &SequenceInput<S>, target: MotorTarget) -> SequenceInput<S> {
    let mut s = input.clone();
    if target != MotorTarget::NextPose {
        s.targets = motor_targets(&s.poses, target);
    }
    s
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const DROPOUT_STREAM_BASE: u64 = 1 << 32;

/// Builds the initial model of a run.
pub fn init_model<S: Scalar>(config: &RunConfig) -> CountingModel<S> {
    let mut model = CountingModel::new(config.model, &config.widths, config.dropout, &mut stream_rng(config.seed, 0));
    if let CountingModel::Embodied(m) = &mut model {
        m.motor_ablation = config.motor_ablation;
    }
    model
}

/// Trains one run. When `run_dir` is given, the config, metric CSVs and both
/// checkpoints are written there.
pub fn train<S: Scalar>(
    config: &RunConfig,
    data: &PreparedDataset<S>,
    run_dir: Option<&Path>,
) -> Result<TrainOutcome<S>> {
    config.validate()?;
    let train_set: Vec<SequenceInput<S>> = data
        .train_split(config.fraction)?
        .into_iter()
        .map(|s| with_targets(s, config.motor_target))
        .collect();
    let val_owned: Vec<SequenceInput<S>> = data
        .val_split()?
        .into_iter()
        .map(|s| with_targets(s, config.motor_target))
        .collect();
    let val: Vec<&SequenceInput<S>> = val_owned.iter().collect();
    if train_set.is_empty() {
        return Err(EclError::EmptySequence("training split is empty"));
    }
    if let Some(dir) = run_dir {
        fs::create_dir_all(dir).map_err(|e| EclError::io(dir, e))?;
        let path = dir.join(CONFIG_FILE);
        fs::write(&path, config.to_json() + "\n").map_err(|e| EclError::io(&path, e))?;
    }

    let labels: Vec<usize> = train_set.iter().map(|s| s.label).collect();
    let mut model = init_model::<S>(config);
    let mut adam = AdamState::new(&model, config.optimizer);
    let mut order_rng = stream_rng(config.seed, 1);
    let mut shuffle_rng = stream_rng(config.seed, 2);
    let mut sample_counter: u64 = 0;
    let lambda = if config.model == crate::models::ModelKind::Embodied {
        config.lambda
    } else {
        0.0
    };

    let mut epochs = Vec::with_capacity(config.epochs);
    let mut per_number = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, CountingModel<S>)> = None;

    for epoch in 1..=config.epochs {
        let order = order_curriculum(&labels, config.curriculum, &mut order_rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut batch: Vec<SequenceInput<S>> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            if config.shuffle_joints {
                shuffle_joints(&mut batch, config.shuffle_mode, &mut shuffle_rng);
            }
            let first = sample_counter;
            sample_counter += batch.len() as u64;
            let results = batch
                .par_iter()
                .enumerate()
                .map(|(k, input)| {
                    let mut rng = stream_rng(config.seed, DROPOUT_STREAM_BASE + first + k as u64);
                    model.loss_and_grad(input, lambda, Some(&mut rng))
                })
                .collect::<Result<Vec<_>>>()?;

            let mut iter = results.into_iter();
            let (first_loss, mut grads) = iter.next().expect("nonempty batch");
            let mut batch_loss = first_loss.total.as_f64();
            for (loss, g) in iter {
                batch_loss += loss.total.as_f64();
                grads.accumulate(&g);
            }
            if !batch_loss.is_finite() || !grads.all_finite() {
                return Err(EclError::Divergence {
                    epoch,
                    batch: b + 1,
                    loss: batch_loss,
                });
            }
            grads.scale_all(S::lit(1.0 / chunk.len() as f64));
            adam_update(&mut model, &grads, &mut adam);
            loss_sum += batch_loss;
        }

        let eval = evaluate(&model, &val)?;
        let metrics = EpochMetrics {
            epoch,
            val_count_acc: eval.accuracy,
            val_motor_mse: if config.logs_motor() { eval.motor_mse } else { None },
            train_loss: loss_sum / train_set.len() as f64,
        };
        debug!(
            "{} epoch {epoch}: loss {:.4} val acc {:.4}",
            config.id, metrics.train_loss, metrics.val_count_acc
        );
        if best.as_ref().map_or(true, |(_, acc, _)| eval.accuracy > *acc) {
            best = Some((epoch, eval.accuracy, model.clone()));
        }
        epochs.push(metrics);
        per_number.push(eval.per_number);
    }

    let (best_epoch, best_acc, best_model) = best.expect("at least one epoch");
    info!("{}: best val accuracy {best_acc:.4} at epoch {best_epoch}", config.id);
    let record = TrainRecord {
        epochs,
        per_number,
        best_epoch,
    };
    if let Some(dir) = run_dir {
        write_learning_curve(&dir.join(LEARNING_CURVE), &record)?;
        write_per_number(&dir.join(PER_NUMBER), &record)?;
        save_checkpoint(&dir.join(CHECKPOINT_BEST), &best_model, best_epoch as u64)?;
        // the final checkpoint marks a completed run, so it appears atomically
        let partial = dir.join(format!("{CHECKPOINT_FINAL}.partial"));
        save_checkpoint(&partial, &model, adam.step)?;
        let done = dir.join(CHECKPOINT_FINAL);
        fs::rename(&partial, &done).map_err(|e| EclError::io(&done, e))?;
    }
    Ok(TrainOutcome {
        record,
        best_model,
        final_model: model,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_learning_curve(path: &Path, record: &TrainRecord) -> Result<()> {
    let mut out = String::from("epoch,val_count_acc,val_motor_mse,train_loss\n");
    for m in &record.epochs {
        out.push_str(&format!(
            "{},{},{},{}\n",
            m.epoch,
            m.val_count_acc,
            opt(m.val_motor_mse),
            m.train_loss
        ));
    }
    fs::write(path, out).map_err(|e| EclError::io(path, e))
}

pub fn write_per_number(path: &Path, record: &TrainRecord) -> Result<()> {
    let mut out = String::from("epoch,numerosity,accuracy\n");
    for (e, row) in record.per_number.iter().enumerate() {
        for (k, acc) in row.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", e + 1, k + 1, opt(*acc)));
        }
    }
    fs::write(path, out).map_err(|e| EclError::io(path, e))
}

fn csv_rows(path: &Path, header: &str) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| EclError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(EclError::Parse {
            what: path.display().to_string(),
            message: format!("expected header {header:?}"),
        });
    }
    Ok(lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str) -> Result<T> {
    field.parse().map_err(|_| EclError::Parse {
        what: path.display().to_string(),
        message: format!("line {}: cannot parse {field:?}", line + 2),
    })
}

fn parse_opt(path: &Path, line: usize, field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_field(path, line, field).map(Some)
    }
}

/// Reads `learning_curve.csv` and `per_number.csv` back into a record.
pub fn read_record(run_dir: &Path) -> Result<TrainRecord> {
    let lc = run_dir.join(LEARNING_CURVE);
    let mut epochs = Vec::new();
    for (i, row) in csv_rows(&lc, "epoch,val_count_acc,val_motor_mse,train_loss")?.iter().enumerate() {
        if row.len() != 4 {
            return Err(EclError::Parse {
                what: lc.display().to_string(),
                message: format!("line {}: expected 4 fields", i + 2),
            });
        }
        epochs.push(EpochMetrics {
            epoch: parse_field(&lc, i, &row[0])?,
            val_count_acc: parse_field(&lc, i, &row[1])?,
            val_motor_mse: parse_opt(&lc, i, &row[2])?,
            train_loss: parse_field(&lc, i, &row[3])?,
        });
    }
    if epochs.is_empty() {
        return Err(EclError::Parse {
            what: lc.display().to_string(),
            message: "no epochs".into(),
        });
    }
    let pn = run_dir.join(PER_NUMBER);
    let mut per_number = vec![vec![None; NUM_CLASSES]; epochs.len()];
    for (i, row) in csv_rows(&pn, "epoch,numerosity,accuracy")?.iter().enumerate() {
        if row.len() != 3 {
            return Err(EclError::Parse {
                what: pn.display().to_string(),
                message: format!("line {}: expected 3 fields", i + 2),
            });
        }
        let e: usize = parse_field(&pn, i, &row[0])?;
        let n: usize = parse_field(&pn, i, &row[1])?;
        if e == 0 || e > epochs.len() || n == 0 || n > NUM_CLASSES {
            return Err(EclError::Parse {
                what: pn.display().to_string(),
                message: format!("line {}: epoch/numerosity out of range", i + 2),
            });
        }
        per_number[e - 1][n - 1] = parse_opt(&pn, i, &row[2])?;
    }
    let mut best_epoch = 1;
    for m in &epochs {
        if m.val_count_acc > epochs[best_epoch - 1].val_count_acc {
            best_epoch = m.epoch;
        }
    }
    Ok(TrainRecord {
        epochs,
        per_number,
        best_epoch,
    })
}
