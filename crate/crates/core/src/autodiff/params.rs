//! Parameter containers, initialization and the checkpoint format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EclError, Result};
use crate::scalar::{gemv, gemv_t_acc, outer_acc, Scalar};
use crate::tensor::Tensor;

/// A model whose trainable tensors can be enumerated in a fixed order.
///
/// `named_params` and `params_mut` must list tensors in the same order; the
/// optimizer, the checkpoint format and gradient accumulation all rely on it.
pub trait Parameterized<S: Scalar> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<S>>;

    fn params(&self) -> Vec<&Tensor<S>> {
        self.named_params().into_iter().map(|(_, t)| t).collect()
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Same structure with every tensor zeroed; used as a gradient buffer.
    fn zeroed(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.params_mut().into_iter().for_each(|t| t.fill(S::zero()));
        z
    }

    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (a, b) in self.params_mut().into_iter().zip(other.params()) {
            a.add_assign(b);
        }
    }

    fn scale_all(&mut self, factor: S) {
        self.params_mut().into_iter().for_each(|t| t.scale(factor));
    }

    fn all_finite(&self) -> bool {
        self.params().iter().all(|t| t.is_finite())
    }
}

pub(crate) fn prefixed<'a, S>(
    prefix: &str,
    items: Vec<(String, &'a Tensor<S>)>,
) -> Vec<(String, &'a Tensor<S>)> {
    items
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}

/// Plain list of tensors; handy for checking gradients of free functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamList<S>(pub Vec<Tensor<S>>);

impl<S: Scalar> Parameterized<S> for ParamList<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        self.0.iter().enumerate().map(|(i, t)| (format!("p{i}"), t)).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.0.iter_mut().collect()
    }
}

/// Uniform in `[-bound, bound]`.
pub fn uniform<S: Scalar, R: Rng>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<S> {
    Tensor::from_fn(shape, |_| S::lit(rng.gen_range(-bound..=bound)))
}

/// Kaiming (He) uniform for ReLU fan-in: bound `sqrt(6 / fan_in)`.
pub fn kaiming_uniform<S: Scalar, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<S> {
    uniform(shape, (6.0 / fan_in.max(1) as f64).sqrt(), rng)
}

/// Fully connected layer `y = W x + b`, `W` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Linear {
            weight: kaiming_uniform(&[outputs, inputs], inputs, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn outputs(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn forward(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.inputs() {
            return Err(EclError::Dimension(format!(
                "linear layer expects {} inputs, got {}",
                self.inputs(),
                x.len()
            )));
        }
        let mut y = vec![S::zero(); self.outputs()];
        gemv(self.weight.data(), self.outputs(), self.inputs(), x, &mut y);
        for (v, &b) in y.iter_mut().zip(self.bias.data()) {
            *v += b;
        }
        Ok(y)
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, x: &[S], dy: &[S], grads: &mut Linear<S>) -> Vec<S> {
        outer_acc(grads.weight.data_mut(), self.inputs(), dy, x);
        for (g, &d) in grads.bias.data_mut().iter_mut().zip(dy) {
            *g += d;
        }
        let mut dx = vec![S::zero(); self.inputs()];
        gemv_t_acc(self.weight.data(), self.outputs(), self.inputs(), dy, &mut dx);
        dx
    }
}

impl<S: Scalar> Parameterized<S> for Linear<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    step: u64,
    params: Vec<CheckpointEntry>,
}

const CHECKPOINT_FORMAT: &str = "ecl-checkpoint-v1";

/// Writes a checkpoint: one line of JSON header (names, shapes, step)
/// terminated by `\n`, then every parameter as little-endian `f32`,
/// concatenated in header order.
pub fn save_checkpoint<S: Scalar, P: Parameterized<S>>(path: &Path, model: &P, step: u64) -> Result<()> {
    let named = model.named_params();
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        step,
        params: named
            .iter()
            .map(|(n, t)| CheckpointEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let file = File::create(path).map_err(|e| EclError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| EclError::io(path, e);
    serde_json::to_writer(&mut w, &header).map_err(|e| EclError::json("checkpoint header", e))?;
    w.write_all(b"\n").map_err(io)?;
    for (_, t) in &named {
        for &v in t.data() {
            w.write_all(&(v.as_f64() as f32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Loads a checkpoint into `model`, checking names and shapes. Returns the step.
pub fn load_checkpoint<S: Scalar, P: Parameterized<S>>(path: &Path, model: &mut P) -> Result<u64> {
    let file = File::open(path).map_err(|e| EclError::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| EclError::io(path, e))?;
    let header: CheckpointHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| EclError::json("checkpoint header", e))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(EclError::Checkpoint(format!("unknown format {}", header.format)));
    }
    let expected: Vec<(String, Vec<usize>)> = model
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if expected.len() != header.params.len() {
        return Err(EclError::Checkpoint(format!(
            "model has {} tensors, checkpoint has {}",
            expected.len(),
            header.params.len()
        )));
    }
    for ((name, shape), entry) in expected.iter().zip(&header.params) {
        if name != &entry.name || shape != &entry.shape {
            return Err(EclError::Checkpoint(format!(
                "expected {name} {shape:?}, found {} {:?}",
                entry.name, entry.shape
            )));
        }
    }
    let mut buf = [0u8; 4];
    for t in model.params_mut() {
        for v in t.data_mut() {
            r.read_exact(&mut buf).map_err(|e| EclError::io(path, e))?;
            *v = S::lit(f32::from_le_bytes(buf) as f64);
        }
    }
    Ok(header.step)
}
