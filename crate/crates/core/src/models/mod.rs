//! The embodied counting network, the vision-only baselines and a
//! kind-tagged wrapper the harness trains.

pub mod embodied;
pub mod encoders;
pub mod input;
pub mod vision;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{combined_loss, mse_motor_loss, softmax_cross_entropy, Parameterized};
use crate::error::{EclError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use embodied::{ActivationTrace, EmbodiedModel, EmbodiedPass};
pub use encoders::{ConvLayer, MotorEncoder, VisualEncoder};
pub use input::{hwc_to_chw, motor_targets, normalized_pose, MotorTarget, SequenceInput};
pub use vision::{VisionMode, VisionOnlyModel, VisionPass};

pub const NUM_CLASSES: usize = 10;

/// Layer widths. Defaults are the desk-scale sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelWidths {
    pub channels: Vec<usize>,
    pub feature: usize,
    pub motor_hidden: usize,
    pub hidden: usize,
    pub mlp_hidden: usize,
    pub classes: usize,
}

impl Default for ModelWidths {
    fn default() -> Self {
        ModelWidths {
            channels: vec![8, 16, 32],
            feature: 64,
            motor_hidden: 32,
            hidden: 128,
            mlp_hidden: 64,
            classes: NUM_CLASSES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Embodied,
    VisionSingle,
    VisionPool,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Embodied => "embodied",
            ModelKind::VisionSingle => "vision-single",
            ModelKind::VisionPool => "vision-pool",
        }
    }
}

/// Losses of one sample. `motor` is `None` for vision-only models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLoss<S> {
    pub total: S,
    pub count: S,
    pub motor: Option<S>,
}

#[derive(Debug, Clone)]
pub struct Prediction<S> {
    pub logits: Vec<S>,
    /// `T x 2`, embodied only.
    pub motor_preds: Option<Tensor<S>>,
    pub trace: Option<ActivationTrace<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CountingModel<S> {
    Embodied(EmbodiedModel<S>),
    Vision(VisionOnlyModel<S>),
}

fn targets_tensor<S: Scalar>(input: &SequenceInput<S>) -> Result<Tensor<S>> {
    Tensor::from_vec(&[input.targets.len(), 2], input.targets.iter().flatten().copied().collect())
}

impl<S: Scalar> CountingModel<S> {
    pub fn new<R: Rng>(kind: ModelKind, widths: &ModelWidths, dropout: f64, rng: &mut R) -> Self {
        match kind {
            ModelKind::Embodied => CountingModel::Embodied(EmbodiedModel::new(widths, dropout, rng)),
            ModelKind::VisionSingle => CountingModel::Vision(VisionOnlyModel::new(widths, VisionMode::Single, rng)),
            ModelKind::VisionPool => CountingModel::Vision(VisionOnlyModel::new(widths, VisionMode::Pool, rng)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            CountingModel::Embodied(_) => ModelKind::Embodied,
            CountingModel::Vision(v) if v.mode == VisionMode::Single => ModelKind::VisionSingle,
            CountingModel::Vision(_) => ModelKind::VisionPool,
        }
    }

    /// Loss of one sample and its parameter gradient. `lambda` weights the
    /// motor loss; dropout is active only when an RNG is supplied.
    pub fn loss_and_grad(
        &self,
        input: &SequenceInput<S>,
        lambda: f64,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(SampleLoss<S>, Self)>
    where
        Self: Clone,
    {
        let mut grads = self.zeroed();
        let loss = match (self, &mut grads) {
            (CountingModel::Embodied(m), CountingModel::Embodied(g)) => {
                let pass = m.forward(input, dropout_rng)?;
                let (ce, dlogits) = softmax_cross_entropy(&pass.logits, input.label)?;
                let target = targets_tensor(input)?;
                let (mse, mut dmotor) = mse_motor_loss(&pass.motor_preds, &target, &vec![true; input.len()])?;
                dmotor.scale(S::lit(lambda));
                m.backward(&pass, &dlogits, &dmotor, g, None)?;
                SampleLoss {
                    total: combined_loss(ce, mse, S::lit(lambda)),
                    count: ce,
                    motor: Some(mse),
                }
            }
            (CountingModel::Vision(m), CountingModel::Vision(g)) => {
                let pass = m.forward(&input.images)?;
                let (ce, dlogits) = softmax_cross_entropy(&pass.logits, input.label)?;
                m.backward(&pass, &dlogits, g, None)?;
                SampleLoss {
                    total: ce,
                    count: ce,
                    motor: None,
                }
            }
            _ => unreachable!("gradient buffer mirrors the model"),
        };
        Ok((loss, grads))
    }

    /// Evaluation-mode forward pass.
    pub fn predict(&self, input: &SequenceInput<S>) -> Result<Prediction<S>> {
        match self {
            CountingModel::Embodied(m) => {
                let pass = m.forward(input, None)?;
                Ok(Prediction {
                    logits: pass.logits,
                    motor_preds: Some(pass.motor_preds),
                    trace: Some(pass.trace),
                })
            }
            CountingModel::Vision(m) => Ok(Prediction {
                logits: m.forward(&input.images)?.logits,
                motor_preds: None,
                trace: None,
            }),
        }
    }

    /// Activation `A` of conv block `layer` (1-based) on the final frame and
    /// the gradient of logit `class` (1-based) with respect to it.
    pub fn class_activation_gradient(
        &self,
        input: &SequenceInput<S>,
        class: usize,
        layer: usize,
    ) -> Result<(Tensor<S>, Tensor<S>)>
    where
        Self: Clone,
    {
        let classes = match self {
            CountingModel::Embodied(m) => m.count_head.outputs(),
            CountingModel::Vision(m) => m.out.outputs(),
        };
        if class == 0 || class > classes {
            return Err(EclError::Label { label: class, classes });
        }
        let blocks = match self {
            CountingModel::Embodied(m) => m.visual.blocks.len(),
            CountingModel::Vision(m) => m.visual.blocks.len(),
        };
        if layer == 0 || layer > blocks {
            return Err(EclError::Config(format!("conv layer must be in 1..={blocks}, got {layer}")));
        }
        let mut onehot = vec![S::zero(); classes];
        onehot[class - 1] = S::one();
        let tap = Some(layer - 1);
        let mut scratch = self.zeroed();
        match (self, &mut scratch) {
            (CountingModel::Embodied(m), CountingModel::Embodied(g)) => {
                let pass = m.forward(input, None)?;
                let a = pass.final_activation(layer - 1);
                let dmotor = Tensor::zeros(&[input.len(), 2]);
                let da = m.backward(&pass, &onehot, &dmotor, g, tap)?;
                Ok((a, da.expect("tap requested")))
            }
            (CountingModel::Vision(m), CountingModel::Vision(g)) => {
                let pass = m.forward(&input.images)?;
                let a = pass.final_activation(layer - 1);
                let da = m.backward(&pass, &onehot, g, tap)?;
                Ok((a, da.expect("tap requested")))
            }
            _ => unreachable!("gradient buffer mirrors the model"),
        }
    }
}

impl<S: Scalar> Parameterized<S> for CountingModel<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        match self {
            CountingModel::Embodied(m) => m.named_params(),
            CountingModel::Vision(m) => m.named_params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        match self {
            CountingModel::Embodied(m) => m.params_mut(),
            CountingModel::Vision(m) => m.params_mut(),
        }
    }
}

/// Index of the largest logit; ties go to the lowest index. Returns a
/// 1-based class.
pub fn predicted_class<S: Scalar>(logits: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best + 1
}

#[cfg(test)]
mod tests;
