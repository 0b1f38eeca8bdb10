//! Embodied counting network: visual and motor encoders feeding a two-layer
//! LSTM with a count head on the final state and a motor head at every step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::params::prefixed;
use crate::autodiff::{
    dropout_mask, lstm_cell_backward, lstm_cell_step, GateRecord, Linear, LstmCellParams,
    Parameterized,
};
use crate::error::{EclError, Result};
use crate::models::encoders::{MotorCache, MotorEncoder, VisualCache, VisualEncoder};
use crate::models::{ModelWidths, SequenceInput};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbodiedModel<S> {
    pub visual: VisualEncoder<S>,
    pub motor: MotorEncoder<S>,
    pub lstm1: LstmCellParams<S>,
    pub lstm2: LstmCellParams<S>,
    pub count_head: Linear<S>,
    pub motor_head: Linear<S>,
    /// Dropout probability between the LSTM layers (training only).
    pub dropout: f64,
    /// Replace the motor encoder output with zeros.
    pub motor_ablation: bool,
}

/// Hidden states recorded during an evaluation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace<S> {
    pub episode_id: String,
    pub label: usize,
    /// `T x hidden`
    pub layer1: Tensor<S>,
    /// `T x hidden`
    pub layer2: Tensor<S>,
    /// `T x feature`
    pub visual: Tensor<S>,
    /// Last conv block activation of the final frame, `C x h x w`.
    pub final_maps: Tensor<S>,
}

impl<S: Scalar> ActivationTrace<S> {
    pub fn steps(&self) -> usize {
        self.layer1.dim(0)
    }

    /// Hidden states of LSTM layer 1 or 2.
    pub fn layer(&self, layer: usize) -> Result<&Tensor<S>> {
        match layer {
            1 => Ok(&self.layer1),
            2 => Ok(&self.layer2),
            _ => Err(EclError::Config(format!("LSTM layer must be 1 or 2, got {layer}"))),
        }
    }

    pub fn final_state(&self, layer: usize) -> Result<&[S]> {
        let states = self.layer(layer)?;
        let h = states.dim(1);
        let t = states.dim(0);
        Ok(&states.data()[(t - 1) * h..t * h])
    }
}

#[derive(Debug, Clone)]
struct StepCache<S> {
    visual: VisualCache<S>,
    motor: Option<MotorCache<S>>,
    r1: GateRecord<S>,
    r2: GateRecord<S>,
    mask: Vec<S>,
}

/// Result of a forward pass; keeps what the backward pass needs.
#[derive(Debug, Clone)]
pub struct EmbodiedPass<S> {
    pub logits: Vec<S>,
    /// `T x 2`
    pub motor_preds: Tensor<S>,
    pub trace: ActivationTrace<S>,
    steps: Vec<StepCache<S>>,
}

impl<S: Scalar> EmbodiedPass<S> {
    /// Post-ReLU activation of conv block `block` (0-based) on the final frame.
    pub fn final_activation(&self, block: usize) -> Tensor<S> {
        self.steps[self.steps.len() - 1].visual.activations[block].clone()
    }
}

impl<S: Scalar> EmbodiedModel<S> {
    pub fn new<R: Rng>(widths: &ModelWidths, dropout: f64, rng: &mut R) -> Self {
        let f = widths.feature;
        EmbodiedModel {
            visual: VisualEncoder::new(3, &widths.channels, f, rng),
            motor: MotorEncoder::new(widths.motor_hidden, f, rng),
            lstm1: LstmCellParams::new(2 * f, widths.hidden, rng),
            lstm2: LstmCellParams::new(widths.hidden, widths.hidden, rng),
            count_head: Linear::new(widths.hidden, widths.classes, rng),
            motor_head: Linear::new(widths.hidden, 2, rng),
            dropout,
            motor_ablation: false,
        }
    }

    pub fn hidden(&self) -> usize {
        self.lstm1.hidden()
    }

    /// Runs the sequence. Dropout is applied only when an RNG is supplied.
    pub fn forward(&self, input: &SequenceInput<S>, mut dropout_rng: Option<&mut ChaCha8Rng>) -> Result<EmbodiedPass<S>> {
        let t_len = input.len();
        if t_len == 0 {
            return Err(EclError::EmptySequence("embodied forward needs at least one frame"));
        }
        if input.poses.len() != t_len {
            return Err(EclError::Dimension(format!(
                "{} frames but {} poses",
                t_len,
                input.poses.len()
            )));
        }
        let n_h = self.hidden();
        let f = self.visual.feature();
        let mut h1 = vec![S::zero(); n_h];
        let mut c1 = vec![S::zero(); n_h];
        let mut h2 = vec![S::zero(); n_h];
        let mut c2 = vec![S::zero(); n_h];
        let mut layer1 = Vec::with_capacity(t_len * n_h);
        let mut layer2 = Vec::with_capacity(t_len * n_h);
        let mut visual_feats = Vec::with_capacity(t_len * f);
        let mut preds = Vec::with_capacity(t_len * 2);
        let mut steps = Vec::with_capacity(t_len);

        for (image, pose) in input.images.iter().zip(&input.poses) {
            let (v, vc) = self.visual.forward(image)?;
            let (m, mc) = if self.motor_ablation {
                (vec![S::zero(); self.motor.feature()], None)
            } else {
                let (m, mc) = self.motor.forward(pose)?;
                (m, Some(mc))
            };
            visual_feats.extend_from_slice(&v);
            let mut x = v;
            x.extend(m);
            let (nh1, nc1, r1) = lstm_cell_step(&x, &h1, &c1, &self.lstm1)?;
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) => dropout_mask(n_h, self.dropout, rng),
                None => vec![S::one(); n_h],
            };
            let dropped: Vec<S> = nh1.iter().zip(&mask).map(|(&a, &b)| a * b).collect();
            let (nh2, nc2, r2) = lstm_cell_step(&dropped, &h2, &c2, &self.lstm2)?;
            preds.extend(self.motor_head.forward(&nh2)?);
            layer1.extend_from_slice(&nh1);
            layer2.extend_from_slice(&nh2);
            (h1, c1, h2, c2) = (nh1, nc1, nh2, nc2);
            steps.push(StepCache {
                visual: vc,
                motor: mc,
                r1,
                r2,
                mask,
            });
        }
        let logits = self.count_head.forward(&h2)?;
        let final_maps = steps
            .last()
            .and_then(|s| s.visual.activations.last().cloned())
            .unwrap_or_else(|| Tensor::zeros(&[0]));
        Ok(EmbodiedPass {
            logits,
            motor_preds: Tensor::from_vec(&[t_len, 2], preds)?,
            trace: ActivationTrace {
                episode_id: input.episode_id.clone(),
                label: input.label,
                layer1: Tensor::from_vec(&[t_len, n_h], layer1)?,
                layer2: Tensor::from_vec(&[t_len, n_h], layer2)?,
                visual: Tensor::from_vec(&[t_len, f], visual_feats)?,
                final_maps,
            },
            steps,
        })
    }

    /// Backpropagates `dL/dlogits` and `dL/dmotor_preds` (`T x 2`) through
    /// time, accumulating into `grads`. With `tap = Some(b)` the gradient
    /// with respect to conv block `b` of the final frame is returned.
    pub fn backward(
        &self,
        pass: &EmbodiedPass<S>,
        dlogits: &[S],
        dmotor: &Tensor<S>,
        grads: &mut EmbodiedModel<S>,
        tap: Option<usize>,
    ) -> Result<Option<Tensor<S>>> {
        let t_len = pass.steps.len();
        dmotor.check_shape(&[t_len, 2], "motor gradient")?;
        let n_h = self.hidden();
        let f = self.visual.feature();
        let h2_at = |t: usize| &pass.trace.layer2.data()[t * n_h..(t + 1) * n_h];

        let mut dh2_next = self.count_head.backward(h2_at(t_len - 1), dlogits, &mut grads.count_head);
        let mut dc2_next = vec![S::zero(); n_h];
        let mut dh1_next = vec![S::zero(); n_h];
        let mut dc1_next = vec![S::zero(); n_h];
        let mut tapped = None;
        for t in (0..t_len).rev() {
            let step = &pass.steps[t];
            let dm = &dmotor.data()[t * 2..t * 2 + 2];
            let dh2_head = self.motor_head.backward(h2_at(t), dm, &mut grads.motor_head);
            let dh2: Vec<S> = dh2_next.iter().zip(&dh2_head).map(|(&a, &b)| a + b).collect();
            let g2 = lstm_cell_backward(&step.r2, &self.lstm2, &dh2, &dc2_next, &mut grads.lstm2);
            let dh1: Vec<S> = (0..n_h)
                .map(|k| dh1_next[k] + g2.dx[k] * step.mask[k])
                .collect();
            let g1 = lstm_cell_backward(&step.r1, &self.lstm1, &dh1, &dc1_next, &mut grads.lstm1);
            let step_tap = if t == t_len - 1 { tap } else { None };
            if let Some(g) = self.visual.backward(&step.visual, &g1.dx[..f], &mut grads.visual, step_tap)? {
                tapped = Some(g);
            }
            if let Some(mc) = &step.motor {
                self.motor.backward(mc, &g1.dx[f..], &mut grads.motor);
            }
            dh2_next = g2.dh_prev;
            dc2_next = g2.dc_prev;
            dh1_next = g1.dh_prev;
            dc1_next = g1.dc_prev;
        }
        Ok(tapped)
    }
}

impl<S: Scalar> Parameterized<S> for EmbodiedModel<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = prefixed("visual", self.visual.named_params());
        out.extend(prefixed("motor", self.motor.named_params()));
        out.extend(prefixed("lstm1", self.lstm1.named_params()));
        out.extend(prefixed("lstm2", self.lstm2.named_params()));
        out.extend(prefixed("count_head", self.count_head.named_params()));
        out.extend(prefixed("motor_head", self.motor_head.named_params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = self.visual.params_mut();
        out.extend(self.motor.params_mut());
        out.extend(self.lstm1.params_mut());
        out.extend(self.lstm2.params_mut());
        out.extend(self.count_head.params_mut());
        out.extend(self.motor_head.params_mut());
        out
    }
}
