//! Vision-only baselines: the visual encoder plus an MLP classifier, reading
//! either the final frame or the mean feature over all frames.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::params::prefixed;
use crate::autodiff::{Linear, Parameterized};
use crate::error::{EclError, Result};
use crate::models::encoders::{VisualCache, VisualEncoder};
use crate::models::ModelWidths;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VisionMode {
    Single,
    Pool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisionOnlyModel<S> {
    pub visual: VisualEncoder<S>,
    pub hidden: Linear<S>,
    pub out: Linear<S>,
    pub mode: VisionMode,
}

#[derive(Debug, Clone)]
pub struct VisionPass<S> {
    pub logits: Vec<S>,
    frames: Vec<VisualCache<S>>,
    pooled: Vec<S>,
    hidden: Vec<S>,
}

impl<S: Scalar> VisionPass<S> {
    /// Last conv block activation of the final frame read by the model.
    pub fn final_maps(&self) -> Option<&Tensor<S>> {
        self.frames.last().and_then(|c| c.activations.last())
    }

    /// Post-ReLU activation of conv block `block` (0-based) on the final frame.
    pub fn final_activation(&self, block: usize) -> Tensor<S> {
        self.frames[self.frames.len() - 1].activations[block].clone()
    }
}

impl<S: Scalar> VisionOnlyModel<S> {
    pub fn new<R: Rng>(widths: &ModelWidths, mode: VisionMode, rng: &mut R) -> Self {
        VisionOnlyModel {
            visual: VisualEncoder::new(3, &widths.channels, widths.feature, rng),
            hidden: Linear::new(widths.feature, widths.mlp_hidden, rng),
            out: Linear::new(widths.mlp_hidden, widths.classes, rng),
            mode,
        }
    }

    /// Frames the model actually reads.
    fn frames<'a>(&self, images: &'a [Tensor<S>]) -> &'a [Tensor<S>] {
        match self.mode {
            VisionMode::Single => &images[images.len() - 1..],
            VisionMode::Pool => images,
        }
    }

    pub fn forward(&self, images: &[Tensor<S>]) -> Result<VisionPass<S>> {
        if images.is_empty() {
            return Err(EclError::EmptySequence("vision forward needs at least one image"));
        }
        let used = self.frames(images);
        let mut features = Vec::with_capacity(used.len());
        let mut frames = Vec::with_capacity(used.len());
        for img in used {
            let (v, cache) = self.visual.forward(img)?;
            features.push(v);
            frames.push(cache);
        }
        // Each dimension is summed in sorted order so the mean is bit-for-bit
        // independent of frame order.
        let inv = S::one() / S::lit(used.len() as f64);
        let pooled: Vec<S> = (0..self.visual.feature())
            .map(|d| {
                let mut column: Vec<S> = features.iter().map(|f| f[d]).collect();
                column.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                column.into_iter().sum::<S>() * inv
            })
            .collect();
        let hidden: Vec<S> = self
            .hidden
            .forward(&pooled)?
            .into_iter()
            .map(|v| v.max(S::zero()))
            .collect();
        let logits = self.out.forward(&hidden)?;
        Ok(VisionPass {
            logits,
            frames,
            pooled,
            hidden,
        })
    }

    /// Backward from `dL/dlogits`; `tap` as in the embodied model, applied to
    /// the final frame read.
    pub fn backward(
        &self,
        pass: &VisionPass<S>,
        dlogits: &[S],
        grads: &mut VisionOnlyModel<S>,
        tap: Option<usize>,
    ) -> Result<Option<Tensor<S>>> {
        let mut dh = self.out.backward(&pass.hidden, dlogits, &mut grads.out);
        for (d, &h) in dh.iter_mut().zip(&pass.hidden) {
            if h <= S::zero() {
                *d = S::zero();
            }
        }
        let mut dpooled = self.hidden.backward(&pass.pooled, &dh, &mut grads.hidden);
        let inv = S::one() / S::lit(pass.frames.len() as f64);
        dpooled.iter_mut().for_each(|d| *d *= inv);
        let mut tapped = None;
        let last = pass.frames.len() - 1;
        for (i, cache) in pass.frames.iter().enumerate() {
            let frame_tap = if i == last { tap } else { None };
            if let Some(g) = self.visual.backward(cache, &dpooled, &mut grads.visual, frame_tap)? {
                tapped = Some(g);
            }
        }
        Ok(tapped)
    }
}

impl<S: Scalar> Parameterized<S> for VisionOnlyModel<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = prefixed("visual", self.visual.named_params());
        out.extend(prefixed("hidden", self.hidden.named_params()));
        out.extend(prefixed("out", self.out.named_params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = self.visual.params_mut();
        out.extend(self.hidden.params_mut());
        out.extend(self.out.params_mut());
        out
    }
}
