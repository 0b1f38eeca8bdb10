//! Visual and motor encoders shared by the embodied and vision-only models.

use rand::Rng;

use crate::autodiff::params::{kaiming_uniform, prefixed};
use crate::autodiff::{
    conv2d, conv2d_backward, global_avg_pool, global_avg_pool_backward, max_pool2,
    max_pool2_backward, relu, relu_backward, ConvGeometry, Linear, Parameterized,
};
use crate::error::{EclError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

/// Conv blocks (3x3 conv, pad 1, ReLU, 2x2 max-pool) followed by global
/// average pooling and a linear projection.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualEncoder<S> {
    pub blocks: Vec<ConvLayer<S>>,
    pub proj: Linear<S>,
}

/// Intermediate values of one image's forward pass.
#[derive(Debug, Clone)]
pub struct VisualCache<S> {
    /// Input of every block (the image, then each pooled map).
    inputs: Vec<Tensor<S>>,
    /// Post-ReLU conv output of every block, before pooling.
    pub activations: Vec<Tensor<S>>,
    argmax: Vec<Vec<usize>>,
    pooled_shape: Vec<usize>,
    gap: Vec<S>,
}

impl<S: Scalar> VisualEncoder<S> {
    pub fn new<R: Rng>(in_channels: usize, channels: &[usize], feature: usize, rng: &mut R) -> Self {
        let mut blocks = Vec::with_capacity(channels.len());
        let mut c_in = in_channels;
        for &c in channels {
            let fan_in = c_in * KERNEL * KERNEL;
            blocks.push(ConvLayer {
                weight: kaiming_uniform(&[c, c_in, KERNEL, KERNEL], fan_in, rng),
                bias: Tensor::zeros(&[c]),
            });
            c_in = c;
        }
        VisualEncoder {
            blocks,
            proj: Linear::new(c_in, feature, rng),
        }
    }

    pub fn feature(&self) -> usize {
        self.proj.outputs()
    }

    pub fn forward(&self, image: &Tensor<S>) -> Result<(Vec<S>, VisualCache<S>)> {
        let geom = ConvGeometry::default();
        let mut inputs = Vec::with_capacity(self.blocks.len());
        let mut activations = Vec::with_capacity(self.blocks.len());
        let mut argmax = Vec::with_capacity(self.blocks.len());
        let mut x = image.clone();
        for block in &self.blocks {
            let a = relu(&conv2d(&x, &block.weight, &block.bias, geom)?);
            let (pooled, arg) = max_pool2(&a)?;
            inputs.push(std::mem::replace(&mut x, pooled));
            activations.push(a);
            argmax.push(arg);
        }
        let gap = global_avg_pool(&x)?;
        let feature = self.proj.forward(&gap)?;
        Ok((
            feature,
            VisualCache {
                inputs,
                activations,
                argmax,
                pooled_shape: x.shape().to_vec(),
                gap,
            },
        ))
    }

    /// Backward from `dL/dfeature`. When `tap` names a block (0-based), the
    /// gradient with respect to that block's post-ReLU activation is returned.
    pub fn backward(
        &self,
        cache: &VisualCache<S>,
        dfeature: &[S],
        grads: &mut VisualEncoder<S>,
        tap: Option<usize>,
    ) -> Result<Option<Tensor<S>>> {
        if let Some(t) = tap {
            if t >= self.blocks.len() {
                return Err(EclError::Config(format!(
                    "conv layer {} does not exist (encoder has {})",
                    t + 1,
                    self.blocks.len()
                )));
            }
        }
        let geom = ConvGeometry::default();
        let dgap = self.proj.backward(&cache.gap, dfeature, &mut grads.proj);
        let mut dpooled = global_avg_pool_backward(&cache.pooled_shape, &dgap);
        let mut tapped = None;
        for b in (0..self.blocks.len()).rev() {
            let a = &cache.activations[b];
            let da = max_pool2_backward(a.shape(), &cache.argmax[b], &dpooled);
            let dz = relu_backward(a, &da);
            if tap == Some(b) {
                tapped = Some(da);
            }
            let g = conv2d_backward(&cache.inputs[b], &self.blocks[b].weight, geom, &dz, b > 0)?;
            grads.blocks[b].weight.add_assign(&g.weight);
            grads.blocks[b].bias.add_assign(&g.bias);
            if let Some(dx) = g.input {
                dpooled = dx;
            }
        }
        Ok(tapped)
    }
}

impl<S: Scalar> Parameterized<S> for VisualEncoder<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("conv{}.weight", i + 1), &b.weight));
            out.push((format!("conv{}.bias", i + 1), &b.bias));
        }
        out.extend(prefixed("proj", self.proj.named_params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.weight);
            out.push(&mut b.bias);
        }
        out.extend(self.proj.params_mut());
        out
    }
}

/// Two-layer MLP over the normalized joint angles (ReLU between layers).
#[derive(Debug, Clone, PartialEq)]
pub struct MotorEncoder<S> {
    pub l1: Linear<S>,
    pub l2: Linear<S>,
}

#[derive(Debug, Clone)]
pub struct MotorCache<S> {
    x: Vec<S>,
    hidden: Vec<S>,
}

impl<S: Scalar> MotorEncoder<S> {
    pub fn new<R: Rng>(hidden: usize, feature: usize, rng: &mut R) -> Self {
        MotorEncoder {
            l1: Linear::new(2, hidden, rng),
            l2: Linear::new(hidden, feature, rng),
        }
    }

    pub fn feature(&self) -> usize {
        self.l2.outputs()
    }

    pub fn forward(&self, pose: &[S; 2]) -> Result<(Vec<S>, MotorCache<S>)> {
        let hidden: Vec<S> = self
            .l1
            .forward(pose)?
            .into_iter()
            .map(|v| v.max(S::zero()))
            .collect();
        let out = self.l2.forward(&hidden)?;
        Ok((
            out,
            MotorCache {
                x: pose.to_vec(),
                hidden,
            },
        ))
    }

    pub fn backward(&self, cache: &MotorCache<S>, dout: &[S], grads: &mut MotorEncoder<S>) {
        let mut dh = self.l2.backward(&cache.hidden, dout, &mut grads.l2);
        for (d, &h) in dh.iter_mut().zip(&cache.hidden) {
            if h <= S::zero() {
                *d = S::zero();
            }
        }
        self.l1.backward(&cache.x, &dh, &mut grads.l1);
    }
}

impl<S: Scalar> Parameterized<S> for MotorEncoder<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = prefixed("l1", self.l1.named_params());
        out.extend(prefixed("l2", self.l2.named_params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = self.l1.params_mut();
        out.extend(self.l2.params_mut());
        out
    }
}
