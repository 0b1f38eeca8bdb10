//! Conversion of dataset episodes into network inputs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::envsim::{ArmPose, Episode};
use crate::error::{EclError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// What the motor head is trained to predict at step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotorTarget {
    /// Pose at `t + 1`; the final step holds the final pose.
    #[default]
    NextPose,
    /// Pose at `t` itself.
    CurrentPose,
}

/// One episode ready for a forward pass. Images are `3 x H x W`; poses are
/// joint angles divided by pi. Images sit behind an `Arc` so motor streams
/// can be swapped between samples without copying pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInput<S> {
    pub episode_id: String,
    pub label: usize,
    pub images: Arc<Vec<Tensor<S>>>,
    pub poses: Vec<[S; 2]>,
    pub targets: Vec<[S; 2]>,
}

impl<S: Scalar> SequenceInput<S> {
    pub fn from_episode(ep: &Episode, target: MotorTarget) -> Result<Self> {
        if ep.frames.is_empty() {
            return Err(EclError::EmptySequence("episode has no frames"));
        }
        let images = ep.frames.iter().map(|f| hwc_to_chw(&f.image)).collect::<Result<Vec<_>>>()?;
        let poses: Vec<[S; 2]> = ep.frames.iter().map(|f| normalized_pose(f.pose)).collect();
        let targets = motor_targets(&poses, target);
        Ok(SequenceInput {
            episode_id: ep.episode_id.clone(),
            label: ep.count,
            images: Arc::new(images),
            poses,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

pub fn normalized_pose<S: Scalar>(pose: ArmPose) -> [S; 2] {
    let [a, b] = pose.normalized();
    [S::lit(a), S::lit(b)]
}

pub fn motor_targets<S: Scalar>(poses: &[[S; 2]], target: MotorTarget) -> Vec<[S; 2]> {
    match target {
        MotorTarget::CurrentPose => poses.to_vec(),
        MotorTarget::NextPose => (0..poses.len())
            .map(|t| poses[(t + 1).min(poses.len() - 1)])
            .collect(),
    }
}

/// `H x W x 3` to `3 x H x W`.
pub fn hwc_to_chw<S: Scalar>(image: &Tensor<f32>) -> Result<Tensor<S>> {
    if image.shape().len() != 3 || image.dim(2) != 3 {
        return Err(EclError::Dimension(format!(
            "expected H x W x 3 image, got {:?}",
            image.shape()
        )));
    }
    let (h, w) = (image.dim(0), image.dim(1));
    let src = image.data();
    Ok(Tensor::from_fn(&[3, h, w], |i| {
        let (c, p) = (i / (h * w), i % (h * w));
        S::lit(src[p * 3 + c] as f64)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn next_pose_targets_hold_at_the_end() {
        let poses = vec![[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]];
        assert_eq!(
            motor_targets(&poses, MotorTarget::NextPose),
            vec![[0.3, 0.4], [0.5, 0.6], [0.5, 0.6]]
        );
        assert_eq!(motor_targets(&poses, MotorTarget::CurrentPose), poses);
    }

    #[test]
    fn channel_layout_is_transposed() {
        let img = Tensor::from_fn(&[2, 2, 3], |i| i as f32);
        let chw: Tensor<f64> = hwc_to_chw(&img).unwrap();
        assert_eq!(chw.shape(), &[3, 2, 2]);
        // pixel (1,0) channel 2 sits at hwc index (1*2+0)*3+2 = 8
        assert_eq!(chw.data()[2 * 4 + 2], 8.0);
    }
}
