//! Epoch ordering and the joint-shuffling manipulation.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::harness::config::{Curriculum, ShuffleMode};
use crate::models::SequenceInput;
use crate::scalar::Scalar;

/// Sample order for one epoch. Sorting is stable, so equal labels keep
/// their dataset order.
pub fn order_curriculum<R: Rng>(labels: &[usize], strategy: Curriculum, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    match strategy {
        Curriculum::EasyToHard => order.sort_by_key(|&i| labels[i]),
        Curriculum::HardToEasy => order.sort_by_key(|&i| std::cmp::Reverse(labels[i])),
        Curriculum::Random => order.shuffle(rng),
    }
    order
}

/// Truncates or hold-pads a stream to `len` steps.
fn fit_stream<S: Copy>(stream: &[[S; 2]], len: usize) -> Vec<[S; 2]> {
    let last = *stream.last().expect("motor streams are nonempty");
    (0..len).map(|t| stream.get(t).copied().unwrap_or(last)).collect()
}

/// Gives sample `i` the motor stream of sample `perm[i]` for a uniform
/// random permutation `perm`, which is returned. Images and labels are not
/// touched.
pub fn shuffle_joints<S: Scalar, R: Rng>(
    batch: &mut [SequenceInput<S>],
    mode: ShuffleMode,
    rng: &mut R,
) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..batch.len()).collect();
    perm.shuffle(rng);
    let streams: Vec<(Vec<[S; 2]>, Vec<[S; 2]>)> = batch
        .iter()
        .map(|s| (s.poses.clone(), s.targets.clone()))
        .collect();
    for (sample, &donor) in batch.iter_mut().zip(&perm) {
        let len = sample.len();
        let (poses, targets) = &streams[donor];
        if mode == ShuffleMode::Both {
            sample.poses = fit_stream(poses, len);
        }
        sample.targets = fit_stream(targets, len);
    }
    perm
}
