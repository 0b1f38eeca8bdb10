//! Minimal differentiable core: tensors ops with hand-written backward
//! passes, losses, Adam, checkpoints and gradient checking.

pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod params;

use rand::Rng;

use crate::scalar::Scalar;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use conv::{
    conv2d, conv2d_backward, global_avg_pool, global_avg_pool_backward, max_pool2,
    max_pool2_backward, relu, relu_backward, ConvGeometry, ConvGrads,
};
pub use gradcheck::{central_difference, gradient_check, max_relative_error};
pub use loss::{combined_loss, mse_motor_loss, softmax, softmax_cross_entropy};
pub use lstm::{lstm_cell_backward, lstm_cell_step, GateRecord, LstmCellParams, LstmStepGrads};
pub use params::{load_checkpoint, save_checkpoint, Linear, ParamList, Parameterized};

/// Inverted-dropout mask: each entry is 0 with probability `p`, otherwise
/// `1 / (1 - p)`.
pub fn dropout_mask<S: Scalar, R: Rng>(len: usize, p: f64, rng: &mut R) -> Vec<S> {
    if p <= 0.0 {
        return vec![S::one(); len];
    }
    let keep = S::lit(1.0 / (1.0 - p));
    (0..len)
        .map(|_| if rng.gen::<f64>() < p { S::zero() } else { keep })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dropout_mask_is_inverted_and_seeded() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let m1: Vec<f64> = dropout_mask(1000, 0.3, &mut a);
        let m2: Vec<f64> = dropout_mask(1000, 0.3, &mut b);
        assert_eq!(m1, m2);
        let keep = 1.0 / 0.7;
        assert!(m1.iter().all(|&v| v == 0.0 || (v - keep).abs() < 1e-12));
        let dropped = m1.iter().filter(|&&v| v == 0.0).count();
        assert!((200..400).contains(&dropped));
        let none: Vec<f64> = dropout_mask(5, 0.0, &mut a);
        assert_eq!(none, vec![1.0; 5]);
    }
}
