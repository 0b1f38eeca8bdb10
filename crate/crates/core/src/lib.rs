//! Embodied counting testbed.
//!
//! A simulated robot visits colored balls with a two-link arm while a wrist
//! camera records egocentric frames; networks learn to report the count.
//! The crate covers the simulator ([`envsim`]), a small differentiable core
//! ([`autodiff`]), the embodied and vision-only networks ([`models`]), the
//! training harness ([`harness`]), the neural analysis toolkit ([`neuro`])
//! and grid/report orchestration ([`pipeline`]).
//!
//! The network math is generic over [`Scalar`]; training runs in `f32` and
//! gradient checks in `f64`. Concrete aliases are exported below.

pub mod autodiff;
pub mod envsim;
pub mod error;
pub mod harness;
pub mod models;
pub mod neuro;
pub mod pipeline;
pub mod scalar;
pub mod tensor;

pub use error::{EclError, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type EmbodiedModel32 = models::EmbodiedModel<f32>;
pub type EmbodiedModel64 = models::EmbodiedModel<f64>;
pub type VisionModel32 = models::VisionOnlyModel<f32>;
pub type VisionModel64 = models::VisionOnlyModel<f64>;
pub type LstmCell32 = autodiff::LstmCellParams<f32>;
pub type LstmCell64 = autodiff::LstmCellParams<f64>;
