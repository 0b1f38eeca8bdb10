//! Central finite-difference gradient checks (run in `f64`).

use crate::autodiff::params::Parameterized;
use crate::tensor::Tensor;

/// Gradients smaller than this are compared in absolute rather than
/// relative terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Numerical gradient of `f` at `x` by central differences.
pub fn central_difference(x: &Tensor<f64>, eps: f64, f: impl Fn(&Tensor<f64>) -> f64) -> Tensor<f64> {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for k in 0..x.len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + eps;
        let up = f(&probe);
        probe.data_mut()[k] = orig - eps;
        let down = f(&probe);
        probe.data_mut()[k] = orig;
        grad.data_mut()[k] = (up - down) / (2.0 * eps);
    }
    grad
}

/// `max |a - n| / max(|a|, |n|, floor)` over all elements.
pub fn max_relative_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_ERROR_FLOOR))
        .fold(0.0, f64::max)
}

/// Compares the analytic gradient returned by `f` against central differences
/// over every parameter element of `model`. `f` returns `(loss, gradients)`
/// with gradients laid out like the model. Returns the max relative error.
pub fn gradient_check<P, F>(model: &P, eps: f64, f: F) -> f64
where
    P: Parameterized<f64> + Clone,
    F: Fn(&P) -> (f64, P),
{
    let (_, analytic) = f(model);
    let mut probe = model.clone();
    let n_tensors = model.params().len();
    let mut worst = 0.0f64;
    for ti in 0..n_tensors {
        let len = model.params()[ti].len();
        for k in 0..len {
            let orig = probe.params_mut()[ti].data()[k];
            probe.params_mut()[ti].data_mut()[k] = orig + eps;
            let up = f(&probe).0;
            probe.params_mut()[ti].data_mut()[k] = orig - eps;
            let down = f(&probe).0;
            probe.params_mut()[ti].data_mut()[k] = orig;
            let num = (up - down) / (2.0 * eps);
            let ana = analytic.params()[ti].data()[k];
            let err = (ana - num).abs() / ana.abs().max(num.abs()).max(RELATIVE_ERROR_FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}
