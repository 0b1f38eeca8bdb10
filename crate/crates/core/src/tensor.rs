use crate::error::{EclError, Result};
use crate::scalar::Scalar;

/// Dense row-major array with shape metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    data: Vec<S>,
    shape: Vec<usize>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            data: vec![S::zero(); shape.iter().product()],
            shape: shape.to_vec(),
        }
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        Tensor {
            data: vec![value; shape.iter().product()],
            shape: shape.to_vec(),
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(EclError::Dimension(format!(
                "shape {shape:?} needs {want} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            data,
            shape: shape.to_vec(),
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> S) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            data: (0..n).map(&mut f).collect(),
            shape: shape.to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let want: usize = shape.iter().product();
        if want != self.data.len() {
            return Err(EclError::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            data: self.data.iter().map(|&v| f(v)).collect(),
            shape: self.shape.clone(),
        }
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            data: self.data.iter().map(|&v| T::lit(v.as_f64())).collect(),
            shape: self.shape.clone(),
        }
    }

    pub fn fill(&mut self, value: S) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn scale(&mut self, factor: S) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Elementwise `self += other`; shapes must agree.
    pub fn add_assign(&mut self, other: &Tensor<S>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    pub(crate) fn check_shape(&self, want: &[usize], what: &str) -> Result<()> {
        if self.shape != want {
            return Err(EclError::Dimension(format!(
                "{what}: expected shape {want:?}, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}

/// Debug-build guard against NaN/Inf leaking out of a pass.
#[inline]
pub(crate) fn debug_check_finite<S: Scalar>(values: &[S], what: &str) {
    if cfg!(debug_assertions) {
        assert!(
            values.iter().all(|v| v.is_finite()),
            "non-finite value produced by {what}"
        );
    }
}
