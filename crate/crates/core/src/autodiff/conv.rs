//! Convolution, ReLU, max-pooling and global average pooling with their
//! backward passes. Feature maps are `C x H x W`, filters `C_out x C_in x K x K`.

use crate::error::{EclError, Result};
use crate::scalar::Scalar;
use crate::tensor::{debug_check_finite, Tensor};

/// Stride/padding pair for a square convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl Default for ConvGeometry {
    fn default() -> Self {
        ConvGeometry {
            stride: 1,
            padding: 1,
        }
    }
}

/// Gradients of a convolution with respect to each of its inputs.
#[derive(Debug, Clone)]
pub struct ConvGrads<S> {
    pub input: Option<Tensor<S>>,
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

struct Dims {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    h_out: usize,
    w_out: usize,
}

fn conv_dims<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    geom: ConvGeometry,
) -> Result<Dims> {
    if input.shape().len() != 3 {
        return Err(EclError::Dimension(format!(
            "conv2d input must be C x H x W, got {:?}",
            input.shape()
        )));
    }
    if weight.shape().len() != 4 || weight.dim(2) != weight.dim(3) {
        return Err(EclError::Dimension(format!(
            "conv2d weight must be C_out x C_in x K x K, got {:?}",
            weight.shape()
        )));
    }
    if geom.stride == 0 {
        return Err(EclError::Dimension("conv2d stride must be >= 1".into()));
    }
    let (c_in, h, w) = (input.dim(0), input.dim(1), input.dim(2));
    let (c_out, k) = (weight.dim(0), weight.dim(2));
    if weight.dim(1) != c_in {
        return Err(EclError::Dimension(format!(
            "conv2d weight expects {} input channels, input has {c_in}",
            weight.dim(1)
        )));
    }
    let (hp, wp) = (h + 2 * geom.padding, w + 2 * geom.padding);
    if hp < k || wp < k {
        return Err(EclError::Dimension(format!(
            "conv2d kernel {k} larger than padded input {hp}x{wp}"
        )));
    }
    Ok(Dims {
        c_in,
        h,
        w,
        c_out,
        k,
        h_out: (hp - k) / geom.stride + 1,
        w_out: (wp - k) / geom.stride + 1,
    })
}

/// Unfold patches into a `(C_in*K*K) x (H_out*W_out)` matrix.
fn im2col<S: Scalar>(input: &[S], d: &Dims, geom: ConvGeometry) -> Vec<S> {
    let n = d.h_out * d.w_out;
    let mut cols = vec![S::zero(); d.c_in * d.k * d.k * n];
    let pad = geom.padding as isize;
    for c in 0..d.c_in {
        let plane = &input[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = (c * d.k + ky) * d.k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..d.h_out {
                    let iy = (oy * geom.stride + ky) as isize - pad;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for ox in 0..d.w_out {
                        let ix = (ox * geom.stride + kx) as isize - pad;
                        if ix >= 0 && ix < d.w as isize {
                            dst[oy * d.w_out + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<S: Scalar>(cols: &[S], d: &Dims, geom: ConvGeometry) -> Vec<S> {
    let n = d.h_out * d.w_out;
    let mut out = vec![S::zero(); d.c_in * d.h * d.w];
    let pad = geom.padding as isize;
    for c in 0..d.c_in {
        let plane = &mut out[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = (c * d.k + ky) * d.k + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..d.h_out {
                    let iy = (oy * geom.stride + ky) as isize - pad;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    for ox in 0..d.w_out {
                        let ix = (ox * geom.stride + kx) as isize - pad;
                        if ix >= 0 && ix < d.w as isize {
                            plane[iy as usize * d.w + ix as usize] += src[oy * d.w_out + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Cross-correlation `y[o,i,j] = sum W[o,c,m,n] x[c, i*s+m-p, j*s+n-p] + b[o]`.
/// The nonlinearity is applied separately by the caller.
pub fn conv2d<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
    geom: ConvGeometry,
) -> Result<Tensor<S>> {
    let d = conv_dims(input, weight, geom)?;
    bias.check_shape(&[d.c_out], "conv2d bias")?;
    let n = d.h_out * d.w_out;
    let kk = d.c_in * d.k * d.k;
    let cols = im2col(input.data(), &d, geom);
    let mut out = Vec::with_capacity(d.c_out * n);
    for &b in bias.data() {
        out.extend(std::iter::repeat(b).take(n));
    }
    S::gemm(
        d.c_out,
        kk,
        n,
        S::one(),
        weight.data(),
        kk as isize,
        1,
        &cols,
        n as isize,
        1,
        S::one(),
        &mut out,
        n as isize,
        1,
    );
    debug_check_finite(&out, "conv2d");
    Tensor::from_vec(&[d.c_out, d.h_out, d.w_out], out)
}

/// Backward pass of [`conv2d`]. The input gradient is skipped when
/// `need_input` is false (first layer of an encoder).
pub fn conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    geom: ConvGeometry,
    grad_out: &Tensor<S>,
    need_input: bool,
) -> Result<ConvGrads<S>> {
    let d = conv_dims(input, weight, geom)?;
    grad_out.check_shape(&[d.c_out, d.h_out, d.w_out], "conv2d grad_out")?;
    let n = d.h_out * d.w_out;
    let kk = d.c_in * d.k * d.k;
    let cols = im2col(input.data(), &d, geom);
    let go = grad_out.data();

    let mut grad_w = vec![S::zero(); d.c_out * kk];
    // dW = dY cols^T
    S::gemm(
        d.c_out,
        n,
        kk,
        S::one(),
        go,
        n as isize,
        1,
        &cols,
        1,
        n as isize,
        S::zero(),
        &mut grad_w,
        kk as isize,
        1,
    );
    let grad_b: Vec<S> = go.chunks_exact(n).map(|row| row.iter().copied().sum()).collect();

    let grad_in = if need_input {
        let mut grad_cols = vec![S::zero(); kk * n];
        // dcols = W^T dY
        S::gemm(
            kk,
            d.c_out,
            n,
            S::one(),
            weight.data(),
            1,
            kk as isize,
            go,
            n as isize,
            1,
            S::zero(),
            &mut grad_cols,
            n as isize,
            1,
        );
        Some(Tensor::from_vec(
            &[d.c_in, d.h, d.w],
            col2im(&grad_cols, &d, geom),
        )?)
    } else {
        None
    };
    Ok(ConvGrads {
        input: grad_in,
        weight: Tensor::from_vec(weight.shape(), grad_w)?,
        bias: Tensor::from_vec(&[d.c_out], grad_b)?,
    })
}

pub fn relu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| if v > S::zero() { v } else { S::zero() })
}

/// Gradient of ReLU given its output (or input; the sign pattern is the same).
pub fn relu_backward<S: Scalar>(activated: &Tensor<S>, grad: &Tensor<S>) -> Tensor<S> {
    let mut out = grad.clone();
    for (g, &a) in out.data_mut().iter_mut().zip(activated.data()) {
        if a <= S::zero() {
            *g = S::zero();
        }
    }
    out
}

/// 2x2 max pooling with stride 2 (odd trailing rows/cols dropped).
/// Returns the pooled map and the flat argmax index of every output cell.
pub fn max_pool2<S: Scalar>(x: &Tensor<S>) -> Result<(Tensor<S>, Vec<usize>)> {
    if x.shape().len() != 3 {
        return Err(EclError::Dimension(format!(
            "max_pool2 expects C x H x W, got {:?}",
            x.shape()
        )));
    }
    let (c, h, w) = (x.dim(0), x.dim(1), x.dim(2));
    let (ho, wo) = (h / 2, w / 2);
    if ho == 0 || wo == 0 {
        return Err(EclError::Dimension(format!(
            "max_pool2 input {h}x{w} too small"
        )));
    }
    let src = x.data();
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + (2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.push(src[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::from_vec(&[c, ho, wo], out)?, arg))
}

pub fn max_pool2_backward<S: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<S>,
) -> Tensor<S> {
    let mut g = Tensor::zeros(input_shape);
    let gd = g.data_mut();
    for (&idx, &v) in argmax.iter().zip(grad_out.data()) {
        gd[idx] += v;
    }
    g
}

/// Spatial mean of every channel: `C x H x W -> C`.
pub fn global_avg_pool<S: Scalar>(x: &Tensor<S>) -> Result<Vec<S>> {
    if x.shape().len() != 3 || x.dim(1) * x.dim(2) == 0 {
        return Err(EclError::Dimension(format!(
            "global_avg_pool expects nonempty C x H x W, got {:?}",
            x.shape()
        )));
    }
    let area = x.dim(1) * x.dim(2);
    let inv = S::one() / S::lit(area as f64);
    Ok(x
        .data()
        .chunks_exact(area)
        .map(|p| p.iter().copied().sum::<S>() * inv)
        .collect())
}

pub fn global_avg_pool_backward<S: Scalar>(input_shape: &[usize], grad: &[S]) -> Tensor<S> {
    let area = input_shape[1] * input_shape[2];
    let inv = S::one() / S::lit(area as f64);
    let mut out = Tensor::zeros(input_shape);
    for (plane, &g) in out.data_mut().chunks_exact_mut(area).zip(grad) {
        plane.iter_mut().for_each(|v| *v = g * inv);
    }
    out
}
