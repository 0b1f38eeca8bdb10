//! Class activation maps from conv-block gradients.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{EclError, Result};
use crate::models::{CountingModel, SequenceInput};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `ReLU(sum_k alpha_k A_k)` with `alpha_k` the spatial mean of `dA_k`.
/// Both tensors are `C x h x w`; the result is `h x w`.
pub fn grad_cam_map<S: Scalar>(activation: &Tensor<S>, grad: &Tensor<S>) -> Result<Tensor<f64>> {
    if activation.shape() != grad.shape() || activation.shape().len() != 3 {
        return Err(EclError::Dimension(format!(
            "grad-cam needs matching C x h x w tensors, got {:?} and {:?}",
            activation.shape(),
            grad.shape()
        )));
    }
    let (c, h, w) = (activation.dim(0), activation.dim(1), activation.dim(2));
    let plane = h * w;
    let mut map = vec![0.0; plane];
    for k in 0..c {
        let a = &activation.data()[k * plane..(k + 1) * plane];
        let g = &grad.data()[k * plane..(k + 1) * plane];
        let alpha = g.iter().map(|v| v.as_f64()).sum::<f64>() / plane as f64;
        if alpha == 0.0 {
            continue;
        }
        for (m, &v) in map.iter_mut().zip(a) {
            *m += alpha * v.as_f64();
        }
    }
    map.iter_mut().for_each(|m| *m = m.max(0.0));
    Tensor::from_vec(&[h, w], map)
}

/// Grad-CAM of `class` (1-based) at conv block `layer` (1-based) on the final
/// frame of `input`, at the block's own resolution.
pub fn grad_cam<S: Scalar>(model: &CountingModel<S>, input: &SequenceInput<S>, class: usize, layer: usize) -> Result<Tensor<f64>> {
    let (a, da) = model.class_activation_gradient(input, class, layer)?;
    grad_cam_map(&a, &da)
}

/// Bilinear resampling of an `h x w` map to `out_h x out_w` with aligned
/// pixel centers.
pub fn upsample_bilinear(map: &Tensor<f64>, out_h: usize, out_w: usize) -> Tensor<f64> {
    let (h, w) = (map.dim(0), map.dim(1));
    let src = map.data();
    let coord = |o: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        let x = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = x.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, x - lo as f64)
    };
    Tensor::from_fn(&[out_h, out_w], |i| {
        let (y0, y1, fy) = coord(i / out_w, out_h, h);
        let (x0, x1, fx) = coord(i % out_w, out_w, w);
        let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
        let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Binary PGM (P5), scaled so the maximum maps to 255. An all-zero map is
/// written as black.
pub fn write_pgm(path: &Path, map: &Tensor<f64>) -> Result<()> {
    let (h, w) = (map.dim(0), map.dim(1));
    let max = map.data().iter().copied().fold(0.0, f64::max);
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(map.data().iter().map(|&v| {
        if max > 0.0 {
            (v.max(0.0) / max * 255.0).round() as u8
        } else {
            0
        }
    }));
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| EclError::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| EclError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| EclError::io(path, e))
}
