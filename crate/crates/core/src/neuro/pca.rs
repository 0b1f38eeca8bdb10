//! Principal component analysis by eigendecomposition of the covariance.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{EclError, Result};

/// Eigenvalues below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `K` unit-norm components, each of data dimension.
    pub components: Vec<Vec<f64>>,
    /// Variance fraction of every returned component, non-increasing.
    pub explained_ratio: Vec<f64>,
    /// `rows x K` coordinates of the centered data.
    pub projections: Vec<Vec<f64>>,
}

impl Pca {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((a, b), m)| a * (b - m)).sum())
            .collect()
    }
}

/// Top-`k` principal components of `data` (rows are observations). The sign
/// of each component is fixed so its first nonzero coefficient is positive.
/// When the data has rank below `k`, only the available components are
/// returned.
pub fn pca(data: &[Vec<f64>], k: usize) -> Result<Pca> {
    let rows = data.len();
    if k == 0 || rows < k {
        return Err(EclError::Dimension(format!("pca needs rows >= K >= 1, got {rows} rows, K = {k}")));
    }
    let dims = data[0].len();
    if data.iter().any(|r| r.len() != dims) {
        return Err(EclError::Dimension("pca rows differ in length".into()));
    }
    let mean: Vec<f64> = (0..dims)
        .map(|d| data.iter().map(|r| r[d]).sum::<f64>() / rows as f64)
        .collect();
    let centered = DMatrix::from_fn(rows, dims, |i, j| data[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / rows as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dims).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .take_while(|&&i| eig.eigenvalues[i] > RANK_TOL * top && top > 0.0)
        .count();
    let kept = k.min(rank);
    if kept < k {
        warn!("pca: data rank {rank} is below K = {k}; returning {kept} components");
    }
    let mut components = Vec::with_capacity(kept);
    let mut explained_ratio = Vec::with_capacity(kept);
    for &i in order.iter().take(kept) {
        let mut c: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        if let Some(first) = c.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                c.iter_mut().for_each(|v| *v = -*v);
            }
        }
        components.push(c);
        explained_ratio.push(eig.eigenvalues[i].max(0.0) / total);
    }
    let projections = (0..rows)
        .map(|i| {
            components
                .iter()
                .map(|c| c.iter().zip(centered.row(i).iter()).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(Pca {
        mean,
        components,
        explained_ratio,
        projections,
    })
}
