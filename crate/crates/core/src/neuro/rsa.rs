//! Representational dissimilarity matrices and their structure.

use serde::{Deserialize, Serialize};

use crate::error::{EclError, Result};
use crate::models::ActivationTrace;
use crate::neuro::stats::{
    average_ranks, linear_fit, log_fit, pearson, permutations, weber_fit, LinearFit, WeberFit,
    PERMUTATIONS, PERMUTATION_SEED,
};
use crate::neuro::tuning::class_means;
use crate::scalar::Scalar;

/// Symmetric matrix of distances between class-mean activation patterns;
/// row `i` is numerosity `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rdm {
    n: usize,
    d: Vec<f64>,
}

impl Rdm {
    /// Symmetric matrix with `f(i, j)` evaluated once per pair `i < j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Rdm { n, d }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    /// Upper-triangle entries in row-major order with their index pairs.
    pub fn upper(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push((i, j, self.get(i, j)));
            }
        }
        out
    }
}

/// Euclidean distances between the rows of `means`.
pub fn rdm_from_means(means: &[Vec<f64>]) -> Rdm {
    Rdm::from_fn(means.len(), |i, j| {
        means[i]
            .iter()
            .zip(&means[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    })
}

pub fn compute_rdm<S: Scalar>(traces: &[ActivationTrace<S>], layer: usize) -> Result<Rdm> {
    Ok(rdm_from_means(&class_means(traces, layer)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsaResult {
    pub rho: f64,
    pub p: f64,
}

/// Spearman rho between the upper triangle and `|i - j|`. The p-value is a
/// one-sided Mantel test: numerosity labels are permuted jointly over rows
/// and columns and the fraction of permutations with rho at least the
/// observed value is reported (observation included).
pub fn rsa_spearman(rdm: &Rdm) -> Result<RsaResult> {
    let n = rdm.size();
    let upper = rdm.upper();
    let values: Vec<f64> = upper.iter().map(|t| t.2).collect();
    let model_of = |perm: &[usize]| -> Vec<f64> {
        upper
            .iter()
            .map(|&(i, j, _)| (perm[i] as f64 - perm[j] as f64).abs())
            .collect()
    };
    let identity: Vec<usize> = (0..n).collect();
    let rv = average_ranks(&values);
    let rho = pearson(&rv, &average_ranks(&model_of(&identity)))
        .ok_or(EclError::UndefinedCorrelation("RDM has zero variance"))?;
    let mut hits = 0usize;
    for perm in permutations(n, PERMUTATIONS, PERMUTATION_SEED) {
        if let Some(r) = pearson(&rv, &average_ranks(&model_of(&perm))) {
            if r >= rho - 1e-12 {
                hits += 1;
            }
        }
    }
    Ok(RsaResult {
        rho,
        p: (hits + 1) as f64 / (PERMUTATIONS + 1) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceStructure {
    /// `d(n, n + 1)` for `n = 1..9`.
    pub adjacent: Vec<f64>,
    pub adjacent_linear: LinearFit,
    pub adjacent_log: LinearFit,
    pub ratio_linear: LinearFit,
    pub ratio_weber: WeberFit,
}

/// Adjacent-distance trend and the dependence of distance on the ratio
/// `min / max` over all pairs.
pub fn distance_structure(rdm: &Rdm) -> DistanceStructure {
    let n = rdm.size();
    let adjacent: Vec<f64> = (0..n - 1).map(|i| rdm.get(i, i + 1)).collect();
    let idx: Vec<f64> = (1..n).map(|v| v as f64).collect();
    let upper = rdm.upper();
    let ratio: Vec<f64> = upper
        .iter()
        .map(|&(i, j, _)| (i + 1) as f64 / (j + 1) as f64)
        .collect();
    let dist: Vec<f64> = upper.iter().map(|t| t.2).collect();
    DistanceStructure {
        adjacent_linear: linear_fit(&idx, &adjacent),
        adjacent_log: log_fit(&idx, &adjacent),
        ratio_linear: linear_fit(&ratio, &dist),
        ratio_weber: weber_fit(&ratio, &dist),
        adjacent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rdm_of_equal_and_orthonormal_means() {
        let same = rdm_from_means(&vec![vec![0.3, -1.0]; 10]);
        assert!(same.d.iter().all(|&v| v == 0.0));
        let eye: Vec<Vec<f64>> = (0..10).map(|i| (0..10).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let r = rdm_from_means(&eye);
        for (i, j, v) in r.upper() {
            assert!(i < j);
            assert!((v - 2f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn rdm_matches_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let means: Vec<Vec<f64>> = (0..10).map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let r = rdm_from_means(&means);
        for i in 0..10 {
            assert_eq!(r.get(i, i), 0.0);
            for j in 0..10 {
                let mut s = 0.0;
                for k in 0..16 {
                    s += (means[i][k] - means[j][k]).powi(2);
                }
                assert!((r.get(i, j) - s.sqrt()).abs() < 1e-12);
                assert_eq!(r.get(i, j), r.get(j, i));
                assert!(r.get(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn rsa_extremes() {
        let line = Rdm::from_fn(10, |i, j| (j - i) as f64);
        let res = rsa_spearman(&line).unwrap();
        assert!((res.rho - 1.0).abs() < 1e-12);
        assert!(res.p < 0.001);
        let inverted = Rdm::from_fn(10, |i, j| 10.0 - (j - i) as f64);
        assert!((rsa_spearman(&inverted).unwrap().rho + 1.0).abs() < 1e-12);
        let flat = Rdm::from_fn(10, |_, _| 1.0);
        assert!(matches!(rsa_spearman(&flat), Err(EclError::UndefinedCorrelation(_))));
    }

    #[test]
    fn rsa_rho_matches_rank_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = Rdm::from_fn(10, |_, _| rng.gen::<f64>());
        let upper = r.upper();
        // oracle: ranks by counting, 1 - 6 sum d^2 / (n (n^2 - 1)) is invalid
        // with ties in |i-j|, so use the covariance of count-based ranks
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|a| {
                    v.iter().filter(|b| *b < a).count() as f64
                        + (v.iter().filter(|b| *b == a).count() as f64 + 1.0) / 2.0
                })
                .collect()
        };
        let a = rank(&upper.iter().map(|t| t.2).collect::<Vec<_>>());
        let b = rank(&upper.iter().map(|t| (t.1 - t.0) as f64).collect::<Vec<_>>());
        let m = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / m, b.iter().sum::<f64>() / m);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let oracle = cov / (va * vb).sqrt();
        assert!((rsa_spearman(&r).unwrap().rho - oracle).abs() < 1e-12);
    }

    #[test]
    fn logarithmic_adjacent_distances() {
        // positions whose successive gaps are 2 - 0.5 ln n
        let mut pos = vec![0.0];
        for n in 1..10 {
            let last = *pos.last().unwrap();
            pos.push(last + 2.0 - 0.5 * (n as f64).ln());
        }
        let means: Vec<Vec<f64>> = pos.iter().map(|&p| vec![p, 0.0, 0.0]).collect();
        let s = distance_structure(&rdm_from_means(&means));
        assert!((s.adjacent_log.r2.unwrap() - 1.0).abs() < 1e-12);
        assert!((s.adjacent_log.slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn equally_spaced_line_has_flat_adjacent_distances() {
        let s = distance_structure(&Rdm::from_fn(10, |i, j| (j - i) as f64));
        assert!(s.adjacent_linear.slope.abs() < 1e-12);
        assert!(s.adjacent.iter().all(|&d| d == 1.0));
        assert_eq!(s.adjacent_linear.r2, None);
    }

    #[test]
    fn ratio_fits_match_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r = Rdm::from_fn(10, |_, _| rng.gen_range(0.0..3.0));
        let s = distance_structure(&r);
        let upper = r.upper();
        let u: Vec<f64> = upper.iter().map(|&(i, j, _)| 1.0 - (i + 1) as f64 / (j + 1) as f64).collect();
        let d: Vec<f64> = upper.iter().map(|t| t.2).collect();
        let c = u.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / u.iter().map(|a| a * a).sum::<f64>();
        assert!((s.ratio_weber.c - c).abs() < 1e-12);
        let md = d.iter().sum::<f64>() / d.len() as f64;
        let ss_tot: f64 = d.iter().map(|v| (v - md).powi(2)).sum();
        let ss_res: f64 = u.iter().zip(&d).map(|(a, b)| (b - c * a).powi(2)).sum();
        assert!((s.ratio_weber.r2.unwrap() - (1.0 - ss_res / ss_tot)).abs() < 1e-12);
    }
}
