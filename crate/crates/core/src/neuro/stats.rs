//! Rank correlation, permutation tests and small least-squares fits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Permutations used for every p-value.
pub const PERMUTATIONS: usize = 10_000;
/// Seed of the permutation streams.
pub const PERMUTATION_SEED: u64 = 0x5eed;

/// Ranks starting at 1; tied values share the average of their ranks.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson: length mismatch");
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation: Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Permutations of `0..n` drawn from the fixed seed; shared by tests that
/// permute the same number of labels.
pub fn permutations(n: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base: Vec<usize> = (0..n).collect();
    (0..count)
        .map(|_| {
            base.shuffle(&mut rng);
            base.clone()
        })
        .collect()
}

/// Two-sided permutation p-value of a correlation: the fraction of
/// permuted `y` orderings whose |statistic| reaches the observed one,
/// counting the observation itself.
pub fn correlation_p_value(
    x: &[f64],
    y: &[f64],
    observed: f64,
    perms: &[Vec<usize>],
    stat: impl Fn(&[f64], &[f64]) -> Option<f64>,
) -> f64 {
    let tol = 1e-12;
    let mut permuted = vec![0.0; y.len()];
    let mut hits = 0usize;
    for p in perms {
        for (dst, &src) in permuted.iter_mut().zip(p) {
            *dst = y[src];
        }
        if let Some(s) = stat(x, &permuted) {
            if s.abs() >= observed.abs() - tol {
                hits += 1;
            }
        }
    }
    (hits + 1) as f64 / (perms.len() + 1) as f64
}

/// Spearman rho with its two-sided permutation p-value.
pub fn spearman_test(x: &[f64], y: &[f64], perms: &[Vec<usize>]) -> Option<(f64, f64)> {
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson(&rx, &ry)?;
    Some((rho, correlation_p_value(&rx, &ry, rho, perms, pearson)))
}

/// `1 - SS_res / SS_tot` with centered `SS_tot`; `None` for a constant response.
pub fn r_squared(y: &[f64], fitted: &[f64]) -> Option<f64> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = y.iter().zip(fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: Option<f64>,
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len(), "linear_fit: length mismatch");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let fitted: Vec<f64> = x.iter().map(|a| slope * a + intercept).collect();
    LinearFit {
        slope,
        intercept,
        r2: r_squared(y, &fitted),
    }
}

/// `y = a ln(n) + b`.
pub fn log_fit(n: &[f64], y: &[f64]) -> LinearFit {
    let ln: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    linear_fit(&ln, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeberFit {
    pub c: f64,
    pub r2: Option<f64>,
}

/// `d = c (1 - r)` through the origin in `1 - r`.
pub fn weber_fit(ratio: &[f64], d: &[f64]) -> WeberFit {
    let u: Vec<f64> = ratio.iter().map(|r| 1.0 - r).collect();
    let suu: f64 = u.iter().map(|v| v * v).sum();
    let sud: f64 = u.iter().zip(d).map(|(a, b)| a * b).sum();
    let c = if suu > 0.0 { sud / suu } else { 0.0 };
    let fitted: Vec<f64> = u.iter().map(|v| c * v).collect();
    WeberFit {
        c,
        r2: r_squared(d, &fitted),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Textbook formula for data without ties.
    fn spearman_no_ties(x: &[f64], y: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|a| 1.0 + v.iter().filter(|b| *b < a).count() as f64)
                .collect()
        };
        let (rx, ry) = (rank(x), rank(y));
        let n = x.len() as f64;
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    /// Ranks by counting (handles ties), then the covariance formula.
    fn spearman_brute(x: &[f64], y: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|a| {
                    let less = v.iter().filter(|b| *b < a).count() as f64;
                    let equal = v.iter().filter(|b| *b == a).count() as f64;
                    less + (equal + 1.0) / 2.0
                })
                .collect()
        };
        let (rx, ry) = (rank(x), rank(y));
        let n = rx.len() as f64;
        let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn spearman_matches_brute_force_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..1000 {
            let n = rng.gen_range(3..40);
            let tied = trial % 2 == 0;
            let draw = |rng: &mut ChaCha8Rng| -> f64 {
                if tied {
                    rng.gen_range(0..5) as f64
                } else {
                    rng.gen::<f64>()
                }
            };
            let x: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let (Some(rho), brute) = (spearman(&x, &y), spearman_brute(&x, &y)) else {
                continue;
            };
            assert!((rho - brute).abs() < 1e-12, "trial {trial}: {rho} vs {brute}");
            if !tied {
                assert!((rho - spearman_no_ties(&x, &y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ranks_average_over_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn correlation_edge_cases() {
        let up: Vec<f64> = (1..=10).map(f64::from).collect();
        let down: Vec<f64> = up.iter().rev().copied().collect();
        assert_eq!(spearman(&up, &up), Some(1.0));
        assert_eq!(spearman(&up, &down), Some(-1.0));
        assert_eq!(pearson(&up, &[3.0; 10]), None);
    }

    #[test]
    fn permutation_test_separates_signal_from_noise() {
        let perms = permutations(10, 2000, 7);
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let (rho, p) = spearman_test(&x, &x, &perms).unwrap();
        assert_eq!(rho, 1.0);
        assert!(p < 0.01);
        let noise = [3.0, 9.0, 1.0, 7.0, 5.0, 2.0, 10.0, 4.0, 8.0, 6.0];
        let (_, p) = spearman_test(&x, &noise, &perms).unwrap();
        assert!(p > 0.05);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..30).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.5 * v - 0.3 + rng.gen_range(-0.5..0.5)).collect();
        let fit = linear_fit(&x, &y);
        // [n, sum x; sum x, sum x^2] [b; a] = [sum y; sum xy]
        let n = x.len() as f64;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let det = n * sxx - sx * sx;
        let a = (n * sxy - sx * sy) / det;
        let b = (sxx * sy - sx * sxy) / det;
        assert!((fit.slope - a).abs() < 1e-12 && (fit.intercept - b).abs() < 1e-12);
        let ss_res: f64 = x.iter().zip(&y).map(|(u, v)| (v - a * u - b).powi(2)).sum();
        let ss_tot: f64 = y.iter().map(|v| (v - sy / n).powi(2)).sum();
        assert!((fit.r2.unwrap() - (1.0 - ss_res / ss_tot)).abs() < 1e-12);
    }

    #[test]
    fn exact_log_and_weber_relations() {
        let n: Vec<f64> = (1..=10).map(f64::from).collect();
        let y: Vec<f64> = n.iter().map(|v| 2.0 * v.ln() + 1.0).collect();
        let fit = log_fit(&n, &y);
        assert!((fit.slope - 2.0).abs() < 1e-12 && (fit.r2.unwrap() - 1.0).abs() < 1e-12);
        let r = [0.1, 0.5, 0.9, 0.25];
        let d: Vec<f64> = r.iter().map(|v| 3.0 * (1.0 - v)).collect();
        let w = weber_fit(&r, &d);
        assert!((w.c - 3.0).abs() < 1e-12 && (w.r2.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(linear_fit(&n, &[2.0; 10]).r2, None);
    }
}
