//! Linear dynamics fits, the rotational (skew-symmetric) plane, rotation
//! quality and the terminal-phase code.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{EclError, Result};
use crate::models::{ActivationTrace, NUM_CLASSES};
use crate::neuro::pca::pca;
use crate::neuro::stats::{linear_fit, pearson};
use crate::scalar::Scalar;

/// Norms below this are treated as zero.
const TINY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub m: DMatrix<f64>,
    /// `1 - SS_res / SS_tot` with `SS_tot = sum |dx|^2`; `None` when every
    /// velocity is zero.
    pub r2: Option<f64>,
    pub rank_deficient: bool,
}

/// Least-squares `M` in `x_{t+1} - x_t = M x_t` over every step of every
/// trajectory (each trajectory is a list of K-dimensional states).
pub fn fit_linear_dynamics(trajectories: &[Vec<Vec<f64>>]) -> Result<LinearDynamics> {
    let k = trajectories
        .first()
        .and_then(|t| t.first())
        .map(|x| x.len())
        .ok_or(EclError::EmptySequence("no trajectories to fit"))?;
    let mut states = Vec::new();
    let mut velocities = Vec::new();
    for traj in trajectories {
        if traj.len() < 2 {
            return Err(EclError::EmptySequence("trajectory shorter than two points"));
        }
        for w in traj.windows(2) {
            if w[0].len() != k || w[1].len() != k {
                return Err(EclError::Dimension("trajectory states differ in dimension".into()));
            }
            states.push(w[0].clone());
            velocities.push(w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect::<Vec<f64>>());
        }
    }
    let n = states.len();
    let x = DMatrix::from_fn(n, k, |i, j| states[i][j]);
    let y = DMatrix::from_fn(n, k, |i, j| velocities[i][j]);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * n.max(k) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let rank_deficient = rank < k;
    if rank_deficient {
        warn!("linear dynamics: regressors have rank {rank} < {k}; using the pseudo-inverse");
    }
    let pinv = svd
        .pseudo_inverse(tol.max(f64::MIN_POSITIVE))
        .map_err(|e| EclError::Dimension(format!("pseudo-inverse failed: {e}")))?;
    let m = (pinv * &y).transpose();
    let residual = &y - &x * m.transpose();
    let ss_tot = y.norm_squared();
    let r2 = (ss_tot > TINY * TINY).then(|| 1.0 - residual.norm_squared() / ss_tot);
    Ok(LinearDynamics { m, r2, rank_deficient })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JpcaPlane {
    pub m_skew: DMatrix<f64>,
    /// Rotation frequency in radians per step; zero without rotation.
    pub omega: f64,
    /// Orthonormal basis `(u, v)` with `M_skew u = omega v`, so trajectories
    /// rotate counter-clockwise in `(u, v)` coordinates. `None` without rotation.
    pub plane: Option<[Vec<f64>; 2]>,
    /// `|M_skew|_F^2 / |M|_F^2` over all K dimensions.
    pub rotation_fraction: Option<f64>,
    /// The same ratio for `M` restricted to the plane.
    pub plane_rotation_fraction: Option<f64>,
}

fn skew_fraction(m: &DMatrix<f64>) -> Option<f64> {
    let total = m.norm_squared();
    let skew = (m - m.transpose()) * 0.5;
    (total > TINY * TINY).then(|| skew.norm_squared() / total)
}

/// Skew-symmetric part of `M` and the plane of its largest rotation.
pub fn jpca_plane(m: &DMatrix<f64>) -> Result<JpcaPlane> {
    if !m.is_square() {
        return Err(EclError::Dimension(format!("jpca needs a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    let m_skew = (m - m.transpose()) * 0.5;
    let rotation_fraction = skew_fraction(m);
    if m_skew.norm() < TINY {
        return Ok(JpcaPlane {
            m_skew,
            omega: 0.0,
            plane: None,
            rotation_fraction,
            plane_rotation_fraction: None,
        });
    }
    // M_skew^T M_skew is symmetric PSD with eigenvalues omega^2 in pairs.
    let gram = m_skew.transpose() * &m_skew;
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.imax();
    let omega = eig.eigenvalues[top].max(0.0).sqrt();
    let u = eig.eigenvectors.column(top).into_owned();
    let mut v = &m_skew * &u / omega;
    v /= v.norm();
    let mut u: Vec<f64> = u.iter().copied().collect();
    let mut v: Vec<f64> = v.iter().copied().collect();
    // deterministic orientation: first nonzero entry of u positive
    if u.iter().find(|x| x.abs() > TINY).is_some_and(|x| *x < 0.0) {
        u.iter_mut().for_each(|x| *x = -*x);
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let k = m.nrows();
    let basis = DMatrix::from_fn(k, 2, |i, j| if j == 0 { u[i] } else { v[i] });
    let restricted = basis.transpose() * m * &basis;
    Ok(JpcaPlane {
        m_skew,
        omega,
        plane: Some([u, v]),
        rotation_fraction,
        plane_rotation_fraction: skew_fraction(&restricted),
    })
}

/// Coordinates of every state in the `(u, v)` plane.
pub fn project_to_plane(trajectories: &[Vec<Vec<f64>>], plane: &[Vec<f64>; 2]) -> Vec<Vec<[f64; 2]>> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    trajectories
        .iter()
        .map(|t| t.iter().map(|x| [dot(x, &plane[0]), dot(x, &plane[1])]).collect())
        .collect()
}

/// Mean `|sin theta|` between position and forward-difference velocity over
/// all steps where both are nonzero.
pub fn rotation_quality(projected: &[Vec<[f64; 2]>]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for traj in projected {
        for w in traj.windows(2) {
            let x = w[0];
            let dx = [w[1][0] - x[0], w[1][1] - x[1]];
            let (nx, nd) = (x[0].hypot(x[1]), dx[0].hypot(dx[1]));
            if nx < TINY || nd < TINY {
                continue;
            }
            sum += ((x[0] * dx[1] - x[1] * dx[0]) / (nx * nd)).abs().min(1.0);
            count += 1;
        }
    }
    if count == 0 {
        return Err(EclError::UndefinedQuality);
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRegression {
    /// Unwrapped terminal phase in degrees for numerosities 1..N.
    pub phases_deg: Vec<f64>,
    /// `None` when the phases have zero variance.
    pub pearson_r: Option<f64>,
    pub slope_deg: f64,
}

/// Terminal phases `atan2(v, u)` per numerosity, unwrapped from numerosity 1
/// by adding multiples of 360 degrees to minimize successive jumps, and a
/// least-squares line of phase against numerosity.
pub fn terminal_phase_regression(terminals: &[[f64; 2]]) -> Result<PhaseRegression> {
    if terminals.len() < 2 {
        return Err(EclError::EmptySequence("phase regression needs two or more numerosities"));
    }
    let mut phases: Vec<f64> = Vec::with_capacity(terminals.len());
    for (i, p) in terminals.iter().enumerate() {
        if p[0].hypot(p[1]) < TINY {
            return Err(EclError::UndefinedPhase(i + 1));
        }
        let raw = p[1].atan2(p[0]).to_degrees();
        let phase = match phases.last() {
            None => raw,
            Some(&prev) => raw + 360.0 * ((prev - raw) / 360.0).round(),
        };
        phases.push(phase);
    }
    let n: Vec<f64> = (1..=terminals.len()).map(|v| v as f64).collect();
    let fit = linear_fit(&n, &phases);
    Ok(PhaseRegression {
        pearson_r: pearson(&n, &phases),
        slope_deg: fit.slope,
        phases_deg: phases,
    })
}

/// Default number of principal components kept before the dynamics fit.
pub const JPCA_DIMS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct JpcaFit {
    pub layer: usize,
    pub pca_mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub m: DMatrix<f64>,
    pub r2: Option<f64>,
    pub m_skew: DMatrix<f64>,
    pub plane: Option<[Vec<f64>; 2]>,
    pub omega: f64,
    pub quality: Option<f64>,
    pub rotation_fraction: Option<f64>,
    pub plane_rotation_fraction: Option<f64>,
    pub phases: Option<PhaseRegression>,
    /// Per numerosity, the condition-averaged trajectory in PCA space.
    pub trajectories: Vec<Vec<Vec<f64>>>,
}

/// Mean hidden-state trajectory per numerosity, starting from the zero
/// initial state. Episodes of one numerosity share a length; shorter ones
/// (if any) contribute only to the steps they have.
pub fn condition_averages<S: Scalar>(traces: &[ActivationTrace<S>], layer: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    let units = match traces.first() {
        Some(t) => t.layer(layer)?.dim(1),
        None => return Err(EclError::IncompleteCoverage(1)),
    };
    let mut sums: Vec<Vec<Vec<f64>>> = vec![Vec::new(); NUM_CLASSES];
    let mut counts: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for tr in traces {
        if tr.label == 0 || tr.label > NUM_CLASSES {
            return Err(EclError::Label { label: tr.label, classes: NUM_CLASSES });
        }
        let states = tr.layer(layer)?;
        if states.dim(1) != units {
            return Err(EclError::Dimension(format!("trace {} has a different width", tr.episode_id)));
        }
        let (sum, count) = (&mut sums[tr.label - 1], &mut counts[tr.label - 1]);
        for (t, row) in states.data().chunks(units).enumerate() {
            if sum.len() <= t {
                sum.push(vec![0.0; units]);
                count.push(0);
            }
            for (a, &v) in sum[t].iter_mut().zip(row) {
                *a += v.as_f64();
            }
            count[t] += 1;
        }
    }
    let mut out = Vec::with_capacity(NUM_CLASSES);
    for (k, (sum, count)) in sums.into_iter().zip(counts).enumerate() {
        if sum.is_empty() {
            return Err(EclError::IncompleteCoverage(k + 1));
        }
        let mut traj = vec![vec![0.0; units]];
        for (row, c) in sum.into_iter().zip(count) {
            traj.push(row.into_iter().map(|v| v / c as f64).collect());
        }
        out.push(traj);
    }
    Ok(out)
}

/// Full rotational-dynamics analysis of one LSTM layer.
pub fn jpca_analysis<S: Scalar>(traces: &[ActivationTrace<S>], layer: usize, k: usize) -> Result<JpcaFit> {
    let averaged = condition_averages(traces, layer)?;
    let stacked: Vec<Vec<f64>> = averaged.iter().flatten().cloned().collect();
    let basis = pca(&stacked, k.min(stacked.len()))?;
    let trajectories: Vec<Vec<Vec<f64>>> = averaged
        .iter()
        .map(|t| t.iter().map(|x| basis.project(x)).collect())
        .collect();
    let dynamics = fit_linear_dynamics(&trajectories)?;
    let plane = jpca_plane(&dynamics.m)?;
    let (quality, phases) = match &plane.plane {
        Some(p) => {
            let projected = project_to_plane(&trajectories, p);
            let quality = match rotation_quality(&projected) {
                Ok(q) => Some(q),
                Err(EclError::UndefinedQuality) => None,
                Err(e) => return Err(e),
            };
            let terminals: Vec<[f64; 2]> = projected.iter().map(|t| *t.last().expect("nonempty")).collect();
            let phases = match terminal_phase_regression(&terminals) {
                Ok(r) => Some(r),
                Err(EclError::UndefinedPhase(n)) => {
                    warn!("jpca layer {layer}: terminal point of numerosity {n} is at the origin");
                    None
                }
                Err(e) => return Err(e),
            };
            (quality, phases)
        }
        None => {
            warn!("jpca layer {layer}: fitted dynamics have no rotational component");
            (None, None)
        }
    };
    Ok(JpcaFit {
        layer,
        pca_mean: basis.mean,
        components: basis.components,
        m: dynamics.m,
        r2: dynamics.r2,
        m_skew: plane.m_skew,
        plane: plane.plane,
        omega: plane.omega,
        quality,
        rotation_fraction: plane.rotation_fraction,
        plane_rotation_fraction: plane.plane_rotation_fraction,
        phases,
        trajectories,
    })
}
