//! Planar two-link arm.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{EclError, Result};

/// Link lengths (cm) and base position in workspace coordinates (cm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub l1: f64,
    pub l2: f64,
    pub base_x: f64,
    pub base_y: f64,
}

impl Default for ArmConfig {
    fn default() -> Self {
        // base at the middle of the left edge of a 90 x 60 cm workspace
        ArmConfig {
            l1: 50.0,
            l2: 40.0,
            base_x: 0.0,
            base_y: 30.0,
        }
    }
}

impl ArmConfig {
    pub fn min_reach(&self) -> f64 {
        (self.l1 - self.l2).abs()
    }

    pub fn max_reach(&self) -> f64 {
        self.l1 + self.l2
    }

    /// Whether a workspace point lies in the reachable annulus, shrunk by `margin`.
    pub fn reaches(&self, x: f64, y: f64, margin: f64) -> bool {
        let r = (x - self.base_x).hypot(y - self.base_y);
        r >= self.min_reach() + margin && r <= self.max_reach() - margin
    }
}

/// Joint angles in radians, each in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmPose {
    pub j1: f64,
    pub j2: f64,
}

impl ArmPose {
    /// Angles scaled to `[-1, 1]` for the network input.
    pub fn normalized(&self) -> [f64; 2] {
        [self.j1 / PI, self.j2 / PI]
    }
}

/// Wraps an angle into `(-pi, pi]`, mapping `-0.0` to `0.0`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    if w == 0.0 {
        0.0
    } else {
        w
    }
}

/// End-effector position relative to the arm base.
pub fn forward_kinematics(pose: ArmPose, links: (f64, f64)) -> (f64, f64) {
    let (l1, l2) = links;
    let a = pose.j1 + pose.j2;
    (
        l1 * pose.j1.cos() + l2 * a.cos(),
        l1 * pose.j1.sin() + l2 * a.sin(),
    )
}

/// Elbow-up (`j2 <= 0`) solution placing the end effector at a base-relative target.
pub fn inverse_kinematics(target: (f64, f64), links: (f64, f64)) -> Result<ArmPose> {
    let (x, y) = target;
    let (l1, l2) = links;
    let r2 = x * x + y * y;
    let r = r2.sqrt();
    let (lo, hi) = ((l1 - l2).abs(), l1 + l2);
    let tol = 1e-12 * hi.max(1.0);
    if !r.is_finite() || r < lo - tol || r > hi + tol {
        return Err(EclError::Reach {
            x,
            y,
            min_reach: lo,
            max_reach: hi,
        });
    }
    let cos_j2 = ((r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let sin_j2 = -(1.0 - cos_j2 * cos_j2).max(0.0).sqrt();
    let j2 = sin_j2.atan2(cos_j2);
    let j1 = y.atan2(x) - (l2 * sin_j2).atan2(l1 + l2 * cos_j2);
    Ok(ArmPose {
        j1: wrap_angle(j1),
        j2: wrap_angle(j2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LINKS: (f64, f64) = (50.0, 40.0);

    #[test]
    fn fully_extended_targets() {
        let p = inverse_kinematics((90.0, 0.0), LINKS).unwrap();
        assert_eq!((p.j1, p.j2), (0.0, 0.0));
        let p = inverse_kinematics((0.0, 90.0), LINKS).unwrap();
        assert!((p.j1 - PI / 2.0).abs() < 1e-15);
        assert_eq!(p.j2, 0.0);
    }

    #[test]
    fn unreachable_targets_are_rejected() {
        assert!(matches!(
            inverse_kinematics((91.0, 0.0), LINKS),
            Err(EclError::Reach { .. })
        ));
        assert!(inverse_kinematics((5.0, 0.0), LINKS).is_err());
        assert!(inverse_kinematics((f64::NAN, 0.0), LINKS).is_err());
    }

    #[test]
    fn forward_inverse_identity_on_ten_thousand_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let r = rng.gen_range(10.0..=90.0);
            let th = rng.gen_range(-PI..PI);
            let t = (r * th.cos(), r * th.sin());
            let p = inverse_kinematics(t, LINKS).unwrap();
            assert!(p.j2 <= 0.0, "elbow-up solution expected");
            assert!(p.j1 > -PI && p.j1 <= PI && p.j2 > -PI && p.j2 <= PI);
            let (x, y) = forward_kinematics(p, LINKS);
            worst = worst.max((x - t.0).hypot(y - t.1));
        }
        assert!(worst < 1e-9, "worst FK(IK) error {worst}");
    }

    proptest! {
        #[test]
        fn wrapped_angles_stay_in_half_open_interval(a in -50.0f64..50.0) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!(((w - a) / (2.0 * PI)).round() * 2.0 * PI - (w - a) < 1e-9);
        }
    }
}
