//! Egocentric rasterizer: a square window of fixed physical size centered on
//! the end effector, balls drawn as anti-aliased disks.

use serde::{Deserialize, Serialize};

use crate::envsim::kinematics::{forward_kinematics, ArmConfig, ArmPose};
use crate::envsim::scene::{WorkspaceScene, BALL_DIAMETER_CM};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub height: usize,
    pub width: usize,
    /// Side of the square view window (cm).
    pub view_cm: f64,
    pub background: [f64; 3],
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            height: 64,
            width: 64,
            view_cm: 40.0,
            background: [0.82, 0.80, 0.74],
        }
    }
}

impl RenderConfig {
    pub fn with_size(size: usize) -> Self {
        RenderConfig {
            height: size,
            width: size,
            ..RenderConfig::default()
        }
    }
}

/// End-effector position in workspace coordinates.
pub fn end_effector(pose: ArmPose, arm: &ArmConfig) -> (f64, f64) {
    let (x, y) = forward_kinematics(pose, (arm.l1, arm.l2));
    (arm.base_x + x, arm.base_y + y)
}

/// Renders the `H x W x 3` view for `pose`. Pure: the same inputs always
/// produce the same bytes.
pub fn render_scene(
    scene: &WorkspaceScene,
    pose: ArmPose,
    arm: &ArmConfig,
    config: &RenderConfig,
) -> Tensor<f32> {
    let (ex, ey) = end_effector(pose, arm);
    render_view(scene, (ex, ey), config)
}

/// Renders the view window centered at a workspace point.
pub fn render_view(scene: &WorkspaceScene, center: (f64, f64), config: &RenderConfig) -> Tensor<f32> {
    let (h, w) = (config.height, config.width);
    let sx = config.view_cm / w as f64;
    let sy = config.view_cm / h as f64;
    let radius = BALL_DIAMETER_CM / 2.0;
    let mut img = vec![0f32; h * w * 3];
    // Only balls whose disk can touch the window matter.
    let half_x = config.view_cm / 2.0 + radius + sx;
    let half_y = config.view_cm / 2.0 + radius + sy;
    let visible: Vec<_> = scene
        .balls
        .iter()
        .filter(|b| (b.x - center.0).abs() <= half_x && (b.y - center.1).abs() <= half_y)
        .collect();
    let pixel = sx.max(sy);
    for r in 0..h {
        let wy = center.1 - ((r as f64 + 0.5) - h as f64 / 2.0) * sy;
        for c in 0..w {
            let wx = center.0 + ((c as f64 + 0.5) - w as f64 / 2.0) * sx;
            let mut rgb = config.background;
            for b in &visible {
                let d = (wx - b.x).hypot(wy - b.y);
                // linear coverage ramp one pixel wide around the rim
                let cover = ((radius - d) / pixel + 0.5).clamp(0.0, 1.0);
                if cover > 0.0 {
                    for k in 0..3 {
                        rgb[k] = (1.0 - cover) * rgb[k] + cover * b.color[k];
                    }
                }
            }
            let base = (r * w + c) * 3;
            for k in 0..3 {
                img[base + k] = rgb[k].clamp(0.0, 1.0) as f32;
            }
        }
    }
    Tensor::from_vec(&[h, w, 3], img).expect("image buffer matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::kinematics::inverse_kinematics;
    use crate::envsim::scene::{Ball, PALETTE};

    fn one_ball(x: f64, y: f64) -> WorkspaceScene {
        WorkspaceScene::new(vec![Ball {
            x,
            y,
            color: PALETTE[2],
        }])
        .unwrap()
    }

    #[test]
    fn empty_view_is_pure_background() {
        let cfg = RenderConfig::default();
        let img = render_view(&one_ball(85.0, 55.0), (20.0, 10.0), &cfg);
        for px in img.data().chunks(3) {
            for k in 0..3 {
                assert_eq!(px[k], cfg.background[k] as f32);
            }
        }
    }

    #[test]
    fn visited_ball_is_centered() {
        let arm = ArmConfig::default();
        let cfg = RenderConfig::default();
        let scene = one_ball(60.0, 40.0);
        let pose = inverse_kinematics((60.0 - arm.base_x, 40.0 - arm.base_y), (arm.l1, arm.l2)).unwrap();
        let img = render_scene(&scene, pose, &arm, &cfg);
        let (h, w) = (cfg.height, cfg.width);
        let bg = cfg.background[0] as f32;
        let (mut total, mut mr, mut mc) = (0.0f64, 0.0f64, 0.0f64);
        for r in 0..h {
            for c in 0..w {
                let v = img.data()[(r * w + c) * 3];
                let a = ((bg - v) / (bg - PALETTE[2][0] as f32)) as f64;
                total += a;
                mr += a * (r as f64 + 0.5);
                mc += a * (c as f64 + 0.5);
            }
        }
        assert!(total > 1.0);
        assert!((mr / total - h as f64 / 2.0).abs() < 1e-3);
        assert!((mc / total - w as f64 / 2.0).abs() < 1e-3);
        // and the disk is symmetric under a half-turn about the center
        for r in 0..h {
            for c in 0..w {
                let a = img.data()[(r * w + c) * 3];
                let b = img.data()[((h - 1 - r) * w + (w - 1 - c)) * 3];
                assert!((a - b).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn rendering_is_deterministic_and_bounded() {
        let arm = ArmConfig::default();
        let cfg = RenderConfig::with_size(32);
        let scene = WorkspaceScene::new(vec![
            Ball { x: 50.0, y: 30.0, color: PALETTE[0] },
            Ball { x: 55.0, y: 33.0, color: PALETTE[3] },
        ])
        .unwrap();
        let pose = inverse_kinematics((52.0, 1.0), (arm.l1, arm.l2)).unwrap();
        let a = render_scene(&scene, pose, &arm, &cfg);
        let b = render_scene(&scene, pose, &arm, &cfg);
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(a.shape(), &[32, 32, 3]);
    }
}
