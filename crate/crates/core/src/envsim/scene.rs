//! Workspace scenes: ball placement and visitation order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envsim::kinematics::ArmConfig;
use crate::error::{EclError, Result};

pub const WORKSPACE_WIDTH_CM: f64 = 90.0;
pub const WORKSPACE_HEIGHT_CM: f64 = 60.0;
pub const BALL_DIAMETER_CM: f64 = 4.0;
pub const MAX_BALLS: usize = 10;

/// Fixed ball palette (RGB in `[0, 1]`).
pub const PALETTE: [[f64; 3]; 6] = [
    [0.90, 0.10, 0.10],
    [0.10, 0.65, 0.15],
    [0.10, 0.25, 0.90],
    [0.95, 0.85, 0.10],
    [0.85, 0.20, 0.80],
    [0.10, 0.80, 0.85],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub x: f64,
    pub y: f64,
    pub color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceScene {
    pub balls: Vec<Ball>,
    pub width: f64,
    pub height: f64,
}

impl WorkspaceScene {
    pub fn new(balls: Vec<Ball>) -> Result<Self> {
        let scene = WorkspaceScene {
            balls,
            width: WORKSPACE_WIDTH_CM,
            height: WORKSPACE_HEIGHT_CM,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Checks bounds, ball count and pairwise separation.
    pub fn validate(&self) -> Result<()> {
        if self.balls.is_empty() || self.balls.len() > MAX_BALLS {
            return Err(EclError::Scene(format!(
                "ball count {} outside 1..={MAX_BALLS}",
                self.balls.len()
            )));
        }
        for (i, b) in self.balls.iter().enumerate() {
            if !(0.0..=self.width).contains(&b.x) || !(0.0..=self.height).contains(&b.y) {
                return Err(EclError::Scene(format!("ball {i} at ({}, {}) outside workspace", b.x, b.y)));
            }
            for o in &self.balls[..i] {
                if (b.x - o.x).hypot(b.y - o.y) < BALL_DIAMETER_CM {
                    return Err(EclError::Scene(format!("ball {i} overlaps another ball")));
                }
            }
        }
        Ok(())
    }

    /// Rejection-samples `n` separated, fully visible and arm-reachable balls.
    pub fn sample<R: Rng>(n: usize, arm: &ArmConfig, rng: &mut R) -> Result<Self> {
        let r = BALL_DIAMETER_CM / 2.0;
        let mut balls: Vec<Ball> = Vec::with_capacity(n);
        let mut attempts = 0usize;
        while balls.len() < n {
            attempts += 1;
            if attempts > 100_000 {
                return Err(EclError::Scene(format!("could not place {n} balls")));
            }
            let x = rng.gen_range(r..=WORKSPACE_WIDTH_CM - r);
            let y = rng.gen_range(r..=WORKSPACE_HEIGHT_CM - r);
            if !arm.reaches(x, y, 1e-6) {
                continue;
            }
            if balls
                .iter()
                .any(|b| (b.x - x).hypot(b.y - y) < BALL_DIAMETER_CM)
            {
                continue;
            }
            let color = PALETTE[rng.gen_range(0..PALETTE.len())];
            balls.push(Ball { x, y, color });
        }
        WorkspaceScene::new(balls)
    }

    /// Greedy nearest-unvisited tour starting from the workspace center.
    /// Ties resolve to the lower ball index.
    pub fn visitation_order(&self) -> Vec<usize> {
        let mut remaining: Vec<usize> = (0..self.balls.len()).collect();
        let mut order = Vec::with_capacity(remaining.len());
        let (mut cx, mut cy) = (self.width / 2.0, self.height / 2.0);
        while !remaining.is_empty() {
            let (pos, _) = remaining
                .iter()
                .enumerate()
                .map(|(p, &i)| (p, (self.balls[i].x - cx).hypot(self.balls[i].y - cy)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
            let next = remaining.remove(pos);
            cx = self.balls[next].x;
            cy = self.balls[next].y;
            order.push(next);
        }
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampled_scenes_satisfy_invariants() {
        let arm = ArmConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=MAX_BALLS {
            for _ in 0..20 {
                let s = WorkspaceScene::sample(n, &arm, &mut rng).unwrap();
                assert_eq!(s.balls.len(), n);
                s.validate().unwrap();
                assert!(s.balls.iter().all(|b| arm.reaches(b.x, b.y, 0.0)));
            }
        }
    }

    #[test]
    fn invalid_scenes_are_rejected() {
        assert!(WorkspaceScene::new(vec![]).is_err());
        let b = Ball {
            x: 10.0,
            y: 10.0,
            color: PALETTE[0],
        };
        let close = Ball { x: 12.0, ..b };
        assert!(WorkspaceScene::new(vec![b, close]).is_err());
        let outside = Ball { x: 95.0, ..b };
        assert!(WorkspaceScene::new(vec![outside]).is_err());
    }

    #[test]
    fn greedy_order_visits_every_ball_once() {
        let mk = |x, y| Ball {
            x,
            y,
            color: PALETTE[1],
        };
        let s = WorkspaceScene::new(vec![mk(80.0, 30.0), mk(46.0, 31.0), mk(60.0, 30.0)]).unwrap();
        assert_eq!(s.visitation_order(), vec![1, 2, 0]);
    }
}
