use serde::{Deserialize, Serialize};

use crate::controllers::{SpeedDistribution, PATH_COUNT};
use crate::expert::{Expert, ExpertConfig};
use crate::scalar::wrap_angle;
use crate::world::World;
use crate::Point;

use super::{emit, route_path_points, target_point, Policy, PolicyStep, Representation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortcutConfig {
    /// Blend strength toward the target-point direction, in `[0, 1]`.
    pub strength: f64,
    /// Out-of-distribution threshold on the deviation measure (m).
    pub ood_threshold: f64,
    /// Distance at which heading error is converted into lateral error (m).
    pub heading_lever: f64,
    pub representation: Representation,
}

impl Default for ShortcutConfig {
    fn default() -> Self {
        ShortcutConfig {
            strength: 0.8,
            ood_threshold: 0.75,
            heading_lever: 5.0,
            representation: Representation::Path,
        }
    }
}

/// Target-point conditioned surrogate. In distribution it follows the lane;
/// out of distribution its path bends toward the straight line to the target
/// point.
#[derive(Clone, Debug)]
pub struct ShortcutPolicy {
    pub cfg: ShortcutConfig,
    expert: Expert,
}

impl ShortcutPolicy {
    pub fn new(cfg: ShortcutConfig, expert: ExpertConfig) -> Self {
        ShortcutPolicy {
            cfg,
            expert: Expert::new(expert),
        }
    }

    /// Lateral offset plus heading error projected over the lever arm.
    pub fn deviation(&self, world: &World) -> f64 {
        let path = &world.route().path;
        let heading_err = wrap_angle(world.ego.state.pose.yaw - path.heading_at(world.progress.s));
        world.progress.lateral.abs() + self.cfg.heading_lever * heading_err.sin().abs()
    }

    pub fn is_ood(&self, world: &World) -> bool {
        self.deviation(world) > self.cfg.ood_threshold
    }

    /// Ego-frame path: lane following, or blended toward `tp` when out of
    /// distribution.
    pub fn path(&self, world: &World, tp: Point) -> [Point; PATH_COUNT] {
        let base = route_path_points(world);
        if !self.is_ood(world) || tp.norm() < 1.0 {
            return base;
        }
        // blend bearings, not points, so a large offset cannot outweigh the TP
        let bearing = tp.y.atan2(tp.x);
        let lam = self.cfg.strength.clamp(0.0, 1.0);
        std::array::from_fn(|k| {
            let lane = base[k].y.atan2(base[k].x);
            Point::from_angle((1.0 - lam) * lane + lam * bearing) * (k + 1) as f64
        })
    }
}

impl Policy for ShortcutPolicy {
    fn act(&mut self, world: &World) -> PolicyStep {
        let path = self.path(world, target_point(world));
        let class = self.expert.decide(world, None).speed_class_index;
        emit(self.cfg.representation, path, SpeedDistribution::one_hot(class)).into()
    }
}
