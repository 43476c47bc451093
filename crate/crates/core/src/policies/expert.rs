use crate::controllers::{SpeedDistribution, WaypointPlan, PATH_COUNT, WAYPOINT_COUNT, WAYPOINT_SPACING_S};
use crate::expert::{Expert, ExpertConfig};
use crate::geometry::global_to_local;
use crate::world::World;

use super::{route_path_points, Policy, PolicyOutput, PolicyStep, Representation};
use crate::controllers::PathPlan;

/// Labels produced by the privileged expert.
///
/// Waypoints come from simulating the expert forward on a copy of the world,
/// so they are exactly the positions the expert itself would reach.
#[derive(Clone, Debug)]
pub struct ExpertPolicy {
    pub expert: Expert,
    pub representation: Representation,
}

impl ExpertPolicy {
    pub fn new(cfg: ExpertConfig, representation: Representation) -> Self {
        ExpertPolicy {
            expert: Expert::new(cfg),
            representation,
        }
    }

    /// Ego-frame positions of the expert every 250 ms over the next 2 s.
    pub fn rollout_waypoints(&self, world: &World) -> WaypointPlan<f64> {
        let mut w = world.clone();
        let mut e = self.expert.clone();
        let per = (WAYPOINT_SPACING_S / world.cfg.dt).round().max(1.0) as usize;
        let origin = world.ego.state.pose;
        let mut points = [crate::Point::zero(); WAYPOINT_COUNT];
        for p in points.iter_mut() {
            for _ in 0..per {
                let (cmd, _) = e.act(&w);
                w.tick(&cmd);
            }
            *p = global_to_local(&origin, w.ego.state.position());
        }
        WaypointPlan { points }
    }

    pub fn path_output(&mut self, world: &World) -> (PathPlan<f64>, SpeedDistribution<f64>) {
        let d = self.expert.decide(world, None);
        let points: [_; PATH_COUNT] = route_path_points(world);
        (PathPlan { points }, SpeedDistribution::one_hot(d.speed_class_index))
    }
}

impl Policy for ExpertPolicy {
    fn act(&mut self, world: &World) -> PolicyStep {
        let output = match self.representation {
            Representation::Waypoints => {
                let plan = self.rollout_waypoints(world);
                // keep the expert's internal state in step with the world
                self.expert.act(world);
                PolicyOutput::Waypoints(plan)
            }
            Representation::Path => {
                let (plan, dist) = self.path_output(world);
                PolicyOutput::Path(plan, dist)
            }
        };
        output.into()
    }
}
