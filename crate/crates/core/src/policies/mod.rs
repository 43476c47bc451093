//! Driving policies and the conditioning signals they consume.
//!
//! Apart from the expert, the policies here are behavioral surrogates. Each
//! one encodes a specific failure pattern of learned driving models so that
//! its closed-loop consequences can be measured:
//!
//! * [`ShortcutPolicy`] follows the lane while in distribution and otherwise
//!   heads toward the target point, which recovers from disturbances when the
//!   target point is near and cuts corners when it lies beyond a turn.
//! * [`NcPolicy`] keeps its current offset from the lane with a small heading
//!   bias and never steers back toward the lane center.
//! * [`UncertainSpeedPolicy`] emits a multi-modal speed distribution near
//!   ambiguous events and perceives stop signs with occlusion.

mod expert;
mod nc;
mod shortcut;
mod uncertain;


use serde::{Deserialize, Serialize};

use crate::controllers::{
    class_speed, PathPlan, SpeedDistribution, WaypointPlan, PATH_COUNT, SPEED_CLASS_COUNT,
    WAYPOINT_SPACING_S,
};
use crate::geometry::global_to_local;
use crate::world::{Disturbance, Polyline, Turn, World};
use crate::{Box2, Point};

pub use expert::ExpertPolicy;
pub use nc::{NcConfig, NcPolicy};
pub use shortcut::{ShortcutConfig, ShortcutPolicy};
pub use uncertain::{UncertainConfig, UncertainSpeedPolicy};

/// Discrete navigation command.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavCommand {
    Follow,
    TurnLeft,
    TurnRight,
    Straight,
    ChangeLeft,
    ChangeRight,
}

impl NavCommand {
    pub fn turn(self) -> Option<Turn> {
        match self {
            NavCommand::TurnLeft => Some(Turn::Left),
            NavCommand::TurnRight => Some(Turn::Right),
            NavCommand::Straight => Some(Turn::Straight),
            _ => None,
        }
    }
}

/// Route conditioning handed to a policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Next target point in the ego frame.
    Tp(Point),
    Nc(NavCommand),
}

/// Distance ahead within which an upcoming maneuver sets the command (m).
pub const NC_LOOKAHEAD: f64 = 30.0;

/// Next target point of the route, in the ego frame.
pub fn target_point(world: &World) -> Point {
    let route = world.route();
    let tp = route
        .next_target_point(world.progress.s)
        .unwrap_or_else(|| route.path.end());
    global_to_local(&world.ego.state.pose, tp)
}

/// Command for the next maneuver of the route, `Follow` on open road.
pub fn nav_command(world: &World) -> NavCommand {
    match world.route().upcoming_maneuver(world.progress.s, NC_LOOKAHEAD) {
        Some(m) => match m.turn {
            Turn::Left => NavCommand::TurnLeft,
            Turn::Right => NavCommand::TurnRight,
            Turn::Straight => NavCommand::Straight,
        },
        None => NavCommand::Follow,
    }
}

pub fn tp_conditioning(world: &World) -> Conditioning {
    Conditioning::Tp(target_point(world))
}

pub fn nc_conditioning(world: &World) -> Conditioning {
    Conditioning::Nc(nav_command(world))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Waypoints,
    #[default]
    Path,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyOutput {
    Waypoints(WaypointPlan<f64>),
    Path(PathPlan<f64>, SpeedDistribution<f64>),
}

impl PolicyOutput {
    pub fn speed_distribution(&self) -> Option<&SpeedDistribution<f64>> {
        match self {
            PolicyOutput::Path(_, d) => Some(d),
            PolicyOutput::Waypoints(_) => None,
        }
    }
}

/// One policy evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyStep {
    pub output: PolicyOutput,
    /// Stop-sign trigger areas detected this step, in the ego frame.
    pub signs: Vec<Box2>,
}

impl From<PolicyOutput> for PolicyStep {
    fn from(output: PolicyOutput) -> Self {
        PolicyStep {
            output,
            signs: Vec::new(),
        }
    }
}

pub trait Policy: Send {
    fn act(&mut self, world: &World) -> PolicyStep;
}

/// `count` points along `path` spaced exactly `step` meters apart (Euclidean),
/// starting after arc length `s`. Past the end the last tangent is extended.
pub fn points_along(path: &Polyline, s: f64, step: f64, count: usize) -> Vec<Point> {
    let mut out = Vec::with_capacity(count);
    let mut cur = path.point_at(s);
    let mut cur_s = s.clamp(0.0, path.length());
    let tail = path.tangent_at(path.length());
    let mut beyond = false;
    while out.len() < count {
        let next = if beyond {
            None
        } else {
            path.next_at_distance(cur, cur_s, step)
        };
        match next {
            Some((p, ns)) => {
                cur = p;
                cur_s = ns;
            }
            None => {
                beyond = true;
                cur = cur + tail * step;
            }
        }
        out.push(cur);
    }
    out
}

/// Route points ahead of the ego at 1 m spacing, in the ego frame.
pub fn route_path_points(world: &World) -> [Point; PATH_COUNT] {
    let pose = world.ego.state.pose;
    let pts = points_along(&world.route().path, world.progress.s, 1.0, PATH_COUNT);
    std::array::from_fn(|i| global_to_local(&pose, pts[i]))
}

/// Expected speed of a class distribution (m/s).
pub fn expected_speed(dist: &SpeedDistribution<f64>) -> f64 {
    (0..SPEED_CLASS_COUNT).map(|i| dist.probs[i] * class_speed::<f64>(i)).sum()
}

/// Waypoints placed along the ego-frame `path` (starting from the origin)
/// at the distances covered at `speed` every 250 ms.
pub fn waypoints_along(path: &[Point], speed: f64) -> WaypointPlan<f64> {
    let mut pts = Vec::with_capacity(path.len() + 1);
    pts.push(Point::zero());
    pts.extend_from_slice(path);
    let line = Polyline::new(pts);
    WaypointPlan {
        points: std::array::from_fn(|k| {
            let d = speed.max(0.0) * WAYPOINT_SPACING_S * (k + 1) as f64;
            match &line {
                Some(l) if d <= l.length() => l.point_at(d),
                Some(l) => l.end() + l.tangent_at(l.length()) * (d - l.length()),
                None => Point::new(d, 0.0),
            }
        }),
    }
}

/// Renders a path and speed distribution in the requested representation.
/// Waypoints travel at the expected speed of the distribution.
pub fn emit(rep: Representation, path: [Point; PATH_COUNT], dist: SpeedDistribution<f64>) -> PolicyOutput {
    match rep {
        Representation::Path => PolicyOutput::Path(PathPlan { points: path }, dist),
        Representation::Waypoints => PolicyOutput::Waypoints(waypoints_along(&path, expected_speed(&dist))),
    }
}

/// Queues a disturbance on the world; it is applied once when the ego reaches
/// `d.route_s`.
pub fn apply_disturbance(world: &mut World, d: Disturbance) {
    world.add_disturbance(d);
}
