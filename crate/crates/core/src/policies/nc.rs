use serde::{Deserialize, Serialize};

use crate::controllers::{SpeedDistribution, PATH_COUNT};
use crate::expert::{Expert, ExpertConfig};
use crate::geometry::global_to_local;
use crate::scalar::wrap_angle;
use crate::world::{LaneMap, Polyline, Turn, World};
use crate::Point;

use super::{emit, nav_command, points_along, NavCommand, Policy, PolicyStep, Representation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NcConfig {
    /// Constant heading bias of the emitted path, positive to the left (rad).
    pub heading_bias: f64,
    /// Lanes within this angle of the ego heading count as aligned (rad).
    pub max_align: f64,
    pub representation: Representation,
}

impl Default for NcConfig {
    fn default() -> Self {
        NcConfig {
            heading_bias: -0.3f64.to_radians(),
            max_align: 60f64.to_radians(),
            representation: Representation::Path,
        }
    }
}

/// Navigation-command surrogate. It follows whichever lane it currently sits
/// in, parallel to its centerline at the current offset, and resolves
/// junctions by matching the command against the available exits.
#[derive(Clone, Debug)]
pub struct NcPolicy {
    pub cfg: NcConfig,
    expert: Expert,
    lane: Option<usize>,
}

fn aligned_lane(map: &LaneMap, p: Point, yaw: f64, max_align: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, lane) in map.lanes.iter().enumerate() {
        if map.is_connector(i) {
            continue;
        }
        let pr = lane.project(p);
        if wrap_angle(lane.heading_at(pr.s) - yaw).abs() > max_align {
            continue;
        }
        let d = pr.point.distance(p);
        if best.is_none_or(|b| d < b.1) {
            best = Some((i, d));
        }
    }
    best.map(|b| b.0)
}

/// Exit taken from `lane` under `cmd`; without a match the straight exit,
/// else the first one.
pub fn choose_successor(map: &LaneMap, lane: usize, cmd: NavCommand) -> Option<usize> {
    let succ = map.successors(lane);
    let want = cmd.turn().unwrap_or(Turn::Straight);
    succ.iter()
        .copied()
        .find(|&n| map.turn(n) == want)
        .or_else(|| succ.iter().copied().find(|&n| map.turn(n) == Turn::Straight))
        .or_else(|| succ.first().copied())
}

impl NcPolicy {
    pub fn new(cfg: NcConfig, expert: ExpertConfig) -> Self {
        NcPolicy {
            cfg,
            expert: Expert::new(expert),
            lane: None,
        }
    }

    /// Lane currently followed.
    pub fn lane(&self) -> Option<usize> {
        self.lane
    }

    fn update_lane(&mut self, world: &World, cmd: NavCommand) {
        let map = world.map();
        let st = world.ego.state;
        let p = st.position();
        if self.lane.is_none() || map.in_intersection(p).is_none() {
            if let Some(l) = aligned_lane(map, p, st.pose.yaw, self.cfg.max_align) {
                self.lane = Some(l);
                return;
            }
        }
        // inside a junction: advance along the committed lane sequence
        while let Some(l) = self.lane {
            let lane = &map.lanes[l];
            if lane.project(p).s < lane.length() - 1e-6 {
                break;
            }
            match choose_successor(map, l, cmd) {
                Some(n) => self.lane = Some(n),
                None => break,
            }
        }
    }

    /// Ego-frame path at the current lateral offset of the followed lane.
    pub fn path(&mut self, world: &World, cmd: NavCommand) -> Option<[Point; PATH_COUNT]> {
        self.update_lane(world, cmd);
        let map = world.map();
        let lane = self.lane?;
        let p = world.ego.state.position();
        let pr = map.lanes[lane].project(p);
        let mut pts: Vec<Point> = map.lanes[lane]
            .slice(pr.s, map.lanes[lane].length())
            .map(|l| l.points().to_vec())
            .unwrap_or_else(|| vec![pr.point]);
        let mut cur = lane;
        let mut len = map.lanes[lane].length() - pr.s;
        while len < PATH_COUNT as f64 + 5.0 {
            let Some(n) = choose_successor(map, cur, cmd) else { break };
            pts.extend_from_slice(&map.lanes[n].points()[1..]);
            len += map.lanes[n].length();
            cur = n;
        }
        let line = Polyline::new(pts)?.offset(pr.lateral);
        let pose = world.ego.state.pose;
        let ahead = points_along(&line, 0.0, 1.0, PATH_COUNT);
        let bias = self.cfg.heading_bias;
        Some(std::array::from_fn(|i| global_to_local(&pose, ahead[i]).rotated(bias)))
    }
}

impl Policy for NcPolicy {
    fn act(&mut self, world: &World) -> PolicyStep {
        let cmd = nav_command(world);
        let path = self.path(world, cmd).unwrap_or_else(|| {
            std::array::from_fn(|i| Point::new((i + 1) as f64, 0.0).rotated(self.cfg.heading_bias))
        });
        let class = self.expert.decide(world, None).speed_class_index;
        emit(self.cfg.representation, path, SpeedDistribution::one_hot(class)).into()
    }
}
