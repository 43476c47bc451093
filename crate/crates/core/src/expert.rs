//! Privileged rule-based driver.
//!
//! Lateral control follows the first route point at least 3.5 m away. The target
//! speed is the minimum over a small rule set: regular driving, slowing inside
//! intersections and near pedestrians, stop signs, red lights and a forecast of
//! collisions obtained by unrolling every agent with the bicycle model.

use serde::{Deserialize, Serialize};

use crate::controllers::{LateralController, LongitudinalController, PidGains, STOP_CLASS};
use crate::dynamics::{integrate_pose, step_bicycle};
use crate::geometry::{convex_overlap, global_to_local, obb_overlap};
use crate::scalar::Real;
use crate::world::{Actor, ActorKind, Phase, Polyline, World};
use crate::{Box2, Command, Params, Point, Pose, State};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertConfig {
    pub speed_regular: f64,
    pub speed_intersection: f64,
    pub speed_caution: f64,
    pub speed_stop: f64,
    pub lateral_min_aim: f64,
    pub pedestrian_radius: f64,
    /// Half-angle of the cone in which pedestrians count as in front (rad).
    pub pedestrian_cone: f64,
    /// Lateral half-width of the pedestrian corridor (m).
    pub pedestrian_corridor: f64,
    pub forecast_horizon: f64,
    pub forecast_dt: f64,
    /// Distance step of the safety-box unroll (m).
    pub safety_step: f64,
    /// A stop is served once the speed drops below this on the trigger area.
    pub served_speed: f64,
    pub yellow_as_red: bool,
    pub lateral: PidGains<f64>,
    pub longitudinal: PidGains<f64>,
    pub overspeed_margin: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            speed_regular: 8.0,
            speed_intersection: 5.0,
            speed_caution: 2.0,
            speed_stop: 0.0,
            lateral_min_aim: 3.5,
            pedestrian_radius: 30.0,
            pedestrian_cone: 60f64.to_radians(),
            pedestrian_corridor: 10.0,
            forecast_horizon: 2.0,
            forecast_dt: 0.05,
            safety_step: 0.25,
            served_speed: 0.1,
            yellow_as_red: true,
            lateral: PidGains::lateral(),
            longitudinal: PidGains::longitudinal(),
            overspeed_margin: 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Regular,
    Intersection,
    PedestrianNear,
    CollisionPredicted,
    RedLight,
    StopSignApproach,
    StopSignOnTrigger,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertDecision {
    pub target_speed: f64,
    pub speed_class_index: usize,
    /// Global aim point of the lateral controller.
    pub aim_point: Point,
    pub reason: Reason,
    /// Earliest forecast collision as (time, actor id).
    pub collision: Option<(f64, u32)>,
}

/// Stopping distance at `speed` (m/s): `0.5 * (3.6 v / 10)^2 + 2.5`.
pub fn stopping_distance<T: Real>(speed: T) -> T {
    let k = speed * T::lit(3.6) / T::lit(10.0);
    T::lit(0.5) * k * k + T::lit(2.5)
}

/// First path point beyond arc length `s` that is at least `min_dist` from the
/// pose, or the last point.
pub fn lateral_aim(path: &Polyline, s: f64, pose: &Pose, min_dist: f64) -> Point {
    let pts = path.points();
    let cum = path.cumulative();
    let from = cum.partition_point(|&c| c <= s);
    let p = pose.position();
    pts[from.min(pts.len() - 1)..]
        .iter()
        .copied()
        .find(|q| q.distance(p) >= min_dist)
        .unwrap_or(pts[pts.len() - 1])
}

fn track(path: &Polyline, s: f64, p: Point) -> f64 {
    s.max(path.project_window(p, s - 2.0, s + 10.0).s)
}

/// Proportional steering toward an aim point, as a wheel angle.
fn follow_angle(pose: &Pose, aim: Point, gains: &PidGains<f64>, params: &Params) -> f64 {
    let local = global_to_local(pose, aim);
    let bearing = if local.norm() < 1e-3 { 0.0 } else { local.angle() };
    let steer = (-gains.kp * bearing).clamp(-1.0, 1.0);
    -steer * params.max_steer
}

/// Ego box posed where path following would end after `stopping_distance(v)`
/// meters of travel.
pub fn safety_box(ego: &State, params: &Params, path: &Polyline, s: f64, cfg: &ExpertConfig) -> Box2 {
    let mut remaining = stopping_distance(ego.speed);
    let mut pose = ego.pose;
    let mut s = s;
    while remaining > 1e-12 {
        let ds = remaining.min(cfg.safety_step);
        let aim = lateral_aim(path, s, &pose, cfg.lateral_min_aim);
        let delta = follow_angle(&pose, aim, &cfg.lateral, params);
        // unit speed over `ds` seconds covers `ds` meters
        pose = integrate_pose(&pose, 1.0, delta, params, ds);
        s = track(path, s, pose.position());
        remaining -= ds;
    }
    params.bbox(&pose)
}

/// Ego side of a collision forecast.
#[derive(Clone, Copy, Debug)]
pub struct EgoForecast {
    pub state: State,
    pub params: Params,
    /// Route arc length of the ego.
    pub s: f64,
    pub target_speed: f64,
    pub min_aim: f64,
    pub lateral: PidGains<f64>,
    pub longitudinal: PidGains<f64>,
    pub overspeed_margin: f64,
}

/// Unrolls the ego with PID path following toward its target speed and every
/// actor with its current command held; returns the first step at which the
/// ego box overlaps an actor box, as (time, actor id).
pub fn predict_collision(
    ego: &EgoForecast,
    actors: &[Actor],
    path: &Polyline,
    horizon: f64,
    dt: f64,
) -> Option<(f64, u32)> {
    let movers: Vec<&Actor> = actors.iter().filter(|a| a.active).collect();
    if movers.is_empty() {
        return None;
    }
    let mut states: Vec<State> = movers.iter().map(|a| a.state).collect();
    let mut me = ego.state;
    let mut s = ego.s;
    let mut lat = LateralController::new(ego.lateral);
    let mut lon = LongitudinalController::new(ego.longitudinal, ego.overspeed_margin);
    let steps = (horizon / dt).round() as usize;
    // radius covering any overlap, to skip far pairs cheaply
    let reach = 0.5 * ego.params.length.hypot(ego.params.width);
    for k in 1..=steps {
        let aim = lateral_aim(path, s, &me.pose, ego.min_aim);
        let steer = lat.steer_towards(global_to_local(&me.pose, aim), dt);
        let (throttle, brake) = lon.command(ego.target_speed, me.speed, dt);
        me = step_bicycle(&me, &Command::new(steer, throttle, brake), &ego.params, dt);
        s = track(path, s, me.position());
        let ego_box = ego.params.bbox(&me.pose);
        for (st, a) in states.iter_mut().zip(&movers) {
            *st = step_bicycle(st, &a.last_cmd, &a.params, dt);
            let r = 0.5 * a.params.length.hypot(a.params.width);
            if st.position().distance(me.position()) > reach + r {
                continue;
            }
            if obb_overlap(&ego_box, &a.params.bbox(&st.pose)) {
                return Some((k as f64 * dt, a.id));
            }
        }
    }
    None
}

/// Class index of an expert target speed.
pub fn speed_class(speed: f64, cfg: &ExpertConfig) -> usize {
    if speed >= cfg.speed_regular {
        0
    } else if speed >= cfg.speed_intersection {
        1
    } else if speed >= cfg.speed_caution && speed > cfg.speed_stop {
        2
    } else {
        STOP_CLASS
    }
}

#[derive(Clone, Debug)]
pub struct Expert {
    pub cfg: ExpertConfig,
    lateral: LateralController<f64>,
    longitudinal: LongitudinalController<f64>,
    served: Vec<bool>,
}

impl Expert {
    pub fn new(cfg: ExpertConfig) -> Self {
        Expert {
            lateral: LateralController::new(cfg.lateral),
            longitudinal: LongitudinalController::new(cfg.longitudinal, cfg.overspeed_margin),
            served: Vec::new(),
            cfg,
        }
    }

    /// Target-speed decision. `visible` masks stop signs the driver can see;
    /// `None` sees all of them.
    pub fn decide(&mut self, world: &World, visible: Option<&[bool]>) -> ExpertDecision {
        let cfg = self.cfg;
        let ego = &world.ego;
        let params = ego.params;
        let route = world.route();
        let s = world.progress.s;
        let pose = ego.state.pose;
        let ego_box = ego.bbox();
        let sbox = safety_box(&ego.state, &params, &route.path, s, &cfg);
        let sbox_corners = sbox.corners();
        let ego_corners = ego_box.corners();

        let mut best = (cfg.speed_regular, Reason::Regular);
        let take = |v: f64, r: Reason, best: &mut (f64, Reason)| {
            if v < best.0 || (v == best.0 && r > best.1) {
                *best = (v, r);
            }
        };

        let map = world.map();
        if map
            .intersections
            .iter()
            .any(|poly| convex_overlap(poly, &sbox_corners) || convex_overlap(poly, &ego_corners))
        {
            take(cfg.speed_intersection, Reason::Intersection, &mut best);
        }

        let signs = world.signs();
        self.served.resize(signs.len(), false);
        for (i, sign) in signs.iter().enumerate() {
            let on = obb_overlap(&ego_box, &sign.trigger_area);
            if !on {
                self.served[i] = false;
            }
            if visible.is_some_and(|v| !v.get(i).copied().unwrap_or(true)) {
                continue;
            }
            if on && ego.state.speed < cfg.served_speed {
                self.served[i] = true;
            }
            if self.served[i] {
                continue;
            }
            if on {
                take(cfg.speed_stop, Reason::StopSignOnTrigger, &mut best);
            } else if obb_overlap(&sbox, &sign.trigger_area) {
                take(cfg.speed_caution, Reason::StopSignApproach, &mut best);
            }
        }

        for (i, light) in world.lights().iter().enumerate() {
            let phase = world.light_phase(i);
            let stop = phase == Phase::Red || (cfg.yellow_as_red && phase == Phase::Yellow);
            if stop
                && light.stop_line.signed_distance(pose.position()) < 0.0
                && (obb_overlap(&sbox, &light.trigger_area) || obb_overlap(&ego_box, &light.trigger_area))
            {
                take(cfg.speed_stop, Reason::RedLight, &mut best);
            }
        }

        // rules above do not depend on other agents; forecast toward their target
        let planned = best.0;

        for a in world.active_actors().filter(|a| a.kind == ActorKind::Pedestrian) {
            let rel = global_to_local(&pose, a.state.position());
            if rel.x > 0.0
                && rel.norm() <= cfg.pedestrian_radius
                && rel.angle().abs() <= cfg.pedestrian_cone
                && rel.y.abs() <= cfg.pedestrian_corridor
            {
                take(cfg.speed_caution, Reason::PedestrianNear, &mut best);
            }
        }

        let forecast = EgoForecast {
            state: ego.state,
            params,
            s,
            target_speed: planned,
            min_aim: cfg.lateral_min_aim,
            lateral: cfg.lateral,
            longitudinal: cfg.longitudinal,
            overspeed_margin: cfg.overspeed_margin,
        };
        let collision = predict_collision(&forecast, &world.actors, &route.path, cfg.forecast_horizon, cfg.forecast_dt);
        if collision.is_some() {
            take(cfg.speed_stop, Reason::CollisionPredicted, &mut best);
        }

        ExpertDecision {
            target_speed: best.0,
            speed_class_index: speed_class(best.0, &cfg),
            aim_point: lateral_aim(&route.path, s, &pose, cfg.lateral_min_aim),
            reason: best.1,
            collision,
        }
    }

    /// Actuation that tracks `decision`.
    pub fn control(&mut self, world: &World, decision: &ExpertDecision) -> Command {
        let dt = world.cfg.dt;
        let state = world.ego.state;
        let steer = self
            .lateral
            .steer_towards(global_to_local(&state.pose, decision.aim_point), dt);
        let (throttle, brake) = self.longitudinal.command(decision.target_speed, state.speed, dt);
        Command::new(steer, throttle, brake)
    }

    pub fn act(&mut self, world: &World) -> (Command, ExpertDecision) {
        let d = self.decide(world, None);
        (self.control(world, &d), d)
    }
}

impl Default for Expert {
    fn default() -> Self {
        Expert::new(ExpertConfig::default())
    }
}

#[cfg(test)]
mod tests;
