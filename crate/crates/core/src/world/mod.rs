//! Map, route, signals, scripted actors and the fixed-step tick engine.

mod actors;
mod map;
mod polyline;
mod route;
mod scenario;
mod signals;

pub use actors::{profile_speed, Actor, ActorKind, Behavior, Gate};
pub use map::{LaneMap, Turn};
pub use polyline::{Polyline, Projection};
pub use route::{
    build_route, next_target_point, route_progress, Maneuver, Progress, Route, RouteError, RouteTracker, TpSpacing,
    PATH_STEP, TP_ADVANCE_EPSILON,
};
pub use scenario::{
    ActorSpec, AmbiguityWindow, BehaviorSpec, Disturbance, Param, PerceptionSpec, Scenario, ScenarioError,
    ScenarioTrigger, StartState, TriggerAction,
};
pub use signals::{LightClock, Phase, StopLine, StopSign, TrafficLight};

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::step_bicycle;
use crate::geometry::obb_overlap;
use crate::{Command, Params, Point, Pose, State};

/// Per-axis GNSS noise giving a 0.7 m mean radial error.
pub const DEFAULT_GNSS_SIGMA: f64 = 0.5585;
/// Distance beyond the lane edge at which the ego counts as off the road (m).
pub const OFFROAD_MARGIN: f64 = 2.0;

/// Random streams derived from one episode seed.
pub mod streams {
    pub const SCENARIO: u64 = 1;
    pub const GNSS: u64 = 2;
    pub const PERCEPTION: u64 = 3;
    pub const POLICY: u64 = 4;
}

/// Deterministic generator for stream `stream` of episode `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    /// Overrides the scenario time budget when set (s).
    pub max_episode_time: Option<f64>,
    pub rng_seed: u64,
    pub gnss_sigma: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.05,
            max_episode_time: None,
            rng_seed: 0,
            gnss_sigma: DEFAULT_GNSS_SIGMA,
        }
    }
}

/// Adds i.i.d. zero-mean Gaussian noise with standard deviation `sigma` per axis.
pub fn gnss_sample<R: Rng>(true_pos: Point, sigma: f64, rng: &mut R) -> Point {
    if sigma <= 0.0 {
        return true_pos;
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    Point::new(true_pos.x + n.sample(rng), true_pos.y + n.sample(rng))
}

/// Immutable part of a scenario shared by all its episodes.
#[derive(Debug)]
pub struct Prepared {
    pub scenario: Scenario,
    pub map: LaneMap,
    pub route: Route,
}

impl Prepared {
    pub fn new(scenario: Scenario) -> Result<Arc<Prepared>, ScenarioError> {
        let invalid = |m: String| ScenarioError::Invalid(m);
        if !(scenario.lane_width > 0.0) {
            return Err(invalid("lane_width must be positive".into()));
        }
        let mut lanes = Vec::with_capacity(scenario.lanes.len());
        for (i, pts) in scenario.lanes.iter().enumerate() {
            if pts.len() < 2 || pts.windows(2).any(|w| w[0] == w[1]) {
                return Err(invalid(format!("lane {i} needs at least two distinct consecutive points")));
            }
            lanes.push(Polyline::new(pts.clone()).ok_or_else(|| invalid(format!("lane {i} is degenerate")))?);
        }
        let map = LaneMap::new(lanes, scenario.lane_width, scenario.intersections.clone());
        let path = Polyline::new(scenario.route.clone()).ok_or_else(|| invalid("route is degenerate".into()))?;
        if scenario.target_points.is_empty() {
            return Err(invalid("route has no target points".into()));
        }
        let route = Route::new(path, scenario.target_points.clone(), scenario.triggers.clone(), &map)
            .map_err(|e| invalid(e.to_string()))?;
        let len = route.length();
        if let Some(t) = scenario.triggers.iter().find(|t| !(0.0..=len).contains(&t.s)) {
            return Err(invalid(format!("trigger at s={} outside the route", t.s)));
        }
        for (i, l) in scenario.lights.iter().enumerate() {
            if l.schedule.is_empty() || l.schedule.iter().any(|p| !(p.1 > 0.0)) {
                return Err(invalid(format!("light {i} needs positive phase durations")));
            }
        }
        Ok(Arc::new(Prepared { scenario, map, route }))
    }

    /// Time budget of an episode (s).
    pub fn time_limit(&self) -> f64 {
        self.scenario
            .time_limit
            .unwrap_or_else(|| (4.0 * self.route.length() / 8.0).max(60.0))
    }
}

/// Scenario trigger with its random parameters drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum ResolvedAction {
    Pedestrian { ahead: f64, lateral: f64, speed: f64, delay: f64 },
    Cyclist { ahead: f64, lateral: f64, speed: f64, along: f64, cuts_in: bool, yield_lateral: f64 },
    Opposing { ahead: f64, speed: f64, offset: f64 },
    LightChange { light: usize, delay: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedTrigger {
    pub s: f64,
    pub action: ResolvedAction,
}

/// Ambiguity window with its weight drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedWindow {
    pub s_start: f64,
    pub s_end: f64,
    pub max_duration: f64,
    pub weight: f64,
    pub alternative: [f64; crate::controllers::SPEED_CLASS_COUNT],
}

/// Per-episode random draws, all taken from the scenario stream at build time
/// so that paired runs with the same seed face the same situation.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub triggers: Vec<ResolvedTrigger>,
    pub disturbances: Vec<Disturbance>,
    pub windows: Vec<ResolvedWindow>,
    pub occlusion: f64,
    pub detection_prob: f64,
}

impl Resolved {
    pub fn draw(scenario: &Scenario, seed: u64) -> Resolved {
        let mut rng = stream_rng(seed, streams::SCENARIO);
        let mut triggers: Vec<ResolvedTrigger> = scenario
            .triggers
            .iter()
            .map(|t| {
                let action = match &t.action {
                    TriggerAction::PedestrianCrossing { ahead, lateral, speed, delay } => ResolvedAction::Pedestrian {
                        ahead: ahead.sample(&mut rng),
                        lateral: lateral.sample(&mut rng),
                        speed: speed.sample(&mut rng),
                        delay: delay.sample(&mut rng),
                    },
                    TriggerAction::CyclistCutIn {
                        ahead,
                        lateral,
                        speed,
                        probability,
                        along,
                        yield_lateral,
                    } => ResolvedAction::Cyclist {
                        ahead: ahead.sample(&mut rng),
                        lateral: lateral.sample(&mut rng),
                        speed: speed.sample(&mut rng),
                        along: along.sample(&mut rng),
                        cuts_in: rng.random::<f64>() < *probability,
                        yield_lateral: *yield_lateral,
                    },
                    TriggerAction::OpposingVehicle { ahead, speed, offset } => ResolvedAction::Opposing {
                        ahead: ahead.sample(&mut rng),
                        speed: speed.sample(&mut rng),
                        offset: *offset,
                    },
                    TriggerAction::LightChange { light, delay } => ResolvedAction::LightChange {
                        light: *light,
                        delay: delay.sample(&mut rng),
                    },
                };
                ResolvedTrigger { s: t.s, action }
            })
            .collect();
        triggers.sort_by(|a, b| a.s.total_cmp(&b.s));
        let mut disturbances: Vec<Disturbance> = scenario
            .disturbances
            .iter()
            .map(|d| {
                let j = if d.lateral_jitter > 0.0 {
                    rng.random_range(-d.lateral_jitter..=d.lateral_jitter)
                } else {
                    0.0
                };
                Disturbance {
                    lateral_offset: d.lateral_offset + j,
                    lateral_jitter: 0.0,
                    ..*d
                }
            })
            .collect();
        disturbances.sort_by(|a, b| a.route_s.total_cmp(&b.route_s));
        let windows = scenario
            .ambiguity
            .iter()
            .map(|w| ResolvedWindow {
                s_start: w.s_start,
                s_end: w.s_end,
                max_duration: w.max_duration,
                weight: w.weight.sample(&mut rng).clamp(0.0, 1.0),
                alternative: w.alternative,
            })
            .collect();
        Resolved {
            triggers,
            disturbances,
            windows,
            occlusion: scenario.perception.occlusion.sample(&mut rng),
            detection_prob: scenario.perception.detection_prob,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum RawEvent {
    /// Ego box started overlapping an actor.
    Collision { actor: u32, kind: ActorKind },
    /// Ego center left the drivable surface.
    Offroad,
    /// Ego center entered a lane carrying opposing traffic.
    OpposingLane,
    StopLineCrossed { light: usize, phase: Phase },
    /// Ego box left a stop-sign trigger area.
    StopSignPassed { sign: usize, min_speed: f64 },
    TriggerFired { index: usize },
    DisturbanceApplied { index: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub time: f64,
    pub route_s: f64,
    pub event: RawEvent,
}

#[derive(Clone, Debug)]
pub struct World {
    pub cfg: SimConfig,
    pub data: Arc<Prepared>,
    pub resolved: Arc<Resolved>,
    pub time: f64,
    pub tick: u64,
    pub ego: Actor,
    pub actors: Vec<Actor>,
    pub clocks: Vec<LightClock>,
    pub tracker: RouteTracker,
    pub progress: Progress,
    next_trigger: usize,
    next_disturbance: usize,
    overlapping: BTreeSet<u32>,
    offroad: bool,
    opposing: bool,
    on_sign: Vec<Option<f64>>,
    next_id: u32,
    rng: ChaCha8Rng,
}

impl World {
    pub fn new(data: Arc<Prepared>, cfg: SimConfig) -> World {
        let resolved = Arc::new(Resolved::draw(&data.scenario, cfg.rng_seed));
        Self::with_resolved(data, resolved, cfg)
    }

    pub fn with_resolved(data: Arc<Prepared>, resolved: Arc<Resolved>, cfg: SimConfig) -> World {
        let path = &data.route.path;
        let start = path.start();
        let ego_state = State::new(start.x, start.y, path.heading_at(0.0), data.scenario.ego_speed);
        let ego = Actor::new(0, ActorKind::Vehicle, ego_state, Behavior::Static);
        let actors = data
            .scenario
            .actors
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let st = State::new(spec.start.x, spec.start.y, spec.start.yaw, spec.start.speed);
                let behavior = match &spec.behavior {
                    BehaviorSpec::Static => Behavior::Static,
                    BehaviorSpec::Keyframes { keys } => Behavior::Keyframes(keys.clone()),
                    BehaviorSpec::FollowPath {
                        path,
                        profile,
                        despawn_at_end,
                    } => Behavior::FollowPath {
                        path: Polyline::new(path.clone()).expect("actor path has two distinct points"),
                        profile: profile.clone(),
                        despawn_at_end: *despawn_at_end,
                    },
                };
                let mut a = Actor::new(i as u32 + 1, spec.kind, st, behavior);
                a.gate = spec.gate;
                a
            })
            .collect::<Vec<_>>();
        let clocks = data.scenario.lights.iter().map(|l| LightClock::new(l, cfg.dt)).collect();
        let mut tracker = RouteTracker::default();
        let progress = tracker.update(&data.route, &ego.state.pose);
        let next_id = actors.len() as u32 + 1;
        let on_sign = vec![None; data.scenario.signs.len()];
        World {
            rng: stream_rng(cfg.rng_seed, streams::GNSS),
            cfg,
            data,
            resolved,
            time: 0.0,
            tick: 0,
            ego,
            actors,
            clocks,
            tracker,
            progress,
            next_trigger: 0,
            next_disturbance: 0,
            overlapping: BTreeSet::new(),
            offroad: false,
            opposing: false,
            on_sign,
            next_id,
        }
    }

    pub fn route(&self) -> &Route {
        &self.data.route
    }

    pub fn map(&self) -> &LaneMap {
        &self.data.map
    }

    pub fn lights(&self) -> &[TrafficLight] {
        &self.data.scenario.lights
    }

    pub fn signs(&self) -> &[StopSign] {
        &self.data.scenario.signs
    }

    pub fn ego_params(&self) -> &Params {
        &self.ego.params
    }

    pub fn light_phase(&self, light: usize) -> Phase {
        self.clocks[light].phase(self.tick)
    }

    pub fn active_actors(&self) -> impl Iterator<Item = &Actor> {
        self.actors.iter().filter(|a| a.active)
    }

    /// Noisy position fix of the ego.
    pub fn gnss(&mut self) -> Point {
        gnss_sample(self.ego.state.position(), self.cfg.gnss_sigma, &mut self.rng)
    }

    /// Sets the ego state, e.g. for probes that place the vehicle directly.
    pub fn set_ego(&mut self, state: State) {
        self.ego.state = state;
        self.progress = self.tracker.update(&self.data.route, &state.pose);
    }

    /// Schedules an extra disturbance. It fires once, in route order, when the
    /// ego progress reaches `d.route_s`; one already behind the ego fires on the
    /// next tick.
    pub fn add_disturbance(&mut self, d: Disturbance) {
        let resolved = Arc::make_mut(&mut self.resolved);
        let pending = &mut resolved.disturbances[self.next_disturbance..];
        let at = pending.partition_point(|x| x.route_s <= d.route_s);
        resolved.disturbances.insert(self.next_disturbance + at, d);
    }

    /// Advances the world by one step of `cfg.dt`.
    pub fn tick(&mut self, cmd: &Command) -> Vec<TimedEvent> {
        let dt = self.cfg.dt;
        let mut raw = Vec::new();
        let prev = self.ego.state.position();
        self.ego.last_cmd = *cmd;
        self.ego.state = step_bicycle(&self.ego.state, cmd, &self.ego.params, dt);

        for a in &mut self.actors {
            a.step(self.time, &self.clocks, self.tick, dt);
        }
        self.time = (self.tick + 1) as f64 * dt;
        self.tick += 1;
        self.progress = self.tracker.update(&self.data.route, &self.ego.state.pose);

        self.apply_disturbances(&mut raw);
        self.fire_triggers(&mut raw);
        self.detect(prev, &mut raw);

        raw.into_iter()
            .map(|event| TimedEvent {
                time: self.time,
                route_s: self.progress.s,
                event,
            })
            .collect()
    }

    fn apply_disturbances(&mut self, raw: &mut Vec<RawEvent>) {
        let list = Arc::clone(&self.resolved);
        while let Some(d) = list.disturbances.get(self.next_disturbance) {
            if self.progress.s < d.route_s {
                break;
            }
            let path = &self.data.route.path;
            let normal = path.tangent_at(self.progress.s).perp();
            let p = self.ego.state.position() + normal * d.lateral_offset;
            let pose = Pose::new(p.x, p.y, self.ego.state.pose.yaw + d.heading_error);
            self.ego.state.pose = pose;
            self.progress = self.tracker.update(&self.data.route, &pose);
            raw.push(RawEvent::DisturbanceApplied {
                index: self.next_disturbance,
            });
            self.next_disturbance += 1;
        }
    }

    fn spawn(&mut self, kind: ActorKind, path: Vec<Point>, profile: Vec<(f64, f64)>, despawn: bool) {
        let Some(line) = Polyline::new(path) else { return };
        let heading = line.heading_at(0.0);
        let p = line.start();
        let speed = profile_speed(&profile, 0.0);
        let mut a = Actor::new(
            self.next_id,
            kind,
            State::new(p.x, p.y, heading, speed),
            Behavior::FollowPath {
                path: line,
                profile,
                despawn_at_end: despawn,
            },
        );
        a.started = Some(self.time);
        self.next_id += 1;
        self.actors.push(a);
    }

    fn fire_triggers(&mut self, raw: &mut Vec<RawEvent>) {
        let list = Arc::clone(&self.resolved);
        while let Some(t) = list.triggers.get(self.next_trigger) {
            if self.progress.s < t.s {
                break;
            }
            let s_fire = self.progress.s;
            let path = self.data.route.path.clone();
            let frame = |s: f64| (path.point_at(s), path.tangent_at(s).perp());
            match t.action {
                ResolvedAction::Pedestrian {
                    ahead,
                    lateral,
                    speed,
                    delay,
                } => {
                    let (c, n) = frame(s_fire + ahead);
                    let profile = if delay > 0.0 {
                        vec![(0.0, 0.0), (delay, speed)]
                    } else {
                        vec![(0.0, speed)]
                    };
                    self.spawn(ActorKind::Pedestrian, vec![c + n * lateral, c - n * lateral], profile, true);
                }
                ResolvedAction::Cyclist {
                    ahead,
                    lateral,
                    speed,
                    along,
                    cuts_in,
                    yield_lateral,
                } => {
                    let (c0, n0) = frame(s_fire + ahead);
                    let (c1, n1) = frame(s_fire + ahead + along);
                    let start = c0 + n0 * lateral;
                    if cuts_in {
                        self.spawn(ActorKind::Cyclist, vec![start, c1 - n1 * lateral], vec![(0.0, speed)], true);
                    } else {
                        // stop where the remaining lateral distance is `yield_lateral`
                        let f = ((lateral - yield_lateral) / (2.0 * lateral)).clamp(0.0, 1.0);
                        let end = start.lerp(c1 - n1 * lateral, f);
                        self.spawn(ActorKind::Cyclist, vec![start, end], vec![(0.0, speed)], false);
                    }
                }
                ResolvedAction::Opposing { ahead, speed, offset } => {
                    let s0 = (s_fire + ahead).min(path.length());
                    if let Some(piece) = path.slice(0.0, s0) {
                        let lane = piece.offset(offset).reversed();
                        self.spawn(ActorKind::Vehicle, lane.points().to_vec(), vec![(0.0, speed)], true);
                    }
                }
                ResolvedAction::LightChange { light, delay } => {
                    if let Some(c) = self.clocks.get_mut(light) {
                        c.schedule_yellow(self.tick, (delay / self.cfg.dt).round() as u64);
                    }
                }
            }
            raw.push(RawEvent::TriggerFired {
                index: self.next_trigger,
            });
            self.next_trigger += 1;
        }
    }

    fn detect(&mut self, prev: Point, raw: &mut Vec<RawEvent>) {
        let ego_box = self.ego.bbox();
        let pos = self.ego.state.position();

        let mut now = BTreeSet::new();
        for a in self.actors.iter().filter(|a| a.active) {
            if obb_overlap(&ego_box, &a.bbox()) {
                now.insert(a.id);
                if !self.overlapping.contains(&a.id) {
                    raw.push(RawEvent::Collision {
                        actor: a.id,
                        kind: a.kind,
                    });
                }
            }
        }
        self.overlapping = now;

        let map = &self.data.map;
        let off = !map.on_road(pos, OFFROAD_MARGIN);
        if off && !self.offroad {
            raw.push(RawEvent::Offroad);
        }
        self.offroad = off;

        let opp = self.in_opposing_lane(pos);
        if opp && !self.opposing {
            raw.push(RawEvent::OpposingLane);
        }
        self.opposing = opp;

        for (i, l) in self.data.scenario.lights.iter().enumerate() {
            if l.stop_line.crossed(prev, pos) {
                raw.push(RawEvent::StopLineCrossed {
                    light: i,
                    phase: self.clocks[i].phase(self.tick),
                });
            }
        }

        let speed = self.ego.state.speed;
        for (i, sign) in self.data.scenario.signs.iter().enumerate() {
            let on = obb_overlap(&ego_box, &sign.trigger_area);
            match (on, self.on_sign[i]) {
                (true, None) => self.on_sign[i] = Some(speed),
                (true, Some(m)) => self.on_sign[i] = Some(m.min(speed)),
                (false, Some(m)) => {
                    raw.push(RawEvent::StopSignPassed { sign: i, min_speed: m });
                    self.on_sign[i] = None;
                }
                (false, None) => {}
            }
        }
    }

    /// Whether `p` is inside a non-intersection lane whose direction opposes the
    /// route at the current progress.
    pub fn in_opposing_lane(&self, p: Point) -> bool {
        let map = &self.data.map;
        if map.in_intersection(p).is_some() {
            return false;
        }
        let rp = self.tracker.project(&self.data.route, &Pose::new(p.x, p.y, 0.0));
        let route_dir = self.data.route.path.tangent_at(rp.s);
        map.lanes.iter().enumerate().any(|(i, lane)| {
            if map.is_connector(i) {
                return false;
            }
            let pr = lane.project(p);
            pr.s > 0.0
                && pr.s < lane.length()
                && pr.lateral.abs() < 0.5 * map.lane_width
                && lane.tangent_at(pr.s).dot(route_dir) < -0.5
        })
    }
}
