//! Closed-loop episode runner.
//!
//! A [`Pilot`] turns the current world into a control command. The privileged
//! expert actuates directly; every other policy goes through the waypoint or
//! path + speed controller that matches its output, optionally with the
//! stop-sign buffer in front of it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::controllers::{ControllerConfig, PathSpeedController, StopSignBuffer, WaypointController};
use crate::expert::{Expert, ExpertConfig};
use crate::metrics::{DetectorConfig, EpisodeResult, InfractionDetector, PenaltyTable, TickSample};
use crate::policies::{
    nav_command, NavCommand, NcConfig, NcPolicy, Policy, PolicyOutput, ShortcutConfig, ShortcutPolicy,
    UncertainConfig, UncertainSpeedPolicy, ExpertPolicy, Representation,
};
use crate::world::{Prepared, RawEvent, SimConfig, TimedEvent, World};
use crate::{Command, Point, Pose, State};

/// What a pilot did in one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PilotStep {
    pub cmd: Command,
    /// Speed class the pilot is aiming for, when it has one.
    pub class: Option<usize>,
}

pub trait Pilot: Send {
    fn drive(&mut self, world: &World) -> PilotStep;
}

/// The expert with privileged actuation.
#[derive(Clone, Debug)]
pub struct ExpertPilot(pub Expert);

impl Pilot for ExpertPilot {
    fn drive(&mut self, world: &World) -> PilotStep {
        let (cmd, d) = self.0.act(world);
        PilotStep {
            cmd,
            class: Some(d.speed_class_index),
        }
    }
}

/// A policy behind the controllers.
pub struct PolicyPilot {
    pub policy: Box<dyn Policy>,
    waypoint: WaypointController<f64>,
    path: PathSpeedController<f64>,
    buffer: Option<StopSignBuffer<f64>>,
    prev_pose: Option<Pose>,
}

impl PolicyPilot {
    pub fn new(policy: Box<dyn Policy>, controller: ControllerConfig<f64>, stop_buffer: bool) -> Self {
        PolicyPilot {
            policy,
            waypoint: WaypointController::new(controller),
            path: PathSpeedController::new(controller),
            buffer: stop_buffer.then(StopSignBuffer::new),
            prev_pose: None,
        }
    }
}

impl Pilot for PolicyPilot {
    fn drive(&mut self, world: &World) -> PilotStep {
        let step = self.policy.act(world);
        let state = world.ego.state;
        let dt = world.cfg.dt;
        let (mut cmd, class) = match &step.output {
            PolicyOutput::Waypoints(plan) => (self.waypoint.control(plan, &state, dt), None),
            PolicyOutput::Path(plan, dist) => (self.path.control(plan, dist, &state, dt), Some(dist.argmax())),
        };
        let pose = state.pose;
        if let Some(buffer) = self.buffer.as_mut() {
            let motion = self.prev_pose.map_or_else(Pose::identity, |p| p.relative(&pose));
            let ego_box = world.ego.params.bbox(&Pose::identity());
            if buffer.step(&step.signs, &motion, state.speed, &ego_box) {
                cmd = Command::new(cmd.steer, 0.0, true);
            }
        }
        self.prev_pose = Some(pose);
        PilotStep { cmd, class }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PolicyKind {
    /// Privileged expert, no controller in between.
    Expert,
    /// Expert plans rendered as policy outputs.
    ExpertPlanner { representation: Representation },
    Shortcut(ShortcutConfig),
    Nc(NcConfig),
    Uncertain(UncertainConfig),
}

/// Everything needed to build a pilot for one episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotSpec {
    pub policy: PolicyKind,
    pub expert: ExpertConfig,
    pub controller: ControllerConfig<f64>,
    pub stop_buffer: bool,
}

impl PilotSpec {
    pub fn new(policy: PolicyKind) -> Self {
        PilotSpec {
            policy,
            expert: ExpertConfig::default(),
            controller: ControllerConfig::default(),
            stop_buffer: false,
        }
    }

    pub fn expert() -> Self {
        Self::new(PolicyKind::Expert)
    }

    pub fn build(&self, seed: u64) -> Box<dyn Pilot> {
        let policy: Box<dyn Policy> = match self.policy {
            PolicyKind::Expert => return Box::new(ExpertPilot(Expert::new(self.expert))),
            PolicyKind::ExpertPlanner { representation } => Box::new(ExpertPolicy::new(self.expert, representation)),
            PolicyKind::Shortcut(cfg) => Box::new(ShortcutPolicy::new(cfg, self.expert)),
            PolicyKind::Nc(cfg) => Box::new(NcPolicy::new(cfg, self.expert)),
            PolicyKind::Uncertain(cfg) => Box::new(UncertainSpeedPolicy::new(cfg, self.expert, seed)),
        };
        Box::new(PolicyPilot::new(policy, self.controller, self.stop_buffer))
    }
}

/// Seed of evaluation `eval` of training seed `seed`.
pub fn episode_seed(seed: u64, eval: u32) -> u64 {
    seed * 1000 + eval as u64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub sim: SimConfig,
    pub penalties: PenaltyTable,
    /// Keep a per-tick trace.
    pub record: bool,
}

/// State of the simulation after one tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub time: f64,
    pub state: State,
    pub s: f64,
    pub lateral: f64,
    /// Speed class chosen by the pilot for the step leading here.
    pub class: Option<usize>,
    /// Next target point (global) and command seen when choosing it.
    pub target_point: Point,
    pub command: NavCommand,
}

#[derive(Clone, Debug)]
pub struct Episode {
    pub result: EpisodeResult,
    /// Raw simulator events, in time order.
    pub raw: Vec<TimedEvent>,
    /// Initial frame followed by one frame per tick when recording.
    pub trace: Vec<Frame>,
    /// Ticks during which the ego was inside an opposing lane.
    pub opposing_ticks: u32,
}

impl Episode {
    pub fn entered_opposing_lane(&self) -> bool {
        self.raw.iter().any(|e| matches!(e.event, RawEvent::OpposingLane))
    }
}

fn frame(world: &World, class: Option<usize>) -> Frame {
    let route = world.route();
    Frame {
        time: world.time,
        state: world.ego.state,
        s: world.progress.s,
        lateral: world.progress.lateral,
        class,
        target_point: route
            .next_target_point(world.progress.s)
            .unwrap_or_else(|| route.path.end()),
        command: nav_command(world),
    }
}

/// Runs one episode until the route is completed or a terminal infraction.
pub fn run_episode(world: World, pilot: &mut dyn Pilot, seed: u64, eval: u32, cfg: &EpisodeConfig) -> Episode {
    let mut world = world;
    let limit = world.cfg.max_episode_time.unwrap_or_else(|| world.data.time_limit());
    let mut detector = InfractionDetector::new(DetectorConfig::new(limit));
    let mut raw = Vec::new();
    let mut trace = Vec::new();
    let mut opposing_ticks = 0;
    if cfg.record {
        trace.push(frame(&world, None));
    }
    loop {
        let tp = world
            .route()
            .next_target_point(world.progress.s)
            .unwrap_or_else(|| world.route().path.end());
        let command = nav_command(&world);
        let step = pilot.drive(&world);
        let events = world.tick(&step.cmd);
        if world.in_opposing_lane(world.ego.state.position()) {
            opposing_ticks += 1;
        }
        let sample = TickSample {
            time: world.time,
            route_s: world.progress.s,
            lateral: world.progress.lateral,
            speed: world.ego.state.speed,
        };
        let terminal = detector.observe(&sample, &events);
        raw.extend(events);
        if cfg.record {
            let mut f = frame(&world, step.class);
            f.target_point = tp;
            f.command = command;
            trace.push(f);
        }
        if terminal.is_some() || world.progress.completed_fraction >= 1.0 {
            break;
        }
    }
    let result = EpisodeResult::new(
        &world.data.scenario.name,
        seed,
        eval,
        100.0 * world.progress.completed_fraction,
        detector.into_events(),
        world.progress.s / 1000.0,
        world.time,
        &cfg.penalties,
    );
    Episode {
        result,
        raw,
        trace,
        opposing_ticks,
    }
}

/// Builds the world and pilot for (`seed`, `eval`) and runs the episode.
pub fn run(data: &Arc<Prepared>, spec: &PilotSpec, seed: u64, eval: u32, cfg: &EpisodeConfig) -> Episode {
    let es = episode_seed(seed, eval);
    let sim = SimConfig {
        rng_seed: es,
        ..cfg.sim
    };
    let world = World::new(Arc::clone(data), sim);
    let mut pilot = spec.build(es);
    run_episode(world, pilot.as_mut(), seed, eval, cfg)
}
