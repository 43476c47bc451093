use serde::{Deserialize, Serialize};

use crate::dynamics::step_bicycle;
use crate::geometry::global_to_local;
use crate::world::polyline::Polyline;
use crate::world::signals::{LightClock, Phase};
use crate::{Box2, Command, Params, State};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Vehicle,
    Pedestrian,
    Cyclist,
}

impl ActorKind {
    pub fn params(self) -> Params {
        match self {
            ActorKind::Vehicle => Params::car(),
            ActorKind::Pedestrian => Params::pedestrian(),
            ActorKind::Cyclist => Params::cyclist(),
        }
    }
}

/// Holds an actor in place until a condition is met.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "until")]
pub enum Gate {
    /// Released `delay` seconds after the given light first shows red.
    LightRed { light: usize, delay: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Behavior {
    /// Brakes to a standstill and stays there.
    Static,
    /// Piecewise-constant command schedule, keyed by time since activation.
    Keyframes(Vec<(f64, Command)>),
    /// Pure-pursuit path following with a piecewise-constant speed profile.
    FollowPath {
        path: Polyline,
        profile: Vec<(f64, f64)>,
        despawn_at_end: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Actor {
    pub id: u32,
    pub kind: ActorKind,
    pub state: State,
    pub params: Params,
    pub behavior: Behavior,
    pub gate: Option<Gate>,
    /// Command applied on the latest tick; forecasts hold it constant.
    pub last_cmd: Command,
    /// Time the behavior started, once released.
    pub started: Option<f64>,
    /// Time the gating light has been red.
    red_for: f64,
    pub active: bool,
}

/// Profile value in force `t` seconds after activation.
pub fn profile_speed(profile: &[(f64, f64)], t: f64) -> f64 {
    profile
        .iter()
        .take_while(|k| k.0 <= t)
        .last()
        .or(profile.first())
        .map_or(0.0, |k| k.1)
}

fn speed_command(target: f64, speed: f64, params: &Params) -> (f64, bool) {
    if target < 0.05 {
        return (0.0, speed > 0.0);
    }
    if speed > target + 0.2 {
        return (0.0, true);
    }
    (((target - speed) * 2.0 / params.max_accel).clamp(0.0, 1.0), false)
}

impl Actor {
    pub fn new(id: u32, kind: ActorKind, state: State, behavior: Behavior) -> Self {
        Actor {
            id,
            kind,
            state,
            params: kind.params(),
            behavior,
            gate: None,
            last_cmd: Command::coast(),
            started: None,
            red_for: 0.0,
            active: true,
        }
    }

    pub fn bbox(&self) -> Box2 {
        self.params.bbox(&self.state.pose)
    }

    fn released(&mut self, time: f64, clocks: &[LightClock], tick: u64, dt: f64) -> bool {
        if self.started.is_some() {
            return true;
        }
        let ready = match self.gate {
            None => true,
            Some(Gate::LightRed { light, delay }) => {
                let red = clocks.get(light).is_some_and(|c| c.phase(tick) == Phase::Red);
                self.red_for = if red { self.red_for + dt } else { 0.0 };
                red && self.red_for >= delay.max(dt) - 1e-9
            }
        };
        if ready {
            self.started = Some(time);
        }
        ready
    }

    /// Command the scripted behavior issues at `time`.
    pub fn command(&mut self, time: f64, clocks: &[LightClock], tick: u64, dt: f64) -> Command {
        if !self.released(time, clocks, tick, dt) {
            return Command::full_brake();
        }
        let t = time - self.started.unwrap_or(time);
        match &self.behavior {
            Behavior::Static => Command::full_brake(),
            Behavior::Keyframes(keys) => keys
                .iter()
                .take_while(|k| k.0 <= t)
                .last()
                .map_or(Command::coast(), |k| k.1),
            Behavior::FollowPath {
                path,
                profile,
                despawn_at_end,
            } => {
                let pr = path.project(self.state.position());
                if pr.s >= path.length() - 0.05 {
                    if *despawn_at_end {
                        self.active = false;
                    }
                    let (_, brake) = speed_command(0.0, self.state.speed, &self.params);
                    return Command::new(0.0, 0.0, brake);
                }
                let lookahead = (2.0 * self.params.wheelbase()).max(1.0 + self.state.speed * 0.5);
                let aim = if pr.s + lookahead >= path.length() {
                    path.end() + path.tangent_at(path.length()) * (pr.s + lookahead - path.length())
                } else {
                    path.point_at(pr.s + lookahead)
                };
                let local = global_to_local(&self.state.pose, aim);
                let ld = local.norm().max(1e-6);
                let alpha = local.angle();
                let delta = (2.0 * self.params.wheelbase() * alpha.sin() / ld).atan();
                let steer = -delta / self.params.max_steer;
                let target = profile_speed(profile, t);
                let (throttle, brake) = speed_command(target, self.state.speed, &self.params);
                Command::new(steer, throttle, brake)
            }
        }
    }

    /// Advances the actor by one tick.
    pub fn step(&mut self, time: f64, clocks: &[LightClock], tick: u64, dt: f64) {
        if !self.active {
            return;
        }
        let cmd = self.command(time, clocks, tick, dt);
        self.last_cmd = cmd;
        self.state = step_bicycle(&self.state, &cmd, &self.params, dt);
    }
}
