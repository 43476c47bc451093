//! Downstream controllers turning policy outputs into actuation commands.
//!
//! Two output representations are supported: time-spaced waypoints, whose
//! spacing carries the speed, and a distance-spaced path paired with a
//! distribution over the four target-speed classes.

mod pid;
mod stop_buffer;

pub use pid::{pid_step, Pid, PidGains, PidState};
pub use stop_buffer::{stop_sign_buffer_step, StopSignBuffer};

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlCommand, VehicleState};
use crate::geometry::Vec2;
use crate::scalar::Real;

pub const WAYPOINT_COUNT: usize = 8;
pub const WAYPOINT_SPACING_S: f64 = 0.25;
pub const PATH_COUNT: usize = 10;
pub const SPEED_CLASS_COUNT: usize = 4;
/// Target-speed classes in km/h, index 3 is the stop class.
pub const SPEED_CLASSES_KMH: [f64; SPEED_CLASS_COUNT] = [29.0, 18.0, 7.0, 0.0];
pub const STOP_CLASS: usize = 3;

/// Speed of class `i` in m/s.
pub fn class_speed<T: Real>(i: usize) -> T {
    T::lit(SPEED_CLASSES_KMH[i] / 3.6)
}

/// Eight future ego-frame positions spaced 250 ms apart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaypointPlan<T> {
    pub points: [Vec2<T>; WAYPOINT_COUNT],
}

/// Ten ego-frame path points spaced 1 m apart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPlan<T> {
    pub points: [Vec2<T>; PATH_COUNT],
}

/// Probabilities over the classes (29, 18, 7, 0) km/h.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedDistribution<T> {
    pub probs: [T; SPEED_CLASS_COUNT],
}

impl<T: Real> SpeedDistribution<T> {
    /// Normalizes non-negative weights. Returns `None` when they sum to zero or
    /// contain negative / non-finite entries.
    pub fn new(weights: [T; SPEED_CLASS_COUNT]) -> Option<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return None;
        }
        let total = weights.iter().fold(T::zero(), |a, &b| a + b);
        if total <= T::zero() {
            return None;
        }
        Some(SpeedDistribution {
            probs: weights.map(|w| w / total),
        })
    }

    pub fn one_hot(class: usize) -> Self {
        let mut probs = [T::zero(); SPEED_CLASS_COUNT];
        probs[class] = T::one();
        SpeedDistribution { probs }
    }

    /// `(1 - w) * self + w * other`.
    pub fn mix(&self, other: &Self, w: T) -> Self {
        let mut probs = self.probs;
        for (p, q) in probs.iter_mut().zip(other.probs) {
            *p = (T::one() - w) * *p + w * q;
        }
        SpeedDistribution { probs }
    }

    /// Most likely class; ties resolve to the faster class.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..SPEED_CLASS_COUNT {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedMode {
    /// Confidence-weighted average of the moving classes.
    #[default]
    Weighted,
    /// Speed of the most likely class.
    Argmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig<T> {
    /// Aim distance below `aim_switch_speed` (m).
    pub aim_slow: T,
    /// Aim distance at or above `aim_switch_speed` (m).
    pub aim_fast: T,
    pub aim_switch_speed: T,
    /// Stop-class probability at which the path controller brakes.
    pub brake_threshold: T,
    /// Subtracted from the predicted target speed (m/s).
    pub inference_speed_offset: T,
    /// Waypoint-derived target speeds below this brake (m/s).
    pub stop_epsilon: T,
    /// Brake when driving this much above the target speed (m/s).
    pub overspeed_margin: T,
    pub speed_mode: SpeedMode,
    pub lateral: PidGains<T>,
    pub longitudinal: PidGains<T>,
}

impl<T: Real> Default for ControllerConfig<T> {
    fn default() -> Self {
        ControllerConfig {
            aim_slow: T::lit(2.25),
            aim_fast: T::lit(3.0),
            aim_switch_speed: T::lit(5.5),
            brake_threshold: T::lit(0.5),
            inference_speed_offset: T::lit(2.0),
            stop_epsilon: T::lit(0.1),
            overspeed_margin: T::lit(0.3),
            speed_mode: SpeedMode::Weighted,
            lateral: PidGains::lateral(),
            longitudinal: PidGains::longitudinal(),
        }
    }
}

impl<T: Real> ControllerConfig<T> {
    /// Preset for dense traffic.
    pub fn dense() -> Self {
        ControllerConfig {
            brake_threshold: T::lit(0.33),
            ..Self::default()
        }
    }

    pub fn aim_distance(&self, speed: T) -> T {
        if speed < self.aim_switch_speed {
            self.aim_slow
        } else {
            self.aim_fast
        }
    }
}

/// First point at least `min_dist` from the origin, else the last point.
pub fn select_aim_point<T: Real>(points: &[Vec2<T>], min_dist: T) -> Vec2<T> {
    points
        .iter()
        .copied()
        .find(|p| p.norm() >= min_dist)
        .or_else(|| points.last().copied())
        .unwrap_or_else(Vec2::zero)
}

/// Steering PID acting on the bearing of an ego-frame aim point.
#[derive(Clone, Copy, Debug)]
pub struct LateralController<T> {
    pub pid: Pid<T>,
}

impl<T: Real> LateralController<T> {
    pub fn new(gains: PidGains<T>) -> Self {
        LateralController {
            pid: Pid::new(gains),
        }
    }

    /// Steering command toward `aim` (ego frame). A degenerate aim point at the
    /// origin has no bearing and yields zero error.
    pub fn steer_towards(&mut self, aim: Vec2<T>, dt: T) -> T {
        let bearing = if aim.norm() < T::lit(1e-3) {
            T::zero()
        } else {
            aim.angle()
        };
        // positive bearing is to the left, positive steer is to the right
        self.pid.step(-bearing, dt).max(-T::one()).min(T::one())
    }
}

/// Throttle PID toward a target speed plus the brake rules.
#[derive(Clone, Copy, Debug)]
pub struct LongitudinalController<T> {
    pub pid: Pid<T>,
    pub overspeed_margin: T,
}

impl<T: Real> LongitudinalController<T> {
    pub fn new(gains: PidGains<T>, overspeed_margin: T) -> Self {
        LongitudinalController {
            pid: Pid::new(gains),
            overspeed_margin,
        }
    }

    /// Returns `(throttle, brake)`.
    pub fn command(&mut self, target: T, speed: T, dt: T) -> (T, bool) {
        let stop = T::lit(0.05);
        let out = self.pid.step(target - speed, dt);
        if target < stop {
            self.pid.reset();
            return (T::zero(), speed > stop);
        }
        if speed > target + self.overspeed_margin {
            return (T::zero(), true);
        }
        (out.max(T::zero()).min(T::one()), false)
    }
}

/// Target speed encoded by a waypoint plan: distance between the 0.5 s and 1.0 s
/// points divided by 0.5 s.
pub fn waypoint_target_speed<T: Real>(plan: &WaypointPlan<T>) -> T {
    (plan.points[3] - plan.points[1]).norm() / T::lit(0.5)
}

/// Weighted or argmax target speed and brake flag for a class distribution.
pub fn confidence_weighted_speed<T: Real>(
    dist: &SpeedDistribution<T>,
    cfg: &ControllerConfig<T>,
) -> (T, bool) {
    let raw = match cfg.speed_mode {
        SpeedMode::Argmax => {
            let c = dist.argmax();
            if c == STOP_CLASS {
                return (T::zero(), true);
            }
            class_speed::<T>(c)
        }
        SpeedMode::Weighted => {
            if dist.probs[STOP_CLASS] >= cfg.brake_threshold {
                return (T::zero(), true);
            }
            let mut mass = T::zero();
            let mut acc = T::zero();
            for i in 0..STOP_CLASS {
                mass = mass + dist.probs[i];
                acc = acc + dist.probs[i] * class_speed::<T>(i);
            }
            if mass <= T::zero() {
                return (T::zero(), true);
            }
            acc / mass
        }
    };
    ((raw - cfg.inference_speed_offset).max(T::zero()), false)
}

/// Controller for entangled waypoint outputs.
#[derive(Clone, Copy, Debug)]
pub struct WaypointController<T> {
    pub cfg: ControllerConfig<T>,
    lateral: LateralController<T>,
    longitudinal: LongitudinalController<T>,
}

impl<T: Real> WaypointController<T> {
    pub fn new(cfg: ControllerConfig<T>) -> Self {
        WaypointController {
            lateral: LateralController::new(cfg.lateral),
            longitudinal: LongitudinalController::new(cfg.longitudinal, cfg.overspeed_margin),
            cfg,
        }
    }

    pub fn control(&mut self, plan: &WaypointPlan<T>, state: &VehicleState<T>, dt: T) -> ControlCommand<T> {
        let aim = select_aim_point(&plan.points, self.cfg.aim_distance(state.speed));
        let steer = self.lateral.steer_towards(aim, dt);
        let target = waypoint_target_speed(plan);
        if target < self.cfg.stop_epsilon {
            self.longitudinal.pid.reset();
            return ControlCommand::new(steer, T::zero(), true);
        }
        let (throttle, brake) = self.longitudinal.command(target, state.speed, dt);
        ControlCommand::new(steer, throttle, brake)
    }
}

/// Controller for the disentangled path + target-speed output.
#[derive(Clone, Copy, Debug)]
pub struct PathSpeedController<T> {
    pub cfg: ControllerConfig<T>,
    lateral: LateralController<T>,
    longitudinal: LongitudinalController<T>,
}

impl<T: Real> PathSpeedController<T> {
    pub fn new(cfg: ControllerConfig<T>) -> Self {
        PathSpeedController {
            lateral: LateralController::new(cfg.lateral),
            longitudinal: LongitudinalController::new(cfg.longitudinal, cfg.overspeed_margin),
            cfg,
        }
    }

    pub fn control(
        &mut self,
        plan: &PathPlan<T>,
        dist: &SpeedDistribution<T>,
        state: &VehicleState<T>,
        dt: T,
    ) -> ControlCommand<T> {
        let aim = select_aim_point(&plan.points, self.cfg.aim_distance(state.speed));
        let steer = self.lateral.steer_towards(aim, dt);
        let (target, brake) = confidence_weighted_speed(dist, &self.cfg);
        if brake {
            self.longitudinal.pid.reset();
            return ControlCommand::new(steer, T::zero(), true);
        }
        let (throttle, brake) = self.longitudinal.command(target, state.speed, dt);
        ControlCommand::new(steer, throttle, brake)
    }
}

/// Stateless convenience wrapper around [`WaypointController::control`].
pub fn waypoint_controller<T: Real>(
    plan: &WaypointPlan<T>,
    state: &VehicleState<T>,
    cfg: &ControllerConfig<T>,
    dt: T,
) -> ControlCommand<T> {
    WaypointController::new(*cfg).control(plan, state, dt)
}

/// Stateless convenience wrapper around [`PathSpeedController::control`].
pub fn path_speed_controller<T: Real>(
    plan: &PathPlan<T>,
    dist: &SpeedDistribution<T>,
    state: &VehicleState<T>,
    cfg: &ControllerConfig<T>,
    dt: T,
) -> ControlCommand<T> {
    PathSpeedController::new(*cfg).control(plan, dist, state, dt)
}
