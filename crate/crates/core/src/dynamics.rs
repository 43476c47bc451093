//! Kinematic bicycle model and trajectory unrolling.
//!
//! The state is referenced at the vehicle's center of gravity. Steering commands
//! follow the vehicle convention (positive steers right, i.e. clockwise) and are
//! mapped to a counter-clockwise wheel angle `delta = -steer * max_steer` before
//! entering the model. Within one step the wheel angle and acceleration are
//! held, so the vehicle moves along a circular arc whose length follows the
//! constant-acceleration speed profile; both are integrated exactly.

use serde::{Deserialize, Serialize};

use crate::geometry::{Obb, Pose2D, Vec2};
use crate::scalar::{sinc, wrap_angle, Real};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleState<T> {
    pub pose: Pose2D<T>,
    /// m/s, never negative.
    pub speed: T,
}

impl<T: Real> VehicleState<T> {
    pub fn new(x: T, y: T, yaw: T, speed: T) -> Self {
        VehicleState {
            pose: Pose2D::new(x, y, yaw),
            speed: speed.max(T::zero()),
        }
    }

    #[inline]
    pub fn position(&self) -> Vec2<T> {
        self.pose.position()
    }
}

/// Geometry and actuation limits of a vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicycleParams<T> {
    /// Distance from the center of gravity to the front axle (m).
    pub front_axle: T,
    /// Distance from the center of gravity to the rear axle (m).
    pub rear_axle: T,
    /// Wheel angle reached at `|steer| = 1` (rad).
    pub max_steer: T,
    pub length: T,
    pub width: T,
    /// Acceleration at full throttle (m/s^2).
    pub max_accel: T,
    /// Deceleration magnitude while braking (m/s^2).
    pub brake_decel: T,
    pub max_speed: T,
}

impl<T: Real> BicycleParams<T> {
    pub fn car() -> Self {
        BicycleParams {
            front_axle: T::lit(1.3),
            rear_axle: T::lit(1.3),
            max_steer: T::lit(1.22),
            length: T::lit(4.5),
            width: T::lit(2.0),
            max_accel: T::lit(3.0),
            brake_decel: T::lit(6.0),
            max_speed: T::lit(15.0),
        }
    }

    pub fn pedestrian() -> Self {
        BicycleParams {
            front_axle: T::lit(0.25),
            rear_axle: T::lit(0.25),
            max_steer: T::lit(1.22),
            length: T::lit(0.6),
            width: T::lit(0.6),
            max_accel: T::lit(2.0),
            brake_decel: T::lit(4.0),
            max_speed: T::lit(3.0),
        }
    }

    pub fn cyclist() -> Self {
        BicycleParams {
            front_axle: T::lit(0.55),
            rear_axle: T::lit(0.55),
            max_steer: T::lit(1.0),
            length: T::lit(1.8),
            width: T::lit(0.8),
            max_accel: T::lit(2.0),
            brake_decel: T::lit(5.0),
            max_speed: T::lit(8.0),
        }
    }

    pub fn wheelbase(&self) -> T {
        self.front_axle + self.rear_axle
    }

    pub fn bbox(&self, pose: &Pose2D<T>) -> Obb<T> {
        Obb::from_pose(pose, self.length, self.width)
    }
}

impl<T: Real> Default for BicycleParams<T> {
    fn default() -> Self {
        BicycleParams::car()
    }
}

/// Normalized actuation command.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand<T> {
    /// `[-1, 1]`, positive steers right.
    pub steer: T,
    /// `[0, 1]`.
    pub throttle: T,
    /// Overrides throttle.
    pub brake: bool,
}

impl<T: Real> ControlCommand<T> {
    pub fn new(steer: T, throttle: T, brake: bool) -> Self {
        ControlCommand {
            steer: steer.max(-T::one()).min(T::one()),
            throttle: throttle.max(T::zero()).min(T::one()),
            brake,
        }
    }

    pub fn coast() -> Self {
        ControlCommand::new(T::zero(), T::zero(), false)
    }

    pub fn full_brake() -> Self {
        ControlCommand::new(T::zero(), T::zero(), true)
    }

    /// Counter-clockwise wheel angle produced by this command.
    pub fn wheel_angle(&self, params: &BicycleParams<T>) -> T {
        -self.steer.max(-T::one()).min(T::one()) * params.max_steer
    }

    /// Longitudinal acceleration produced by this command.
    pub fn acceleration(&self, params: &BicycleParams<T>) -> T {
        if self.brake {
            -params.brake_decel
        } else {
            self.throttle.max(T::zero()).min(T::one()) * params.max_accel
        }
    }
}

/// Advances the pose along the arc driven at constant `speed` and wheel angle `delta`.
pub fn integrate_pose<T: Real>(
    pose: &Pose2D<T>,
    speed: T,
    delta: T,
    params: &BicycleParams<T>,
    dt: T,
) -> Pose2D<T> {
    let beta = (params.rear_axle / params.wheelbase() * delta.tan()).atan();
    let yaw_rate = speed / params.rear_axle * beta.sin();
    let dyaw = yaw_rate * dt;
    let half = dyaw * T::lit(0.5);
    let chord = speed * dt * sinc(half);
    let dir = pose.yaw + beta + half;
    let (s, c) = dir.sin_cos();
    Pose2D {
        x: pose.x + chord * c,
        y: pose.y + chord * s,
        yaw: wrap_angle(pose.yaw + dyaw),
    }
}

/// One kinematic bicycle step with an explicit wheel angle and acceleration.
pub fn step_with_angle<T: Real>(
    state: &VehicleState<T>,
    delta: T,
    accel: T,
    params: &BicycleParams<T>,
    dt: T,
) -> VehicleState<T> {
    let delta = delta.max(-params.max_steer).min(params.max_steer);
    let v0 = state.speed;
    let raw = v0 + accel * dt;
    let speed = raw.max(T::zero()).min(params.max_speed);
    let half = T::lit(0.5);
    let dist = if raw < T::zero() {
        // stops within the step
        half * v0 * v0 / -accel
    } else if raw > params.max_speed && accel > T::zero() && v0 < params.max_speed {
        let t1 = (params.max_speed - v0) / accel;
        half * (v0 + params.max_speed) * t1 + params.max_speed * (dt - t1)
    } else {
        half * (v0 + speed) * dt
    };
    let pose = integrate_pose(&state.pose, dist / dt, delta, params, dt);
    VehicleState { pose, speed }
}

/// One kinematic bicycle step driven by a normalized command.
pub fn step_bicycle<T: Real>(
    state: &VehicleState<T>,
    cmd: &ControlCommand<T>,
    params: &BicycleParams<T>,
    dt: T,
) -> VehicleState<T> {
    step_with_angle(
        state,
        cmd.wheel_angle(params),
        cmd.acceleration(params),
        params,
        dt,
    )
}

/// Folds [`step_bicycle`] over `cmds`; the result has `cmds.len() + 1` states.
pub fn unroll<T: Real>(
    state: &VehicleState<T>,
    cmds: &[ControlCommand<T>],
    params: &BicycleParams<T>,
    dt: T,
) -> Vec<VehicleState<T>> {
    let mut out = Vec::with_capacity(cmds.len() + 1);
    out.push(*state);
    let mut cur = *state;
    for cmd in cmds {
        cur = step_bicycle(&cur, cmd, params, dt);
        out.push(cur);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fine_oracle(
        mut x: f64,
        mut y: f64,
        mut yaw: f64,
        v: f64,
        delta: f64,
        lf: f64,
        lr: f64,
        t: f64,
    ) -> (f64, f64, f64) {
        // Plain forward Euler at a tiny step, written out independently of the model code.
        let h = 1e-4;
        let n = (t / h).round() as usize;
        let beta = (lr / (lf + lr) * delta.tan()).atan();
        for _ in 0..n {
            x += v * (yaw + beta).cos() * h;
            y += v * (yaw + beta).sin() * h;
            yaw += v / lr * beta.sin() * h;
        }
        (x, y, yaw)
    }

    #[test]
    fn straight_step() {
        let s = VehicleState::<f64>::new(0.0, 0.0, 0.0, 4.0);
        let n = step_bicycle(&s, &ControlCommand::coast(), &BicycleParams::car(), 0.05);
        assert!((n.pose.x - 0.2).abs() < 1e-12);
        assert_eq!(n.pose.y, 0.0);
        assert_eq!(n.pose.yaw, 0.0);
        assert_eq!(n.speed, 4.0);
    }

    #[test]
    fn zero_speed_is_fixed_point() {
        let s = VehicleState::new(0.0, 0.0, 0.0, 0.0);
        for steer in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            let n = step_bicycle(
                &s,
                &ControlCommand::new(steer, 0.0, false),
                &BicycleParams::car(),
                0.05,
            );
            assert_eq!(n.pose, s.pose);
        }
    }

    #[test]
    fn coarse_matches_fine_oracle_after_one_second() {
        let p = BicycleParams::car();
        let s = VehicleState::new(0.0, 0.0, 0.0, 5.0);
        let mut cur = s;
        for _ in 0..20 {
            cur = step_with_angle(&cur, 0.2, 0.0, &p, 0.05);
        }
        let (x, y, yaw) = fine_oracle(0.0, 0.0, 0.0, 5.0, 0.2, 1.3, 1.3, 1.0);
        assert!((cur.pose.x - x).abs().hypot(cur.pose.y - y) < 1e-3);
        assert!((cur.pose.yaw - yaw).abs() < 1e-3);
    }

    #[test]
    fn forty_steps_heading_matches_oracle() {
        let p = BicycleParams::car();
        let cmd = ControlCommand::new(-0.3, 0.0, false);
        let traj = unroll(&VehicleState::new(0.0, 0.0, 0.0, 6.0), &vec![cmd; 40], &p, 0.05);
        assert_eq!(traj.len(), 41);
        let (_, _, yaw) = fine_oracle(0.0, 0.0, 0.0, 6.0, 0.3 * 1.22, 1.3, 1.3, 2.0);
        assert!((traj[40].pose.yaw - crate::scalar::wrap_angle(yaw)).abs() < 1e-3);
    }

    #[test]
    fn unroll_empty_and_straight() {
        let p = BicycleParams::car();
        let s = VehicleState::<f64>::new(1.0, 2.0, 0.5, 3.0);
        assert_eq!(unroll(&s, &[], &p, 0.05), vec![s]);
        let traj = unroll(&s, &[ControlCommand::coast(); 10], &p, 0.05);
        for w in traj.windows(2) {
            let d = w[1].position() - w[0].position();
            assert!((d.norm() - 0.15).abs() < 1e-12);
            assert!(d.cross(s.pose.heading()).abs() < 1e-12);
        }
    }

    #[test]
    fn brake_overrides_throttle_and_clamps_at_zero() {
        let p = BicycleParams::car();
        let s = VehicleState::<f64>::new(0.0, 0.0, 0.0, 0.2);
        let n = step_bicycle(&s, &ControlCommand::new(0.0, 1.0, true), &p, 0.05);
        assert_eq!(n.speed, 0.0);
        let n = step_bicycle(&s, &ControlCommand::new(0.0, 1.0, false), &p, 0.05);
        assert!((n.speed - 0.35).abs() < 1e-12);
    }

    #[test]
    fn constant_acceleration_distance() {
        let p = BicycleParams::car();
        let s = VehicleState::<f64>::new(0.0, 0.0, 0.0, 4.0);
        let n = step_bicycle(&s, &ControlCommand::new(0.0, 1.0, false), &p, 0.05);
        assert!((n.pose.x - (4.0 * 0.05 + 0.5 * 3.0 * 0.0025)).abs() < 1e-12);
        // stops after 0.2 / 6 s, covering v^2 / 2a
        let s = VehicleState::<f64>::new(0.0, 0.0, 0.0, 0.2);
        let n = step_bicycle(&s, &ControlCommand::full_brake(), &p, 0.05);
        assert!((n.pose.x - 0.04 / 12.0).abs() < 1e-12);
        // saturates at the speed limit mid-step
        let s = VehicleState::<f64>::new(0.0, 0.0, 0.0, 14.95);
        let n = step_bicycle(&s, &ControlCommand::new(0.0, 1.0, false), &p, 0.05);
        let t1: f64 = 0.05 / 3.0;
        assert!((n.pose.x - (14.95 * t1 + 1.5 * t1 * t1 + 15.0 * (0.05 - t1))).abs() < 1e-12);
    }

    #[test]
    fn accelerating_turn_matches_fine_oracle() {
        let p = BicycleParams::car();
        let mut cur = VehicleState::new(0.0, 0.0, 0.0, 2.0);
        for _ in 0..20 {
            cur = step_with_angle(&cur, 0.15, 3.0, &p, 0.05);
        }
        let h = 1e-5;
        let beta = (0.5 * 0.15f64.tan()).atan();
        let (mut x, mut y, mut yaw, mut v) = (0.0f64, 0.0f64, 0.0f64, 2.0f64);
        for _ in 0..100_000 {
            let vm = v + 1.5 * h;
            x += vm * (yaw + beta).cos() * h;
            y += vm * (yaw + beta).sin() * h;
            yaw += vm / 1.3 * beta.sin() * h;
            v += 3.0 * h;
        }
        assert!((cur.pose.x - x).hypot(cur.pose.y - y) < 1e-3);
        assert!((cur.speed - v).abs() < 1e-9);
    }

    #[test]
    fn positive_steer_turns_right() {
        let p = BicycleParams::car();
        let s = VehicleState::new(0.0, 0.0, 0.0, 5.0);
        let n = step_bicycle(&s, &ControlCommand::new(0.5, 0.0, false), &p, 0.05);
        assert!(n.pose.yaw < 0.0);
        assert!(n.pose.y < 0.0);
    }

    #[test]
    fn f32_step_tracks_f64() {
        let p32 = BicycleParams::<f32>::car();
        let p64 = BicycleParams::<f64>::car();
        let mut a = VehicleState::<f32>::new(0.0, 0.0, 0.0, 5.0);
        let mut b = VehicleState::<f64>::new(0.0, 0.0, 0.0, 5.0);
        for _ in 0..20 {
            a = step_bicycle(&a, &ControlCommand::new(0.2, 0.3, false), &p32, 0.05);
            b = step_bicycle(&b, &ControlCommand::new(0.2, 0.3, false), &p64, 0.05);
        }
        assert!((a.pose.x as f64 - b.pose.x).abs() < 1e-4);
        assert!((a.pose.y as f64 - b.pose.y).abs() < 1e-4);
    }
}
