use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PidGains<T> {
    pub kp: T,
    pub ki: T,
    pub kd: T,
    /// Absolute bound on the accumulated integral term.
    pub integral_limit: T,
}

impl<T: Real> PidGains<T> {
    pub fn new(kp: T, ki: T, kd: T) -> Self {
        PidGains {
            kp,
            ki,
            kd,
            integral_limit: T::lit(10.0),
        }
    }

    pub fn lateral() -> Self {
        PidGains::new(T::lit(1.0), T::zero(), T::lit(0.1))
    }

    pub fn longitudinal() -> Self {
        PidGains::new(T::lit(1.0), T::lit(0.05), T::zero())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PidState<T> {
    pub integral: T,
    pub prev_error: Option<T>,
}

/// One PID update. The integral includes the current error before the output is
/// formed; the derivative term is zero on the first call.
pub fn pid_step<T: Real>(
    state: &PidState<T>,
    error: T,
    dt: T,
    gains: &PidGains<T>,
) -> (PidState<T>, T) {
    let integral = (state.integral + error * dt)
        .max(-gains.integral_limit)
        .min(gains.integral_limit);
    let derivative = match state.prev_error {
        Some(prev) => (error - prev) / dt,
        None => T::zero(),
    };
    let out = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    (
        PidState {
            integral,
            prev_error: Some(error),
        },
        out,
    )
}

/// PID state bundled with its gains.
#[derive(Clone, Copy, Debug)]
pub struct Pid<T> {
    pub gains: PidGains<T>,
    pub state: PidState<T>,
}

impl<T: Real> Pid<T> {
    pub fn new(gains: PidGains<T>) -> Self {
        Pid {
            gains,
            state: PidState {
                integral: T::zero(),
                prev_error: None,
            },
        }
    }

    pub fn step(&mut self, error: T, dt: T) -> T {
        let (s, out) = pid_step(&self.state, error, dt, &self.gains);
        self.state = s;
        out
    }

    pub fn reset(&mut self) {
        self.state = PidState {
            integral: T::zero(),
            prev_error: None,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_zero_output() {
        let (_, out) = pid_step(&PidState::default(), 0.0, 0.05, &PidGains::new(2.0, 1.0, 0.5));
        assert_eq!(out, 0.0);
    }

    #[test]
    fn proportional_only_on_first_step() {
        let g = PidGains::new(1.7, 0.0, 0.3);
        let (_, out): (_, f64) = pid_step(&PidState::default(), 0.4, 0.05, &g);
        assert!((out - 1.7 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn integral_is_clamped() {
        let mut g = PidGains::new(0.0, 1.0, 0.0);
        g.integral_limit = 0.5;
        let mut pid = Pid::new(g);
        let mut out = 0.0;
        for _ in 0..100 {
            out = pid.step(1.0, 0.1);
        }
        assert_eq!(out, 0.5);
    }

    // Reference discrete PID written as the textbook recurrence, driving a
    // first-order plant x' = x + u * dt.
    #[test]
    fn step_response_matches_reference_sequence() {
        let (kp, ki, kd, dt) = (0.8, 0.3, 0.05, 0.05);
        let g = PidGains::new(kp, ki, kd);
        let mut pid = Pid::new(g);
        let (mut x, mut xr) = (0.0_f64, 0.0_f64);
        let (mut acc, mut prev): (f64, Option<f64>) = (0.0, None);
        for _ in 0..200 {
            let u = pid.step(1.0 - x, dt);
            x += u * dt;

            let e = 1.0 - xr;
            acc += e * dt;
            let d = prev.map_or(0.0, |p| (e - p) / dt);
            prev = Some(e);
            let ur = kp * e + ki * acc + kd * d;
            xr += ur * dt;
            assert_eq!(u, ur);
            assert_eq!(x, xr);
        }
        assert!((x - 1.0).abs() < 0.05);
    }
}
