use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::{Box2, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Green,
    Yellow,
    Red,
}

/// Oriented segment across the lane entrance. `yaw` is the direction of travel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopLine {
    pub center: Point,
    pub yaw: f64,
    pub half_width: f64,
}

impl StopLine {
    /// Signed distance of `p` past the line along the direction of travel.
    pub fn signed_distance(&self, p: Point) -> f64 {
        (p - self.center).dot(Vec2::from_angle(self.yaw))
    }

    pub fn spans(&self, p: Point) -> bool {
        (p - self.center).dot(Vec2::from_angle(self.yaw).perp()).abs() <= self.half_width
    }

    /// Whether moving from `a` to `b` crosses the line.
    pub fn crossed(&self, a: Point, b: Point) -> bool {
        self.signed_distance(a) < 0.0 && self.signed_distance(b) >= 0.0 && self.spans(b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficLight {
    pub stop_line: StopLine,
    /// Area just before the stop line that activates the light rule.
    pub trigger_area: Box2,
    /// Phases with durations in seconds, cycled in order.
    pub schedule: Vec<(Phase, f64)>,
    /// Position in the cycle at time zero (s).
    #[serde(default)]
    pub offset: f64,
}

/// Tick-exact phase clock of one light.
#[derive(Clone, Debug, PartialEq)]
pub struct LightClock {
    phases: Vec<(Phase, u64)>,
    cycle: u64,
    offset: u64,
}

impl LightClock {
    pub fn new(light: &TrafficLight, dt: f64) -> Self {
        let phases: Vec<(Phase, u64)> = light
            .schedule
            .iter()
            .map(|&(p, d)| (p, ((d / dt).round() as u64).max(1)))
            .collect();
        let cycle = phases.iter().map(|p| p.1).sum::<u64>().max(1);
        let offset = ((light.offset / dt).round() as i64).rem_euclid(cycle as i64) as u64;
        LightClock { phases, cycle, offset }
    }

    fn position(&self, tick: u64) -> u64 {
        (tick + self.offset) % self.cycle
    }

    pub fn phase(&self, tick: u64) -> Phase {
        let mut pos = self.position(tick);
        for &(p, n) in &self.phases {
            if pos < n {
                return p;
            }
            pos -= n;
        }
        self.phases.last().map(|p| p.0).unwrap_or(Phase::Green)
    }

    /// Re-phases the clock so that the first yellow phase of the cycle starts
    /// `delay` ticks after `tick`.
    pub fn schedule_yellow(&mut self, tick: u64, delay: u64) {
        let mut start = 0;
        for &(p, n) in &self.phases {
            if p == Phase::Yellow {
                break;
            }
            start += n;
        }
        let c = self.cycle as i64;
        self.offset = (start as i64 - (tick + delay) as i64).rem_euclid(c) as u64;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopSign {
    pub trigger_area: Box2,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn light(schedule: Vec<(Phase, f64)>) -> TrafficLight {
        TrafficLight {
            stop_line: StopLine {
                center: Point::new(0.0, 0.0),
                yaw: 0.0,
                half_width: 1.75,
            },
            trigger_area: Box2::new(Point::new(-1.0, 0.0), 0.0, 2.0, 3.5),
            schedule,
            offset: 0.0,
        }
    }

    #[test]
    fn phases_cycle_with_exact_tick_counts() {
        let l = light(vec![(Phase::Green, 1.0), (Phase::Yellow, 0.15), (Phase::Red, 0.5)]);
        let c = LightClock::new(&l, 0.05);
        let seq: Vec<Phase> = (0..66).map(|k| c.phase(k)).collect();
        for cycle in 0..2 {
            let b = cycle * 33;
            assert!(seq[b..b + 20].iter().all(|&p| p == Phase::Green));
            assert!(seq[b + 20..b + 23].iter().all(|&p| p == Phase::Yellow));
            assert!(seq[b + 23..b + 33].iter().all(|&p| p == Phase::Red));
        }
    }

    #[test]
    fn yellow_rescheduled_after_delay() {
        let l = light(vec![(Phase::Green, 10.0), (Phase::Yellow, 3.0), (Phase::Red, 10.0)]);
        let mut c = LightClock::new(&l, 0.05);
        c.schedule_yellow(37, 40);
        assert_eq!(c.phase(37), Phase::Green);
        assert_eq!(c.phase(76), Phase::Green);
        assert_eq!(c.phase(77), Phase::Yellow);
    }

    #[test]
    fn stop_line_crossing() {
        let l = light(vec![(Phase::Red, 1.0)]);
        let sl = l.stop_line;
        assert!(sl.crossed(Point::new(-0.1, 0.0), Point::new(0.1, 0.5)));
        assert!(!sl.crossed(Point::new(0.1, 0.0), Point::new(0.3, 0.0)));
        assert!(!sl.crossed(Point::new(-0.1, 3.0), Point::new(0.1, 3.0)));
    }
}
