//! Scenario suites used by the benchmarks and ablations.

use rand::Rng;

use super::net::{Net, NetBuilder};
use super::{bare, route_on, LANE_WIDTH};
use crate::expert::{EgoForecast, ExpertConfig};
use crate::world::{
    stream_rng, streams, Actor, ActorKind, ActorSpec, AmbiguityWindow, Behavior, BehaviorSpec, Disturbance, Gate,
    Param, PerceptionSpec, Phase, Polyline, Scenario, ScenarioTrigger, StartState, StopSign, TrafficLight,
    TriggerAction,
};
use crate::{Command, Params, Point, State};

/// Four-arm junction at the origin.
pub struct Cross {
    pub net: Net,
    pub west: usize,
    pub east: usize,
    pub north: usize,
    pub south: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Left,
    Straight,
    Right,
}

impl Cross {
    pub fn new(arm: f64, lanes: usize) -> Cross {
        let mut b = NetBuilder::new(LANE_WIDTH);
        let j = b.junction(0.0, 0.0, lanes);
        let w = b.end(-arm, 0.0);
        let e = b.end(arm, 0.0);
        let n = b.end(0.0, arm);
        let s = b.end(0.0, -arm);
        let west = b.road(w, j, lanes);
        let east = b.road(j, e, lanes);
        let north = b.road(j, n, lanes);
        let south = b.road(j, s, lanes);
        Cross {
            net: b.build(),
            west,
            east,
            north,
            south,
        }
    }

    /// Eastbound lane arriving from the west.
    pub fn approach(&self, index: usize) -> usize {
        self.net.lane(self.west, true, index)
    }

    pub fn exit(&self, exit: Exit, index: usize) -> usize {
        let road = match exit {
            Exit::Left => self.north,
            Exit::Straight => self.east,
            Exit::Right => self.south,
        };
        self.net.lane(road, true, index)
    }

    /// Route from `start` meters into the approach lane to `end` meters
    /// before the end of the exit lane.
    pub fn scenario(&self, name: &str, exit: Exit, lane_in: usize, lane_out: usize, start: f64, end: f64) -> Scenario {
        let a = self.net.at(self.approach(lane_in), start);
        let b = self.net.at(self.exit(exit, lane_out), -end);
        let route = route_on(&self.net, &[a, b], 0);
        bare(name, &self.net, &route)
    }

    /// Light for the approach lane with its trigger area just before the line.
    pub fn light(&self, lane_in: usize, schedule: Vec<(Phase, f64)>, offset: f64) -> TrafficLight {
        let lane = self.approach(lane_in);
        TrafficLight {
            stop_line: self.net.stop_line(lane),
            trigger_area: self.net.area_before_end(lane, 0.0, 6.0),
            schedule,
            offset,
        }
    }

    pub fn stop_sign(&self, lane_in: usize) -> StopSign {
        StopSign {
            trigger_area: self.net.area_before_end(self.approach(lane_in), 0.5, 5.0),
        }
    }

    /// Vehicle waiting on the north arm that drives south through the
    /// junction once `light` has been red for `delay` seconds.
    pub fn cross_traffic(&self, light: usize, delay: f64, speed: f64) -> ActorSpec {
        let lane = self.net.lane(self.north, false, 0);
        let south = self.net.lane(self.south, true, 0);
        let start = self.net.at(lane, -12.0);
        let end = self.net.at(south, 40.0);
        ActorSpec {
            kind: ActorKind::Vehicle,
            start: StartState {
                x: start.x,
                y: start.y,
                yaw: -std::f64::consts::FRAC_PI_2,
                speed: 0.0,
            },
            behavior: BehaviorSpec::FollowPath {
                path: vec![start, end],
                profile: vec![(0.0, speed)],
                despawn_at_end: true,
            },
            gate: Some(Gate::LightRed { light, delay }),
        }
    }
}

/// Two-way road with a smooth 90 degree left bend of centerline radius
/// `radius` after `before` meters, continuing `after` meters north.
pub fn bend_net(before: f64, radius: f64, after: f64) -> (Net, usize) {
    let mut b = NetBuilder::new(LANE_WIDTH);
    let a = b.end(0.0, 0.0);
    let e = b.end(before + radius, radius + after);
    let n = 24;
    let via: Vec<Point> = (0..=n)
        .map(|k| {
            let t = -std::f64::consts::FRAC_PI_2 * (1.0 - k as f64 / n as f64);
            Point::new(before + radius * t.cos(), radius + radius * t.sin())
        })
        .collect();
    let r = b.road_via(a, e, &via, 1, true);
    let net = b.build();
    let lane = net.lane(r, true, 0);
    (net, lane)
}

fn bend(name: &str, before: f64, radius: f64, after: f64) -> Scenario {
    let (net, lane) = bend_net(before, radius, after);
    let route = route_on(&net, &[net.at(lane, 1.0), net.at(lane, -1.0)], 0);
    bare(name, &net, &route)
}

fn straight_named(name: &str, len: f64) -> Scenario {
    let mut s = super::straight(len);
    s.name = name.to_string();
    s
}

fn pedestrian(s: f64, ahead: f64) -> ScenarioTrigger {
    ScenarioTrigger {
        s,
        action: TriggerAction::PedestrianCrossing {
            ahead: Param::Range([ahead - 4.0, ahead + 4.0]),
            lateral: Param::Range([5.0, 7.0]),
            speed: Param::Range([1.0, 1.6]),
            delay: Param::Fixed(0.0),
        },
    }
}

fn cyclist(s: f64, ahead: Param, probability: f64) -> ScenarioTrigger {
    ScenarioTrigger {
        s,
        action: TriggerAction::CyclistCutIn {
            ahead,
            lateral: Param::Fixed(7.0),
            speed: Param::Range([3.0, 4.5]),
            probability,
            along: Param::Fixed(0.0),
            yield_lateral: 4.0,
        },
    }
}

/// Slower vehicle driving the route ahead of the ego.
fn lead_vehicle(route: &[Point], gap: f64, speed: f64) -> ActorSpec {
    let line = Polyline::new(route.to_vec()).expect("route has two points");
    let pts: Vec<Point> = line.slice(gap, line.length()).expect("route longer than gap").points().to_vec();
    let p = pts[0];
    ActorSpec {
        kind: ActorKind::Vehicle,
        start: StartState {
            x: p.x,
            y: p.y,
            yaw: line.heading_at(gap),
            speed,
        },
        behavior: BehaviorSpec::FollowPath {
            path: pts,
            profile: vec![(0.0, speed)],
            despawn_at_end: true,
        },
        gate: None,
    }
}

fn cycle(green: f64, red: f64) -> Vec<(Phase, f64)> {
    vec![(Phase::Green, green), (Phase::Yellow, 3.0), (Phase::Red, red)]
}

/// Twenty routes covering straights, bends, junction turns, lights, stop
/// signs and crossing or leading traffic.
pub fn expert_suite() -> Vec<Scenario> {
    let cross = Cross::new(120.0, 1);
    let mut out = vec![
        straight_named("straight_150", 150.0),
        straight_named("straight_300", 300.0),
        bend("bend_left_r15", 80.0, 15.0, 80.0),
        bend("bend_left_r30", 60.0, 30.0, 60.0),
        cross.scenario("junction_straight", Exit::Straight, 0, 0, 20.0, 20.0),
        cross.scenario("junction_left", Exit::Left, 0, 0, 20.0, 20.0),
        cross.scenario("junction_right", Exit::Right, 0, 0, 20.0, 20.0),
    ];

    for (i, exit) in [Exit::Straight, Exit::Left, Exit::Right].into_iter().enumerate() {
        let mut s = cross.scenario(&format!("light_{}", ["straight", "left", "right"][i]), exit, 0, 0, 20.0, 20.0);
        s.lights.push(cross.light(0, cycle(8.0, 10.0), 4.0 * i as f64));
        out.push(s);
    }

    for (i, exit) in [Exit::Straight, Exit::Left, Exit::Right].into_iter().enumerate() {
        let mut s = cross.scenario(&format!("stop_{}", ["straight", "left", "right"][i]), exit, 0, 0, 20.0, 20.0);
        s.signs.push(cross.stop_sign(0));
        out.push(s);
    }

    let mut s = straight_named("pedestrian_straight", 250.0);
    s.triggers.push(pedestrian(60.0, 30.0));
    s.triggers.push(pedestrian(150.0, 25.0));
    out.push(s);

    let mut s = cross.scenario("pedestrian_junction", Exit::Straight, 0, 0, 20.0, 20.0);
    s.triggers.push(pedestrian(40.0, 35.0));
    out.push(s);

    let mut s = straight_named("cyclist_straight", 250.0);
    s.triggers.push(cyclist(70.0, Param::Range([26.0, 32.0]), 0.5));
    out.push(s);

    let mut s = straight_named("opposing_vehicle", 250.0);
    s.triggers.push(ScenarioTrigger {
        s: 30.0,
        action: TriggerAction::OpposingVehicle {
            ahead: Param::Range([90.0, 120.0]),
            speed: Param::Range([5.0, 8.0]),
            offset: LANE_WIDTH,
        },
    });
    out.push(s);

    let mut s = straight_named("lead_vehicle", 300.0);
    s.actors.push(lead_vehicle(&s.route, 25.0, 4.0));
    out.push(s);

    let mut s = cross.scenario("light_cross_traffic", Exit::Straight, 0, 0, 20.0, 20.0);
    s.lights.push(cross.light(0, vec![(Phase::Green, 60.0), (Phase::Yellow, 3.0), (Phase::Red, 12.0)], 0.0));
    s.triggers.push(ScenarioTrigger {
        s: 50.0,
        action: TriggerAction::LightChange {
            light: 0,
            delay: Param::Range([0.5, 3.0]),
        },
    });
    s.actors.push(cross.cross_traffic(0, 1.0, 6.0));
    out.push(s);

    let mut s = cross.scenario("stop_then_pedestrian", Exit::Left, 0, 0, 20.0, 20.0);
    s.signs.push(cross.stop_sign(0));
    s.triggers.push(pedestrian(120.0, 30.0));
    out.push(s);

    debug_assert_eq!(out.len(), 20);
    out
}

/// Ten two-lane junction routes that turn from the only lane allowed to make
/// the turn, with a 3 m lateral push into the neighbouring lane before the
/// junction.
pub fn deviation_suite() -> Vec<Scenario> {
    let mut out = Vec::new();
    for k in 0..10 {
        let arm = 90.0 + 10.0 * k as f64;
        let cross = Cross::new(arm, 2);
        let right = k % 2 == 0;
        let (exit, lane, push) = if right { (Exit::Right, 0, LANE_WIDTH - 0.5) } else { (Exit::Left, 1, 0.5 - LANE_WIDTH) };
        let name = format!("deviation_{k}_{}", if right { "right" } else { "left" });
        let mut s = cross.scenario(&name, exit, lane, lane, 10.0, 20.0);
        let approach = cross.net.polyline(cross.approach(lane)).length() - 10.0;
        s.disturbances.push(Disturbance {
            route_s: approach - 25.0 - 2.0 * k as f64,
            lateral_offset: push,
            heading_error: 0.0,
            lateral_jitter: 0.2,
        });
        out.push(s);
    }
    out
}

/// Left bend with a lateral push toward the opposing lane before the
/// corner. With `near_tp` a target point sits just after the push, before
/// the corner; otherwise the only target point is the route end.
pub fn corner(near_tp: bool) -> Scenario {
    let (before, radius) = (80.0, 20.0);
    let mut s = bend(if near_tp { "corner_near_tp" } else { "corner_far_tp" }, before, radius, 80.0);
    let path = Polyline::new(s.route.clone()).expect("route");
    let corner_s = before - 1.0;
    let end = path.end();
    s.target_points = if near_tp {
        vec![path.point_at(corner_s - 8.0), end]
    } else {
        vec![end]
    };
    s.disturbances.push(Disturbance {
        route_s: corner_s - 24.0,
        lateral_offset: 1.4,
        heading_error: 0.0,
        lateral_jitter: 0.3,
    });
    s
}

fn window(s_start: f64, s_end: f64, weight: Param, alternative: [f64; 4]) -> AmbiguityWindow {
    AmbiguityWindow {
        s_start,
        s_end,
        max_duration: 6.0,
        weight,
        alternative,
    }
}

/// Ambiguous events for the speed head: a cyclist that may or may not cut in
/// and a light that may change during the approach, with crossing traffic.
pub fn uncertainty_suite() -> Vec<Scenario> {
    let alt = [0.0, 0.1, 0.4, 0.5];
    let weight = Param::Range([0.3, 0.7]);
    let mut out = Vec::new();

    let mut s = straight_named("uncertain_cyclist", 220.0);
    s.triggers.push(cyclist(80.0, Param::Range([8.0, 12.0]), 0.6));
    s.ambiguity.push(window(60.0, 100.0, weight, alt));
    out.push(s);

    let cross = Cross::new(120.0, 1);
    let mut s = cross.scenario("uncertain_light", Exit::Straight, 0, 0, 20.0, 20.0);
    let line_s = cross.net.polyline(cross.approach(0)).length() - 20.0;
    s.lights.push(cross.light(0, vec![(Phase::Green, 100.0), (Phase::Yellow, 2.0), (Phase::Red, 12.0)], 0.0));
    s.triggers.push(ScenarioTrigger {
        s: line_s - 20.0,
        action: TriggerAction::LightChange {
            light: 0,
            delay: Param::Range([0.0, 1.0]),
        },
    });
    s.actors.push(cross.cross_traffic(0, 0.3, 7.0));
    s.ambiguity.push(window(line_s - 35.0, line_s + 2.0, weight, alt));
    out.push(s);

    out
}

/// Stop signs that disappear from view once the ego gets close.
pub fn occlusion_suite() -> Vec<Scenario> {
    let cross = Cross::new(100.0, 1);
    [Exit::Straight, Exit::Left, Exit::Right]
        .into_iter()
        .enumerate()
        .map(|(i, exit)| {
            let mut s = cross.scenario(&format!("occluded_stop_{i}"), exit, 0, 0, 20.0, 20.0);
            s.signs.push(cross.stop_sign(0));
            s.perception = PerceptionSpec {
                occlusion: Param::Range([6.0, 12.0]),
                detection_prob: 0.8,
            };
            s
        })
        .collect()
}

/// One collision-forecast situation: ego on a straight eastbound path and a
/// few actors driving with their commands held.
#[derive(Clone, Debug)]
pub struct ForecastCase {
    pub ego: EgoForecast,
    pub actors: Vec<Actor>,
    pub path: Polyline,
    pub horizon: f64,
}

fn held(id: u32, kind: ActorKind, x: f64, y: f64, yaw: f64, v: f64, cmd: Command) -> Actor {
    let mut a = Actor::new(id, kind, State::new(x, y, yaw, v), Behavior::Static);
    a.last_cmd = cmd;
    a
}

/// Fifty forecast cases: stopped and slower leads, crossing vehicles,
/// cyclists and pedestrians, oncoming traffic and near misses.
pub fn forecast_cases() -> Vec<ForecastCase> {
    let cfg = ExpertConfig::default();
    let path = Polyline::new((0..=200).map(|i| Point::new(i as f64, 0.0)).collect()).expect("path");
    let mut rng = stream_rng(4242, streams::SCENARIO);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut out = Vec::new();
    for k in 0..50 {
        let v = rng.random_range(2.0..9.0);
        let target = [8.0, 5.0, 2.0][k % 3];
        let ego = EgoForecast {
            state: State::new(0.0, rng.random_range(-0.4..0.4), rng.random_range(-0.05..0.05), v),
            params: Params::car(),
            s: 0.0,
            target_speed: target,
            min_aim: cfg.lateral_min_aim,
            lateral: cfg.lateral,
            longitudinal: cfg.longitudinal,
            overspeed_margin: cfg.overspeed_margin,
        };
        let coast = Command::coast();
        let actors = match k % 5 {
            0 => vec![held(1, ActorKind::Vehicle, rng.random_range(6.0..25.0), rng.random_range(-0.5..0.5), 0.0, 0.0, coast)],
            1 => vec![held(
                1,
                ActorKind::Vehicle,
                rng.random_range(8.0..20.0),
                0.0,
                0.0,
                rng.random_range(1.0..4.0),
                Command::new(0.0, 0.0, rng.random_bool(0.5)),
            )],
            2 => {
                let x = rng.random_range(8.0..30.0);
                let y = rng.random_range(-18.0..-8.0);
                vec![held(1, ActorKind::Vehicle, x, y, half_pi, rng.random_range(3.0..9.0), coast)]
            }
            3 => {
                let x = rng.random_range(6.0..25.0);
                vec![
                    held(1, ActorKind::Pedestrian, x, rng.random_range(3.0..7.0), -half_pi, rng.random_range(0.8..1.8), coast),
                    held(2, ActorKind::Cyclist, x + rng.random_range(3.0..12.0), rng.random_range(-9.0..-4.0), half_pi, rng.random_range(2.0..5.0), coast),
                ]
            }
            _ => vec![
                held(1, ActorKind::Vehicle, rng.random_range(25.0..60.0), LANE_WIDTH + rng.random_range(-0.3..0.6), std::f64::consts::PI, rng.random_range(4.0..9.0), coast),
                held(2, ActorKind::Vehicle, rng.random_range(10.0..40.0), -LANE_WIDTH - 1.0, 0.0, 0.0, coast),
            ],
        };
        out.push(ForecastCase {
            ego,
            actors,
            path: path.clone(),
            horizon: cfg.forecast_horizon,
        });
    }
    out
}
