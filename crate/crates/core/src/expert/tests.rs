use super::*;
use crate::fixtures::{self, LANE_WIDTH};
use crate::world::{
    ActorSpec, BehaviorSpec, Behavior, Prepared, Scenario, SimConfig, StartState, StopLine, TrafficLight,
};
use proptest::prelude::*;

const Y: f64 = -0.5 * LANE_WIDTH;

fn straight_path(len: usize) -> Polyline {
    Polyline::new((0..=len).map(|i| Point::new(i as f64, 0.0)).collect()).unwrap()
}

fn arc_path(radius: f64) -> Polyline {
    // left-curving quarter circle starting at the origin heading +x
    let n = (radius * std::f64::consts::FRAC_PI_2).ceil() as usize;
    Polyline::new(
        (0..=n)
            .map(|k| {
                let a = k as f64 / n as f64 * std::f64::consts::FRAC_PI_2;
                Point::new(radius * a.sin(), radius - radius * a.cos())
            })
            .collect(),
    )
    .unwrap()
}

fn world_of(s: Scenario) -> World {
    World::new(Prepared::new(s).unwrap(), SimConfig::default())
}

fn moving(mut w: World, x: f64, v: f64) -> World {
    w.set_ego(State::new(x, Y, 0.0, v));
    w
}

#[test]
fn stopping_distance_examples() {
    assert!((stopping_distance(0.0f64) - 2.5).abs() < 1e-12);
    // 0.5 * 2.88^2 + 2.5
    assert!((stopping_distance(8.0f64) - 6.6472).abs() < 1e-9);
    // 0.5 * 1.8^2 + 2.5
    assert!((stopping_distance(5.0f64) - 4.12).abs() < 1e-9);
    assert!((stopping_distance(8.0f32) - 6.6472).abs() < 1e-5);
}

#[test]
fn aim_on_straight_path() {
    let path = straight_path(50);
    let aim = lateral_aim(&path, 0.0, &Pose::new(0.0, 0.0, 0.0), 3.5);
    assert_eq!(aim, Point::new(4.0, 0.0));
    let aim = lateral_aim(&path, 48.0, &Pose::new(48.0, 0.0, 0.0), 3.5);
    assert_eq!(aim, Point::new(50.0, 0.0));
}

#[test]
fn aim_from_displaced_pose_matches_scan() {
    let path = straight_path(50);
    for &(x, y) in &[(10.0, 2.0), (10.3, -2.0), (20.5, 3.4)] {
        let pose = Pose::new(x, y, 0.0);
        let s = path.project(pose.position()).s;
        let aim = lateral_aim(&path, s, &pose, 3.5);
        let oracle = path
            .points()
            .iter()
            .copied()
            .filter(|p| p.x > s)
            .find(|p| p.distance(pose.position()) >= 3.5)
            .unwrap();
        assert_eq!(aim, oracle);
        assert!(aim.distance(pose.position()) >= 3.5);
    }
}

#[test]
fn safety_box_straight() {
    let path = straight_path(60);
    let cfg = ExpertConfig::default();
    let params = Params::car();
    for (v, d) in [(8.0, 6.6472), (0.0, 2.5)] {
        let b = safety_box(&State::new(0.0, 0.0, 0.0, v), &params, &path, 0.0, &cfg);
        assert!((b.center.x - d).abs() < 1e-9, "{v}: {}", b.center.x);
        assert!(b.center.y.abs() < 1e-12);
    }
}

#[test]
fn safety_box_follows_curve() {
    let path = arc_path(12.0);
    let cfg = ExpertConfig::default();
    let params = Params::car();
    let b = safety_box(&State::new(0.0, 0.0, 0.0, 5.0), &params, &path, 0.0, &cfg);
    // oracle: step the same path-following law by hand
    let mut pose = Pose::new(0.0, 0.0, 0.0);
    let mut s = 0.0;
    let mut left: f64 = stopping_distance(5.0);
    while left > 0.0 {
        let ds = left.min(0.25);
        let aim = lateral_aim(&path, s, &pose, 3.5);
        let local = global_to_local(&pose, aim);
        let delta = (local.angle()).clamp(-1.0, 1.0) * params.max_steer;
        pose = integrate_pose(&pose, 1.0, delta, &params, ds);
        s = s.max(path.project_window(pose.position(), s - 2.0, s + 10.0).s);
        left -= ds;
    }
    assert!(b.center.distance(pose.position()) < 1e-9);
    // off the heading ray, toward the inside of the curve
    assert!(b.center.y > 0.1);
}

fn convex_hull_area(mut pts: Vec<Point>) -> f64 {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let mut hull: Vec<Point> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        for &p in &pts {
            while hull.len() >= start + 2 {
                let n = hull.len();
                if (hull[n - 1] - hull[n - 2]).cross(p - hull[n - 2]) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
        if pass == 0 {
            pts.reverse();
        }
    }
    let n = hull.len();
    (0..n).map(|i| hull[i].cross(hull[(i + 1) % n])).sum::<f64>() * 0.5
}

#[test]
fn safety_area_grows_with_speed() {
    let path = straight_path(80);
    let cfg = ExpertConfig::default();
    let params = Params::car();
    let mut last = 0.0;
    for k in 0..=30 {
        let st = State::new(0.0, 0.0, 0.0, k as f64 * 0.5);
        let sb = safety_box(&st, &params, &path, 0.0, &cfg);
        let mut pts = sb.corners().to_vec();
        pts.extend_from_slice(&params.bbox(&st.pose).corners());
        let area = convex_hull_area(pts);
        assert!(area > last);
        last = area;
    }
}

fn forecast(x: f64, v: f64) -> EgoForecast {
    let cfg = ExpertConfig::default();
    EgoForecast {
        state: State::new(x, 0.0, 0.0, v),
        params: Params::car(),
        s: x,
        target_speed: 8.0,
        min_aim: cfg.lateral_min_aim,
        lateral: cfg.lateral,
        longitudinal: cfg.longitudinal,
        overspeed_margin: cfg.overspeed_margin,
    }
}

fn parked(id: u32, x: f64, y: f64, yaw: f64, v: f64) -> Actor {
    let mut a = Actor::new(id, ActorKind::Vehicle, State::new(x, y, yaw, v), Behavior::Static);
    a.last_cmd = Command::coast();
    a
}

/// Brute-force forecast: controls held for each 50 ms control period while the
/// physics and overlap checks run at 1 ms.
fn dense_oracle(ego: &EgoForecast, actors: &[Actor], path: &Polyline, horizon: f64) -> Option<(f64, u32)> {
    let control_dt = 0.05;
    let sub = 50;
    let dt = control_dt / sub as f64;
    let mut me = ego.state;
    let mut s = ego.s;
    let mut lat = LateralController::new(ego.lateral);
    let mut lon = LongitudinalController::new(ego.longitudinal, ego.overspeed_margin);
    let mut st: Vec<State> = actors.iter().map(|a| a.state).collect();
    let periods = (horizon / control_dt).round() as usize;
    for p in 0..periods {
        let aim = lateral_aim(path, s, &me.pose, ego.min_aim);
        let steer = lat.steer_towards(global_to_local(&me.pose, aim), control_dt);
        let (th, br) = lon.command(ego.target_speed, me.speed, control_dt);
        let cmd = Command::new(steer, th, br);
        for k in 1..=sub {
            me = step_bicycle(&me, &cmd, &ego.params, dt);
            let eb = ego.params.bbox(&me.pose);
            for (x, a) in st.iter_mut().zip(actors) {
                *x = step_bicycle(x, &a.last_cmd, &a.params, dt);
                if obb_overlap(&eb, &a.params.bbox(&x.pose)) {
                    return Some(((p * sub + k) as f64 * dt, a.id));
                }
            }
        }
        s = s.max(path.project(me.position()).s);
    }
    None
}

#[test]
fn forecast_without_actors() {
    let path = straight_path(100);
    assert_eq!(predict_collision(&forecast(0.0, 8.0), &[], &path, 2.0, 0.05), None);
}

#[test]
fn forecast_stopped_lead_vehicle() {
    let path = straight_path(100);
    let ego = forecast(0.0, 8.0);
    // 5 m gap between the boxes
    let lead = [parked(7, 9.5, 0.0, 0.0, 0.0)];
    let (t, id) = predict_collision(&ego, &lead, &path, 2.0, 0.05).unwrap();
    assert_eq!(id, 7);
    let (to, _) = dense_oracle(&ego, &lead, &path, 2.0).unwrap();
    assert!((t - to).abs() <= 0.05 + 1e-9, "{t} vs {to}");
}

#[test]
fn forecast_oncoming_in_other_lane() {
    let path = straight_path(100);
    let ego = forecast(0.0, 8.0);
    let other = [parked(3, 40.0, 3.5, std::f64::consts::PI, 8.0)];
    assert_eq!(predict_collision(&ego, &other, &path, 2.0, 0.05), None);
    assert_eq!(dense_oracle(&ego, &other, &path, 2.0), None);
}

#[test]
fn forecast_crossing_vehicle_agrees_with_oracle() {
    let path = straight_path(100);
    for k in 0..12 {
        let ego = forecast(0.0, 4.0 + 0.3 * k as f64);
        let cross = [parked(1, 14.0 + k as f64, -12.0, std::f64::consts::FRAC_PI_2, 6.0)];
        let a = predict_collision(&ego, &cross, &path, 2.0, 0.05);
        let b = dense_oracle(&ego, &cross, &path, 2.0);
        assert_eq!(a.is_some(), b.is_some(), "case {k}: {a:?} vs {b:?}");
        if let (Some(a), Some(b)) = (a, b) {
            assert!((a.0 - b.0).abs() <= 0.05 + 1e-9, "case {k}: {a:?} vs {b:?}");
        }
    }
}

#[test]
fn decision_regular_on_empty_road() {
    let w = moving(world_of(fixtures::straight(200.0)), 20.0, 8.0);
    let d = Expert::default().decide(&w, None);
    assert_eq!((d.target_speed, d.reason, d.speed_class_index), (8.0, Reason::Regular, 0));
}

fn with_pedestrian(s: &mut Scenario, x: f64, y: f64) {
    s.actors.push(ActorSpec {
        kind: ActorKind::Pedestrian,
        start: StartState { x, y, yaw: 0.0, speed: 0.0 },
        behavior: BehaviorSpec::Static,
        gate: None,
    });
}

#[test]
fn decision_pedestrian_ahead() {
    let mut s = fixtures::straight(200.0);
    with_pedestrian(&mut s, 40.0, 3.0);
    let w = moving(world_of(s), 20.0, 8.0);
    let d = Expert::default().decide(&w, None);
    assert_eq!((d.target_speed, d.reason), (2.0, Reason::PedestrianNear));
    // behind the ego: ignored
    let mut s = fixtures::straight(200.0);
    with_pedestrian(&mut s, 10.0, Y);
    let w = moving(world_of(s), 20.0, 8.0);
    assert_eq!(Expert::default().decide(&w, None).reason, Reason::Regular);
}

fn with_light(s: &mut Scenario, x: f64, phase: Phase) {
    s.lights.push(TrafficLight {
        stop_line: StopLine {
            center: Point::new(x, Y),
            yaw: 0.0,
            half_width: 1.75,
        },
        trigger_area: crate::Box2::new(Point::new(x - 1.5, Y), 0.0, 3.0, 3.15),
        schedule: vec![(phase, 100.0)],
        offset: 0.0,
    });
}

#[test]
fn decision_red_light() {
    let mut s = fixtures::straight(200.0);
    with_light(&mut s, 30.0, Phase::Red);
    // safety box front reaches 20 + 6.65 + 2.25 > 27
    let w = moving(world_of(s.clone()), 20.0, 8.0);
    let d = Expert::default().decide(&w, None);
    assert_eq!((d.target_speed, d.reason), (0.0, Reason::RedLight));
    // far away: no effect yet
    let w = moving(world_of(s.clone()), 5.0, 8.0);
    assert_eq!(Expert::default().decide(&w, None).reason, Reason::Regular);
    // past the line: no effect
    let w = moving(world_of(s), 31.0, 8.0);
    assert_eq!(Expert::default().decide(&w, None).reason, Reason::Regular);
}

#[test]
fn act_steering_signs() {
    let w = moving(world_of(fixtures::straight(200.0)), 20.0, 5.0);
    let (cmd, _) = Expert::default().act(&w);
    assert!(cmd.steer.abs() < 1e-9);
    let mut w = world_of(fixtures::straight(200.0));
    w.set_ego(State::new(20.0, Y + 1.0, 0.0, 5.0));
    let (cmd, _) = Expert::default().act(&w);
    assert!(cmd.steer > 0.0);
}

fn decision_speeds(peds: &[(f64, f64)], red: bool, ego_x: f64, v: f64) -> f64 {
    let mut s = fixtures::straight(200.0);
    for &(x, y) in peds {
        with_pedestrian(&mut s, x, y);
    }
    if red {
        with_light(&mut s, 60.0, Phase::Red);
    }
    let w = moving(world_of(s), ego_x, v);
    Expert::default().decide(&w, None).target_speed
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decisions_are_monotone_and_discrete(
        peds in prop::collection::vec((20.0f64..120.0, -8.0f64..8.0), 0..3),
        extra in (20.0f64..120.0, -8.0f64..8.0),
        ego_x in 10.0f64..70.0,
        v in 0.0f64..9.0,
    ) {
        let base = decision_speeds(&peds, false, ego_x, v);
        prop_assert!([8.0, 5.0, 2.0, 0.0].contains(&base));
        let mut more = peds.clone();
        more.push(extra);
        prop_assert!(decision_speeds(&more, false, ego_x, v) <= base);
        prop_assert!(decision_speeds(&peds, true, ego_x, v) <= base);
    }
}
