//! Built-in scenario suites and the road-network builder they use.

pub mod net;
mod suites;

use crate::world::{build_route, stream_rng, LaneMap, PerceptionSpec, Route, Scenario, TpSpacing};
use crate::Point;
pub use net::{Net, NetBuilder};
pub use suites::*;

pub const LANE_WIDTH: f64 = 3.5;

pub fn lane_map(net: &Net) -> LaneMap {
    LaneMap::new(
        (0..net.lanes.len()).map(|i| net.polyline(i)).collect(),
        net.lane_width,
        net.intersections.clone(),
    )
}

/// Route through `waypoints` with target points drawn from `seed`.
pub fn route_on(net: &Net, waypoints: &[Point], seed: u64) -> Route {
    let map = lane_map(net);
    let mut rng = stream_rng(seed, 0);
    build_route(&map, waypoints, TpSpacing::default(), &mut rng).expect("fixture waypoints are connected")
}

/// Scenario with no traffic, signals or probes.
pub fn bare(name: &str, net: &Net, route: &Route) -> Scenario {
    Scenario {
        name: name.to_string(),
        lanes: net.lanes.clone(),
        lane_width: net.lane_width,
        intersections: net.intersections.clone(),
        route: route.path.points().to_vec(),
        target_points: route.target_points.clone(),
        triggers: vec![],
        lights: vec![],
        signs: vec![],
        actors: vec![],
        disturbances: vec![],
        ambiguity: vec![],
        perception: PerceptionSpec::default(),
        ego_speed: 0.0,
        time_limit: None,
    }
}

/// Two-way single-lane road from (0, 0) to (len, 0); the route is the
/// eastbound lane at y = -1.75.
pub fn straight(len: f64) -> Scenario {
    let mut b = NetBuilder::new(LANE_WIDTH);
    let a = b.end(0.0, 0.0);
    let e = b.end(len, 0.0);
    b.road(a, e, 1);
    let net = b.build();
    let y = -0.5 * LANE_WIDTH;
    let route = route_on(&net, &[Point::new(0.0, y), Point::new(len, y)], 0);
    bare("straight", &net, &route)
}
