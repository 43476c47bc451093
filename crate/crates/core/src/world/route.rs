use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::world::map::{LaneMap, Turn};
use crate::world::polyline::{Polyline, Projection};
use crate::world::scenario::ScenarioTrigger;
use crate::{Point, Pose};

/// Resampling step of route paths (m).
pub const PATH_STEP: f64 = 1.0;
/// A target point counts as passed once the ego is this far beyond it (m).
pub const TP_ADVANCE_EPSILON: f64 = 0.0;
/// Progress search window behind and ahead of the cursor (m).
const WINDOW_BACK: f64 = 5.0;
const WINDOW_AHEAD: f64 = 25.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RouteError {
    #[error("waypoint {0} is not on any lane")]
    OffLane(usize),
    #[error("waypoints {0} and {1} are not connected in the lane graph")]
    Disconnected(usize, usize),
    #[error("route needs at least two waypoints")]
    TooShort,
    #[error("target point {0} is {1} m away from the path")]
    TargetOffPath(usize, f64),
}

/// Stretch of the route that passes through an intersection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Maneuver {
    pub s_start: f64,
    pub s_end: f64,
    pub turn: Turn,
}

#[derive(Clone, Debug)]
pub struct Route {
    pub path: Polyline,
    pub target_points: Vec<Point>,
    /// Arc length of each target point.
    pub target_s: Vec<f64>,
    pub triggers: Vec<ScenarioTrigger>,
    pub maneuvers: Vec<Maneuver>,
}

/// Uniform spacing range for generated target points (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpSpacing {
    pub min: f64,
    pub max: f64,
}

impl Default for TpSpacing {
    fn default() -> Self {
        TpSpacing { min: 20.0, max: 50.0 }
    }
}

impl Route {
    /// Target points are projected onto the path in order; each must lie on it.
    pub fn new(
        path: Polyline,
        target_points: Vec<Point>,
        triggers: Vec<ScenarioTrigger>,
        map: &LaneMap,
    ) -> Result<Route, RouteError> {
        let mut target_s = Vec::with_capacity(target_points.len());
        let mut last = 0.0;
        for (i, &tp) in target_points.iter().enumerate() {
            let pr = path.project_window(tp, last, path.length());
            let d = pr.point.distance(tp);
            if d > 1e-6 {
                return Err(RouteError::TargetOffPath(i, d));
            }
            last = pr.s;
            target_s.push(pr.s);
        }
        let maneuvers = find_maneuvers(&path, map);
        Ok(Route {
            path,
            target_points,
            target_s,
            triggers,
            maneuvers,
        })
    }

    pub fn length(&self) -> f64 {
        self.path.length()
    }

    /// Index of the first target point strictly ahead of `s`, or the last one.
    pub fn next_target_index(&self, s: f64) -> Option<usize> {
        if self.target_s.is_empty() {
            return None;
        }
        Some(
            self.target_s
                .iter()
                .position(|&t| t > s + TP_ADVANCE_EPSILON)
                .unwrap_or(self.target_s.len() - 1),
        )
    }

    pub fn next_target_point(&self, s: f64) -> Option<Point> {
        self.next_target_index(s).map(|i| self.target_points[i])
    }

    /// Maneuver whose intersection stretch starts within `lookahead` of `s` or
    /// contains it.
    pub fn upcoming_maneuver(&self, s: f64, lookahead: f64) -> Option<&Maneuver> {
        self.maneuvers
            .iter()
            .find(|m| m.s_end >= s && m.s_start <= s + lookahead)
    }
}

/// Next target point along a route (see [`Route::next_target_point`]).
pub fn next_target_point(route: &Route, s: f64) -> Option<Point> {
    route.next_target_point(s)
}

fn find_maneuvers(path: &Polyline, map: &LaneMap) -> Vec<Maneuver> {
    let pts = path.points();
    let cum = path.cumulative();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..=pts.len() {
        let inside = i < pts.len() && map.in_intersection(pts[i]).is_some();
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(a)) => {
                let b = i - 1;
                let s_start = cum[a.saturating_sub(1)];
                let s_end = cum[(b + 1).min(pts.len() - 1)];
                let dh = crate::scalar::wrap_angle(path.heading_at(s_end - 1e-6) - path.heading_at(s_start));
                let turn = if dh > 0.5 {
                    Turn::Left
                } else if dh < -0.5 {
                    Turn::Right
                } else {
                    Turn::Straight
                };
                out.push(Maneuver { s_start, s_end, turn });
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Progress of the ego along a route.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Progress {
    pub s: f64,
    /// Signed distance to the path, positive to the left.
    pub lateral: f64,
    pub completed_fraction: f64,
}

/// Cursor-based progress tracker; `s` never decreases.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RouteTracker {
    pub s: f64,
}

impl RouteTracker {
    pub fn update(&mut self, route: &Route, pose: &Pose) -> Progress {
        let pr = self.project(route, pose);
        self.s = self.s.max(pr.s);
        Progress {
            s: self.s,
            lateral: pr.lateral,
            completed_fraction: (self.s / route.length()).clamp(0.0, 1.0),
        }
    }

    /// Windowed closest point without moving the cursor.
    pub fn project(&self, route: &Route, pose: &Pose) -> Projection {
        route
            .path
            .project_window(pose.position(), self.s - WINDOW_BACK, self.s + WINDOW_AHEAD)
    }
}

/// Progress of a single pose, tracked from a fresh cursor.
pub fn route_progress(route: &Route, pose: &Pose) -> Progress {
    let pr = route.path.project(pose.position());
    Progress {
        s: pr.s,
        lateral: pr.lateral,
        completed_fraction: (pr.s / route.length()).clamp(0.0, 1.0),
    }
}

fn locate(map: &LaneMap, p: Point) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, lane) in map.lanes.iter().enumerate() {
        let pr = lane.project(p);
        let d = pr.point.distance(p);
        // plain lanes win over connectors sharing the point
        let key = d + if map.is_connector(i) { 0.25 } else { 0.0 };
        if d <= 0.5 && best.is_none_or(|b| key < b.2) {
            best = Some((i, pr.s, key));
        }
    }
    best.map(|(i, s, _)| (i, s))
}

/// Connects waypoints through the lane graph, resamples the result at 1 m and
/// places target points: one at the end of every intersection connector that
/// follows a decision point, the others at uniformly drawn spacing.
pub fn build_route<R: Rng>(
    map: &LaneMap,
    waypoints: &[Point],
    spacing: TpSpacing,
    rng: &mut R,
) -> Result<Route, RouteError> {
    if waypoints.len() < 2 {
        return Err(RouteError::TooShort);
    }
    let located: Vec<(usize, f64)> = waypoints
        .iter()
        .enumerate()
        .map(|(i, &w)| locate(map, w).ok_or(RouteError::OffLane(i)))
        .collect::<Result<_, _>>()?;

    let mut lanes = vec![located[0].0];
    for k in 1..located.len() {
        let (a, sa) = located[k - 1];
        let (b, sb) = located[k];
        if a == b && sb >= sa {
            continue;
        }
        let seq = map.lane_path(a, b).filter(|s| s.len() > 1);
        let seq = seq.ok_or(RouteError::Disconnected(k - 1, k))?;
        lanes.extend_from_slice(&seq[1..]);
    }

    // each lane piece is resampled on its own so connector ends stay vertices
    let mut pts: Vec<Point> = Vec::new();
    let mut mandatory = Vec::new();
    for (k, &lane) in lanes.iter().enumerate() {
        let l = &map.lanes[lane];
        let s0 = if k == 0 { located[0].1 } else { 0.0 };
        let s1 = if k + 1 == lanes.len() { located[located.len() - 1].1 } else { l.length() };
        let Some(piece) = l.slice(s0, s1) else { continue };
        let piece = piece.resample(PATH_STEP);
        let skip = usize::from(!pts.is_empty());
        pts.extend_from_slice(&piece.points()[skip..]);
        let decision = k > 0 && map.successors(lanes[k - 1]).len() > 1;
        if map.is_connector(lane) && decision {
            mandatory.push(pts.len() - 1);
        }
    }
    let path = Polyline::new(pts).ok_or(RouteError::TooShort)?;
    let length = path.length();
    let mandatory: Vec<f64> = mandatory.into_iter().map(|i| path.cumulative()[i]).collect();

    let mut target_s = Vec::new();
    let mut last = 0.0;
    let mut m = 0;
    loop {
        let next = last + rng.random_range(spacing.min..=spacing.max);
        while m < mandatory.len() && mandatory[m] <= last {
            m += 1;
        }
        let s = if m < mandatory.len() && mandatory[m] <= next {
            m += 1;
            mandatory[m - 1]
        } else {
            next
        };
        if s >= length {
            break;
        }
        target_s.push(s);
        last = s;
    }
    target_s.push(length);
    let target_points = target_s.iter().map(|&s| path.point_at(s)).collect();
    Route::new(path, target_points, Vec::new(), map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn straight(len: f64) -> LaneMap {
        LaneMap::new(
            vec![Polyline::new(vec![Point::new(0.0, 0.0), Point::new(len, 0.0)]).unwrap()],
            3.5,
            vec![],
        )
    }

    fn route_with_tps(tps: &[f64]) -> Route {
        let map = straight(100.0);
        let path = map.lanes[0].resample(1.0);
        let pts = tps.iter().map(|&s| Point::new(s, 0.0)).collect();
        Route::new(path, pts, vec![], &map).unwrap()
    }

    #[test]
    fn next_target_point_rules() {
        let r = route_with_tps(&[30.0, 60.0, 90.0]);
        assert_eq!(r.next_target_point(0.0), Some(Point::new(30.0, 0.0)));
        assert_eq!(r.next_target_point(30.01), Some(Point::new(60.0, 0.0)));
        assert_eq!(r.next_target_point(90.0), Some(Point::new(90.0, 0.0)));
        assert_eq!(r.next_target_point(95.0), Some(Point::new(90.0, 0.0)));
    }

    #[test]
    fn progress_examples() {
        let r = route_with_tps(&[100.0]);
        let p = route_progress(&r, &Pose::new(0.0, 0.0, 0.0));
        assert_eq!((p.s, p.lateral, p.completed_fraction), (0.0, 0.0, 0.0));
        assert_eq!(route_progress(&r, &Pose::new(100.0, 0.0, 0.0)).completed_fraction, 1.0);
        let p = route_progress(&r, &Pose::new(50.0, 2.0, 0.0));
        assert!((p.lateral - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tracker_never_moves_back() {
        let r = route_with_tps(&[100.0]);
        let mut t = RouteTracker::default();
        t.update(&r, &Pose::new(20.0, 0.0, 0.0));
        let p = t.update(&r, &Pose::new(10.0, 0.0, 0.0));
        assert_eq!(p.s, 20.0);
    }

    #[test]
    fn tracker_window_ignores_far_branch() {
        // U-shaped route: the return leg passes 6 m from the start
        let map = straight(1.0);
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(60.0, 0.0),
            Point::new(60.0, 6.0),
            Point::new(0.0, 6.0),
        ];
        let path = Polyline::new(pts).unwrap().resample(1.0);
        let r = Route::new(path, vec![], vec![], &map).unwrap();
        let mut t = RouteTracker::default();
        for x in 0..10 {
            t.update(&r, &Pose::new(x as f64, 4.0, 0.0));
        }
        assert!((t.s - 9.0).abs() < 1e-9);
    }

    #[test]
    fn straight_route_tp_bounds() {
        let map = straight(100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = build_route(&map, &[Point::new(0.0, 0.0), Point::new(100.0, 0.0)], TpSpacing::default(), &mut rng)
            .unwrap();
        assert_eq!(r.path.points().len(), 101);
        let mut last = 0.0;
        for &s in &r.target_s {
            assert!(s - last <= 50.0 + 1e-9);
            last = s;
        }
        assert_eq!(*r.target_s.last().unwrap(), 100.0);
    }

    #[test]
    fn off_lane_waypoint_fails() {
        let map = straight(100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = build_route(&map, &[Point::new(0.0, 5.0), Point::new(100.0, 0.0)], TpSpacing::default(), &mut rng);
        assert_eq!(err.unwrap_err(), RouteError::OffLane(0));
    }
}
