use serde::{Deserialize, Serialize};

use crate::geometry::convex_contains;
use crate::world::polyline::Polyline;
use crate::Point;

/// Endpoint tolerance when linking lanes into a graph (m).
const LINK_TOLERANCE: f64 = 0.1;

/// Heading change separating a turn from going straight (rad).
const TURN_ANGLE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Turn {
    Straight,
    Left,
    Right,
}

/// Lane-center polylines, a common lane width and convex intersection regions.
#[derive(Clone, Debug)]
pub struct LaneMap {
    pub lanes: Vec<Polyline>,
    pub lane_width: f64,
    pub intersections: Vec<Vec<Point>>,
    successors: Vec<Vec<usize>>,
    connector: Vec<bool>,
}

impl LaneMap {
    pub fn new(lanes: Vec<Polyline>, lane_width: f64, intersections: Vec<Vec<Point>>) -> Self {
        let successors = lanes
            .iter()
            .map(|a| {
                (0..lanes.len())
                    .filter(|&j| lanes[j].start().distance(a.end()) <= LINK_TOLERANCE)
                    .collect()
            })
            .collect();
        let connector = lanes
            .iter()
            .map(|l| {
                let mid = l.point_at(0.5 * l.length());
                intersections.iter().any(|poly| convex_contains(poly, mid))
            })
            .collect();
        LaneMap {
            lanes,
            lane_width,
            intersections,
            successors,
            connector,
        }
    }

    pub fn successors(&self, lane: usize) -> &[usize] {
        &self.successors[lane]
    }

    /// Whether the lane runs through an intersection.
    pub fn is_connector(&self, lane: usize) -> bool {
        self.connector[lane]
    }

    /// Direction of travel change along a lane.
    pub fn turn(&self, lane: usize) -> Turn {
        let l = &self.lanes[lane];
        let d = crate::scalar::wrap_angle(l.heading_at(l.length()) - l.heading_at(0.0));
        if d > TURN_ANGLE {
            Turn::Left
        } else if d < -TURN_ANGLE {
            Turn::Right
        } else {
            Turn::Straight
        }
    }

    pub fn in_intersection(&self, p: Point) -> Option<usize> {
        self.intersections.iter().position(|poly| convex_contains(poly, p))
    }

    /// Lane whose center is closest to `p`, with the distance.
    pub fn nearest_lane(&self, p: Point) -> Option<(usize, f64)> {
        self.lanes
            .iter()
            .enumerate()
            .map(|(i, l)| (i, l.project(p).lateral.abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Closest lane whose direction is within `max_angle` of `heading`.
    pub fn nearest_aligned_lane(&self, p: Point, heading: f64, max_angle: f64) -> Option<(usize, f64)> {
        self.lanes
            .iter()
            .enumerate()
            .filter_map(|(i, l)| {
                let pr = l.project(p);
                let dh = crate::scalar::wrap_angle(l.heading_at(pr.s) - heading).abs();
                (dh <= max_angle).then(|| (i, pr.point.distance(p)))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Whether `p` lies on the drivable surface: inside an intersection or within
    /// `lane_width / 2 + margin` of a lane center.
    pub fn on_road(&self, p: Point, margin: f64) -> bool {
        if self.in_intersection(p).is_some() {
            return true;
        }
        let limit = 0.5 * self.lane_width + margin;
        self.lanes.iter().any(|l| l.project(p).point.distance(p) <= limit)
    }

    /// Shortest lane sequence from `from` to `to` by breadth-first search.
    pub fn lane_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let mut prev = vec![usize::MAX; self.lanes.len()];
        let mut queue = std::collections::VecDeque::from([from]);
        prev[from] = from;
        while let Some(u) = queue.pop_front() {
            if u == to {
                let mut path = vec![to];
                let mut c = to;
                while c != from {
                    c = prev[c];
                    path.push(c);
                }
                path.reverse();
                return Some(path);
            }
            for &v in &self.successors[u] {
                if prev[v] == usize::MAX {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        None
    }
}
