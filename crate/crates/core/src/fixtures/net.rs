//! Builder for right-hand-traffic road networks with square junctions.

use crate::geometry::Vec2;
use crate::scalar::wrap_angle;
use crate::world::{Polyline, StopLine};
use crate::{Box2, Point};

/// Samples per meter on junction connectors.
const CONNECTOR_DENSITY: f64 = 2.0;

#[derive(Clone, Copy, Debug)]
struct Node {
    center: Point,
    half: f64,
}

#[derive(Clone, Debug)]
struct Road {
    from: usize,
    to: usize,
    via: Vec<Point>,
    lanes: usize,
    two_way: bool,
}

/// Lane produced by the builder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LaneKey {
    pub road: usize,
    /// Travels from the road's first node to its second.
    pub forward: bool,
    /// 0 is the rightmost lane.
    pub index: usize,
}

#[derive(Clone, Debug)]
pub struct Net {
    pub lane_width: f64,
    pub lanes: Vec<Vec<Point>>,
    pub keys: Vec<Option<LaneKey>>,
    pub intersections: Vec<Vec<Point>>,
}

impl Net {
    pub fn lane(&self, road: usize, forward: bool, index: usize) -> usize {
        let key = LaneKey { road, forward, index };
        self.keys
            .iter()
            .position(|k| *k == Some(key))
            .expect("lane exists")
    }

    pub fn polyline(&self, lane: usize) -> Polyline {
        Polyline::new(self.lanes[lane].clone()).expect("builder lanes are valid")
    }

    /// Point `s` meters along a lane (negative counts from the end).
    pub fn at(&self, lane: usize, s: f64) -> Point {
        let l = self.polyline(lane);
        l.point_at(if s < 0.0 { l.length() + s } else { s })
    }

    /// Stop line at the end of `lane`.
    pub fn stop_line(&self, lane: usize) -> StopLine {
        let l = self.polyline(lane);
        StopLine {
            center: l.end(),
            yaw: l.heading_at(l.length()),
            half_width: 0.5 * self.lane_width,
        }
    }

    /// Rectangle on `lane` ending `back` meters before its end.
    pub fn area_before_end(&self, lane: usize, back: f64, length: f64) -> Box2 {
        let l = self.polyline(lane);
        let s = l.length() - back - 0.5 * length;
        Box2::new(l.point_at(s), l.heading_at(s), length, 0.9 * self.lane_width)
    }
}

pub struct NetBuilder {
    lane_width: f64,
    nodes: Vec<Node>,
    roads: Vec<Road>,
}

fn bezier(p0: Point, d0: Point, p3: Point, d3: Point) -> Vec<Point> {
    let chord = p0.distance(p3);
    let turning = d0.dot(d3) < 0.9;
    let k = if turning { 0.39 * chord } else { chord / 3.0 };
    let p1 = p0 + d0 * k;
    let p2 = p3 - d3 * k;
    let n = ((chord * CONNECTOR_DENSITY).ceil() as usize).max(2);
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let u = 1.0 - t;
            p0 * (u * u * u) + p1 * (3.0 * u * u * t) + p2 * (3.0 * u * t * t) + p3 * (t * t * t)
        })
        .collect()
}

impl NetBuilder {
    pub fn new(lane_width: f64) -> Self {
        NetBuilder {
            lane_width,
            nodes: Vec::new(),
            roads: Vec::new(),
        }
    }

    /// Dead end or bend point.
    pub fn end(&mut self, x: f64, y: f64) -> usize {
        self.nodes.push(Node {
            center: Point::new(x, y),
            half: 0.0,
        });
        self.nodes.len() - 1
    }

    /// Square junction big enough for `lanes` lanes per direction.
    pub fn junction(&mut self, x: f64, y: f64, lanes: usize) -> usize {
        self.nodes.push(Node {
            center: Point::new(x, y),
            half: lanes as f64 * self.lane_width + 1.5,
        });
        self.nodes.len() - 1
    }

    pub fn road(&mut self, from: usize, to: usize, lanes: usize) -> usize {
        self.road_via(from, to, &[], lanes, true)
    }

    pub fn road_via(&mut self, from: usize, to: usize, via: &[Point], lanes: usize, two_way: bool) -> usize {
        self.roads.push(Road {
            from,
            to,
            via: via.to_vec(),
            lanes,
            two_way,
        });
        self.roads.len() - 1
    }

    fn centerline(&self, r: &Road) -> Polyline {
        let a = self.nodes[r.from];
        let b = self.nodes[r.to];
        let mut pts = vec![a.center];
        pts.extend_from_slice(&r.via);
        pts.push(b.center);
        let full = Polyline::new(pts).expect("road endpoints differ");
        full.slice(a.half, full.length() - b.half).expect("road longer than its junctions")
    }

    pub fn build(&self) -> Net {
        let w = self.lane_width;
        let mut lanes: Vec<Vec<Point>> = Vec::new();
        let mut keys = Vec::new();
        // (lane, node at the lane end / start, index, lanes on road)
        let mut incoming: Vec<(usize, usize, usize, usize)> = Vec::new();
        let mut outgoing: Vec<(usize, usize, usize, usize)> = Vec::new();
        for (ri, r) in self.roads.iter().enumerate() {
            let c = self.centerline(r);
            for forward in [true, false] {
                if !forward && !r.two_way {
                    continue;
                }
                let base = if forward { c.clone() } else { c.reversed() };
                let (start, end) = if forward { (r.from, r.to) } else { (r.to, r.from) };
                for i in 0..r.lanes {
                    let off = if r.two_way { -(r.lanes as f64 - i as f64 - 0.5) * w } else { (0.5 * (r.lanes as f64 - 1.0) - i as f64) * w };
                    let lane = base.offset(off);
                    lanes.push(lane.points().to_vec());
                    keys.push(Some(LaneKey { road: ri, forward, index: i }));
                    let id = lanes.len() - 1;
                    if self.nodes[end].half > 0.0 {
                        incoming.push((id, end, i, r.lanes));
                    }
                    if self.nodes[start].half > 0.0 {
                        outgoing.push((id, start, i, r.lanes));
                    }
                }
            }
        }
        let mut intersections = Vec::new();
        for (ni, n) in self.nodes.iter().enumerate() {
            if n.half <= 0.0 {
                continue;
            }
            let h = n.half;
            let c = n.center;
            intersections.push(vec![
                c + Point::new(-h, -h),
                c + Point::new(h, -h),
                c + Point::new(h, h),
                c + Point::new(-h, h),
            ]);
            for &(li, _, i, n_in) in incoming.iter().filter(|x| x.1 == ni) {
                let lin = Polyline::new(lanes[li].clone()).unwrap();
                let p0 = lin.end();
                let d0 = lin.tangent_at(lin.length());
                for &(lo, _, j, n_out) in outgoing.iter().filter(|x| x.1 == ni) {
                    let lout = Polyline::new(lanes[lo].clone()).unwrap();
                    let p3 = lout.start();
                    let d3 = lout.tangent_at(0.0);
                    let turn = wrap_angle(d3.angle() - d0.angle());
                    let ok = if turn.abs() < 0.5 {
                        i == j
                    } else if turn > 0.5 && turn < 2.6 {
                        i == n_in - 1 && j == n_out - 1
                    } else if turn < -0.5 && turn > -2.6 {
                        i == 0 && j == 0
                    } else {
                        false
                    };
                    if ok {
                        lanes.push(bezier(p0, d0, p3, d3));
                        keys.push(None);
                    }
                }
            }
        }
        Net {
            lane_width: w,
            lanes,
            keys,
            intersections,
        }
    }
}

/// Unit vector helper for fixtures.
pub fn dir(angle: f64) -> Point {
    Vec2::from_angle(angle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{LaneMap, Turn};

    #[test]
    fn cross_junction_connectivity() {
        let mut b = NetBuilder::new(3.5);
        let j = b.junction(0.0, 0.0, 1);
        let w = b.end(-100.0, 0.0);
        let e = b.end(100.0, 0.0);
        let n = b.end(0.0, 100.0);
        let s = b.end(0.0, -100.0);
        let rw = b.road(w, j, 1);
        let re = b.road(j, e, 1);
        let rn = b.road(j, n, 1);
        b.road(j, s, 1);
        let net = b.build();
        let map = LaneMap::new(
            (0..net.lanes.len()).map(|i| net.polyline(i)).collect(),
            3.5,
            net.intersections.clone(),
        );
        let from_w = net.lane(rw, true, 0);
        // eastbound arrival: straight, left and right exits
        assert_eq!(map.successors(from_w).len(), 3);
        let turns: Vec<Turn> = map.successors(from_w).iter().map(|&c| map.turn(c)).collect();
        assert!(turns.contains(&Turn::Left) && turns.contains(&Turn::Right) && turns.contains(&Turn::Straight));
        assert!(map.successors(from_w).iter().all(|&c| map.is_connector(c)));
        let path = map.lane_path(from_w, net.lane(rn, true, 0)).unwrap();
        assert_eq!(path.len(), 3);
        assert_eq!(map.turn(path[1]), Turn::Left);
        // right-hand traffic: eastbound lane lies south of the centerline
        assert!(net.at(from_w, 10.0).y < 0.0);
        assert!(net.at(net.lane(re, true, 0), 10.0).y < 0.0);
    }

    #[test]
    fn two_lane_turn_restrictions() {
        let mut b = NetBuilder::new(3.5);
        let j = b.junction(0.0, 0.0, 2);
        let w = b.end(-100.0, 0.0);
        let e = b.end(100.0, 0.0);
        let s = b.end(0.0, -100.0);
        let rw = b.road(w, j, 2);
        b.road(j, e, 2);
        b.road(j, s, 2);
        let net = b.build();
        let map = LaneMap::new(
            (0..net.lanes.len()).map(|i| net.polyline(i)).collect(),
            3.5,
            net.intersections.clone(),
        );
        let right_lane = net.lane(rw, true, 0);
        let left_lane = net.lane(rw, true, 1);
        let rt: Vec<Turn> = map.successors(right_lane).iter().map(|&c| map.turn(c)).collect();
        let lt: Vec<Turn> = map.successors(left_lane).iter().map(|&c| map.turn(c)).collect();
        assert!(rt.contains(&Turn::Right));
        assert_eq!(lt, vec![Turn::Straight]);
        // index 0 is the outer lane, index 1 borders the centerline
        assert!((net.at(right_lane, 10.0).y + 5.25).abs() < 1e-9);
        assert!((net.at(left_lane, 10.0).y + 1.75).abs() < 1e-9);
    }
}
