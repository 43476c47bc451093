use crate::geometry::project_on_segment;
use crate::Point;

/// Piecewise-linear curve with cached cumulative arc length.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    points: Vec<Point>,
    cum: Vec<f64>,
}

/// Closest-point query result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    /// Arc length of the closest point.
    pub s: f64,
    /// Signed distance, positive to the left of the direction of travel.
    pub lateral: f64,
    pub segment: usize,
    pub point: Point,
}

impl Polyline {
    /// Requires at least two points; consecutive duplicates are dropped.
    pub fn new(points: Vec<Point>) -> Option<Self> {
        let mut pts: Vec<Point> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().is_none_or(|q| q.distance(p) > 1e-9) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return None;
        }
        let mut cum = Vec::with_capacity(pts.len());
        cum.push(0.0);
        for w in pts.windows(2) {
            let last = *cum.last().unwrap();
            cum.push(last + w[0].distance(w[1]));
        }
        Some(Polyline { points: pts, cum })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn start(&self) -> Point {
        self.points[0]
    }

    pub fn end(&self) -> Point {
        *self.points.last().unwrap()
    }

    fn segment_at(&self, s: f64) -> usize {
        let i = self.cum.partition_point(|&c| c <= s);
        i.saturating_sub(1).min(self.points.len() - 2)
    }

    /// Point at arc length `s`, clamped to the curve.
    pub fn point_at(&self, s: f64) -> Point {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let len = self.cum[i + 1] - self.cum[i];
        let t = if len > 0.0 { (s - self.cum[i]) / len } else { 0.0 };
        self.points[i].lerp(self.points[i + 1], t)
    }

    /// Unit tangent at arc length `s`.
    pub fn tangent_at(&self, s: f64) -> Point {
        let i = self.segment_at(s.clamp(0.0, self.length()));
        (self.points[i + 1] - self.points[i]).normalized()
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        self.tangent_at(s).angle()
    }

    fn project_segments(&self, p: Point, lo: usize, hi: usize) -> Projection {
        let mut best: Option<(f64, Projection)> = None;
        for i in lo..hi.min(self.points.len() - 1) {
            let (a, b) = (self.points[i], self.points[i + 1]);
            let (q, t) = project_on_segment(p, a, b);
            let d = q.distance(p);
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                let dir = b - a;
                let side = dir.cross(p - q);
                let lateral = if side >= 0.0 { d } else { -d };
                best = Some((
                    d,
                    Projection {
                        s: self.cum[i] + t * (self.cum[i + 1] - self.cum[i]),
                        lateral,
                        segment: i,
                        point: q,
                    },
                ));
            }
        }
        best.expect("non-empty segment range").1
    }

    /// Global closest point.
    pub fn project(&self, p: Point) -> Projection {
        self.project_segments(p, 0, self.points.len() - 1)
    }

    /// Closest point restricted to arc lengths in `[s_lo, s_hi]` (segment granularity).
    pub fn project_window(&self, p: Point, s_lo: f64, s_hi: f64) -> Projection {
        let lo = self.segment_at(s_lo.max(0.0));
        let hi = self.segment_at(s_hi.min(self.length())) + 1;
        self.project_segments(p, lo, hi)
    }

    /// Points at every `step` meters of arc length, plus the end point.
    pub fn resample(&self, step: f64) -> Polyline {
        let len = self.length();
        let n = (len / step + 1e-9).floor() as usize;
        let mut pts: Vec<Point> = (0..=n).map(|k| self.point_at(k as f64 * step)).collect();
        if len - n as f64 * step > 1e-9 {
            pts.push(self.end());
        }
        Polyline::new(pts).expect("resampled curve keeps its endpoints")
    }

    /// Copy shifted sideways by `offset` (positive to the left).
    pub fn offset(&self, offset: f64) -> Polyline {
        let n = self.points.len();
        let pts = (0..n)
            .map(|i| {
                let t = if i == 0 {
                    self.points[1] - self.points[0]
                } else if i == n - 1 {
                    self.points[n - 1] - self.points[n - 2]
                } else {
                    (self.points[i + 1] - self.points[i]).normalized()
                        + (self.points[i] - self.points[i - 1]).normalized()
                };
                self.points[i] + t.normalized().perp() * offset
            })
            .collect();
        Polyline::new(pts).expect("offset keeps point count")
    }

    /// Sub-curve between two arc lengths.
    pub fn slice(&self, s0: f64, s1: f64) -> Option<Polyline> {
        let (s0, s1) = (s0.clamp(0.0, self.length()), s1.clamp(0.0, self.length()));
        if s1 <= s0 {
            return None;
        }
        let mut pts = vec![self.point_at(s0)];
        for (i, &c) in self.cum.iter().enumerate() {
            if c > s0 && c < s1 {
                pts.push(self.points[i]);
            }
        }
        pts.push(self.point_at(s1));
        Polyline::new(pts)
    }

    pub fn reversed(&self) -> Polyline {
        let mut pts = self.points.clone();
        pts.reverse();
        Polyline::new(pts).expect("reversal keeps point count")
    }

    /// Starting at arc length `s_from` and at point `from`, walks forward to the
    /// first point on the curve exactly `dist` away (Euclidean). Returns the
    /// point and its arc length, or `None` when the curve ends first.
    pub fn next_at_distance(&self, from: Point, s_from: f64, dist: f64) -> Option<(Point, f64)> {
        let start = self.segment_at(s_from.clamp(0.0, self.length()));
        for i in start..self.points.len() - 1 {
            let a = if i == start { self.point_at(s_from) } else { self.points[i] };
            let b = self.points[i + 1];
            if b.distance(from) < dist {
                continue;
            }
            // solve |a + t (b - a) - from| = dist for the largest root in [0, 1]
            let d = b - a;
            let f = a - from;
            let qa = d.dot(d);
            if qa <= 0.0 {
                continue;
            }
            let qb = 2.0 * f.dot(d);
            let qc = f.dot(f) - dist * dist;
            let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
            let t = ((-qb + disc.sqrt()) / (2.0 * qa)).clamp(0.0, 1.0);
            let p = a + d * t;
            let s0 = if i == start { s_from.max(self.cum[i]) } else { self.cum[i] };
            let seg_len = self.cum[i + 1] - s0;
            return Some((p, s0 + t * seg_len));
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Polyline {
        Polyline::new((0..=n).map(|i| Point::new(i as f64, 0.0)).collect()).unwrap()
    }

    #[test]
    fn rejects_degenerate() {
        assert!(Polyline::new(vec![Point::new(1.0, 1.0)]).is_none());
        assert!(Polyline::new(vec![Point::new(1.0, 1.0), Point::new(1.0, 1.0)]).is_none());
    }

    #[test]
    fn projection_signs() {
        let l = line(10);
        let p = l.project(Point::new(4.5, 2.0));
        assert!((p.s - 4.5).abs() < 1e-12);
        assert!((p.lateral - 2.0).abs() < 1e-12);
        assert!(l.project(Point::new(4.5, -1.0)).lateral < 0.0);
    }

    #[test]
    fn resample_straight_100() {
        let l = Polyline::new(vec![Point::new(0.0, 0.0), Point::new(100.0, 0.0)]).unwrap();
        let r = l.resample(1.0);
        assert_eq!(r.points().len(), 101);
        let l = Polyline::new(vec![Point::new(0.0, 0.0), Point::new(10.5, 0.0)]).unwrap();
        assert_eq!(l.resample(1.0).points().len(), 12);
    }

    #[test]
    fn next_at_distance_walks_corner() {
        let l = Polyline::new(vec![
            Point::new(0.0, 0.0),
            Point::new(5.0, 0.0),
            Point::new(5.0, 5.0),
        ])
        .unwrap();
        let mut from = Point::new(0.0, 0.0);
        let mut s = 0.0;
        for _ in 0..8 {
            let (p, ns) = l.next_at_distance(from, s, 1.0).unwrap();
            assert!((p.distance(from) - 1.0).abs() < 1e-12);
            assert!(ns >= s);
            from = p;
            s = ns;
        }
    }
}
