//! Arc-length parameterized polylines shared by the pilot, the controller
//! and the metrics.

use nalgebra::Vector2;

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vector2<f64>>,
    /// Cumulative arc length at each vertex.
    arc: Vec<f64>,
}

/// Closest point on a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub segment: usize,
    /// Fraction along the segment, in `[0, 1]`.
    pub fraction: f64,
    pub arc_length: f64,
    pub distance: f64,
}

impl Polyline {
    /// Builds a polyline, dropping consecutive duplicate vertices.
    pub fn new(points: impl IntoIterator<Item = Vector2<f64>>) -> Self {
        let mut pts: Vec<Vector2<f64>> = Vec::new();
        for p in points {
            if pts.last().is_none_or(|q| (p - q).norm() > 0.0) {
                pts.push(p);
            }
        }
        let mut arc = Vec::with_capacity(pts.len());
        let mut s = 0.0;
        for (i, p) in pts.iter().enumerate() {
            if i > 0 {
                s += (p - pts[i - 1]).norm();
            }
            arc.push(s);
        }
        Self { points: pts, arc }
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segment_count(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn length(&self) -> f64 {
        self.arc.last().copied().unwrap_or(0.0)
    }

    pub fn arc_at(&self, vertex: usize) -> f64 {
        self.arc[vertex]
    }

    pub fn segment(&self, i: usize) -> (Vector2<f64>, Vector2<f64>) {
        (self.points[i], self.points[i + 1])
    }

    /// Segment index containing arc length `s` (clamped to the polyline).
    pub fn segment_at(&self, s: f64) -> usize {
        let n = self.segment_count();
        if n == 0 {
            return 0;
        }
        match self.arc.binary_search_by(|a| a.total_cmp(&s)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    /// Point at arc length `s`, clamped to the ends.
    pub fn point_at(&self, s: f64) -> Vector2<f64> {
        if self.points.len() == 1 {
            return self.points[0];
        }
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let (a, b) = self.segment(i);
        let len = self.arc[i + 1] - self.arc[i];
        let u = if len > 0.0 { (s - self.arc[i]) / len } else { 0.0 };
        a + (b - a) * u.clamp(0.0, 1.0)
    }

    /// Unit direction of segment `i`.
    pub fn direction(&self, i: usize) -> Vector2<f64> {
        let (a, b) = self.segment(i);
        (b - a).normalize()
    }

    fn project_onto(&self, p: Vector2<f64>, i: usize) -> Projection {
        let (a, b) = self.segment(i);
        let e = b - a;
        let len2 = e.norm_squared();
        let u = if len2 > 0.0 {
            ((p - a).dot(&e) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let closest = a + e * u;
        Projection {
            segment: i,
            fraction: u,
            arc_length: self.arc[i] + u * (self.arc[i + 1] - self.arc[i]),
            distance: (p - closest).norm(),
        }
    }

    /// Closest point over all segments; ties resolve to the earlier segment.
    pub fn project(&self, p: Vector2<f64>) -> Option<Projection> {
        self.project_within(p, 0.0, f64::INFINITY)
    }

    /// Closest point over segments overlapping the arc-length window
    /// `[s_min, s_max]`.
    pub fn project_within(&self, p: Vector2<f64>, s_min: f64, s_max: f64) -> Option<Projection> {
        let n = self.segment_count();
        if n == 0 {
            return None;
        }
        let first = self.segment_at(s_min.max(0.0));
        let last = self.segment_at(s_max.min(self.length()));
        let mut best: Option<Projection> = None;
        for i in first..=last {
            let cand = self.project_onto(p, i);
            if best.is_none_or(|b| cand.distance < b.distance) {
                best = Some(cand);
            }
        }
        best
    }
}

/// Signed perpendicular offset of `p` from the directed line through `a`
/// and `b`; positive to the left.
pub fn signed_offset(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    let e = b - a;
    let d = p - a;
    (e.x * d.y - e.y * d.x) / e.norm()
}

/// Whether the closed segments `p1p2` and `q1q2` intersect.
pub fn segments_intersect(p1: Vector2<f64>, p2: Vector2<f64>, q1: Vector2<f64>, q2: Vector2<f64>) -> bool {
    let cross = |o: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>| (a - o).perp(&(b - o));
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on_segment = |a: Vector2<f64>, b: Vector2<f64>, p: Vector2<f64>| {
        p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
    };
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vector2<f64> {
        Vector2::new(x, y)
    }

    #[test]
    fn arc_length_queries() {
        let line = Polyline::new([v(0.0, 0.0), v(3.0, 0.0), v(3.0, 0.0), v(3.0, 4.0)]);
        assert_eq!(line.len(), 3);
        assert_eq!(line.length(), 7.0);
        assert_eq!(line.point_at(5.0), v(3.0, 2.0));
        assert_eq!(line.point_at(-1.0), v(0.0, 0.0));
        assert_eq!(line.point_at(100.0), v(3.0, 4.0));
        let proj = line.project(v(4.0, 1.0)).unwrap();
        assert_eq!(proj.segment, 1);
        assert!((proj.arc_length - 4.0).abs() < 1e-12);
        assert!((proj.distance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn signed_offset_is_left_positive() {
        assert!((signed_offset(v(1.0, 0.3), v(0.0, 0.0), v(2.0, 0.0)) - 0.3).abs() < 1e-15);
        assert!((signed_offset(v(1.0, -0.3), v(0.0, 0.0), v(2.0, 0.0)) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn intersection_cases() {
        assert!(segments_intersect(v(0.0, 0.0), v(2.0, 2.0), v(0.0, 2.0), v(2.0, 0.0)));
        assert!(!segments_intersect(v(0.0, 0.0), v(1.0, 0.0), v(0.0, 1.0), v(1.0, 1.0)));
        assert!(segments_intersect(v(0.0, 0.0), v(1.0, 0.0), v(1.0, 0.0), v(1.0, 1.0)));
    }
}
