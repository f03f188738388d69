//! Planar polygon helpers: shoelace area, crossing-number containment,
//! point-to-segment distance and simplicity checks.

use crate::model::State;

/// Signed shoelace area; positive for counterclockwise vertex order.
pub fn signed_area(poly: &[State]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a.x1 * b.x2 - b.x1 * a.x2;
    }
    0.5 * acc
}

/// Crossing-number test with the half-open convention: points on left and
/// bottom edges count as inside, points on right and top edges as outside.
pub fn point_in_polygon(poly: &[State], q: State) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.x2 > q.x2) != (b.x2 > q.x2) {
            let x_cross = a.x1 + (q.x2 - a.x2) * (b.x1 - a.x1) / (b.x2 - a.x2);
            if q.x1 < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy)]
struct Chunk {
    start: usize,
    end: usize,
    lo: State,
    hi: State,
}

/// Edges of a closed polygon grouped into runs of consecutive edges with
/// bounding boxes. Queries give the same answers as the plain scans but
/// skip runs that cannot matter. Edge `i` joins vertex `i` to `i + 1`.
#[derive(Debug, Clone)]
pub struct PolygonIndex {
    chunks: Vec<Chunk>,
}

impl PolygonIndex {
    pub fn new(poly: &[State]) -> Self {
        let n = poly.len();
        let mut chunks = Vec::with_capacity(n.div_ceil(CHUNK));
        let mut start = 0;
        while start < n {
            let end = (start + CHUNK).min(n);
            let mut lo = poly[start];
            let mut hi = poly[start];
            for i in start..end {
                for v in [poly[i], poly[(i + 1) % n]] {
                    lo = State::new(lo.x1.min(v.x1), lo.x2.min(v.x2));
                    hi = State::new(hi.x1.max(v.x1), hi.x2.max(v.x2));
                }
            }
            chunks.push(Chunk { start, end, lo, hi });
            start = end;
        }
        PolygonIndex { chunks }
    }

    /// Same result as [`point_in_polygon`].
    pub fn contains(&self, poly: &[State], q: State) -> bool {
        let n = poly.len();
        if n < 3 {
            return false;
        }
        let mut inside = false;
        for c in &self.chunks {
            if q.x2 < c.lo.x2 || q.x2 >= c.hi.x2 || q.x1 > c.hi.x1 + 1e-12 {
                continue;
            }
            for i in c.start..c.end {
                let (a, b) = (poly[(i + 1) % n], poly[i]);
                if (a.x2 > q.x2) != (b.x2 > q.x2) {
                    let x_cross = a.x1 + (q.x2 - a.x2) * (b.x1 - a.x1) / (b.x2 - a.x2);
                    if q.x1 < x_cross {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }

    /// Nearest edge not excluded by `skip`, as `(edge, distance)`. Ties go
    /// to the lower edge index.
    pub fn nearest(&self, poly: &[State], q: State, skip: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
        let n = poly.len();
        let mut order: Vec<(f64, usize)> = self
            .chunks
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let dx = (c.lo.x1 - q.x1).max(q.x1 - c.hi.x1).max(0.0);
                let dy = (c.lo.x2 - q.x2).max(q.x2 - c.hi.x2).max(0.0);
                (dx.hypot(dy), k)
            })
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best: Option<(usize, f64)> = None;
        for (bound, k) in order {
            if best.is_some_and(|(_, d)| bound > d) {
                break;
            }
            let c = self.chunks[k];
            for i in c.start..c.end {
                if skip(i) {
                    continue;
                }
                let d = point_segment_distance(q, poly[i], poly[(i + 1) % n]);
                match best {
                    Some((bi, bd)) if d > bd || (d == bd && i > bi) => {}
                    _ => best = Some((i, d)),
                }
            }
        }
        best
    }
}

pub fn point_segment_distance(q: State, a: State, b: State) -> f64 {
    let (dx, dy) = (b.x1 - a.x1, b.x2 - a.x2);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return q.dist(a);
    }
    let t = (((q.x1 - a.x1) * dx + (q.x2 - a.x2) * dy) / len2).clamp(0.0, 1.0);
    q.dist(State::new(a.x1 + t * dx, a.x2 + t * dy))
}

fn orient(a: State, b: State, c: State) -> f64 {
    (b.x1 - a.x1) * (c.x2 - a.x2) - (b.x2 - a.x2) * (c.x1 - a.x1)
}

fn on_segment(a: State, b: State, c: State) -> bool {
    c.x1 >= a.x1.min(b.x1) && c.x1 <= a.x1.max(b.x1) && c.x2 >= a.x2.min(b.x2) && c.x2 <= a.x2.max(b.x2)
}

/// Closed-segment intersection test.
pub fn segments_intersect(p1: State, p2: State, q1: State, q2: State) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Open polyline without self-intersections (adjacent segments may share
/// their common vertex).
pub fn polyline_is_simple(pts: &[State]) -> bool {
    let n = pts.len();
    for i in 0..n.saturating_sub(1) {
        for j in (i + 2)..n.saturating_sub(1) {
            if segments_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1]) {
                return false;
            }
        }
    }
    true
}

/// Closed polygon without self-intersections.
pub fn polygon_is_simple(poly: &[State]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}
