//! Small 2D geometry kernel: signed areas, distances, barycentric
//! coordinates, and half-plane clipping of convex polygons.
//!
//! Everything here works on plain `[f64; 2]` points; polygons are vertex
//! lists in counterclockwise order.

pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    dot(d, d).sqrt()
}

/// Signed area of triangle `(a, b, c)`; positive when counterclockwise.
#[inline]
pub fn tri_signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * cross(sub(b, a), sub(c, a))
}

/// Shoelace area of a polygon given in order (positive if counterclockwise).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        acc += cross(poly[i], poly[j]);
    }
    0.5 * acc
}

/// Distance from point `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Barycentric coordinates of `p` in triangle `(a, b, c)`.
///
/// Returns `None` for a degenerate (zero-area) triangle.  Coordinates sum to
/// one but may be negative when `p` lies outside.
pub fn barycentric(p: Point, a: Point, b: Point, c: Point) -> Option<[f64; 3]> {
    let area = tri_signed_area(a, b, c);
    if area == 0.0 {
        return None;
    }
    let la = tri_signed_area(p, b, c) / area;
    let lb = tri_signed_area(a, p, c) / area;
    let lc = 1.0 - la - lb;
    Some([la, lb, lc])
}

/// A half-plane `{ y : n·y <= c }`.
#[derive(Clone, Copy, Debug)]
pub struct HalfPlane {
    pub normal: Point,
    pub offset: f64,
}

impl HalfPlane {
    #[inline]
    pub fn contains(&self, p: Point) -> f64 {
        // Signed "inside margin": nonnegative means p satisfies n·p <= c.
        self.offset - dot(self.normal, p)
    }
}

/// Clip a convex polygon against one half-plane (one Sutherland–Hodgman
/// pass).  The input is consumed; the result may be empty.
pub fn clip_half_plane(poly: &[Point], hp: HalfPlane, out: &mut Vec<Point>) {
    out.clear();
    let n = poly.len();
    if n == 0 {
        return;
    }
    let mut prev = poly[n - 1];
    let mut prev_m = hp.contains(prev);
    for &cur in poly {
        let cur_m = hp.contains(cur);
        if (prev_m >= 0.0) != (cur_m >= 0.0) {
            // Edge crosses the boundary; margins have opposite signs so the
            // denominator is nonzero.
            let t = prev_m / (prev_m - cur_m);
            out.push([
                prev[0] + t * (cur[0] - prev[0]),
                prev[1] + t * (cur[1] - prev[1]),
            ]);
        }
        if cur_m >= 0.0 {
            out.push(cur);
        }
        prev = cur;
        prev_m = cur_m;
    }
}

/// Clip a convex polygon against an intersection of half-planes.
pub fn clip_convex(poly: &[Point], planes: &[HalfPlane]) -> Vec<Point> {
    let mut work: Vec<Point> = poly.to_vec();
    let mut buf: Vec<Point> = Vec::with_capacity(poly.len() + planes.len() + 1);
    for &hp in planes {
        clip_half_plane(&work, hp, &mut buf);
        std::mem::swap(&mut work, &mut buf);
        if work.len() < 3 {
            work.clear();
            return work;
        }
    }
    work
}
