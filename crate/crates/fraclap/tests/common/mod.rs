//! Brute-force reference implementations shared by the oracle and acceptance
//! suites.  Everything here is deliberately independent of the library's
//! closed forms: moments are computed by graded Gauss-Legendre quadrature and
//! clipping checks go through a local Sutherland-Hodgman pass, so agreement
//! with `fraclap` is evidence rather than tautology.

#![allow(dead_code)]

use fraclap::{Affine2, Square};

type Point = [f64; 2];

/// Nodes and weights of the 12-point Gauss-Legendre rule on [-1, 1].
const GL12: [(f64, f64); 12] = [
    (-0.981560634246719, 0.047175336386512),
    (-0.904117256370475, 0.106939325995318),
    (-0.769902674194305, 0.160078328543346),
    (-0.587317954286617, 0.203167426723066),
    (-0.367831498998180, 0.233492536538355),
    (-0.125233408511469, 0.249147045813403),
    (0.125233408511469, 0.249147045813403),
    (0.367831498998180, 0.233492536538355),
    (0.587317954286617, 0.203167426723066),
    (0.769902674194305, 0.160078328543346),
    (0.904117256370475, 0.106939325995318),
    (0.981560634246719, 0.047175336386512),
];

/// ∫_a^b f(y) dy by 12-point Gauss-Legendre on one panel.
fn gl_panel(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let rad = 0.5 * (b - a);
    GL12.iter().map(|&(x, w)| w * f(mid + rad * x)).sum::<f64>() * rad
}

/// ∫_a^b f(y) dy with panels geometrically graded toward `toward` (which may
/// be an endpoint or lie outside [a, b]); handles integrands whose
/// derivatives blow up near that point.
pub fn integrate_graded(f: impl Fn(f64) -> f64, a: f64, b: f64, toward: f64) -> f64 {
    // Split at the endpoint closest to `toward`, then shrink panels
    // geometrically into it.  40 panels with ratio 0.7 reach ~1e-6 of the
    // interval length, far below any separation the callers use.
    let (near, far) = if (toward - a).abs() <= (toward - b).abs() {
        (a, b)
    } else {
        (b, a)
    };
    let mut total = 0.0;
    let mut frac = 1.0f64;
    for _ in 0..40 {
        let next = frac * 0.7;
        let lo = near + (far - near) * next;
        let hi = near + (far - near) * frac;
        total += gl_panel(&f, lo.min(hi), lo.max(hi));
        frac = next;
    }
    total += gl_panel(&f, near.min(near + (far - near) * frac), near.max(near + (far - near) * frac));
    total
}

/// Brute-force `C(1,s) ∫_a^b w(y) |y-x|^{-1-2s} dy` for an affine weight
/// interpolating `w_a`, `w_b`.
pub fn interval_moment_brute(c_1s: f64, s: f64, x: f64, a: f64, b: f64, w_a: f64, w_b: f64) -> f64 {
    let w = move |y: f64| w_a + (w_b - w_a) * (y - a) / (b - a);
    c_1s * integrate_graded(|y| w(y) * (y - x).abs().powf(-1.0 - 2.0 * s), a, b, x)
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn signed_area(poly: &[Point]) -> f64 {
    let m = poly.len();
    0.5 * (0..m)
        .map(|i| cross(poly[i], poly[(i + 1) % m]))
        .sum::<f64>()
}

fn point_segment_dist(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = ((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2;
    let t = t.clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Distance from a point (assumed outside) to a triangle.
fn tri_dist(p: Point, tri: &[Point; 3]) -> f64 {
    (0..3)
        .map(|i| point_segment_dist(p, tri[i], tri[(i + 1) % 3]))
        .fold(f64::INFINITY, f64::min)
}

/// ∫_T f dA by a tensor Gauss-Legendre rule under the Duffy-style map
/// P = A + u((1-v)(B-A) + v(C-A)), whose Jacobian is 2|T| u.
fn duffy_gl(tri: &[Point; 3], f: &impl Fn(Point) -> f64) -> f64 {
    let area2 = cross(sub(tri[1], tri[0]), sub(tri[2], tri[0])).abs();
    let mut total = 0.0;
    for &(xu, wu) in &GL12 {
        let u = 0.5 * (xu + 1.0);
        for &(xv, wv) in &GL12 {
            let v = 0.5 * (xv + 1.0);
            let p = [
                tri[0][0] + u * ((1.0 - v) * (tri[1][0] - tri[0][0]) + v * (tri[2][0] - tri[0][0])),
                tri[0][1] + u * ((1.0 - v) * (tri[1][1] - tri[0][1]) + v * (tri[2][1] - tri[0][1])),
            ];
            total += wu * wv * u * f(p);
        }
    }
    total * area2 * 0.25
}

/// Adaptive triangle quadrature: subdivide at edge midpoints until each piece
/// is well separated from `x`, then apply the Duffy rule.
fn tri_quad_near(x: Point, tri: &[Point; 3], f: &impl Fn(Point) -> f64, depth: u32) -> f64 {
    let diam = (0..3)
        .map(|i| dist(tri[i], tri[(i + 1) % 3]))
        .fold(0.0f64, f64::max);
    if depth >= 14 || tri_dist(x, tri) >= 2.0 * diam {
        return duffy_gl(tri, f);
    }
    let m01 = [0.5 * (tri[0][0] + tri[1][0]), 0.5 * (tri[0][1] + tri[1][1])];
    let m12 = [0.5 * (tri[1][0] + tri[2][0]), 0.5 * (tri[1][1] + tri[2][1])];
    let m20 = [0.5 * (tri[2][0] + tri[0][0]), 0.5 * (tri[2][1] + tri[0][1])];
    [
        [tri[0], m01, m20],
        [m01, tri[1], m12],
        [m20, m12, tri[2]],
        [m01, m12, m20],
    ]
    .iter()
    .map(|t| tri_quad_near(x, t, f, depth + 1))
    .sum()
}

/// Brute-force `C(2,s) ∫_P w(y) |y-x|^{-2-2s} dy` over a simple polygon by
/// fan triangulation plus adaptive Duffy quadrature.
pub fn polygon_moment_brute(c_2s: f64, s: f64, x: Point, poly: &[Point], w: &Affine2) -> f64 {
    let f = |p: Point| w.eval(p) * dist(p, x).powf(-2.0 - 2.0 * s);
    let mut total = 0.0;
    for i in 1..poly.len() - 1 {
        let tri = [poly[0], poly[i], poly[i + 1]];
        // Fan triangles of a convex polygon are positively oriented; keep
        // the orientation-agnostic form anyway.
        let sign = cross(sub(tri[1], tri[0]), sub(tri[2], tri[0])).signum();
        total += sign * tri_quad_near(x, &tri, &f, 0);
    }
    c_2s * total
}

/// Clip a convex polygon against the half-plane n·p ≤ c (Sutherland-Hodgman,
/// local to the tests).
pub fn clip_halfplane_pub(poly: &[Point], n: Point, c: f64) -> Vec<Point> {
    clip_halfplane(poly, n, c)
}

fn clip_halfplane(poly: &[Point], n: Point, c: f64) -> Vec<Point> {
    let mut out = Vec::new();
    let m = poly.len();
    for i in 0..m {
        let (p, q) = (poly[i], poly[(i + 1) % m]);
        let (dp, dq) = (n[0] * p[0] + n[1] * p[1] - c, n[0] * q[0] + n[1] * q[1] - c);
        if dp <= 0.0 {
            out.push(p);
        }
        if (dp < 0.0) != (dq < 0.0) && dp != dq {
            let t = dp / (dp - dq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Area of `tri ∩ square` via the local clipper.
pub fn tri_square_intersection_area(tri: &[Point; 3], square: &Square) -> f64 {
    let [lo, hi] = square.bounds();
    let mut poly = tri.to_vec();
    for (n, c) in [
        ([-1.0, 0.0], -lo[0]),
        ([1.0, 0.0], hi[0]),
        ([0.0, -1.0], -lo[1]),
        ([0.0, 1.0], hi[1]),
    ] {
        poly = clip_halfplane(&poly, n, c);
        if poly.len() < 3 {
            return 0.0;
        }
    }
    signed_area(&poly).abs()
}

/// A deterministic ChaCha stream so every "random configuration" in the
/// suites is reproducible from its seed.
pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Worst relative disagreement between `interval_kernel_moment` and the
/// graded-quadrature reference over randomized (s, interval, x, weight)
/// configurations.
pub fn interval_moment_max_rel_err(configs: usize, seed: u64) -> f64 {
    use rand::Rng;
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..configs {
        let s = rng.random_range(0.05..0.95);
        let a = rng.random_range(-2.0..2.0);
        let len = rng.random_range(0.05..1.5);
        let b = a + len;
        let gap = rng.random_range(0.02..2.0) * len;
        let x = if rng.random_range(0..2u32) == 0 { a - gap } else { b + gap };
        let (w_a, w_b) = (rng.random_range(0.1..2.0), rng.random_range(0.1..2.0));
        let consts = fraclap::KernelConstants::new(1, s).unwrap();
        let got = fraclap::interval_kernel_moment(&consts, x, a, b, w_a, w_b).unwrap();
        let want = interval_moment_brute(consts.c_ns, s, x, a, b, w_a, w_b);
        worst = worst.max((got - want).abs() / want.abs());
    }
    worst
}

/// Random simple polygon, star-shaped around `c`, with `m` vertices, plus
/// its circumradius about `c`.  Angular gaps are kept inside (0.15, π - 0.1)
/// so `c` is strictly interior, which makes the angle-sorted vertex order
/// simple and positively oriented.
fn star_polygon(rng: &mut impl rand::Rng, c: Point, m: usize) -> (Vec<Point>, f64) {
    use std::f64::consts::{PI, TAU};
    loop {
        let mut angles: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let gaps = (0..m).map(|i| {
            if i + 1 < m {
                angles[i + 1] - angles[i]
            } else {
                angles[0] + TAU - angles[m - 1]
            }
        });
        if !gaps.clone().all(|g| g > 0.15 && g < PI - 0.1) {
            continue;
        }
        let mut rmax = 0.0f64;
        let poly = angles
            .iter()
            .map(|&t| {
                let r = rng.random_range(0.3..1.0);
                rmax = rmax.max(r);
                [c[0] + r * t.cos(), c[1] + r * t.sin()]
            })
            .collect();
        return (poly, rmax);
    }
}

/// Worst relative disagreement between `polygon_kernel_moment` and the
/// adaptive Duffy reference over randomized (s, polygon, x, weight)
/// configurations.
pub fn polygon_moment_max_rel_err(configs: usize, seed: u64) -> f64 {
    use rand::Rng;
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..configs {
        let s = rng.random_range(0.05..0.95);
        let c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let m = rng.random_range(3..=6);
        let (poly, rmax) = star_polygon(&mut rng, c, m);
        let d = rng.random_range(0.1..1.2);
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let x = [c[0] + (rmax + d) * phi.cos(), c[1] + (rmax + d) * phi.sin()];
        let weight = Affine2 {
            c0: rng.random_range(1.0..2.0),
            grad: [rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)],
        };
        let consts = fraclap::KernelConstants::new(2, s).unwrap();
        let got = fraclap::polygon_kernel_moment(&consts, x, &poly, &weight).unwrap();
        let want = polygon_moment_brute(consts.c_ns, s, x, &poly, &weight);
        worst = worst.max((got - want).abs() / want.abs());
    }
    worst
}

/// Random triangle with area at least `min_area`, vertices in [-1.5, 1.5]².
pub fn random_triangle(rng: &mut impl rand::Rng, min_area: f64) -> [Point; 3] {
    loop {
        let tri: [Point; 3] = std::array::from_fn(|_| {
            [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)]
        });
        let a = 0.5 * cross(sub(tri[1], tri[0]), sub(tri[2], tri[0]));
        if a.abs() >= min_area {
            // Positive orientation, matching the mesh convention.
            return if a > 0.0 { tri } else { [tri[0], tri[2], tri[1]] };
        }
    }
}

/// Worst relative area defect `|area(T) - area(T∩S) - Σ area(pieces)|`
/// over randomized triangle/square configurations, with `T∩S` measured by
/// the local clipper.
pub fn clip_area_max_rel_err(configs: usize, seed: u64) -> f64 {
    use rand::Rng;
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..configs {
        let tri = random_triangle(&mut rng, 0.01);
        let square = Square {
            center: [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)],
            half_side: rng.random_range(0.05..1.0),
        };
        let pieces = fraclap::clip_triangle_minus_square(&tri, &square);
        let outside: f64 = pieces.iter().map(|p| signed_area(p)).sum();
        let inside = tri_square_intersection_area(&tri, &square);
        let area = signed_area(&tri);
        worst = worst.max((area - inside - outside).abs() / area);
    }
    worst
}
