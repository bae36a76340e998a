//! Discretization of the integral fractional Laplacian
//!
//! ```text
//! L_h[u](xᵢ) = C(n,s) [ -κᵢ Δ_FD u(xᵢ; Hᵢ) / Hᵢ^{2s}
//!                       + ∫_{Ωᵢᶜ} (u(xᵢ) - u(y)) |xᵢ - y|^{-n-2s} dy ]
//! ```
//!
//! where `Δ_FD` is the 2n-point second difference with arm length `Hᵢ`,
//! `Ωᵢ` is an interval of radius `Hᵢ` (1D) or the axis-aligned square of
//! half-diagonal `Hᵢ` (2D) centered at the node, and `κᵢ` restores the
//! angular average of the kernel over `Ωᵢ`.  Stencil arms land between grid
//! nodes and are closed by barycentric interpolation, which keeps every
//! off-diagonal coupling nonpositive; the exterior integral contributes
//! `u(xᵢ) ∫_{Ωᵢᶜ} k` on the diagonal and nonnegative hat-function moments
//! `w_ij` off it.  The result is a strictly diagonally dominant M-matrix.
//!
//! The exterior moments are exact in 1D and computed in 2D by rewriting
//! `∫_P φ |y-x|^{-2-2s} dy` as boundary integrals of `F = |y-x|^{-2s}/(4s²)`
//! (the kernel is `ΔF` and `φ` is affine on each piece, so integrating by
//! parts twice leaves only `∂P` terms).

use crate::geometry::{self, HalfPlane, Point};
use crate::mesh::{Mesh, NodeClass, NodeClassification, OmegaShape, PointLocator};
use crate::quadrature::{adaptive_simpson, gl16, gl4, gl8};
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::SeedableRng;
use statrs::function::beta::{beta, beta_reg};
use statrs::function::gamma::gamma;
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};
use std::fmt;
use std::io::Write as _;
use std::path::Path;

/// Shape of the singular neighborhood `Ωᵢ`, without its size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OmegaKind {
    Interval,
    Square,
}

/// Dimension, order, and normalization constant of the kernel
/// `C(n,s) |z|^{-n-2s}` with `C(n,s) = 2^{2s} s Γ(s + n/2) / (π^{n/2} Γ(1-s))`.
#[derive(Clone, Copy, Debug)]
pub struct KernelConstants {
    pub dimension: usize,
    pub s: f64,
    pub c_ns: f64,
}

fn check_s(s: f64) -> Result<()> {
    if s.is_finite() && s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("fractional order s = {s} must lie in (0, 1)")))
    }
}

impl KernelConstants {
    pub fn new(dimension: usize, s: f64) -> Result<Self> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::invalid(format!("dimension must be 1 or 2, got {dimension}")));
        }
        check_s(s)?;
        let n = dimension as f64;
        let c_ns = (2.0 * s).exp2() * s * gamma(s + 0.5 * n) / (PI.powf(0.5 * n) * gamma(1.0 - s));
        Ok(KernelConstants { dimension, s, c_ns })
    }

    pub fn omega_kind(&self) -> OmegaKind {
        if self.dimension == 1 {
            OmegaKind::Interval
        } else {
            OmegaKind::Square
        }
    }
}

/// `B_{1/2}(1/2, b) = ∫₀^{1/2} t^{-1/2} (1-t)^{b-1} dt` for `b > 0`.
fn incomplete_beta_half(b: f64) -> f64 {
    beta_reg(0.5, b, 0.5) * beta(0.5, b)
}

/// The angular factor `κ` of the finite-difference part:
/// `κ = (1/(4n(1-s))) ∫_{S^{n-1}} (ρ(θ)/H)^{2-2s} dθ` with `ρ` the radial
/// extent of `Ωᵢ`.
///
/// For the interval this is `1/(2(1-s))`; for the square it reduces to
/// `2^{s-2} B_{1/2}(1/2, s-1/2) / (1-s)`, with `B_{1/2}(1/2, b)` continued to
/// `b ≤ 0` by one integration-by-parts step.  Near `s = 1/2` the closed form
/// cancels, so a thin band falls back to [`kappa_square_quadrature`].
pub fn kappa_constant(kind: OmegaKind, s: f64) -> Result<f64> {
    check_s(s)?;
    Ok(match kind {
        OmegaKind::Interval => 0.5 / (1.0 - s),
        OmegaKind::Square => {
            if (s - 0.5).abs() < 1e-3 {
                kappa_square_quadrature(s)
            } else {
                let b_half = if s > 0.5 {
                    incomplete_beta_half(s - 0.5)
                } else {
                    // B_x(a, b) = [(a+b) B_x(a, b+1) - x^a (1-x)^b] / b at
                    // a = 1/2, x = 1/2 pushes b into the convergent range.
                    (s * incomplete_beta_half(s + 0.5) - (-s).exp2()) / (s - 0.5)
                };
                (s - 2.0).exp2() / (1.0 - s) * b_half
            }
        }
    })
}

/// Reference path for the square `κ`: direct quadrature of
/// `(1/(1-s)) ∫₀^{π/4} (√2 cos θ)^{2s-2} dθ`.
pub fn kappa_square_quadrature(s: f64) -> f64 {
    let f = |t: f64| (SQRT_2 * t.cos()).powf(2.0 * s - 2.0);
    adaptive_simpson(&f, 0.0, FRAC_PI_4, 1e-13) / (1.0 - s)
}

/// Unnormalized kernel mass of the complement,
/// `∫_{Ωᵢᶜ} |xᵢ - y|^{-n-2s} dy`, for a neighborhood of scale `H`
/// (interval radius, or square half-diagonal).
///
/// The interval value is `H^{-2s}/s`; the square value is
/// `(4/s) H^{-2s} ∫₀^{π/4} (√2 cos θ)^{2s} dθ` (polar integration of
/// `r^{-1-2s}` outside `ρ(θ) = H cos θ / √2`... the `H^{-2s}` scaling is
/// exact by construction).
pub fn tail_kernel_mass(kind: OmegaKind, s: f64, big_h: f64) -> Result<f64> {
    check_s(s)?;
    if !(big_h > 0.0) {
        return Err(Error::invalid(format!("neighborhood scale H = {big_h} must be positive")));
    }
    Ok(unit_tail_mass(kind, s) * big_h.powf(-2.0 * s))
}

fn unit_tail_mass(kind: OmegaKind, s: f64) -> f64 {
    match kind {
        OmegaKind::Interval => 1.0 / s,
        OmegaKind::Square => {
            let f = |t: f64| (SQRT_2 * t.cos()).powf(2.0 * s);
            4.0 / s * adaptive_simpson(&f, 0.0, FRAC_PI_4, 1e-13)
        }
    }
}

/// `(r1^e - r0^e)/e` for `0 < r0 ≤ r1`, continuous through the log branch at
/// `e = 0` (where the value is `ln(r1/r0)`).
fn pow_diff(r0: f64, r1: f64, e: f64) -> f64 {
    let dl = (r1 / r0).ln();
    let z = e * dl;
    let f = if z.abs() < 1e-12 { 1.0 + 0.5 * z } else { z.exp_m1() / z };
    r0.powf(e) * dl * f
}

/// Shared radial factors of the 1D moment over `[a, b]` seen from `x`:
/// `(∫ r^{-1-2s} dr, ∫ r^{-2s} dr, sign)` with `r = |y - x|` and `sign` the
/// orientation of `y - x`.
fn interval_moment_core(s: f64, x: f64, a: f64, b: f64) -> Result<(f64, f64, f64)> {
    if !(b > a) {
        return Err(Error::invalid(format!("empty moment interval [{a}, {b}]")));
    }
    let (r0, r1, sign) = if x <= a {
        (a - x, b - x, 1.0)
    } else if x >= b {
        (x - b, x - a, -1.0)
    } else {
        return Err(Error::invalid(format!(
            "singular point x = {x} lies inside the moment interval [{a}, {b}]"
        )));
    };
    if !(r0 > 0.0) {
        return Err(Error::invalid(format!(
            "singular point x = {x} touches the moment interval [{a}, {b}]"
        )));
    }
    Ok((pow_diff(r0, r1, -2.0 * s), pow_diff(r0, r1, 1.0 - 2.0 * s), sign))
}

/// Exact moment `C(1,s) ∫_a^b w(y) |y - x|^{-1-2s} dy` for the affine weight
/// with endpoint values `w_a`, `w_b`, and `x` outside `[a, b]`.
pub fn interval_kernel_moment(
    consts: &KernelConstants,
    x: f64,
    a: f64,
    b: f64,
    w_a: f64,
    w_b: f64,
) -> Result<f64> {
    if consts.dimension != 1 {
        return Err(Error::invalid("interval_kernel_moment needs 1D kernel constants"));
    }
    let (pd_a, pd_b, sign) = interval_moment_core(consts.s, x, a, b)?;
    let slope = (w_b - w_a) / (b - a);
    let w_at_x = w_a + slope * (x - a);
    Ok(consts.c_ns * (w_at_x * pd_a + sign * slope * pd_b))
}

/// An affine function `c₀ + g·y` on the plane.
#[derive(Clone, Copy, Debug)]
pub struct Affine2 {
    pub c0: f64,
    pub grad: [f64; 2],
}

impl Affine2 {
    pub fn constant(c: f64) -> Self {
        Affine2 { c0: c, grad: [0.0, 0.0] }
    }

    #[inline]
    pub fn eval(&self, p: Point) -> f64 {
        self.c0 + self.grad[0] * p[0] + self.grad[1] * p[1]
    }

    /// The three nodal hat functions of a nondegenerate triangle, in vertex
    /// order.
    pub fn triangle_hats(tri: &[Point; 3]) -> Result<[Affine2; 3]> {
        let two_area = 2.0 * geometry::tri_signed_area(tri[0], tri[1], tri[2]);
        if two_area == 0.0 {
            return Err(Error::invalid("degenerate triangle has no hat basis"));
        }
        Ok(std::array::from_fn(|k| {
            let u = tri[(k + 1) % 3];
            let v = tri[(k + 2) % 3];
            let d = [v[0] - u[0], v[1] - u[1]];
            Affine2 {
                c0: (d[1] * u[0] - d[0] * u[1]) / two_area,
                grad: [-d[1] / two_area, d[0] / two_area],
            }
        }))
    }
}

/// Axis-aligned square neighborhood.
#[derive(Clone, Copy, Debug)]
pub struct Square {
    pub center: Point,
    pub half_side: f64,
}

impl Square {
    pub fn bounds(&self) -> [Point; 2] {
        [
            [self.center[0] - self.half_side, self.center[1] - self.half_side],
            [self.center[0] + self.half_side, self.center[1] + self.half_side],
        ]
    }
}

const CLIP_AREA_EPS: f64 = 1e-14;

/// Intersect a triangle with the complement of a square, returned as up to
/// four positively oriented convex polygons.
///
/// The complement is split into the two half-planes left and right of the
/// square plus the strips directly below and above it; each convex sector is
/// intersected with the triangle separately, so the pieces tile
/// `T ∖ sq` without overlap.
pub fn clip_triangle_minus_square(tri: &[Point; 3], square: &Square) -> Vec<Vec<Point>> {
    let [lo, hi] = square.bounds();
    let (mut tlo, mut thi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in tri {
        for d in 0..2 {
            tlo[d] = tlo[d].min(p[d]);
            thi[d] = thi[d].max(p[d]);
        }
    }
    if thi[0] <= lo[0] || tlo[0] >= hi[0] || thi[1] <= lo[1] || tlo[1] >= hi[1] {
        return vec![tri.to_vec()];
    }

    let area = geometry::tri_signed_area(tri[0], tri[1], tri[2]);
    let ccw = if area >= 0.0 {
        [tri[0], tri[1], tri[2]]
    } else {
        [tri[0], tri[2], tri[1]]
    };
    let x_ge_lo = HalfPlane { normal: [-1.0, 0.0], offset: -lo[0] };
    let x_le_hi = HalfPlane { normal: [1.0, 0.0], offset: hi[0] };
    let sectors: [&[HalfPlane]; 4] = [
        &[HalfPlane { normal: [1.0, 0.0], offset: lo[0] }],
        &[HalfPlane { normal: [-1.0, 0.0], offset: -hi[0] }],
        &[x_ge_lo, x_le_hi, HalfPlane { normal: [0.0, 1.0], offset: lo[1] }],
        &[x_ge_lo, x_le_hi, HalfPlane { normal: [0.0, -1.0], offset: -hi[1] }],
    ];
    let mut pieces = Vec::new();
    for planes in sectors {
        let piece = geometry::clip_convex(&ccw, planes);
        if piece.len() >= 3 && geometry::polygon_area(&piece) > CLIP_AREA_EPS * area.abs() {
            pieces.push(piece);
        }
    }
    pieces
}

/// Per-(node, s) factors of the boundary-integral form of the moment.
struct GreenKernel {
    x: Point,
    s: f64,
    /// `-C/(2s)`: coefficient of `φ(y) (y-x)·n r^{-2s-2}` (the `φ ∂F/∂n` term).
    amp_grad: f64,
    /// `C/(4s²)`: coefficient of `r^{-2s} ∇φ·n` (the `F ∂φ/∂n` term).
    amp_f: f64,
}

impl GreenKernel {
    fn new(consts: &KernelConstants, x: Point) -> Self {
        GreenKernel {
            x,
            s: consts.s,
            amp_grad: -consts.c_ns / (2.0 * consts.s),
            amp_f: consts.c_ns / (4.0 * consts.s * consts.s),
        }
    }
}

/// Distance-over-length ratios selecting the edge quadrature tier.
const TIER_GL4: f64 = 8.0;
const TIER_GL8: f64 = 2.0;
const TIER_GL16: f64 = 0.5;
const COMPOSITE_REL_TOL: f64 = 1e-11;
const COMPOSITE_MAX_LEVEL: u32 = 6; // 2^6 = 64 sub-edges

fn edge_rule_eval<const K: usize>(
    kern: &GreenKernel,
    p: Point,
    q: Point,
    normal: Point,
    weights: &[Affine2; K],
    gdotn: &[f64; K],
    rule: &(Vec<f64>, Vec<f64>),
) -> [f64; K] {
    let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
    let half = [0.5 * (q[0] - p[0]), 0.5 * (q[1] - p[1])];
    let jac = (half[0] * half[0] + half[1] * half[1]).sqrt();
    let mut acc = [0.0; K];
    for (&t, &w) in rule.0.iter().zip(&rule.1) {
        let y = [mid[0] + half[0] * t, mid[1] + half[1] * t];
        let d = [y[0] - kern.x[0], y[1] - kern.x[1]];
        let r2 = d[0] * d[0] + d[1] * d[1];
        let u = r2.powf(-kern.s - 1.0); // r^{-2s-2}
        let flux = kern.amp_grad * u * (d[0] * normal[0] + d[1] * normal[1]);
        let f_val = kern.amp_f * u * r2; // F(y) = C r^{-2s} / (4s²)
        let wj = w * jac;
        for k in 0..K {
            acc[k] += wj * (weights[k].eval(y) * flux - gdotn[k] * f_val);
        }
    }
    acc
}

/// Contribution of one boundary edge to the moments of `K` affine weights,
/// with the quadrature tier chosen from the distance/length ratio and a
/// dyadically refined composite rule as the near-field fallback.
fn edge_green<const K: usize>(
    kern: &GreenKernel,
    p: Point,
    q: Point,
    weights: &[Affine2; K],
) -> [f64; K] {
    let dx = [q[0] - p[0], q[1] - p[1]];
    let len2 = dx[0] * dx[0] + dx[1] * dx[1];
    if len2 == 0.0 {
        return [0.0; K];
    }
    let len = len2.sqrt();
    // Outward normal of a positively oriented polygon traversed p -> q.
    let normal = [dx[1] / len, -dx[0] / len];
    let gdotn: [f64; K] = std::array::from_fn(|k| {
        weights[k].grad[0] * normal[0] + weights[k].grad[1] * normal[1]
    });
    let d = geometry::point_segment_distance(kern.x, p, q);
    if d >= TIER_GL4 * len {
        return edge_rule_eval(kern, p, q, normal, weights, &gdotn, gl4());
    }
    if d >= TIER_GL8 * len {
        return edge_rule_eval(kern, p, q, normal, weights, &gdotn, gl8());
    }
    if d >= TIER_GL16 * len {
        return edge_rule_eval(kern, p, q, normal, weights, &gdotn, gl16());
    }
    let mut prev = edge_rule_eval(kern, p, q, normal, weights, &gdotn, gl16());
    for m in 1..=COMPOSITE_MAX_LEVEL {
        let parts = 1usize << m;
        let mut cur = [0.0; K];
        for seg in 0..parts {
            let t0 = seg as f64 / parts as f64;
            let t1 = (seg + 1) as f64 / parts as f64;
            let pp = [p[0] + dx[0] * t0, p[1] + dx[1] * t0];
            let qq = [p[0] + dx[0] * t1, p[1] + dx[1] * t1];
            let r = edge_rule_eval(kern, pp, qq, normal, weights, &gdotn, gl16());
            for k in 0..K {
                cur[k] += r[k];
            }
        }
        let scale = cur.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let diff = (0..K).map(|k| (cur[k] - prev[k]).abs()).fold(0.0f64, f64::max);
        prev = cur;
        if diff <= COMPOSITE_REL_TOL * scale.max(1e-300) {
            break;
        }
    }
    prev
}

fn point_in_polygon(x: Point, poly: &[Point]) -> bool {
    // Even-odd crossing count against a horizontal ray.
    let mut inside = false;
    let m = poly.len();
    for i in 0..m {
        let (p, q) = (poly[i], poly[(i + 1) % m]);
        if (p[1] > x[1]) != (q[1] > x[1]) {
            let t = (x[1] - p[1]) / (q[1] - p[1]);
            if p[0] + t * (q[0] - p[0]) > x[0] {
                inside = !inside;
            }
        }
    }
    inside
}

/// Moment `C(2,s) ∫_P w(y) |y - x|^{-2-2s} dy` over a positively oriented
/// simple polygon with `x` strictly outside, evaluated edge by edge through
/// the Green-identity form.
pub fn polygon_kernel_moment(
    consts: &KernelConstants,
    x: Point,
    poly: &[Point],
    weight: &Affine2,
) -> Result<f64> {
    if consts.dimension != 2 {
        return Err(Error::invalid("polygon_kernel_moment needs 2D kernel constants"));
    }
    if poly.len() < 3 {
        return Err(Error::invalid("moment polygon needs at least 3 vertices"));
    }
    if geometry::polygon_area(poly) <= 0.0 {
        return Err(Error::invalid("moment polygon must be positively oriented and nondegenerate"));
    }
    let m = poly.len();
    let on_boundary = (0..m).any(|i| {
        geometry::point_segment_distance(x, poly[i], poly[(i + 1) % m]) == 0.0
    });
    if on_boundary || point_in_polygon(x, poly) {
        return Err(Error::invalid(format!(
            "singular point ({}, {}) must lie strictly outside the moment polygon",
            x[0], x[1]
        )));
    }
    let kern = GreenKernel::new(consts, x);
    let w = [*weight];
    let mut total = 0.0;
    for i in 0..m {
        total += edge_green::<1>(&kern, poly[i], poly[(i + 1) % m], &w)[0];
    }
    Ok(total)
}

/// Precomputed per-cell geometry shared by all rows of the assembly.
struct CellPre {
    verts: [usize; 3],
    tri: [Point; 3],
    hats: [Affine2; 3],
    lo: Point,
    hi: Point,
}

/// Reusable state for assembling rows over one mesh: kernel constants, `κ`,
/// the unit tail mass, a point locator for the stencil arms, and per-cell
/// hat bases.
pub struct AssemblyContext<'a> {
    pub mesh: &'a Mesh,
    pub consts: KernelConstants,
    pub kappa: f64,
    unit_tail: f64,
    locator: PointLocator<'a>,
    cells: Vec<CellPre>,
}

impl<'a> AssemblyContext<'a> {
    pub fn new(mesh: &'a Mesh, consts: KernelConstants) -> Result<Self> {
        if consts.dimension != mesh.dimension {
            return Err(Error::invalid(format!(
                "kernel dimension {} does not match mesh dimension {}",
                consts.dimension, mesh.dimension
            )));
        }
        let kind = consts.omega_kind();
        let kappa = kappa_constant(kind, consts.s)?;
        let unit_tail = unit_tail_mass(kind, consts.s);
        let locator = PointLocator::new(mesh);
        let mut cells = Vec::new();
        if mesh.dimension == 2 {
            cells.reserve(mesh.num_cells());
            for t in 0..mesh.num_cells() {
                let c = mesh.cell(t);
                let tri = [mesh.vertices[c[0]], mesh.vertices[c[1]], mesh.vertices[c[2]]];
                let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
                for p in &tri {
                    for d in 0..2 {
                        lo[d] = lo[d].min(p[d]);
                        hi[d] = hi[d].max(p[d]);
                    }
                }
                cells.push(CellPre {
                    verts: [c[0], c[1], c[2]],
                    tri,
                    hats: Affine2::triangle_hats(&tri)?,
                    lo,
                    hi,
                });
            }
        }
        Ok(AssemblyContext {
            mesh,
            consts,
            kappa,
            unit_tail,
            locator,
            cells,
        })
    }

    fn locate_stencil_arm(&self, p: Point, x: Point) -> Result<(usize, Vec<f64>)> {
        if let Ok(hit) = self.locator.locate(p) {
            return Ok(hit);
        }
        // An arm with H = δ can land on the boundary and be pushed out by
        // roundoff; retry a hair inward before giving up.
        let pulled = [p[0] + (x[0] - p[0]) * 1e-12, p[1] + (x[1] - p[1]) * 1e-12];
        self.locator.locate(pulled).map_err(|_| {
            Error::invalid(format!(
                "stencil arm ({}, {}) fell outside the mesh; is H larger than the boundary distance?",
                p[0], p[1]
            ))
        })
    }

    fn tail_row_1d(&self, x: f64, radius: f64, acc: &mut [f64]) -> Result<()> {
        let (win_lo, win_hi) = (x - radius, x + radius);
        let s = self.consts.s;
        let c = self.consts.c_ns;
        for t in 0..self.mesh.num_cells() {
            let cell = self.mesh.cell(t);
            let (mut va, mut vb) = (cell[0], cell[1]);
            if self.mesh.vertices[va][0] > self.mesh.vertices[vb][0] {
                std::mem::swap(&mut va, &mut vb);
            }
            let (pa, pb) = (self.mesh.vertices[va][0], self.mesh.vertices[vb][0]);
            let inv_len = 1.0 / (pb - pa);
            let mut pieces = [(0.0, 0.0); 2];
            let mut npieces = 0;
            if pa < win_lo {
                pieces[npieces] = (pa, pb.min(win_lo));
                npieces += 1;
            }
            if pb > win_hi {
                pieces[npieces] = (pa.max(win_hi), pb);
                npieces += 1;
            }
            for &(u0, u1) in &pieces[..npieces] {
                if !(u1 > u0) {
                    continue;
                }
                let (pd_a, pd_b, sign) = interval_moment_core(s, x, u0, u1)?;
                // Hat at va falls 1 -> 0 across the cell, hat at vb rises.
                for (v, w0, w1) in [
                    (va, (pb - u0) * inv_len, (pb - u1) * inv_len),
                    (vb, (u0 - pa) * inv_len, (u1 - pa) * inv_len),
                ] {
                    let slope = (w1 - w0) / (u1 - u0);
                    let w_at_x = w0 + slope * (x - u0);
                    acc[v] += c * (w_at_x * pd_a + sign * slope * pd_b);
                }
            }
        }
        Ok(())
    }

    fn tail_row_2d(&self, x: Point, half_side: f64, acc: &mut [f64]) -> Result<()> {
        let sq = Square { center: x, half_side };
        let [lo, hi] = sq.bounds();
        let kern = GreenKernel::new(&self.consts, x);
        for cc in &self.cells {
            let disjoint =
                cc.hi[0] <= lo[0] || cc.lo[0] >= hi[0] || cc.hi[1] <= lo[1] || cc.lo[1] >= hi[1];
            if disjoint {
                for e in 0..3 {
                    let r = edge_green::<3>(&kern, cc.tri[e], cc.tri[(e + 1) % 3], &cc.hats);
                    for k in 0..3 {
                        acc[cc.verts[k]] += r[k];
                    }
                }
            } else {
                for piece in clip_triangle_minus_square(&cc.tri, &sq) {
                    let m = piece.len();
                    for e in 0..m {
                        let r = edge_green::<3>(&kern, piece[e], piece[(e + 1) % m], &cc.hats);
                        for k in 0..3 {
                            acc[cc.verts[k]] += r[k];
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Finite-difference part of one row: the coefficients of
/// `-κᵢ Δ_FD u(xᵢ; Hᵢ) / Hᵢ^{2s}` as `(vertex, value)` pairs in ascending
/// vertex order, **without** the `C(n,s)` normalization and with boundary
/// vertices still present.
///
/// Each arm `xᵢ ± Hᵢ e_j` is interpolated barycentrically in its containing
/// cell, so all off-center coefficients are `-κᵢ/Hᵢ^{2s} · λ ≤ 0`.
pub fn singular_stencil_row(ctx: &AssemblyContext, node: &NodeClass) -> Result<Vec<(usize, f64)>> {
    let mesh = ctx.mesh;
    let x = mesh.vertices[node.vertex];
    let scale = ctx.kappa * node.big_scale.powf(-2.0 * ctx.consts.s);
    let dim = mesh.dimension;
    let mut row: BTreeMap<usize, f64> = BTreeMap::new();
    row.insert(node.vertex, 2.0 * dim as f64 * scale);
    for axis in 0..dim {
        for sign in [-1.0, 1.0] {
            let mut arm = x;
            arm[axis] += sign * node.big_scale;
            let (cell, lambda) = ctx.locate_stencil_arm(arm, x)?;
            for (k, &v) in mesh.cell(cell).iter().enumerate() {
                // Arms on a cell facet carry zero weight on the opposite
                // vertices; keep those out of the sparsity pattern.
                if lambda[k] != 0.0 {
                    *row.entry(v).or_insert(0.0) -= scale * lambda[k];
                }
            }
        }
    }
    Ok(row.into_iter().collect())
}

/// Exterior part of one row: the total tail mass
/// `C(n,s) ∫_{Ωᵢᶜ} |xᵢ-y|^{-n-2s} dy` (diagonal coefficient) and the
/// nonnegative hat moments `w_ij = C(n,s) ∫_{Ω∖Ωᵢ} φ_j k dy` as
/// `(vertex, value)` pairs; `Σ_j w_ij ≤` tail mass, with the gap equal to
/// the kernel mass of `Ωᶜ`.
pub fn tail_row(ctx: &AssemblyContext, node: &NodeClass) -> Result<(f64, Vec<(usize, f64)>)> {
    let x = ctx.mesh.vertices[node.vertex];
    let mut acc = vec![0.0f64; ctx.mesh.num_vertices()];
    match node.omega {
        OmegaShape::Interval { radius } => ctx.tail_row_1d(x[0], radius, &mut acc)?,
        OmegaShape::Square { half_side } => ctx.tail_row_2d(x, half_side, &mut acc)?,
    }
    let tail_mass =
        ctx.consts.c_ns * ctx.unit_tail * node.big_scale.powf(-2.0 * ctx.consts.s);
    // Quadrature can leave vanishing moments a hair below zero; the entries
    // are nonnegative integrals, so clamp the noise.
    let weights: Vec<(usize, f64)> = acc
        .into_iter()
        .enumerate()
        .filter_map(|(v, w)| {
            debug_assert!(w > -1e-9 * tail_mass.max(1.0), "moment w[{v}] = {w} far below zero");
            (w > 0.0).then_some((v, w))
        })
        .collect();
    Ok((tail_mass, weights))
}

/// Row annotations kept alongside the assembled matrix.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct RowMeta {
    pub vertex: usize,
    /// Distance to the boundary.
    pub delta: f64,
    /// Two-scale length `Hᵢ`.
    pub big_scale: f64,
    pub kappa: f64,
    /// `C(n,s) ∫_{Ωᵢᶜ} k dy`, the exterior diagonal contribution.
    pub tail_mass: f64,
    /// Row sum `(A·𝟙)ᵢ`; strictly positive for the assembled operator.
    pub row_sum: f64,
}

/// The assembled operator on interior nodes (boundary columns eliminated by
/// the zero exterior condition).
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub dimension: usize,
    pub s: f64,
    pub alpha: f64,
    pub delta0: f64,
    pub matrix: DMatrix<f64>,
    /// Per-row metadata, index-aligned with the matrix; `rows[i].vertex`
    /// maps row `i` back to its mesh vertex.
    pub rows: Vec<RowMeta>,
}

impl OperatorMatrix {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn infinity_norm(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| (0..n).map(|j| self.matrix[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Assemble the full operator matrix `A` with
/// `A u = C(n,s) [κ-weighted stencil + tail]` row by row, eliminating
/// boundary columns and validating the M-matrix structure as it goes.
pub fn assemble(mesh: &Mesh, class: &NodeClassification, s: f64) -> Result<OperatorMatrix> {
    let consts = KernelConstants::new(mesh.dimension, s)?;
    let ctx = AssemblyContext::new(mesh, consts)?;
    let n = class.nodes.len();
    if n == 0 {
        return Err(Error::invalid("mesh has no interior nodes to assemble"));
    }
    let mut col_of_vertex = vec![usize::MAX; mesh.num_vertices()];
    for (i, nc) in class.nodes.iter().enumerate() {
        col_of_vertex[nc.vertex] = i;
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rows = Vec::with_capacity(n);
    for (i, nc) in class.nodes.iter().enumerate() {
        for (v, coeff) in singular_stencil_row(&ctx, nc)? {
            let j = col_of_vertex[v];
            if j != usize::MAX {
                a[(i, j)] += consts.c_ns * coeff;
            }
        }
        let (tail_mass, weights) = tail_row(&ctx, nc)?;
        a[(i, i)] += tail_mass;
        for (v, w) in weights {
            let j = col_of_vertex[v];
            if j != usize::MAX {
                a[(i, j)] -= w;
            }
        }

        let monotone_err = |detail: String| Error::Monotonicity {
            row: i,
            vertex: nc.vertex,
            detail,
        };
        let diag = a[(i, i)];
        if !(diag > 0.0) {
            return Err(monotone_err(format!("diagonal entry {diag} is not positive")));
        }
        let mut row_sum = 0.0;
        for j in 0..n {
            let v = a[(i, j)];
            row_sum += v;
            if j != i && v > 0.0 {
                return Err(monotone_err(format!(
                    "off-diagonal entry {v} in column {j} is positive"
                )));
            }
        }
        if !(row_sum > 0.0) {
            return Err(monotone_err(format!("row sum {row_sum} is not positive")));
        }
        rows.push(RowMeta {
            vertex: nc.vertex,
            delta: nc.delta,
            big_scale: nc.big_scale,
            kappa: ctx.kappa,
            tail_mass,
            row_sum,
        });
    }
    Ok(OperatorMatrix {
        dimension: mesh.dimension,
        s,
        alpha: class.alpha,
        delta0: class.delta0,
        matrix: a,
        rows,
    })
}

/// Outcome of the monotonicity audit: sign pattern, diagonal dominance via
/// row sums, and sampled inverse positivity.
#[derive(Clone, Debug, serde::Serialize)]
pub struct MonotonicityReport {
    pub checked_rows: usize,
    pub sign_pattern_ok: bool,
    pub max_off_diagonal: f64,
    pub diagonal_ok: bool,
    pub min_diagonal: f64,
    pub row_sums_ok: bool,
    pub min_row_sum: f64,
    pub probes_ok: bool,
    pub probe_columns: Vec<usize>,
    pub min_probe_entry: f64,
}

impl MonotonicityReport {
    pub fn is_m_matrix(&self) -> bool {
        self.sign_pattern_ok && self.diagonal_ok && self.row_sums_ok && self.probes_ok
    }
}

impl fmt::Display for MonotonicityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "monotone={} (sign_pattern={}, max_offdiag={:.3e}; diagonal={}, min={:.3e}; \
             row_sums={}, min={:.3e}; probes={:?} ok={}, min_entry={:.3e})",
            self.is_m_matrix(),
            self.sign_pattern_ok,
            self.max_off_diagonal,
            self.diagonal_ok,
            self.min_diagonal,
            self.row_sums_ok,
            self.min_row_sum,
            self.probe_columns,
            self.probes_ok,
            self.min_probe_entry,
        )
    }
}

const PROBE_TOL: f64 = 1e-12;
const PROBE_SEED: u64 = 0x0f2a_c1d3_5b87_6e49;

/// Audit the M-matrix structure of an assembled operator.
///
/// Checks (reported, never thrown): nonpositive off-diagonal entries,
/// strictly positive diagonal, strictly positive row sums, and
/// nonnegativity of five randomly sampled columns of `A⁻¹` (seeded, so runs
/// are reproducible).  Probe solves use a row-equilibrated LU.
pub fn verify_monotone(op: &OperatorMatrix) -> MonotonicityReport {
    let n = op.n();
    let a = &op.matrix;
    let mut max_off = f64::NEG_INFINITY;
    let mut min_diag = f64::INFINITY;
    let mut min_row_sum = f64::INFINITY;
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            let v = a[(i, j)];
            row_sum += v;
            if i != j {
                max_off = max_off.max(v);
            }
        }
        min_diag = min_diag.min(a[(i, i)]);
        min_row_sum = min_row_sum.min(row_sum);
    }
    if n == 1 {
        max_off = 0.0;
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let n_probes = n.min(5);
    let mut probe_columns: Vec<usize> =
        rand::seq::index::sample(&mut rng, n, n_probes).into_iter().collect();
    probe_columns.sort_unstable();

    // Solve D⁻¹A x = D⁻¹ e_k (same solutions, much better conditioned).
    let mut scaled = a.clone();
    let mut rhs = DMatrix::<f64>::zeros(n, n_probes);
    for i in 0..n {
        let d = a[(i, i)];
        for j in 0..n {
            scaled[(i, j)] /= d;
        }
        if let Some(p) = probe_columns.iter().position(|&k| k == i) {
            rhs[(i, p)] = 1.0 / d;
        }
    }
    let min_probe_entry = match scaled.lu().solve(&rhs) {
        Some(x) => x.iter().copied().fold(f64::INFINITY, f64::min),
        None => f64::NEG_INFINITY, // singular matrix: certainly not an M-matrix
    };

    MonotonicityReport {
        checked_rows: n,
        sign_pattern_ok: max_off <= 0.0,
        max_off_diagonal: max_off,
        diagonal_ok: min_diag > 0.0,
        min_diagonal: min_diag,
        row_sums_ok: min_row_sum > 0.0,
        min_row_sum,
        probes_ok: min_probe_entry >= -PROBE_TOL,
        probe_columns,
        min_probe_entry,
    }
}

/// Write the matrix as plain text (`fraclap-matrix v1 n=<rows> s=<s>` header,
/// one whitespace-separated row per line) plus a `<path>.json` sidecar with
/// the per-row metadata.
pub fn write_matrix_dump(op: &OperatorMatrix, path: &Path) -> Result<()> {
    let n = op.n();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "fraclap-matrix v1 n={} s={}", n, op.s)?;
    for i in 0..n {
        let mut line = String::with_capacity(24 * n);
        for j in 0..n {
            if j > 0 {
                line.push(' ');
            }
            let _ = std::fmt::Write::write_fmt(&mut line, format_args!("{}", op.matrix[(i, j)]));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;

    let sidecar = serde_json::json!({
        "n": n,
        "s": op.s,
        "dimension": op.dimension,
        "alpha": op.alpha,
        "delta0": op.delta0,
        "rows": op.rows,
    });
    let mut json_path = path.as_os_str().to_owned();
    json_path.push(".json");
    std::fs::write(json_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_disk_mesh, build_interval_mesh, classify_nodes};
    use approx::assert_relative_eq;

    /// κ for the square at s = 1/2: √2·ln(1+√2).
    const KAPPA_SQUARE_HALF: f64 = 1.2464504802804507;

    #[test]
    fn kernel_constant_reference_values() {
        let c1 = KernelConstants::new(1, 0.5).unwrap();
        assert_relative_eq!(c1.c_ns, 1.0 / PI, max_relative = 1e-14);
        let c2 = KernelConstants::new(2, 0.5).unwrap();
        assert_relative_eq!(c2.c_ns, 0.5 / PI, max_relative = 1e-14);
        assert!(KernelConstants::new(3, 0.5).is_err());
        assert!(KernelConstants::new(1, 1.0).is_err());
        assert!(KernelConstants::new(1, 0.0).is_err());
    }

    #[test]
    fn kappa_interval_closed_form() {
        for s in [0.1, 0.5, 0.9] {
            let k = kappa_constant(OmegaKind::Interval, s).unwrap();
            assert_relative_eq!(k, 0.5 / (1.0 - s), max_relative = 1e-15);
        }
    }

    #[test]
    fn kappa_square_at_half() {
        let k = kappa_constant(OmegaKind::Square, 0.5).unwrap();
        assert_relative_eq!(k, SQRT_2 * (1.0 + SQRT_2).ln(), max_relative = 1e-12);
        assert_relative_eq!(k, KAPPA_SQUARE_HALF, max_relative = 1e-12);
    }

    #[test]
    fn kappa_square_closed_form_matches_quadrature() {
        // Dual-path agreement across the s range, including points just
        // outside the quadrature band around s = 1/2.
        for s in [
            0.05, 0.15, 0.25, 0.35, 0.45, 0.4985, 0.5015, 0.55, 0.65, 0.75, 0.85, 0.95,
        ] {
            let closed = kappa_constant(OmegaKind::Square, s).unwrap();
            let quad = kappa_square_quadrature(s);
            assert_relative_eq!(closed, quad, max_relative = 1e-10);
        }
    }

    #[test]
    fn tail_mass_values_and_scaling() {
        // Square complement at s = 1/2, H = 1: ∫ r^{-3} outside the square of
        // half-diagonal 1 is exactly 8.
        let m = tail_kernel_mass(OmegaKind::Square, 0.5, 1.0).unwrap();
        assert_relative_eq!(m, 8.0, max_relative = 1e-12);
        for (kind, s) in [
            (OmegaKind::Interval, 0.3),
            (OmegaKind::Interval, 0.7),
            (OmegaKind::Square, 0.3),
            (OmegaKind::Square, 0.7),
        ] {
            let base = tail_kernel_mass(kind, s, 1.0).unwrap();
            for h in [0.01, 0.37, 5.0] {
                let scaled = tail_kernel_mass(kind, s, h).unwrap();
                // Exact power scaling by construction.
                assert_eq!(scaled, base * h.powf(-2.0 * s));
            }
        }
        let i = tail_kernel_mass(OmegaKind::Interval, 0.25, 2.0).unwrap();
        assert_relative_eq!(i, 2.0f64.powf(-0.5) / 0.25, max_relative = 1e-15);
    }

    #[test]
    fn interval_moment_reference_value() {
        // C(1, 1/2) ∫₁² y⁻² dy = (1/π)(1/2).
        let c = KernelConstants::new(1, 0.5).unwrap();
        let m = interval_kernel_moment(&c, 0.0, 1.0, 2.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(m, 0.5 / PI, max_relative = 1e-14);
    }

    #[test]
    fn interval_moment_matches_quadrature() {
        for s in [0.2, 0.5, 0.8] {
            let c = KernelConstants::new(1, s).unwrap();
            for (x, a, b, wa, wb) in [
                (0.0, 0.5, 1.7, 1.0, 0.0),
                (2.0, -1.0, 1.5, 0.3, 0.9),
                (-0.25, 0.0, 0.125, 0.0, 1.0),
            ] {
                let exact = interval_kernel_moment(&c, x, a, b, wa, wb).unwrap();
                let f = |y: f64| {
                    let w = wa + (wb - wa) * (y - a) / (b - a);
                    c.c_ns * w * (y - x).abs().powf(-1.0 - 2.0 * s)
                };
                let quad = adaptive_simpson(&f, a, b, 1e-13 * exact.abs());
                assert_relative_eq!(exact, quad, max_relative = 1e-9);
            }
        }
        let c = KernelConstants::new(1, 0.5).unwrap();
        assert!(interval_kernel_moment(&c, 0.5, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(interval_kernel_moment(&c, 1.0, 1.0, 2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn triangle_hats_are_nodal() {
        let tri = [[0.0, 0.0], [2.0, 0.1], [0.4, 1.5]];
        let hats = Affine2::triangle_hats(&tri).unwrap();
        for (k, h) in hats.iter().enumerate() {
            for (j, v) in tri.iter().enumerate() {
                let expect = if k == j { 1.0 } else { 0.0 };
                assert!((h.eval(*v) - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn clip_far_triangle_is_identity() {
        let tri = [[3.0, 0.0], [4.0, 0.0], [3.0, 1.0]];
        let sq = Square { center: [0.0, 0.0], half_side: 1.0 };
        let pieces = clip_triangle_minus_square(&tri, &sq);
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0], tri.to_vec());
    }

    #[test]
    fn clip_conserves_area() {
        let sq = Square { center: [0.1, -0.05], half_side: 0.25 };
        // Triangle strictly containing the square: pieces must cover
        // tri minus square.
        let tri = [[-2.0, -2.0], [3.0, -1.0], [0.0, 2.5]];
        let pieces = clip_triangle_minus_square(&tri, &sq);
        let covered: f64 = pieces.iter().map(|p| geometry::polygon_area(p)).sum();
        let expect = geometry::tri_signed_area(tri[0], tri[1], tri[2]).abs()
            - (2.0 * sq.half_side) * (2.0 * sq.half_side);
        assert_relative_eq!(covered, expect, max_relative = 1e-13);
        // Triangle fully inside the square clips away completely.
        let inner = [[0.0, 0.0], [0.2, 0.0], [0.1, 0.1]];
        assert!(clip_triangle_minus_square(&inner, &sq).is_empty());
    }

    #[test]
    fn polygon_moment_matches_product_quadrature() {
        let c = KernelConstants::new(2, 0.5).unwrap();
        let poly = vec![[1.0, -0.5], [2.5, -0.5], [2.5, 1.0], [1.0, 1.0]];
        let w = Affine2 { c0: 0.2, grad: [0.3, -0.1] };
        let x = [0.0, 0.0];
        let m = polygon_kernel_moment(&c, x, &poly, &w).unwrap();
        let inner = |yx: f64| {
            let f = |yy: f64| {
                let r2 = (yx - x[0]).powi(2) + (yy - x[1]).powi(2);
                w.eval([yx, yy]) * r2.powf(-0.5 * (2.0 + 2.0 * c.s))
            };
            adaptive_simpson(&f, -0.5, 1.0, 1e-12)
        };
        let direct = c.c_ns * adaptive_simpson(&inner, 1.0, 2.5, 1e-11);
        assert_relative_eq!(m, direct, max_relative = 1e-9);
    }

    #[test]
    fn polygon_moment_rejects_interior_singularity() {
        let c = KernelConstants::new(2, 0.4).unwrap();
        let poly = vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
        let w = Affine2::constant(1.0);
        assert!(polygon_kernel_moment(&c, [0.0, 0.0], &poly, &w).is_err());
        assert!(polygon_kernel_moment(&c, [1.0, 0.0], &poly, &w).is_err());
        assert!(polygon_kernel_moment(&c, [2.0, 0.0], &poly, &w).is_ok());
    }

    #[test]
    fn stencil_row_on_uniform_grid_is_three_point() {
        // With alpha = 1 on a uniform grid, H = h and the arms land exactly
        // on the neighbors: the classical (-1, 2, -1) stencil times κ/h^{2s}.
        let mesh = build_interval_mesh(-1.0, 1.0, 0.25, 1.0).unwrap();
        let class = classify_nodes(&mesh, 1.0, 1.0).unwrap();
        let consts = KernelConstants::new(1, 0.5).unwrap();
        let ctx = AssemblyContext::new(&mesh, consts).unwrap();
        let node = class.by_vertex(4).unwrap();
        let row = singular_stencil_row(&ctx, node).unwrap();
        let scale = ctx.kappa * 0.25f64.powf(-1.0);
        assert_eq!(row.len(), 3);
        assert_eq!(row[0].0, 3);
        assert_eq!(row[1].0, 4);
        assert_eq!(row[2].0, 5);
        assert_relative_eq!(row[0].1, -scale, max_relative = 1e-13);
        assert_relative_eq!(row[1].1, 2.0 * scale, max_relative = 1e-13);
        assert_relative_eq!(row[2].1, -scale, max_relative = 1e-13);
    }

    #[test]
    fn tail_row_gap_is_exterior_kernel_mass() {
        // Σ_j w_ij misses exactly the kernel mass outside the domain, which
        // is known in closed form in 1D.
        let mesh = build_interval_mesh(-1.0, 1.0, 0.125, 1.0).unwrap();
        let s = 0.6;
        let class = classify_nodes(&mesh, 0.5, 1.0).unwrap();
        let consts = KernelConstants::new(1, s).unwrap();
        let ctx = AssemblyContext::new(&mesh, consts).unwrap();
        for vertex in [1, 7, 12] {
            let node = class.by_vertex(vertex).unwrap();
            let (tail_mass, weights) = tail_row(&ctx, node).unwrap();
            let total: f64 = weights.iter().map(|&(_, w)| w).sum();
            let x = mesh.vertices[vertex][0];
            let outside = consts.c_ns / (2.0 * s)
                * ((x + 1.0).powf(-2.0 * s) + (1.0 - x).powf(-2.0 * s));
            assert!(total <= tail_mass);
            assert_relative_eq!(tail_mass - total, outside, max_relative = 1e-10);
        }
    }

    #[test]
    fn assemble_interval_operator_is_m_matrix() {
        let mesh = build_interval_mesh(-1.0, 1.0, 0.125, 1.0).unwrap();
        let class = classify_nodes(&mesh, 0.5, 1.0).unwrap();
        let op = assemble(&mesh, &class, 0.5).unwrap();
        assert_eq!(op.n(), 15);
        let report = verify_monotone(&op);
        assert!(report.is_m_matrix(), "{report}");
        assert!(report.min_row_sum > 0.0);
    }

    #[test]
    fn assemble_disk_operator_is_m_matrix() {
        let mesh = build_disk_mesh(1.0, 0.35, 1.0).unwrap();
        let class = classify_nodes(&mesh, 0.5, 1.0).unwrap();
        let op = assemble(&mesh, &class, 0.5).unwrap();
        assert!(op.n() > 3);
        let report = verify_monotone(&op);
        assert!(report.is_m_matrix(), "{report}");
        // Row sums must not exceed the tail mass (the interior weights are
        // subtracted from it).
        for (i, meta) in op.rows.iter().enumerate() {
            let sum: f64 = (0..op.n()).map(|j| op.matrix[(i, j)]).sum();
            assert!(sum <= meta.tail_mass * (1.0 + 1e-12));
        }
    }

    #[test]
    fn verify_monotone_flags_flipped_sign() {
        let mesh = build_interval_mesh(-1.0, 1.0, 0.25, 1.0).unwrap();
        let class = classify_nodes(&mesh, 0.5, 1.0).unwrap();
        let mut op = assemble(&mesh, &class, 0.5).unwrap();
        op.matrix[(0, 1)] = -op.matrix[(0, 1)];
        let report = verify_monotone(&op);
        assert!(!report.sign_pattern_ok);
        assert!(!report.is_m_matrix());
    }

    #[test]
    fn matrix_dump_writes_header_and_sidecar() {
        let mesh = build_interval_mesh(-1.0, 1.0, 0.5, 1.0).unwrap();
        let class = classify_nodes(&mesh, 0.5, 1.0).unwrap();
        let op = assemble(&mesh, &class, 0.5).unwrap();
        let dir = std::env::temp_dir().join("fraclap-test-dump");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("op.mat");
        write_matrix_dump(&op, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("fraclap-matrix v1 n=3 s=0.5"));
        assert_eq!(text.lines().count(), 4);
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("op.mat.json")).unwrap())
                .unwrap();
        assert_eq!(sidecar["n"], 3);
        assert_eq!(sidecar["rows"].as_array().unwrap().len(), 3);
        std::fs::remove_dir_all(&dir).ok();
    }
}
