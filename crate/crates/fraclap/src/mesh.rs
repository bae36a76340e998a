//! Simplicial grids for the nonlocal solver: graded interval meshes, graded
//! polygonal disk meshes, a plain-text interchange format, shape-regularity
//! audits, and the per-node classification (`δᵢ`, `hᵢ`, `Hᵢ`) that drives the
//! two-scale discretization.
//!
//! Grading convention: with mesh parameter `h` and exponent `μ ≥ 1`, cells
//! touching the boundary have size `≈ h^μ` and interior cells have size
//! `≈ μ h d^{(μ-1)/μ}` at distance `d` from the boundary (distances
//! normalized by the domain inradius).  Both generators realize this with the
//! layer map `d_k = (k/K)^μ`.

use crate::geometry::{self, Point};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// A 1D interval mesh or a 2D triangle mesh.
///
/// Cells are stored flat with stride `dimension + 1` (2 vertex indices per
/// interval, 3 per triangle, positively oriented in 2D).  `grading_mu` and
/// `target_h` record the parameters the mesh was generated with; they travel
/// with the mesh file so downstream audits can check the grading law.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub dimension: usize,
    /// Vertex coordinates; 1D meshes use only the first component.
    pub vertices: Vec<Point>,
    /// Flat cell-to-vertex connectivity, stride `dimension + 1`.
    pub cells: Vec<usize>,
    /// `true` for vertices on the domain boundary.
    pub is_boundary: Vec<bool>,
    pub grading_mu: f64,
    pub target_h: f64,
}

impl Mesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn cell_stride(&self) -> usize {
        self.dimension + 1
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / self.cell_stride()
    }

    pub fn cell(&self, t: usize) -> &[usize] {
        let k = self.cell_stride();
        &self.cells[t * k..(t + 1) * k]
    }

    /// Indices of non-boundary vertices, ascending.
    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| !self.is_boundary[v]).collect()
    }

    /// Diameter of the polygonal domain: the largest distance between two
    /// boundary vertices (the diameter of any polygon is attained at
    /// vertices).
    pub fn domain_diameter(&self) -> f64 {
        let bnd: Vec<Point> = (0..self.num_vertices())
            .filter(|&v| self.is_boundary[v])
            .map(|v| self.vertices[v])
            .collect();
        let mut diam = 0.0f64;
        for (i, &p) in bnd.iter().enumerate() {
            for &q in &bnd[i + 1..] {
                diam = diam.max(geometry::dist(p, q));
            }
        }
        diam
    }

    /// Boundary facets: vertex pairs of boundary edges in 2D; in 1D the two
    /// boundary vertices, each reported as a degenerate pair `(v, v)`.
    pub fn boundary_facets(&self) -> Vec<(usize, usize)> {
        if self.dimension == 1 {
            return (0..self.num_vertices())
                .filter(|&v| self.is_boundary[v])
                .map(|v| (v, v))
                .collect();
        }
        let mut count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for t in 0..self.num_cells() {
            let c = self.cell(t);
            for e in 0..3 {
                let (a, b) = (c[e], c[(e + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        count.into_iter().filter(|&(_, n)| n == 1).map(|(e, _)| e).collect()
    }

    /// Distance from `x` to the mesh boundary (polygonal in 2D).
    pub fn distance_to_boundary(&self, x: Point, facets: &[(usize, usize)]) -> f64 {
        let mut d = f64::INFINITY;
        for &(a, b) in facets {
            let da = if a == b {
                geometry::dist(x, self.vertices[a])
            } else {
                geometry::point_segment_distance(x, self.vertices[a], self.vertices[b])
            };
            d = d.min(da);
        }
        d
    }

    /// Check the structural mesh invariants: index ranges, positive
    /// orientation, conforming edges, boundary-flag consistency, and exact
    /// coverage of the domain by the cells.
    pub fn validate(&self) -> Result<()> {
        let nv = self.num_vertices();
        if self.dimension != 1 && self.dimension != 2 {
            return Err(Error::invalid(format!("dimension must be 1 or 2, got {}", self.dimension)));
        }
        if self.is_boundary.len() != nv {
            return Err(Error::invalid("boundary flag count does not match vertex count"));
        }
        if self.cells.len() % self.cell_stride() != 0 {
            return Err(Error::invalid("cell list length is not a multiple of the cell stride"));
        }
        if self.num_cells() == 0 {
            return Err(Error::invalid("mesh has no cells"));
        }
        for (t, chunk) in self.cells.chunks(self.cell_stride()).enumerate() {
            for &v in chunk {
                if v >= nv {
                    return Err(Error::invalid(format!(
                        "cell {t} references vertex {v}, but there are only {nv} vertices"
                    )));
                }
            }
            if chunk[0] == chunk[1] || (self.dimension == 2 && (chunk[1] == chunk[2] || chunk[0] == chunk[2])) {
                return Err(Error::invalid(format!("cell {t} has repeated vertices")));
            }
        }
        match self.dimension {
            1 => self.validate_1d(),
            _ => self.validate_2d(),
        }
    }

    fn validate_1d(&self) -> Result<()> {
        let mut iv: Vec<(f64, f64)> = self
            .cells
            .chunks(2)
            .map(|c| {
                let (x0, x1) = (self.vertices[c[0]][0], self.vertices[c[1]][0]);
                (x0.min(x1), x0.max(x1))
            })
            .collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        let span = iv.last().unwrap().1 - iv[0].0;
        let tol = 1e-12 * span.max(1.0);
        for w in iv.windows(2) {
            if (w[0].1 - w[1].0).abs() > tol {
                return Err(Error::invalid(format!(
                    "interval cells do not partition the domain near x = {}",
                    w[1].0
                )));
            }
        }
        // Boundary detection is combinatorial, not metric: strongly graded
        // meshes put the first interior node closer to the endpoint than any
        // sensible coordinate tolerance.
        let mut degree = vec![0usize; self.num_vertices()];
        for c in self.cells.chunks(2) {
            degree[c[0]] += 1;
            degree[c[1]] += 1;
        }
        for (v, &d) in degree.iter().enumerate() {
            let on_boundary = match d {
                1 => true,
                2 => false,
                d => {
                    return Err(Error::invalid(format!(
                        "vertex {v} belongs to {d} interval cells"
                    )))
                }
            };
            if on_boundary != self.is_boundary[v] {
                return Err(Error::invalid(format!(
                    "vertex {v} at x = {} has inconsistent boundary flag",
                    self.vertices[v][0]
                )));
            }
        }
        Ok(())
    }

    fn validate_2d(&self) -> Result<()> {
        let mut total_area = 0.0;
        for t in 0..self.num_cells() {
            let c = self.cell(t);
            let area = geometry::tri_signed_area(
                self.vertices[c[0]],
                self.vertices[c[1]],
                self.vertices[c[2]],
            );
            if area <= 0.0 {
                return Err(Error::invalid(format!(
                    "cell {t} is inverted or degenerate (signed area {area})"
                )));
            }
            total_area += area;
        }
        let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for t in 0..self.num_cells() {
            let c = self.cell(t);
            for e in 0..3 {
                let (a, b) = (c[e], c[(e + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut on_boundary = vec![false; self.num_vertices()];
        let mut boundary_next: BTreeMap<usize, usize> = BTreeMap::new();
        for t in 0..self.num_cells() {
            let c = self.cell(t);
            for e in 0..3 {
                let (a, b) = (c[e], c[(e + 1) % 3]);
                match edge_count[&(a.min(b), a.max(b))] {
                    1 => {
                        on_boundary[a] = true;
                        on_boundary[b] = true;
                        // Boundary edges inherit the cell orientation, so the
                        // directed boundary graph is a union of CCW loops.
                        boundary_next.insert(a, b);
                    }
                    2 => {}
                    n => {
                        return Err(Error::invalid(format!(
                            "edge ({a}, {b}) is shared by {n} cells"
                        )))
                    }
                }
            }
        }
        for v in 0..self.num_vertices() {
            if on_boundary[v] != self.is_boundary[v] {
                return Err(Error::invalid(format!("vertex {v} has inconsistent boundary flag")));
            }
        }
        // Trace the boundary loop and compare the covered area.
        let &start = boundary_next
            .keys()
            .next()
            .ok_or_else(|| Error::invalid("2D mesh has no boundary"))?;
        let mut loop_pts = Vec::new();
        let mut cur = start;
        loop {
            loop_pts.push(self.vertices[cur]);
            cur = *boundary_next
                .get(&cur)
                .ok_or_else(|| Error::invalid("boundary edges do not form a closed loop"))?;
            if cur == start {
                break;
            }
            if loop_pts.len() > boundary_next.len() {
                return Err(Error::invalid("boundary loop does not close"));
            }
        }
        if loop_pts.len() != boundary_next.len() {
            return Err(Error::invalid("mesh boundary has more than one loop"));
        }
        let poly_area = geometry::polygon_area(&loop_pts);
        if (total_area - poly_area).abs() > 1e-12 * poly_area.abs().max(1.0) {
            return Err(Error::invalid(format!(
                "cells cover area {total_area} but the boundary polygon encloses {poly_area}"
            )));
        }
        Ok(())
    }
}

/// Build a symmetric graded mesh of the interval `(a, b)`.
///
/// With `K = round((b-a)/(2h))` layers per half, the k-th node from each
/// endpoint sits at distance `(k/K)^μ (b-a)/2` from it; `μ = 1` gives the
/// uniform grid.  Requires `h ≤ (b-a)/4` so there are at least 3 interior
/// nodes.
pub fn build_interval_mesh(a: f64, b: f64, h: f64, mu: f64) -> Result<Mesh> {
    if !(a < b) {
        return Err(Error::invalid(format!("invalid range: a = {a} must be < b = {b}")));
    }
    if !(mu >= 1.0) {
        return Err(Error::invalid(format!("grading exponent mu = {mu} must be >= 1")));
    }
    let half = 0.5 * (b - a);
    if !(h > 0.0) || h > 0.5 * half {
        return Err(Error::invalid(format!(
            "grid spacing h = {h} too coarse for ({a}, {b}): need at least 3 interior nodes"
        )));
    }
    let layers = (half / h).round() as usize;
    let mid = a + half;
    // Nodes from the left endpoint up to the midpoint, mirrored to the right.
    let mut xs = Vec::with_capacity(2 * layers + 1);
    for k in 0..layers {
        xs.push(a + half * (k as f64 / layers as f64).powf(mu));
    }
    xs.push(mid);
    for k in (0..layers).rev() {
        xs.push(b - half * (k as f64 / layers as f64).powf(mu));
    }
    let n = xs.len();
    let vertices: Vec<Point> = xs.iter().map(|&x| [x, 0.0]).collect();
    let mut is_boundary = vec![false; n];
    is_boundary[0] = true;
    is_boundary[n - 1] = true;
    let mut cells = Vec::with_capacity(2 * (n - 1));
    for i in 0..n - 1 {
        cells.push(i);
        cells.push(i + 1);
    }
    let mesh = Mesh {
        dimension: 1,
        vertices,
        cells,
        is_boundary,
        grading_mu: mu,
        target_h: h,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Build a graded triangulation of the polygon inscribed in the disk of the
/// given radius.
///
/// Concentric vertex rings sit at distances `d_k = (k/K)^μ · radius` from the
/// boundary (`K = round(radius/h)`); ring k is subdivided by the local
/// grading target (`h^μ` on the boundary strip).  Consecutive rings are
/// zipper-triangulated by merging their angle sequences; rings that would
/// carry fewer than 6 vertices collapse to the center, which is closed by a
/// triangle fan.
pub fn build_disk_mesh(radius: f64, h: f64, mu: f64) -> Result<Mesh> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("radius = {radius} must be positive")));
    }
    if !(mu >= 1.0) {
        return Err(Error::invalid(format!("grading exponent mu = {mu} must be >= 1")));
    }
    if !(h > 0.0) || h > 0.5 * radius {
        return Err(Error::invalid(format!(
            "grid spacing h = {h} too coarse for radius {radius}: need at least 2 rings"
        )));
    }
    let layers = (radius / h).round() as usize;
    let hn = h / radius;
    let two_pi = 2.0 * std::f64::consts::PI;

    // Ring radii and vertex counts, outermost first.
    let mut rings: Vec<Vec<usize>> = Vec::new();
    let mut vertices: Vec<Point> = Vec::new();
    for k in 0..layers {
        let tau = (k as f64 / layers as f64).powf(mu);
        let r = radius * (1.0 - tau);
        // Local grading target: boundary strip h^mu, interior derivative of
        // the layer map, both in units of the radius.
        let target = if k == 0 {
            radius * hn.powf(mu)
        } else {
            mu * radius * hn * tau.powf((mu - 1.0) / mu)
        };
        let count = (two_pi * r / target).round() as i64;
        if count < 6 {
            break;
        }
        let count = count as usize;
        let first = vertices.len();
        for j in 0..count {
            let th = two_pi * j as f64 / count as f64;
            vertices.push([r * th.cos(), r * th.sin()]);
        }
        rings.push((first..first + count).collect());
    }
    if rings.len() < 2 {
        return Err(Error::invalid(format!(
            "grid spacing h = {h} too coarse for radius {radius}: need at least 2 rings"
        )));
    }
    let center = vertices.len();
    vertices.push([0.0, 0.0]);

    let mut cells: Vec<usize> = Vec::new();
    for w in rings.windows(2) {
        zip_rings(&mut cells, &w[0], &w[1]);
    }
    let last = rings.last().unwrap();
    for j in 0..last.len() {
        cells.push(last[j]);
        cells.push(last[(j + 1) % last.len()]);
        cells.push(center);
    }

    let mut is_boundary = vec![false; vertices.len()];
    for &v in &rings[0] {
        is_boundary[v] = true;
    }
    let mesh = Mesh {
        dimension: 2,
        vertices,
        cells,
        is_boundary,
        grading_mu: mu,
        target_h: h,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Triangulate the annular strip between an outer and an inner ring by
/// advancing whichever ring has the smaller next angle.
fn zip_rings(cells: &mut Vec<usize>, outer: &[usize], inner: &[usize]) {
    let (na, nb) = (outer.len(), inner.len());
    let two_pi = 2.0 * std::f64::consts::PI;
    let (mut i, mut j) = (0usize, 0usize);
    while i < na || j < nb {
        let next_a = two_pi * (i + 1) as f64 / na as f64;
        let next_b = two_pi * (j + 1) as f64 / nb as f64;
        let advance_outer = i < na && (j >= nb || next_a <= next_b);
        if advance_outer {
            cells.push(outer[i % na]);
            cells.push(outer[(i + 1) % na]);
            cells.push(inner[j % nb]);
            i += 1;
        } else {
            cells.push(outer[i % na]);
            cells.push(inner[(j + 1) % nb]);
            cells.push(inner[j % nb]);
            j += 1;
        }
    }
}

/// Serialize a mesh to the plain-text interchange format.
///
/// Line 1 is `fraclap-mesh v1 dim=<1|2> mu=<real> h=<real>`, followed by a
/// `vertices <count>` block (`x [y] <0|1>` per line) and a `cells <count>`
/// block (0-based vertex indices per line).  Floats are printed with
/// shortest-roundtrip precision, so `import(export(m))` is exact.
pub fn export_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "fraclap-mesh v1 dim={} mu={} h={}",
        mesh.dimension, mesh.grading_mu, mesh.target_h
    );
    let _ = writeln!(out, "vertices {}", mesh.num_vertices());
    for (v, p) in mesh.vertices.iter().enumerate() {
        let flag = u8::from(mesh.is_boundary[v]);
        if mesh.dimension == 1 {
            let _ = writeln!(out, "{} {}", p[0], flag);
        } else {
            let _ = writeln!(out, "{} {} {}", p[0], p[1], flag);
        }
    }
    let _ = writeln!(out, "cells {}", mesh.num_cells());
    for t in 0..mesh.num_cells() {
        let c = mesh.cell(t);
        let row: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

/// Parse the plain-text mesh format produced by [`export_mesh`].
pub fn import_mesh(text: &str) -> Result<Mesh> {
    // Strip comments, keep original line numbers for diagnostics.
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let parse_err = |line: usize, msg: String| Error::MeshParse { line, msg };

    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty mesh file".into()))?;
    let mut dim = None;
    let mut mu = None;
    let mut h = None;
    let mut words = header.split_whitespace();
    if words.next() != Some("fraclap-mesh") || words.next() != Some("v1") {
        return Err(parse_err(hline, "expected header `fraclap-mesh v1 ...`".into()));
    }
    for w in words {
        let (key, val) = w
            .split_once('=')
            .ok_or_else(|| parse_err(hline, format!("malformed header field `{w}`")))?;
        match key {
            "dim" => dim = Some(val.parse::<usize>().map_err(|e| parse_err(hline, e.to_string()))?),
            "mu" => mu = Some(val.parse::<f64>().map_err(|e| parse_err(hline, e.to_string()))?),
            "h" => h = Some(val.parse::<f64>().map_err(|e| parse_err(hline, e.to_string()))?),
            _ => return Err(parse_err(hline, format!("unknown header field `{key}`"))),
        }
    }
    let dimension = dim.ok_or_else(|| parse_err(hline, "header is missing dim=".into()))?;
    if dimension != 1 && dimension != 2 {
        return Err(parse_err(hline, format!("dim must be 1 or 2, got {dimension}")));
    }
    let grading_mu = mu.ok_or_else(|| parse_err(hline, "header is missing mu=".into()))?;
    let target_h = h.ok_or_else(|| parse_err(hline, "header is missing h=".into()))?;

    let expect_count = |lines: &mut dyn Iterator<Item = (usize, &str)>, kw: &str| -> Result<usize> {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, format!("missing `{kw} <count>` section")))?;
        let mut w = l.split_whitespace();
        if w.next() != Some(kw) {
            return Err(parse_err(ln, format!("expected `{kw} <count>`, got `{l}`")));
        }
        let n = w
            .next()
            .ok_or_else(|| parse_err(ln, format!("`{kw}` is missing its count")))?
            .parse::<usize>()
            .map_err(|e| parse_err(ln, e.to_string()))?;
        if w.next().is_some() {
            return Err(parse_err(ln, format!("trailing tokens after `{kw} <count>`")));
        }
        Ok(n)
    };

    let nv = expect_count(&mut lines, "vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    let mut is_boundary = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "vertex list ended early".into()))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != dimension + 1 {
            return Err(parse_err(
                ln,
                format!("expected {} fields per vertex, got {}", dimension + 1, toks.len()),
            ));
        }
        let x: f64 = toks[0].parse().map_err(|e: std::num::ParseFloatError| parse_err(ln, e.to_string()))?;
        let y: f64 = if dimension == 2 {
            toks[1].parse().map_err(|e: std::num::ParseFloatError| parse_err(ln, e.to_string()))?
        } else {
            0.0
        };
        let flag = match toks[dimension] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(ln, format!("boundary flag must be 0 or 1, got `{other}`"))),
        };
        vertices.push([x, y]);
        is_boundary.push(flag);
    }

    let nc = expect_count(&mut lines, "cells")?;
    let stride = dimension + 1;
    let mut cells = Vec::with_capacity(nc * stride);
    for _ in 0..nc {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "cell list ended early".into()))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != stride {
            return Err(parse_err(
                ln,
                format!("expected {stride} vertex indices per cell, got {}", toks.len()),
            ));
        }
        for t in toks {
            let v: usize = t.parse().map_err(|e: std::num::ParseIntError| parse_err(ln, e.to_string()))?;
            if v >= nv {
                return Err(parse_err(ln, format!("vertex index {v} out of range (have {nv})")));
            }
            cells.push(v);
        }
    }
    if let Some((ln, l)) = lines.next() {
        return Err(parse_err(ln, format!("unexpected content after cell list: `{l}`")));
    }

    let mesh = Mesh {
        dimension,
        vertices,
        cells,
        is_boundary,
        grading_mu,
        target_h,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Shape-regularity and grading audit of a mesh.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct ShapeReport {
    /// Max over cells of diameter / inradius.
    pub lambda1: f64,
    /// Max diameter ratio between cells sharing a vertex.
    pub lambda2: f64,
    /// The patch constant `λ = 2 λ₁ λ₂` bounding cell diameters by patch
    /// inradii.
    pub lambda: f64,
    /// Worst multiplicative deviation of cell sizes from the grading law.
    pub grading_deviation: f64,
}

/// Measure `λ₁`, `λ₂`, and the deviation from the grading law on a mesh.
///
/// The grading target compares each cell diameter against `h^μ` (cells
/// touching the boundary) or `μ h d^{(μ-1)/μ}` with `d` the centroid distance
/// to the boundary, all normalized by the domain inradius.
pub fn compute_shape_constants(mesh: &Mesh) -> ShapeReport {
    let ncells = mesh.num_cells();
    let mut diam = vec![0.0f64; ncells];
    let mut inradius = vec![0.0f64; ncells];
    for t in 0..ncells {
        let c = mesh.cell(t);
        if mesh.dimension == 1 {
            let len = (mesh.vertices[c[0]][0] - mesh.vertices[c[1]][0]).abs();
            diam[t] = len;
            inradius[t] = len;
        } else {
            let (a, b, cc) = (mesh.vertices[c[0]], mesh.vertices[c[1]], mesh.vertices[c[2]]);
            let (ea, eb, ec) = (geometry::dist(b, cc), geometry::dist(a, cc), geometry::dist(a, b));
            diam[t] = ea.max(eb).max(ec);
            let area = geometry::tri_signed_area(a, b, cc).abs();
            inradius[t] = 2.0 * area / (ea + eb + ec);
        }
    }
    let lambda1 = (0..ncells).map(|t| diam[t] / inradius[t]).fold(1.0f64, f64::max);

    // λ₂ via vertex stars: any two cells sharing a vertex are both incident
    // to it, so per-vertex max/min diameter ratios cover all touching pairs.
    let mut vmax = vec![0.0f64; mesh.num_vertices()];
    let mut vmin = vec![f64::INFINITY; mesh.num_vertices()];
    for t in 0..ncells {
        for &v in mesh.cell(t) {
            vmax[v] = vmax[v].max(diam[t]);
            vmin[v] = vmin[v].min(diam[t]);
        }
    }
    let lambda2 = (0..mesh.num_vertices())
        .filter(|&v| vmin[v].is_finite() && vmin[v] > 0.0)
        .map(|v| vmax[v] / vmin[v])
        .fold(1.0f64, f64::max);

    let facets = mesh.boundary_facets();
    let inradius_domain = mesh
        .vertices
        .iter()
        .map(|&p| mesh.distance_to_boundary(p, &facets))
        .fold(0.0f64, f64::max);
    let scale = if inradius_domain > 0.0 { inradius_domain } else { 1.0 };
    let hn = mesh.target_h / scale;
    let mu = mesh.grading_mu;
    let stride = mesh.cell_stride();
    let mut deviation = 1.0f64;
    for t in 0..ncells {
        let c = mesh.cell(t);
        let touches = c.iter().any(|&v| mesh.is_boundary[v]);
        let target = if touches {
            scale * hn.powf(mu)
        } else {
            let mut centroid = [0.0, 0.0];
            for &v in c {
                centroid[0] += mesh.vertices[v][0] / stride as f64;
                centroid[1] += mesh.vertices[v][1] / stride as f64;
            }
            let d = mesh.distance_to_boundary(centroid, &facets) / scale;
            mu * scale * hn * d.powf((mu - 1.0) / mu)
        };
        let ratio = diam[t] / target;
        deviation = deviation.max(ratio.max(1.0 / ratio));
    }

    ShapeReport {
        lambda1,
        lambda2,
        lambda: 2.0 * lambda1 * lambda2,
        grading_deviation: deviation,
    }
}

/// Geometry of the symmetric neighborhood `Ωᵢ` used for the singular part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OmegaShape {
    /// 1D: the open interval of this radius around the node.
    Interval { radius: f64 },
    /// 2D: the axis-aligned square with this half-side (`Hᵢ/√2`, so the
    /// half-diagonal is exactly `Hᵢ`).
    Square { half_side: f64 },
}

/// Per-node classification data for one interior node.
#[derive(Clone, Copy, Debug)]
pub struct NodeClass {
    /// Mesh vertex index.
    pub vertex: usize,
    /// Distance `δᵢ` to the (polygonal) mesh boundary.
    pub delta: f64,
    /// Radius `hᵢ` of the largest ball centered at the node inside its
    /// vertex patch `ωᵢ`.
    pub patch_radius: f64,
    /// Two-scale length `Hᵢ = hᵢ^α min(δᵢ, δ₀)^{1-α}`.
    pub big_scale: f64,
    /// Membership in the δ-interior set `δᵢ/hᵢ ≥ C_δ`.
    pub is_delta_interior: bool,
    pub omega: OmegaShape,
}

/// Classification of all interior nodes of a mesh.
#[derive(Clone, Debug)]
pub struct NodeClassification {
    /// One entry per interior vertex, ascending by vertex index.
    pub nodes: Vec<NodeClass>,
    pub alpha: f64,
    pub delta0: f64,
    /// Threshold `C_δ = max{(2 max{c̄_S, 1})^{1/α}, 2λ}` with `c̄_S = 1` for
    /// both the interval and the square neighborhood.
    pub c_delta: f64,
}

impl NodeClassification {
    pub fn by_vertex(&self, vertex: usize) -> Option<&NodeClass> {
        self.nodes
            .binary_search_by_key(&vertex, |n| n.vertex)
            .ok()
            .map(|i| &self.nodes[i])
    }
}

/// Compute `δᵢ`, `hᵢ`, `Hᵢ`, and the δ-interior flag for every interior node.
pub fn classify_nodes(mesh: &Mesh, alpha: f64, delta0: f64) -> Result<NodeClassification> {
    if !(0.5..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha = {alpha} must lie in [1/2, 1]")));
    }
    if !(delta0 > 0.0) {
        return Err(Error::invalid(format!("delta0 = {delta0} must be positive")));
    }
    let facets = mesh.boundary_facets();
    let shape = compute_shape_constants(mesh);
    let c_delta = (2.0f64).powf(1.0 / alpha).max(2.0 * shape.lambda);

    // Vertex -> incident cells.
    let mut patches: Vec<Vec<usize>> = vec![Vec::new(); mesh.num_vertices()];
    for t in 0..mesh.num_cells() {
        for &v in mesh.cell(t) {
            patches[v].push(t);
        }
    }

    let mut nodes = Vec::new();
    for v in 0..mesh.num_vertices() {
        if mesh.is_boundary[v] {
            continue;
        }
        if patches[v].is_empty() {
            return Err(Error::invalid(format!("interior vertex {v} belongs to no cell")));
        }
        let x = mesh.vertices[v];
        let delta = mesh.distance_to_boundary(x, &facets);
        // hᵢ: distance to the nearest patch facet not containing the node
        // (opposite endpoints in 1D, opposite edges in 2D).
        let mut patch_radius = f64::INFINITY;
        for &t in &patches[v] {
            let c = mesh.cell(t);
            if mesh.dimension == 1 {
                let other = if c[0] == v { c[1] } else { c[0] };
                patch_radius = patch_radius.min(geometry::dist(x, mesh.vertices[other]));
            } else {
                let others: Vec<usize> = c.iter().copied().filter(|&w| w != v).collect();
                patch_radius = patch_radius.min(geometry::point_segment_distance(
                    x,
                    mesh.vertices[others[0]],
                    mesh.vertices[others[1]],
                ));
            }
        }
        let big_scale = patch_radius.powf(alpha) * delta.min(delta0).powf(1.0 - alpha);
        let omega = if mesh.dimension == 1 {
            OmegaShape::Interval { radius: big_scale }
        } else {
            OmegaShape::Square {
                half_side: big_scale / std::f64::consts::SQRT_2,
            }
        };
        nodes.push(NodeClass {
            vertex: v,
            delta,
            patch_radius,
            big_scale,
            is_delta_interior: delta / patch_radius >= c_delta,
            omega,
        });
    }
    Ok(NodeClassification {
        nodes,
        alpha,
        delta0,
        c_delta,
    })
}

/// Locate the cell containing `x`, with ties on shared facets broken by the
/// lowest cell index.
///
/// Returns the cell index and the barycentric coordinates of `x` with
/// respect to that cell's vertices (2 weights in 1D, 3 in 2D): nonnegative,
/// summing to one, reproducing `x` to 1e-12.
pub fn locate_point(mesh: &Mesh, x: Point) -> Result<(usize, Vec<f64>)> {
    scan_cells(mesh, x, 0..mesh.num_cells())
        .ok_or_else(|| Error::invalid(format!("point ({}, {}) lies outside the domain", x[0], x[1])))
}

const BARY_TOL: f64 = 1e-12;

fn cell_barycentric(mesh: &Mesh, t: usize, x: Point) -> Option<Vec<f64>> {
    let c = mesh.cell(t);
    if mesh.dimension == 1 {
        let (p, q) = (mesh.vertices[c[0]][0], mesh.vertices[c[1]][0]);
        let len = q - p;
        if len == 0.0 {
            return None;
        }
        let l1 = (x[0] - p) / len;
        let l0 = 1.0 - l1;
        if l0 >= -BARY_TOL && l1 >= -BARY_TOL {
            return Some(normalize_bary(vec![l0, l1]));
        }
        None
    } else {
        let l = geometry::barycentric(
            x,
            mesh.vertices[c[0]],
            mesh.vertices[c[1]],
            mesh.vertices[c[2]],
        )?;
        if l.iter().all(|&w| w >= -BARY_TOL) {
            return Some(normalize_bary(l.to_vec()));
        }
        None
    }
}

fn normalize_bary(mut l: Vec<f64>) -> Vec<f64> {
    for w in &mut l {
        *w = w.max(0.0);
    }
    let sum: f64 = l.iter().sum();
    for w in &mut l {
        *w /= sum;
    }
    l
}

fn scan_cells(
    mesh: &Mesh,
    x: Point,
    cells: impl IntoIterator<Item = usize>,
) -> Option<(usize, Vec<f64>)> {
    for t in cells {
        if let Some(l) = cell_barycentric(mesh, t, x) {
            return Some((t, l));
        }
    }
    None
}

/// Accelerated point location over a fixed mesh: a uniform bucket grid over
/// the bounding box, falling back to a full scan for robustness.
///
/// Produces exactly the same (lowest-cell-index) results as [`locate_point`]:
/// every cell containing `x` overlaps the bucket of `x`, and buckets store
/// candidates in ascending index order.
pub struct PointLocator<'a> {
    mesh: &'a Mesh,
    lo: Point,
    inv_step: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<u32>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in &mesh.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let ncells = mesh.num_cells().max(1);
        let per_axis = ((ncells as f64).sqrt().ceil() as usize).clamp(1, 512);
        let dims = if mesh.dimension == 1 {
            [per_axis * per_axis, 1]
        } else {
            [per_axis, per_axis]
        };
        let mut inv_step = [0.0; 2];
        for d in 0..2 {
            let span = (hi[d] - lo[d]).max(f64::MIN_POSITIVE);
            inv_step[d] = dims[d] as f64 / span;
        }
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        let clamp_idx = |v: f64, d: usize| -> usize {
            let i = ((v - lo[d]) * inv_step[d]).floor() as isize;
            i.clamp(0, dims[d] as isize - 1) as usize
        };
        for t in 0..mesh.num_cells() {
            let (mut blo, mut bhi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for &v in mesh.cell(t) {
                for d in 0..2 {
                    blo[d] = blo[d].min(mesh.vertices[v][d]);
                    bhi[d] = bhi[d].max(mesh.vertices[v][d]);
                }
            }
            let (i0, i1) = (clamp_idx(blo[0], 0), clamp_idx(bhi[0], 0));
            let (j0, j1) = if mesh.dimension == 1 {
                (0, 0)
            } else {
                (clamp_idx(blo[1], 1), clamp_idx(bhi[1], 1))
            };
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * dims[0] + i].push(t as u32);
                }
            }
        }
        PointLocator {
            mesh,
            lo,
            inv_step,
            dims,
            buckets,
        }
    }

    pub fn locate(&self, x: Point) -> Result<(usize, Vec<f64>)> {
        let idx = |v: f64, d: usize| -> usize {
            let i = ((v - self.lo[d]) * self.inv_step[d]).floor() as isize;
            i.clamp(0, self.dims[d] as isize - 1) as usize
        };
        let i = idx(x[0], 0);
        let j = if self.mesh.dimension == 1 { 0 } else { idx(x[1], 1) };
        let candidates = &self.buckets[j * self.dims[0] + i];
        if let Some(hit) = scan_cells(self.mesh, x, candidates.iter().map(|&t| t as usize)) {
            return Ok(hit);
        }
        // Tolerated boundary points can fall just outside their bucket.
        locate_point(self.mesh, x)
    }
}
