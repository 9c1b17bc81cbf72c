//! Interface-resolving triangulations of rectangles.
//!
//! Meshes are immutable once built. A mesh produced by [`refine_uniform`]
//! keeps a handle to its parent together with the origin of every fine
//! vertex, which is what prolongation between nested spaces relies on.

mod io;

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use serde::Serialize;
use thiserror::Error;

use crate::assembly::assemble_stiffness;
use crate::problems::Diffusion;
use crate::sparse::SparsityPattern;

pub use io::{load_mesh, save_mesh};

pub type Point = [f64; 2];

/// Relative tolerance used when deciding whether a coordinate sits on a grid line.
const ALIGN_TOL: f64 = 1e-9;

/// Offdiagonal tolerance of the angle check, relative to the largest diagonal entry.
pub const ANGLE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid subdivision count {0}, need at least 2")]
    InvalidSubdivision(usize),
    #[error("interface not resolved by the grid: {0}")]
    InterfaceNotResolved(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid mesh: {0}")]
    Validation(String),
}

/// The two subdomains separated by the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Region {
    /// Tag 1: inside the interface box (or left of a vertical interface line).
    One,
    /// Tag 2: the complement.
    Two,
}

impl Region {
    pub fn tag(self) -> u8 {
        match self {
            Region::One => 1,
            Region::Two => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Region> {
        match tag {
            1 => Some(Region::One),
            2 => Some(Region::Two),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub region: Region,
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn square(lo: f64, hi: f64) -> Self {
        Rect::new(lo, hi, lo, hi)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] > self.x0 && p[0] < self.x1 && p[1] > self.y0 && p[1] < self.y1
    }
}

/// Shape of the interface Γ separating region 1 from region 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum InterfaceShape {
    /// Region 1 is the interior of the box.
    Box(Rect),
    /// Region 1 is `x < x_line`.
    VerticalLine(f64),
}

/// Domain plus interface, the full geometric input of a structured mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Geometry {
    pub domain: Rect,
    pub interface: InterfaceShape,
}

impl Geometry {
    /// `(-1,1)^2` with region 1 the box `(-1/2,1/2)^2`.
    pub fn centered_box() -> Self {
        Geometry {
            domain: Rect::square(-1.0, 1.0),
            interface: InterfaceShape::Box(Rect::square(-0.5, 0.5)),
        }
    }

    /// `(-1,1)^2` split by the line `x = 0`.
    pub fn vertical_split() -> Self {
        Geometry {
            domain: Rect::square(-1.0, 1.0),
            interface: InterfaceShape::VerticalLine(0.0),
        }
    }

    /// Grid spacing in x of an `n x n` subdivision.
    pub fn spacing(&self, n: usize) -> f64 {
        self.domain.width() / n as f64
    }

    pub fn region_of(&self, p: Point) -> Region {
        let inside = match self.interface {
            InterfaceShape::Box(b) => b.contains(p),
            InterfaceShape::VerticalLine(x) => p[0] < x,
        };
        if inside {
            Region::One
        } else {
            Region::Two
        }
    }
}

/// Where a vertex of a refined mesh comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexOrigin {
    Coarse(usize),
    Midpoint(usize, usize),
}

#[derive(Debug)]
pub struct Genealogy {
    pub parent: Arc<Mesh>,
    pub origins: Vec<VertexOrigin>,
}

#[derive(Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<Triangle>,
    on_boundary: Vec<bool>,
    interface_edges: Vec<[usize; 2]>,
    h: f64,
    genealogy: Option<Genealogy>,
    pattern: OnceLock<SparsityPattern>,
}

/// Twice the signed area of the triangle `(a, b, c)`.
fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Builds a mesh from raw parts and checks every structural invariant.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<Triangle>,
        on_boundary: Vec<bool>,
        interface_edges: Vec<[usize; 2]>,
    ) -> Result<Mesh, MeshError> {
        let h = max_diameter(&vertices, &triangles);
        let mesh = Mesh {
            vertices,
            triangles,
            on_boundary,
            interface_edges,
            h,
            genealogy: None,
            pattern: OnceLock::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<(), MeshError> {
        let nv = self.vertices.len();
        if self.on_boundary.len() != nv {
            return Err(MeshError::Validation(format!(
                "{} boundary flags for {} vertices",
                self.on_boundary.len(),
                nv
            )));
        }
        if self.triangles.is_empty() {
            return Err(MeshError::Validation("mesh has no triangles".into()));
        }
        if let Some(i) = self.vertices.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(MeshError::Validation(format!("vertex {i} has a non-finite coordinate")));
        }

        // Directed edge -> owning triangle. A conforming, consistently oriented
        // mesh uses each directed edge at most once.
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * self.triangles.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = tri.vertices;
            if a >= nv || b >= nv || c >= nv {
                return Err(MeshError::Validation(format!(
                    "triangle {t} references a vertex index >= {nv}"
                )));
            }
            if a == b || b == c || a == c {
                return Err(MeshError::Validation(format!("triangle {t} repeats a vertex")));
            }
            let area2 = cross(self.vertices[a], self.vertices[b], self.vertices[c]);
            let scale = dist(self.vertices[a], self.vertices[b]).max(dist(self.vertices[a], self.vertices[c]));
            if !(area2 > 1e-14 * scale * scale) {
                return Err(MeshError::Validation(format!(
                    "triangle {t} has non-positive signed area"
                )));
            }
            for (p, q) in [(a, b), (b, c), (c, a)] {
                if let Some(other) = directed.insert((p, q), t) {
                    return Err(MeshError::Validation(format!(
                        "edge ({p},{q}) used with the same orientation by triangles {other} and {t}"
                    )));
                }
            }
        }

        // Edges seen from one side only: no vertex may sit inside them (hanging node).
        let lone: Vec<(usize, usize)> = directed
            .keys()
            .filter(|&&(p, q)| !directed.contains_key(&(q, p)))
            .copied()
            .collect();
        if !lone.is_empty() {
            let grid = BucketGrid::new(&self.vertices);
            for (p, q) in lone {
                let (a, b) = (self.vertices[p], self.vertices[q]);
                let len = dist(a, b);
                for v in grid.candidates(a, b) {
                    if v == p || v == q {
                        continue;
                    }
                    let c = self.vertices[v];
                    let off = cross(a, b, c).abs() / len;
                    let t = ((c[0] - a[0]) * (b[0] - a[0]) + (c[1] - a[1]) * (b[1] - a[1])) / (len * len);
                    if off <= 1e-10 * len && t > 1e-10 && t < 1.0 - 1e-10 {
                        return Err(MeshError::Validation(format!(
                            "vertex {v} hangs on edge ({p},{q}); mesh is not conforming"
                        )));
                    }
                }
            }
        }

        for &[a, b] in &self.interface_edges {
            if !directed.contains_key(&(a, b)) && !directed.contains_key(&(b, a)) {
                return Err(MeshError::Validation(format!(
                    "interface edge ({a},{b}) is not an edge of the mesh"
                )));
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.on_boundary
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&v| self.on_boundary[v]).collect()
    }

    pub fn interface_edges(&self) -> &[[usize; 2]] {
        &self.interface_edges
    }

    /// Maximum element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn parent(&self) -> Option<&Arc<Mesh>> {
        self.genealogy.as_ref().map(|g| &g.parent)
    }

    pub fn genealogy(&self) -> Option<&Genealogy> {
        self.genealogy.as_ref()
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t].vertices;
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * cross(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// Index of the vertex at `p`, if any lies within `tol`.
    pub fn find_vertex(&self, p: Point, tol: f64) -> Option<usize> {
        self.vertices.iter().position(|v| dist(*v, p) <= tol)
    }

    /// CSR sparsity pattern of P1 operators on this mesh (cached).
    pub fn pattern(&self) -> &SparsityPattern {
        self.pattern.get_or_init(|| SparsityPattern::from_mesh(self))
    }

    /// Number of refinement steps from `ancestor` down to `self`, if nested.
    pub fn depth_below(&self, ancestor: &Mesh) -> Option<usize> {
        let mut depth = 0;
        let mut current = self;
        loop {
            if std::ptr::eq(current, ancestor) {
                return Some(depth);
            }
            current = current.parent()?.as_ref();
            depth += 1;
        }
    }
}

fn max_diameter(vertices: &[Point], triangles: &[Triangle]) -> f64 {
    triangles
        .iter()
        .filter(|t| t.vertices.iter().all(|&v| v < vertices.len()))
        .map(|t| {
            let [a, b, c] = t.vertices.map(|v| vertices[v]);
            dist(a, b).max(dist(b, c)).max(dist(c, a))
        })
        .fold(0.0, f64::max)
}

/// Uniform bucketing of vertices for segment proximity queries.
struct BucketGrid {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl BucketGrid {
    fn new(vertices: &[Point]) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in vertices {
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
        }
        let side = ((vertices.len() as f64).sqrt().ceil() as usize).max(1);
        let cell = ((x1 - x0).max(y1 - y0) / side as f64).max(f64::MIN_POSITIVE);
        let nx = ((x1 - x0) / cell) as usize + 1;
        let ny = ((y1 - y0) / cell) as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        let mut grid = BucketGrid { x0, y0, cell, nx, ny, buckets: Vec::new() };
        for (i, p) in vertices.iter().enumerate() {
            let (ix, iy) = grid.locate(*p);
            buckets[iy * nx + ix].push(i);
        }
        grid.buckets = buckets;
        grid
    }

    fn locate(&self, p: Point) -> (usize, usize) {
        let ix = (((p[0] - self.x0) / self.cell).max(0.0) as usize).min(self.nx - 1);
        let iy = (((p[1] - self.y0) / self.cell).max(0.0) as usize).min(self.ny - 1);
        (ix, iy)
    }

    fn candidates(&self, a: Point, b: Point) -> impl Iterator<Item = usize> + '_ {
        let (ax, ay) = self.locate([a[0].min(b[0]), a[1].min(b[1])]);
        let (bx, by) = self.locate([a[0].max(b[0]), a[1].max(b[1])]);
        let (ax, ay) = (ax.saturating_sub(1), ay.saturating_sub(1));
        let (bx, by) = ((bx + 1).min(self.nx - 1), (by + 1).min(self.ny - 1));
        (ay..=by).flat_map(move |iy| (ax..=bx).flat_map(move |ix| self.buckets[iy * self.nx + ix].iter().copied()))
    }
}

fn grid_index(value: f64, origin: f64, spacing: f64) -> Option<usize> {
    let k = (value - origin) / spacing;
    let r = k.round();
    ((k - r).abs() <= ALIGN_TOL * k.abs().max(1.0) && r >= 0.0).then_some(r as usize)
}

/// Structured right-triangle mesh of `domain` with `n` cells per side, every
/// cell split along its lower-left to upper-right diagonal.
pub fn generate_interface_mesh(n: usize, geometry: &Geometry) -> Result<Mesh, MeshError> {
    if n < 2 {
        return Err(MeshError::InvalidSubdivision(n));
    }
    let d = geometry.domain;
    if !(d.width() > 0.0 && d.height() > 0.0) {
        return Err(MeshError::Validation("domain rectangle is empty".into()));
    }
    let (dx, dy) = (d.width() / n as f64, d.height() / n as f64);

    let interior_line = |value: f64, origin: f64, spacing: f64, what: &str| -> Result<(), MeshError> {
        match grid_index(value, origin, spacing) {
            Some(k) if k >= 1 && k < n => Ok(()),
            Some(_) => Err(MeshError::InterfaceNotResolved(format!(
                "{what} = {value} is not strictly inside the domain"
            ))),
            None => Err(MeshError::InterfaceNotResolved(format!(
                "{what} = {value} is not on a grid line of the {n}x{n} subdivision"
            ))),
        }
    };
    match geometry.interface {
        InterfaceShape::Box(b) => {
            interior_line(b.x0, d.x0, dx, "box x0")?;
            interior_line(b.x1, d.x0, dx, "box x1")?;
            interior_line(b.y0, d.y0, dy, "box y0")?;
            interior_line(b.y1, d.y0, dy, "box y1")?;
            if !(b.x0 < b.x1 && b.y0 < b.y1) {
                return Err(MeshError::InterfaceNotResolved("interface box is empty".into()));
            }
        }
        InterfaceShape::VerticalLine(x) => interior_line(x, d.x0, dx, "interface line x")?,
    }

    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    let mut on_boundary = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = if i == n { d.x1 } else { d.x0 + i as f64 * dx };
            let y = if j == n { d.y1 } else { d.y0 + j as f64 * dy };
            vertices.push([x, y]);
            on_boundary.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            for verts in [[v00, v10, v11], [v00, v11, v01]] {
                let c = centroid(verts.map(|v| vertices[v]));
                triangles.push(Triangle { vertices: verts, region: geometry.region_of(c) });
            }
        }
    }
    let interface_edges = collect_interface_edges(&triangles);
    let h = max_diameter(&vertices, &triangles);
    Ok(Mesh {
        vertices,
        triangles,
        on_boundary,
        interface_edges,
        h,
        genealogy: None,
        pattern: OnceLock::new(),
    })
}

fn centroid(p: [Point; 3]) -> Point {
    [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
}

/// Edges shared by two triangles of different regions.
fn collect_interface_edges(triangles: &[Triangle]) -> Vec<[usize; 2]> {
    let mut owner: HashMap<(usize, usize), Region> = HashMap::with_capacity(3 * triangles.len());
    let mut edges = Vec::new();
    for tri in triangles {
        let [a, b, c] = tri.vertices;
        for (p, q) in [(a, b), (b, c), (c, a)] {
            match owner.insert(edge_key(p, q), tri.region) {
                Some(r) if r != tri.region => edges.push([p.min(q), p.max(q)]),
                _ => {}
            }
        }
    }
    edges.sort_unstable();
    edges
}

/// Red refinement: every triangle is split into four congruent children
/// through its edge midpoints. Coarse vertices keep their indices; midpoints
/// are appended in order of first appearance.
pub fn refine_uniform(mesh: &Arc<Mesh>) -> Mesh {
    let nv = mesh.n_vertices();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * mesh.n_triangles() / 2 + nv);
    let mut uses: Vec<u8> = Vec::new();
    let mut vertices = mesh.vertices.clone();
    let mut origins: Vec<VertexOrigin> = (0..nv).map(VertexOrigin::Coarse).collect();

    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>, origins: &mut Vec<VertexOrigin>| -> usize {
        let key = edge_key(a, b);
        let m = *midpoint.entry(key).or_insert_with(|| {
            let (p, q) = (vertices[key.0], vertices[key.1]);
            vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            origins.push(VertexOrigin::Midpoint(key.0, key.1));
            uses.push(0);
            vertices.len() - 1
        });
        uses[m - nv] += 1;
        m
    };

    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    for tri in &mesh.triangles {
        let [a, b, c] = tri.vertices;
        let ab = mid(a, b, &mut vertices, &mut origins);
        let bc = mid(b, c, &mut vertices, &mut origins);
        let ca = mid(c, a, &mut vertices, &mut origins);
        for verts in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
            triangles.push(Triangle { vertices: verts, region: tri.region });
        }
    }

    let mut on_boundary = mesh.on_boundary.clone();
    on_boundary.extend(origins[nv..].iter().zip(&uses).map(|(o, &u)| match *o {
        VertexOrigin::Midpoint(p, q) => u == 1 && mesh.on_boundary[p] && mesh.on_boundary[q],
        VertexOrigin::Coarse(_) => unreachable!(),
    }));

    let mut interface_edges = Vec::with_capacity(2 * mesh.interface_edges.len());
    for &[a, b] in &mesh.interface_edges {
        let m = midpoint[&edge_key(a, b)];
        interface_edges.push([a.min(m), a.max(m)]);
        interface_edges.push([b.min(m), b.max(m)]);
    }
    interface_edges.sort_unstable();

    let h = max_diameter(&vertices, &triangles);
    Mesh {
        vertices,
        triangles,
        on_boundary,
        interface_edges,
        h,
        genealogy: Some(Genealogy { parent: Arc::clone(mesh), origins }),
        pattern: OnceLock::new(),
    }
}

/// `levels` nested meshes starting from an `n x n` structured mesh.
pub fn hierarchy(n: usize, geometry: &Geometry, levels: usize) -> Result<Vec<Arc<Mesh>>, MeshError> {
    let mut meshes = vec![Arc::new(generate_interface_mesh(n, geometry)?)];
    for _ in 1..levels {
        let next = refine_uniform(meshes.last().unwrap());
        meshes.push(Arc::new(next));
    }
    Ok(meshes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleReport {
    /// Largest offdiagonal stiffness entry.
    pub worst_offdiag: f64,
    pub violating_pairs: Vec<[usize; 2]>,
    /// Absolute threshold an offdiagonal entry must not exceed.
    pub tolerance: f64,
    pub passes: bool,
}

/// Checks `a(phi_i, phi_j) <= 0` for all `i != j`.
pub fn check_angle_condition(mesh: &Mesh, diffusion: &Diffusion) -> AngleReport {
    let a = assemble_stiffness(mesh, diffusion);
    let max_diag = a.diagonal().into_iter().fold(0.0, f64::max);
    let tolerance = ANGLE_TOL * max_diag;
    let mut worst = f64::NEG_INFINITY;
    let mut violating_pairs = Vec::new();
    for i in 0..a.n() {
        for (j, v) in a.row(i) {
            if j == i {
                continue;
            }
            worst = worst.max(v);
            if v > tolerance && i < j {
                violating_pairs.push([i, j]);
            }
        }
    }
    AngleReport {
        worst_offdiag: worst,
        passes: violating_pairs.is_empty(),
        violating_pairs,
        tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_mesh(n: usize) -> Result<Mesh, MeshError> {
        generate_interface_mesh(n, &Geometry::centered_box())
    }

    #[test]
    fn structured_counts() {
        let m = box_mesh(4).unwrap();
        assert_eq!(m.n_vertices(), 25);
        assert_eq!(m.n_triangles(), 32);
        assert_eq!(m.interface_edges().len(), 8);
        let inner = m.triangles().iter().filter(|t| t.region == Region::One).count();
        assert_eq!(inner, 8);
        assert!((m.h() - 2f64.sqrt() * 0.5).abs() < 1e-15);
        assert_eq!(m.boundary_vertices().len(), 16);
    }

    #[test]
    fn misaligned_interface_rejected() {
        assert!(matches!(box_mesh(3), Err(MeshError::InterfaceNotResolved(_))));
        assert!(matches!(box_mesh(1), Err(MeshError::InvalidSubdivision(1))));
    }

    #[test]
    fn vertical_line_interface() {
        let m = generate_interface_mesh(4, &Geometry::vertical_split()).unwrap();
        assert_eq!(m.interface_edges().len(), 4);
        for &[a, b] in m.interface_edges() {
            assert_eq!(m.vertices()[a][0], 0.0);
            assert_eq!(m.vertices()[b][0], 0.0);
        }
        assert!(generate_interface_mesh(3, &Geometry::vertical_split()).is_err());
    }

    #[test]
    fn refinement_counts_and_inheritance() {
        let coarse = Arc::new(box_mesh(4).unwrap());
        let fine = refine_uniform(&coarse);
        assert_eq!(fine.n_triangles(), 128);
        assert_eq!(fine.n_vertices(), 81);
        assert_eq!(fine.boundary_vertices().len(), 32);
        assert_eq!(fine.interface_edges().len(), 16);
        assert!((fine.h() - coarse.h() / 2.0).abs() < 1e-15);
        for (t, tri) in coarse.triangles().iter().enumerate() {
            for child in &fine.triangles()[4 * t..4 * t + 4] {
                assert_eq!(child.region, tri.region);
            }
        }
        let fine = Arc::new(fine);
        let finer = refine_uniform(&fine);
        assert!((finer.h() - coarse.h() / 4.0).abs() < 1e-15);
        assert_eq!(finer.depth_below(&coarse), Some(2));
        assert_eq!(coarse.depth_below(&finer), None);
    }

    #[test]
    fn refined_matches_direct_generation() {
        let coarse = Arc::new(box_mesh(4).unwrap());
        let fine = refine_uniform(&coarse);
        let direct = box_mesh(8).unwrap();
        let mut a: Vec<_> = fine.vertices().iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect();
        let mut b: Vec<_> = direct.vertices().iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn refined_interface_edges_lie_on_coarse_ones() {
        let coarse = Arc::new(box_mesh(4).unwrap());
        let fine = refine_uniform(&coarse);
        let genealogy = fine.genealogy().unwrap();
        for &[a, b] in fine.interface_edges() {
            let ends: Vec<usize> = [a, b]
                .iter()
                .flat_map(|&v| match genealogy.origins[v] {
                    VertexOrigin::Coarse(c) => vec![c],
                    VertexOrigin::Midpoint(p, q) => vec![p, q],
                })
                .collect();
            let covered = coarse
                .interface_edges()
                .iter()
                .any(|&[p, q]| ends.iter().all(|&v| v == p || v == q));
            assert!(covered, "fine interface edge ({a},{b}) not inside a coarse one");
        }
    }

    #[test]
    fn area_is_preserved() {
        let geometry = Geometry::centered_box();
        for mesh in hierarchy(4, &geometry, 4).unwrap() {
            let rel = (mesh.total_area() - geometry.domain.area()).abs() / geometry.domain.area();
            assert!(rel < 1e-12);
        }
    }

    #[test]
    fn angle_condition_on_structured_hierarchy() {
        let diffusion = Diffusion::new(1000.0, 1.0);
        for mesh in hierarchy(4, &Geometry::centered_box(), 4).unwrap() {
            let report = check_angle_condition(&mesh, &diffusion);
            assert!(report.passes);
            assert!(report.violating_pairs.is_empty());
            assert!(report.worst_offdiag <= report.tolerance);
        }
    }

    #[test]
    fn obtuse_triangle_fails_angle_condition() {
        let mesh = Mesh::new(
            vec![[0.0, 0.0], [4.0, 0.0], [3.9, 0.2]],
            vec![Triangle { vertices: [0, 1, 2], region: Region::Two }],
            vec![true; 3],
            vec![],
        )
        .unwrap();
        let report = check_angle_condition(&mesh, &Diffusion::uniform(1.0));
        assert!(!report.passes);
        assert_eq!(report.violating_pairs, vec![[0, 1]]);
        assert!(report.worst_offdiag > 0.0);
    }

    #[test]
    fn validation_rejects_bad_meshes() {
        let tri = |v: [usize; 3]| Triangle { vertices: v, region: Region::One };
        let verts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let err = Mesh::new(verts.clone(), vec![tri([0, 1, 3])], vec![false; 3], vec![]).unwrap_err();
        assert!(matches!(err, MeshError::Validation(_)));
        let err = Mesh::new(verts.clone(), vec![tri([0, 2, 1])], vec![false; 3], vec![]).unwrap_err();
        assert!(err.to_string().contains("area"));

        // hanging node at (0.5, 0.5) on the hypotenuse of the big triangle
        let verts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5], [1.0, 0.5]];
        let tris = vec![tri([0, 1, 2]), tri([1, 5, 4]), tri([5, 3, 4]), tri([4, 3, 2])];
        let err = Mesh::new(verts, tris, vec![true; 6], vec![]).unwrap_err();
        assert!(err.to_string().contains("hangs"), "{err}");
    }
}
