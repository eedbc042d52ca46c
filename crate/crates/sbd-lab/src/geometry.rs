//! Planar primitives: axis-aligned boxes, oriented rectangles, segments,
//! polylines, the lattice of cubes, and the length-type measures built on them.

use nalgebra::{Matrix2, Vector2};
use std::collections::HashSet;

pub type V2 = Vector2<f64>;
pub type M2 = Matrix2<f64>;

#[inline]
pub fn v2(x: f64, y: f64) -> V2 {
    V2::new(x, y)
}

/// Left-hand normal of a direction (rotation by +90 degrees).
#[inline]
pub fn perp(d: V2) -> V2 {
    v2(-d.y, d.x)
}

/// Closed axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: V2,
    pub max: V2,
}

impl Aabb {
    pub fn new(min: V2, max: V2) -> Self {
        Aabb { min, max }
    }

    pub fn around(c: V2, r: f64) -> Self {
        Aabb::new(c - v2(r, r), c + v2(r, r))
    }

    pub fn empty() -> Self {
        Aabb::new(v2(f64::INFINITY, f64::INFINITY), v2(f64::NEG_INFINITY, f64::NEG_INFINITY))
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a V2>) -> Self {
        let mut b = Aabb::empty();
        for p in pts {
            b.add(*p);
        }
        b
    }

    pub fn add(&mut self, p: V2) {
        self.min = self.min.inf(&p);
        self.max = self.max.sup(&p);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb::new(self.min.inf(&o.min), self.max.sup(&o.max))
    }

    pub fn intersection(&self, o: &Aabb) -> Aabb {
        Aabb::new(self.min.sup(&o.min), self.max.inf(&o.max))
    }

    pub fn dilate(&self, t: f64) -> Aabb {
        Aabb::new(self.min - v2(t, t), self.max + v2(t, t))
    }

    pub fn contains(&self, p: V2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Strict interior test.
    pub fn contains_open(&self, p: V2) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }

    pub fn intersects(&self, o: &Aabb) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }

    pub fn contains_box(&self, o: &Aabb) -> bool {
        self.contains(o.min) && self.contains(o.max)
    }

    pub fn width(&self) -> f64 {
        (self.max.x - self.min.x).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.max.y - self.min.y).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> V2 {
        (self.min + self.max) * 0.5
    }

    pub fn corners(&self) -> [V2; 4] {
        [self.min, v2(self.max.x, self.min.y), self.max, v2(self.min.x, self.max.y)]
    }

    pub fn edges(&self) -> [Segment; 4] {
        let c = self.corners();
        [
            Segment::new(c[0], c[1]),
            Segment::new(c[1], c[2]),
            Segment::new(c[2], c[3]),
            Segment::new(c[3], c[0]),
        ]
    }

    /// Euclidean distance from a point to the box (0 inside).
    pub fn distance(&self, p: V2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }
}

/// Rectangle with center, half widths and a rotation angle.
///
/// Local coordinates `(s, n)` are measured along the rotated axes
/// `t = (cos a, sin a)` and `nu = (-sin a, cos a)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub center: V2,
    pub half_widths: V2,
    pub angle: f64,
}

impl Rect {
    pub fn axis_aligned(min: V2, max: V2) -> Self {
        Rect { center: (min + max) * 0.5, half_widths: (max - min) * 0.5, angle: 0.0 }
    }

    pub fn unit_square() -> Self {
        Rect::axis_aligned(v2(0.0, 0.0), v2(1.0, 1.0))
    }

    /// Square of half side `rho` whose second local axis is `normal`.
    pub fn oriented_square(center: V2, rho: f64, normal: V2) -> Self {
        let t = -perp(normal);
        Rect { center, half_widths: v2(rho, rho), angle: t.y.atan2(t.x) }
    }

    pub fn is_valid(&self) -> bool {
        self.half_widths.x > 0.0 && self.half_widths.y > 0.0
    }

    pub fn tangent(&self) -> V2 {
        v2(self.angle.cos(), self.angle.sin())
    }

    pub fn normal(&self) -> V2 {
        perp(self.tangent())
    }

    /// Rotation whose columns are the local axes.
    pub fn rotation(&self) -> M2 {
        let t = self.tangent();
        let n = self.normal();
        M2::new(t.x, n.x, t.y, n.y)
    }

    pub fn to_local(&self, x: V2) -> V2 {
        let d = x - self.center;
        v2(d.dot(&self.tangent()), d.dot(&self.normal()))
    }

    pub fn to_world(&self, l: V2) -> V2 {
        self.center + self.tangent() * l.x + self.normal() * l.y
    }

    pub fn contains(&self, x: V2) -> bool {
        let l = self.to_local(x);
        l.x.abs() < self.half_widths.x && l.y.abs() < self.half_widths.y
    }

    pub fn contains_closed(&self, x: V2, tol: f64) -> bool {
        let l = self.to_local(x);
        l.x.abs() <= self.half_widths.x + tol && l.y.abs() <= self.half_widths.y + tol
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_widths.x * self.half_widths.y
    }

    pub fn dilate(&self, t: f64) -> Rect {
        Rect { half_widths: self.half_widths + v2(t, t), ..*self }
    }

    pub fn corners(&self) -> [V2; 4] {
        let h = self.half_widths;
        [
            self.to_world(v2(-h.x, -h.y)),
            self.to_world(v2(h.x, -h.y)),
            self.to_world(v2(h.x, h.y)),
            self.to_world(v2(-h.x, h.y)),
        ]
    }

    pub fn edges(&self) -> [Segment; 4] {
        let c = self.corners();
        [
            Segment::new(c[0], c[1]),
            Segment::new(c[1], c[2]),
            Segment::new(c[2], c[3]),
            Segment::new(c[3], c[0]),
        ]
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.corners().iter())
    }

    pub fn as_aabb(&self) -> Option<Aabb> {
        if self.angle == 0.0 {
            Some(Aabb::new(self.center - self.half_widths, self.center + self.half_widths))
        } else {
            None
        }
    }

    /// Separating-axis test on closed rectangles.
    pub fn intersects(&self, o: &Rect) -> bool {
        let axes = [self.tangent(), self.normal(), o.tangent(), o.normal()];
        let (a, b) = (self.corners(), o.corners());
        for ax in axes {
            let (mut amin, mut amax) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut bmin, mut bmax) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in &a {
                let d = p.dot(&ax);
                amin = amin.min(d);
                amax = amax.max(d);
            }
            for p in &b {
                let d = p.dot(&ax);
                bmin = bmin.min(d);
                bmax = bmax.max(d);
            }
            if amax < bmin || bmax < amin {
                return false;
            }
        }
        true
    }

    /// Clip a segment to the closed rectangle; returns the parameter range.
    pub fn clip_segment(&self, s: &Segment) -> Option<(f64, f64)> {
        let a = self.to_local(s.a);
        let b = self.to_local(s.b);
        let bx = Aabb::new(-self.half_widths, self.half_widths);
        clip_param(a, b, &bx)
    }
}

/// Liang-Barsky clipping of `a + t (b - a)`, `t in [0,1]`, to a closed box.
pub fn clip_param(a: V2, b: V2, bx: &Aabb) -> Option<(f64, f64)> {
    let d = b - a;
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    let checks = [
        (-d.x, a.x - bx.min.x),
        (d.x, bx.max.x - a.x),
        (-d.y, a.y - bx.min.y),
        (d.y, bx.max.y - a.y),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 <= t1 {
        Some((t0, t1))
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: V2,
    pub b: V2,
}

impl Segment {
    pub fn new(a: V2, b: V2) -> Self {
        Segment { a, b }
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn at(&self, t: f64) -> V2 {
        self.a + (self.b - self.a) * t
    }

    pub fn midpoint(&self) -> V2 {
        (self.a + self.b) * 0.5
    }

    pub fn direction(&self) -> V2 {
        (self.b - self.a).normalize()
    }

    pub fn left_normal(&self) -> V2 {
        perp(self.direction())
    }

    pub fn sub(&self, t0: f64, t1: f64) -> Segment {
        Segment::new(self.at(t0), self.at(t1))
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::new(self.a.inf(&self.b), self.a.sup(&self.b))
    }

    pub fn project_param(&self, p: V2) -> f64 {
        let d = self.b - self.a;
        let l2 = d.norm_squared();
        if l2 == 0.0 {
            0.0
        } else {
            ((p - self.a).dot(&d) / l2).clamp(0.0, 1.0)
        }
    }

    pub fn distance(&self, p: V2) -> f64 {
        (self.at(self.project_param(p)) - p).norm()
    }

    pub fn clip_aabb(&self, bx: &Aabb) -> Option<Segment> {
        clip_param(self.a, self.b, bx).and_then(|(t0, t1)| {
            if t1 > t0 {
                Some(self.sub(t0, t1))
            } else {
                None
            }
        })
    }

    /// Length of the part inside the open box (boundary has measure zero).
    pub fn length_in(&self, bx: &Aabb) -> f64 {
        match clip_param(self.a, self.b, bx) {
            Some((t0, t1)) => (t1 - t0) * self.length(),
            None => 0.0,
        }
    }

    /// Parameter where the segment crosses another one, if they properly intersect.
    pub fn intersect_param(&self, o: &Segment) -> Option<(f64, f64)> {
        let r = self.b - self.a;
        let s = o.b - o.a;
        let den = r.x * s.y - r.y * s.x;
        if den.abs() < 1e-300 {
            return None;
        }
        let q = o.a - self.a;
        let t = (q.x * s.y - q.y * s.x) / den;
        let u = (q.x * r.y - q.y * r.x) / den;
        if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
            Some((t, u))
        } else {
            None
        }
    }

    /// Distance between the segment and a closed box.
    pub fn distance_to_box(&self, bx: &Aabb) -> f64 {
        if clip_param(self.a, self.b, bx).is_some() {
            return 0.0;
        }
        let mut d = bx.distance(self.a).min(bx.distance(self.b));
        for c in bx.corners() {
            d = d.min(self.distance(c));
        }
        d
    }
}

/// Ordered vertex chain with one unit normal per segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    pub vertices: Vec<V2>,
    pub normals: Vec<V2>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GeometryError {
    #[error("polyline needs at least two vertices")]
    TooShort,
    #[error("consecutive vertices {0} and {1} coincide")]
    RepeatedVertex(usize, usize),
    #[error("normal {0} is not a unit vector")]
    BadNormal(usize),
    #[error("normal count {got} does not match segment count {want}")]
    NormalCount { got: usize, want: usize },
}

impl Polyline {
    pub fn new(vertices: Vec<V2>, normals: Vec<V2>) -> Result<Self, GeometryError> {
        if vertices.len() < 2 {
            return Err(GeometryError::TooShort);
        }
        if normals.len() != vertices.len() - 1 {
            return Err(GeometryError::NormalCount { got: normals.len(), want: vertices.len() - 1 });
        }
        for i in 0..vertices.len() - 1 {
            if vertices[i] == vertices[i + 1] {
                return Err(GeometryError::RepeatedVertex(i, i + 1));
            }
        }
        for (i, n) in normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > 1e-12 {
                return Err(GeometryError::BadNormal(i));
            }
        }
        Ok(Polyline { vertices, normals })
    }

    /// Polyline whose normals are the left normals of its segments.
    pub fn from_vertices(vertices: Vec<V2>) -> Result<Self, GeometryError> {
        if vertices.len() < 2 {
            return Err(GeometryError::TooShort);
        }
        let normals = vertices
            .windows(2)
            .map(|w| if w[0] == w[1] { v2(0.0, 1.0) } else { perp((w[1] - w[0]).normalize()) })
            .collect();
        Polyline::new(vertices, normals)
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.vertices.windows(2).map(|w| Segment::new(w[0], w[1]))
    }

    /// Concatenate, dropping the joining vertex if shared.
    pub fn concat(&self, other: &Polyline) -> Result<Polyline, GeometryError> {
        let mut v = self.vertices.clone();
        let mut n = self.normals.clone();
        let skip = usize::from(v.last() == other.vertices.first());
        if skip == 0 {
            let a = *v.last().unwrap();
            let b = other.vertices[0];
            if a == b {
                return Err(GeometryError::RepeatedVertex(v.len() - 1, v.len()));
            }
            n.push(perp((b - a).normalize()));
        }
        v.extend_from_slice(&other.vertices[skip..]);
        n.extend_from_slice(&other.normals);
        Polyline::new(v, n)
    }
}

pub fn h1_length(p: &Polyline) -> f64 {
    p.segments().map(|s| s.length()).sum()
}

pub fn total_length(segs: &[Segment]) -> f64 {
    segs.iter().map(|s| s.length()).sum()
}

/// Uniform bucket grid over segments for neighbourhood queries.
#[derive(Clone, Debug)]
pub struct SegIndex {
    origin: V2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
    overflow: Vec<u32>,
}

impl SegIndex {
    pub fn new(segs: &[Segment], bounds: &Aabb, cell: f64) -> Self {
        let cell = cell.max(1e-9);
        let nx = ((bounds.width() / cell).ceil() as usize).clamp(1, 4096);
        let ny = ((bounds.height() / cell).ceil() as usize).clamp(1, 4096);
        let mut idx = SegIndex { origin: bounds.min, cell, nx, ny, buckets: vec![Vec::new(); nx * ny], overflow: Vec::new() };
        for (i, s) in segs.iter().enumerate() {
            idx.insert(i as u32, s, bounds);
        }
        idx
    }

    fn insert(&mut self, id: u32, s: &Segment, bounds: &Aabb) {
        if !bounds.contains_box(&s.aabb()) {
            self.overflow.push(id);
        }
        let Some(c) = s.clip_aabb(bounds).or_else(|| {
            if bounds.contains(s.a) {
                Some(*s)
            } else {
                None
            }
        }) else {
            return;
        };
        let (i0, j0) = self.cell_of(c.aabb().min);
        let (i1, j1) = self.cell_of(c.aabb().max);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let b = self.cell_box(i, j);
                if c.distance_to_box(&b) <= 1e-12 {
                    self.buckets[j * self.nx + i].push(id);
                }
            }
        }
    }

    fn cell_of(&self, p: V2) -> (usize, usize) {
        let i = ((p.x - self.origin.x) / self.cell).floor();
        let j = ((p.y - self.origin.y) / self.cell).floor();
        (i.clamp(0.0, (self.nx - 1) as f64) as usize, j.clamp(0.0, (self.ny - 1) as f64) as usize)
    }

    fn cell_box(&self, i: usize, j: usize) -> Aabb {
        let min = self.origin + v2(i as f64 * self.cell, j as f64 * self.cell);
        Aabb::new(min, min + v2(self.cell, self.cell))
    }

    /// Candidate ids whose segments may meet the box (sorted, unique).
    pub fn query(&self, bx: &Aabb) -> Vec<u32> {
        let mut out: Vec<u32> = self.overflow.clone();
        let (i0, j0) = self.cell_of(bx.min);
        let (i1, j1) = self.cell_of(bx.max);
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.extend_from_slice(&self.buckets[j * self.nx + i]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Length of the part of `a` not within `match_tol` of `b`, plus the converse.
///
/// Each segment is sampled at `samples` arc-length midpoints.
pub fn symm_diff_measure_with(a: &[Segment], b: &[Segment], match_tol: f64, samples: usize) -> f64 {
    unmatched_length(a, b, match_tol, samples) + unmatched_length(b, a, match_tol, samples)
}

pub fn symm_diff_measure(a: &[Segment], b: &[Segment], match_tol: f64) -> f64 {
    symm_diff_measure_with(a, b, match_tol, 64)
}

/// Length of the part of `a` farther than `tol` from every segment of `b`.
pub fn unmatched_length(a: &[Segment], b: &[Segment], tol: f64, samples: usize) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if b.is_empty() {
        return total_length(a);
    }
    let mut bounds = Aabb::empty();
    for s in b {
        bounds = bounds.union(&s.aabb());
    }
    let cell = (bounds.width().max(bounds.height()) / 128.0).max(tol * 4.0);
    let idx = SegIndex::new(b, &bounds.dilate(tol), cell);
    let mut total = 0.0;
    for s in a {
        let len = s.length();
        if len == 0.0 {
            continue;
        }
        let mut miss = 0usize;
        for i in 0..samples {
            let p = s.at((i as f64 + 0.5) / samples as f64);
            let near = idx.query(&Aabb::around(p, tol));
            if !near.iter().any(|&j| b[j as usize].distance(p) <= tol) {
                miss += 1;
            }
        }
        total += len * miss as f64 / samples as f64;
    }
    total
}

/// The lattice of nodes `(2/k)(i + 1/2, j + 1/2)`; cell `q_z` is the
/// square of half side `1/k` around a node, so cells tile the plane
/// with edges on `(2/k) Z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub k: u32,
}

pub type NodeId = (i64, i64);

impl Lattice {
    pub fn new(k: u32) -> Self {
        assert!(k >= 1, "lattice scale must be positive");
        Lattice { k }
    }

    pub fn inv_k(&self) -> f64 {
        1.0 / self.k as f64
    }

    pub fn spacing(&self) -> f64 {
        2.0 / self.k as f64
    }

    pub fn node(&self, id: NodeId) -> V2 {
        let s = self.spacing();
        v2((id.0 as f64 + 0.5) * s, (id.1 as f64 + 0.5) * s)
    }

    /// Node of the cell containing `x` (cells half-open on the upper side).
    pub fn cell_of(&self, x: V2) -> NodeId {
        let s = self.spacing();
        ((x.x / s).floor() as i64, (x.y / s).floor() as i64)
    }

    /// Cube of half side `m / k` around a node (m = 1, 2, 4, 8 for q, q~, Q, Q~).
    pub fn cube(&self, id: NodeId, m: f64) -> Aabb {
        Aabb::around(self.node(id), m * self.inv_k())
    }

    pub fn q(&self, id: NodeId) -> Aabb {
        self.cube(id, 1.0)
    }

    pub fn q_tilde(&self, id: NodeId) -> Aabb {
        self.cube(id, 2.0)
    }

    pub fn big_q(&self, id: NodeId) -> Aabb {
        self.cube(id, 4.0)
    }

    pub fn big_q_tilde(&self, id: NodeId) -> Aabb {
        self.cube(id, 8.0)
    }

    /// Ids whose node lies in the closed box.
    pub fn nodes_in(&self, bx: &Aabb) -> Vec<NodeId> {
        if bx.is_empty() {
            return Vec::new();
        }
        let s = self.spacing();
        let i0 = (bx.min.x / s - 0.5).ceil() as i64;
        let i1 = (bx.max.x / s - 0.5).floor() as i64;
        let j0 = (bx.min.y / s - 0.5).ceil() as i64;
        let j1 = (bx.max.y / s - 0.5).floor() as i64;
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.push((i, j));
            }
        }
        out
    }

    /// Ids whose cell meets the open box.
    pub fn cells_meeting(&self, bx: &Aabb) -> Vec<NodeId> {
        if bx.is_empty() {
            return Vec::new();
        }
        let s = self.spacing();
        let i0 = (bx.min.x / s).floor() as i64;
        let i1 = (bx.max.x / s).ceil() as i64 - 1;
        let j0 = (bx.min.y / s).floor() as i64;
        let j1 = (bx.max.y / s).ceil() as i64 - 1;
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.push((i, j));
            }
        }
        out
    }
}

/// Nodes of the k-lattice inside an axis-aligned domain, in `(z2, z1)` order.
#[derive(Clone, Debug)]
pub struct NodeSet {
    pub lattice: Lattice,
    pub nodes: Vec<NodeId>,
}

impl NodeSet {
    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.binary_search_by(|n| (n.1, n.0).cmp(&(id.1, id.0))).is_ok()
    }

    pub fn as_set(&self) -> HashSet<NodeId> {
        self.nodes.iter().copied().collect()
    }
}

pub fn cube_lattice(domain: &Rect, k: u32) -> NodeSet {
    let lattice = Lattice::new(k);
    let Some(bx) = domain.as_aabb() else {
        panic!("cube_lattice needs an axis-aligned domain");
    };
    if !domain.is_valid() {
        return NodeSet { lattice, nodes: Vec::new() };
    }
    let mut nodes: Vec<NodeId> =
        lattice.nodes_in(&bx).into_iter().filter(|&id| bx.contains_open(lattice.node(id))).collect();
    nodes.sort_by_key(|n| (n.1, n.0));
    NodeSet { lattice, nodes }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            let dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, z);
        for j in 2..=n {
            let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
        x[i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Sixteen-point Gauss rule mapped to `[0, 1]`.
pub fn gauss16_unit() -> &'static [(f64, f64)] {
    use std::sync::OnceLock;
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = gauss_legendre(16);
        x.iter().zip(&w).map(|(x, w)| ((x + 1.0) * 0.5, w * 0.5)).collect()
    })
}
