//! Piecewise-polynomial SBD fields, the `Field` evaluator trait shared by
//! every construction, and the measures of `Eu`.

use crate::expr::{self, Expr, ExprError, PolyVec};
use crate::geometry::{gauss16_unit, perp, v2, Aabb, Polyline, Rect, SegIndex, Segment, M2, V2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("expression error: {0}")]
    Expr(#[from] ExprError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("domain must have positive size")]
    BadDomain,
    #[error("grid spacing h must be positive and finite")]
    BadSpacing,
    #[error("jump segment {0} is degenerate or its normal is not a unit normal")]
    BadSegment(usize),
    #[error("jump segment {0} leaves the closed domain")]
    SegmentOutsideDomain(usize),
    #[error("jump segments meet in a junction at ({0}, {1})")]
    Junction(f64, f64),
    #[error("jump chain ends at ({0}, {1}) inside the domain")]
    NotSpanning(f64, f64),
    #[error("jump set splits the domain into {found} components but {declared} were declared")]
    ComponentCount { found: usize, declared: usize },
    #[error("jump amplitude on segment {seg} disagrees with the component limits: expr {expr:?} vs limits {limits:?}")]
    AmplitudeMismatch { seg: usize, expr: [f64; 2], limits: [f64; 2] },
    #[error("point ({0}, {1}) lies on the jump set")]
    PointOnJump(f64, f64),
    #[error("fields live on different domains")]
    DomainMismatch,
    #[error("region is not contained in the domain")]
    RegionOutsideDomain,
}

/// Oriented piece of a jump set; `[u] = u(+normal side) - u(-normal side)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpPiece {
    pub seg: Segment,
    pub normal: V2,
}

impl JumpPiece {
    pub fn new(seg: Segment, normal: V2) -> Self {
        JumpPiece { seg, normal }
    }

    pub fn left(seg: Segment) -> Self {
        JumpPiece { seg, normal: seg.left_normal() }
    }
}

/// A displacement evaluator defined on the whole plane with an explicit
/// set of lines where it may fail to be smooth.
pub trait Field: Send + Sync {
    fn value(&self, x: V2) -> V2;

    /// Jacobian (row c is the gradient of component c) away from breaks.
    fn gradient(&self, x: V2) -> M2;

    /// Segments meeting `region` across which the field may jump.
    fn jumps(&self, region: &Aabb, out: &mut Vec<JumpPiece>);

    /// Segments where the field is continuous but its gradient may not be.
    fn kinks(&self, _region: &Aabb, _out: &mut Vec<Segment>) {}

    /// Polynomial equal to the field on the closed disk `B(center, r)`, if any.
    fn local_poly(&self, _center: V2, _r: f64) -> Option<PolyVec> {
        None
    }

    /// Two polynomials split by one line, equal to the field on the disk.
    fn local_split(&self, _center: V2, _r: f64) -> Option<LocalSplit> {
        None
    }

    /// One-sided limits at `x` from the sides `+dir` and `-dir`.
    fn one_sided(&self, x: V2, dir: V2) -> (V2, V2) {
        let d = dir.normalize() * 1e-9 * (1.0 + x.amax());
        (self.value(x + d), self.value(x - d))
    }

    fn breaks(&self, region: &Aabb, out: &mut Vec<Segment>) {
        let mut j = Vec::new();
        self.jumps(region, &mut j);
        out.extend(j.iter().map(|p| p.seg));
        self.kinks(region, out);
    }
}

impl<T: Field + ?Sized> Field for &T {
    fn value(&self, x: V2) -> V2 {
        (**self).value(x)
    }
    fn gradient(&self, x: V2) -> M2 {
        (**self).gradient(x)
    }
    fn jumps(&self, region: &Aabb, out: &mut Vec<JumpPiece>) {
        (**self).jumps(region, out)
    }
    fn kinks(&self, region: &Aabb, out: &mut Vec<Segment>) {
        (**self).kinks(region, out)
    }
    fn local_poly(&self, c: V2, r: f64) -> Option<PolyVec> {
        (**self).local_poly(c, r)
    }
    fn local_split(&self, c: V2, r: f64) -> Option<LocalSplit> {
        (**self).local_split(c, r)
    }
    fn one_sided(&self, x: V2, dir: V2) -> (V2, V2) {
        (**self).one_sided(x, dir)
    }
}

impl<T: Field + ?Sized> Field for Box<T> {
    fn value(&self, x: V2) -> V2 {
        (**self).value(x)
    }
    fn gradient(&self, x: V2) -> M2 {
        (**self).gradient(x)
    }
    fn jumps(&self, region: &Aabb, out: &mut Vec<JumpPiece>) {
        (**self).jumps(region, out)
    }
    fn kinks(&self, region: &Aabb, out: &mut Vec<Segment>) {
        (**self).kinks(region, out)
    }
    fn local_poly(&self, c: V2, r: f64) -> Option<PolyVec> {
        (**self).local_poly(c, r)
    }
    fn local_split(&self, c: V2, r: f64) -> Option<LocalSplit> {
        (**self).local_split(c, r)
    }
    fn one_sided(&self, x: V2, dir: V2) -> (V2, V2) {
        (**self).one_sided(x, dir)
    }
}

impl<T: Field + ?Sized> Field for std::sync::Arc<T> {
    fn value(&self, x: V2) -> V2 {
        (**self).value(x)
    }
    fn gradient(&self, x: V2) -> M2 {
        (**self).gradient(x)
    }
    fn jumps(&self, region: &Aabb, out: &mut Vec<JumpPiece>) {
        (**self).jumps(region, out)
    }
    fn kinks(&self, region: &Aabb, out: &mut Vec<Segment>) {
        (**self).kinks(region, out)
    }
    fn local_poly(&self, c: V2, r: f64) -> Option<PolyVec> {
        (**self).local_poly(c, r)
    }
    fn local_split(&self, c: V2, r: f64) -> Option<LocalSplit> {
        (**self).local_split(c, r)
    }
    fn one_sided(&self, x: V2, dir: V2) -> (V2, V2) {
        (**self).one_sided(x, dir)
    }
}

/// `below` where `(y - origin) . normal <= 0`, `above` elsewhere.
#[derive(Clone, Copy, Debug)]
pub struct LocalSplit {
    pub origin: V2,
    pub normal: V2,
    pub below: PolyVec,
    pub above: PolyVec,
}

impl LocalSplit {
    pub fn side(&self, y: V2) -> &PolyVec {
        if (y - self.origin).dot(&self.normal) <= 0.0 {
            &self.below
        } else {
            &self.above
        }
    }

    pub fn eval(&self, y: V2) -> V2 {
        self.side(y).eval(y)
    }

    pub fn jacobian(&self, y: V2) -> M2 {
        self.side(y).jacobian(y)
    }
}

pub fn jump_at(f: &dyn Field, x: V2, normal: V2) -> V2 {
    let (p, m) = f.one_sided(x, normal);
    p - m
}

pub fn sym(m: &M2) -> M2 {
    (m + m.transpose()) * 0.5
}

pub fn frob(m: &M2) -> f64 {
    m.norm()
}

pub fn strain(f: &dyn Field, x: V2) -> M2 {
    sym(&f.gradient(x))
}

pub fn sym_tensor_product(a: V2, b: V2) -> M2 {
    sym(&(a * b.transpose()))
}

/// A single polynomial field without jumps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolyField(pub PolyVec);

impl Field for PolyField {
    fn value(&self, x: V2) -> V2 {
        self.0.eval(x)
    }
    fn gradient(&self, x: V2) -> M2 {
        self.0.jacobian(x)
    }
    fn jumps(&self, _: &Aabb, _: &mut Vec<JumpPiece>) {}
    fn local_poly(&self, _: V2, _: f64) -> Option<PolyVec> {
        Some(self.0)
    }
}

/// The zero displacement.
pub struct ZeroField;

impl Field for ZeroField {
    fn value(&self, _: V2) -> V2 {
        V2::zeros()
    }
    fn gradient(&self, _: V2) -> M2 {
        M2::zeros()
    }
    fn jumps(&self, _: &Aabb, _: &mut Vec<JumpPiece>) {}
    fn local_poly(&self, _: V2, _: f64) -> Option<PolyVec> {
        Some(PolyVec::zero())
    }
}

/// `a * f + b * g`, with the union of the break sets.
pub struct Combo<'a> {
    pub a: f64,
    pub f: &'a dyn Field,
    pub b: f64,
    pub g: &'a dyn Field,
}

impl Field for Combo<'_> {
    fn value(&self, x: V2) -> V2 {
        self.f.value(x) * self.a + self.g.value(x) * self.b
    }
    fn gradient(&self, x: V2) -> M2 {
        self.f.gradient(x) * self.a + self.g.gradient(x) * self.b
    }
    fn jumps(&self, region: &Aabb, out: &mut Vec<JumpPiece>) {
        self.f.jumps(region, out);
        self.g.jumps(region, out);
    }
    fn kinks(&self, region: &Aabb, out: &mut Vec<Segment>) {
        self.f.kinks(region, out);
        self.g.kinks(region, out);
    }
    fn local_poly(&self, c: V2, r: f64) -> Option<PolyVec> {
        let p = self.f.local_poly(c, r)?;
        let q = self.g.local_poly(c, r)?;
        Some(p.scale(self.a).add(&q.scale(self.b)))
    }
    fn one_sided(&self, x: V2, dir: V2) -> (V2, V2) {
        let (fp, fm) = self.f.one_sided(x, dir);
        let (gp, gm) = self.g.one_sided(x, dir);
        (fp * self.a + gp * self.b, fm * self.a + gm * self.b)
    }
}

// ---------------------------------------------------------------- spec file

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpSegSpec {
    pub p0: [f64; 2],
    pub p1: [f64; 2],
    pub normal: [f64; 2],
    pub amplitude_expr: String,
}

/// On-disk field description.
///
/// `components[i]` is the polynomial displacement `"(u1, u2)"` on the i-th
/// connected component of the domain minus the jump chains, components being
/// numbered by first appearance in a bottom-to-top, left-to-right raster scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub domain: DomainSpec,
    pub components: Vec<String>,
    #[serde(default)]
    pub jump_segments: Vec<JumpSegSpec>,
    pub h: f64,
}

impl FieldSpec {
    pub fn from_json(s: &str) -> Result<Self, FieldError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("field spec serializes")
    }

    pub fn build(&self) -> Result<SbdField, FieldError> {
        SbdField::from_spec(self)
    }
}

// ---------------------------------------------------------------- SbdField

#[derive(Clone, Debug)]
pub struct JumpSeg {
    pub seg: Segment,
    pub normal: V2,
    pub amplitude: Expr,
    pub amplitude_mid: V2,
}

impl JumpSeg {
    pub fn amplitude_at(&self, t: f64) -> V2 {
        let p = self.seg.at(t);
        let e = &self.amplitude;
        match e {
            Expr::Tuple(a, b) => v2(a.eval(p.x, p.y, t), b.eval(p.x, p.y, t)),
            _ => v2(f64::NAN, f64::NAN),
        }
    }
}

/// The declared jump set: oriented segments with amplitude expressions,
/// grouped into chains.
#[derive(Clone, Debug, Default)]
pub struct JumpSet {
    pub segments: Vec<JumpSeg>,
    pub chains: Vec<Polyline>,
}

impl JumpSet {
    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.seg.length()).sum()
    }
}

#[derive(Clone, Debug)]
struct Closure {
    poly: Vec<V2>,
    bbox: Aabb,
}

impl Closure {
    fn inside(&self, p: V2) -> bool {
        if !self.bbox.contains(p) {
            return false;
        }
        let v = &self.poly;
        let n = v.len();
        let mut c = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                c = !c;
            }
            j = i;
        }
        c
    }
}

/// A piecewise-polynomial displacement on an axis-aligned rectangle,
/// continued analytically outside it. Open jump chains are continued past
/// the boundary by rays along their end tangents (normal to the boundary
/// when the tangent is too shallow or the rays would cross).
#[derive(Clone, Debug)]
pub struct SbdField {
    pub domain: Rect,
    pub h: f64,
    pub components: Vec<PolyVec>,
    pub jump_set: JumpSet,
    closures: Vec<Closure>,
    labels: HashMap<u64, usize>,
    /// Pieces of declared segments and rays with nonzero amplitude.
    active: Vec<JumpPiece>,
    index: SegIndex,
    index_box: Aabb,
    /// Signature bits whose polynomials agree: used only when no jumps exist.
    single: bool,
}

const SIDE_TOL: f64 = 1e-12;

fn on_boundary(bx: &Aabb, p: V2) -> bool {
    bx.dilate(SIDE_TOL).contains(p)
        && ((p.x - bx.min.x).abs() <= SIDE_TOL
            || (p.x - bx.max.x).abs() <= SIDE_TOL
            || (p.y - bx.min.y).abs() <= SIDE_TOL
            || (p.y - bx.max.y).abs() <= SIDE_TOL)
}

/// Directions of the rays continuing each open chain: the end tangents when
/// they leave the box at least 60 degrees off the boundary and no two rays
/// or ray and chain cross, else the boundary normals.
fn continuation_dirs(bx: &Aabb, chains: &[(Vec<V2>, bool)], reach: f64) -> Vec<(V2, V2)> {
    let normals: Vec<(V2, V2)> = chains
        .iter()
        .map(|(v, closed)| if *closed { (V2::zeros(), V2::zeros()) } else { (outward_dir(bx, v[0]), outward_dir(bx, *v.last().unwrap())) })
        .collect();
    let tangent = |p: V2, q: V2, n: V2| {
        let t = (p - q).normalize();
        if t.dot(&n) >= 0.5 { t } else { n }
    };
    let dirs: Vec<(V2, V2)> = chains
        .iter()
        .zip(&normals)
        .map(|((v, closed), &(ns, ne))| {
            if *closed {
                return (ns, ne);
            }
            let l = v.len();
            (tangent(v[0], v[1], ns), tangent(v[l - 1], v[l - 2], ne))
        })
        .collect();
    let mut rays = Vec::new();
    for ((v, closed), (ds, de)) in chains.iter().zip(&dirs) {
        if !*closed {
            rays.push(Segment::new(v[0], v[0] + ds * reach));
            rays.push(Segment::new(*v.last().unwrap(), *v.last().unwrap() + de * reach));
        }
    }
    let off = |p: V2, r: &Segment| (p - r.a).norm() > 1e-12;
    let clash = rays.iter().enumerate().any(|(i, r)| {
        rays[i + 1..].iter().any(|o| r.intersect_param(o).is_some_and(|(t, _)| off(r.at(t), r)))
            || chains.iter().any(|(v, _)| v.windows(2).any(|w| r.intersect_param(&Segment::new(w[0], w[1])).is_some_and(|(t, _)| off(r.at(t), r))))
    });
    if clash { normals } else { dirs }
}

fn outward_dir(bx: &Aabb, p: V2) -> V2 {
    let mut d = V2::zeros();
    if (p.x - bx.min.x).abs() <= SIDE_TOL {
        d.x -= 1.0;
    }
    if (p.x - bx.max.x).abs() <= SIDE_TOL {
        d.x += 1.0;
    }
    if (p.y - bx.min.y).abs() <= SIDE_TOL {
        d.y -= 1.0;
    }
    if (p.y - bx.max.y).abs() <= SIDE_TOL {
        d.y += 1.0;
    }
    d.normalize()
}

impl SbdField {
    pub fn from_spec(spec: &FieldSpec) -> Result<Self, FieldError> {
        let min = v2(spec.domain.min[0], spec.domain.min[1]);
        let max = v2(spec.domain.max[0], spec.domain.max[1]);
        if !(max.x > min.x && max.y > min.y) || !min.iter().chain(max.iter()).all(|v| v.is_finite()) {
            return Err(FieldError::BadDomain);
        }
        if !(spec.h > 0.0 && spec.h.is_finite()) {
            return Err(FieldError::BadSpacing);
        }
        let components =
            spec.components.iter().map(|s| PolyVec::parse(s)).collect::<Result<Vec<_>, _>>()?;
        let mut segs = Vec::new();
        for (i, js) in spec.jump_segments.iter().enumerate() {
            let seg = Segment::new(v2(js.p0[0], js.p0[1]), v2(js.p1[0], js.p1[1]));
            let n = v2(js.normal[0], js.normal[1]);
            if seg.length() == 0.0 || (n.norm() - 1.0).abs() > 1e-12 || n.dot(&seg.direction()).abs() > 1e-9 {
                return Err(FieldError::BadSegment(i));
            }
            let amp = expr::parse(&js.amplitude_expr)?;
            if !matches!(amp, Expr::Tuple(..)) {
                return Err(FieldError::Expr(ExprError::NotVector));
            }
            segs.push(JumpSeg { seg, normal: n, amplitude: amp, amplitude_mid: V2::zeros() });
        }
        for s in segs.iter_mut() {
            s.amplitude_mid = s.amplitude_at(0.5);
        }
        SbdField::new(Rect::axis_aligned(min, max), spec.h, components, segs)
    }

    pub fn from_json(s: &str) -> Result<Self, FieldError> {
        FieldSpec::from_json(s)?.build()
    }

    /// A field without jumps.
    pub fn smooth(domain: Rect, h: f64, u: PolyVec) -> Self {
        SbdField::new(domain, h, vec![u], Vec::new()).expect("smooth field is valid")
    }

    pub fn new(domain: Rect, h: f64, components: Vec<PolyVec>, segs: Vec<JumpSeg>) -> Result<Self, FieldError> {
        let bx = domain.as_aabb().ok_or(FieldError::BadDomain)?;
        if !domain.is_valid() {
            return Err(FieldError::BadDomain);
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(FieldError::BadSpacing);
        }
        for (i, s) in segs.iter().enumerate() {
            if !bx.dilate(SIDE_TOL).contains(s.seg.a) || !bx.dilate(SIDE_TOL).contains(s.seg.b) {
                return Err(FieldError::SegmentOutsideDomain(i));
            }
        }
        let chains_idx = assemble_chains(&segs)?;
        let center = bx.center();
        let big_r = 100.0 * (bx.width() + bx.height());
        let ray_dirs = continuation_dirs(&bx, &chains_idx, big_r);
        let mut closures = Vec::new();
        let mut chains = Vec::new();
        let mut rays: Vec<Segment> = Vec::new();
        for (ci, (verts, closed)) in chains_idx.iter().enumerate() {
            let poly = Polyline::from_vertices(verts.clone()).map_err(|_| FieldError::BadSegment(0))?;
            chains.push(poly);
            if *closed {
                let mut p = verts.clone();
                p.pop();
                closures.push(Closure { bbox: Aabb::from_points(p.iter()), poly: p });
                continue;
            }
            let (s, e) = (verts[0], *verts.last().unwrap());
            for p in [s, e] {
                if !on_boundary(&bx, p) {
                    return Err(FieldError::NotSpanning(p.x, p.y));
                }
            }
            let hit = |p: V2, d: V2| {
                let w = p - center;
                let b = w.dot(&d);
                let t = -b + (b * b - w.norm_squared() + big_r * big_r).sqrt();
                p + d * t
            };
            let (ps, pe) = (hit(s, ray_dirs[ci].0), hit(e, ray_dirs[ci].1));
            rays.push(Segment::new(s, ps));
            rays.push(Segment::new(e, pe));
            let mut p = verts.clone();
            p.push(pe);
            let a0 = (pe - center).y.atan2((pe - center).x);
            let mut a1 = (ps - center).y.atan2((ps - center).x);
            while a1 <= a0 {
                a1 += std::f64::consts::TAU;
            }
            let n = 96;
            for i in 1..n {
                let a = a0 + (a1 - a0) * i as f64 / n as f64;
                p.push(center + v2(a.cos(), a.sin()) * big_r);
            }
            p.push(ps);
            closures.push(Closure { bbox: Aabb::from_points(p.iter()), poly: p });
        }
        if closures.len() > 63 {
            return Err(FieldError::Junction(f64::NAN, f64::NAN));
        }
        let mut f = SbdField {
            domain,
            h,
            components,
            jump_set: JumpSet { segments: segs, chains },
            closures,
            labels: HashMap::new(),
            active: Vec::new(),
            index: SegIndex::new(&[], &bx, 1.0),
            index_box: bx,
            single: false,
        };
        let n = 257;
        let mut order = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let p = bx.min + v2(bx.width() * (i as f64 + 0.5) / n as f64, bx.height() * (j as f64 + 0.5) / n as f64);
                let s = f.signature(p);
                if !f.labels.contains_key(&s) {
                    f.labels.insert(s, order.len());
                    order.push(s);
                }
            }
        }
        if order.len() != f.components.len() {
            return Err(FieldError::ComponentCount { found: order.len(), declared: f.components.len() });
        }
        f.single = f.components.len() == 1;
        // activity of declared segments and rays
        let mut cand: Vec<JumpPiece> =
            f.jump_set.segments.iter().map(|s| JumpPiece::new(s.seg, s.normal)).collect();
        cand.extend(rays.iter().map(|r| JumpPiece::left(*r)));
        let scale = 1.0 + f.components.iter().map(|c| c.max_abs_coef()).fold(0.0, f64::max);
        let mut active = Vec::new();
        for piece in cand {
            let m = 64;
            let mut run: Option<f64> = None;
            for i in 0..=m {
                let on = i < m && {
                    let t = (i as f64 + 0.5) / m as f64;
                    f.jump_of(piece.seg.at(t), piece.normal).norm() > 1e-13 * scale
                };
                match (on, run) {
                    (true, None) => run = Some(i as f64 / m as f64),
                    (false, Some(t0)) => {
                        active.push(JumpPiece::new(piece.seg.sub(t0, i as f64 / m as f64), piece.normal));
                        run = None;
                    }
                    _ => {}
                }
            }
        }
        let ib = bx.dilate(0.5 * (bx.width() + bx.height()));
        let segs: Vec<Segment> = active.iter().map(|p| p.seg).collect();
        f.index = SegIndex::new(&segs, &ib, (ib.width().max(ib.height()) / 64.0).max(1e-6));
        f.index_box = ib;
        f.active = active;
        for (i, s) in f.jump_set.segments.iter().enumerate() {
            for &(t, _) in gauss16_unit() {
                let p = s.seg.at(t);
                let e = s.amplitude_at(t);
                let l = f.jump_of(p, s.normal);
                if !((e - l).norm() <= 1e-8 * (1.0 + l.norm())) {
                    return Err(FieldError::AmplitudeMismatch { seg: i, expr: [e.x, e.y], limits: [l.x, l.y] });
                }
            }
        }
        Ok(f)
    }

    fn signature(&self, p: V2) -> u64 {
        let mut s = 0u64;
        for (i, c) in self.closures.iter().enumerate() {
            if c.inside(p) {
                s |= 1 << i;
            }
        }
        s
    }

    pub fn component_at(&self, p: V2) -> Option<usize> {
        if self.single {
            return Some(0);
        }
        self.labels.get(&self.signature(p)).copied()
    }

    fn poly_at(&self, p: V2) -> Option<&PolyVec> {
        self.component_at(p).map(|i| &self.components[i])
    }

    fn jump_of(&self, x: V2, n: V2) -> V2 {
        let (a, b) = self.one_sided(x, n);
        a - b
    }

    pub fn bbox(&self) -> Aabb {
        self.domain.as_aabb().expect("axis-aligned domain")
    }

    /// Active jump pieces (nonzero amplitude) inside the closed domain.
    pub fn jump_pieces(&self) -> Vec<JumpPiece> {
        let bx = self.bbox();
        let mut out = Vec::new();
        self.jumps(&bx, &mut out);
        out.into_iter()
            .filter_map(|p| p.seg.clip_aabb(&bx).map(|s| JumpPiece::new(s, p.normal)))
            .collect()
    }

    pub fn jump_length(&self) -> f64 {
        self.jump_pieces().iter().map(|p| p.seg.length()).sum()
    }

    pub fn jump_length_in(&self, region: &Aabb) -> f64 {
        let mut v = Vec::new();
        self.jumps(region, &mut v);
        v.iter().map(|p| p.seg.length_in(region)).sum()
    }

    /// Distance to the nearest active jump piece (searched within `reach`).
    pub fn distance_to_jump(&self, x: V2, reach: f64) -> f64 {
        let mut v = Vec::new();
        self.jumps(&Aabb::around(x, reach), &mut v);
        v.iter().map(|p| p.seg.distance(x)).fold(f64::INFINITY, f64::min)
    }

    pub fn with_h(&self, h: f64) -> SbdField {
        SbdField { h, ..self.clone() }
    }

    /// The same field extended by zero outside the domain.
    pub fn zero_extended(&self) -> ZeroExtended<'_> {
        ZeroExtended::new(self)
    }
}

fn assemble_chains(segs: &[JumpSeg]) -> Result<Vec<(Vec<V2>, bool)>, FieldError> {
    let key = |p: V2| ((p.x * 1e10).round() as i64, (p.y * 1e10).round() as i64);
    let mut ends: HashMap<(i64, i64), Vec<(usize, bool)>> = HashMap::new();
    for (i, s) in segs.iter().enumerate() {
        ends.entry(key(s.seg.a)).or_default().push((i, false));
        ends.entry(key(s.seg.b)).or_default().push((i, true));
    }
    for (k, v) in &ends {
        if v.len() > 2 {
            return Err(FieldError::Junction(k.0 as f64 * 1e-10, k.1 as f64 * 1e-10));
        }
    }
    let mut used = vec![false; segs.len()];
    let mut out = Vec::new();
    let other_end = |i: usize, at_b: bool| if at_b { segs[i].seg.a } else { segs[i].seg.b };
    for start in 0..segs.len() {
        if used[start] {
            continue;
        }
        // walk backwards to a free end (or around a loop)
        let mut cur = start;
        let mut cur_tail = segs[start].seg.a;
        loop {
            let nb: Vec<_> = ends[&key(cur_tail)].iter().copied().filter(|&(j, _)| j != cur).collect();
            match nb.first() {
                Some(&(j, at_b)) if j != start => {
                    cur_tail = other_end(j, at_b);
                    cur = j;
                }
                _ => break,
            }
        }
        let mut verts = vec![cur_tail];
        let mut seg = cur;
        let mut from = cur_tail;
        let mut closed = false;
        loop {
            used[seg] = true;
            let s = segs[seg].seg;
            let to = if key(s.a) == key(from) { s.b } else { s.a };
            verts.push(to);
            let nb: Vec<_> = ends[&key(to)].iter().copied().filter(|&(j, _)| j != seg).collect();
            match nb.first() {
                Some(&(j, _)) if !used[j] => {
                    seg = j;
                    from = to;
                }
                Some(_) => {
                    closed = true;
                    break;
                }
                None => break,
            }
        }
        out.push((verts, closed));
    }
    Ok(out)
}

impl Field for SbdField {
    fn value(&self, x: V2) -> V2 {
        match self.poly_at(x) {
            Some(p) => p.eval(x),
            None => v2(f64::NAN, f64::NAN),
        }
    }

    fn gradient(&self, x: V2) -> M2 {
        match self.poly_at(x) {
            Some(p) => p.jacobian(x),
            None => M2::from_element(f64::NAN),
        }
    }

    fn jumps(&self, region: &Aabb, out: &mut Vec<JumpPiece>) {
        if self.active.is_empty() {
            return;
        }
        for i in self.index.query(region) {
            let p = self.active[i as usize];
            if p.seg.distance_to_box(region) <= 0.0 {
                out.push(p);
            }
        }
    }

    fn local_poly(&self, c: V2, r: f64) -> Option<PolyVec> {
        if self.single {
            return Some(self.components[0]);
        }
        let bx = Aabb::around(c, r);
        for i in self.index.query(&bx) {
            if self.active[i as usize].seg.distance(c) <= r {
                return None;
            }
        }
        if !self.index_box.contains_box(&bx) {
            return None;
        }
        self.poly_at(c).copied()
    }

    fn local_split(&self, c: V2, r: f64) -> Option<LocalSplit> {
        if self.single {
            return None;
        }
        let bx = Aabb::around(c, r);
        if !self.index_box.contains_box(&bx) {
            return None;
        }
        let mut hit = None;
        for i in self.index.query(&bx) {
            let p = self.active[i as usize];
            if p.seg.distance(c) <= r {
                if hit.is_some() {
                    return None;
                }
                hit = Some(p);
            }
        }
        let p = hit?;
        if (p.seg.a - c).norm() <= r || (p.seg.b - c).norm() <= r {
            return None;
        }
        let n = p.seg.left_normal();
        let foot = c - n * (c - p.seg.a).dot(&n);
        let d = (r - (c - foot).norm()).max(0.0);
        if d <= 1e-9 * r {
            return None;
        }
        let below = *self.poly_at(foot - n * (0.5 * d))?;
        let above = *self.poly_at(foot + n * (0.5 * d))?;
        Some(LocalSplit { origin: p.seg.a, normal: n, below, above })
    }

    fn one_sided(&self, x: V2, dir: V2) -> (V2, V2) {
        let d = dir.normalize() * 1e-9 * (1.0 + x.amax());
        let p = self.poly_at(x + d).map(|p| p.eval(x)).unwrap_or(v2(f64::NAN, f64::NAN));
        let m = self.poly_at(x - d).map(|p| p.eval(x)).unwrap_or(v2(f64::NAN, f64::NAN));
        (p, m)
    }
}

/// The field inside its domain and zero outside; the domain boundary joins
/// the jump set wherever the inner trace is nonzero.
pub struct ZeroExtended<'a> {
    pub inner: &'a SbdField,
    bx: Aabb,
    boundary: Vec<JumpPiece>,
}

impl<'a> ZeroExtended<'a> {
    pub fn new(inner: &'a SbdField) -> Self {
        let bx = inner.bbox();
        let mut boundary = Vec::new();
        let m = 256;
        for e in bx.edges() {
            // counter-clockwise edges: the outward normal is the right normal
            let n = -e.left_normal();
            let mut run: Option<f64> = None;
            for i in 0..=m {
                let on = i < m && {
                    let p = e.at((i as f64 + 0.5) / m as f64);
                    inner.value(p - n * 1e-9).norm() > 0.0
                };
                match (on, run) {
                    (true, None) => run = Some(i as f64 / m as f64),
                    (false, Some(t0)) => {
                        boundary.push(JumpPiece::new(e.sub(t0, i as f64 / m as f64), n));
                        run = None;
                    }
                    _ => {}
                }
            }
        }
        ZeroExtended { inner, bx, boundary }
    }

    pub fn boundary_pieces(&self) -> &[JumpPiece] {
        &self.boundary
    }
}

impl Field for ZeroExtended<'_> {
    fn value(&self, x: V2) -> V2 {
        if self.bx.contains_open(x) {
            self.inner.value(x)
        } else {
            V2::zeros()
        }
    }

    fn gradient(&self, x: V2) -> M2 {
        if self.bx.contains_open(x) {
            self.inner.gradient(x)
        } else {
            M2::zeros()
        }
    }

    fn jumps(&self, region: &Aabb, out: &mut Vec<JumpPiece>) {
        let mut v = Vec::new();
        self.inner.jumps(region, &mut v);
        for p in v {
            if let Some(s) = p.seg.clip_aabb(&self.bx) {
                if s.length() > 0.0 {
                    out.push(JumpPiece::new(s, p.normal));
                }
            }
        }
        for p in &self.boundary {
            if p.seg.distance_to_box(region) <= 0.0 {
                out.push(*p);
            }
        }
    }

    fn local_poly(&self, c: V2, r: f64) -> Option<PolyVec> {
        let b = Aabb::around(c, r);
        if self.bx.contains_open(b.min) && self.bx.contains_open(b.max) {
            self.inner.local_poly(c, r)
        } else if !self.bx.intersects(&b) || self.bx.distance(c) > r {
            Some(PolyVec::zero())
        } else {
            None
        }
    }

    fn one_sided(&self, x: V2, dir: V2) -> (V2, V2) {
        let d = dir.normalize() * 1e-9 * (1.0 + x.amax());
        let (ip, im) = self.inner.one_sided(x, dir);
        let p = if self.bx.contains_open(x + d) { ip } else { V2::zeros() };
        let m = if self.bx.contains_open(x - d) { im } else { V2::zeros() };
        (p, m)
    }
}

// ---------------------------------------------------------------- quadrature

/// Midpoint rule on a box at spacing close to `h` (cells fit the box exactly).
pub fn integrate_area<F>(region: &Aabb, h: f64, f: F) -> f64
where
    F: Fn(V2) -> f64 + Sync,
{
    if region.is_empty() || region.area() == 0.0 {
        return 0.0;
    }
    let nx = ((region.width() / h).round() as usize).max(1);
    let ny = ((region.height() / h).round() as usize).max(1);
    let (dx, dy) = (region.width() / nx as f64, region.height() / ny as f64);
    let w = dx * dy;
    (0..ny)
        .into_par_iter()
        .map(|j| {
            let y = region.min.y + (j as f64 + 0.5) * dy;
            let mut s = 0.0;
            for i in 0..nx {
                s += f(v2(region.min.x + (i as f64 + 0.5) * dx, y));
            }
            s * w
        })
        .sum()
}

/// Midpoint rule on a possibly rotated rectangle, in its local frame.
pub fn integrate_rect<F>(r: &Rect, h: f64, f: F) -> f64
where
    F: Fn(V2) -> f64 + Sync,
{
    let local = Aabb::new(-r.half_widths, r.half_widths);
    integrate_area(&local, h, |l| f(r.to_world(l)))
}

/// 16-point Gauss rule along a segment, `f` receiving the point and the
/// normalized parameter.
pub fn integrate_segment<F: Fn(V2, f64) -> f64>(s: &Segment, f: F) -> f64 {
    let len = s.length();
    if len == 0.0 {
        return 0.0;
    }
    gauss16_unit().iter().map(|&(t, w)| w * f(s.at(t), t)).sum::<f64>() * len
}

// ---------------------------------------------------------------- measures

/// Symmetric gradient by central differences of the polynomial of the
/// component containing `x` (one-sided with respect to the jump by construction).
pub fn sym_gradient(f: &SbdField, x: V2) -> Result<M2, FieldError> {
    if f.distance_to_jump(x, 4.0 * f.h) <= 1e-14 {
        return Err(FieldError::PointOnJump(x.x, x.y));
    }
    let p = f.poly_at(x).ok_or(FieldError::PointOnJump(x.x, x.y))?;
    let h = f.h;
    let gx = (p.eval(x + v2(h, 0.0)) - p.eval(x - v2(h, 0.0))) / (2.0 * h);
    let gy = (p.eval(x + v2(0.0, h)) - p.eval(x - v2(0.0, h))) / (2.0 * h);
    let g = M2::new(gx.x, gy.x, gx.y, gy.y);
    Ok(sym(&g))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EuMeasure {
    pub abs_cont: f64,
    pub jump: f64,
    pub total: f64,
}

/// `|Eu|(region)` for any field, given the jump pieces to charge.
pub fn eu_measure_field(f: &dyn Field, region: &Aabb, h: f64, jumps: &[JumpPiece]) -> EuMeasure {
    let abs_cont = integrate_area(region, h, |x| frob(&strain(f, x)));
    let jump = jumps
        .iter()
        .filter_map(|p| p.seg.clip_aabb(region).map(|s| (s, p.normal)))
        .map(|(s, n)| integrate_segment(&s, |x, _| frob(&sym_tensor_product(jump_at(f, x, n), n))))
        .sum();
    EuMeasure { abs_cont, jump, total: abs_cont + jump }
}

pub fn eu_measure(f: &SbdField, region: &Rect) -> Result<EuMeasure, FieldError> {
    let r = region.as_aabb().ok_or(FieldError::RegionOutsideDomain)?;
    if !f.bbox().dilate(1e-12).contains_box(&r) {
        return Err(FieldError::RegionOutsideDomain);
    }
    let mut j = Vec::new();
    f.jumps(&r, &mut j);
    Ok(eu_measure_field(f, &r, f.h, &j))
}

pub fn lp_strain_norm_field(f: &dyn Field, region: &Aabb, h: f64, p: f64) -> f64 {
    integrate_area(region, h, |x| frob(&strain(f, x)).powf(p)).powf(1.0 / p)
}

pub fn lp_strain_norm(f: &SbdField, p: f64) -> f64 {
    assert!(p > 1.0, "p must exceed 1");
    lp_strain_norm_field(f, &f.bbox(), f.h, p)
}

/// Parameter intervals of `s` not covered by collinear segments of `others`.
pub fn uncovered_intervals(s: &Segment, others: &[Segment], tol: f64) -> Vec<(f64, f64)> {
    let len = s.length();
    if len == 0.0 {
        return Vec::new();
    }
    let d = s.direction();
    let mut cover: Vec<(f64, f64)> = Vec::new();
    for o in others {
        let n = perp(d);
        if (o.a - s.a).dot(&n).abs() > tol || (o.b - s.a).dot(&n).abs() > tol {
            continue;
        }
        let ta = (o.a - s.a).dot(&d) / len;
        let tb = (o.b - s.a).dot(&d) / len;
        let (lo, hi) = (ta.min(tb).max(0.0), ta.max(tb).min(1.0));
        if hi > lo {
            cover.push((lo, hi));
        }
    }
    cover.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let mut t = 0.0;
    for (lo, hi) in cover {
        if lo > t {
            out.push((t, lo));
        }
        t = t.max(hi);
    }
    if t < 1.0 {
        out.push((t, 1.0));
    }
    out
}

/// Union of two piece sets with collinear overlaps counted once.
pub fn merge_pieces(a: &[JumpPiece], b: &[JumpPiece]) -> Vec<JumpPiece> {
    let mut out: Vec<JumpPiece> = a.to_vec();
    let aseg: Vec<Segment> = a.iter().map(|p| p.seg).collect();
    for p in b {
        let near: Vec<Segment> = aseg.iter().copied().filter(|s| s.distance_to_box(&p.seg.aabb().dilate(1e-9)) <= 1e-9).collect();
        for (t0, t1) in uncovered_intervals(&p.seg, &near, 1e-10) {
            if t1 - t0 > 1e-12 {
                out.push(JumpPiece::new(p.seg.sub(t0, t1), p.normal));
            }
        }
    }
    out
}

/// `||f - g||_{L1} + |E(f - g)|(region)` with the jump term charged on `jumps`.
pub fn bd_distance_with(f: &dyn Field, g: &dyn Field, region: &Aabb, h: f64, jumps: &[JumpPiece]) -> f64 {
    let l1 = integrate_area(region, h, |x| (f.value(x) - g.value(x)).norm());
    let diff = Combo { a: 1.0, f, b: -1.0, g };
    l1 + eu_measure_field(&diff, region, h, jumps).total
}

pub fn bd_distance(f: &SbdField, g: &SbdField) -> Result<f64, FieldError> {
    if f.domain != g.domain {
        return Err(FieldError::DomainMismatch);
    }
    let bx = f.bbox();
    let jumps = merge_pieces(&f.jump_pieces(), &g.jump_pieces());
    Ok(bd_distance_with(f, g, &bx, f.h.min(g.h), &jumps))
}

/// `int |[u]|` over the given segments.
pub fn jump_energy(f: &dyn Field, subset: &[Segment]) -> f64 {
    subset.iter().map(|s| integrate_segment(s, |x, _| jump_at(f, x, s.left_normal()).norm())).sum()
}

pub fn jump_energy_pieces(f: &dyn Field, pieces: &[JumpPiece]) -> f64 {
    pieces.iter().map(|p| integrate_segment(&p.seg, |x, _| jump_at(f, x, p.normal).norm())).sum()
}

/// `int |[u] (.) nu|` over the given pieces.
pub fn jump_sym_energy(f: &dyn Field, pieces: &[JumpPiece]) -> f64 {
    pieces
        .iter()
        .map(|p| integrate_segment(&p.seg, |x, _| frob(&sym_tensor_product(jump_at(f, x, p.normal), p.normal))))
        .sum()
}

pub fn l1_distance(f: &dyn Field, g: &dyn Field, region: &Aabb, h: f64) -> f64 {
    integrate_area(region, h, |x| (f.value(x) - g.value(x)).norm())
}

pub fn l1_norm(f: &dyn Field, region: &Aabb, h: f64) -> f64 {
    integrate_area(region, h, |x| f.value(x).norm())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    pub fn unit() -> DomainSpec {
        DomainSpec { min: [0.0, 0.0], max: [1.0, 1.0] }
    }

    pub fn horizontal_jump(below: &str, above: &str, amp: &str, h: f64) -> SbdField {
        FieldSpec {
            domain: unit(),
            components: vec![below.into(), above.into()],
            jump_segments: vec![JumpSegSpec {
                p0: [0.0, 0.5],
                p1: [1.0, 0.5],
                normal: [0.0, 1.0],
                amplitude_expr: amp.into(),
            }],
            h,
        }
        .build()
        .unwrap()
    }

    fn smooth(s: &str) -> SbdField {
        SbdField::smooth(Rect::unit_square(), 1e-3, PolyVec::parse(s).unwrap())
    }

    #[test]
    fn sym_product_examples() {
        let m = sym_tensor_product(v2(1.0, 0.0), v2(0.0, 1.0));
        assert_eq!(m, M2::new(0.0, 0.5, 0.5, 0.0));
        assert_abs_diff_eq!(frob(&m), 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        let m = sym_tensor_product(v2(0.0, 1.0), v2(0.0, 1.0));
        assert_eq!(frob(&m), 1.0);
        assert_eq!(sym_tensor_product(V2::zeros(), v2(3.0, 1.0)), M2::zeros());
    }

    #[test]
    fn sym_gradient_examples() {
        let f = smooth("(0.3 + 2*y, -0.1 - 2*x)");
        assert!(frob(&sym_gradient(&f, v2(0.4, 0.6)).unwrap()) < 1e-10);
        let f = smooth("(x, 0)");
        assert!((sym_gradient(&f, v2(0.4, 0.6)).unwrap() - M2::new(1.0, 0.0, 0.0, 0.0)).norm() < 1e-10);
        let f = smooth("(y^2, 0)");
        let g = sym_gradient(&f, v2(0.4, 0.3)).unwrap();
        assert!((g - M2::new(0.0, 0.3, 0.3, 0.0)).norm() < 1e-6);
        let j = horizontal_jump("(0, 0)", "(1, 0)", "(1, 0)", 1e-3);
        assert!(matches!(sym_gradient(&j, v2(0.3, 0.5)), Err(FieldError::PointOnJump(..))));
        assert!(sym_gradient(&j, v2(0.3, 0.5005)).is_ok());
    }

    #[test]
    fn eu_measure_examples() {
        let f = smooth("(x*y, x^2)");
        assert_eq!(eu_measure(&f, &Rect::unit_square()).unwrap().jump, 0.0);
        let j = horizontal_jump("(0, 0)", "(1, 0)", "(1, 0)", 1e-2);
        let e = eu_measure(&j, &Rect::unit_square()).unwrap();
        assert_eq!(e.abs_cont, 0.0);
        assert_abs_diff_eq!(e.jump, 1.0 / 2f64.sqrt(), epsilon = 1e-6);
        let f = smooth("(x, 0)");
        assert_abs_diff_eq!(eu_measure(&f, &Rect::unit_square()).unwrap().abs_cont, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn eu_measure_additive() {
        let f = horizontal_jump("(x*y, x^2)", "(x*y + 1 + y, x^2 - x)", "(1 + 0.5, -x)", 1e-2);
        let all = eu_measure(&f, &Rect::unit_square()).unwrap().total;
        let lo = eu_measure(&f, &Rect::axis_aligned(v2(0.0, 0.0), v2(0.3, 1.0))).unwrap().total;
        let hi = eu_measure(&f, &Rect::axis_aligned(v2(0.3, 0.0), v2(1.0, 1.0))).unwrap().total;
        assert!((lo + hi - all).abs() <= 1e-6 * all, "{lo} + {hi} vs {all}");
    }

    #[test]
    fn lp_norm_examples() {
        assert_eq!(lp_strain_norm(&smooth("(0, 0)"), 2.0), 0.0);
        let f = smooth("(x, 0)");
        assert_abs_diff_eq!(lp_strain_norm(&f, 2.0), 1.0, epsilon = 1e-6);
        let g = smooth("(2*x*y, y^2)");
        let g2 = smooth("(4*x*y, 2*y^2)");
        assert_abs_diff_eq!(lp_strain_norm(&g2, 3.0), 2.0 * lp_strain_norm(&g, 3.0), epsilon = 1e-12);
    }

    #[test]
    fn bd_distance_examples() {
        let f = smooth("(x*y, x^2 - y)");
        assert_eq!(bd_distance(&f, &f).unwrap(), 0.0);
        let g = smooth("(x*y + 0.3, x^2 - y - 0.4)");
        assert_abs_diff_eq!(bd_distance(&f, &g).unwrap(), 0.5, epsilon = 1e-12);
        let a = horizontal_jump("(0, 0)", "(1, 0)", "(1, 0)", 1e-2);
        let b = smooth("(0, 0)");
        // direct-sum oracle: L1 of the upper half plus the jump term
        let l1 = 0.5;
        let want = l1 + 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(bd_distance(&a, &b).unwrap(), want, epsilon = 1e-9);
        assert_abs_diff_eq!(bd_distance(&a, &a).unwrap(), 0.0, epsilon = 1e-12);
        let other = SbdField::smooth(Rect::axis_aligned(v2(0.0, 0.0), v2(2.0, 1.0)), 1e-2, PolyVec::zero());
        assert!(matches!(bd_distance(&a, &other), Err(FieldError::DomainMismatch)));
    }

    #[test]
    fn jump_energy_examples() {
        let z = horizontal_jump("(x, 0)", "(x, 0)", "(0, 0)", 1e-2);
        let s = [Segment::new(v2(0.0, 0.5), v2(1.0, 0.5))];
        assert_eq!(jump_energy(&z, &s), 0.0);
        let j = horizontal_jump("(0, 0)", "(1, 0)", "(1, 0)", 1e-2);
        assert_abs_diff_eq!(jump_energy(&j, &s), 1.0, epsilon = 1e-12);
        let lin = horizontal_jump("(0, 0)", "(x, 0)", "(t, 0)", 1e-2);
        assert_abs_diff_eq!(jump_energy(&lin, &s), 0.5, epsilon = 1e-6);
    }

    #[test]
    fn spec_validation() {
        let bad = FieldSpec {
            domain: unit(),
            components: vec!["(0, 0)".into(), "(1, 0)".into()],
            jump_segments: vec![JumpSegSpec {
                p0: [0.0, 0.5],
                p1: [1.0, 0.5],
                normal: [0.0, 1.0],
                amplitude_expr: "(2, 0)".into(),
            }],
            h: 0.01,
        };
        assert!(matches!(bad.build(), Err(FieldError::AmplitudeMismatch { .. })));
        let mut tip = bad.clone();
        tip.jump_segments[0].p1 = [0.5, 0.5];
        tip.jump_segments[0].amplitude_expr = "(1, 0)".into();
        assert!(matches!(tip.build(), Err(FieldError::NotSpanning(..))));
        let mut one = bad.clone();
        one.components.pop();
        assert!(matches!(one.build(), Err(FieldError::ComponentCount { found: 2, declared: 1 })));
        let json = bad.to_json();
        assert_eq!(FieldSpec::from_json(&json).unwrap(), bad);
    }

    #[test]
    fn closed_chain_components() {
        let sq = [[0.25, 0.25], [0.75, 0.25], [0.75, 0.75], [0.25, 0.75]];
        let mut segs = Vec::new();
        for i in 0..4 {
            let (a, b) = (sq[i], sq[(i + 1) % 4]);
            let d = v2(b[0] - a[0], b[1] - a[1]).normalize();
            segs.push(JumpSegSpec { p0: a, p1: b, normal: [d.y, -d.x], amplitude_expr: "(-1, 0)".into() });
        }
        let f = FieldSpec { domain: unit(), components: vec!["(0, 0)".into(), "(1, 0)".into()], jump_segments: segs, h: 0.01 }
            .build()
            .unwrap();
        assert_eq!(f.value(v2(0.5, 0.5)), v2(1.0, 0.0));
        assert_eq!(f.value(v2(0.1, 0.5)), v2(0.0, 0.0));
        assert_abs_diff_eq!(f.jump_length(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_extension_boundary() {
        let f = smooth("(1, 0)");
        let z = f.zero_extended();
        let len: f64 = z.boundary_pieces().iter().map(|p| p.seg.length()).sum();
        assert_abs_diff_eq!(len, 4.0, epsilon = 1e-12);
        let p = z.boundary_pieces()[0];
        assert_abs_diff_eq!(jump_at(&z, p.seg.midpoint(), p.normal).norm(), 1.0, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn sym_product_bounds(a in proptest::array::uniform2(-10.0f64..10.0), b in proptest::array::uniform2(-10.0f64..10.0)) {
            let (a, b) = (v2(a[0], a[1]), v2(b[0], b[1]));
            let n = frob(&sym_tensor_product(a, b));
            let ab = a.norm() * b.norm();
            prop_assert!(n <= ab * (1.0 + 1e-12));
            prop_assert!(n >= ab / 2f64.sqrt() * (1.0 - 1e-12));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn rigid_fields_have_no_strain(b0 in -5.0f64..5.0, b1 in -5.0f64..5.0, w in -5.0f64..5.0, px in 0.05f64..0.95, py in 0.05f64..0.95) {
            let f = SbdField::smooth(Rect::unit_square(), 1e-3, PolyVec::affine(v2(b0, b1), &M2::new(0.0, w, -w, 0.0)));
            prop_assert!(frob(&sym_gradient(&f, v2(px, py)).unwrap()) < 1e-10);
        }

        #[test]
        fn bd_distance_smooth_matches_sum(c in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let f = SbdField::smooth(Rect::unit_square(), 0.02, PolyVec::parse(&format!("({}*x*y + {}*y^2, {}*x)", c[0], c[1], c[2])).unwrap());
            let g = SbdField::smooth(Rect::unit_square(), 0.02, PolyVec::parse(&format!("({}*x^2, {}*y + {})", c[3], c[4], c[5])).unwrap());
            let bx = f.bbox();
            let l1 = integrate_area(&bx, 0.02, |x| (f.value(x) - g.value(x)).norm());
            let e = integrate_area(&bx, 0.02, |x| frob(&(strain(&f, x) - strain(&g, x))));
            let d = bd_distance(&f, &g).unwrap();
            prop_assert!((d - l1 - e).abs() <= 1e-8 * (1.0 + d));
        }
    }
}
