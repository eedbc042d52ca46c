//! Two-fold scaled reflection across a straight face, extending a field
//! from one side of the face to the other without creating a jump on it.

use crate::expr::PolyVec;
use crate::geometry::{perp, v2, Aabb, Rect, Segment, M2, V2};
use crate::sbd_field::{frob, integrate_rect, integrate_segment, jump_at, strain, Field, JumpPiece, LocalSplit};
use serde::Serialize;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ExtensionError {
    #[error("reflection parameters need 0 < mu < nu < 1 (got mu = {0}, nu = {1})")]
    BadParams(f64, f64),
    #[error("the jump set touches the reflection face")]
    JumpOnFace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReflectionParams {
    pub mu: f64,
    pub nu: f64,
    pub q: f64,
}

impl Default for ReflectionParams {
    fn default() -> Self {
        ReflectionParams::new(0.25, 0.5).expect("default parameters are admissible")
    }
}

impl ReflectionParams {
    pub fn new(mu: f64, nu: f64) -> Result<Self, ExtensionError> {
        if !(0.0 < mu && mu < nu && nu < 1.0) {
            return Err(ExtensionError::BadParams(mu, nu));
        }
        Ok(ReflectionParams { mu, nu, q: (1.0 + nu) / (nu - mu) })
    }

    /// `q mu + (1 - q) nu`, which equals -1.
    pub fn identity_value(&self) -> f64 {
        self.q * self.mu + (1.0 - self.q) * self.nu
    }

    pub fn weights(&self) -> [(f64, f64); 2] {
        [(self.q, self.mu), (1.0 - self.q, self.nu)]
    }

    /// Factor picked up by the normal-normal strain under the extension.
    pub fn normal_strain_factor(&self) -> f64 {
        self.q * self.mu * self.mu + (1.0 - self.q) * self.nu * self.nu
    }
}

/// Straight face through `origin` with unit `normal` pointing to the side
/// that is overwritten by the reflection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub origin: V2,
    pub normal: V2,
}

impl Face {
    pub fn new(origin: V2, normal: V2) -> Self {
        Face { origin, normal: normal.normalize() }
    }

    pub fn tangent(&self) -> V2 {
        -perp(self.normal)
    }

    /// Signed height above the face.
    pub fn height(&self, x: V2) -> f64 {
        (x - self.origin).dot(&self.normal)
    }

    /// `T_c = R diag(1, -c) R^T` with `R = [t n]`.
    pub fn map(&self, c: f64) -> M2 {
        let n = self.normal;
        M2::identity() - n * n.transpose() * (1.0 + c)
    }

    /// Part of the face line inside a box.
    pub fn clip(&self, bx: &Aabb) -> Option<Segment> {
        let t = self.tangent();
        let ext = (bx.width() + bx.height()) * 2.0 + (bx.center() - self.origin).norm();
        let o = self.origin + t * t.dot(&(bx.center() - self.origin));
        Segment::new(o - t * ext, o + t * ext).clip_aabb(bx)
    }
}

/// `v = u` below the face and `q T_mu u(y_mu) + (1 - q) T_nu u(y_nu)` above,
/// with `y_c = o + T_c (x - o)`.
#[derive(Clone, Debug)]
pub struct Reflected<F: Field> {
    pub inner: F,
    pub face: Face,
    pub params: ReflectionParams,
    maps: [(f64, M2, M2); 2],
}

impl<F: Field> Reflected<F> {
    pub fn new(inner: F, face: Face, params: ReflectionParams) -> Self {
        let maps = params.weights().map(|(w, c)| (w, face.map(c), face.map(1.0 / c)));
        Reflected { inner, face, params, maps }
    }

    /// Disk crossing the face: one polynomial only when the inner field is a
    /// single polynomial on every point the disk reads and the reflection
    /// maps that polynomial to itself (rigid motions).
    fn straddle_poly(&self, c: V2, r: f64, h: f64) -> Option<PolyVec> {
        let p = self.inner_poly(c, r, h)?;
        let q = self.reflect_poly(&p);
        (q.sub(&p).max_abs_coef() <= 1e-12 * (1.0 + p.max_abs_coef())).then_some(p)
    }

    /// The reflected side of a polynomial inner field.
    fn reflect_poly(&self, p: &PolyVec) -> PolyVec {
        let mut acc = PolyVec::zero();
        for (w, t, _) in &self.maps {
            let o = self.face.origin - t * self.face.origin;
            acc = acc.add(&p.transform(t, t, o).scale(*w));
        }
        acc
    }

    /// Single polynomial of the inner field on every point read by a disk
    /// crossing the face.
    fn inner_poly(&self, c: V2, r: f64, h: f64) -> Option<PolyVec> {
        let cmax = self.params.weights().iter().fold(0.0f64, |m, &(_, c)| m.max(c));
        let depth = (r - h).max(cmax * (h + r));
        let s = 0.5 * r;
        let (t, n) = (self.face.tangent(), self.face.normal);
        let tc = (c - self.face.origin).dot(&t);
        let (nt, nh) = ((2.0 * r / s).ceil() as usize, (depth / s).ceil().max(1.0) as usize);
        let mut poly: Option<PolyVec> = None;
        for i in 0..nt {
            for j in 0..nh {
                let x = self.face.origin + t * (tc - r + (i as f64 + 0.5) * s) - n * ((j as f64 + 0.5) * s);
                let p = self.inner.local_poly(x, s * std::f64::consts::FRAC_1_SQRT_2)?;
                match &poly {
                    None => poly = Some(p),
                    Some(q) => {
                        if q.sub(&p).max_abs_coef() > 1e-12 * (1.0 + q.max_abs_coef()) {
                            return None;
                        }
                    }
                }
            }
        }
        poly
    }

    fn image(&self, t: &M2, x: V2) -> V2 {
        self.face.origin + t * (x - self.face.origin)
    }

    fn above(&self, x: V2) -> bool {
        self.face.height(x) > 0.0
    }
}

impl<F: Field> Field for Reflected<F> {
    fn value(&self, x: V2) -> V2 {
        if !self.above(x) {
            return self.inner.value(x);
        }
        self.maps.iter().map(|(w, t, _)| (t * self.inner.value(self.image(t, x))) * *w).sum()
    }

    fn gradient(&self, x: V2) -> M2 {
        if !self.above(x) {
            return self.inner.gradient(x);
        }
        self.maps.iter().map(|(w, t, _)| (t * self.inner.gradient(self.image(t, x)) * t) * *w).sum()
    }

    fn jumps(&self, region: &Aabb, out: &mut Vec<JumpPiece>) {
        let below = |s: &Segment| -> Option<Segment> {
            let (ha, hb) = (self.face.height(s.a), self.face.height(s.b));
            if ha <= 0.0 && hb <= 0.0 {
                Some(*s)
            } else if ha > 0.0 && hb > 0.0 {
                None
            } else {
                let t = ha / (ha - hb);
                let c = s.at(t);
                let sub = if ha <= 0.0 { Segment::new(s.a, c) } else { Segment::new(c, s.b) };
                (sub.length() > 0.0).then_some(sub)
            }
        };
        let mut v = Vec::new();
        self.inner.jumps(region, &mut v);
        for p in v {
            if let Some(s) = below(&p.seg) {
                if s.distance_to_box(region) <= 0.0 {
                    out.push(JumpPiece::new(s, p.normal));
                }
            }
        }
        let corners = region.corners();
        for (_, t, tinv) in &self.maps {
            let pre = Aabb::from_points(corners.iter().map(|c| self.image(t, *c)).collect::<Vec<_>>().iter());
            let mut v = Vec::new();
            self.inner.jumps(&pre, &mut v);
            for p in v {
                if let Some(s) = below(&p.seg) {
                    let img = Segment::new(self.image(tinv, s.a), self.image(tinv, s.b));
                    if img.distance_to_box(region) <= 0.0 && img.length() > 0.0 {
                        let n = (tinv * p.normal).normalize();
                        out.push(JumpPiece::new(img, n));
                    }
                }
            }
        }
    }

    fn kinks(&self, region: &Aabb, out: &mut Vec<crate::geometry::Segment>) {
        if let Some(s) = self.face.clip(region) {
            out.push(s);
        }
        // kinks of the inner field and their images
        let mut k = Vec::new();
        self.inner.kinks(region, &mut k);
        out.extend(k.iter().copied());
        let corners = region.corners();
        for (_, t, tinv) in &self.maps {
            let pre = Aabb::from_points(corners.iter().map(|c| self.image(t, *c)).collect::<Vec<_>>().iter());
            let mut k = Vec::new();
            self.inner.kinks(&pre, &mut k);
            out.extend(k.iter().map(|s| Segment::new(self.image(tinv, s.a), self.image(tinv, s.b))));
        }
    }

    fn local_poly(&self, c: V2, r: f64) -> Option<PolyVec> {
        let h = self.face.height(c);
        if h + r <= 0.0 {
            return self.inner.local_poly(c, r);
        }
        if h - r < 0.0 {
            return self.straddle_poly(c, r, h);
        }
        let mut acc = PolyVec::zero();
        for (w, t, _) in &self.maps {
            let p = self.inner.local_poly(self.image(t, c), r)?;
            let o = self.face.origin - t * self.face.origin;
            acc = acc.add(&p.transform(t, t, o).scale(*w));
        }
        Some(acc)
    }

    fn local_split(&self, c: V2, r: f64) -> Option<LocalSplit> {
        let h = self.face.height(c);
        if h + r <= 0.0 {
            return self.inner.local_split(c, r);
        }
        if h - r >= 0.0 {
            return None;
        }
        let below = self.inner_poly(c, r, h)?;
        Some(LocalSplit { origin: self.face.origin, normal: self.face.normal, below, above: self.reflect_poly(&below) })
    }

    fn one_sided(&self, x: V2, dir: V2) -> (V2, V2) {
        let h = self.face.height(x);
        let scale = 1e-12 * (1.0 + x.amax());
        if h < -scale {
            return self.inner.one_sided(x, dir);
        }
        if h > scale {
            let mut p = V2::zeros();
            let mut m = V2::zeros();
            for (w, t, _) in &self.maps {
                let (a, b) = self.inner.one_sided(self.image(t, x), t * dir);
                p += (t * a) * *w;
                m += (t * b) * *w;
            }
            return (p, m);
        }
        let d = dir.normalize() * 1e-9 * (1.0 + x.amax());
        (self.value(x + d), self.value(x - d))
    }
}

/// Which edge of the rectangle (in its local frame) carries the face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    Top,
    Bottom,
    Left,
    Right,
}

/// The face on the given edge of `r`, oriented outward, and the mirrored rectangle.
pub fn face_of(r: &Rect, side: Side) -> (Face, Segment, Rect) {
    let (t, n) = (r.tangent(), r.normal());
    let h = r.half_widths;
    let (out, reach) = match side {
        Side::Top => (n, h.y),
        Side::Bottom => (-n, h.y),
        Side::Right => (t, h.x),
        Side::Left => (-t, h.x),
    };
    let o = r.center + out * reach;
    let face = Face::new(o, out);
    let edge = {
        let e = face.tangent() * if matches!(side, Side::Top | Side::Bottom) { h.x } else { h.y };
        Segment::new(o - e, o + e)
    };
    let mirror = Rect { center: r.center + out * (2.0 * reach), ..*r };
    (face, edge, mirror)
}

/// Lazily extend `f` from `r` across the edge `side`.
pub fn reflect_extend<F: Field>(f: F, r: &Rect, side: Side, params: ReflectionParams) -> Result<Reflected<F>, ExtensionError> {
    let (face, edge, _) = face_of(r, side);
    let mut v = Vec::new();
    f.jumps(&edge.aabb().dilate(1e-12), &mut v);
    if v.iter().any(|p| p.seg.distance(edge.a).min(p.seg.distance(edge.b)) <= 1e-12 || p.seg.intersect_param(&edge).is_some()) {
        return Err(ExtensionError::JumpOnFace);
    }
    Ok(Reflected::new(f, face, params))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExtensionRatios {
    /// `||v^||_{L1(R^)} / ||v||_{L1(R)}`
    pub l1: f64,
    /// `H1(J_v^ in R^) / H1(J_v in R)`
    pub jump_length: f64,
    /// `int_{J_v^} |[v^]| / int_{J_v} |[v]|`
    pub jump_energy: f64,
    /// `int_{R^} |e(v^)|^p / int_R |e(v)|^p`
    pub strain: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a > 1e-13 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn jump_stats(f: &dyn Field, r: &Rect) -> (f64, f64) {
    let mut v = Vec::new();
    f.jumps(&r.aabb(), &mut v);
    let (mut len, mut en) = (0.0, 0.0);
    for p in v {
        if let Some((t0, t1)) = r.clip_segment(&p.seg) {
            if t1 > t0 {
                let s = p.seg.sub(t0, t1);
                len += s.length();
                en += integrate_segment(&s, |x, _| jump_at(f, x, p.normal).norm());
            }
        }
    }
    (len, en)
}

/// Measured ratios between the extension on `R u F u R'` and the field on `R`.
pub fn measure_extension_constants<F: Field>(
    f: &F,
    r: &Rect,
    side: Side,
    params: ReflectionParams,
    h: f64,
    p: f64,
) -> Result<ExtensionRatios, ExtensionError> {
    let ext = reflect_extend(f, r, side, params)?;
    let (_, _, mirror) = face_of(r, side);
    let whole = match side {
        Side::Top | Side::Bottom => Rect { center: (r.center + mirror.center) * 0.5, half_widths: v2(r.half_widths.x, 2.0 * r.half_widths.y), ..*r },
        Side::Left | Side::Right => Rect { center: (r.center + mirror.center) * 0.5, half_widths: v2(2.0 * r.half_widths.x, r.half_widths.y), ..*r },
    };
    let l1_r = integrate_rect(r, h, |x| f.value(x).norm());
    let l1_w = integrate_rect(&whole, h, |x| ext.value(x).norm());
    let e_r = integrate_rect(r, h, |x| frob(&strain(f, x)).powf(p));
    let e_w = integrate_rect(&whole, h, |x| frob(&strain(&ext, x)).powf(p));
    let (len_r, en_r) = jump_stats(f, r);
    let (len_w, en_w) = jump_stats(&ext, &whole);
    Ok(ExtensionRatios {
        l1: ratio(l1_w, l1_r),
        jump_length: ratio(len_w, len_r),
        jump_energy: ratio(en_w, en_r),
        strain: ratio(e_w, e_r),
    })
}

/// Largest gap between the limits from both sides at `n` points of the face edge.
pub fn trace_gap<F: Field>(f: &F, r: &Rect, side: Side, params: ReflectionParams, n: usize) -> Result<f64, ExtensionError> {
    let ext = reflect_extend(f, r, side, params)?;
    let (face, edge, _) = face_of(r, side);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let x = edge.at((i as f64 + 0.5) / n as f64);
        let d = face.normal * 1e-11;
        let from_r = f.value(x - d);
        let from_mirror = ext.value(x + d);
        worst = worst.max((from_r - from_mirror).norm() / (1.0 + from_r.norm()));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbd_field::{PolyField, SbdField};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit() -> Rect {
        Rect::unit_square()
    }

    #[test]
    fn q_value_and_identity() {
        let p = ReflectionParams::default();
        assert_eq!(p.q, 6.0);
        assert_eq!(p.identity_value(), -1.0);
        assert_eq!(p.normal_strain_factor(), -0.875);
        assert!(ReflectionParams::new(0.5, 0.25).is_err());
    }

    #[test]
    fn constant_is_preserved() {
        let f = PolyField(PolyVec::constant(v2(0.7, -1.3)));
        let e = reflect_extend(f, &unit(), Side::Top, ReflectionParams::default()).unwrap();
        for x in [v2(0.3, 1.2), v2(0.9, 1.9), v2(0.1, 1.0001)] {
            assert!((e.value(x) - v2(0.7, -1.3)).norm() < 1e-14);
        }
    }

    #[test]
    fn jump_on_face_rejected() {
        let f = crate::sbd_field::tests::horizontal_jump("(0, 0)", "(1, 0)", "(1, 0)", 0.01);
        let r = Rect::axis_aligned(v2(0.0, 0.0), v2(1.0, 0.5));
        assert_eq!(reflect_extend(&f, &r, Side::Top, ReflectionParams::default()).unwrap_err(), ExtensionError::JumpOnFace);
        let r = Rect::axis_aligned(v2(0.0, 0.0), v2(1.0, 0.4));
        assert!(reflect_extend(&f, &r, Side::Top, ReflectionParams::default()).is_ok());
    }

    #[test]
    fn reflected_jump_images() {
        // crack at y = 0.5 inside R = [0,1] x [0,0.75], face y = 0.75 at distance d = 0.25
        let f = crate::sbd_field::tests::horizontal_jump("(0, 0)", "(1, 0.5)", "(1, 0.5)", 0.01);
        let r = Rect::axis_aligned(v2(0.0, 0.0), v2(1.0, 0.75));
        let e = reflect_extend(&f, &r, Side::Top, ReflectionParams::default()).unwrap();
        let mut v = Vec::new();
        e.jumps(&Aabb::new(v2(0.1, 0.76), v2(0.9, 3.0)), &mut v);
        let mut ys: Vec<f64> = v.iter().filter(|p| p.seg.a.y > 0.75).map(|p| p.seg.a.y).collect();
        ys.sort_by(f64::total_cmp);
        // images at 0.75 + d / c for c = 1/2, 1/4
        assert_abs_diff_eq!(ys[0], 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(ys[1], 1.75, epsilon = 1e-12);
        let a = jump_at(&e, v2(0.3, 1.25), v2(0.0, 1.0));
        // (1-q) T_nu [u] with the orientation flipped
        assert_abs_diff_eq!((a - v2(5.0, -5.0 * 0.5 * 0.5)).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_field_ratios() {
        let f = PolyField(PolyVec::zero());
        let r = measure_extension_constants(&f, &unit(), Side::Top, ReflectionParams::default(), 0.02, 2.0).unwrap();
        assert_eq!(r, ExtensionRatios { l1: 0.0, jump_length: 0.0, jump_energy: 0.0, strain: 0.0 });
    }

    #[test]
    fn strain_ratio_baseline() {
        let f = PolyField(PolyVec::parse("(0, y)").unwrap());
        let r = measure_extension_constants(&f, &unit(), Side::Top, ReflectionParams::default(), 0.01, 2.0).unwrap();
        // e_nn picks up qmu^2 + (1-q)nu^2 = -0.875 on the mirror
        assert_abs_diff_eq!(r.strain, 1.0 + 0.875 * 0.875, epsilon = 1e-9);
    }

    #[test]
    fn globally_smooth_has_no_jump() {
        let f = SbdField::smooth(unit(), 0.01, PolyVec::parse("(x*y + y^3, x - y^2)").unwrap());
        let e = reflect_extend(&f, &unit(), Side::Top, ReflectionParams::default()).unwrap();
        let mut v = Vec::new();
        e.jumps(&Aabb::new(v2(-1.0, -1.0), v2(2.0, 3.0)), &mut v);
        assert!(v.is_empty());
        assert!(trace_gap(&f, &unit(), Side::Top, ReflectionParams::default(), 1000).unwrap() <= 1e-8);
    }

    #[test]
    fn local_poly_matches_pointwise() {
        let f = PolyField(PolyVec::parse("(x*y + y^3, x - y^2)").unwrap());
        let e = Reflected::new(f, Face::new(v2(0.2, 0.5), v2(0.6, 0.8)), ReflectionParams::default());
        let c = v2(0.8, 1.4);
        let p = e.local_poly(c, 0.1).unwrap();
        for x in [c, c + v2(0.05, -0.03)] {
            assert!((p.eval(x) - e.value(x)).norm() < 1e-11);
            assert!((p.jacobian(x) - e.gradient(x)).norm() < 1e-10);
        }
    }

    #[test]
    fn straddling_disk_keeps_rigid_poly() {
        let face = Face::new(v2(0.2, 0.5), v2(0.6, 0.8));
        let rigid = Reflected::new(PolyField(PolyVec::parse("(1 - 0.3*y, 2 + 0.3*x)").unwrap()), face, ReflectionParams::default());
        let c = face.origin + v2(0.03, 0.01);
        let p = rigid.local_poly(c, 0.1).unwrap();
        for x in [c + v2(0.05, 0.04), c - v2(0.05, 0.06)] {
            assert!((p.eval(x) - rigid.value(x)).norm() < 1e-12);
        }
        let strained = Reflected::new(PolyField(PolyVec::parse("(x, 0)").unwrap()), face, ReflectionParams::default());
        assert!(strained.local_poly(c, 0.1).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn q_identity(mu in 0.01f64..0.98, gap in 0.001f64..0.5) {
            let nu = (mu + gap).min(0.999);
            prop_assume!(nu > mu);
            let p = ReflectionParams::new(mu, nu).unwrap();
            prop_assert!((p.identity_value() + 1.0).abs() <= 1e-12 * p.q);
        }

        #[test]
        fn ratios_are_homogeneous(lambda in 0.1f64..10.0) {
            let s = "(x*y + 0.2, y^2 - x)";
            let f = PolyField(PolyVec::parse(s).unwrap());
            let g = PolyField(PolyVec::parse(s).unwrap().scale(lambda));
            let a = measure_extension_constants(&f, &unit(), Side::Right, ReflectionParams::default(), 0.05, 2.0).unwrap();
            let b = measure_extension_constants(&g, &unit(), Side::Right, ReflectionParams::default(), 0.05, 2.0).unwrap();
            prop_assert!((a.l1 - b.l1).abs() <= 1e-9 * a.l1);
            prop_assert!((a.strain - b.strain).abs() <= 1e-9 * a.strain);
        }
    }
}
