//! Radial mollification `phi_k` by polar quadrature that splits rays and
//! angular panels at the break segments of the field, plus the jump
//! commutator estimate for `e(v * phi_r) - e(v) * phi_r`.

use crate::expr::{Poly2, PolyVec};
use crate::geometry::{gauss_legendre, v2, Aabb, Segment, M2, V2};
use crate::sbd_field::{frob, integrate_area, jump_sym_energy, strain, Field, JumpPiece, LocalSplit};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::TAU;
use std::sync::OnceLock;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MollifyError {
    #[error("region needs a margin of {need} inside the field's domain, found {have}")]
    InsufficientMargin { need: f64, have: f64 },
    #[error("mollification scale must be positive")]
    BadScale,
}

const RADIAL_BREAKS: [f64; 7] = [0.0, 0.45, 0.68, 0.82, 0.91, 0.965, 1.0];
const GAUSS_N: usize = 8;
const BASE_ANGLES: usize = 64;
const MAX_PANEL: f64 = TAU / 16.0;

/// Unnormalized bump `exp(-1 / (1 - r^2))`.
pub fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// Derivative of [`bump`] in `r`.
pub fn bump_dr(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        let s = 1.0 - r * r;
        bump(r) * (-2.0 * r / (s * s))
    }
}

fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(GAUSS_N))
}

/// The tensor rule on the unit disk and the normalization of the bump.
#[derive(Debug)]
pub struct PolarRule {
    /// Radial nodes and weights for `int_0^1 g(r) dr`.
    pub radial: Vec<(f64, f64)>,
    /// `Z` such that `Z * bump` has unit mass under this rule.
    pub z: f64,
    /// Discrete even moments `int |x|^{2j} phi dx`, `j = 0..=4`.
    pub moments: [f64; 5],
}

fn push_panel(a: f64, b: f64, out: &mut Vec<(f64, f64)>) {
    let (x, w) = gl8();
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    for i in 0..GAUSS_N {
        out.push((m + h * x[i], h * w[i]));
    }
}

impl PolarRule {
    pub fn get() -> &'static PolarRule {
        static R: OnceLock<PolarRule> = OnceLock::new();
        R.get_or_init(|| {
            let mut radial = Vec::new();
            for w in RADIAL_BREAKS.windows(2) {
                push_panel(w[0], w[1], &mut radial);
            }
            let mass: f64 = radial.iter().map(|&(r, w)| w * r * bump(r)).sum::<f64>() * TAU;
            let z = 1.0 / mass;
            let mut moments = [0.0; 5];
            for (j, m) in moments.iter_mut().enumerate() {
                *m = radial.iter().map(|&(r, w)| w * r * z * bump(r) * r.powi(2 * j as i32)).sum::<f64>() * TAU;
            }
            PolarRule { radial, z, moments }
        })
    }

    /// Normalized profile `phi(r)`.
    pub fn phi(&self, r: f64) -> f64 {
        self.z * bump(r)
    }

    pub fn dphi(&self, r: f64) -> f64 {
        self.z * bump_dr(r)
    }
}

/// `phi_k(x) = k^2 phi(k x)`; `k` may be any positive real scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Mollifier {
    pub k: f64,
}

/// Adaptive composite Gauss integral on `[a, b]`.
pub fn adaptive_integral<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let l = gauss_on(f, a, m);
        let r = gauss_on(f, m, b);
        if depth == 0 || (l + r - whole).abs() <= tol {
            l + r
        } else {
            rec(f, a, m, l, 0.5 * tol, depth - 1) + rec(f, m, b, r, 0.5 * tol, depth - 1)
        }
    }
    fn gauss_on<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
        let (x, w) = gl8();
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        (0..GAUSS_N).map(|i| w[i] * f(m + h * x[i])).sum::<f64>() * h
    }
    let whole = gauss_on(f, a, b);
    rec(f, a, b, whole, tol, 40)
}

impl Mollifier {
    pub fn new(k: f64) -> Result<Self, MollifyError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(MollifyError::BadScale);
        }
        Ok(Mollifier { k })
    }

    pub fn radius(&self) -> f64 {
        1.0 / self.k
    }

    /// `phi_k` at a point.
    pub fn kernel(&self, x: V2) -> f64 {
        self.k * self.k * PolarRule::get().phi(self.k * x.norm())
    }

    /// Mass of `Z * bump` by adaptive quadrature (independent of the polar rule).
    pub fn mass_check() -> f64 {
        let z = PolarRule::get().z;
        TAU * adaptive_integral(&|r| r * z * bump(r), 0.0, 1.0, 1e-15)
    }

    /// `||phi||_{L^p(B_1)}^p` at unit scale.
    pub fn phi_lp_p(p: f64) -> f64 {
        let z = PolarRule::get().z;
        TAU * adaptive_integral(&|r| r * (z * bump(r)).powf(p), 0.0, 1.0, 1e-15)
    }

    /// `P * phi_k` for a polynomial, through the even moments of the rule.
    pub fn convolve_poly(&self, p: &Poly2) -> Poly2 {
        let m = &PolarRule::get().moments;
        let mut acc = *p;
        let mut lap = *p;
        let mut fact = 1.0;
        for j in 1..=4 {
            lap = lap.laplacian();
            if lap.is_zero() {
                break;
            }
            fact *= (j * j) as f64 * 4.0;
            acc = acc.add(&lap.scale(m[j] / (fact * self.k.powi(2 * j as i32))));
        }
        acc
    }

    pub fn convolve_polyvec(&self, p: &PolyVec) -> PolyVec {
        PolyVec([self.convolve_poly(&p.0[0]), self.convolve_poly(&p.0[1])])
    }

    /// Breaks of `f` within the kernel support, in unit-disk coordinates.
    fn local_breaks(&self, f: &dyn Field, x: V2) -> Vec<Segment> {
        let r = self.radius();
        let mut segs = Vec::new();
        f.breaks(&Aabb::around(x, r), &mut segs);
        segs.into_iter()
            .map(|s| Segment::new((s.a - x) * self.k, (s.b - x) * self.k))
            .filter(|s| s.length() > 0.0 && s.distance(V2::zeros()) < 1.0)
            .collect()
    }

    /// Sum `weight * g(point, r, e)` over the split polar rule at `x`.
    fn quad<G: FnMut(V2, f64, V2, f64)>(&self, f: &dyn Field, x: V2, g: G) {
        self.quad_with(&self.local_breaks(f, x), x, g)
    }

    /// The chord of a split line in unit-disk coordinates around `x`.
    fn split_breaks(&self, sp: &LocalSplit, x: V2) -> Vec<Segment> {
        let o = (sp.origin - x) * self.k;
        let n = sp.normal;
        let foot = n * o.dot(&n);
        let h2 = 1.0 - foot.norm_squared();
        if h2 <= 0.0 {
            return Vec::new();
        }
        let d = v2(-n.y, n.x) * h2.sqrt();
        vec![Segment::new(foot - d, foot + d)]
    }

    fn quad_with<G: FnMut(V2, f64, V2, f64)>(&self, breaks: &[Segment], x: V2, mut g: G) {
        let rule = PolarRule::get();
        let rad = self.radius();
        if breaks.is_empty() {
            let wt = TAU / BASE_ANGLES as f64;
            for j in 0..BASE_ANGLES {
                let th = TAU * (j as f64 + 0.5) / BASE_ANGLES as f64;
                let e = v2(th.cos(), th.sin());
                for &(r, w) in &rule.radial {
                    g(x + e * (rad * r), r, e, w * wt * r);
                }
            }
            return;
        }
        let mut angles = vec![0.0, TAU];
        let norm_angle = |a: f64| a.rem_euclid(TAU);
        for s in breaks {
            for p in [s.a, s.b] {
                if p.norm() < 1.0 && p.norm() > 0.0 {
                    angles.push(norm_angle(p.y.atan2(p.x)));
                }
            }
            let dir = s.direction();
            let nrm = v2(-dir.y, dir.x);
            let mut d = s.a.dot(&nrm);
            let mut foot = nrm;
            if d < 0.0 {
                d = -d;
                foot = -nrm;
            }
            let th0 = foot.y.atan2(foot.x);
            for lev in [1.0, 0.8, 0.6, 0.4, 0.25, 0.12, 0.05, 0.02] {
                if lev > d {
                    let a = (d / lev).acos();
                    angles.push(norm_angle(th0 + a));
                    angles.push(norm_angle(th0 - a));
                }
            }
        }
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
        let mut thetas = Vec::new();
        for w in angles.windows(2) {
            let (a, b) = (w[0], w[1]);
            let n = ((b - a) / MAX_PANEL).ceil().max(1.0) as usize;
            for i in 0..n {
                push_panel(a + (b - a) * i as f64 / n as f64, a + (b - a) * (i + 1) as f64 / n as f64, &mut thetas);
            }
        }
        let mut cuts = Vec::with_capacity(16);
        let mut radial = Vec::with_capacity(64);
        for &(th, wt) in &thetas {
            let e = v2(th.cos(), th.sin());
            cuts.clear();
            cuts.extend_from_slice(&RADIAL_BREAKS);
            let ray = Segment::new(V2::zeros(), e);
            for s in breaks {
                if let Some((t, _)) = ray.intersect_param(s) {
                    if t > 0.0 && t < 1.0 {
                        cuts.push(t);
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
            radial.clear();
            for w in cuts.windows(2) {
                push_panel(w[0], w[1], &mut radial);
            }
            for &(r, w) in &radial {
                g(x + e * (rad * r), r, e, w * wt * r);
            }
        }
    }

    /// `(f * phi_k)(x)`.
    pub fn convolve(&self, f: &dyn Field, x: V2) -> V2 {
        if let Some(p) = f.local_poly(x, self.radius()) {
            return self.convolve_polyvec(&p).eval(x);
        }
        let rule = PolarRule::get();
        let mut acc = V2::zeros();
        if let Some(sp) = f.local_split(x, self.radius()) {
            self.quad_with(&self.split_breaks(&sp, x), x, |y, r, _, w| acc += sp.eval(y) * (w * rule.phi(r)));
            return acc;
        }
        self.quad(f, x, |y, r, _, w| acc += f.value(y) * (w * rule.phi(r)));
        acc
    }

    /// Value and Jacobian of `f * phi_k` at `x`, the Jacobian through the
    /// derivative of the kernel (so it carries the jump part of `Df`).
    pub fn convolve_jet(&self, f: &dyn Field, x: V2) -> (V2, M2) {
        if let Some(p) = f.local_poly(x, self.radius()) {
            let q = self.convolve_polyvec(&p);
            return (q.eval(x), q.jacobian(x));
        }
        let rule = PolarRule::get();
        let mut val = V2::zeros();
        let mut jac = M2::zeros();
        let k = self.k;
        let split = f.local_split(x, self.radius());
        let breaks = match &split {
            Some(sp) => self.split_breaks(sp, x),
            None => self.local_breaks(f, x),
        };
        self.quad_with(&breaks, x, |y, r, e, w| {
            let v = match &split {
                Some(sp) => sp.eval(y),
                None => f.value(y),
            };
            val += v * (w * rule.phi(r));
            jac -= v * e.transpose() * (w * k * rule.dphi(r));
        });
        (val, jac)
    }

    /// `(grad f) * phi_k` at `x`, with `grad f` the pointwise gradient.
    pub fn convolve_gradient(&self, f: &dyn Field, x: V2) -> M2 {
        if let Some(p) = f.local_poly(x, self.radius()) {
            let q = self.convolve_polyvec(&p);
            return q.jacobian(x);
        }
        let rule = PolarRule::get();
        let mut acc = M2::zeros();
        if let Some(sp) = f.local_split(x, self.radius()) {
            self.quad_with(&self.split_breaks(&sp, x), x, |y, r, _, w| acc += sp.jacobian(y) * (w * rule.phi(r)));
            return acc;
        }
        self.quad(f, x, |y, r, _, w| acc += f.gradient(y) * (w * rule.phi(r)));
        acc
    }
}

/// `f * phi_k` as a smooth field.
#[derive(Clone, Debug)]
pub struct MollifiedField<F: Field> {
    pub inner: F,
    pub m: Mollifier,
}

impl<F: Field> MollifiedField<F> {
    pub fn new(inner: F, m: Mollifier) -> Self {
        MollifiedField { inner, m }
    }
}

impl<F: Field> Field for MollifiedField<F> {
    fn value(&self, x: V2) -> V2 {
        self.m.convolve(&self.inner, x)
    }
    fn gradient(&self, x: V2) -> M2 {
        self.m.convolve_jet(&self.inner, x).1
    }
    fn jumps(&self, _: &Aabb, _: &mut Vec<JumpPiece>) {}
    fn local_poly(&self, c: V2, r: f64) -> Option<PolyVec> {
        self.inner.local_poly(c, r + self.m.radius()).map(|p| self.m.convolve_polyvec(&p))
    }
    fn one_sided(&self, x: V2, _: V2) -> (V2, V2) {
        let v = self.value(x);
        (v, v)
    }
}

/// Mollify `f` on `region`, checking that `f` is defined on `region + B(0, 1/k)`.
pub fn mollify<F: Field>(f: F, m: Mollifier, region: &Aabb, defined_on: Option<&Aabb>) -> Result<MollifiedField<F>, MollifyError> {
    if let Some(d) = defined_on {
        let have = (region.min.x - d.min.x)
            .min(region.min.y - d.min.y)
            .min(d.max.x - region.max.x)
            .min(d.max.y - region.max.y);
        if have < m.radius() {
            return Err(MollifyError::InsufficientMargin { need: m.radius(), have });
        }
    }
    Ok(MollifiedField::new(f, m))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CommutatorReport {
    pub lhs: f64,
    pub rhs: f64,
    pub jump_measure: f64,
    pub holds: bool,
}

/// Both sides of the commutator estimate on `Q = c + (-2r, 2r)^2` and
/// `Q' = c + (-r, r)^2` with `r = 1/k`.
pub fn commutator_bound(f: &dyn Field, m: &Mollifier, center: V2, p: f64, h: f64) -> CommutatorReport {
    commutator_bounds(f, m, center, &[p], h)[0]
}

/// `commutator_bound` for several exponents, sharing the convolutions.
pub fn commutator_bounds(f: &dyn Field, m: &Mollifier, center: V2, ps: &[f64], h: f64) -> Vec<CommutatorReport> {
    let r = m.radius();
    let q = Aabb::around(center, 2.0 * r);
    let inner = Aabb::around(center, r);
    let nx = ((inner.width() / h).round() as usize).max(1);
    let dx = inner.width() / nx as f64;
    let dens: Vec<f64> = (0..nx * nx)
        .into_par_iter()
        .map(|i| {
            let x = v2(inner.min.x + ((i % nx) as f64 + 0.5) * dx, inner.min.y + ((i / nx) as f64 + 0.5) * dx);
            commutator_density(f, m, x)
        })
        .collect();
    let mut pieces = Vec::new();
    f.jumps(&q, &mut pieces);
    let clipped: Vec<JumpPiece> =
        pieces.iter().filter_map(|pc| pc.seg.clip_aabb(&q).map(|s| JumpPiece::new(s, pc.normal))).collect();
    let ej = jump_sym_energy(f, &clipped);
    ps.iter()
        .map(|&p| {
            let lhs = dens.iter().map(|d| d.powf(p)).sum::<f64>() * dx * dx;
            let rhs = Mollifier::phi_lp_p(p) * r.powf(-2.0 * (p - 1.0)) * ej.powf(p);
            CommutatorReport { lhs, rhs, jump_measure: ej, holds: lhs <= rhs * (1.0 + 1e-6) }
        })
        .collect()
}

/// `e(f * phi) - e(f) * phi` evaluated pointwise, for diagnostics.
pub fn commutator_density(f: &dyn Field, m: &Mollifier, x: V2) -> f64 {
    let (_, jac) = m.convolve_jet(f, x);
    frob(&(crate::sbd_field::sym(&jac) - crate::sbd_field::sym(&m.convolve_gradient(f, x))))
}

/// Strain of the mollified field (for tests that compare with `e(f) * phi`).
pub fn strain_of_mollified(f: &dyn Field, m: &Mollifier, x: V2) -> M2 {
    crate::sbd_field::sym(&m.convolve_jet(f, x).1)
}

pub fn area_strain_l1(f: &dyn Field, region: &Aabb, h: f64) -> f64 {
    integrate_area(region, h, |x| frob(&strain(f, x)))
}
