//! Cohesive phase-field energy on P1 grids: the constants of the limit,
//! the epsilon-functional, alternating minimization and the epsilon sweep.
//!
//! `F_eps(u, v) = int v |e(u)|^2 + psi(v) / eps + eps^(p-1) |grad v|^p`
//! with `eps <= v <= 1`, and the limit
//! `F(u) = int |e(u)|^2 + a H1(J_u) + b int_{J_u} |[u] (.) nu|`.

use crate::geometry::{v2, Aabb, M2, V2};
use crate::mollify::adaptive_integral;
use crate::sbd_field::{frob, jump_sym_energy, lp_strain_norm, sym, Field, SbdField};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PhaseError {
    #[error("p must exceed 1, got {0}")]
    Exponent(f64),
    #[error("psi(1) must vanish, got {0}")]
    PsiAtOne(f64),
    #[error("psi must be nonincreasing: psi({s0}) = {v0} < psi({s1}) = {v1}")]
    PsiIncreasing { s0: f64, v0: f64, s1: f64, v1: f64 },
    #[error("psi is negative at {0}")]
    PsiNegative(f64),
    #[error("eps must lie in (0, 1), got {0}")]
    Epsilon(f64),
    #[error("grid spacing {h} exceeds eps/8 = {limit}")]
    Spacing { h: f64, limit: f64 },
    #[error("dimension must be 1 or 2, got {0}")]
    Dimension(u32),
    #[error("length must be positive, got {0}")]
    Length(f64),
    #[error("unknown spacing rule {0:?} (use a number or \"eps/N\")")]
    HRule(String),
    #[error("v = {v} at node {node} leaves [eps, 1] = [{eps}, 1]")]
    PhaseBounds { node: usize, v: f64, eps: f64 },
    #[error("window {window} eps does not fit in the bar of length {length}")]
    Window { window: f64, length: f64 },
}

// ---------------------------------------------------------------- psi

/// Degradation profile on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Psi {
    /// `1 - s`
    Linear,
    /// `scale (1 - s)^exponent`
    Power { scale: f64, exponent: f64 },
    Zero,
}

impl Psi {
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            Psi::Linear => 1.0 - s,
            Psi::Power { scale, exponent } => scale * (1.0 - s).max(0.0).powf(exponent),
            Psi::Zero => 0.0,
        }
    }

    pub fn deriv(&self, s: f64) -> f64 {
        match *self {
            Psi::Linear => -1.0,
            Psi::Power { scale, exponent } => {
                let t = (1.0 - s).max(0.0);
                if t == 0.0 && exponent < 1.0 {
                    f64::NEG_INFINITY
                } else {
                    -scale * exponent * t.powf(exponent - 1.0)
                }
            }
            Psi::Zero => 0.0,
        }
    }

    /// `(alpha, beta)` with `psi(s) = alpha + beta s`, when affine.
    pub fn affine(&self) -> Option<(f64, f64)> {
        match *self {
            Psi::Linear => Some((1.0, -1.0)),
            Psi::Power { scale, exponent } if exponent == 1.0 => Some((scale, -scale)),
            Psi::Power { scale, .. } if scale == 0.0 => Some((0.0, 0.0)),
            Psi::Zero => Some((0.0, 0.0)),
            _ => None,
        }
    }

    /// `psi(1) = 0`, `psi >= 0` and nonincreasing on 64 samples.
    pub fn check(&self) -> Result<(), PhaseError> {
        let one = self.eval(1.0);
        if one.abs() > 1e-12 {
            return Err(PhaseError::PsiAtOne(one));
        }
        let n = 64;
        let s: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        for w in s.windows(2) {
            let (v0, v1) = (self.eval(w[0]), self.eval(w[1]));
            if v0 < 0.0 || !v0.is_finite() {
                return Err(PhaseError::PsiNegative(w[0]));
            }
            if v1 > v0 + 1e-12 {
                return Err(PhaseError::PsiIncreasing { s0: w[0], v0, s1: w[1], v1 });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- constants

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CohesiveConstants {
    pub a: f64,
    pub b: f64,
    pub psi: Psi,
    pub p: f64,
}

/// `a = 2 p^(1/p) p'^(1/p') int_0^1 psi^(1/p)` and `b = 2 sqrt(psi(0))`.
pub fn constants(psi: Psi, p: f64) -> Result<CohesiveConstants, PhaseError> {
    if !(p > 1.0) {
        return Err(PhaseError::Exponent(p));
    }
    psi.check()?;
    let q = p / (p - 1.0);
    // s = 1 - t^2 smooths the endpoint behaviour of psi^(1/p) at s = 1
    let g = |t: f64| psi.eval(1.0 - t * t).max(0.0).powf(1.0 / p) * 2.0 * t;
    let integral = adaptive_integral(&g, 0.0, 1.0, 1e-12);
    let a = 2.0 * p.powf(1.0 / p) * q.powf(1.0 / q) * integral;
    let b = 2.0 * psi.eval(0.0).max(0.0).sqrt();
    Ok(CohesiveConstants { a, b, psi, p })
}

/// `int |e(u)|^2 + a H1(J_u) + b int |[u] (.) nu|`.
pub fn eval_f_limit(f: &SbdField, c: &CohesiveConstants) -> f64 {
    let pieces = f.jump_pieces();
    let elastic = lp_strain_norm(f, 2.0).powi(2);
    let length: f64 = pieces.iter().map(|p| p.seg.length()).sum();
    elastic + c.a * length + c.b * jump_sym_energy(f, &pieces)
}

// ---------------------------------------------------------------- mesh

#[derive(Clone, Debug)]
struct Elem {
    nodes: [usize; 3],
    count: usize,
    grads: [V2; 3],
    measure: f64,
}

/// Segments on a line or right triangles on a rectangle, P1 on each.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub dim: u32,
    pub nodes: Vec<V2>,
    pub h: f64,
    pub bbox: Aabb,
    elems: Vec<Elem>,
}

impl Mesh {
    /// Uniform grid on `[x0, x1]` with spacing at most `h`.
    pub fn line(x0: f64, x1: f64, h: f64) -> Mesh {
        let n = ((x1 - x0) / h).ceil().max(1.0) as usize;
        let dx = (x1 - x0) / n as f64;
        let nodes = (0..=n).map(|i| v2(x0 + i as f64 * dx, 0.0)).collect();
        let elems = (0..n)
            .map(|i| Elem { nodes: [i, i + 1, 0], count: 2, grads: [v2(-1.0 / dx, 0.0), v2(1.0 / dx, 0.0), V2::zeros()], measure: dx })
            .collect();
        Mesh { dim: 1, nodes, h: dx, bbox: Aabb::new(v2(x0, 0.0), v2(x1, 0.0)), elems }
    }

    /// Uniform grid on `bx`, each square cut along its rising diagonal.
    pub fn rect(bx: &Aabb, h: f64) -> Mesh {
        let nx = (bx.width() / h).ceil().max(1.0) as usize;
        let ny = (bx.height() / h).ceil().max(1.0) as usize;
        let (dx, dy) = (bx.width() / nx as f64, bx.height() / ny as f64);
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push(v2(bx.min.x + i as f64 * dx, bx.min.y + j as f64 * dy));
            }
        }
        let mut elems = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                for tri in [[id(i, j), id(i + 1, j), id(i + 1, j + 1)], [id(i, j), id(i + 1, j + 1), id(i, j + 1)]] {
                    elems.push(triangle(&nodes, tri));
                }
            }
        }
        Mesh { dim: 2, nodes, h: dx.max(dy), bbox: *bx, elems }
    }

    pub fn elem_count(&self) -> usize {
        self.elems.len()
    }

    fn strain(&self, e: &Elem, u: &[V2]) -> M2 {
        let mut g = M2::zeros();
        for k in 0..e.count {
            g += u[e.nodes[k]] * e.grads[k].transpose();
        }
        sym(&g)
    }

    fn grad(&self, e: &Elem, v: &[f64]) -> V2 {
        (0..e.count).map(|k| e.grads[k] * v[e.nodes[k]]).sum()
    }

    fn mean(&self, e: &Elem, v: &[f64]) -> f64 {
        (0..e.count).map(|k| v[e.nodes[k]]).sum::<f64>() / e.count as f64
    }
}

fn triangle(nodes: &[V2], t: [usize; 3]) -> Elem {
    let p = [nodes[t[0]], nodes[t[1]], nodes[t[2]]];
    let twice = (p[1] - p[0]).perp(&(p[2] - p[0]));
    let mut grads = [V2::zeros(); 3];
    for k in 0..3 {
        let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
        grads[k] = v2(a.y - b.y, b.x - a.x) / twice;
    }
    Elem { nodes: t, count: 3, grads, measure: 0.5 * twice.abs() }
}

// ---------------------------------------------------------------- sparse algebra

struct Csr {
    ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Csr {
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut ptr = vec![0; n + 1];
        let mut col = Vec::with_capacity(t.len());
        let mut val: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (r, c, x) in t {
            if last == Some((r, c)) {
                *val.last_mut().expect("entry") += x;
            } else {
                col.push(c);
                val.push(x);
                ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            ptr[i + 1] += ptr[i];
        }
        Csr { ptr, col, val }
    }

    fn n(&self) -> usize {
        self.ptr.len() - 1
    }

    fn mul(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().with_min_len(256).enumerate().for_each(|(i, yi)| {
            *yi = (self.ptr[i]..self.ptr[i + 1]).map(|k| self.val[k] * x[self.col[k]]).sum();
        });
    }

    fn diag(&self) -> Vec<f64> {
        (0..self.n()).map(|i| (self.ptr[i]..self.ptr[i + 1]).find(|&k| self.col[k] == i).map_or(0.0, |k| self.val[k])).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients. Returns the relative residual.
fn pcg(a: &Csr, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> f64 {
    let n = b.len();
    let bn = dot(b, b).sqrt();
    if bn == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return 0.0;
    }
    let d: Vec<f64> = a.diag().into_iter().map(|v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect();
    let mut r = vec![0.0; n];
    a.mul(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&d).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for _ in 0..max_iter {
        if dot(&r, &r).sqrt() <= tol * bn {
            break;
        }
        a.mul(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        for i in 0..n {
            z[i] = r[i] * d[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    a.mul(x, &mut q);
    (0..n).map(|i| (b[i] - q[i]).powi(2)).sum::<f64>().sqrt() / bn
}

// ---------------------------------------------------------------- state

#[derive(Clone, Debug)]
pub struct PhaseFieldState {
    pub mesh: Mesh,
    pub u: Vec<V2>,
    pub v: Vec<f64>,
    /// Nodes where `u` is prescribed (both components).
    pub fixed: Vec<bool>,
    pub eps: f64,
    pub psi: Psi,
    pub p: f64,
}

impl PhaseFieldState {
    /// `u = 0`, `v = 1`, nothing prescribed.
    pub fn new(mesh: Mesh, eps: f64, psi: Psi, p: f64) -> Result<Self, PhaseError> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(PhaseError::Epsilon(eps));
        }
        if !(p > 1.0) {
            return Err(PhaseError::Exponent(p));
        }
        psi.check()?;
        let n = mesh.nodes.len();
        Ok(PhaseFieldState { mesh, u: vec![V2::zeros(); n], v: vec![1.0; n], fixed: vec![false; n], eps, psi, p })
    }

    /// Nodal samples of a field on its own rectangle.
    pub fn from_field(f: &SbdField, h: f64, eps: f64, psi: Psi, p: f64) -> Result<Self, PhaseError> {
        let mut s = Self::new(Mesh::rect(&f.bbox(), h), eps, psi, p)?;
        for (u, x) in s.u.iter_mut().zip(&s.mesh.nodes) {
            *u = f.value(*x);
        }
        Ok(s)
    }

    pub fn spacing(&self) -> f64 {
        self.mesh.h
    }

    pub fn check(&self) -> Result<(), PhaseError> {
        self.psi.check()?;
        if !(self.p > 1.0) {
            return Err(PhaseError::Exponent(self.p));
        }
        for (node, &v) in self.v.iter().enumerate() {
            if !(v >= self.eps - 1e-12 && v <= 1.0 + 1e-12) {
                return Err(PhaseError::PhaseBounds { node, v, eps: self.eps });
            }
        }
        Ok(())
    }

    /// `[int v |e(u)|^2, int psi(v) / eps, int eps^(p-1) |grad v|^p]`.
    pub fn energy_terms(&self) -> [f64; 3] {
        let m = &self.mesh;
        let (eps, p) = (self.eps, self.p);
        m.elems
            .par_iter()
            .map(|e| {
                let vb = m.mean(e, &self.v);
                let s = frob(&m.strain(e, &self.u)).powi(2);
                let g = m.grad(e, &self.v).norm();
                [e.measure * vb * s, e.measure * self.psi.eval(vb) / eps, e.measure * eps.powf(p - 1.0) * g.powf(p)]
            })
            .reduce(|| [0.0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
    }
}

/// Midpoint quadrature of `F_eps` on the elements.
pub fn eval_f_eps(state: &PhaseFieldState) -> f64 {
    state.energy_terms().iter().sum()
}

// ---------------------------------------------------------------- minimization

#[derive(Clone, Copy, Debug)]
pub struct MinimizeOptions {
    /// Relative residual of the u-step.
    pub u_tol: f64,
    /// Stop once an outer iteration lowers the energy by less than this, relative.
    pub rel_stop: f64,
    pub max_outer: usize,
    /// Iterations of the projected-gradient v-step.
    pub pg_steps: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { u_tol: 1e-9, rel_stop: 1e-8, max_outer: 500, pg_steps: 200 }
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeOutcome {
    pub state: PhaseFieldState,
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Energy after every outer iteration, starting with the initial state.
    pub history: Vec<f64>,
    /// Relative residual of the weighted elasticity equations at the returned state.
    pub u_residual: f64,
}

/// Minimize over `u` with `v` fixed; returns the relative residual.
fn u_step(s: &mut PhaseFieldState, tol: f64) -> f64 {
    let m = &s.mesh;
    let n = m.nodes.len();
    // free dof numbering
    let mut index = vec![usize::MAX; 2 * n];
    let mut free = 0;
    for i in 0..n {
        if !s.fixed[i] {
            index[2 * i] = free;
            index[2 * i + 1] = free + 1;
            free += 2;
        }
    }
    if free == 0 {
        return 0.0;
    }
    let mut trip = Vec::with_capacity(m.elems.len() * 36);
    let mut rhs = vec![0.0; free];
    let basis = |g: V2, c: usize| -> M2 {
        let mut a = M2::zeros();
        a[(c, 0)] = g.x;
        a[(c, 1)] = g.y;
        sym(&a)
    };
    for e in &m.elems {
        let w = e.measure * m.mean(e, &s.v);
        let mut dofs = [(0usize, M2::zeros()); 6];
        for k in 0..e.count {
            for c in 0..2 {
                dofs[2 * k + c] = (2 * e.nodes[k] + c, basis(e.grads[k], c));
            }
        }
        let dofs = &dofs[..2 * e.count];
        for &(di, ei) in dofs {
            let row = index[di];
            if row == usize::MAX {
                continue;
            }
            for &(dj, ej) in dofs {
                let kij = w * ei.component_mul(&ej).sum();
                let col = index[dj];
                if col == usize::MAX {
                    rhs[row] -= kij * s.u[dj / 2][dj % 2];
                } else {
                    trip.push((row, col, kij));
                }
            }
        }
    }
    let a = Csr::from_triplets(free, trip);
    let mut x = vec![0.0; free];
    for i in 0..n {
        if !s.fixed[i] {
            x[index[2 * i]] = s.u[i].x;
            x[index[2 * i + 1]] = s.u[i].y;
        }
    }
    let res = pcg(&a, &rhs, &mut x, tol, 20 * free + 100);
    for i in 0..n {
        if !s.fixed[i] {
            s.u[i] = v2(x[index[2 * i]], x[index[2 * i + 1]]);
        }
    }
    res
}

/// Squared strain per element.
fn strain_energy_density(s: &PhaseFieldState) -> Vec<f64> {
    s.mesh.elems.par_iter().map(|e| frob(&s.mesh.strain(e, &s.u)).powi(2)).collect()
}

/// Exact v-step for `p = 2` and affine `psi`: a bound-constrained quadratic
/// solved by primal-dual active sets.
fn v_step_quadratic(s: &mut PhaseFieldState, alpha_beta: (f64, f64)) {
    let m = &s.mesh;
    let n = m.nodes.len();
    let (lo, hi) = (s.eps, 1.0);
    let dens = strain_energy_density(s);
    let beta = alpha_beta.1;
    let mut g = vec![0.0; n];
    let mut trip = Vec::with_capacity(m.elems.len() * 9);
    for (e, se) in m.elems.iter().zip(&dens) {
        let lin = e.measure * (se + beta / s.eps) / e.count as f64;
        for a in 0..e.count {
            g[e.nodes[a]] += lin;
            for b in 0..e.count {
                trip.push((e.nodes[a], e.nodes[b], 2.0 * s.eps * e.measure * e.grads[a].dot(&e.grads[b])));
            }
        }
    }
    let hm = Csr::from_triplets(n, trip);
    let d = hm.diag();
    let mut v = s.v.clone();
    let mut r = vec![0.0; n];
    let mut state = vec![0i8; n];
    for it in 0..100 {
        hm.mul(&v, &mut r);
        for i in 0..n {
            r[i] += g[i];
        }
        let mut next = vec![0i8; n];
        for i in 0..n {
            let t = v[i] - r[i] / d[i].max(f64::MIN_POSITIVE);
            next[i] = if t <= lo {
                -1
            } else if t >= hi {
                1
            } else {
                0
            };
        }
        if it > 0 && next == state {
            break;
        }
        state = next;
        // solve on the free nodes with the active ones clamped
        let mut index = vec![usize::MAX; n];
        let mut free = 0;
        for i in 0..n {
            match state[i] {
                -1 => v[i] = lo,
                1 => v[i] = hi,
                _ => {
                    index[i] = free;
                    free += 1;
                }
            }
        }
        if free == 0 {
            continue;
        }
        let mut sub = Vec::new();
        let mut rhs = vec![0.0; free];
        for i in 0..n {
            let ri = index[i];
            if ri == usize::MAX {
                continue;
            }
            rhs[ri] -= g[i];
            for k in hm.ptr[i]..hm.ptr[i + 1] {
                let j = hm.col[k];
                if index[j] == usize::MAX {
                    rhs[ri] -= hm.val[k] * v[j];
                } else {
                    sub.push((ri, index[j], hm.val[k]));
                }
            }
        }
        let a = Csr::from_triplets(free, sub);
        let mut x: Vec<f64> = (0..n).filter(|&i| index[i] != usize::MAX).map(|i| v[i]).collect();
        pcg(&a, &rhs, &mut x, 1e-12, 20 * free + 100);
        for i in 0..n {
            if index[i] != usize::MAX {
                v[i] = x[index[i]];
            }
        }
    }
    for x in v.iter_mut() {
        *x = x.clamp(lo, hi);
    }
    s.v = v;
}

/// v-energy and its gradient with `u` fixed.
fn v_energy_grad(s: &PhaseFieldState, dens: &[f64], v: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let m = &s.mesh;
    let (eps, p) = (s.eps, s.p);
    let c = eps.powf(p - 1.0);
    let mut total = 0.0;
    let mut gr = grad;
    if let Some(g) = gr.as_deref_mut() {
        g.iter_mut().for_each(|x| *x = 0.0);
    }
    for (e, se) in m.elems.iter().zip(dens) {
        let vb = m.mean(e, v);
        let gv = m.grad(e, v);
        let gn = gv.norm();
        total += e.measure * (vb * se + s.psi.eval(vb) / eps + c * gn.powf(p));
        if let Some(g) = gr.as_deref_mut() {
            let lin = e.measure * (se + s.psi.deriv(vb) / eps) / e.count as f64;
            let flux = if gn > 0.0 { gv * (c * p * gn.powf(p - 2.0)) } else { V2::zeros() };
            for k in 0..e.count {
                g[e.nodes[k]] += lin + e.measure * flux.dot(&e.grads[k]);
            }
        }
    }
    total
}

/// Projected gradient with backtracking onto `[eps, 1]`.
fn v_step_projected(s: &mut PhaseFieldState, steps: usize) {
    let n = s.v.len();
    let dens = strain_energy_density(s);
    let mut v = s.v.clone();
    let mut g = vec![0.0; n];
    let mut e = v_energy_grad(s, &dens, &v, Some(&mut g));
    let mut step = s.mesh.h.powi(s.mesh.dim as i32);
    for _ in 0..steps {
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = v.iter().zip(&g).map(|(x, d)| (x - step * d).clamp(s.eps, 1.0)).collect();
            let moved: f64 = trial.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum();
            if moved == 0.0 {
                break;
            }
            let et = v_energy_grad(s, &dens, &trial, None);
            if et <= e - 1e-4 / step * moved {
                v = trial;
                e = v_energy_grad(s, &dens, &v, Some(&mut g));
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    s.v = v;
}

/// Alternating minimization: u by conjugate gradients, then v, repeated.
pub fn minimize_f_eps(initial: PhaseFieldState, opts: &MinimizeOptions) -> Result<MinimizeOutcome, PhaseError> {
    initial.check()?;
    let limit = initial.eps / 8.0;
    if initial.spacing() > limit * (1.0 + 1e-9) {
        return Err(PhaseError::Spacing { h: initial.spacing(), limit });
    }
    let mut s = initial;
    let mut energy = eval_f_eps(&s);
    let mut history = vec![energy];
    let mut converged = false;
    let mut iterations = 0;
    let quadratic = if s.p == 2.0 { s.psi.affine() } else { None };
    while iterations < opts.max_outer {
        iterations += 1;
        let before = energy;

        let keep_u = s.u.clone();
        u_step(&mut s, opts.u_tol);
        let eu = eval_f_eps(&s);
        if eu > energy {
            s.u = keep_u;
        } else {
            energy = eu;
        }

        let keep_v = s.v.clone();
        match quadratic {
            Some(ab) => v_step_quadratic(&mut s, ab),
            None => v_step_projected(&mut s, opts.pg_steps),
        }
        let mut ev = eval_f_eps(&s);
        if quadratic.is_some() && ev > energy {
            // active-set cycling: fall back to the monotone scheme
            s.v = keep_v.clone();
            v_step_projected(&mut s, opts.pg_steps);
            ev = eval_f_eps(&s);
        }
        if ev > energy {
            s.v = keep_v;
        } else {
            energy = ev;
        }

        history.push(energy);
        if before - energy <= opts.rel_stop * energy.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    // finish on a u-step so the elasticity equations hold at the returned state
    let keep_u = s.u.clone();
    let u_residual = u_step(&mut s, opts.u_tol);
    let eu = eval_f_eps(&s);
    if eu > energy {
        s.u = keep_u;
    } else {
        energy = eu;
    }
    Ok(MinimizeOutcome { state: s, energy, iterations, converged, history, u_residual })
}

// ---------------------------------------------------------------- sweep

/// Grid spacing per epsilon: a number or `"eps/N"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HRule {
    Fixed(f64),
    Rule(String),
}

impl HRule {
    pub fn spacing(&self, eps: f64) -> Result<f64, PhaseError> {
        match self {
            HRule::Fixed(h) if *h > 0.0 => Ok(*h),
            HRule::Fixed(h) => Err(PhaseError::HRule(h.to_string())),
            HRule::Rule(r) => {
                let t: String = r.chars().filter(|c| !c.is_whitespace()).collect();
                let n = t.strip_prefix("eps/").and_then(|d| d.parse::<f64>().ok()).filter(|d| *d > 0.0);
                n.map(|d| eps / d).ok_or_else(|| PhaseError::HRule(r.clone()))
            }
        }
    }
}

/// The configuration the sweep is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// Step of height `delta` across the middle of the bar.
    #[default]
    Jump,
    /// Uniform stretch by `delta`.
    Elastic,
    /// `u = 0`.
    Zero,
}

fn default_window() -> f64 {
    4.0
}

/// Experiment configuration of the epsilon sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaConfig {
    pub dimension: u32,
    #[serde(rename = "L")]
    pub length: f64,
    pub delta: f64,
    pub psi: Psi,
    pub p: f64,
    pub eps_list: Vec<f64>,
    pub h_rule: HRule,
    #[serde(default)]
    pub target: Target,
    /// Half-width of the free zone around the jump, in units of eps.
    #[serde(default = "default_window")]
    pub window: f64,
}

impl GammaConfig {
    /// The single-jump bar: `delta = 1`, `psi = 1 - s`, `p = 2`, `h = eps/8`,
    /// on `[0, 2]` so the free zone fits at `eps = 1/8`.
    pub fn benchmark() -> Self {
        GammaConfig {
            dimension: 1,
            length: 2.0,
            delta: 1.0,
            psi: Psi::Linear,
            p: 2.0,
            eps_list: vec![0.125, 0.0625, 0.03125, 0.015625],
            h_rule: HRule::Rule("eps/8".into()),
            target: Target::Jump,
            window: default_window(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Limit energy of the target: per unit cross-section in 2D times the side.
    pub fn f_limit(&self, c: &CohesiveConstants) -> f64 {
        let per = match self.target {
            Target::Jump => c.a + c.b * self.delta.abs(),
            Target::Elastic => self.delta * self.delta / self.length,
            Target::Zero => 0.0,
        };
        if self.dimension == 2 {
            per * self.length
        } else {
            per
        }
    }

    /// Jump-target start with the crack already open: `u` ramps over a core of
    /// half-width `|delta| eps / 2` where `v = eps`, and `v` climbs back to 1
    /// over a further `2 eps`.
    pub fn cracked_state(&self, eps: f64) -> Result<PhaseFieldState, PhaseError> {
        let mut s = self.initial_state(eps)?;
        let w = self.window * eps;
        let core = (0.5 * self.delta.abs() * eps).clamp(0.5 * s.mesh.h, 0.5 * w);
        let reach = (2.0 * eps).min(w - core);
        let mid = 0.5 * self.length;
        for i in 0..s.v.len() {
            if s.fixed[i] {
                continue;
            }
            let x = s.mesh.nodes[i];
            let d = (x.x - mid).abs();
            let ux = if d >= core { if x.x > mid { self.delta } else { 0.0 } } else { self.delta * (x.x - mid + core) / (2.0 * core) };
            s.u[i] = v2(ux, 0.0);
            let t = ((d - core) / reach).clamp(0.0, 1.0);
            s.v[i] = 1.0 - (1.0 - eps) * (1.0 - t).powi(2);
        }
        Ok(s)
    }

    /// Initial state: `v = 1`, `u` prescribed at both ends of the bar, and
    /// for the jump target on the whole bar outside `|x - L/2| < window eps`.
    pub fn initial_state(&self, eps: f64) -> Result<PhaseFieldState, PhaseError> {
        if !(self.length > 0.0) {
            return Err(PhaseError::Length(self.length));
        }
        let h = self.h_rule.spacing(eps)?;
        let l = self.length;
        let mesh = match self.dimension {
            1 => Mesh::line(0.0, l, h),
            2 => Mesh::rect(&Aabb::new(v2(0.0, 0.0), v2(l, l)), h),
            d => return Err(PhaseError::Dimension(d)),
        };
        let mut s = PhaseFieldState::new(mesh, eps, self.psi, self.p)?;
        let mid = 0.5 * l;
        let w = self.window * eps;
        if self.target == Target::Jump && w >= mid {
            return Err(PhaseError::Window { window: self.window, length: l });
        }
        let tol = 1e-12 * l;
        for (i, x) in s.mesh.nodes.iter().enumerate() {
            let t = x.x;
            let end = t <= tol || t >= l - tol;
            match self.target {
                Target::Jump => {
                    let d = t - mid;
                    s.fixed[i] = d.abs() >= w - tol;
                    let ux = if d <= -w { 0.0 } else if d >= w { self.delta } else { self.delta * (d + w) / (2.0 * w) };
                    s.u[i] = v2(ux, 0.0);
                }
                Target::Elastic => {
                    s.fixed[i] = end;
                    s.u[i] = v2(self.delta * t / l, 0.0);
                }
                Target::Zero => {
                    s.fixed[i] = end;
                }
            }
        }
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaRow {
    pub eps: f64,
    pub energy: f64,
    pub f_limit: f64,
    /// `|energy - F| / F`, or `|energy|` when `F = 0`.
    pub rel_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl GammaRow {
    pub const CSV_HEADER: &'static str = "eps,energy,F_limit,rel_error,iterations";
}

/// Minimize `F_eps` for every eps of the sweep and compare with the limit.
/// The jump target is started both unbroken and cracked; the lower energy wins.
pub fn gamma_check(cfg: &GammaConfig, opts: &MinimizeOptions) -> Result<Vec<GammaRow>, PhaseError> {
    let c = constants(cfg.psi, cfg.p)?;
    let f = cfg.f_limit(&c);
    cfg.eps_list
        .iter()
        .map(|&eps| {
            let mut out = minimize_f_eps(cfg.initial_state(eps)?, opts)?;
            if cfg.target == Target::Jump {
                let cracked = minimize_f_eps(cfg.cracked_state(eps)?, opts)?;
                if cracked.energy < out.energy {
                    out = cracked;
                }
            }
            let rel_error = if f > 0.0 { (out.energy - f).abs() / f } else { out.energy.abs() };
            Ok(GammaRow { eps, energy: out.energy, f_limit: f, rel_error, iterations: out.iterations, converged: out.converged })
        })
        .collect()
}
