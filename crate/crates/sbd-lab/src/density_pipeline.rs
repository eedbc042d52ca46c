//! Covering the jump set by oriented cubes, splitting each cube into
//! strips with reflected fields, gluing the per-strip approximants, and
//! the convergence metrics of the glued field.

use crate::extension::{Face, Reflected, ReflectionParams};
use crate::geometry::{gauss_legendre, unmatched_length, v2, Aabb, Rect, Segment, M2, V2};
use crate::mollify::{MollifiedField, Mollifier};
use crate::rough_approx::{extract_jumps, NodeRule, RoughApproximant, RoughOptions, JUMP_TOL};
use crate::sbd_field::{frob, jump_at, merge_pieces, sym, sym_tensor_product, Field, JumpPiece, SbdField, ZeroExtended};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, OnceLock};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PipelineError {
    #[error("epsilon must lie in (0, 1/2), got {0}")]
    Epsilon(f64),
    #[error("theta must lie in (0, 1), got {0}")]
    Theta(f64),
    #[error("k must be positive")]
    BadK,
    #[error("p must exceed 1, got {0}")]
    Exponent(f64),
    #[error("cover leaves length {uncovered} (jump energy {energy}) of the jump set outside the cubes, need below {eps}")]
    Coverage { uncovered: f64, energy: f64, eps: f64 },
    #[error("k below 64/t: k = {k}, t = {t}, 64/t = {need}")]
    Scale { k: u32, t: f64, need: f64 },
    #[error("no admissible height for strip {strip} on side {side} of cube {cube}: the surface spreads {spread} over the face, limit {limit}")]
    NoHeight { cube: usize, side: usize, strip: usize, spread: f64, limit: f64 },
}

/// How the field is continued outside its rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtensionMode {
    /// Polynomials continued analytically, chains continued by rays.
    Natural,
    /// Zero outside; the boundary joins the jump set where the trace is nonzero.
    Zero,
}

/// Which part of the jump set the cubes must cover.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Selection {
    /// All of it (uncovered length below epsilon).
    Length,
    /// Segments by descending jump energy until the rest carries less than epsilon.
    Energy,
}

#[derive(Clone, Copy, Debug)]
pub struct CoverOptions {
    pub mode: ExtensionMode,
    pub selection: Selection,
    /// How far cubes may reach outside the domain.
    pub outside: f64,
    pub rho_max: f64,
    pub rho_min: f64,
}

impl Default for CoverOptions {
    fn default() -> Self {
        CoverOptions { mode: ExtensionMode::Natural, selection: Selection::Length, outside: 0.5, rho_max: 0.5, rho_min: 1e-3 }
    }
}

// ---------------------------------------------------------------- chains

#[derive(Clone, Copy, Debug)]
struct ChainPiece {
    /// Oriented along the chain.
    seg: Segment,
    normal: V2,
    chain: usize,
    s0: f64,
    boundary: bool,
}

#[derive(Clone, Debug)]
struct Chain {
    pieces: Vec<usize>,
    length: f64,
}

fn point_key(p: V2) -> (i64, i64) {
    ((p.x * 1e9).round() as i64, (p.y * 1e9).round() as i64)
}

/// Link pieces sharing endpoints into chains; vertices of degree other
/// than two end a chain.
fn link_chains(input: &[(JumpPiece, bool)]) -> (Vec<ChainPiece>, Vec<Chain>) {
    let mut ends: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, (p, _)) in input.iter().enumerate() {
        ends.entry(point_key(p.seg.a)).or_default().push(i);
        ends.entry(point_key(p.seg.b)).or_default().push(i);
    }
    let deg = |p: V2| ends.get(&point_key(p)).map_or(0, |v| v.len());
    let mut used = vec![false; input.len()];
    let mut pieces = Vec::new();
    let mut chains = Vec::new();
    let walk = |start: usize, from: V2, used: &mut Vec<bool>, pieces: &mut Vec<ChainPiece>, chains: &mut Vec<Chain>| {
        let ci = chains.len();
        let mut chain = Chain { pieces: Vec::new(), length: 0.0 };
        let mut cur = start;
        let mut at = from;
        loop {
            used[cur] = true;
            let (p, boundary) = input[cur];
            let seg = if point_key(p.seg.a) == point_key(at) { p.seg } else { Segment::new(p.seg.b, p.seg.a) };
            chain.pieces.push(pieces.len());
            pieces.push(ChainPiece { seg, normal: p.normal, chain: ci, s0: chain.length, boundary });
            chain.length += seg.length();
            at = seg.b;
            if deg(at) != 2 {
                break;
            }
            match ends[&point_key(at)].iter().copied().find(|&j| j != cur) {
                Some(j) if !used[j] => cur = j,
                _ => break,
            }
        }
        chains.push(chain);
    };
    for i in 0..input.len() {
        if used[i] {
            continue;
        }
        let s = input[i].0.seg;
        if deg(s.a) != 2 {
            walk(i, s.a, &mut used, &mut pieces, &mut chains);
        } else if deg(s.b) != 2 {
            walk(i, s.b, &mut used, &mut pieces, &mut chains);
        }
    }
    for i in 0..input.len() {
        if !used[i] {
            let a = input[i].0.seg.a;
            walk(i, a, &mut used, &mut pieces, &mut chains);
        }
    }
    (pieces, chains)
}

fn chain_point(pieces: &[ChainPiece], chain: &Chain, s: f64) -> (V2, V2) {
    let idx = chain.pieces.partition_point(|&i| pieces[i].s0 <= s).saturating_sub(1);
    let p = &pieces[chain.pieces[idx]];
    let len = p.seg.length();
    let t = ((s - p.s0) / len).clamp(0.0, 1.0);
    (p.seg.at(t), p.normal)
}

/// Closed rectangles overlapping by more than `tol`.
fn overlaps(a: &Rect, b: &Rect, tol: f64) -> bool {
    let axes = [a.tangent(), a.normal(), b.tangent(), b.normal()];
    let (ca, cb) = (a.corners(), b.corners());
    for ax in axes {
        let (amin, amax) = ca.iter().map(|p| p.dot(&ax)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        let (bmin, bmax) = cb.iter().map(|p| p.dot(&ax)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        if amax <= bmin + tol || bmax <= amin + tol {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------- cover

/// Oriented cube of the cover with the part of the jump set inside it.
#[derive(Clone, Debug)]
pub struct CoverCube {
    pub rect: Rect,
    pub aabb: Aabb,
    /// `Gamma_j` in the cube frame, sorted by first coordinate from `-rho` to `rho`.
    pub surface: Vec<V2>,
    /// The cube sits on the domain boundary (zero extension only).
    pub boundary: bool,
}

impl CoverCube {
    pub fn rho(&self) -> f64 {
        self.rect.half_widths.x
    }

    /// Height of the surface above the mid-plane at first coordinate `s`.
    pub fn height_at(&self, s: f64) -> f64 {
        let v = &self.surface;
        let i = v.partition_point(|p| p.x <= s).clamp(1, v.len() - 1);
        let (a, b) = (v[i - 1], v[i]);
        if b.x == a.x {
            return a.y;
        }
        a.y + (b.y - a.y) * ((s - a.x) / (b.x - a.x)).clamp(0.0, 1.0)
    }

    pub fn surface_world(&self) -> Vec<V2> {
        self.surface.iter().map(|&l| self.rect.to_world(l)).collect()
    }

    pub fn surface_segments(&self) -> Vec<Segment> {
        let w = self.surface_world();
        w.windows(2).map(|p| Segment::new(p[0], p[1])).filter(|s| s.length() > 0.0).collect()
    }

    /// Largest `|slope|` and `|deviation| / rho` of the surface in the cube frame.
    pub fn graph_bounds(&self) -> (f64, f64) {
        let slope = self.surface.windows(2).map(|p| ((p[1].y - p[0].y) / (p[1].x - p[0].x)).abs()).fold(0.0, f64::max);
        let dev = self.surface.iter().map(|p| p.y.abs()).fold(0.0, f64::max) / self.rho();
        (slope, dev)
    }
}

#[derive(Clone, Debug)]
pub struct JumpCover {
    pub domain: Aabb,
    pub epsilon: f64,
    pub mode: ExtensionMode,
    pub selection: Selection,
    /// Interior and boundary cubes in construction order.
    pub cubes: Vec<CoverCube>,
    /// `Q_j ∩ Gamma_j` inside the domain.
    pub gamma_hat: Vec<JumpPiece>,
    pub gamma_hat_boundary: Vec<JumpPiece>,
    /// Jump set inside the domain not covered by any cube.
    pub uncovered: Vec<JumpPiece>,
    pub uncovered_length: f64,
    /// `int |[u]|` over the uncovered part.
    pub tail_energy: f64,
    pub eta_eps: f64,
    /// Arc length skipped because no cube fitted.
    pub skipped: f64,
}

impl JumpCover {
    pub fn boundary_cubes(&self) -> impl Iterator<Item = &CoverCube> {
        self.cubes.iter().filter(|c| c.boundary)
    }

    pub fn interior_cubes(&self) -> impl Iterator<Item = &CoverCube> {
        self.cubes.iter().filter(|c| !c.boundary)
    }

    /// First cube whose closure contains `x`.
    pub fn cube_of(&self, x: V2) -> Option<usize> {
        self.cubes.iter().position(|c| c.aabb.contains(x) && c.rect.contains_closed(x, 0.0))
    }

    /// Membership in `B_0`: the domain minus the closed cubes.
    pub fn in_remainder(&self, x: V2) -> bool {
        self.domain.contains(x) && self.cube_of(x).is_none()
    }

    pub fn min_rho(&self) -> f64 {
        self.cubes.iter().map(|c| c.rho()).fold(f64::INFINITY, f64::min)
    }

    /// Cube-dilation scale `t = min(epsilon, min rho) / 16`.
    pub fn t_scale(&self) -> f64 {
        self.epsilon.min(self.min_rho()) / 16.0
    }

    pub fn gamma_hat_length(&self) -> f64 {
        self.gamma_hat.iter().chain(&self.gamma_hat_boundary).map(|p| p.seg.length()).sum()
    }
}

struct Walk<'a> {
    pieces: &'a [ChainPiece],
    chains: &'a [Chain],
    eps: f64,
    allowed: Aabb,
}

impl Walk<'_> {
    /// Cube of half side `rho` centered at arc length `s + rho` of `chain`,
    /// with the arc length where the chain leaves it.
    fn try_cube(&self, ci: usize, s: f64, rho: f64, cubes: &[CoverCube]) -> Option<(CoverCube, f64)> {
        let chain = &self.chains[ci];
        if s + rho > chain.length + 1e-12 {
            return None;
        }
        let (c, n) = chain_point(self.pieces, chain, s + rho);
        let rect = Rect::oriented_square(c, rho, n);
        let aabb = rect.aabb();
        let tol = 1e-12 * (1.0 + c.amax());
        if !self.allowed.dilate(tol).contains_box(&aabb) {
            return None;
        }
        if cubes.iter().any(|q| q.aabb.intersects(&aabb) && overlaps(&q.rect, &rect, tol)) {
            return None;
        }
        let mut local: Vec<(V2, V2)> = Vec::new();
        let mut arcs: Vec<(f64, f64)> = Vec::new();
        let mut boundary = false;
        for p in self.pieces {
            if !p.seg.aabb().intersects(&aabb) {
                continue;
            }
            let Some((t0, t1)) = rect.clip_segment(&p.seg) else { continue };
            let len = p.seg.length();
            if (t1 - t0) * len <= 1e-12 {
                continue;
            }
            if p.chain != ci {
                return None;
            }
            let (a, b) = (rect.to_local(p.seg.at(t0)), rect.to_local(p.seg.at(t1)));
            let dx = (b.x - a.x).abs();
            if dx <= 1e-14 || (b.y - a.y).abs() > 0.5 * self.eps * dx + 1e-12 {
                return None;
            }
            let dev = 0.5 * self.eps * rho + 1e-12;
            if a.y.abs() > dev || b.y.abs() > dev {
                return None;
            }
            boundary |= p.boundary;
            local.push(if a.x <= b.x { (a, b) } else { (b, a) });
            arcs.push((p.s0 + t0 * len, p.s0 + t1 * len));
        }
        // one contiguous stretch of the chain, crossing the cube from side to side
        arcs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let gap = 1e-9 * (1.0 + chain.length);
        let (sa, mut sb) = *arcs.first()?;
        for &(lo, hi) in &arcs[1..] {
            if lo > sb + gap {
                return None;
            }
            sb = sb.max(hi);
        }
        if sa > s + rho || sb <= s + 1e-12 {
            return None;
        }
        local.sort_by(|a, b| a.0.x.total_cmp(&b.0.x));
        let span = 1e-9 * (1.0 + rho);
        if (local[0].0.x + rho).abs() > span || (local.last()?.1.x - rho).abs() > span {
            return None;
        }
        let mut surface = vec![local[0].0];
        for w in local.windows(2) {
            if (w[1].0 - w[0].1).norm() > span {
                return None;
            }
        }
        surface.extend(local.iter().map(|p| p.1));
        surface[0].x = -rho;
        let last = surface.len() - 1;
        surface[last].x = rho;
        Some((CoverCube { rect, aabb, surface, boundary }, sb))
    }

    /// Walk every chain placing cubes of half-width at least `floor`.
    fn run(&self, opts: &CoverOptions, floor: f64) -> (Vec<CoverCube>, f64) {
        let mut cubes: Vec<CoverCube> = Vec::new();
        let mut skipped = 0.0;
        for (ci, chain) in self.chains.iter().enumerate() {
            let mut s = 0.0;
            while s < chain.length - 1e-12 {
                let mut rho = opts.rho_max;
                let mut placed = None;
                while rho >= floor * (1.0 - 1e-12) {
                    if let Some(found) = self.try_cube(ci, s, rho, &cubes) {
                        placed = Some(found);
                        // grow back toward the failed size
                        let (mut lo, mut hi) = (rho, (2.0 * rho).min(opts.rho_max));
                        for _ in 0..10 {
                            if hi - lo <= 1e-3 * lo {
                                break;
                            }
                            let mid = 0.5 * (lo + hi);
                            match self.try_cube(ci, s, mid, &cubes) {
                                Some(f) => {
                                    placed = Some(f);
                                    lo = mid;
                                }
                                None => hi = mid,
                            }
                        }
                        break;
                    }
                    rho *= 0.5;
                }
                match placed {
                    Some((cube, next)) => {
                        cubes.push(cube);
                        s = next;
                    }
                    None => {
                        let step = opts.rho_min.min(chain.length - s);
                        skipped += step;
                        s += step;
                    }
                }
            }
        }
        (cubes, skipped)
    }
}

/// Parameter intervals of `seg` outside every cube.
fn outside_cubes(seg: &Segment, cubes: &[CoverCube]) -> Vec<(f64, f64)> {
    let bx = seg.aabb();
    let mut cov: Vec<(f64, f64)> = cubes
        .iter()
        .filter(|c| c.aabb.intersects(&bx))
        .filter_map(|c| c.rect.clip_segment(seg))
        .filter(|(a, b)| b > a)
        .collect();
    cov.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let mut t = 0.0;
    for (lo, hi) in cov {
        if lo > t {
            out.push((t, lo));
        }
        t = t.max(hi);
    }
    if t < 1.0 {
        out.push((t, 1.0));
    }
    out.retain(|(a, b)| (b - a) * seg.length() > 1e-12);
    out
}

fn gauss_on<T>(seg: &Segment, n: usize, f: impl Fn(V2) -> T) -> T
where
    T: std::ops::Mul<f64, Output = T> + std::iter::Sum<T>,
{
    let (x, w) = gauss_legendre(n);
    let len = seg.length();
    x.iter().zip(&w).map(|(x, w)| f(seg.at(0.5 * (x + 1.0))) * (0.5 * w * len)).sum()
}

fn jump_energy_on(f: &dyn Field, seg: &Segment, normal: V2) -> f64 {
    let n = (seg.length() * 256.0).ceil().clamp(1.0, 64.0) as usize;
    (0..n).map(|i| gauss_on(&seg.sub(i as f64 / n as f64, (i + 1) as f64 / n as f64), 8, |x| jump_at(f, x, normal).norm())).sum()
}

fn working_field<'a>(f: &'a SbdField, mode: ExtensionMode) -> Arc<dyn Field + 'a> {
    match mode {
        ExtensionMode::Natural => Arc::new(f),
        ExtensionMode::Zero => Arc::new(ZeroExtended::new(f)),
    }
}

/// Cover the jump set by disjoint oriented cubes whose jump set is a flat graph.
pub fn cover_jump_set(f: &SbdField, eps: f64) -> Result<JumpCover, PipelineError> {
    cover_jump_set_with(f, eps, &CoverOptions::default())
}

pub fn cover_jump_set_with(f: &SbdField, eps: f64, opts: &CoverOptions) -> Result<JumpCover, PipelineError> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(PipelineError::Epsilon(eps));
    }
    let w = working_field(f, opts.mode);
    let domain = f.bbox();
    let allowed = domain.dilate(opts.outside);
    let bpieces: Vec<JumpPiece> = match opts.mode {
        ExtensionMode::Zero => ZeroExtended::new(f).boundary_pieces().to_vec(),
        ExtensionMode::Natural => Vec::new(),
    };
    let is_boundary = |p: &JumpPiece| bpieces.iter().any(|b| b.seg == p.seg);
    let mut raw = Vec::new();
    w.jumps(&allowed, &mut raw);
    let all: Vec<(JumpPiece, bool)> = raw
        .iter()
        .filter_map(|p| p.seg.clip_aabb(&allowed).filter(|s| s.length() > 1e-12).map(|s| (JumpPiece::new(s, p.normal), is_boundary(p))))
        .collect();

    let selected: Vec<(JumpPiece, bool)> = match opts.selection {
        Selection::Length => all.clone(),
        Selection::Energy => {
            let energy: Vec<f64> = all
                .par_iter()
                .map(|(p, _)| p.seg.clip_aabb(&domain).map_or(0.0, |s| jump_energy_on(&*w, &s, p.normal)))
                .collect();
            let mut order: Vec<usize> = (0..all.len()).collect();
            order.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
            let mut rest: f64 = energy.iter().sum();
            let mut keep = vec![false; all.len()];
            for &i in &order {
                if rest < 0.5 * eps {
                    break;
                }
                keep[i] = true;
                rest -= energy[i];
            }
            // pieces outside the domain carry no energy there and continue the chains
            for (i, (p, _)) in all.iter().enumerate() {
                if p.seg.clip_aabb(&domain).is_none_or(|s| s.length() <= 1e-12) {
                    keep[i] = true;
                }
            }
            all.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect()
        }
    };

    let (pieces, chains) = link_chains(&selected);
    let walk = Walk { pieces: &pieces, chains: &chains, eps, allowed };
    // length rule: large cubes first, leaving gaps at corners, smaller ones
    // only when the gaps break the coverage requirement
    let mut floor = match opts.selection {
        Selection::Length => (eps / 4.0).min(opts.rho_max).max(opts.rho_min),
        Selection::Energy => opts.rho_min,
    };
    loop {
        let (cubes, skipped) = walk.run(opts, floor);
        let cover = assemble_cover(f, &*w, eps, opts, &pieces, &all, cubes, skipped);
        if floor <= opts.rho_min || check_coverage(&cover).is_ok() {
            return Ok(cover);
        }
        floor = (0.5 * floor).max(opts.rho_min);
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble_cover(
    f: &SbdField,
    w: &dyn Field,
    eps: f64,
    opts: &CoverOptions,
    pieces: &[ChainPiece],
    all: &[(JumpPiece, bool)],
    cubes: Vec<CoverCube>,
    skipped: f64,
) -> JumpCover {
    let domain = f.bbox();

    let mut gamma_hat = Vec::new();
    let mut gamma_hat_boundary = Vec::new();
    for c in &cubes {
        for p in pieces {
            if let Some((t0, t1)) = c.rect.clip_segment(&p.seg) {
                if let Some(s) = p.seg.sub(t0, t1).clip_aabb(&domain) {
                    if s.length() > 1e-12 {
                        let jp = JumpPiece::new(s, p.normal);
                        if p.boundary {
                            gamma_hat_boundary.push(jp);
                        } else {
                            gamma_hat.push(jp);
                        }
                    }
                }
            }
        }
    }
    let mut uncovered = Vec::new();
    for (p, _) in all {
        let Some(s) = p.seg.clip_aabb(&domain) else { continue };
        for (t0, t1) in outside_cubes(&s, &cubes) {
            uncovered.push(JumpPiece::new(s.sub(t0, t1), p.normal));
        }
    }
    let uncovered_length = uncovered.iter().map(|p| p.seg.length()).sum();
    let tail_energy = uncovered.par_iter().map(|p| jump_energy_on(w, &p.seg, p.normal)).sum::<f64>();
    JumpCover {
        domain,
        epsilon: eps,
        mode: opts.mode,
        selection: opts.selection,
        cubes,
        gamma_hat,
        gamma_hat_boundary,
        uncovered,
        uncovered_length,
        tail_energy,
        eta_eps: eps.max(tail_energy),
        skipped,
    }
}

/// The coverage requirement: uncovered length (or energy) below epsilon.
pub fn check_coverage(cover: &JumpCover) -> Result<(), PipelineError> {
    let bad = match cover.selection {
        Selection::Length => cover.uncovered_length >= cover.epsilon,
        Selection::Energy => cover.tail_energy >= cover.epsilon,
    };
    if bad {
        return Err(PipelineError::Coverage { uncovered: cover.uncovered_length, energy: cover.tail_energy, eps: cover.epsilon });
    }
    Ok(())
}

// ---------------------------------------------------------------- strips

/// Lateral fattening of the faces, in units of `1/k`.
pub const FATTEN: f64 = 32.0 * SQRT_2;
/// Depth of the reflection rectangles, in units of `1/k`.
pub const REFLECT_DEPTH: f64 = 25.0 * SQRT_2;

/// Strips on one side of the surface. Coordinates are in the side frame:
/// the cube frame itself below the surface, turned by `pi` above it, so
/// the surface always lies above the strips.
#[derive(Clone, Debug)]
pub struct SideStrips {
    pub sign: f64,
    pub faces: Vec<(f64, f64)>,
    pub fattened: Vec<(f64, f64)>,
    /// `m_n` in units of `1/k`.
    pub heights: Vec<f64>,
    /// Bounding rectangle of each strip `Q_m`.
    pub strips: Vec<Rect>,
    /// `R_m` and `R'_m`.
    pub reflect_below: Vec<Rect>,
    pub reflect_above: Vec<Rect>,
}

#[derive(Clone, Debug)]
pub struct StripDecomposition {
    pub k: u32,
    pub eta: f64,
    /// Nominal face length `1/(eta k)`.
    pub width: f64,
    pub rho: f64,
    pub sides: [SideStrips; 2],
}

fn side_sign(side: usize) -> f64 {
    if side == 0 {
        1.0
    } else {
        -1.0
    }
}

fn side_rect(cube: &CoverCube, sign: f64, lo: V2, hi: V2) -> Rect {
    let c = (lo + hi) * 0.5;
    let angle = if sign > 0.0 { cube.rect.angle } else { cube.rect.angle + PI };
    Rect { center: cube.rect.to_world(c * sign), half_widths: (hi - lo) * 0.5, angle }
}

/// Surface height in the side frame.
fn side_height(cube: &CoverCube, sign: f64, s: f64) -> f64 {
    sign * cube.height_at(sign * s)
}

fn side_range(cube: &CoverCube, sign: f64, a: f64, b: f64) -> (f64, f64) {
    let mut lo = side_height(cube, sign, a).min(side_height(cube, sign, b));
    let mut hi = side_height(cube, sign, a).max(side_height(cube, sign, b));
    for p in &cube.surface {
        let s = sign * p.x;
        if s > a && s < b {
            lo = lo.min(sign * p.y);
            hi = hi.max(sign * p.y);
        }
    }
    (lo, hi)
}

impl StripDecomposition {
    pub fn count_per_side(&self) -> usize {
        self.sides[0].faces.len()
    }

    pub fn strip_of(&self, s: f64) -> usize {
        let n = self.count_per_side();
        (((s + self.rho) / self.width).floor().max(0.0) as usize).min(n - 1)
    }

    /// Face of the reflection for strip `m` on `side`, oriented toward the surface.
    pub fn face(&self, cube: &CoverCube, side: usize, m: usize) -> Face {
        let sign = side_sign(side);
        let h = self.sides[side].heights[m] / self.k as f64;
        Face::new(cube.rect.to_world(v2(0.0, h) * sign), cube.rect.normal() * sign)
    }

    /// Segments separating adjacent strips, from the bottom of the cube up to the surface.
    pub fn seams(&self, cube: &CoverCube) -> Vec<Segment> {
        let mut out = Vec::new();
        for (side, st) in self.sides.iter().enumerate() {
            let sign = side_sign(side);
            for f in &st.faces[1..] {
                let s = f.0;
                let top = side_height(cube, sign, s);
                out.push(Segment::new(cube.rect.to_world(v2(s, -self.rho) * sign), cube.rect.to_world(v2(s, top) * sign)));
            }
        }
        out
    }

    /// Largest `|m_n(m) - m_n(m + 1)|` over both sides.
    pub fn max_height_drift(&self) -> f64 {
        self.sides.iter().flat_map(|s| s.heights.windows(2).map(|w| (w[1] - w[0]).abs())).fold(0.0, f64::max)
    }
}

/// Split both halves of a cube into strips of face length `1/(eta k)` and
/// place a face below the surface in each.
pub fn strip_decompose(cube: &CoverCube, k: u32, eta: f64) -> Result<StripDecomposition, PipelineError> {
    strip_decompose_indexed(cube, 0, k, eta)
}

fn strip_decompose_indexed(cube: &CoverCube, index: usize, k: u32, eta: f64) -> Result<StripDecomposition, PipelineError> {
    if k == 0 {
        return Err(PipelineError::BadK);
    }
    let kf = k as f64;
    let rho = cube.rho();
    let width = 1.0 / (eta * kf);
    // whole faces, then one narrower face for the fractional part
    let whole = (2.0 * rho * eta * kf).floor();
    let n = if 2.0 * rho - whole * width > 1e-9 * width { whole as usize + 1 } else { whole as usize }.max(1);
    let band = 0.5 / kf;
    let fat = FATTEN / kf;
    let depth = REFLECT_DEPTH / kf;
    let mut sides = Vec::new();
    for side in 0..2 {
        let sign = side_sign(side);
        let mut st = SideStrips {
            sign,
            faces: Vec::new(),
            fattened: Vec::new(),
            heights: Vec::new(),
            strips: Vec::new(),
            reflect_below: Vec::new(),
            reflect_above: Vec::new(),
        };
        for m in 0..n {
            let a = -rho + m as f64 * width;
            let b = if m + 1 == n { rho } else { (a + width).min(rho) };
            let (fa, fb) = (a - fat, b + fat);
            let wide = side_range(cube, sign, fa.max(-rho), fb.min(rho));
            let tight = side_range(cube, sign, a, b);
            let limit = band * (1.0 + 1e-9);
            let (lo, hi) = if wide.1 - wide.0 <= limit {
                wide
            } else if tight.1 - tight.0 <= limit {
                tight
            } else {
                return Err(PipelineError::NoHeight { cube: index, side, strip: m, spread: tight.1 - tight.0, limit: band });
            };
            let h = 0.5 * (lo + hi) - 0.25 / kf;
            st.faces.push((a, b));
            st.fattened.push((fa, fb));
            st.heights.push(h * kf);
            st.strips.push(side_rect(cube, sign, v2(a, -rho), v2(b, tight.1)));
            st.reflect_below.push(side_rect(cube, sign, v2(fa, h - depth), v2(fb, h)));
            st.reflect_above.push(side_rect(cube, sign, v2(fa, h), v2(fb, h + depth)));
        }
        sides.push(st);
    }
    let above = sides.pop().expect("two sides");
    let below = sides.pop().expect("two sides");
    Ok(StripDecomposition { k, eta, width, rho, sides: [below, above] })
}

// ---------------------------------------------------------------- gluing

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    /// Jump-length rough approximation in every piece.
    Thm11,
    /// Plain convolution in every piece.
    Thm12,
    /// Jump-energy rough approximation in every piece.
    Thm13,
}

impl Theorem {
    pub fn from_code(code: u32) -> Option<Theorem> {
        match code {
            11 => Some(Theorem::Thm11),
            12 => Some(Theorem::Thm12),
            13 => Some(Theorem::Thm13),
            _ => None,
        }
    }

    pub fn code(&self) -> u32 {
        match self {
            Theorem::Thm11 => 11,
            Theorem::Thm12 => 12,
            Theorem::Thm13 => 13,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PipelineOptions {
    pub theta: f64,
    pub mode: ExtensionMode,
    pub params: ReflectionParams,
    /// Reject `k < 64/t`.
    pub strict_scale: bool,
    pub outside: f64,
    pub rho_max: f64,
    pub rho_min: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        let c = CoverOptions::default();
        PipelineOptions {
            theta: 0.1,
            mode: ExtensionMode::Natural,
            params: ReflectionParams::default(),
            strict_scale: false,
            outside: c.outside,
            rho_max: c.rho_max,
            rho_min: c.rho_min,
        }
    }
}

/// Per-piece approximant: a rough approximation or a plain convolution.
pub enum LocalApprox<F: Field> {
    Rough(RoughApproximant<F>),
    Conv(MollifiedField<F>),
}

impl<F: Field> LocalApprox<F> {
    pub fn jet(&self, x: V2) -> (V2, M2) {
        match self {
            LocalApprox::Rough(r) => r.jet(x),
            LocalApprox::Conv(c) => c.m.convolve_jet(&c.inner, x),
        }
    }

    pub fn in_excluded(&self, x: V2) -> bool {
        match self {
            LocalApprox::Rough(r) => r.in_excluded(x),
            LocalApprox::Conv(_) => false,
        }
    }

    pub fn jump_candidates(&self, region: &Aabb) -> Vec<Segment> {
        match self {
            LocalApprox::Rough(r) => r.jump_candidates(region),
            LocalApprox::Conv(_) => Vec::new(),
        }
    }

    pub fn exceptional_area(&self) -> f64 {
        match self {
            LocalApprox::Rough(r) => r.exceptional_area,
            LocalApprox::Conv(_) => 0.0,
        }
    }
}

impl<F: Field> Field for LocalApprox<F> {
    fn value(&self, x: V2) -> V2 {
        match self {
            LocalApprox::Rough(r) => r.value(x),
            LocalApprox::Conv(c) => c.value(x),
        }
    }
    fn gradient(&self, x: V2) -> M2 {
        self.jet(x).1
    }
    fn jumps(&self, region: &Aabb, out: &mut Vec<JumpPiece>) {
        if let LocalApprox::Rough(r) = self {
            r.jumps(region, out)
        }
    }
}

pub type Working<'a> = Arc<dyn Field + 'a>;

pub struct StripApprox<'a> {
    pub cube: usize,
    pub side: usize,
    pub m: usize,
    pub face: Face,
    pub region: Rect,
    pub approx: LocalApprox<Reflected<Working<'a>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Owner {
    Strip { cube: usize, side: usize, m: usize },
    Remainder,
}

/// The glued approximant `u_k`.
pub struct Approximation<'a> {
    pub field: &'a SbdField,
    pub theorem: Theorem,
    pub k: u32,
    pub options: PipelineOptions,
    pub cover: JumpCover,
    pub decompositions: Vec<StripDecomposition>,
    pub strips: Vec<StripApprox<'a>>,
    pub remainder: LocalApprox<Working<'a>>,
    offsets: Vec<[usize; 2]>,
    jump_cache: OnceLock<Vec<JumpPiece>>,
}

impl<'a> Approximation<'a> {
    pub fn build(f: &'a SbdField, theorem: Theorem, k: u32, eps: f64, options: PipelineOptions) -> Result<Self, PipelineError> {
        if k == 0 {
            return Err(PipelineError::BadK);
        }
        if theorem == Theorem::Thm11 && !(options.theta > 0.0 && options.theta < 1.0) {
            return Err(PipelineError::Theta(options.theta));
        }
        let selection = if theorem == Theorem::Thm11 { Selection::Length } else { Selection::Energy };
        let copts = CoverOptions { mode: options.mode, selection, outside: options.outside, rho_max: options.rho_max, rho_min: options.rho_min };
        let cover = cover_jump_set_with(f, eps, &copts)?;
        check_coverage(&cover)?;
        Self::from_cover(f, theorem, k, cover, options)
    }

    /// Glue the construction on a given cover.
    pub fn from_cover(f: &'a SbdField, theorem: Theorem, k: u32, cover: JumpCover, options: PipelineOptions) -> Result<Self, PipelineError> {
        if k == 0 {
            return Err(PipelineError::BadK);
        }
        if options.strict_scale && !cover.cubes.is_empty() {
            let t = cover.t_scale();
            let need = 64.0 / t;
            if (k as f64) < need {
                return Err(PipelineError::Scale { k, t, need });
            }
        }
        let kf = k as f64;
        let eta = cover.eta_eps;
        let decompositions: Vec<StripDecomposition> =
            cover.cubes.iter().enumerate().map(|(i, c)| strip_decompose_indexed(c, i, k, eta)).collect::<Result<_, _>>()?;
        let working = working_field(f, options.mode);
        let mut offsets = Vec::new();
        let mut tasks = Vec::new();
        for (ci, d) in decompositions.iter().enumerate() {
            let mut o = [0; 2];
            for (side, slot) in o.iter_mut().enumerate() {
                *slot = tasks.len();
                for m in 0..d.count_per_side() {
                    tasks.push((ci, side, m));
                }
            }
            offsets.push(o);
        }
        let rough_opts = |rule, exceptional| RoughOptions { k, rule, exceptional, h: f.h };
        let strips: Vec<StripApprox<'a>> = tasks
            .par_iter()
            .map(|&(ci, side, m)| {
                let cube = &cover.cubes[ci];
                let d = &decompositions[ci];
                let face = d.face(cube, side, m);
                let region = d.sides[side].strips[m];
                let um = Reflected::new(working.clone(), face, options.params);
                let fat = (FATTEN / kf).min(cube.rho());
                let wide = Rect { half_widths: region.half_widths + v2(fat, 0.0), ..region };
                let keep = move |q: &Aabb| wide.contains_closed(q.center(), 0.0);
                let approx = match theorem {
                    Theorem::Thm11 => LocalApprox::Rough(RoughApproximant::build(
                        um,
                        wide.aabb(),
                        rough_opts(NodeRule::JumpLength { theta: options.theta }, true),
                        Some(&keep),
                    )),
                    Theorem::Thm12 => LocalApprox::Conv(MollifiedField::new(um, Mollifier { k: kf })),
                    Theorem::Thm13 => LocalApprox::Rough(RoughApproximant::build(um, wide.aabb(), rough_opts(NodeRule::JumpEnergy, false), Some(&keep))),
                };
                StripApprox { cube: ci, side, m, face, region, approx }
            })
            .collect();
        let rects: Vec<Rect> = cover.cubes.iter().map(|c| c.rect).collect();
        let keep_rest = move |q: &Aabb| !rects.iter().any(|r| r.contains_closed(q.center(), 0.0));
        let domain = cover.domain;
        let remainder = match theorem {
            Theorem::Thm11 => LocalApprox::Rough(RoughApproximant::build(
                working.clone(),
                domain,
                rough_opts(NodeRule::JumpLength { theta: options.theta }, true),
                Some(&keep_rest),
            )),
            Theorem::Thm12 => LocalApprox::Conv(MollifiedField::new(working.clone(), Mollifier { k: kf })),
            Theorem::Thm13 => LocalApprox::Rough(RoughApproximant::build(working.clone(), domain, rough_opts(NodeRule::JumpEnergy, false), Some(&keep_rest))),
        };
        Ok(Approximation { field: f, theorem, k, options, cover, decompositions, strips, remainder, offsets, jump_cache: OnceLock::new() })
    }

    /// The sub-construction that defines `u_k` at `x`.
    pub fn owner(&self, x: V2) -> Owner {
        match self.cover.cube_of(x) {
            Some(ci) => {
                let cube = &self.cover.cubes[ci];
                let l = cube.rect.to_local(x);
                let side = if l.y <= cube.height_at(l.x) { 0 } else { 1 };
                let m = self.decompositions[ci].strip_of(side_sign(side) * l.x);
                Owner::Strip { cube: ci, side, m }
            }
            None => Owner::Remainder,
        }
    }

    pub fn strip(&self, cube: usize, side: usize, m: usize) -> &StripApprox<'a> {
        &self.strips[self.offsets[cube][side] + m]
    }

    /// Value of a given sub-construction (not necessarily the owner) at `x`.
    pub fn piece_value(&self, owner: Owner, x: V2) -> V2 {
        match owner {
            Owner::Strip { cube, side, m } => self.strip(cube, side, m).approx.value(x),
            Owner::Remainder => self.remainder.value(x),
        }
    }

    pub fn jet(&self, x: V2) -> (V2, M2) {
        match self.owner(x) {
            Owner::Strip { cube, side, m } => self.strip(cube, side, m).approx.jet(x),
            Owner::Remainder => self.remainder.jet(x),
        }
    }

    /// Membership in the excluded set `E_k`.
    pub fn in_excluded(&self, x: V2) -> bool {
        match self.owner(x) {
            Owner::Strip { cube, side, m } => self.strip(cube, side, m).approx.in_excluded(x),
            Owner::Remainder => self.remainder.in_excluded(x),
        }
    }

    pub fn strip_count(&self) -> usize {
        self.strips.len()
    }

    /// All seam segments.
    pub fn seams(&self) -> Vec<Segment> {
        self.decompositions.iter().zip(&self.cover.cubes).flat_map(|(d, c)| d.seams(c)).collect()
    }

    fn candidates(&self) -> Vec<Segment> {
        let dom = self.cover.domain;
        let mut raw: Vec<Segment> = Vec::new();
        for c in &self.cover.cubes {
            raw.extend(c.surface_segments());
            raw.extend(c.rect.edges());
        }
        raw.extend(self.seams());
        let owns = |o: Owner, s: &Segment| [0.25, 0.5, 0.75].iter().any(|&t| self.owner(s.at(t)) == o);
        let local: Vec<Vec<Segment>> = self
            .strips
            .par_iter()
            .map(|st| {
                let o = Owner::Strip { cube: st.cube, side: st.side, m: st.m };
                let bx = st.region.aabb().intersection(&dom);
                if bx.is_empty() {
                    return Vec::new();
                }
                st.approx.jump_candidates(&bx).into_iter().filter(|s| owns(o, s)).collect()
            })
            .collect();
        raw.extend(local.into_iter().flatten());
        raw.extend(self.remainder.jump_candidates(&dom).into_iter().filter(|s| owns(Owner::Remainder, s)));
        let clipped: Vec<Segment> = raw.iter().filter_map(|s| s.clip_aabb(&dom)).filter(|s| s.length() > 1e-12).collect();
        dedup_collinear(&clipped)
    }

    /// Jump pieces of `u_k` inside the domain.
    pub fn jump_pieces(&self) -> &[JumpPiece] {
        self.jump_cache.get_or_init(|| {
            let c = self.candidates();
            extract_jumps(self, &c, 1.0 / (8.0 * self.k as f64), JUMP_TOL)
        })
    }
}

/// Merge collinear overlapping segments.
fn dedup_collinear(segs: &[Segment]) -> Vec<Segment> {
    let mut lines: HashMap<(i64, i64), Vec<(f64, f64, V2, V2)>> = HashMap::new();
    let mut order = Vec::new();
    for s in segs {
        let mut d = s.direction();
        if d.y < 0.0 || (d.y == 0.0 && d.x < 0.0) {
            d = -d;
        }
        let n = v2(-d.y, d.x);
        let key = ((d.y.atan2(d.x) * 1e8).round() as i64, (n.dot(&s.a) * 1e8).round() as i64);
        let (ta, tb) = (d.dot(&s.a), d.dot(&s.b));
        let e = lines.entry(key).or_default();
        if e.is_empty() {
            order.push(key);
        }
        e.push((ta.min(tb), ta.max(tb), d, n * n.dot(&s.a)));
    }
    let mut out = Vec::new();
    for key in order {
        let mut v = lines.remove(&key).expect("key present");
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (d, base) = (v[0].2, v[0].3);
        let (mut lo, mut hi) = (v[0].0, v[0].1);
        for &(a, b, _, _) in &v[1..] {
            if a > hi + 1e-12 {
                out.push(Segment::new(base + d * lo, base + d * hi));
                lo = a;
            }
            hi = hi.max(b);
        }
        out.push(Segment::new(base + d * lo, base + d * hi));
    }
    out
}

impl Field for Approximation<'_> {
    fn value(&self, x: V2) -> V2 {
        self.piece_value(self.owner(x), x)
    }
    fn gradient(&self, x: V2) -> M2 {
        self.jet(x).1
    }
    fn jumps(&self, region: &Aabb, out: &mut Vec<JumpPiece>) {
        out.extend(self.jump_pieces().iter().filter(|p| p.seg.distance_to_box(region) <= 0.0).copied());
    }
}

// ---------------------------------------------------------------- metrics

#[derive(Clone, Debug, Serialize)]
pub struct ReportRow {
    pub theorem: Theorem,
    pub k: u32,
    pub p: f64,
    /// `||u_k - u||_{L1} + |E(u_k - u)|`.
    pub bd_error: f64,
    pub l1_error: f64,
    /// `||e(u_k) - e(u)||_{Lp}`.
    pub strain_lp_error: f64,
    /// `H1(J_{u_k} sym-diff J_u)`.
    pub jump_symmdiff: f64,
    /// `H1(J_{u_k} \ J_u)`.
    pub jump_created: f64,
    /// `int |[u] - [u_k]|` over `J_u ∪ J_{u_k}`.
    pub jump_amp_error: f64,
    /// `area(E_k)`.
    pub excluded_area: f64,
    /// `int_{Omega \ E_k} |u_k - u|^p`.
    pub excluded_lp_error: f64,
    /// Length of `Gamma-hat` where `u_k` does not jump.
    pub silent_gamma_hat: f64,
    pub eta_eps: f64,
    pub cubes: usize,
    pub strips: usize,
    pub uncovered_length: f64,
}

impl ReportRow {
    pub const CSV_HEADER: &'static str = "thm,k,bd_error,l1_error,strain_lp_error,jump_symmdiff,jump_created,jump_amp_error,excluded_area,excluded_lp_error,silent_gamma_hat,eta_eps,cubes,strips,uncovered_length";

    pub fn metrics(&self) -> [f64; 10] {
        [
            self.bd_error,
            self.l1_error,
            self.strain_lp_error,
            self.jump_symmdiff,
            self.jump_created,
            self.jump_amp_error,
            self.excluded_area,
            self.excluded_lp_error,
            self.silent_gamma_hat,
            self.eta_eps,
        ]
    }
}

/// Quadrature spacing used by the metrics.
pub fn metric_spacing(f: &SbdField, k: u32) -> f64 {
    f.h.min(0.25 / k as f64)
}

fn split(seg: &Segment, max: f64) -> Vec<Segment> {
    let n = (seg.length() / max).ceil().max(1.0) as usize;
    (0..n).map(|i| seg.sub(i as f64 / n as f64, (i + 1) as f64 / n as f64)).collect()
}

impl Approximation<'_> {
    pub fn report(&self, p: f64) -> Result<ReportRow, PipelineError> {
        if !(p > 1.0) {
            return Err(PipelineError::Exponent(p));
        }
        let f = self.field;
        let dom = self.cover.domain;
        let kf = self.k as f64;
        let h = metric_spacing(f, self.k);
        let acc = area_pass(&dom, h, |x| {
            let (v, g) = self.jet(x);
            let u = f.value(x);
            let du = frob(&sym(&(g - f.gradient(x))));
            let d = (v - u).norm();
            let ex = self.in_excluded(x);
            [d, du, du.powf(p), if ex { 1.0 } else { 0.0 }, if ex { 0.0 } else { d.powf(p) }]
        });
        let ju = f.jump_pieces();
        let jk = self.jump_pieces();
        let piece = 1.0 / (8.0 * kf);
        let ju_split: Vec<JumpPiece> = ju.iter().flat_map(|q| split(&q.seg, piece).into_iter().map(move |s| JumpPiece::new(s, q.normal))).collect();
        let merged = merge_pieces(&ju_split, jk);
        let (amp, sym_amp) = merged
            .par_iter()
            .map(|q| {
                let d = |x: V2| jump_at(self, x, q.normal) - jump_at(f, x, q.normal);
                let v = gauss_on(&q.seg, 4, |x| {
                    let e = d(x);
                    V2::new(e.norm(), frob(&sym_tensor_product(e, q.normal)))
                });
                (v.x, v.y)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let us: Vec<Segment> = ju_split.iter().map(|q| q.seg).collect();
        let ks: Vec<Segment> = jk.iter().map(|q| q.seg).collect();
        let tol = 1e-9;
        let created = unmatched_length(&ks, &us, tol, 8);
        let missed = unmatched_length(&us, &ks, tol, 8);
        let gh: Vec<Segment> = self
            .cover
            .gamma_hat
            .iter()
            .chain(&self.cover.gamma_hat_boundary)
            .flat_map(|q| split(&q.seg, piece))
            .collect();
        let silent = unmatched_length(&gh, &ks, tol, 8);
        Ok(ReportRow {
            theorem: self.theorem,
            k: self.k,
            p,
            bd_error: acc[0] + acc[1] + sym_amp,
            l1_error: acc[0],
            strain_lp_error: acc[2].powf(1.0 / p),
            jump_symmdiff: created + missed,
            jump_created: created,
            jump_amp_error: amp,
            excluded_area: acc[3],
            excluded_lp_error: acc[4],
            silent_gamma_hat: silent,
            eta_eps: self.cover.eta_eps,
            cubes: self.cover.cubes.len(),
            strips: self.strips.len(),
            uncovered_length: self.cover.uncovered_length,
        })
    }
}

/// Midpoint rule for several integrands at once.
fn area_pass<const N: usize>(region: &Aabb, h: f64, f: impl Fn(V2) -> [f64; N] + Sync) -> [f64; N] {
    let nx = ((region.width() / h).round() as usize).max(1);
    let ny = ((region.height() / h).round() as usize).max(1);
    let (dx, dy) = (region.width() / nx as f64, region.height() / ny as f64);
    let w = dx * dy;
    (0..ny)
        .into_par_iter()
        .map(|j| {
            let y = region.min.y + (j as f64 + 0.5) * dy;
            let mut s = [0.0; N];
            for i in 0..nx {
                let v = f(v2(region.min.x + (i as f64 + 0.5) * dx, y));
                for (a, b) in s.iter_mut().zip(v) {
                    *a += b * w;
                }
            }
            s
        })
        .reduce(
            || [0.0; N],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

fn check_eps_theta(eps: f64, theta: f64) -> Result<(), PipelineError> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(PipelineError::Epsilon(eps));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(PipelineError::Theta(theta));
    }
    Ok(())
}

/// Jump-length construction with all metrics.
pub fn approximate_thm11(f: &SbdField, k: u32, theta: f64, eps: f64, p: f64) -> Result<(Approximation<'_>, ReportRow), PipelineError> {
    check_eps_theta(eps, theta)?;
    let a = Approximation::build(f, Theorem::Thm11, k, eps, PipelineOptions { theta, ..Default::default() })?;
    let r = a.report(p)?;
    Ok((a, r))
}

/// Plain-convolution construction.
pub fn approximate_thm12(f: &SbdField, k: u32, eps: f64) -> Result<(Approximation<'_>, ReportRow), PipelineError> {
    let a = Approximation::build(f, Theorem::Thm12, k, eps, PipelineOptions::default())?;
    let r = a.report(2.0)?;
    Ok((a, r))
}

/// Jump-energy construction.
pub fn approximate_thm13(f: &SbdField, k: u32, eps: f64, p: f64) -> Result<(Approximation<'_>, ReportRow), PipelineError> {
    let a = Approximation::build(f, Theorem::Thm13, k, eps, PipelineOptions::default())?;
    let r = a.report(p)?;
    Ok((a, r))
}

/// Both sides of `int |e(u_k)|^p <= int |e(u)|^p + C |E^j u|(Omega \ Gamma-hat)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StrainExcess {
    pub approx: f64,
    pub original: f64,
    pub tail: f64,
    /// `(approx - original) / tail`, or 0 when there is no excess.
    pub constant: f64,
}

pub fn strain_excess(a: &Approximation<'_>, p: f64) -> StrainExcess {
    let f = a.field;
    let dom = a.cover.domain;
    let h = metric_spacing(f, a.k);
    let [ak, au] = area_pass(&dom, h, |x| [frob(&sym(&a.jet(x).1)).powf(p), frob(&sym(&f.gradient(x))).powf(p)]);
    let tail: f64 = a
        .cover
        .uncovered
        .iter()
        .map(|q| gauss_on(&q.seg, 8, |x| frob(&sym_tensor_product(jump_at(f, x, q.normal), q.normal))))
        .sum();
    let excess = (ak - au).max(0.0);
    let constant = if excess == 0.0 { 0.0 } else { excess / tail };
    StrainExcess { approx: ak, original: au, tail, constant }
}

/// Agreement of neighbouring strip approximants below both faces.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AdjacentAudit {
    pub pairs: usize,
    pub samples: usize,
    pub max_gap: f64,
}

/// Compares each pair of neighbouring strips on a 6 x 4 sample grid below
/// both faces. Pairs whose fattened zone is crossed by the surface below
/// either face are skipped, since their reflected fields see different input.
pub fn adjacent_strip_agreement(a: &Approximation<'_>) -> AdjacentAudit {
    let kf = a.k as f64;
    let mut out = AdjacentAudit { pairs: 0, samples: 0, max_gap: 0.0 };
    for (ci, (cube, d)) in a.cover.cubes.iter().zip(&a.decompositions).enumerate() {
        let rho = cube.rho();
        let margin = 6.0 / kf;
        for (side, st) in d.sides.iter().enumerate() {
            for m in 0..d.count_per_side().saturating_sub(1) {
                // the strip approximants are built on faces fattened by at most rho
                let fat = (FATTEN / kf).min(rho);
                let lo = (st.faces[m + 1].0 - fat).max(-rho) + margin;
                let hi = (st.faces[m].1 + fat).min(rho) - margin;
                let top = (st.heights[m].min(st.heights[m + 1]) - (4.0 * SQRT_2 + 0.5)) / kf;
                let zone = ((st.faces[m].0 - fat).max(-rho), (st.faces[m + 1].1 + fat).min(rho));
                let lowest = side_range(cube, st.sign, zone.0, zone.1).0 * kf;
                if hi <= lo || top <= -rho + margin || lowest < st.heights[m].max(st.heights[m + 1]) {
                    continue;
                }
                let (p, q) = (a.strip(ci, side, m), a.strip(ci, side, m + 1));
                out.pairs += 1;
                for i in 0..6 {
                    for j in 0..4 {
                        let s = lo + (hi - lo) * (i as f64 + 0.5) / 6.0;
                        let y = -rho + margin + (top + rho - margin) * (j as f64 + 0.5) / 4.0;
                        let x = cube.rect.to_world(v2(s, y) * st.sign);
                        out.max_gap = out.max_gap.max((p.approx.value(x) - q.approx.value(x)).norm());
                        out.samples += 1;
                    }
                }
            }
        }
    }
    out
}

/// Jumps of `u_k` on the seams between strips.
#[derive(Clone, Debug, Serialize)]
pub struct SeamAudit {
    pub seam_count: usize,
    /// Total length of the seams.
    pub seam_total: f64,
    /// Length of the seams where `u_k` jumps.
    pub seam_length: f64,
    pub seam_jump_energy: f64,
    /// Per cube: jumping seam length and the bound `8 (strip count) / k`.
    pub per_cube: Vec<(f64, f64)>,
    pub holds: bool,
}

pub fn seam_audit(a: &Approximation<'_>) -> SeamAudit {
    let kf = a.k as f64;
    let jk = a.jump_pieces();
    let mut per_cube = Vec::new();
    let mut count = 0;
    let mut total = 0.0;
    let mut energy = 0.0;
    for (c, d) in a.cover.cubes.iter().zip(&a.decompositions) {
        let seams = d.seams(c);
        count += seams.len();
        total += seams.iter().map(|s| s.length()).sum::<f64>();
        let on: Vec<&JumpPiece> = jk.iter().filter(|q| seams.iter().any(|s| s.distance(q.seg.a) <= 1e-9 && s.distance(q.seg.b) <= 1e-9)).collect();
        let len: f64 = on.iter().map(|q| q.seg.length()).sum();
        energy += on.iter().map(|q| gauss_on(&q.seg, 4, |x| jump_at(a, x, q.normal).norm())).sum::<f64>();
        let bound = 8.0 * (2 * d.count_per_side()) as f64 / kf;
        per_cube.push((len, bound));
    }
    let seam_length = per_cube.iter().map(|p| p.0).sum();
    let holds = per_cube.iter().all(|(l, b)| *l <= *b + 1e-12);
    SeamAudit { seam_count: count, seam_total: total, seam_length, seam_jump_energy: energy, per_cube, holds }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{self, crack_spec};
    use crate::rough_approx::build_rough;
    use crate::sbd_field::tests::horizontal_jump;

    #[test]
    fn flat_crack_cover_is_flat_and_complete() {
        let f = horizontal_jump("(0, 0)", "(1, 0)", "(1, 0)", 1.0 / 64.0);
        let c = cover_jump_set(&f, 0.1).unwrap();
        assert!(!c.cubes.is_empty() && c.cubes.len() <= 4);
        for q in &c.cubes {
            let (slope, dev) = q.graph_bounds();
            assert_eq!(slope, 0.0);
            assert!(dev < 1e-12);
            assert!((q.rect.normal().y.abs() - 1.0).abs() < 1e-12);
        }
        assert!(c.uncovered_length < 1e-12);
        assert!((c.gamma_hat_length() - 1.0).abs() < 1e-12);
        assert_eq!(c.eta_eps, 0.1);
        for i in 0..c.cubes.len() {
            for j in 0..i {
                assert!(!overlaps(&c.cubes[i].rect, &c.cubes[j].rect, 1e-12));
            }
        }
    }
    fn arc_field(r: f64, n: usize) -> SbdField {
        let pts: Vec<(f64, f64)> =
            (0..=n).map(|i| i as f64 / n as f64 * 0.5 * PI).map(|t| (r * t.sin(), r * t.cos())).collect();
        crack_spec(&pts, "(0.1*x, 0.2*y)", "(0.1*x + 1, 0.2*y + 0.5)", "(1, 0.5)", 1.0 / 64.0).build().unwrap()
    }

    #[test]
    fn quarter_circle_cover_passes_slope_scan() {
        let f = arc_field(0.6, 48);
        let eps = 0.1;
        let c = cover_jump_set(&f, eps).unwrap();
        assert!(c.cubes.len() > 2);
        for q in &c.cubes {
            let (slope, dev) = q.graph_bounds();
            assert!(slope <= 0.5 * eps + 1e-9, "slope {slope}");
            assert!(dev <= 0.5 * eps + 1e-9, "dev {dev}");
            // slope scan on the world polyline against the cube normal
            let n = q.rect.normal();
            let t = q.rect.tangent();
            for s in q.surface_segments() {
                let d = s.b - s.a;
                assert!(d.dot(&n).abs() <= 0.5 * eps * d.dot(&t).abs() + 1e-9);
            }
        }
        for i in 0..c.cubes.len() {
            for j in 0..i {
                assert!(!overlaps(&c.cubes[i].rect, &c.cubes[j].rect, 1e-12));
            }
        }
        assert!(c.uncovered_length < eps);
        check_coverage(&c).unwrap();
    }

    #[test]
    fn eta_matches_direct_tail_quadrature() {
        let f = crack_spec(&[(0.0, 0.3), (0.5, 0.6), (1.0, 0.35)], "(0, 0)", "(x, 0)", "(x, 0)", 1.0 / 64.0).build().unwrap();
        let eps = 0.05;
        // cubes no smaller than 1/4 cannot pass the kink, so the tail is large
        let opts = CoverOptions { rho_min: 0.25, rho_max: 0.25, ..Default::default() };
        let c = cover_jump_set_with(&f, eps, &opts).unwrap();
        assert!(c.uncovered_length > 0.0);
        let direct: f64 = c
            .uncovered
            .iter()
            .map(|p| {
                let n = 4000;
                (0..n).map(|i| p.seg.at((i as f64 + 0.5) / n as f64).x).sum::<f64>() * p.seg.length() / n as f64
            })
            .sum();
        assert!((c.tail_energy - direct).abs() <= 1e-6 * direct.max(1.0), "{} vs {direct}", c.tail_energy);
        assert_eq!(c.eta_eps, eps.max(c.tail_energy));
        assert!(check_coverage(&c).is_err());
    }

    fn square_cube(rho: f64, surface: Vec<V2>) -> CoverCube {
        let rect = Rect::oriented_square(v2(0.5, 0.5), rho, v2(0.0, 1.0));
        CoverCube { aabb: rect.aabb(), rect, surface, boundary: false }
    }

    #[test]
    fn flat_surface_gives_equal_heights() {
        let cube = square_cube(0.25, vec![v2(-0.25, 0.0), v2(0.25, 0.0)]);
        let d = strip_decompose(&cube, 32, 0.1).unwrap();
        for st in &d.sides {
            assert!(st.heights.windows(2).all(|w| w[0] == w[1]));
            assert_eq!(st.heights[0], -0.25);
        }
        assert_eq!(d.max_height_drift(), 0.0);
    }

    #[test]
    fn steepest_surface_drifts_at_most_half() {
        let (rho, eps, k) = (0.25, 0.2, 64);
        let cube = square_cube(rho, vec![v2(-rho, -0.5 * eps * rho), v2(rho, 0.5 * eps * rho)]);
        assert!(cube.graph_bounds().0 <= 0.5 * eps + 1e-15);
        let d = strip_decompose(&cube, k, eps).unwrap();
        assert!(d.max_height_drift() <= 0.5 + 1e-9, "{}", d.max_height_drift());
        // the surface over each face sits in (m_n, m_n + 1/2) / k
        let kf = k as f64;
        for st in &d.sides {
            for (&(a, b), &h) in st.faces.iter().zip(&st.heights) {
                for i in 0..=20 {
                    let s = a + (b - a) * i as f64 / 20.0;
                    let y = side_height(&cube, st.sign, s) * kf;
                    assert!(y >= h - 1e-9 && y <= h + 0.5 + 1e-9, "{y} vs {h}");
                }
            }
        }
    }

    #[test]
    fn strip_count_and_partition() {
        let cube = square_cube(0.3, vec![v2(-0.3, 0.0), v2(0.3, 0.0)]);
        for (k, eta) in [(16, 0.1), (40, 0.1), (64, 0.25), (7, 0.05)] {
            let d = strip_decompose(&cube, k, eta).unwrap();
            let want = (2.0 * 0.3 * eta * k as f64).ceil() as usize;
            assert_eq!(d.count_per_side(), want, "k {k} eta {eta}");
            assert!(d.sides[0].faces.iter().all(|(a, b)| b - a <= d.width * (1.0 + 1e-12)));
            for st in &d.sides {
                assert_eq!(st.faces[0].0, -0.3);
                assert_eq!(st.faces.last().unwrap().1, 0.3);
                assert!(st.faces.windows(2).all(|w| w[0].1 == w[1].0));
            }
        }
        assert_eq!(strip_decompose(&cube, 0, 0.1).unwrap_err(), PipelineError::BadK);
    }

    #[test]
    fn steep_surface_has_no_height() {
        let cube = square_cube(0.25, vec![v2(-0.25, -0.2), v2(0.25, 0.2)]);
        assert!(matches!(strip_decompose(&cube, 64, 0.1), Err(PipelineError::NoHeight { .. })));
    }

    #[test]
    fn smooth_thm11_is_build_rough() {
        let f = corpus::field("smooth-poly").unwrap();
        let k = 32;
        let a = Approximation::build(&f, Theorem::Thm11, k, 0.1, PipelineOptions::default()).unwrap();
        assert!(a.cover.cubes.is_empty() && a.strips.is_empty());
        let dom = f.bbox();
        let r = build_rough(&f, &dom, &dom.dilate(1.0), k, 0.1, f.h).unwrap();
        for j in 0..17 {
            for i in 0..17 {
                let x = v2((i as f64 + 0.37) / 17.0, (j as f64 + 0.61) / 17.0);
                let (va, ga) = a.jet(x);
                let (vr, gr) = r.jet(x);
                assert!((va - vr).norm() <= 1e-10 && (ga - gr).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn smooth_thm12_creates_no_jump() {
        let f = corpus::field("smooth-poly").unwrap();
        let (a, row) = approximate_thm12(&f, 16, 0.1).unwrap();
        assert_eq!(row.jump_created, 0.0);
        assert!(a.jump_pieces().is_empty());
    }

    #[test]
    fn rigid_input_is_fixed_by_thm12_and_thm13() {
        let u = crate::expr::PolyVec::parse("(1 - 0.2*y, 0.5 + 0.2*x)").unwrap();
        let f = SbdField::smooth(Rect::unit_square(), 1.0 / 64.0, u);
        let (_, r12) = approximate_thm12(&f, 16, 0.1).unwrap();
        let (_, r13) = approximate_thm13(&f, 16, 0.1, 2.0).unwrap();
        for r in [r12, r13] {
            assert!(r.bd_error <= 1e-8 && r.strain_lp_error <= 1e-8, "{r:?}");
        }
    }

    #[test]
    fn smooth_thm13_strain_matches_thm12() {
        let f = corpus::field("boundary-trace").unwrap();
        let (_, r12) = approximate_thm12(&f, 16, 0.1).unwrap();
        let (_, r13) = approximate_thm13(&f, 16, 0.1, 2.0).unwrap();
        assert!((r12.strain_lp_error - r13.strain_lp_error).abs() <= 1e-8);
    }

    #[test]
    fn strict_scale_rejects_small_k() {
        let f = horizontal_jump("(0, 0)", "(1, 0)", "(1, 0)", 1.0 / 64.0);
        let opts = PipelineOptions { strict_scale: true, ..Default::default() };
        match Approximation::build(&f, Theorem::Thm12, 16, 0.1, opts) {
            Err(PipelineError::Scale { k, need, .. }) => assert!(k == 16 && need > 16.0),
            Err(e) => panic!("{e}"),
            Ok(_) => panic!("accepted"),
        };
    }

    #[test]
    fn bad_parameters_are_rejected() {
        let f = horizontal_jump("(0, 0)", "(1, 0)", "(1, 0)", 1.0 / 64.0);
        assert_eq!(cover_jump_set(&f, 0.5).unwrap_err(), PipelineError::Epsilon(0.5));
        assert!(matches!(approximate_thm11(&f, 16, 1.0, 0.1, 2.0), Err(PipelineError::Theta(_))));
        assert!(matches!(approximate_thm13(&f, 16, 0.1, 1.0), Err(PipelineError::Exponent(_))));
        assert!(matches!(approximate_thm12(&f, 0, 0.1), Err(PipelineError::BadK)));
    }

    fn bent_field() -> SbdField {
        crack_spec(&[(0.0, 0.5), (0.5, 0.53), (1.0, 0.5)], "(0.2*x^2, 0.1*x*y)", "(0.2*x^2 + 1, 0.1*x*y + 0.3*x)", "(1, 0.3*x)", 1.0 / 64.0)
            .build()
            .unwrap()
    }

    #[test]
    fn gluing_is_exact() {
        let f = bent_field();
        let a = Approximation::build(&f, Theorem::Thm12, 16, 0.4, PipelineOptions::default()).unwrap();
        assert!(!a.strips.is_empty());
        let mut seen_strip = false;
        for j in 0..40 {
            for i in 0..40 {
                let x = v2((i as f64 + 0.5) / 40.0, (j as f64 + 0.5) / 40.0);
                let o = a.owner(x);
                assert_eq!(a.value(x), a.piece_value(o, x));
                match o {
                    Owner::Remainder => assert!(a.cover.in_remainder(x)),
                    Owner::Strip { cube, side, m } => {
                        seen_strip = true;
                        assert!(a.strip(cube, side, m).region.contains_closed(x, 1e-12));
                    }
                }
            }
        }
        assert!(seen_strip);
    }

    #[test]
    fn adjacent_strips_agree_below_the_faces() {
        let f = bent_field();
        for thm in [Theorem::Thm11, Theorem::Thm12] {
            let a = Approximation::build(&f, thm, 32, 0.4, PipelineOptions::default()).unwrap();
            let r = adjacent_strip_agreement(&a);
            assert!(r.pairs > 0 && r.samples == 24 * r.pairs);
            assert!(r.max_gap <= 1e-10, "{thm:?}: {r:?}");
        }
    }

    #[test]
    fn seam_audit_rigid_flat_and_bent() {
        let f = corpus::field("piecewise-rigid-flat").unwrap();
        let a = Approximation::build(&f, Theorem::Thm12, 32, 0.1, PipelineOptions::default()).unwrap();
        let s = seam_audit(&a);
        assert!(s.seam_count > 0);
        assert!(s.seam_jump_energy <= 1e-8, "{}", s.seam_jump_energy);
        assert!(s.holds);

        let f = bent_field();
        for k in [16, 32] {
            let a = Approximation::build(&f, Theorem::Thm11, k, 0.4, PipelineOptions::default()).unwrap();
            let s = seam_audit(&a);
            assert!(s.holds, "{:?}", s.per_cube);
            for ((_, bound), d) in s.per_cube.iter().zip(&a.decompositions) {
                assert!((bound - 16.0 * d.count_per_side() as f64 / k as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn strain_excess_is_recorded() {
        let f = bent_field();
        let (a, _) = approximate_thm13(&f, 16, 0.4, 2.0).unwrap();
        let e = strain_excess(&a, 2.0);
        assert!(e.approx.is_finite() && e.original > 0.0 && e.tail >= 0.0 && e.constant >= 0.0);
    }

    #[test]
    fn report_entries_are_finite_and_nonnegative() {
        let f = bent_field();
        for thm in [Theorem::Thm11, Theorem::Thm12, Theorem::Thm13] {
            let a = Approximation::build(&f, thm, 16, 0.4, PipelineOptions::default()).unwrap();
            let r = a.report(2.0).unwrap();
            assert!(r.metrics().iter().all(|v| v.is_finite() && *v >= 0.0), "{r:?}");
        }
    }
}
