//! Lattice rough approximation: good/bad nodes, exceptional cells, rigid
//! fits per node and the glued field `u_k`, plus the energy-rule and
//! plain-convolution variants.

use crate::geometry::{v2, Aabb, Lattice, NodeId, Segment, M2, V2};
use crate::mollify::{mollify, Mollifier, MollifiedField, MollifyError};
use crate::rigid_fit::{fit_on_grid, CellGrid, RigidMotion};
use crate::sbd_field::{frob, integrate_area, integrate_segment, jump_sym_energy, sym, sym_tensor_product, Field, JumpPiece, LocalSplit};
use crate::expr::PolyVec;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{HashMap, HashSet};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RoughError {
    #[error("theta must lie in (0, 1), got {0}")]
    Theta(f64),
    #[error("margin {margin} between the domains is too small, need k >= {min_k}")]
    Margin { margin: f64, min_k: u32 },
    #[error("the approximation domain is not inside the field's domain")]
    Outside,
    #[error("k must be positive")]
    BadK,
    #[error(transparent)]
    Mollify(#[from] MollifyError),
}

/// Which node rule decides good and bad.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum NodeRule {
    /// `H1(J ∩ Q_z) <= theta / k`; bad region is the union of `Q_z`.
    JumpLength { theta: f64 },
    /// `|E^j u|(q~_z) <= k^-2`; bad region is the union of `q~_z`.
    JumpEnergy,
}

impl NodeRule {
    /// Half side of the bad cube in units of `1/k`.
    fn reach(&self) -> i64 {
        match self {
            NodeRule::JumpLength { .. } => 4,
            NodeRule::JumpEnergy => 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NodeClassification {
    pub lattice: Lattice,
    pub rule: NodeRule,
    /// Classified nodes in `(z2, z1)` order.
    pub nodes: Vec<NodeId>,
    /// Per node, the quantity compared against the threshold.
    pub measure: Vec<f64>,
    pub good: Vec<NodeId>,
    pub bad: Vec<NodeId>,
    /// `H1` of the jump set inside the union of the test cubes.
    pub jump_length: f64,
    /// `|E^j u|` of that same union.
    pub jump_energy: f64,
    bad_set: HashSet<NodeId>,
}

fn sort_nodes(nodes: &mut Vec<NodeId>) {
    nodes.sort_by_key(|n| (n.1, n.0));
    nodes.dedup();
}

/// Unit (side `1/k`) cells covered by the union of the given bad cubes.
fn unit_cells(nodes: &[NodeId], reach: i64) -> HashSet<(i64, i64)> {
    let mut out = HashSet::new();
    for &(i, j) in nodes {
        // node at (2i+1)/k, cube spans (2i+1-reach .. 2i+1+reach)/k
        let (cx, cy) = (2 * i + 1, 2 * j + 1);
        for b in cy - reach..cy + reach {
            for a in cx - reach..cx + reach {
                out.insert((a, b));
            }
        }
    }
    out
}

impl NodeClassification {
    pub fn k(&self) -> u32 {
        self.lattice.k
    }

    pub fn is_bad(&self, z: NodeId) -> bool {
        self.bad_set.contains(&z)
    }

    /// Bad cube of a node (`Q_z` or `q~_z`).
    pub fn bad_cube(&self, z: NodeId) -> Aabb {
        self.lattice.cube(z, self.rule.reach() as f64)
    }

    /// Whether `x` lies in the open union of bad cubes.
    pub fn in_bad_region(&self, x: V2) -> bool {
        if self.bad_set.is_empty() {
            return false;
        }
        let k = self.lattice.k as f64;
        let r = self.rule.reach() as f64;
        let (xk, yk) = (x.x * k, x.y * k);
        let lo = |t: f64| ((t - r - 1.0) / 2.0).floor() as i64 + 1;
        let hi = |t: f64| ((t + r - 1.0) / 2.0).ceil() as i64 - 1;
        for j in lo(yk)..=hi(yk) {
            for i in lo(xk)..=hi(xk) {
                if self.bad_set.contains(&(i, j)) {
                    let c = self.lattice.node((i, j));
                    if (x - c).abs().max() < r / k {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Area of the bad region, optionally clipped to a box.
    pub fn bad_region_area(&self, within: Option<&Aabb>) -> f64 {
        let cells = unit_cells(&self.bad, self.rule.reach());
        let h = self.lattice.inv_k();
        cells
            .iter()
            .map(|&(a, b)| {
                let c = Aabb::new(v2(a as f64 * h, b as f64 * h), v2((a + 1) as f64 * h, (b + 1) as f64 * h));
                match within {
                    Some(w) => {
                        let i = c.intersection(w);
                        if i.is_empty() {
                            0.0
                        } else {
                            i.area()
                        }
                    }
                    None => c.area(),
                }
            })
            .sum()
    }

    /// Edges where `u_k` may jump: every `q_z` edge inside the closed bad
    /// region and the boundary of the bad region.
    pub fn jump_candidates(&self, region: &Aabb) -> Vec<Segment> {
        let cells = unit_cells(&self.bad, self.rule.reach());
        let h = self.lattice.inv_k();
        let mut edges: HashSet<(u8, i64, i64)> = HashSet::new();
        for &(a, b) in &cells {
            // horizontal edges at y = b and y = b + 1, vertical at x = a and a + 1
            for (dir, ea, eb, nb) in [(0u8, a, b, (a, b - 1)), (0, a, b + 1, (a, b + 1)), (1, a, b, (a - 1, b)), (1, a + 1, b, (a + 1, b))] {
                let line = if dir == 0 { eb } else { ea };
                if line.rem_euclid(2) == 0 || !cells.contains(&nb) {
                    edges.insert((dir, ea, eb));
                }
            }
        }
        let mut out: Vec<Segment> = edges
            .into_iter()
            .map(|(dir, a, b)| {
                let p = v2(a as f64 * h, b as f64 * h);
                if dir == 0 {
                    Segment::new(p, p + v2(h, 0.0))
                } else {
                    Segment::new(p, p + v2(0.0, h))
                }
            })
            .filter_map(|s| s.clip_aabb(region))
            .filter(|s| s.length() > 0.0)
            .collect();
        out.sort_by(|s, t| (s.a.y, s.a.x, s.b.y, s.b.x).partial_cmp(&(t.a.y, t.a.x, t.b.y, t.b.x)).unwrap());
        out
    }
}

fn clipped_length(pieces: &[JumpPiece], bx: &Aabb) -> f64 {
    pieces.iter().map(|p| p.seg.length_in(bx)).sum()
}

fn clipped_pieces(pieces: &[JumpPiece], bx: &Aabb) -> Vec<JumpPiece> {
    pieces.iter().filter_map(|p| p.seg.clip_aabb(bx).map(|s| JumpPiece::new(s, p.normal))).collect()
}

/// Classify an explicit node list under a rule.
pub fn classify_with(f: &dyn Field, lattice: Lattice, mut nodes: Vec<NodeId>, rule: NodeRule) -> NodeClassification {
    sort_nodes(&mut nodes);
    let k = lattice.k as f64;
    let measure: Vec<f64> = nodes
        .par_iter()
        .map(|&z| {
            let mut pieces = Vec::new();
            match rule {
                NodeRule::JumpLength { .. } => {
                    let q = lattice.big_q(z);
                    f.jumps(&q, &mut pieces);
                    clipped_length(&pieces, &q)
                }
                NodeRule::JumpEnergy => {
                    let q = lattice.q_tilde(z);
                    f.jumps(&q, &mut pieces);
                    jump_sym_energy(f, &clipped_pieces(&pieces, &q))
                }
            }
        })
        .collect();
    let threshold = match rule {
        NodeRule::JumpLength { theta } => theta / k,
        NodeRule::JumpEnergy => 1.0 / (k * k),
    };
    let (mut good, mut bad) = (Vec::new(), Vec::new());
    for (z, m) in nodes.iter().zip(&measure) {
        if *m <= threshold {
            good.push(*z);
        } else {
            bad.push(*z);
        }
    }
    // the union of the test cubes, as unit cells, for the bound's right side
    let reach = rule.reach();
    let union = unit_cells(&nodes, reach);
    let hull = nodes.iter().fold(Aabb::empty(), |b, &z| b.union(&lattice.cube(z, reach as f64)));
    let mut pieces = Vec::new();
    if !hull.is_empty() {
        f.jumps(&hull, &mut pieces);
    }
    let h = lattice.inv_k();
    let mut jump_length = 0.0;
    let mut jump_energy = 0.0;
    for &(a, b) in &union {
        let c = Aabb::new(v2(a as f64 * h, b as f64 * h), v2((a + 1) as f64 * h, (b + 1) as f64 * h));
        let cp = clipped_pieces(&pieces, &c);
        // half-open cells: drop the share on the upper/right edges
        jump_length += cp.iter().map(|p| half_open_length(&p.seg, &c)).sum::<f64>();
        jump_energy += cp
            .iter()
            .map(|p| half_open_length(&p.seg, &c) / p.seg.length().max(f64::MIN_POSITIVE) * jump_sym_energy(f, std::slice::from_ref(p)))
            .sum::<f64>();
    }
    let bad_set = bad.iter().copied().collect();
    NodeClassification { lattice, rule, nodes, measure, good, bad, jump_length, jump_energy, bad_set }
}

fn half_open_length(s: &Segment, c: &Aabb) -> f64 {
    let on_top = (s.a.y - c.max.y).abs() < 1e-14 && (s.b.y - c.max.y).abs() < 1e-14;
    let on_right = (s.a.x - c.max.x).abs() < 1e-14 && (s.b.x - c.max.x).abs() < 1e-14;
    if on_top || on_right {
        0.0
    } else {
        s.length()
    }
}

/// Classify the nodes of `(2/k)(Z + 1/2)^2` lying in `omega`.
pub fn classify_nodes(f: &dyn Field, omega: &Aabb, k: u32, theta: f64) -> Result<NodeClassification, RoughError> {
    if k == 0 {
        return Err(RoughError::BadK);
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(RoughError::Theta(theta));
    }
    let lattice = Lattice::new(k);
    let nodes = lattice.nodes_in(omega).into_iter().filter(|&z| omega.contains_open(lattice.node(z))).collect();
    Ok(classify_with(f, lattice, nodes, NodeRule::JumpLength { theta }))
}

/// `u` with the exceptional cells replaced by the owning node's rigid motion.
pub struct Replaced<'a, F: Field> {
    pub inner: &'a F,
    h_fit: f64,
    cells: &'a HashMap<(i64, i64), u32>,
    motions: &'a [RigidMotion],
    coarse: &'a HashSet<NodeId>,
    lattice: Lattice,
}

impl<F: Field> Replaced<'_, F> {
    fn owner(&self, x: V2) -> Option<&RigidMotion> {
        if self.cells.is_empty() {
            return None;
        }
        let id = ((x.x / self.h_fit).floor() as i64, (x.y / self.h_fit).floor() as i64);
        self.cells.get(&id).map(|&m| &self.motions[m as usize])
    }

    fn touches_cells(&self, bx: &Aabb) -> bool {
        !self.coarse.is_empty() && self.lattice.cells_meeting(&bx.dilate(1e-12)).iter().any(|z| self.coarse.contains(z))
    }
}

impl<F: Field> Field for Replaced<'_, F> {
    fn value(&self, x: V2) -> V2 {
        match self.owner(x) {
            Some(m) => m.eval(x),
            None => self.inner.value(x),
        }
    }
    fn gradient(&self, x: V2) -> M2 {
        match self.owner(x) {
            Some(m) => m.skew(),
            None => self.inner.gradient(x),
        }
    }
    fn jumps(&self, region: &Aabb, out: &mut Vec<JumpPiece>) {
        self.inner.jumps(region, out);
    }
    fn kinks(&self, region: &Aabb, out: &mut Vec<Segment>) {
        self.inner.kinks(region, out);
        if !self.touches_cells(region) {
            return;
        }
        let h = self.h_fit;
        let i0 = (region.min.x / h).floor() as i64 - 1;
        let i1 = (region.max.x / h).ceil() as i64;
        let j0 = (region.min.y / h).floor() as i64 - 1;
        let j1 = (region.max.y / h).ceil() as i64;
        for j in j0..=j1 {
            for i in i0..=i1 {
                let here = self.cells.get(&(i, j));
                for (ni, nj, horiz) in [(i + 1, j, false), (i, j + 1, true)] {
                    if here != self.cells.get(&(ni, nj)) {
                        let p = if horiz { v2(i as f64 * h, (j + 1) as f64 * h) } else { v2((i + 1) as f64 * h, j as f64 * h) };
                        let q = if horiz { p + v2(h, 0.0) } else { p + v2(0.0, h) };
                        out.push(Segment::new(p, q));
                    }
                }
            }
        }
    }
    fn local_poly(&self, c: V2, r: f64) -> Option<PolyVec> {
        if self.touches_cells(&Aabb::around(c, r)) {
            return None;
        }
        self.inner.local_poly(c, r)
    }
    fn local_split(&self, c: V2, r: f64) -> Option<LocalSplit> {
        if self.touches_cells(&Aabb::around(c, r)) {
            return None;
        }
        self.inner.local_split(c, r)
    }
    fn one_sided(&self, x: V2, dir: V2) -> (V2, V2) {
        let d = 1e-9 * (1.0 + x.abs().max());
        (self.value(x + dir * d), self.value(x - dir * d))
    }
}

/// Per node rigid motions: `a~_z` on `q~_z`, and `a_z` on `q~_z` minus `omega_z`.
#[derive(Clone, Debug, Serialize)]
pub struct NodeMotions {
    pub tilde: RigidMotion,
    pub off_exceptional: Option<RigidMotion>,
    pub exceptional_area: f64,
}

/// The glued field `u_k` of a rough approximation.
pub struct RoughApproximant<F: Field> {
    pub inner: F,
    /// Region where `u_k` is meant to be evaluated.
    pub region: Aabb,
    pub classification: NodeClassification,
    pub motions: HashMap<NodeId, NodeMotions>,
    pub mollifier: Mollifier,
    pub h_fit: f64,
    pub exceptional_area: f64,
    cells: HashMap<(i64, i64), u32>,
    cell_motions: Vec<RigidMotion>,
    coarse: HashSet<NodeId>,
    fit_h: f64,
}

/// Fine fitting spacing `1/(k n)` with `n = max(8, ceil(1/(k h)))`.
pub fn fit_spacing(k: u32, h: f64) -> f64 {
    let kf = k as f64;
    let n = (1.0 / (kf * h)).ceil().max(8.0);
    1.0 / (kf * n)
}

#[derive(Clone, Copy, Debug)]
pub struct RoughOptions {
    pub k: u32,
    pub rule: NodeRule,
    /// Replace `u` on exceptional cells before mollifying.
    pub exceptional: bool,
    /// Field resolution used to pick the fitting spacing.
    pub h: f64,
}

impl<F: Field> RoughApproximant<F> {
    /// Build on `region`, classifying the nodes within `4/k` of it that pass `keep`.
    pub fn build(inner: F, region: Aabb, opts: RoughOptions, keep: Option<&(dyn Fn(&Aabb) -> bool + Sync)>) -> Self {
        let lattice = Lattice::new(opts.k);
        let ik = lattice.inv_k();
        let pass = |z: &NodeId| keep.is_none_or(|f| f(&lattice.q(*z)));
        let nodes: Vec<NodeId> = lattice.nodes_in(&region.dilate(4.0 * ik)).into_iter().filter(pass).collect();
        let classification = classify_with(&inner, lattice, nodes, opts.rule);
        let h_fit = fit_spacing(opts.k, opts.h);
        let reach = opts.rule.reach();

        // nodes whose a~_z can be used: cells meeting the region and the bad region
        let near_bad = |z: NodeId| {
            let span = reach / 2;
            (-span..=span).any(|dj| (-span..=span).any(|di| classification.is_bad((z.0 + di, z.1 + dj))))
        };
        let mut tilde_nodes: Vec<NodeId> = lattice.cells_meeting(&region).into_iter().filter(|&z| pass(&z) && near_bad(z)).collect();
        sort_nodes(&mut tilde_nodes);
        // good nodes whose exceptional cells can reach the mollifier support
        let mut exc_nodes: Vec<NodeId> = if opts.exceptional {
            classification
                .good
                .iter()
                .copied()
                .filter(|&z| lattice.q_tilde(z).intersects(&region.dilate(ik)))
                .collect()
        } else {
            Vec::new()
        };
        sort_nodes(&mut exc_nodes);

        let fit_tilde = |z: NodeId| {
            let grid = CellGrid::fit(&lattice.q_tilde(z), h_fit);
            fit_on_grid(&inner, &grid, None, 2.0).motion
        };
        let tildes: Vec<(NodeId, RigidMotion)> = tilde_nodes.par_iter().map(|&z| (z, fit_tilde(z))).collect();
        let excs: Vec<(NodeId, Option<(RigidMotion, Vec<(i64, i64)>)>)> = exc_nodes
            .par_iter()
            .map(|&z| {
                let qt = lattice.q_tilde(z);
                let grid = CellGrid::fit(&qt, h_fit);
                let mut pieces = Vec::new();
                inner.jumps(&qt.dilate(2.0 * grid.h), &mut pieces);
                if pieces.is_empty() {
                    return (z, None);
                }
                let mask = grid.near_mask(&pieces);
                if !mask.iter().any(|&b| b) {
                    return (z, None);
                }
                let fit = fit_on_grid(&inner, &grid, Some(&mask), 2.0);
                let oi = (grid.origin.x / grid.h).round() as i64;
                let oj = (grid.origin.y / grid.h).round() as i64;
                let mut ids = Vec::new();
                for j in 0..grid.ny {
                    for i in 0..grid.nx {
                        if mask[j * grid.nx + i] {
                            ids.push((oi + i as i64, oj + j as i64));
                        }
                    }
                }
                (z, Some((fit.motion, ids)))
            })
            .collect();

        let mut motions: HashMap<NodeId, NodeMotions> = HashMap::new();
        for (z, m) in tildes {
            motions.insert(z, NodeMotions { tilde: m, off_exceptional: None, exceptional_area: 0.0 });
        }
        let mut cells = HashMap::new();
        let mut cell_motions = Vec::new();
        let mut coarse = HashSet::new();
        for (z, e) in excs {
            let Some((m, ids)) = e else { continue };
            let id = cell_motions.len() as u32;
            cell_motions.push(m);
            let mut claimed = 0usize;
            for c in ids {
                if let std::collections::hash_map::Entry::Vacant(v) = cells.entry(c) {
                    v.insert(id);
                    claimed += 1;
                    coarse.insert(lattice.cell_of(v2((c.0 as f64 + 0.5) * h_fit, (c.1 as f64 + 0.5) * h_fit)));
                }
            }
            let entry = motions.entry(z).or_insert_with(|| NodeMotions { tilde: fit_tilde(z), off_exceptional: None, exceptional_area: 0.0 });
            entry.off_exceptional = Some(m);
            entry.exceptional_area = claimed as f64 * h_fit * h_fit;
        }
        let exceptional_area = cells.len() as f64 * h_fit * h_fit;
        RoughApproximant {
            inner,
            region,
            classification,
            motions,
            mollifier: Mollifier { k: opts.k as f64 },
            h_fit,
            exceptional_area,
            cells,
            cell_motions,
            coarse,
            fit_h: h_fit,
        }
    }

    /// The field `u~_k` that gets mollified.
    pub fn replaced(&self) -> Replaced<'_, F> {
        Replaced { inner: &self.inner, h_fit: self.fit_h, cells: &self.cells, motions: &self.cell_motions, coarse: &self.coarse, lattice: self.classification.lattice }
    }

    fn tilde_at(&self, z: NodeId) -> RigidMotion {
        match self.motions.get(&z) {
            Some(m) => m.tilde,
            None => {
                let grid = CellGrid::fit(&self.classification.lattice.q_tilde(z), self.h_fit);
                fit_on_grid(&self.inner, &grid, None, 2.0).motion
            }
        }
    }

    /// Whether `x` is in the exceptional union `omega^k`.
    pub fn in_exceptional(&self, x: V2) -> bool {
        !self.cells.is_empty() && self.cells.contains_key(&((x.x / self.fit_h).floor() as i64, (x.y / self.fit_h).floor() as i64))
    }

    /// Membership in `E_k` (bad region or exceptional union).
    pub fn in_excluded(&self, x: V2) -> bool {
        self.classification.in_bad_region(x) || self.in_exceptional(x)
    }

    pub fn jet(&self, x: V2) -> (V2, M2) {
        if self.classification.in_bad_region(x) {
            let m = self.tilde_at(self.classification.lattice.cell_of(x));
            return (m.eval(x), m.skew());
        }
        self.mollifier.convolve_jet(&self.replaced(), x)
    }

    pub fn jump_candidates(&self, region: &Aabb) -> Vec<Segment> {
        self.classification.jump_candidates(region)
    }
}

impl<F: Field> Field for RoughApproximant<F> {
    fn value(&self, x: V2) -> V2 {
        if self.classification.in_bad_region(x) {
            return self.tilde_at(self.classification.lattice.cell_of(x)).eval(x);
        }
        self.mollifier.convolve(&self.replaced(), x)
    }
    fn gradient(&self, x: V2) -> M2 {
        self.jet(x).1
    }
    fn jumps(&self, region: &Aabb, out: &mut Vec<JumpPiece>) {
        let k = self.classification.k() as f64;
        out.extend(extract_jumps(self, &self.jump_candidates(region), 1.0 / (8.0 * k), JUMP_TOL));
    }
    fn one_sided(&self, x: V2, dir: V2) -> (V2, V2) {
        let d = 1e-10 * (1.0 + x.abs().max());
        (self.value(x + dir * d), self.value(x - dir * d))
    }
}

/// Relative threshold on `|[u_k]|` for a candidate piece to count as jump.
pub const JUMP_TOL: f64 = 1e-6;

/// Split candidates into pieces no longer than `max_piece` and keep those
/// whose one-sided difference at the midpoint exceeds `tol (1 + |u|)`.
pub fn extract_jumps(f: &dyn Field, candidates: &[Segment], max_piece: f64, tol: f64) -> Vec<JumpPiece> {
    candidates
        .par_iter()
        .flat_map_iter(|s| {
            let n = (s.length() / max_piece).ceil().max(1.0) as usize;
            let nrm = s.left_normal();
            (0..n)
                .filter_map(move |i| {
                    let p = s.sub(i as f64 / n as f64, (i + 1) as f64 / n as f64);
                    let (hi, lo) = f.one_sided(p.midpoint(), nrm);
                    let scale = 1.0 + lo.norm().max(hi.norm());
                    ((hi - lo).norm() > tol * scale).then(|| JumpPiece::new(p, nrm))
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn check_margin(omega: &Aabb, omega_tilde: &Aabb, k: u32, factor: f64) -> Result<(), RoughError> {
    if k == 0 {
        return Err(RoughError::BadK);
    }
    if !omega_tilde.contains_box(omega) {
        return Err(RoughError::Outside);
    }
    let margin = (omega.min.x - omega_tilde.min.x)
        .min(omega.min.y - omega_tilde.min.y)
        .min(omega_tilde.max.x - omega.max.x)
        .min(omega_tilde.max.y - omega.max.y);
    if !(margin * k as f64 > factor) {
        let min_k = if margin > 0.0 { (factor / margin).floor() as u32 + 1 } else { u32::MAX };
        return Err(RoughError::Margin { margin, min_k });
    }
    Ok(())
}

/// Rough approximation with the jump-length rule and exceptional cells.
/// `omega_tilde` is where `f` is known; its distance to `omega` must exceed `16 sqrt2 / k`.
pub fn build_rough<F: Field>(f: F, omega: &Aabb, omega_tilde: &Aabb, k: u32, theta: f64, h: f64) -> Result<RoughApproximant<F>, RoughError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(RoughError::Theta(theta));
    }
    check_margin(omega, omega_tilde, k, 16.0 * std::f64::consts::SQRT_2)?;
    Ok(RoughApproximant::build(f, *omega, RoughOptions { k, rule: NodeRule::JumpLength { theta }, exceptional: true, h }, None))
}

/// Energy-rule variant: `u * phi_k` off the union of bad `q~_z`, `a~_z` on it.
pub fn build_rough_inf<F: Field>(f: F, omega: &Aabb, omega_tilde: &Aabb, k: u32, h: f64) -> Result<RoughApproximant<F>, RoughError> {
    check_margin(omega, omega_tilde, k, 8.0 * std::f64::consts::SQRT_2)?;
    Ok(RoughApproximant::build(f, *omega, RoughOptions { k, rule: NodeRule::JumpEnergy, exceptional: false, h }, None))
}

/// Plain mollification `v * phi_k` on `omega`.
pub fn build_rough_conv<F: Field>(f: F, omega: &Aabb, omega_tilde: &Aabb, k: u32) -> Result<MollifiedField<F>, RoughError> {
    let m = Mollifier::new(k as f64)?;
    if !omega_tilde.contains_box(omega) {
        return Err(RoughError::Outside);
    }
    Ok(mollify(f, m, omega, Some(omega_tilde))?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvStrainCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Parameter interval of `s` inside a convex set given by a membership test.
fn convex_interval(s: &Segment, inside: &dyn Fn(V2) -> bool) -> Option<(f64, f64)> {
    const N: usize = 256;
    let hit = (0..=N).map(|i| i as f64 / N as f64).find(|&t| inside(s.at(t)))?;
    let last = (0..=N).rev().map(|i| i as f64 / N as f64).find(|&t| inside(s.at(t)))?;
    let bisect = |mut a: f64, mut b: f64| {
        // a inside, b outside
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if inside(s.at(m)) {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let t0 = if hit == 0.0 { 0.0 } else { bisect(hit, hit - 1.0 / N as f64) };
    let t1 = if last == 1.0 { 1.0 } else { bisect(last, last + 1.0 / N as f64) };
    Some((t0, t1))
}

/// Both sides of `int_U |e(v * phi_k)| <= |Ev|(U + B(0, 1/k))`.
pub fn conv_strain_check(f: &dyn Field, u: &Aabb, k: u32, h: f64) -> ConvStrainCheck {
    let m = Mollifier { k: k as f64 };
    let r = m.radius();
    let lhs = integrate_area(u, h, |x| frob(&sym(&m.convolve_jet(f, x).1)));
    let big = u.dilate(r);
    let inside = |x: V2| u.distance(x) < r;
    let abs = integrate_area(&big, h.min(r / 8.0), |x| if inside(x) { frob(&sym(&f.gradient(x))) } else { 0.0 });
    let mut pieces = Vec::new();
    f.jumps(&big, &mut pieces);
    let mut jump = 0.0;
    for p in &pieces {
        if let Some(s) = p.seg.clip_aabb(&big) {
            if let Some((t0, t1)) = convex_interval(&s, &inside) {
                let sub = s.sub(t0, t1);
                jump += integrate_segment(&sub, |x, _| {
                    let (lo, hi) = f.one_sided(x, p.normal);
                    frob(&sym_tensor_product(hi - lo, p.normal))
                });
            }
        }
    }
    let rhs = abs + jump;
    ConvStrainCheck { lhs, rhs, holds: lhs <= rhs + 1e-6 * (1.0 + lhs) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbd_field::tests::horizontal_jump;
    use crate::sbd_field::{l1_distance, PolyField, SbdField};
    use crate::geometry::total_length;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit() -> Aabb {
        Aabb::new(v2(0.0, 0.0), v2(1.0, 1.0))
    }

    #[test]
    fn jump_free_all_good() {
        let f = PolyField(PolyVec::parse("(x^2, x*y)").unwrap());
        let c = classify_nodes(&f, &unit(), 16, 0.1).unwrap();
        assert!(c.bad.is_empty());
        assert_eq!(c.good.len(), 64);
        assert_eq!(c.bad_region_area(None), 0.0);
    }

    #[test]
    fn crack_bad_count_matches_enumeration() {
        let f = horizontal_jump("(0, 0)", "(1, 0)", "(1, 0)", 0.01);
        let k = 16;
        let c = classify_nodes(&f, &unit(), k, 0.1).unwrap();
        let kf = k as f64;
        let mut want = 0;
        for j in 0..8 {
            for i in 0..8 {
                let (x, y) = ((2 * i + 1) as f64 / kf, (2 * j + 1) as f64 / kf);
                if (y - 0.5).abs() < 4.0 / kf {
                    // the crack extends past the square as rays, so the chord is the full width
                    let chord = 8.0 / kf;
                    let _ = x;
                    if chord > 0.1 / kf {
                        want += 1;
                    }
                }
            }
        }
        assert_eq!(c.bad.len(), want);
        assert_eq!(want, 32);
        assert!((c.bad.len() as f64) <= c.jump_length * kf / 0.1);
        assert!(c.bad_region_area(None) <= 256.0 * c.jump_length / (kf * 0.1));
    }

    #[test]
    fn theta_monotone() {
        let f = horizontal_jump("(0, 0)", "(1, 0)", "(1, 0)", 0.01);
        let lo = classify_nodes(&f, &unit(), 32, 0.1).unwrap();
        let hi = classify_nodes(&f, &unit(), 32, 0.9).unwrap();
        assert!(hi.bad.iter().all(|z| lo.is_bad(*z)));
        assert!(matches!(classify_nodes(&f, &unit(), 32, 1.0), Err(RoughError::Theta(_))));
    }

    #[test]
    fn margin_rejected_with_min_k() {
        let f = PolyField(PolyVec::constant(v2(1.0, 0.0)));
        let omega = Aabb::new(v2(0.4, 0.4), v2(0.6, 0.6));
        let err = build_rough(&f, &omega, &unit(), 16, 0.1, 0.01).err().unwrap();
        assert_eq!(err, RoughError::Margin { margin: 0.4, min_k: 57 });
    }

    #[test]
    fn rigid_input_is_fixed() {
        let r = RigidMotion::new(v2(0.3, -0.2), 0.7);
        let f = PolyField(r.to_poly());
        let omega = unit();
        let big = omega.dilate(2.0);
        let uk = build_rough(&f, &omega, &big, 16, 0.1, 0.01).unwrap();
        assert!(uk.classification.bad.is_empty());
        for x in [v2(0.1, 0.2), v2(0.77, 0.5), v2(0.99, 0.01)] {
            assert!((uk.value(x) - r.eval(x)).norm() < 1e-8);
            assert!(frob(&sym(&uk.gradient(x))) < 1e-8);
        }
    }

    fn piecewise_rigid() -> SbdField {
        horizontal_jump("(0.1 + 0.2*y, -0.2*x)", "(1.1 - 0.3*y, 0.3*x)", "(1 - 0.5*y, 0.5*x)", 0.01)
    }

    #[test]
    fn piecewise_rigid_jump_bound_stable() {
        let f = piecewise_rigid();
        let omega = unit();
        let mut consts = Vec::new();
        for k in [8u32, 16, 32] {
            let big = omega.dilate(16.0 * std::f64::consts::SQRT_2 / k as f64 + 0.01);
            let uk = build_rough(&f, &omega, &big, k, 0.1, 0.01).unwrap();
            let mut j = Vec::new();
            uk.jumps(&omega, &mut j);
            let len = total_length(&j.iter().map(|p| p.seg).collect::<Vec<_>>());
            consts.push(len * 0.1 / 1.0);
            // strain vanishes away from the jump candidates
            let e = integrate_area(&Aabb::new(v2(0.0, 0.0), v2(1.0, 0.2)), 1.0 / 64.0, |x| frob(&sym(&uk.gradient(x))).powi(2));
            assert!(e < 1e-12, "k = {k}: {e}");
        }
        let (mn, mx) = consts.iter().fold((f64::MAX, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
        assert!(mx <= 2.0 * mn, "{consts:?}");
    }

    #[test]
    fn strain_field_l1_order() {
        let f = SbdField::smooth(crate::geometry::Rect::axis_aligned(v2(-3.0, -3.0), v2(4.0, 4.0)), 0.01, PolyVec::parse("(0.5*x^2, 0)").unwrap());
        let omega = unit();
        let big = Aabb::new(v2(-3.0, -3.0), v2(4.0, 4.0));
        let mut pts = Vec::new();
        for k in [8u32, 16, 32, 64] {
            let uk = build_rough(&f, &omega, &big, k, 0.1, 0.01).unwrap();
            let e = l1_distance(&uk, &f, &omega, 1.0 / 128.0);
            pts.push(((k as f64).ln(), e.ln()));
        }
        let n = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
        let (mx, my) = (sx / n, sy / n);
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!(-slope >= 0.9, "order {}", -slope);
    }

    #[test]
    fn energy_rule_jump_length_bound() {
        let f = horizontal_jump("(0, 0)", "(1, 0)", "(1, 0)", 0.01);
        let omega = unit();
        let big = omega.dilate(1.0);
        let uk = build_rough_inf(&f, &omega, &big, 16, 0.01).unwrap();
        let mut j = Vec::new();
        uk.jumps(&omega, &mut j);
        let len = total_length(&j.iter().map(|p| p.seg).collect::<Vec<_>>());
        let ej = jump_sym_energy(&f, &f.jump_pieces());
        assert_abs_diff_eq!(ej, 1.0 / 2f64.sqrt(), epsilon = 1e-12);
        assert!(len <= 16.0 * ej, "{len}");
        assert!(len > 0.0);
    }

    #[test]
    fn energy_rule_jump_free_is_convolution() {
        let f = PolyField(PolyVec::parse("(x^3, x*y^2)").unwrap());
        let omega = unit();
        let uk = build_rough_inf(&f, &omega, &omega.dilate(1.0), 16, 0.01).unwrap();
        assert!(uk.classification.bad.is_empty());
        let m = Mollifier::new(16.0).unwrap();
        let x = v2(0.3, 0.6);
        assert!((uk.value(x) - m.convolve(&f, x)).norm() < 1e-14);
    }

    #[test]
    fn conv_variant_strain_bound() {
        let f = horizontal_jump("(0, 0)", "(1, 0)", "(1, 0)", 0.01);
        let r = RigidMotion::new(v2(1.0, 2.0), 0.5);
        let rf = PolyField(r.to_poly());
        let omega = unit();
        let vk = build_rough_conv(&rf, &omega, &omega.dilate(0.1), 16).unwrap();
        assert!((vk.value(v2(0.2, 0.3)) - r.eval(v2(0.2, 0.3))).norm() < 1e-10);
        assert!(build_rough_conv(&rf, &omega, &omega.dilate(0.01), 16).is_err());
        let u = Aabb::new(v2(0.2, 0.2), v2(0.8, 0.8));
        let c = conv_strain_check(&f, &u, 16, 1.0 / 256.0);
        assert!(c.holds, "{c:?}");
        assert_abs_diff_eq!(c.rhs, (0.6 + 2.0 / 16.0) / 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn smooth_conv_strain_approaches_limit() {
        let f = PolyField(PolyVec::parse("(x^2*y, y^3)").unwrap());
        let u = Aabb::new(v2(0.2, 0.2), v2(0.8, 0.8));
        let exact = integrate_area(&u, 1.0 / 256.0, |x| frob(&sym(&f.gradient(x))));
        let mut prev = f64::MAX;
        for k in [4u32, 8, 16, 32] {
            let c = conv_strain_check(&f, &u, k, 1.0 / 256.0);
            let err = (c.lhs - exact).abs();
            assert!(err <= prev * 1.05, "k = {k}");
            prev = err;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn count_and_area_bounds(y0 in 0.05f64..0.95, slope in -0.8f64..0.8, k in prop::sample::select(vec![8u32, 16, 32, 64])) {
            let spec = format!(
                r#"{{"domain": {{"min": [0, 0], "max": [1, 1]}}, "components": ["(0, 0)", "(1, x)"],
                    "jump_segments": [{{"p0": [0, {y0}], "p1": [1, {}], "normal": [{}, {}], "amplitude_expr": "(1, x)"}}], "h": 0.01}}"#,
                y0 + slope, -slope / (1.0 + slope * slope).sqrt(), 1.0 / (1.0 + slope * slope).sqrt()
            );
            if y0 + slope <= 0.02 || y0 + slope >= 0.98 {
                return Ok(());
            }
            let f = SbdField::from_json(&spec).map_err(|e| TestCaseError::fail(format!("{e}")))?;
            let c = classify_nodes(&f, &unit(), k, 0.1).unwrap();
            let kf = k as f64;
            prop_assert!(c.bad.len() as f64 <= c.jump_length * kf / 0.1);
            prop_assert!(c.bad_region_area(None) <= 256.0 * c.jump_length / (kf * 0.1));
        }
    }
}
