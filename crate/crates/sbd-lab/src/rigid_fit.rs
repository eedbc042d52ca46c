//! Infinitesimal rigid motions, their least-squares fits on cubes, and the
//! exceptional cells near the jump set that fits may ignore.

use crate::expr::PolyVec;
use crate::geometry::{v2, Aabb, Rect, M2, V2};
use crate::sbd_field::{frob, integrate_area, strain, Field, FieldError, JumpPiece, SbdField};
use serde::Serialize;

/// `a(x) = b + W x` with `W = [[0, omega], [-omega, 0]]`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize)]
pub struct RigidMotion {
    pub b: V2,
    pub omega: f64,
}

impl RigidMotion {
    pub fn new(b: V2, omega: f64) -> Self {
        RigidMotion { b, omega }
    }

    pub fn constant(b: V2) -> Self {
        RigidMotion { b, omega: 0.0 }
    }

    pub fn skew(&self) -> M2 {
        M2::new(0.0, self.omega, -self.omega, 0.0)
    }

    pub fn eval(&self, x: V2) -> V2 {
        v2(self.b.x + self.omega * x.y, self.b.y - self.omega * x.x)
    }

    pub fn to_poly(&self) -> PolyVec {
        PolyVec::affine(self.b, &self.skew())
    }

    pub fn add(&self, o: &RigidMotion) -> RigidMotion {
        RigidMotion { b: self.b + o.b, omega: self.omega + o.omega }
    }

    pub fn sub(&self, o: &RigidMotion) -> RigidMotion {
        RigidMotion { b: self.b - o.b, omega: self.omega - o.omega }
    }

    /// Largest pointwise norm on a box (attained at a corner).
    pub fn sup_norm_on(&self, bx: &Aabb) -> f64 {
        bx.corners().iter().map(|c| self.eval(*c).norm()).fold(0.0, f64::max)
    }
}

impl Field for RigidMotion {
    fn value(&self, x: V2) -> V2 {
        self.eval(x)
    }
    fn gradient(&self, _: V2) -> M2 {
        self.skew()
    }
    fn jumps(&self, _: &Aabb, _: &mut Vec<JumpPiece>) {}
    fn local_poly(&self, _: V2, _: f64) -> Option<PolyVec> {
        Some(self.to_poly())
    }
}

/// Uniform cells of side `h` covering a box whose sides are multiples of `h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellGrid {
    pub origin: V2,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl CellGrid {
    /// Cells of the box at spacing `side / round(side / h)`.
    pub fn fit(bx: &Aabb, h: f64) -> Self {
        let nx = ((bx.width() / h).round() as usize).max(1);
        let ny = ((bx.height() / h).round() as usize).max(1);
        let hh = bx.width() / nx as f64;
        CellGrid { origin: bx.min, h: hh, nx, ny }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, i: usize, j: usize) -> Aabb {
        let min = self.origin + v2(i as f64 * self.h, j as f64 * self.h);
        Aabb::new(min, min + v2(self.h, self.h))
    }

    pub fn center(&self, i: usize, j: usize) -> V2 {
        self.origin + v2((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::new(self.origin, self.origin + v2(self.nx as f64 * self.h, self.ny as f64 * self.h))
    }

    /// Flags of cells at distance strictly less than `2h` from any piece.
    pub fn near_mask(&self, pieces: &[JumpPiece]) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        let reach = 2.0 * self.h;
        for p in pieces {
            let bb = p.seg.aabb().dilate(reach);
            let i0 = (((bb.min.x - self.origin.x) / self.h).floor().max(0.0)) as usize;
            let j0 = (((bb.min.y - self.origin.y) / self.h).floor().max(0.0)) as usize;
            let i1 = ((((bb.max.x - self.origin.x) / self.h).ceil()).max(0.0) as usize).min(self.nx);
            let j1 = ((((bb.max.y - self.origin.y) / self.h).ceil()).max(0.0) as usize).min(self.ny);
            for j in j0..j1 {
                for i in i0..i1 {
                    if !mask[j * self.nx + i] && p.seg.distance_to_box(&self.cell(i, j)) < reach {
                        mask[j * self.nx + i] = true;
                    }
                }
            }
        }
        mask
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub motion: RigidMotion,
    pub l1_residual: f64,
    pub lp_residual: f64,
    #[serde(skip)]
    pub exceptional_cells: Vec<Aabb>,
    pub exceptional_area: f64,
    pub degenerate: bool,
}

/// Closed-form weighted least-squares rigid motion through `(point, value)` samples.
pub fn lsq_rigid(samples: &[(V2, V2)]) -> Option<RigidMotion> {
    if samples.is_empty() {
        return None;
    }
    let n = samples.len() as f64;
    let xbar = samples.iter().map(|s| s.0).sum::<V2>() / n;
    let ubar = samples.iter().map(|s| s.1).sum::<V2>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (x, u) in samples {
        let d = x - xbar;
        let w = u - ubar;
        num += w.x * d.y - w.y * d.x;
        den += d.norm_squared();
    }
    let omega = if den > 0.0 { num / den } else { 0.0 };
    Some(RigidMotion { b: v2(ubar.x - omega * xbar.y, ubar.y + omega * xbar.x), omega })
}

/// Fit over the cells of `grid`, dropping cells flagged in `mask`.
pub fn fit_on_grid(f: &dyn Field, grid: &CellGrid, mask: Option<&[bool]>, p: f64) -> FitResult {
    let mut kept = Vec::with_capacity(grid.len());
    let mut all = Vec::with_capacity(grid.len());
    let mut exc = Vec::new();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let c = grid.center(i, j);
            let s = (c, f.value(c));
            all.push(s);
            if mask.is_some_and(|m| m[j * grid.nx + i]) {
                exc.push(grid.cell(i, j));
            } else {
                kept.push(s);
            }
        }
    }
    let area = grid.h * grid.h;
    let (motion, degenerate) = match lsq_rigid(&kept) {
        Some(m) => (m, false),
        None => {
            let mean = all.iter().map(|s| s.1).sum::<V2>() / all.len().max(1) as f64;
            (RigidMotion::constant(mean), true)
        }
    };
    let l1 = kept.iter().map(|(x, u)| (u - motion.eval(*x)).norm()).sum::<f64>() * area;
    let lp = (kept.iter().map(|(x, u)| (u - motion.eval(*x)).norm().powf(p)).sum::<f64>() * area).powf(1.0 / p);
    FitResult { motion, l1_residual: l1, lp_residual: lp, exceptional_area: exc.len() as f64 * area, exceptional_cells: exc, degenerate }
}

/// L2 fit on `cube` minus the cells within `2h` of the jump set.
pub fn fit_rigid_field(f: &dyn Field, cube: &Aabb, h: f64, p: f64) -> FitResult {
    let grid = CellGrid::fit(cube, h);
    let mut pieces = Vec::new();
    f.jumps(&cube.dilate(2.0 * grid.h), &mut pieces);
    let mask = grid.near_mask(&pieces);
    fit_on_grid(f, &grid, Some(&mask), p)
}

pub fn fit_rigid(f: &SbdField, cube: &Rect, p: f64) -> Result<FitResult, FieldError> {
    let bx = cube.as_aabb().ok_or(FieldError::RegionOutsideDomain)?;
    if !f.bbox().dilate(1e-12).contains_box(&bx) {
        return Err(FieldError::RegionOutsideDomain);
    }
    Ok(fit_rigid_field(f, &bx, f.h, p))
}

/// Area of the cells of side `h` lying within `2h` of a segment of length `l`.
pub fn exceptional_area_bound(l: f64, h: f64) -> f64 {
    (l + 4.0 * h) * (4.0 * h + 2.0 * h * 2f64.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KornRatios {
    pub l1: f64,
    pub lp: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 1e-14 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Measured constants of the Korn-Poincare bound on the half-size cube `Q'`.
pub fn check_korn_poincare_field(f: &dyn Field, cube: &Aabb, h: f64, p: f64) -> KornRatios {
    let r = 0.5 * cube.width();
    let inner = Aabb::around(cube.center(), 0.5 * r);
    let fit = fit_rigid_field(f, &inner, h, p);
    let e1 = integrate_area(cube, h, |x| frob(&strain(f, x)));
    let ep = integrate_area(cube, h, |x| frob(&strain(f, x)).powf(p)).powf(1.0 / p);
    KornRatios { l1: ratio(fit.l1_residual, r * e1), lp: ratio(fit.lp_residual, r * ep) }
}

pub fn check_korn_poincare(f: &SbdField, cube: &Rect, p: f64) -> Result<KornRatios, FieldError> {
    let bx = cube.as_aabb().ok_or(FieldError::RegionOutsideDomain)?;
    if !f.bbox().dilate(1e-12).contains_box(&bx) {
        return Err(FieldError::RegionOutsideDomain);
    }
    Ok(check_korn_poincare_field(f, &bx, f.h, p))
}
