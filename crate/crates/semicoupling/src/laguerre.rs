//! Power-diagram solver for quadratic cost in the plane.
//!
//! For cost `|x - xi|^2` an optimal semicoupling of Lebesgue measure with a
//! finite pattern is induced by weighted nearest sites: the cell of site `j`
//! is its power polygon intersected with the disk of radius `sqrt(w_j)`, and
//! everything outside every cell stays put. Weights making each cell carry
//! its target mass are found by a damped Newton iteration; the area map is
//! the gradient of a concave functional of `w`, so the Jacobian is symmetric
//! and the iteration is a concave maximization.

use std::f64::consts::PI;

use crate::geometry::{BoundaryPiece, ConvexCell, Halfplane, Point, PointPattern};
use crate::real::{solve_dense, Accum, Real};
use crate::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: u32 = 80;
/// Weights are kept above this floor so every disk stays well defined.
pub const MIN_WEIGHT: f64 = 1e-8;

/// A solved weighted diagram: one bounded convex cell per site.
#[derive(Clone, Debug)]
pub struct LaguerreDiagram<R: Real> {
    pattern: PointPattern<R>,
    weights: Vec<R>,
    cells: Vec<ConvexCell<R>>,
    areas: Vec<R>,
    pub iterations: u32,
    /// Largest cell-mass mismatch at acceptance.
    pub residual: R,
}

impl<R: Real> LaguerreDiagram<R> {
    pub fn pattern(&self) -> &PointPattern<R> {
        &self.pattern
    }

    pub fn weights(&self) -> &[R] {
        &self.weights
    }

    pub fn cells(&self) -> &[ConvexCell<R>] {
        &self.cells
    }

    pub fn areas(&self) -> &[R] {
        &self.areas
    }

    /// Quadratic transport cost of sending each cell to its site.
    pub fn transport_cost(&self) -> Result<R> {
        let mut acc = Accum::new();
        for (j, cell) in self.cells.iter().enumerate() {
            let xi = self.pattern.point(j);
            acc.add(cell.second_moment([xi[0], xi[1]])?.f64());
        }
        Ok(R::of(acc.total()))
    }

    /// Site whose cell contains `x`, or `None` when the mass at `x` rests.
    /// Ties resolve to the smallest index.
    pub fn owner(&self, x: [R; 2]) -> Option<usize> {
        let mut best: Option<(R, usize)> = None;
        for j in 0..self.pattern.len() {
            let xi = self.pattern.point(j);
            let dx = x[0] - xi[0];
            let dy = x[1] - xi[1];
            let pd = dx * dx + dy * dy - self.weights[j];
            if best.map_or(true, |(b, _)| pd < b) {
                best = Some((pd, j));
            }
        }
        match best {
            Some((pd, j)) if pd <= R::zero() => Some(j),
            _ => None,
        }
    }
}

fn validate<R: Real>(pattern: &PointPattern<R>) -> Result<()> {
    if pattern.dim() != 2 {
        return Err(Error::InvalidPattern(format!(
            "weighted diagrams are planar, pattern dimension is {}",
            pattern.dim()
        )));
    }
    if pattern.is_empty() {
        return Err(Error::InvalidPattern("weighted diagram of an empty pattern".into()));
    }
    Ok(())
}

/// Power bisector between sites `j` and `l` as a halfplane kept by `j`.
fn bisector<R: Real>(xi: Point<R>, xl: Point<R>, wj: R, wl: R) -> Halfplane<R> {
    let n = [R::of(2.0) * (xl[0] - xi[0]), R::of(2.0) * (xl[1] - xi[1])];
    let c = xl[0] * xl[0] + xl[1] * xl[1] - xi[0] * xi[0] - xi[1] * xi[1] + wj - wl;
    Halfplane { n, c }
}

fn build_cell<R: Real>(pattern: &PointPattern<R>, weights: &[R], j: usize) -> Result<ConvexCell<R>> {
    let xi = pattern.point(j);
    let mut hps = Vec::with_capacity(pattern.len() - 1);
    for l in 0..pattern.len() {
        if l != j {
            hps.push(bisector(xi, pattern.point(l), weights[j], weights[l]));
        }
    }
    ConvexCell::new(hps, Some(([xi[0], xi[1]], weights[j].sqrt())))
}

/// Cell areas for the given weights (all must be positive).
pub fn diagram_areas<R: Real>(pattern: &PointPattern<R>, weights: &[R]) -> Result<Vec<R>> {
    validate(pattern)?;
    if weights.len() != pattern.len() {
        return Err(Error::InvalidPattern(format!(
            "{} weights for {} sites",
            weights.len(),
            pattern.len()
        )));
    }
    if weights.iter().any(|w| !(*w > R::zero())) {
        return Err(Error::Domain("weights must be positive".into()));
    }
    (0..pattern.len()).map(|j| build_cell(pattern, weights, j)?.area()).collect()
}

/// Dual functional and its gradient in the weights.
///
/// `phi(w) = sum_j (integral over cell_j of |x - xi_j|^2 - w_j) + mass_j w_j`;
/// the cell shapes drop out of the derivative, leaving
/// `d phi / d w_j = mass_j - area_j(w)`. This is what the Newton solve drives
/// to zero, and what finite differences are checked against.
pub fn diagram_cost_and_grad<R: Real>(
    pattern: &PointPattern<R>,
    weights: &[R],
) -> Result<(R, Vec<R>)> {
    validate(pattern)?;
    if weights.len() != pattern.len() {
        return Err(Error::InvalidPattern(format!(
            "{} weights for {} sites",
            weights.len(),
            pattern.len()
        )));
    }
    let mut phi = Accum::new();
    let mut grad = Vec::with_capacity(pattern.len());
    for j in 0..pattern.len() {
        if !(weights[j] > R::zero()) {
            return Err(Error::Domain("weights must be positive".into()));
        }
        let cell = build_cell(pattern, weights, j)?;
        let area = cell.area()?;
        let xi = pattern.point(j);
        let sm = cell.second_moment([xi[0], xi[1]])?;
        let mass = pattern.mass(j);
        phi.add(sm.f64() - (weights[j] * area).f64() + (mass * weights[j]).f64());
        grad.push(mass - area);
    }
    Ok((R::of(phi.total()), grad))
}

/// Row-major `k x k` derivative of the areas in the weights.
///
/// Off-diagonal: a shared power edge of length `len` between sites at
/// distance `d` moves by `1/(2d)` per unit weight, so `d area_j / d w_l =
/// -len/(2d)`. Diagonal: the same edges with positive sign plus the free
/// disk boundary, whose radius `sqrt(w)` grows by `1/(2 sqrt(w))`.
fn jacobian<R: Real>(pattern: &PointPattern<R>, weights: &[R]) -> Result<Vec<R>> {
    let k = pattern.len();
    let mut jac = vec![R::zero(); k * k];
    for j in 0..k {
        let xi = pattern.point(j);
        for l in 0..k {
            if l == j {
                continue;
            }
            let xl = pattern.point(l);
            let len = face_length(pattern, weights, j, l);
            if len <= R::zero() {
                continue;
            }
            let dx = xl[0] - xi[0];
            let dy = xl[1] - xi[1];
            let d = (dx * dx + dy * dy).sqrt();
            let slope = len / (R::of(2.0) * d);
            jac[j * k + l] -= slope;
            jac[j * k + j] += slope;
        }
        let cell = build_cell(pattern, weights, j)?;
        let mut arc_angle = R::zero();
        for piece in cell.boundary()? {
            if let BoundaryPiece::Arc { from, to } = piece {
                arc_angle += to - from;
            }
        }
        jac[j * k + j] += arc_angle * R::of(0.5);
    }
    Ok(jac)
}

/// Length of the power edge between cells `j` and `l`: the bisector line
/// clipped by cell `j`'s disk and its other bisectors.
fn face_length<R: Real>(pattern: &PointPattern<R>, weights: &[R], j: usize, l: usize) -> R {
    let xi = pattern.point(j);
    let hp = bisector(xi, pattern.point(l), weights[j], weights[l]);
    let n2 = hp.n[0] * hp.n[0] + hp.n[1] * hp.n[1];
    if !(n2 > R::zero()) {
        return R::zero();
    }
    let nl = n2.sqrt();
    let p0 = [hp.n[0] * hp.c / n2, hp.n[1] * hp.c / n2];
    let dir = [-hp.n[1] / nl, hp.n[0] / nl];
    // Chord of the disk |x - xi|^2 <= w_j along x = p0 + t dir.
    let q = [p0[0] - xi[0], p0[1] - xi[1]];
    let qd = q[0] * dir[0] + q[1] * dir[1];
    let disc = qd * qd - (q[0] * q[0] + q[1] * q[1] - weights[j]);
    if !(disc > R::zero()) {
        return R::zero();
    }
    let sq = disc.sqrt();
    let mut t_lo = -qd - sq;
    let mut t_hi = -qd + sq;
    for o in 0..pattern.len() {
        if o == j || o == l {
            continue;
        }
        let ho = bisector(xi, pattern.point(o), weights[j], weights[o]);
        let a = ho.n[0] * dir[0] + ho.n[1] * dir[1];
        let b = ho.c - ho.n[0] * p0[0] - ho.n[1] * p0[1];
        if a > R::zero() {
            t_hi = t_hi.min(b / a);
        } else if a < R::zero() {
            t_lo = t_lo.max(b / a);
        } else if b < R::zero() {
            return R::zero();
        }
    }
    (t_hi - t_lo).max(R::zero())
}

fn max_residual<R: Real>(areas: &[R], masses: &[R]) -> R {
    areas
        .iter()
        .zip(masses)
        .map(|(&a, &m)| (a - m).abs())
        .fold(R::zero(), |acc, x| acc.max(x))
}

/// Find weights whose cells carry the pattern masses, to `tol` in area.
pub fn solve_laguerre<R: Real>(
    pattern: &PointPattern<R>,
    tol: R,
    max_iter: u32,
) -> Result<LaguerreDiagram<R>> {
    validate(pattern)?;
    if !(tol > R::zero()) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let k = pattern.len();
    let masses: Vec<R> = (0..k).map(|j| pattern.mass(j)).collect();
    let mut w: Vec<R> = masses.iter().map(|&m| (m / R::of(PI)).max(R::of(MIN_WEIGHT))).collect();
    let mut areas = diagram_areas(pattern, &w)?;
    let mut res = max_residual(&areas, &masses);
    let mut iterations = 0;
    while res > tol {
        if iterations >= max_iter {
            return Err(Error::NoConvergence(format!(
                "weight iteration stalled at residual {res} after {iterations} steps"
            )));
        }
        iterations += 1;
        let jac = jacobian(pattern, &w)?;
        let rhs: Vec<R> = (0..k).map(|j| masses[j] - areas[j]).collect();
        let mut delta = rhs.clone();
        let mut a = jac.clone();
        if solve_dense(&mut a, &mut delta, k).is_none() {
            // Ridge fallback for degenerate configurations.
            let bump = jac
                .iter()
                .step_by(k + 1)
                .fold(R::zero(), |acc: R, &x| acc.max(x))
                .max(R::one())
                * R::of(1e-10);
            let mut a = jac.clone();
            for d in 0..k {
                a[d * k + d] += bump;
            }
            delta = rhs.clone();
            if solve_dense(&mut a, &mut delta, k).is_none() {
                return Err(Error::NoConvergence("area Jacobian is singular".into()));
            }
        }
        let mut t = R::one();
        loop {
            let wt: Vec<R> = w
                .iter()
                .zip(&delta)
                .map(|(&wi, &d)| (wi + t * d).max(R::of(MIN_WEIGHT)))
                .collect();
            let at = diagram_areas(pattern, &wt)?;
            let rt = max_residual(&at, &masses);
            if rt < res || t <= R::of(1e-4) {
                w = wt;
                areas = at;
                res = rt;
                break;
            }
            t *= R::of(0.5);
        }
    }
    let cells: Result<Vec<_>> = (0..k).map(|j| build_cell(pattern, &w, j)).collect();
    Ok(LaguerreDiagram {
        pattern: pattern.clone(),
        weights: w,
        cells: cells?,
        areas,
        iterations,
        residual: res,
    })
}
