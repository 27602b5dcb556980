//! Boxes, grids, point patterns and exact planar cell geometry.
//!
//! Boxes live on the integer lattice: a [`DyadicBox`] of generation `n` has
//! side `2^n` and is placed by a word of binary shifts, so that each box of
//! generation `n + 1` contains the generation-`n` box built from the same
//! word prefix. Grids discretize Lebesgue measure on an integer window at
//! `m` cells per unit length.
//!
//! The planar cell type ([`ConvexCell`]) is an intersection of halfplanes
//! with an optional disk; areas and second moments are closed-form exact,
//! which is what the power-diagram solver builds on.

use serde::{Deserialize, Serialize};

use crate::real::Real;
use crate::{Error, Result};

/// Point in up to three dimensions; unused coordinates stay zero.
pub type Point<R> = [R; 3];

pub fn dist<R: Real>(a: Point<R>, b: Point<R>, dim: usize) -> R {
    let mut s = R::zero();
    for k in 0..dim {
        let d = a[k] - b[k];
        s += d * d;
    }
    s.sqrt()
}

/// Axis-aligned dyadic box of side `2^n` on the integer lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicBox {
    dim: usize,
    n: u32,
    lower: [i64; 3],
}

impl DyadicBox {
    /// Unit box `z + [0, 1)^d`.
    pub fn unit(z: [i64; 3], dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGeometry(format!("dimension {dim} not in 1..=3")));
        }
        Ok(Self { dim, n: 0, lower: z })
    }

    /// Box of generation `word.len()` grown from `z + [0,1)^d` by the shift
    /// word: each step `k` (1-based) doubles the side and shifts the lower
    /// corner by `-2^(k-1) * gamma_k` componentwise.
    pub fn from_word(z: [i64; 3], word: &[[u8; 3]], dim: usize) -> Result<Self> {
        let mut b = Self::unit(z, dim)?;
        for g in word {
            b = b.double(*g)?;
        }
        Ok(b)
    }

    /// One doubling step; `gamma` components must be 0 or 1.
    pub fn double(&self, gamma: [u8; 3]) -> Result<Self> {
        let mut lower = self.lower;
        for k in 0..self.dim {
            if gamma[k] > 1 {
                return Err(Error::InvalidGeometry(format!("shift word entry {} not binary", gamma[k])));
            }
            lower[k] -= (gamma[k] as i64) << self.n;
        }
        Ok(Self { dim: self.dim, n: self.n + 1, lower })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generation(&self) -> u32 {
        self.n
    }

    pub fn side(&self) -> i64 {
        1 << self.n
    }

    pub fn lower(&self) -> [i64; 3] {
        self.lower
    }

    pub fn upper(&self) -> [i64; 3] {
        let mut u = self.lower;
        for k in 0..self.dim {
            u[k] += self.side();
        }
        u
    }

    pub fn volume(&self) -> i64 {
        let mut v = 1;
        for _ in 0..self.dim {
            v *= self.side();
        }
        v
    }

    pub fn contains<R: Real>(&self, x: Point<R>) -> bool {
        for k in 0..self.dim {
            let lo = R::of(self.lower[k] as f64);
            let hi = R::of((self.lower[k] + self.side()) as f64);
            if !(x[k] >= lo && x[k] < hi) {
                return false;
            }
        }
        true
    }

    /// The `2^d` congruent children of generation `n - 1`.
    pub fn subdivide(&self) -> Result<Vec<DyadicBox>> {
        if self.n == 0 {
            return Err(Error::InvalidGeometry("cannot subdivide a unit box".into()));
        }
        let half = self.side() / 2;
        let count = 1usize << self.dim;
        let mut out = Vec::with_capacity(count);
        for bits in 0..count {
            let mut lower = self.lower;
            for k in 0..self.dim {
                if bits >> k & 1 == 1 {
                    lower[k] += half;
                }
            }
            out.push(DyadicBox { dim: self.dim, n: self.n - 1, lower });
        }
        Ok(out)
    }
}

/// Axis-aligned integer cuboid `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cuboid {
    pub dim: usize,
    pub lo: [i64; 3],
    pub hi: [i64; 3],
}

impl Cuboid {
    pub fn volume(&self) -> i64 {
        let mut v = 1;
        for k in 0..self.dim {
            v *= self.hi[k] - self.lo[k];
        }
        v
    }

    pub fn contains<R: Real>(&self, x: Point<R>) -> bool {
        for k in 0..self.dim {
            if !(x[k] >= R::of(self.lo[k] as f64) && x[k] < R::of(self.hi[k] as f64)) {
                return false;
            }
        }
        true
    }
}

/// One pair merge in the doubling chain: `first` and `second` are congruent
/// halves along `axis` whose union is `merged`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MergeStep {
    /// Axis being merged, 0-based.
    pub axis: usize,
    pub first: Cuboid,
    pub second: Cuboid,
    pub merged: Cuboid,
}

/// The chain of `2^d - 1` pair merges that assembles the `2^d` generation-`n`
/// children of a generation-`n + 1` box into the box itself.
///
/// Intermediate shapes are cuboids `[0,2^n)^k x [0,2^(n+1))^(d-k)` placed at
/// offsets `2^n * (i_1..i_k, 0,..)`; stage `k` (from `d` down to `1`) merges
/// the `2^(k-1)` pairs differing in coordinate `k`. Coordinates are relative
/// to the box lower corner.
pub fn cuboid_chain(n: u32, dim: usize) -> Result<Vec<MergeStep>> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidGeometry(format!("dimension {dim} not in 1..=3")));
    }
    let h = 1i64 << n; // half side
    let cuboid_at = |k: usize, idx: &[i64]| -> Cuboid {
        // [0, h)^k x [0, 2h)^(d-k) + h * (idx, 0, ..)
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for a in 0..dim {
            if a < k {
                lo[a] = h * idx[a];
                hi[a] = lo[a] + h;
            } else {
                lo[a] = 0;
                hi[a] = 2 * h;
            }
        }
        Cuboid { dim, lo, hi }
    };
    let mut steps = Vec::new();
    for k in (1..=dim).rev() {
        // Free indices i_1 .. i_(k-1).
        for bits in 0..1i64 << (k - 1) {
            let mut idx0 = [0i64; 3];
            for a in 0..k - 1 {
                idx0[a] = bits >> a & 1;
            }
            let mut idx1 = idx0;
            idx1[k - 1] = 1;
            steps.push(MergeStep {
                axis: k - 1,
                first: cuboid_at(k, &idx0),
                second: cuboid_at(k, &idx1),
                merged: cuboid_at(k - 1, &idx0),
            });
        }
    }
    Ok(steps)
}

/// Discretized Lebesgue measure: an integer window at `m` cells per unit
/// length, each cell carrying mass `m^-d`, with an optional activity mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GridMeasure<R: Real> {
    dim: usize,
    m: u32,
    lo: [i64; 3],
    hi: [i64; 3],
    shape: [usize; 3],
    /// `None` means every cell is active.
    active: Option<Vec<bool>>,
    #[serde(skip)]
    _phantom: std::marker::PhantomData<R>,
}

impl<R: Real> GridMeasure<R> {
    pub fn new(lo: [i64; 3], hi: [i64; 3], m: u32, dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGeometry(format!("dimension {dim} not in 1..=3")));
        }
        if m == 0 {
            return Err(Error::InvalidGeometry("grid resolution m = 0".into()));
        }
        let mut shape = [1usize; 3];
        for k in 0..dim {
            if hi[k] <= lo[k] {
                return Err(Error::InvalidGeometry(format!("empty window on axis {k}")));
            }
            shape[k] = ((hi[k] - lo[k]) as usize) * m as usize;
        }
        let (mut lo2, mut hi2) = (lo, hi);
        for k in dim..3 {
            lo2[k] = 0;
            hi2[k] = 0;
        }
        Ok(Self { dim, m, lo: lo2, hi: hi2, shape, active: None, _phantom: Default::default() })
    }

    /// Window around a box with the given margin on every side.
    pub fn around(bx: &DyadicBox, margin: i64, m: u32) -> Result<Self> {
        let mut lo = bx.lower();
        let mut hi = bx.upper();
        for k in 0..bx.dim() {
            lo[k] -= margin;
            hi[k] += margin;
        }
        Self::new(lo, hi, m, bx.dim())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn window(&self) -> ([i64; 3], [i64; 3]) {
        (self.lo, self.hi)
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mass of a single cell, `m^-d`.
    pub fn cell_mass(&self) -> R {
        R::one() / R::of((self.m as f64).powi(self.dim as i32))
    }

    pub fn index(&self, ix: [usize; 3]) -> usize {
        let mut idx = 0;
        for k in (0..self.dim).rev() {
            idx = idx * self.shape[k] + ix[k];
        }
        idx
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let mut rest = idx;
        let mut ix = [0usize; 3];
        for k in 0..self.dim {
            ix[k] = rest % self.shape[k];
            rest /= self.shape[k];
        }
        ix
    }

    pub fn center(&self, idx: usize) -> Point<R> {
        let ix = self.coords(idx);
        let mut c = [R::zero(); 3];
        let m = R::of(self.m as f64);
        for k in 0..self.dim {
            c[k] = R::of(self.lo[k] as f64) + (R::of(ix[k] as f64) + R::of(0.5)) / m;
        }
        c
    }

    /// Index of the cell containing `x`, or `None` outside the window.
    pub fn locate(&self, x: Point<R>) -> Option<usize> {
        let m = R::of(self.m as f64);
        let mut ix = [0usize; 3];
        for k in 0..self.dim {
            let t = (x[k] - R::of(self.lo[k] as f64)) * m;
            if t < R::zero() {
                return None;
            }
            let i = t.floor().f64() as usize;
            if i >= self.shape[k] {
                return None;
            }
            ix[k] = i;
        }
        Some(self.index(ix))
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.active.as_ref().map_or(true, |a| a[idx])
    }

    pub fn active_count(&self) -> usize {
        match &self.active {
            None => self.len(),
            Some(a) => a.iter().filter(|&&b| b).count(),
        }
    }

    pub fn total_mass(&self) -> R {
        self.cell_mass() * R::of(self.active_count() as f64)
    }

    pub fn set_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.len() {
            return Err(Error::InvalidGeometry(format!(
                "mask length {} does not match cell count {}",
                mask.len(),
                self.len()
            )));
        }
        self.active = Some(mask);
        Ok(())
    }

    pub fn clear_mask(&mut self) {
        self.active = None;
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.active.as_deref()
    }

    /// True if the cell lies in the outermost ring of the window.
    pub fn touches_boundary(&self, idx: usize) -> bool {
        let ix = self.coords(idx);
        (0..self.dim).any(|k| ix[k] == 0 || ix[k] + 1 == self.shape[k])
    }

    /// Restrict the active set to cells whose center lies in `region`.
    pub fn mask_to_cuboid(&mut self, region: &Cuboid) {
        let mut mask = vec![false; self.len()];
        for (idx, slot) in mask.iter_mut().enumerate() {
            *slot = self.is_active(idx) && region.contains(self.center(idx));
        }
        self.active = Some(mask);
    }
}

/// Finite weighted point pattern. Masses are `mult[i] / denom`, so rational
/// masses with a shared denominator stay exactly representable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PointPattern<R: Real> {
    dim: usize,
    points: Vec<Point<R>>,
    mult: Vec<u32>,
    denom: u32,
}

impl<R: Real> PointPattern<R> {
    pub fn new(dim: usize, denom: u32) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidPattern(format!("dimension {dim} not in 1..=3")));
        }
        if denom == 0 {
            return Err(Error::InvalidPattern("mass denominator must be positive".into()));
        }
        Ok(Self { dim, points: Vec::new(), mult: Vec::new(), denom })
    }

    pub fn with_points(dim: usize, points: Vec<Point<R>>) -> Result<Self> {
        let mut p = Self::new(dim, 1)?;
        for x in points {
            p.push(x, 1)?;
        }
        Ok(p)
    }

    pub fn push(&mut self, x: Point<R>, mult: u32) -> Result<()> {
        if mult == 0 {
            return Err(Error::InvalidPattern("zero multiplicity".into()));
        }
        for k in 0..self.dim {
            if !x[k].is_finite() {
                return Err(Error::InvalidPattern("non-finite coordinate".into()));
            }
        }
        for k in self.dim..3 {
            if x[k] != R::zero() {
                return Err(Error::InvalidPattern("coordinate beyond pattern dimension".into()));
            }
        }
        // A repeated location merges into the multiplicity there.
        if let Some(i) = self.points.iter().position(|q| *q == x) {
            self.mult[i] += mult;
        } else {
            self.points.push(x);
            self.mult.push(mult);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Point<R> {
        self.points[i]
    }

    pub fn points(&self) -> &[Point<R>] {
        &self.points
    }

    pub fn mult(&self, i: usize) -> u32 {
        self.mult[i]
    }

    pub fn denom(&self) -> u32 {
        self.denom
    }

    pub fn mass(&self, i: usize) -> R {
        R::of(self.mult[i] as f64) / R::of(self.denom as f64)
    }

    pub fn total_mass(&self) -> R {
        let total: u64 = self.mult.iter().map(|&m| m as u64).sum();
        R::of(total as f64) / R::of(self.denom as f64)
    }

    pub fn translate(&self, v: Point<R>) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| {
                let mut q = *p;
                for k in 0..self.dim {
                    q[k] += v[k];
                }
                q
            })
            .collect();
        Self { dim: self.dim, points, mult: self.mult.clone(), denom: self.denom }
    }

    /// Sub-pattern of points inside `region`, with their original indices.
    pub fn restrict_to(&self, region: &Cuboid) -> (Self, Vec<usize>) {
        let mut sub = Self { dim: self.dim, points: Vec::new(), mult: Vec::new(), denom: self.denom };
        let mut idx = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            if region.contains(*p) {
                sub.points.push(*p);
                sub.mult.push(self.mult[i]);
                idx.push(i);
            }
        }
        (sub, idx)
    }
}

// ---------------------------------------------------------------------------
// Planar cell geometry.

/// Halfplane `n . x <= c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Halfplane<R: Real> {
    pub n: [R; 2],
    pub c: R,
}

/// Piece of a cell boundary, in counterclockwise order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryPiece<R: Real> {
    Segment { a: [R; 2], b: [R; 2] },
    /// Counterclockwise arc of the cell disk from angle `from` to `to`
    /// (radians, `to > from`).
    Arc { from: R, to: R },
}

/// Intersection of halfplanes with an optional disk, `d = 2` only.
///
/// Areas and moments are closed-form: polygon edges contribute triangle
/// terms, the disk contributes circular sectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ConvexCell<R: Real> {
    halfplanes: Vec<Halfplane<R>>,
    /// `(center, radius)`.
    disk: Option<([R; 2], R)>,
}

/// Extent of the bootstrap polygon when no disk bounds the cell.
const UNBOUNDED_EXTENT: f64 = 1e8;

/// Signed area / first moment / second moment accumulator, all relative to a
/// common apex (the disk center for cells with a disk).
struct Measures<R> {
    area: R,
    first: [R; 2],
    second: R,
}

impl<R: Real> Measures<R> {
    /// Triangle (apex, apex + u, apex + v), signed by cross(u, v).
    fn triangle(&mut self, u: [R; 2], v: [R; 2]) {
        let cr = u[0] * v[1] - u[1] * v[0];
        self.area += cr * R::of(0.5);
        self.first[0] += cr * (u[0] + v[0]) * R::of(1.0 / 6.0);
        self.first[1] += cr * (u[1] + v[1]) * R::of(1.0 / 6.0);
        let uu = u[0] * u[0] + u[1] * u[1];
        let vv = v[0] * v[0] + v[1] * v[1];
        let uv = u[0] * v[0] + u[1] * v[1];
        self.second += cr * (uu + vv + uv) * R::of(1.0 / 12.0);
    }

    /// Circular sector of radius `r` about the apex between directions `ua`
    /// and `ub` (not necessarily unit), swept the short way, signed.
    fn sector(&mut self, ua: [R; 2], ub: [R; 2], r: R) {
        let dot = ua[0] * ub[0] + ua[1] * ub[1];
        let cr = ua[0] * ub[1] - ua[1] * ub[0];
        let ang = cr.atan2(dot);
        let r2 = r * r;
        self.area += r2 * ang * R::of(0.5);
        self.second += r2 * r2 * ang * R::of(0.25);
        let na = (ua[0] * ua[0] + ua[1] * ua[1]).sqrt();
        let nb = (ub[0] * ub[0] + ub[1] * ub[1]).sqrt();
        if na > R::zero() && nb > R::zero() {
            let r3 = r2 * r * R::of(1.0 / 3.0);
            self.first[0] += r3 * (ub[1] / nb - ua[1] / na);
            self.first[1] += r3 * (ua[0] / na - ub[0] / nb);
        }
    }
}

impl<R: Real> ConvexCell<R> {
    pub fn new(halfplanes: Vec<Halfplane<R>>, disk: Option<([R; 2], R)>) -> Result<Self> {
        if let Some((_, r)) = disk {
            if !(r > R::zero()) {
                return Err(Error::InvalidGeometry("disk radius must be positive".into()));
            }
        }
        for h in &halfplanes {
            if h.n[0] == R::zero() && h.n[1] == R::zero() {
                return Err(Error::InvalidGeometry("halfplane with zero normal".into()));
            }
        }
        Ok(Self { halfplanes, disk })
    }

    pub fn disk(&self) -> Option<([R; 2], R)> {
        self.disk
    }

    pub fn halfplanes(&self) -> &[Halfplane<R>] {
        &self.halfplanes
    }

    pub fn contains(&self, x: [R; 2]) -> bool {
        let eps = R::epsilon() * R::of(64.0);
        if let Some((q, r)) = self.disk {
            let dx = x[0] - q[0];
            let dy = x[1] - q[1];
            if dx * dx + dy * dy > r * r * (R::one() + eps) {
                return false;
            }
        }
        self.halfplanes.iter().all(|h| h.n[0] * x[0] + h.n[1] * x[1] <= h.c + eps * (h.c.abs() + R::one()))
    }

    /// Clip the bootstrap square by every halfplane; counterclockwise.
    fn polygon(&self) -> Result<Vec<[R; 2]>> {
        let (cx, cy, ext) = match self.disk {
            Some((q, r)) => (q[0], q[1], r * R::of(1.0 + 1e-9) + R::of(1.0)),
            None => (R::zero(), R::zero(), R::of(UNBOUNDED_EXTENT)),
        };
        let mut poly: Vec<[R; 2]> = vec![
            [cx - ext, cy - ext],
            [cx + ext, cy - ext],
            [cx + ext, cy + ext],
            [cx - ext, cy + ext],
        ];
        for h in &self.halfplanes {
            if poly.is_empty() {
                break;
            }
            let mut next: Vec<[R; 2]> = Vec::with_capacity(poly.len() + 1);
            let side = |p: [R; 2]| h.n[0] * p[0] + h.n[1] * p[1] - h.c;
            for i in 0..poly.len() {
                let a = poly[i];
                let b = poly[(i + 1) % poly.len()];
                let sa = side(a);
                let sb = side(b);
                if sa <= R::zero() {
                    next.push(a);
                }
                if (sa < R::zero() && sb > R::zero()) || (sa > R::zero() && sb < R::zero()) {
                    let t = sa / (sa - sb);
                    next.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                }
            }
            poly = next;
        }
        if self.disk.is_none() {
            let lim = R::of(UNBOUNDED_EXTENT * 0.99);
            for p in &poly {
                if p[0].abs() >= lim || p[1].abs() >= lim {
                    return Err(Error::InvalidGeometry(
                        "cell is unbounded: no disk and halfplanes do not close".into(),
                    ));
                }
            }
        }
        Ok(poly)
    }

    /// Area, first moment and second moment relative to the disk center (or
    /// the origin when there is no disk).
    fn measures(&self) -> Result<(R, [R; 2], R)> {
        let poly = self.polygon()?;
        let mut acc = Measures { area: R::zero(), first: [R::zero(), R::zero()], second: R::zero() };
        if poly.len() < 3 {
            return Ok((acc.area, acc.first, acc.second));
        }
        match self.disk {
            None => {
                for i in 0..poly.len() {
                    let a = poly[i];
                    let b = poly[(i + 1) % poly.len()];
                    acc.triangle(a, b);
                }
            }
            Some((qc, r)) => {
                let r2 = r * r;
                for i in 0..poly.len() {
                    let a = poly[i];
                    let b = poly[(i + 1) % poly.len()];
                    let ra = [a[0] - qc[0], a[1] - qc[1]];
                    let rb = [b[0] - qc[0], b[1] - qc[1]];
                    // Clip chord [a, b] against the circle |x - qc| = r.
                    let dx = rb[0] - ra[0];
                    let dy = rb[1] - ra[1];
                    let aa = dx * dx + dy * dy;
                    let bb = ra[0] * dx + ra[1] * dy;
                    let cc = ra[0] * ra[0] + ra[1] * ra[1] - r2;
                    let disc = bb * bb - aa * cc;
                    let mut t0 = R::one();
                    let mut t1 = R::zero();
                    if disc > R::zero() && aa > R::zero() {
                        let sq = disc.sqrt();
                        t0 = ((-bb - sq) / aa).max(R::zero()).min(R::one());
                        t1 = ((-bb + sq) / aa).max(R::zero()).min(R::one());
                    }
                    if t1 > t0 {
                        let pa = [ra[0] + t0 * dx, ra[1] + t0 * dy];
                        let pb = [ra[0] + t1 * dx, ra[1] + t1 * dy];
                        acc.sector(ra, pa, r);
                        acc.triangle(pa, pb);
                        acc.sector(pb, rb, r);
                    } else {
                        acc.sector(ra, rb, r);
                    }
                }
            }
        }
        Ok((acc.area, acc.first, acc.second))
    }

    pub fn area(&self) -> Result<R> {
        Ok(self.measures()?.0)
    }

    /// `integral of |x - p|^2` over the cell.
    pub fn second_moment(&self, p: [R; 2]) -> Result<R> {
        let (area, first, second) = self.measures()?;
        let q = self.disk.map(|(q, _)| q).unwrap_or([R::zero(), R::zero()]);
        let d = [p[0] - q[0], p[1] - q[1]];
        let d2 = d[0] * d[0] + d[1] * d[1];
        let two = R::of(2.0);
        Ok(second + area * d2 - two * (d[0] * first[0] + d[1] * first[1]))
    }

    /// Counterclockwise boundary description with explicit arcs.
    pub fn boundary(&self) -> Result<Vec<BoundaryPiece<R>>> {
        let poly = self.polygon()?;
        let Some((qc, r)) = self.disk else {
            let mut out = Vec::new();
            for i in 0..poly.len() {
                out.push(BoundaryPiece::Segment { a: poly[i], b: poly[(i + 1) % poly.len()] });
            }
            return Ok(out);
        };
        if poly.len() < 3 {
            return Ok(Vec::new());
        }
        let r2 = r * r;
        // Clip every edge to the disk; remember whether endpoints were cut.
        struct Piece<R> {
            a: [R; 2],
            b: [R; 2],
            cut_in: bool,
            cut_out: bool,
        }
        let mut pieces: Vec<Piece<R>> = Vec::new();
        for i in 0..poly.len() {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            let ra = [a[0] - qc[0], a[1] - qc[1]];
            let dx = b[0] - a[0];
            let dy = b[1] - a[1];
            let aa = dx * dx + dy * dy;
            let bb = ra[0] * dx + ra[1] * dy;
            let cc = ra[0] * ra[0] + ra[1] * ra[1] - r2;
            let disc = bb * bb - aa * cc;
            if disc <= R::zero() || aa == R::zero() {
                continue;
            }
            let sq = disc.sqrt();
            let t0 = ((-bb - sq) / aa).max(R::zero()).min(R::one());
            let t1 = ((-bb + sq) / aa).max(R::zero()).min(R::one());
            if t1 <= t0 {
                continue;
            }
            pieces.push(Piece {
                a: [a[0] + t0 * dx, a[1] + t0 * dy],
                b: [a[0] + t1 * dx, a[1] + t1 * dy],
                cut_in: t0 > R::zero(),
                cut_out: t1 < R::one(),
            });
        }
        if pieces.is_empty() {
            // Either the disk lies inside the polygon (full circle) or the
            // regions are disjoint.
            let inside = self
                .halfplanes
                .iter()
                .all(|h| h.n[0] * qc[0] + h.n[1] * qc[1] <= h.c);
            if inside {
                return Ok(vec![BoundaryPiece::Arc { from: R::zero(), to: R::of(std::f64::consts::TAU) }]);
            }
            return Ok(Vec::new());
        }
        let angle = |p: [R; 2]| (p[1] - qc[1]).atan2(p[0] - qc[0]);
        let tau = R::of(std::f64::consts::TAU);
        let mut out = Vec::new();
        for i in 0..pieces.len() {
            let cur = &pieces[i];
            out.push(BoundaryPiece::Segment { a: cur.a, b: cur.b });
            let next = &pieces[(i + 1) % pieces.len()];
            if cur.cut_out || next.cut_in {
                let from = angle(cur.b);
                let mut to = angle(next.a);
                if to < from {
                    to += tau;
                }
                if to > from {
                    out.push(BoundaryPiece::Arc { from, to });
                }
            }
        }
        Ok(out)
    }
}

/// Area of a convex region given by halfplanes intersected with a disk.
pub fn polygon_disk_area<R: Real>(halfplanes: &[Halfplane<R>], center: [R; 2], radius: R) -> Result<R> {
    ConvexCell::new(halfplanes.to_vec(), Some((center, radius)))?.area()
}
