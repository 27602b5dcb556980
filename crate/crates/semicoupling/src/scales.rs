//! Radial cost scales.
//!
//! A scale is a strictly increasing continuous function `theta` on `[0, inf)`
//! with `theta(0) = 0`; the transport cost of moving mass from `x` to `y` is
//! `theta(|x - y|)`. Three families are supported:
//!
//! * `Power`: `theta(r) = r^p` for `p` in `(0, 4]`,
//! * `ConcaveLog`: `theta(r) = r^(d/2) * (1 + ln(1 + r))^(-alpha)` for
//!   `alpha` in `(0, 2]`, the threshold family sitting just below the
//!   `r^(d/2)` growth rate,
//! * `Table`: piecewise linear through given knots, linearly extended past
//!   the last knot.
//!
//! `ConcaveLog` is only accepted when it is actually increasing; this is
//! checked on a geometric grid at construction (e.g. `d = 1, alpha = 2`
//! fails).

use serde::{Deserialize, Serialize};

use crate::real::Real;
use crate::{Error, Result};

/// Relative accuracy of the quadrature behind [`CostScale::antiderivative`].
pub const ANTIDERIVATIVE_REL_TOL: f64 = 1e-10;

/// `tail_sup(r)` scans `[r, TAIL_SUP_SPAN * r]` on a geometric grid.
pub const TAIL_SUP_SPAN: f64 = 1e6;
const TAIL_SUP_POINTS: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "")]
pub enum ScaleKind<R: Real> {
    Power { p: R },
    ConcaveLog { alpha: R },
    Table { knots: Vec<(R, R)> },
}

/// A radial cost scale together with the ambient dimension.
///
/// The dimension enters through the `r^(d/2)` reference growth used by
/// `ConcaveLog` and [`CostScale::tail_sup`].
///
/// Serialization goes through [`ScaleRepr`], so deserializing re-runs the
/// constructor checks and rebuilds cached table integrals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScaleRepr<R>", into = "ScaleRepr<R>", bound = "")]
pub struct CostScale<R: Real> {
    kind: ScaleKind<R>,
    dim: usize,
    /// Cumulative exact integrals at the knots, only for `Table`.
    knot_integrals: Vec<R>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ScaleRepr<R: Real> {
    #[serde(flatten)]
    kind: ScaleKind<R>,
    dim: usize,
}

impl<R: Real> From<CostScale<R>> for ScaleRepr<R> {
    fn from(s: CostScale<R>) -> Self {
        ScaleRepr { kind: s.kind, dim: s.dim }
    }
}

impl<R: Real> TryFrom<ScaleRepr<R>> for CostScale<R> {
    type Error = Error;

    fn try_from(repr: ScaleRepr<R>) -> Result<Self> {
        match repr.kind {
            ScaleKind::Power { p } => CostScale::power(p, repr.dim),
            ScaleKind::ConcaveLog { alpha } => CostScale::concave_log(alpha, repr.dim),
            ScaleKind::Table { knots } => CostScale::table(knots, repr.dim),
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    // The dimension here only fixes the r^{d/2} normalisation; solvers impose
    // their own 1..=3 limit on the ambient space.
    if dim == 0 {
        return Err(Error::InvalidScale("dimension must be positive".into()));
    }
    Ok(())
}

impl<R: Real> CostScale<R> {
    pub fn power(p: R, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if !(p > R::zero() && p <= R::of(4.0)) {
            return Err(Error::InvalidScale(format!("power exponent {p} not in (0, 4]")));
        }
        Ok(Self { kind: ScaleKind::Power { p }, dim, knot_integrals: Vec::new() })
    }

    pub fn concave_log(alpha: R, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if !(alpha > R::zero() && alpha <= R::of(2.0)) {
            return Err(Error::InvalidScale(format!("log exponent {alpha} not in (0, 2]")));
        }
        let scale = Self { kind: ScaleKind::ConcaveLog { alpha }, dim, knot_integrals: Vec::new() };
        // Monotonicity is not automatic for this family; reject violations.
        let lo = R::of(1e-9);
        let hi = R::of(1e9);
        let steps = 2048;
        let ratio = (hi / lo).powf(R::one() / R::of(steps as f64));
        let mut r = lo;
        let mut prev = scale.eval(r);
        for _ in 0..steps {
            r = r * ratio;
            let v = scale.eval(r);
            if v <= prev {
                return Err(Error::InvalidScale(format!(
                    "concave_log(alpha={alpha}, d={dim}) is not strictly increasing near r={r}"
                )));
            }
            prev = v;
        }
        Ok(scale)
    }

    pub fn table(knots: Vec<(R, R)>, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if knots.len() < 2 {
            return Err(Error::InvalidScale("table needs at least two knots".into()));
        }
        if knots[0] != (R::zero(), R::zero()) {
            return Err(Error::InvalidScale("table must start at (0, 0)".into()));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(Error::InvalidScale(format!(
                    "table knots must be strictly increasing, got {:?} then {:?}",
                    w[0], w[1]
                )));
            }
        }
        let mut knot_integrals = Vec::with_capacity(knots.len());
        let mut acc = R::zero();
        knot_integrals.push(acc);
        for w in knots.windows(2) {
            let (r0, t0) = w[0];
            let (r1, t1) = w[1];
            acc += (t0 + t1) * (r1 - r0) / R::of(2.0);
            knot_integrals.push(acc);
        }
        Ok(Self { kind: ScaleKind::Table { knots }, dim, knot_integrals })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ScaleKind<R> {
        &self.kind
    }

    /// Short label used in CSV output, e.g. `power:2`.
    pub fn label(&self) -> String {
        match &self.kind {
            ScaleKind::Power { p } => format!("power:{p}"),
            ScaleKind::ConcaveLog { alpha } => format!("clog:{alpha}"),
            ScaleKind::Table { knots } => format!("table:{}", knots.len()),
        }
    }

    /// `theta(r)`.
    pub fn eval(&self, r: R) -> R {
        debug_assert!(r >= R::zero());
        match &self.kind {
            ScaleKind::Power { p } => {
                if r == R::zero() {
                    R::zero()
                } else {
                    r.powf(*p)
                }
            }
            ScaleKind::ConcaveLog { alpha } => {
                if r == R::zero() {
                    return R::zero();
                }
                let half_d = R::of(self.dim as f64 / 2.0);
                r.powf(half_d) * (R::one() + r.ln_1p()).powf(-*alpha)
            }
            ScaleKind::Table { knots } => {
                let last = knots.len() - 1;
                if r >= knots[last].0 {
                    let (r0, t0) = knots[last - 1];
                    let (r1, t1) = knots[last];
                    return t1 + (r - r1) * (t1 - t0) / (r1 - r0);
                }
                let seg = knots.partition_point(|k| k.0 <= r);
                let (r0, t0) = knots[seg - 1];
                let (r1, t1) = knots[seg];
                t0 + (r - r0) * (t1 - t0) / (r1 - r0)
            }
        }
    }

    /// `Theta(r) = integral of theta over [0, r]`.
    ///
    /// Exact for `Power` and `Table`; adaptive Simpson quadrature with
    /// relative accuracy [`ANTIDERIVATIVE_REL_TOL`] for `ConcaveLog`.
    pub fn antiderivative(&self, r: R) -> R {
        debug_assert!(r >= R::zero());
        if r == R::zero() {
            return R::zero();
        }
        match &self.kind {
            ScaleKind::Power { p } => r.powf(*p + R::one()) / (*p + R::one()),
            ScaleKind::ConcaveLog { .. } => {
                let tol = R::of(ANTIDERIVATIVE_REL_TOL).max(R::epsilon() * R::of(32.0));
                adaptive_simpson(&|s| self.eval(s), R::zero(), r, tol)
            }
            ScaleKind::Table { knots } => {
                let last = knots.len() - 1;
                if r >= knots[last].0 {
                    let (r1, t1) = knots[last];
                    let t = self.eval(r);
                    return self.knot_integrals[last] + (t1 + t) * (r - r1) / R::of(2.0);
                }
                let seg = knots.partition_point(|k| k.0 <= r);
                let (r0, t0) = knots[seg - 1];
                let t = self.eval(r);
                self.knot_integrals[seg - 1] + (t0 + t) * (r - r0) / R::of(2.0)
            }
        }
    }

    /// `eps(r) = sup over s >= r of theta(s) / s^(d/2)`, truncated at
    /// `s = TAIL_SUP_SPAN * r`.
    ///
    /// For `Power` the ratio is monotone, so the sup sits at an endpoint and
    /// is returned exactly. The other kinds are scanned on a geometric grid
    /// (whose left endpoint `s = r` is included exactly; for `ConcaveLog` the
    /// ratio is decreasing, so that value is already the sup).
    pub fn tail_sup(&self, r: R) -> R {
        debug_assert!(r > R::zero());
        let half_d = R::of(self.dim as f64 / 2.0);
        let r_max = r * R::of(TAIL_SUP_SPAN);
        let ratio_at = |s: R| self.eval(s) / s.powf(half_d);
        match &self.kind {
            ScaleKind::Power { p } => {
                if *p <= half_d {
                    ratio_at(r)
                } else {
                    ratio_at(r_max)
                }
            }
            _ => {
                let step = (r_max / r).powf(R::one() / R::of((TAIL_SUP_POINTS - 1) as f64));
                let mut best = ratio_at(r);
                let mut s = r;
                for _ in 1..TAIL_SUP_POINTS {
                    s = s * step;
                    best = best.max(ratio_at(s));
                }
                if let ScaleKind::Table { knots } = &self.kind {
                    for &(kr, _) in knots {
                        if kr >= r && kr <= r_max {
                            best = best.max(ratio_at(kr));
                        }
                    }
                }
                best
            }
        }
    }
}

/// Adaptive Simpson quadrature; `tol` is relative to the best estimate so far.
pub(crate) fn adaptive_simpson<R: Real>(f: &impl Fn(R) -> R, a: R, b: R, tol: R) -> R {
    let two = R::of(2.0);
    let six = R::of(6.0);
    let simpson = |a: R, fa: R, fm: R, b: R, fb: R| (b - a) * (fa + R::of(4.0) * fm + fb) / six;
    let m = (a + b) / two;
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, fa, fm, b, fb);

    // Explicit stack to avoid deep recursion for rough integrands.
    struct Seg<R> {
        a: R,
        fa: R,
        b: R,
        fb: R,
        estimate: R,
        depth: u32,
    }
    let mut total = R::zero();
    let mut stack = vec![Seg { a, fa, b, fb, estimate: whole, depth: 0 }];
    let scale_hint = whole.abs().max(R::of(1e-300));
    while let Some(seg) = stack.pop() {
        let m = (seg.a + seg.b) / two;
        let fm = f(m);
        let lm = (seg.a + m) / two;
        let rm = (m + seg.b) / two;
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(seg.a, seg.fa, flm, m, fm);
        let right = simpson(m, fm, frm, seg.b, seg.fb);
        let err = (left + right - seg.estimate).abs();
        if err <= tol * scale_hint * R::of(0.1) || seg.depth >= 48 {
            total += left + right + (left + right - seg.estimate) / R::of(15.0);
        } else {
            stack.push(Seg { a: seg.a, fa: seg.fa, b: m, fb: fm, estimate: left, depth: seg.depth + 1 });
            stack.push(Seg { a: m, fa: fm, b: seg.b, fb: seg.fb, estimate: right, depth: seg.depth + 1 });
        }
    }
    total
}
