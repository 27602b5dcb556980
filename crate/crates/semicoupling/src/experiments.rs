//! Monte Carlo estimation of per-volume transport costs on dyadic boxes,
//! the inequality suites tying them together, and the quenched
//! stabilization study.
//!
//! All estimators share one sampling discipline: a seeded, cell-keyed
//! pattern sampler, so two estimates fed into the same inequality see the
//! identical point realizations replica by replica (common random numbers),
//! and nested boxes of one replica agree pathwise.

use serde::{Deserialize, Serialize};

use crate::analytic::{
    concave_chain_increment, kappa2, kappa3, stirling_lower, stirling_lower_root, upper_root_coefficient,
    upper_root_form, upper_small_p,
};
use crate::geometry::{Cuboid, DyadicBox, GridMeasure, PointPattern};
use crate::pointprocess::PppSampler;
use crate::real::{Accum, Real};
use crate::scales::{CostScale, ScaleKind};
use crate::solver::{solve_balanced, solve_semicoupling, Solved};
use crate::{Error, Result};

/// Below this replica count the stderr column is not worth printing.
pub const MIN_REPLICAS: u32 = 30;
/// Lattice-unit margin of the Lebesgue window around the box.
pub const DEFAULT_MARGIN: i64 = 2;
/// How often the margin may double when shipped mass touches the window edge.
pub const MAX_MARGIN_DOUBLINGS: u32 = 3;

/// Grid resolution keeping each dimension at desk scale.
pub fn default_resolution(d: u32) -> Result<u32> {
    match d {
        1 => Ok(256),
        2 => Ok(32),
        3 => Ok(8),
        _ => Err(Error::Domain(format!("no resolution for dimension {d}"))),
    }
}

/// Largest generation solvable at the default resolution.
pub fn max_generation(d: u32) -> Result<u32> {
    match d {
        1 => Ok(6),
        2 => Ok(3),
        3 => Ok(1),
        _ => Err(Error::Domain(format!("no generation limit for dimension {d}"))),
    }
}

/// One Monte Carlo estimate of a per-volume cost.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EstimateRecord<R: Real> {
    pub quantity: String,
    pub n: u32,
    pub d: u32,
    pub scale: String,
    pub beta: f64,
    pub replicas: u32,
    pub mean: R,
    pub stderr: R,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "quantity,n,d,scale,beta,replicas,mean,stderr,seed";

impl<R: Real> EstimateRecord<R> {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.quantity,
            self.n,
            self.d,
            self.scale,
            self.beta,
            self.replicas,
            self.mean,
            self.stderr,
            self.seed
        )
    }
}

fn summarize<R: Real>(values: &[R]) -> (R, R) {
    let count = values.len() as f64;
    let mut acc = Accum::new();
    for v in values {
        acc.add(v.f64());
    }
    let mean = acc.total() / count;
    let mut sq = Accum::new();
    for v in values {
        let c = v.f64() - mean;
        sq.add(c * c);
    }
    let var = if values.len() > 1 { sq.total() / (count - 1.0) } else { 0.0 };
    (R::of(mean), R::of((var / count).sqrt()))
}

fn box_at_origin(n: u32, d: u32) -> Result<DyadicBox> {
    DyadicBox::from_word([0, 0, 0], &vec![[0, 0, 0]; n as usize], d as usize)
}

fn validate_run(n: u32, d: u32, replicas: u32, beta: f64) -> Result<()> {
    if replicas < MIN_REPLICAS {
        return Err(Error::Domain(format!("{replicas} replicas; need at least {MIN_REPLICAS}")));
    }
    if n > max_generation(d)? {
        return Err(Error::Domain(format!("generation {n} beyond desk scale for dimension {d}")));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("intensity {beta} invalid")));
    }
    Ok(())
}

/// Solve against a Lebesgue window around the box, doubling the margin and
/// retrying whenever used cells touch the window boundary.
fn solve_windowed<R: Real>(
    bx: &DyadicBox,
    pattern: &PointPattern<R>,
    scale: &CostScale<R>,
    m: u32,
    margin: i64,
) -> Result<Solved<R>> {
    let mut margin = margin;
    for _ in 0..=MAX_MARGIN_DOUBLINGS {
        let grid = GridMeasure::around(bx, margin, m)?;
        let solved = solve_semicoupling(&grid, pattern, scale)?;
        if !solved.report.boundary_used {
            return Ok(solved);
        }
        margin *= 2;
    }
    Err(Error::NoConvergence(format!(
        "shipped mass still reaches the window boundary at margin {margin}"
    )))
}

/// Mean per-volume semicoupling cost of a fresh pattern in `[0, 2^n)^d`
/// against the surrounding Lebesgue window.
pub fn estimate_cn<R: Real>(
    n: u32,
    d: u32,
    scale: &CostScale<R>,
    beta: f64,
    replicas: u32,
    seed: u64,
) -> Result<EstimateRecord<R>> {
    estimate_cn_with(n, d, scale, beta, replicas, seed, default_resolution(d)?, DEFAULT_MARGIN)
}

pub fn estimate_cn_with<R: Real>(
    n: u32,
    d: u32,
    scale: &CostScale<R>,
    beta: f64,
    replicas: u32,
    seed: u64,
    m: u32,
    margin: i64,
) -> Result<EstimateRecord<R>> {
    validate_run(n, d, replicas, beta)?;
    let bx = box_at_origin(n, d)?;
    let sampler = PppSampler::new(seed);
    let volume = R::of(bx.volume() as f64);
    let mut values = Vec::with_capacity(replicas as usize);
    for r in 0..replicas {
        let pattern = sampler.sample_box::<R>(r as u64, &bx, beta)?;
        let solved = solve_windowed(&bx, &pattern, scale, m, margin)?;
        values.push(solved.plan.cost / volume);
    }
    let (mean, stderr) = summarize(&values);
    Ok(EstimateRecord {
        quantity: "c_n".into(),
        n,
        d,
        scale: scale.label(),
        beta,
        replicas,
        mean,
        stderr,
        seed,
    })
}

/// Mean per-volume cost of the balanced problem: the box-uniform measure of
/// matching total mass against the same pattern. Empty replicas cost zero.
pub fn estimate_chat_n<R: Real>(
    n: u32,
    d: u32,
    scale: &CostScale<R>,
    replicas: u32,
    seed: u64,
) -> Result<EstimateRecord<R>> {
    estimate_chat_n_with(n, d, scale, replicas, seed, default_resolution(d)?)
}

pub fn estimate_chat_n_with<R: Real>(
    n: u32,
    d: u32,
    scale: &CostScale<R>,
    replicas: u32,
    seed: u64,
    m: u32,
) -> Result<EstimateRecord<R>> {
    validate_run(n, d, replicas, 1.0)?;
    let bx = box_at_origin(n, d)?;
    let sampler = PppSampler::new(seed);
    let volume = R::of(bx.volume() as f64);
    let mut values = Vec::with_capacity(replicas as usize);
    for r in 0..replicas {
        let pattern = sampler.sample_box::<R>(r as u64, &bx, 1.0)?;
        let grid = GridMeasure::around(&bx, 0, m)?;
        let solved = solve_balanced(&grid, &pattern, scale)?;
        values.push(solved.plan.cost / volume);
    }
    let (mean, stderr) = summarize(&values);
    Ok(EstimateRecord {
        quantity: "chat_n".into(),
        n,
        d,
        scale: scale.label(),
        beta: 1.0,
        replicas,
        mean,
        stderr,
        seed,
    })
}

/// Outcome of testing one inequality between two estimates: `holds` means
/// `lhs <= rhs` after widening by three pooled standard errors.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct InequalityReport<R: Real> {
    pub left: EstimateRecord<R>,
    pub right: EstimateRecord<R>,
    /// Additive correction on the right-hand side, on the compared scale.
    pub correction: R,
    /// `concave` compares means directly; `root` compares `1/p`-th powers.
    pub form: String,
    pub lhs: R,
    pub rhs: R,
    pub holds: bool,
}

fn power_exponent<R: Real>(scale: &CostScale<R>) -> Option<f64> {
    match scale.kind() {
        ScaleKind::Power { p } => Some(p.f64()),
        _ => None,
    }
}

fn build_inequality<R: Real>(
    left: EstimateRecord<R>,
    right: EstimateRecord<R>,
    correction: R,
    root_p: Option<f64>,
) -> InequalityReport<R> {
    let three = R::of(3.0);
    let (form, lhs, rhs) = match root_p {
        Some(p) => {
            let inv = R::of(1.0 / p);
            let lo = (left.mean - three * left.stderr).max(R::zero()).powf(inv);
            let hi = (right.mean + three * right.stderr).max(R::zero()).powf(inv);
            ("root".to_string(), lo, hi + correction)
        }
        None => (
            "concave".to_string(),
            left.mean,
            right.mean + correction + three * (left.stderr + right.stderr),
        ),
    };
    InequalityReport { left, right, correction, form, lhs, rhs, holds: lhs <= rhs }
}

/// Estimate `c_n` and `chat_n` on the same replicas and test the comparison
/// inequality: concave scales use `c_n <= chat_n + sqrt(2d) eps(2^n)`; power
/// scales with `p >= 1` in `d >= 3` use the `1/p`-th-power form with the
/// `kappa3` correction.
pub fn compare_cn_chat<R: Real>(
    n: u32,
    d: u32,
    scale: &CostScale<R>,
    replicas: u32,
    seed: u64,
) -> Result<InequalityReport<R>> {
    compare_cn_chat_with(n, d, scale, replicas, seed, default_resolution(d)?)
}

pub fn compare_cn_chat_with<R: Real>(
    n: u32,
    d: u32,
    scale: &CostScale<R>,
    replicas: u32,
    seed: u64,
    m: u32,
) -> Result<InequalityReport<R>> {
    let cn = estimate_cn_with(n, d, scale, 1.0, replicas, seed, m, DEFAULT_MARGIN)?;
    let chat = estimate_chat_n_with(n, d, scale, replicas, seed, m)?;
    let root_p = power_exponent(scale).filter(|&p| p >= 1.0 && d >= 3);
    let correction = match root_p {
        Some(p) => R::of(kappa3(p, d)? * 2f64.powf(n as f64 * (1.0 - d as f64 / 2.0))),
        None => {
            let eps = scale.tail_sup(R::of(2f64.powi(n as i32)));
            R::of((2.0 * d as f64).sqrt()) * eps
        }
    };
    Ok(build_inequality(cn, chat, correction, root_p))
}

/// Test one step of the doubling recursion for the modified cost:
/// `chat_{n+1} <= chat_n + increment`, with the increment from the concave
/// chain formula, or the `kappa2` form on `1/p`-th powers for `r^p` scales.
pub fn check_chat_recursion<R: Real>(
    n: u32,
    d: u32,
    scale: &CostScale<R>,
    replicas: u32,
    seed: u64,
) -> Result<InequalityReport<R>> {
    let coarse = estimate_chat_n(n, d, scale, replicas, seed)?;
    let fine = estimate_chat_n(n + 1, d, scale, replicas, seed)?;
    let root_p = power_exponent(scale).filter(|&p| p >= 1.0 && d >= 3);
    let correction = match root_p {
        Some(p) => {
            R::of(kappa2(p, d)? * 2f64.powf((n as f64 + 1.0) * (1.0 - d as f64 / 2.0)))
        }
        None => concave_chain_increment(n, d, scale),
    };
    Ok(build_inequality(fine, coarse, correction, root_p))
}

/// Per-replica superadditivity of box costs: the cost of the doubled box
/// must be at least the summed costs of its `2^d` children, all solved on
/// the identical Lebesgue window so the split of the parent plan is feasible
/// for the children.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SuperadditivityReport<R: Real> {
    pub replicas: u32,
    /// Replicas where the parent cost covered the children within slack.
    pub satisfied: u32,
    /// Documented discretization slack: `2 * cell mass * theta(diameter)`.
    pub slack: R,
    pub worst_deficit: R,
    pub holds: bool,
}

pub fn superadditivity_study<R: Real>(
    d: u32,
    scale: &CostScale<R>,
    beta: f64,
    replicas: u32,
    seed: u64,
    m: u32,
) -> Result<SuperadditivityReport<R>> {
    validate_run(1, d, replicas, beta)?;
    let parent = box_at_origin(1, d)?;
    let children = parent.subdivide()?;
    let sampler = PppSampler::new(seed);
    let grid = GridMeasure::around(&parent, DEFAULT_MARGIN, m)?;
    let (lo, hi) = grid.window();
    let mut diam2 = 0.0;
    for k in 0..d as usize {
        diam2 += ((hi[k] - lo[k]) as f64).powi(2);
    }
    let slack =
        R::of(2.0) * grid.cell_mass() * scale.eval(R::of(diam2.sqrt()));
    let mut satisfied = 0u32;
    let mut worst = R::zero();
    for r in 0..replicas {
        let pattern = sampler.sample_box::<R>(r as u64, &parent, beta)?;
        let whole = solve_semicoupling(&grid, &pattern, scale)?.plan.cost;
        let mut parts = R::zero();
        for child in &children {
            let region = Cuboid { dim: d as usize, lo: child.lower(), hi: child.upper() };
            let (sub, _) = pattern.restrict_to(&region);
            parts += solve_semicoupling(&grid, &sub, scale)?.plan.cost;
        }
        let deficit = parts - whole;
        if deficit <= slack {
            satisfied += 1;
        }
        worst = worst.max(deficit);
    }
    let needed = (replicas as f64 * 0.95).ceil() as u32;
    Ok(SuperadditivityReport {
        replicas,
        satisfied,
        slack,
        worst_deficit: worst,
        holds: satisfied >= needed,
    })
}

/// Pathwise agreement of the intensity-rescaling identity at `beta = 1/4`,
/// `d = 2`: solving the quarter-mass pattern contracted by one half at twice
/// the resolution equals solving the original pattern under the transformed
/// scale `r -> theta(r/2)/4`. With piecewise-linear scales the two discrete
/// problems are cell-for-cell isomorphic, so costs agree to rounding.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RescalingReport<R: Real> {
    pub direct: EstimateRecord<R>,
    pub contracted: EstimateRecord<R>,
    pub max_abs_diff: R,
    /// Pathwise identity within rounding.
    pub holds: bool,
    /// The statistical comparison implied by it.
    pub within_pooled_ci: bool,
}

pub fn rescaling_consistency<R: Real>(
    n: u32,
    knots: &[(f64, f64)],
    replicas: u32,
    seed: u64,
    m: u32,
) -> Result<RescalingReport<R>> {
    validate_run(n, 2, replicas, 0.25)?;
    if n == 0 {
        return Err(Error::Domain("contracted box needs n >= 1".into()));
    }
    let base: Vec<(R, R)> = knots.iter().map(|&(r, v)| (R::of(r), R::of(v))).collect();
    let scale = CostScale::table(base, 2)?;
    // theta_beta(r) = beta * theta(beta^{1/2} r): knots stretch by 2, values shrink by 4.
    let transformed: Vec<(R, R)> =
        knots.iter().map(|&(r, v)| (R::of(2.0 * r), R::of(v / 4.0))).collect();
    let scale_beta = CostScale::table(transformed, 2)?;

    let big = box_at_origin(n, 2)?;
    let small = box_at_origin(n - 1, 2)?;
    let sampler = PppSampler::new(seed);
    let big_volume = R::of(big.volume() as f64);
    let mut direct_vals = Vec::with_capacity(replicas as usize);
    let mut contracted_vals = Vec::with_capacity(replicas as usize);
    let mut max_diff = R::zero();
    for r in 0..replicas {
        let pattern = sampler.sample_box::<R>(r as u64, &big, 0.25)?;
        let mut shrunk = PointPattern::new(2, 4)?;
        for i in 0..pattern.len() {
            let x = pattern.point(i);
            shrunk.push([x[0] / R::of(2.0), x[1] / R::of(2.0), R::zero()], pattern.mult(i))?;
        }
        let direct_grid = GridMeasure::around(&big, DEFAULT_MARGIN, m)?;
        let direct = solve_semicoupling(&direct_grid, &pattern, &scale_beta)?.plan.cost;
        let contracted_grid = GridMeasure::around(&small, DEFAULT_MARGIN / 2, 2 * m)?;
        let contracted = solve_semicoupling(&contracted_grid, &shrunk, &scale)?.plan.cost;
        max_diff = max_diff.max((direct - contracted).abs());
        direct_vals.push(direct / big_volume);
        contracted_vals.push(contracted / big_volume);
    }
    let (mean_d, se_d) = summarize(&direct_vals);
    let (mean_c, se_c) = summarize(&contracted_vals);
    let within_pooled_ci = (mean_d - mean_c).abs() <= R::of(3.0) * (se_d + se_c);
    let mk = |quantity: &str, label: String, mean, stderr| EstimateRecord::<R> {
        quantity: quantity.into(),
        n,
        d: 2,
        scale: label,
        beta: 0.25,
        replicas,
        mean,
        stderr,
        seed,
    };
    Ok(RescalingReport {
        direct: mk("c_n", scale_beta.label(), mean_d, se_d),
        contracted: mk("c_n", scale.label(), mean_c, se_c),
        max_abs_diff: max_diff,
        holds: max_diff <= R::of(1e-9),
        within_pooled_ci,
    })
}

/// Changed-assignment fractions of the quenched stabilization study.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StabilizationRecord<R: Real> {
    pub z: [i64; 3],
    pub generations: Vec<u32>,
    /// Mean fraction of probe cells whose target moved, one entry per
    /// consecutive generation pair.
    pub changed_fraction: Vec<R>,
    pub replicas: u32,
    pub seed: u64,
}

/// Per replica: draw one shift word and one pattern on the largest box
/// `B_max(z, word)`, solve the semicoupling for every generation `0..=max_n`
/// of the nested boxes, and record how often the target assigned to a probe
/// cell changes from one generation to the next. Probe cells are the
/// resolution-`m` cells of `probe`, which must sit inside the innermost box.
pub fn stabilization_study<R: Real>(
    z: [i64; 3],
    max_n: u32,
    d: u32,
    scale: &CostScale<R>,
    beta: f64,
    probe: &Cuboid,
    replicas: u32,
    seed: u64,
    m: u32,
) -> Result<StabilizationRecord<R>> {
    validate_run(max_n, d, replicas, beta)?;
    if max_n == 0 {
        return Err(Error::Domain("need at least two generations to compare".into()));
    }
    let inner = DyadicBox::unit(z, d as usize)?;
    for k in 0..d as usize {
        if probe.lo[k] < inner.lower()[k] || probe.hi[k] > inner.upper()[k] {
            return Err(Error::Domain("probe region must sit inside the generation-0 box".into()));
        }
    }
    let sampler = PppSampler::new(seed);
    // Physical probe points: centers of the grid cells inside `probe`.
    let probe_grid = GridMeasure::<R>::new(probe.lo, probe.hi, m, d as usize)?;
    let probe_points: Vec<_> = (0..probe_grid.len()).map(|i| probe_grid.center(i)).collect();
    let pairs = max_n as usize;
    let mut sums = vec![0.0f64; pairs];
    for r in 0..replicas {
        let word = sampler.gamma_word(r as u64, max_n as usize, d as usize);
        let big = DyadicBox::from_word(z, &word, d as usize)?;
        let pattern = sampler.sample_box::<R>(r as u64, &big, beta)?;
        let mut previous: Option<Vec<Option<[R; 3]>>> = None;
        for g in 0..=max_n {
            let bx = DyadicBox::from_word(z, &word[..g as usize], d as usize)?;
            let region = Cuboid { dim: d as usize, lo: bx.lower(), hi: bx.upper() };
            let (sub, _) = pattern.restrict_to(&region);
            let solved = solve_windowed(&bx, &sub, scale, m, DEFAULT_MARGIN)?;
            let assignment = solved.plan.assignment_vec()?;
            let targets: Vec<Option<[R; 3]>> = probe_points
                .iter()
                .map(|&x| {
                    let cell = solved
                        .plan
                        .grid
                        .locate(x)
                        .expect("probe point inside every window");
                    match assignment[cell] {
                        -1 => None,
                        t => Some(solved.plan.pattern.point(t as usize)),
                    }
                })
                .collect();
            if let Some(prev) = previous.replace(targets) {
                let now = previous.as_ref().unwrap();
                let changed = prev.iter().zip(now).filter(|(a, b)| a != b).count();
                sums[g as usize - 1] += changed as f64 / probe_points.len() as f64;
            }
        }
    }
    Ok(StabilizationRecord {
        z,
        generations: (0..=max_n).collect(),
        changed_fraction: sums.iter().map(|&s| R::of(s / replicas as f64)).collect(),
        replicas,
        seed,
    })
}

/// One row of the dimension-sweep cost bracket.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundsRow {
    pub d: u32,
    pub p: f64,
    /// `direct` brackets the cost itself (p <= 1); `root` its 1/p-th power.
    pub bracket: String,
    pub lower: f64,
    pub upper: f64,
    pub ratio: f64,
    pub skipped: bool,
    pub note: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundsReport {
    pub rows: Vec<BoundsRow>,
    /// Lower <= upper on every evaluated row.
    pub all_ordered: bool,
    /// Ratio of leading sqrt(d) coefficients at d = 10^4.
    pub leading_ratio: f64,
    /// Under 2 is expected for p <= 2, under 5 always.
    pub leading_ratio_under_2: bool,
}

pub fn bounds_row(p: f64, d: u32) -> Result<BoundsRow> {
    let mut row = BoundsRow {
        d,
        p,
        bracket: String::new(),
        lower: 0.0,
        upper: 0.0,
        ratio: 0.0,
        skipped: false,
        note: String::new(),
    };
    if p < 1.0 {
        if (d as f64) <= 2.0 * p {
            row.skipped = true;
            row.note = format!("d <= 2p = {}: outside the bracket's domain", 2.0 * p);
            return Ok(row);
        }
        row.bracket = "direct".into();
        row.lower = stirling_lower(p, d);
        row.upper = upper_small_p(p, d)?;
    } else {
        if d < 3 {
            row.skipped = true;
            row.note = format!("d = {d} < 3: outside the bracket's domain");
            return Ok(row);
        }
        row.bracket = "root".into();
        row.lower = stirling_lower_root(p, d);
        row.upper = upper_root_form(p, d)?;
    }
    row.ratio = row.upper / row.lower;
    Ok(row)
}

/// Evaluate the bracket across a dimension sweep, plus the leading-order
/// ratio probed at `d = 10^4` (the additive constant excluded, as it washes
/// out of the `sqrt(d)` scaling).
pub fn bounds_suite(p: f64, d_values: &[u32]) -> Result<BoundsReport> {
    if !(p > 0.0) {
        return Err(Error::Domain(format!("bracket sweep needs p > 0, got {p}")));
    }
    let rows: Result<Vec<BoundsRow>> = d_values.iter().map(|&d| bounds_row(p, d)).collect();
    let rows = rows?;
    let all_ordered = rows.iter().all(|r| r.skipped || r.lower <= r.upper);
    let d_probe = 10_000u32;
    let leading_ratio = if p < 1.0 {
        (d_probe as f64 / 6.0).powf(p / 2.0) / stirling_lower(p, d_probe)
    } else {
        (d_probe as f64).sqrt() * upper_root_coefficient(p)? / stirling_lower_root(p, d_probe)
    };
    Ok(BoundsReport {
        rows,
        all_ordered,
        leading_ratio,
        leading_ratio_under_2: leading_ratio < 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{tau, tau_hat};

    type S = CostScale<f64>;

    #[test]
    fn zero_intensity_estimates_vanish() {
        let s = S::power(2.0, 2).unwrap();
        let rec = estimate_cn(0, 2, &s, 0.0, 30, 5).unwrap();
        assert_eq!(rec.mean, 0.0);
        assert_eq!(rec.stderr, 0.0);
        assert_eq!(rec.quantity, "c_n");
    }

    #[test]
    fn rejects_out_of_scope_runs() {
        let s = S::power(2.0, 2).unwrap();
        assert!(estimate_cn(0, 2, &s, 1.0, 10, 5).is_err());
        assert!(estimate_cn(4, 2, &s, 1.0, 30, 5).is_err());
        assert!(estimate_cn(0, 2, &s, -1.0, 30, 5).is_err());
        assert!(estimate_chat_n(2, 3, &s, 30, 5).is_err());
        assert!(default_resolution(4).is_err());
    }

    #[test]
    fn dirac_lower_bound_holds_at_small_scale() {
        // 60 replicas keep this quick; the full 500-replica run lives in the
        // acceptance suite.
        let s = S::power(2.0, 2).unwrap();
        let rec = estimate_cn(0, 2, &s, 1.0, 60, 42).unwrap();
        assert!(rec.mean >= tau(2.0, 2).unwrap() - 3.0 * rec.stderr, "{rec:?}");
        assert!(rec.stderr > 0.0);
    }

    #[test]
    fn chat_bracket_holds_at_small_scale() {
        let s = S::power(1.0, 1).unwrap();
        let rec = estimate_chat_n(0, 1, &s, 60, 42).unwrap();
        let hat = tau_hat(1.0, 1).unwrap();
        assert!(rec.mean >= hat / std::f64::consts::E - 3.0 * rec.stderr, "{rec:?}");
        assert!(rec.mean <= hat + 3.0 * rec.stderr, "{rec:?}");
    }

    #[test]
    fn estimates_are_deterministic() {
        let s = S::power(1.0, 2).unwrap();
        let a = estimate_cn_with(1, 2, &s, 1.0, 30, 9, 16, DEFAULT_MARGIN).unwrap();
        let b = estimate_cn_with(1, 2, &s, 1.0, 30, 9, 16, DEFAULT_MARGIN).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        assert_eq!(a.csv_row(), b.csv_row());
        let c = estimate_cn_with(1, 2, &s, 1.0, 30, 10, 16, DEFAULT_MARGIN).unwrap();
        assert_ne!(a.mean.to_bits(), c.mean.to_bits());
    }

    #[test]
    fn csv_round_trip_layout() {
        let s = S::power(2.0, 2).unwrap();
        let rec = estimate_cn(0, 2, &s, 0.0, 30, 3).unwrap();
        let row = rec.csv_row();
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
        assert!(row.starts_with("c_n,0,2,power:2,0,30,"));
    }

    #[test]
    fn comparison_inequality_concave() {
        // theta = sqrt r in d = 2: eps(1) = 1 exactly, so the correction is
        // sqrt(2 d) = 2; the inequality should hold with room.
        let s = S::power(0.5, 2).unwrap();
        let rep = compare_cn_chat(0, 2, &s, 40, 11).unwrap();
        assert_eq!(rep.form, "concave");
        assert!(rep.holds, "{rep:?}");
        assert!(rep.correction >= 2.0 - 1e-12);
    }

    #[test]
    fn comparison_inequality_root_form() {
        let s = S::power(1.0, 3).unwrap();
        let rep = compare_cn_chat_with(0, 3, &s, 30, 11, 8).unwrap();
        assert_eq!(rep.form, "root");
        assert!(rep.holds, "{rep:?}");
    }

    #[test]
    fn comparison_vacuous_for_steep_scales() {
        // p = 2 in d = 2: the tail ratio sup is enormous, so the inequality
        // is vacuously true; it must still be reported as holding.
        let s = S::power(2.0, 2).unwrap();
        let rep = compare_cn_chat(0, 2, &s, 30, 4).unwrap();
        assert_eq!(rep.form, "concave");
        assert!(rep.correction > 1e3);
        assert!(rep.holds);
    }

    #[test]
    fn recursion_inequality_holds() {
        let s = S::power(0.5, 2).unwrap();
        let rep = check_chat_recursion(0, 2, &s, 40, 21).unwrap();
        assert_eq!(rep.form, "concave");
        assert!(rep.holds, "{rep:?}");
        // The increment at n=0, d=2 is exactly Theta(2).
        let want = s.antiderivative(2.0);
        assert!((rep.correction - want).abs() < 1e-12);
    }

    #[test]
    fn superadditivity_is_pathwise_exact_here() {
        let s = S::power(1.0, 2).unwrap();
        let rep = superadditivity_study(2, &s, 1.0, 40, 33, 16).unwrap();
        assert!(rep.holds, "{rep:?}");
        assert_eq!(rep.satisfied, 40);
        // Same-window solves make the parent plan splittable: the deficit
        // should be at rounding level, far below the documented slack.
        assert!(rep.worst_deficit < 1e-9, "{}", rep.worst_deficit);
    }

    #[test]
    fn rescaling_identity_is_pathwise() {
        let knots =
            [(0.0, 0.0), (0.5, 0.55), (1.0, 1.0), (2.0, 1.6), (4.0, 2.3), (16.0, 4.0)];
        let rep = rescaling_consistency::<f64>(1, &knots, 30, 77, 16).unwrap();
        assert!(rep.holds, "max diff {}", rep.max_abs_diff);
        assert!(rep.within_pooled_ci);
        assert!((rep.direct.mean - rep.contracted.mean).abs() <= 1e-9);
    }

    #[test]
    fn stabilization_fractions_in_range() {
        let s = S::power(2.0, 2).unwrap();
        let probe = Cuboid { dim: 2, lo: [0, 0, 0], hi: [1, 1, 1] };
        let rec =
            stabilization_study([0, 0, 0], 2, 2, &s, 1.0, &probe, 30, 19, 8).unwrap();
        assert_eq!(rec.changed_fraction.len(), 2);
        for &f in &rec.changed_fraction {
            assert!((0.0..=1.0).contains(&f));
        }
        // Some probe cell must change when the box first doubles.
        assert!(rec.changed_fraction[0] > 0.0);
    }

    #[test]
    fn stabilization_of_empty_pattern_never_changes() {
        let s = S::power(2.0, 2).unwrap();
        let probe = Cuboid { dim: 2, lo: [0, 0, 0], hi: [1, 1, 1] };
        let rec =
            stabilization_study([0, 0, 0], 2, 2, &s, 0.0, &probe, 30, 19, 8).unwrap();
        assert!(rec.changed_fraction.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn bounds_sweep_is_ordered() {
        let sweep: Vec<u32> = (3..=50).collect();
        for p in [0.5, 1.0, 2.0] {
            let rep = bounds_suite(p, &sweep).unwrap();
            assert!(rep.all_ordered, "p={p}");
        }
        let rep = bounds_suite(2.0, &sweep).unwrap();
        assert!(rep.leading_ratio_under_2, "{}", rep.leading_ratio);
        assert!((rep.leading_ratio - 1.6876).abs() < 1e-3);
        let rep4 = bounds_suite(4.0, &sweep).unwrap();
        assert!(!rep4.leading_ratio_under_2);
        assert!(rep4.leading_ratio < 5.0);
    }

    #[test]
    fn bounds_skip_excluded_region() {
        let row = bounds_row(1.0, 2).unwrap();
        assert!(row.skipped);
        assert!(row.note.contains("outside"));
        let row = bounds_row(0.5, 1).unwrap();
        assert!(row.skipped);
    }
}
