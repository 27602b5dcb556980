//! Pass/fail checkers for structural properties of solved plans.
//!
//! Optimal plans admit no improving reassignment along cycles of support
//! pairs, no improving chain ending in unused mass, and no cheaper solution
//! of any restricted sub-problem. The checkers sample candidate
//! rearrangements of each family and report the worst violation found;
//! `passed` means that violation is within the check's tolerance. They are
//! samplers, not decision procedures: support sizes reach `10^5` cells, so
//! exhaustive search is off the table.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{dist, Cuboid};
use crate::laguerre::LaguerreDiagram;
use crate::real::Real;
use crate::scales::CostScale;
use crate::solver::{restrict_plan, solve_semicoupling, TransportPlan};
use crate::{Error, Result};

/// Improving cycles and chains must gain at most this much.
pub const MONOTONICITY_TOL: f64 = 1e-9;
/// Restricted re-solves must recover at least `1 - EFFICIENCY_TOL` of cost.
pub const EFFICIENCY_TOL: f64 = 1e-6;
/// Cell-area mismatch allowed for weighted diagrams.
pub const DIAGRAM_VOLUME_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CheckReport<R: Real> {
    pub check_name: String,
    pub passed: bool,
    pub worst_violation: R,
    pub samples_tested: u64,
    pub details: String,
}

impl<R: Real> CheckReport<R> {
    fn new(name: &str, passed: bool, worst: R, samples: u64, details: String) -> Self {
        Self {
            check_name: name.to_string(),
            passed,
            worst_violation: worst,
            samples_tested: samples,
            details,
        }
    }
}

fn pair_cost<R: Real>(plan: &TransportPlan<R>, scale: &CostScale<R>, cell: u32, target: u32) -> R {
    let r = dist(
        plan.grid.center(cell as usize),
        plan.pattern.point(target as usize),
        plan.grid.dim(),
    );
    scale.eval(r)
}

/// No cyclic reassignment of up to `max_len` support pairs lowers the cost:
/// for sampled cycles, `sum c(x_i, y_i) <= sum c(x_i, y_{i+1})` with the
/// last pair wrapping around.
pub fn check_cyclical_monotonicity<R: Real>(
    plan: &TransportPlan<R>,
    scale: &CostScale<R>,
    cycles: u64,
    max_len: usize,
    seed: u64,
) -> Result<CheckReport<R>> {
    if max_len < 2 {
        return Err(Error::Domain(format!("cycles need length >= 2, got {max_len}")));
    }
    let name = "cyclical_monotonicity";
    let support = plan.entries.len();
    if support < 2 {
        return Ok(CheckReport::new(
            name,
            true,
            R::zero(),
            0,
            "fewer than two support pairs; nothing to permute".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = R::zero();
    for _ in 0..cycles {
        let len = rng.gen_range(2..=max_len.min(support));
        let picks = index::sample(&mut rng, support, len).into_vec();
        let mut own = R::zero();
        let mut shifted = R::zero();
        for (slot, &e) in picks.iter().enumerate() {
            let (cell, target, _) = plan.entries[e];
            let (_, next_target, _) = plan.entries[picks[(slot + 1) % len]];
            own += pair_cost(plan, scale, cell, target);
            shifted += pair_cost(plan, scale, cell, next_target);
        }
        worst = worst.max(own - shifted);
    }
    let tol = R::of(MONOTONICITY_TOL);
    Ok(CheckReport::new(
        name,
        worst <= tol,
        worst,
        cycles,
        format!("max cycle gain {worst} over {cycles} sampled cycles (tolerance {tol})"),
    ))
}

/// No chain reassignment ending in an unused cell lowers the cost: for
/// sampled chains of support pairs `(x_1, xi_1) .. (x_L, xi_L)` and an
/// unused cell `x_{L+1}`, `sum c(x_i, xi_i) <= sum c(x_{i+1}, xi_i)`.
/// Skips (passes vacuously) when every active cell is in use.
pub fn check_sequential_monotonicity<R: Real>(
    plan: &TransportPlan<R>,
    scale: &CostScale<R>,
    chains: u64,
    max_len: usize,
    seed: u64,
) -> Result<CheckReport<R>> {
    if max_len < 1 {
        return Err(Error::Domain("chains need length >= 1".into()));
    }
    let name = "sequential_monotonicity";
    let used = plan.used_quanta();
    let cemetery: Vec<u32> = (0..plan.grid.len() as u32)
        .filter(|&i| plan.grid.is_active(i as usize) && used[i as usize] == 0)
        .collect();
    if cemetery.is_empty() {
        return Ok(CheckReport::new(
            name,
            true,
            R::zero(),
            0,
            "skipped: no unused cells to route chains through".into(),
        ));
    }
    let support = plan.entries.len();
    if support == 0 {
        return Ok(CheckReport::new(name, true, R::zero(), 0, "empty support".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = R::zero();
    for _ in 0..chains {
        let len = rng.gen_range(1..=max_len.min(support));
        let picks = index::sample(&mut rng, support, len).into_vec();
        let free_cell = cemetery[rng.gen_range(0..cemetery.len())];
        let mut own = R::zero();
        let mut shifted = R::zero();
        for (slot, &e) in picks.iter().enumerate() {
            let (cell, target, _) = plan.entries[e];
            let next_cell =
                if slot + 1 < len { plan.entries[picks[slot + 1]].0 } else { free_cell };
            own += pair_cost(plan, scale, cell, target);
            shifted += pair_cost(plan, scale, next_cell, target);
        }
        worst = worst.max(own - shifted);
    }
    let tol = R::of(MONOTONICITY_TOL);
    Ok(CheckReport::new(
        name,
        worst <= tol,
        worst,
        chains,
        format!(
            "max chain gain {worst} over {chains} chains into {} unused cells",
            cemetery.len()
        ),
    ))
}

/// Restricting the plan to a sub-box and re-solving from scratch must not
/// beat the restriction: the efficiency ratio (fresh cost over restricted
/// cost) stays above `1 - EFFICIENCY_TOL` on every given box.
pub fn check_efficiency<R: Real>(
    plan: &TransportPlan<R>,
    scale: &CostScale<R>,
    sub_boxes: &[Cuboid],
) -> Result<CheckReport<R>> {
    let name = "efficiency";
    let mut min_ratio = R::one();
    let mut nontrivial = 0u64;
    for region in sub_boxes {
        let restriction = restrict_plan(plan, region, scale)?;
        if restriction.pattern.is_empty() || !(restriction.cost > R::zero()) {
            continue;
        }
        nontrivial += 1;
        let fresh = solve_semicoupling(&restriction.grid, &restriction.pattern, scale)?;
        min_ratio = min_ratio.min(fresh.plan.cost / restriction.cost);
    }
    let worst = (R::one() - min_ratio).max(R::zero());
    let tol = R::of(EFFICIENCY_TOL);
    Ok(CheckReport::new(
        name,
        worst <= tol,
        worst,
        sub_boxes.len() as u64,
        format!(
            "min efficiency ratio {min_ratio} over {nontrivial} nontrivial of {} boxes",
            sub_boxes.len()
        ),
    ))
}

/// Every target receives exactly its demanded mass, checked in integer
/// quanta; any mismatch at all fails.
pub fn check_volumes_plan<R: Real>(plan: &TransportPlan<R>) -> CheckReport<R> {
    let name = "cell_volumes";
    let mut received = vec![0u64; plan.pattern.len()];
    for &(_, target, q) in &plan.entries {
        received[target as usize] += q;
    }
    let mut worst: u64 = 0;
    for (j, &got) in received.iter().enumerate() {
        let want = (plan.pattern.mass(j) / plan.quantum).round().f64() as u64;
        worst = worst.max(got.abs_diff(want));
    }
    CheckReport::new(
        name,
        worst == 0,
        R::of(worst as f64),
        plan.pattern.len() as u64,
        format!("max received-vs-demanded mismatch {worst} quanta"),
    )
}

/// The shipped density is an indicator: every cell sends all of its supply
/// or none of it, and inactive cells send nothing.
pub fn check_first_marginal<R: Real>(plan: &TransportPlan<R>) -> CheckReport<R> {
    let name = "indicator_marginal";
    let used = plan.used_quanta();
    let supply = plan.supply_quanta;
    let mut worst: u64 = 0;
    let mut broken: u64 = 0;
    for (i, &q) in used.iter().enumerate() {
        let dev = if !plan.grid.is_active(i) {
            q
        } else if q > supply {
            q - supply
        } else {
            q.min(supply - q)
        };
        if dev > 0 {
            broken += 1;
        }
        worst = worst.max(dev);
    }
    CheckReport::new(
        name,
        worst == 0,
        R::of(worst as f64),
        used.len() as u64,
        format!("{broken} cells neither full nor empty; worst deviation {worst} quanta"),
    )
}

/// Diagram variant: cell areas match target masses to [`DIAGRAM_VOLUME_TOL`].
pub fn check_volumes_diagram<R: Real>(diagram: &LaguerreDiagram<R>) -> CheckReport<R> {
    let name = "cell_volumes";
    let mut worst = R::zero();
    for (j, &area) in diagram.areas().iter().enumerate() {
        worst = worst.max((area - diagram.pattern().mass(j)).abs());
    }
    let tol = R::of(DIAGRAM_VOLUME_TOL);
    CheckReport::new(
        name,
        worst <= tol,
        worst,
        diagram.areas().len() as u64,
        format!("max |area - mass| = {worst} (tolerance {tol})"),
    )
}

/// Mean costs indexed by generation must be non-decreasing within three
/// pooled standard errors: `mean_{n+1} >= mean_n - 3 (se_n + se_{n+1})`.
pub fn check_monotone_costs<R: Real>(estimates: &[(u32, R, R)]) -> Result<CheckReport<R>> {
    if estimates.len() < 2 {
        return Err(Error::Domain("monotonicity needs at least two generations".into()));
    }
    let name = "monotone_costs";
    let mut worst = R::of(f64::NEG_INFINITY);
    for w in estimates.windows(2) {
        let (_, mean_a, se_a) = w[0];
        let (_, mean_b, se_b) = w[1];
        worst = worst.max(mean_a - R::of(3.0) * (se_a + se_b) - mean_b);
    }
    Ok(CheckReport::new(
        name,
        worst <= R::zero(),
        worst,
        (estimates.len() - 1) as u64,
        format!("max drop beyond pooled CI: {worst}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridMeasure, PointPattern};
    use crate::solver::Solved;

    type S = CostScale<f64>;

    fn solved_plan(p: f64) -> Solved<f64> {
        let grid = GridMeasure::<f64>::new([0, 0, 0], [2, 2, 1], 16, 2).unwrap();
        let mut pat = PointPattern::new(2, 1).unwrap();
        pat.push([0.6, 0.7, 0.0], 1).unwrap();
        pat.push([1.4, 1.3, 0.0], 1).unwrap();
        pat.push([0.5, 1.5, 0.0], 1).unwrap();
        solve_semicoupling(&grid, &pat, &S::power(p, 2).unwrap()).unwrap()
    }

    #[test]
    fn optimal_plan_passes_all_checks() {
        for p in [1.0, 2.0] {
            let scale = S::power(p, 2).unwrap();
            let solved = solved_plan(p);
            let cyc =
                check_cyclical_monotonicity(&solved.plan, &scale, 2000, 4, 7).unwrap();
            assert!(cyc.passed, "{}", cyc.details);
            let seq =
                check_sequential_monotonicity(&solved.plan, &scale, 2000, 4, 7).unwrap();
            assert!(seq.passed, "{}", seq.details);
            assert!(seq.samples_tested > 0, "expected unused cells in a loose window");
            let boxes = vec![
                Cuboid { dim: 2, lo: [0, 0, 0], hi: [1, 1, 1] },
                Cuboid { dim: 2, lo: [0, 0, 0], hi: [2, 2, 1] },
                Cuboid { dim: 2, lo: [1, 0, 0], hi: [2, 2, 1] },
            ];
            let eff = check_efficiency(&solved.plan, &scale, &boxes).unwrap();
            assert!(eff.passed, "{}", eff.details);
            let vol = check_volumes_plan(&solved.plan);
            assert!(vol.passed && vol.worst_violation == 0.0, "{}", vol.details);
            let ind = check_first_marginal(&solved.plan);
            assert!(ind.passed && ind.worst_violation == 0.0, "{}", ind.details);
        }
    }

    #[test]
    fn duplicated_shipment_fails_marginal_check() {
        let solved = solved_plan(2.0);
        let mut plan = solved.plan.clone();
        let first = plan.entries[0];
        plan.entries.push(first);
        let report = check_first_marginal(&plan);
        assert!(!report.passed);
        assert!(report.worst_violation >= 1.0);
    }

    #[test]
    fn swapped_assignments_fail_cyclical_check() {
        let scale = S::power(2.0, 2).unwrap();
        let solved = solved_plan(2.0);
        let mut plan = solved.plan.clone();
        // Reroute one cell of target 0 to target 1 and vice versa.
        let a = plan.entries.iter().position(|e| e.1 == 0).unwrap();
        let b = plan.entries.iter().position(|e| e.1 == 1).unwrap();
        plan.entries[a].1 = 1;
        plan.entries[b].1 = 0;
        plan.cost = plan.recompute_cost(&scale);
        let report = check_cyclical_monotonicity(&plan, &scale, 4000, 3, 11).unwrap();
        assert!(!report.passed, "swap went undetected: {}", report.details);
        assert!(report.worst_violation > 1e-6);
    }

    #[test]
    fn far_reassignment_fails_sequential_check() {
        let scale = S::power(2.0, 2).unwrap();
        let solved = solved_plan(2.0);
        let mut plan = solved.plan.clone();
        let used = plan.used_quanta();
        // Move one shipment to the unused cell farthest from its target.
        let (slot, &(_, target, _)) = plan.entries.iter().enumerate().next().unwrap();
        let far = (0..plan.grid.len())
            .filter(|&i| plan.grid.is_active(i) && used[i] == 0)
            .max_by(|&i, &j| {
                let t = plan.pattern.point(target as usize);
                let di = dist(plan.grid.center(i), t, 2);
                let dj = dist(plan.grid.center(j), t, 2);
                di.partial_cmp(&dj).unwrap()
            })
            .unwrap();
        plan.entries[slot].0 = far as u32;
        plan.cost = plan.recompute_cost(&scale);
        let report = check_sequential_monotonicity(&plan, &scale, 4000, 3, 13).unwrap();
        assert!(!report.passed, "bad shipment went undetected: {}", report.details);
        // The same plan is also visibly inefficient on the full window.
        let (lo, hi) = plan.grid.window();
        let all = Cuboid { dim: 2, lo, hi };
        let eff = check_efficiency(&plan, &scale, &[all]).unwrap();
        assert!(!eff.passed, "{}", eff.details);
    }

    #[test]
    fn dropped_shipment_fails_volume_check() {
        let solved = solved_plan(2.0);
        let mut plan = solved.plan.clone();
        plan.entries.pop();
        let report = check_volumes_plan(&plan);
        assert!(!report.passed);
        assert!(report.worst_violation >= 1.0);
    }

    #[test]
    fn diagram_volumes_pass() {
        let mut pat = PointPattern::new(2, 1).unwrap();
        pat.push([0.0, 0.0, 0.0], 1).unwrap();
        pat.push([1.1, 0.4, 0.0], 2).unwrap();
        let diagram = crate::laguerre::solve_laguerre(&pat, 1e-8, 60).unwrap();
        let report = check_volumes_diagram(&diagram);
        assert!(report.passed, "{}", report.details);
    }

    #[test]
    fn balanced_plan_skips_sequential_check() {
        let grid = GridMeasure::<f64>::new([0, 0, 0], [1, 1, 1], 8, 2).unwrap();
        let mut pat = PointPattern::new(2, 1).unwrap();
        pat.push([0.3, 0.4, 0.0], 1).unwrap();
        pat.push([0.8, 0.6, 0.0], 1).unwrap();
        let scale = S::power(2.0, 2).unwrap();
        let solved = crate::solver::solve_balanced(&grid, &pat, &scale).unwrap();
        let report =
            check_sequential_monotonicity(&solved.plan, &scale, 100, 3, 3).unwrap();
        assert!(report.passed);
        assert_eq!(report.samples_tested, 0);
        assert!(report.details.contains("skipped"));
        // Everything ships, so the marginal is the full indicator.
        assert!(check_first_marginal(&solved.plan).passed);
    }

    #[test]
    fn monotone_cost_series() {
        let ok = [(0u32, 1.0, 0.05), (1, 1.02, 0.05), (2, 1.01, 0.05)];
        assert!(check_monotone_costs(&ok).unwrap().passed);
        let bad = [(0u32, 1.0, 0.01), (1, 0.5, 0.01)];
        let report = check_monotone_costs(&bad).unwrap();
        assert!(!report.passed);
        assert!(report.worst_violation > 0.4);
        assert!(check_monotone_costs(&ok[..1]).is_err());
    }

    #[test]
    fn single_support_pair_is_vacuous() {
        let grid = GridMeasure::<f64>::new([0, 0, 0], [1, 1, 1], 4, 2).unwrap();
        let mut pat = PointPattern::new(2, 16).unwrap();
        pat.push([0.5, 0.5, 0.0], 1).unwrap();
        let scale = S::power(2.0, 2).unwrap();
        let solved = solve_semicoupling(&grid, &pat, &scale).unwrap();
        assert_eq!(solved.plan.entries.len(), 1);
        let report = check_cyclical_monotonicity(&solved.plan, &scale, 100, 4, 1).unwrap();
        assert!(report.passed);
        assert_eq!(report.samples_tested, 0);
    }

    #[test]
    fn reports_serialize() {
        let solved = solved_plan(1.0);
        let report = check_volumes_plan(&solved.plan);
        let json = serde_json::to_string(&report).unwrap();
        let back: CheckReport<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.check_name, report.check_name);
        assert_eq!(back.passed, report.passed);
    }
}
