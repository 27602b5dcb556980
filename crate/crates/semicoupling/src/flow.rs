//! Exact integral transportation core.
//!
//! Solves min-cost flow between quantized suppliers and demanders where
//! unshipped supply is free (the "stay put" option). The graph is contracted
//! to demander nodes plus one implicit free source; supplier state lives in
//! per-demander candidate lists and per-supplier ownership tables. Arc costs
//! are pre-quantized integers, so optimality is certified in exact arithmetic.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::{Error, Result};

/// Hard cap on demanders; steal arcs are dense in demander pairs.
pub const MAX_DEMANDERS: usize = 2048;

/// One transportation instance over quantized masses and integer arc costs.
///
/// `arcs[j]` lists `(cost, supplier)` pairs demander `j` may draw from; a pair
/// absent from every list is forbidden. Costs must be nonnegative.
#[derive(Clone, Debug, Default)]
pub struct FlowProblem {
    pub supplies: Vec<u64>,
    pub demands: Vec<u64>,
    pub arcs: Vec<Vec<(i64, u32)>>,
}

/// Integral optimal flow together with its dual certificate.
#[derive(Clone, Debug)]
pub struct FlowSolution {
    /// `(supplier, demander, quanta)` sorted by supplier then demander.
    pub assignments: Vec<(u32, u32, u64)>,
    /// Total cost in quantized units.
    pub cost: i128,
    /// Nonnegative dual price per demander.
    pub phi: Vec<i128>,
    /// Largest dual price, 0 when there are no demanders.
    pub max_phi: i128,
    /// Shortest-path phases executed.
    pub phases: u64,
}

#[derive(Clone, Copy, Debug)]
enum Parent {
    Free(u32, i64),
    /// `(previous demander, supplier moved, arc cost into the new demander)`.
    Steal(u32, u32, i64),
}

#[derive(Default)]
struct PairHeap {
    /// `(weight, supplier, arc cost into the target demander)`.
    heap: BinaryHeap<Reverse<(i64, u32, i64)>>,
    /// Prefix of the source demander's gain log already turned into entries.
    absorbed: usize,
}

/// `(demander, quanta, arc cost)` rows; a supplier owns few demanders.
type OwnedRow = Vec<(u32, u64, i64)>;

fn owned_qty(row: &OwnedRow, j: u32) -> u64 {
    row.iter().find(|e| e.0 == j).map_or(0, |e| e.1)
}

fn owned_cost(row: &OwnedRow, j: u32) -> Option<i64> {
    row.iter().find(|e| e.0 == j).map(|e| e.2)
}

struct Engine {
    k: usize,
    supplies: Vec<u64>,
    demands: Vec<u64>,
    // Per-supplier arcs sorted by demander, for O(log) cost lookups.
    row_start: Vec<usize>,
    row_dem: Vec<u32>,
    row_cost: Vec<i64>,
    // Per-demander candidates sorted by (cost, supplier); the cursor skips
    // exhausted suppliers and never needs to back up because free quantities
    // only decrease.
    freelist: Vec<Vec<(i64, u32)>>,
    free_cur: Vec<usize>,
    free: Vec<u64>,
    owned: Vec<OwnedRow>,
    received: Vec<u64>,
    deficit: Vec<u64>,
    gain_log: Vec<Vec<u32>>,
    pairs: Vec<Option<Box<PairHeap>>>,
    pi: Vec<i128>,
    pi_s: i128,
    // Phase-local state, reset by stamping.
    dist: Vec<i128>,
    stamp: Vec<u32>,
    popped: Vec<u32>,
    parent: Vec<Parent>,
    stamp_cur: u32,
    heap: BinaryHeap<Reverse<(i128, u32)>>,
    labeled: Vec<(usize, i128)>,
    phases: u64,
}

impl Engine {
    fn new(problem: FlowProblem) -> Result<Self> {
        let FlowProblem { supplies, demands, arcs } = problem;
        let c = supplies.len();
        let k = demands.len();
        if arcs.len() != k {
            return Err(Error::Infeasible(format!(
                "arc table has {} rows for {k} demanders",
                arcs.len()
            )));
        }
        if k > MAX_DEMANDERS {
            return Err(Error::Infeasible(format!("{k} demanders exceed cap {MAX_DEMANDERS}")));
        }
        if c > u32::MAX as usize {
            return Err(Error::Infeasible("supplier count exceeds u32 range".into()));
        }
        let mut counts = vec![0usize; c];
        for (j, row) in arcs.iter().enumerate() {
            for &(cost, i) in row {
                if cost < 0 {
                    return Err(Error::Infeasible(format!("negative arc cost {cost}")));
                }
                let i = i as usize;
                if i >= c {
                    return Err(Error::Infeasible(format!(
                        "arc for demander {j} names supplier {i} out of {c}"
                    )));
                }
                counts[i] += 1;
            }
        }
        let mut row_start = vec![0usize; c + 1];
        for i in 0..c {
            row_start[i + 1] = row_start[i] + counts[i];
        }
        let total = row_start[c];
        let mut row_dem = vec![0u32; total];
        let mut row_cost = vec![0i64; total];
        let mut fill = row_start.clone();
        for (j, row) in arcs.iter().enumerate() {
            for &(cost, i) in row {
                let at = fill[i as usize];
                row_dem[at] = j as u32;
                row_cost[at] = cost;
                fill[i as usize] += 1;
            }
        }
        // Demanders were visited in order, so each supplier row is sorted by
        // demander already; duplicate pairs are rejected to keep lookups exact.
        for i in 0..c {
            let r = row_start[i]..row_start[i + 1];
            let ds = &row_dem[r];
            if ds.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Infeasible(format!("duplicate arc for supplier {i}")));
            }
        }
        let mut freelist: Vec<Vec<(i64, u32)>> = arcs;
        for row in &mut freelist {
            row.sort_unstable();
        }
        Ok(Self {
            k,
            free: supplies.clone(),
            deficit: demands.clone(),
            supplies,
            demands,
            row_start,
            row_dem,
            row_cost,
            freelist,
            free_cur: vec![0; k],
            owned: vec![Vec::new(); c],
            received: vec![0; k],
            gain_log: vec![Vec::new(); k],
            pairs: (0..k * k).map(|_| None).collect(),
            pi: vec![0; k],
            pi_s: 0,
            dist: vec![0; k],
            stamp: vec![0; k],
            popped: vec![0; k],
            parent: vec![Parent::Free(0, 0); k],
            stamp_cur: 0,
            heap: BinaryHeap::new(),
            labeled: Vec::new(),
            phases: 0,
        })
    }

    fn arc_cost(&self, i: usize, j: u32) -> Option<i64> {
        let r = self.row_start[i]..self.row_start[i + 1];
        let ds = &self.row_dem[r.clone()];
        ds.binary_search(&j).ok().map(|at| self.row_cost[r.start + at])
    }

    fn free_peek(&mut self, j: usize) -> Option<(i64, u32)> {
        let row = &self.freelist[j];
        let cur = &mut self.free_cur[j];
        while *cur < row.len() && self.free[row[*cur].1 as usize] == 0 {
            *cur += 1;
        }
        row.get(*cur).copied()
    }

    fn steal_peek(&mut self, from: usize, to: usize) -> Option<(i64, u32, i64)> {
        let idx = from * self.k + to;
        let mut ph = self.pairs[idx].take().unwrap_or_default();
        let log = &self.gain_log[from];
        while ph.absorbed < log.len() {
            let i = log[ph.absorbed] as usize;
            ph.absorbed += 1;
            // Only current owners produce usable entries; a later regain logs
            // again, so skipping a stale one loses nothing.
            if let Some(cf) = owned_cost(&self.owned[i], from as u32) {
                if let Some(ct) = self.arc_cost(i, to as u32) {
                    ph.heap.push(Reverse((ct - cf, i as u32, ct)));
                }
            }
        }
        let res = loop {
            match ph.heap.peek() {
                None => break None,
                Some(&Reverse((w, i, ct))) => {
                    if owned_qty(&self.owned[i as usize], from as u32) > 0 {
                        break Some((w, i, ct));
                    }
                    ph.heap.pop();
                }
            }
        };
        self.pairs[idx] = Some(ph);
        res
    }

    fn try_relax(&mut self, j: usize, nd: i128) -> bool {
        if self.stamp[j] != self.stamp_cur {
            self.stamp[j] = self.stamp_cur;
            self.dist[j] = nd;
            true
        } else if nd < self.dist[j] {
            self.dist[j] = nd;
            true
        } else {
            false
        }
    }

    /// One shortest-path phase; returns the deficient demander reached.
    fn phase(&mut self) -> Result<usize> {
        self.stamp_cur += 1;
        self.heap.clear();
        self.labeled.clear();
        for j in 0..self.k {
            if let Some((c, i)) = self.free_peek(j) {
                let d = c as i128 + self.pi_s - self.pi[j];
                debug_assert!(d >= 0, "free arc with negative reduced cost");
                if self.try_relax(j, d) {
                    self.parent[j] = Parent::Free(i, c);
                    self.heap.push(Reverse((d, j as u32)));
                }
            }
        }
        while let Some(Reverse((d, ju))) = self.heap.pop() {
            let j = ju as usize;
            if self.stamp[j] != self.stamp_cur || d > self.dist[j] || self.popped[j] == self.stamp_cur
            {
                continue;
            }
            self.popped[j] = self.stamp_cur;
            self.labeled.push((j, d));
            if self.deficit[j] > 0 {
                for &(v, dv) in &self.labeled {
                    self.pi[v] -= d - dv;
                }
                self.pi_s -= d;
                return Ok(j);
            }
            for j2 in 0..self.k {
                if j2 == j || self.popped[j2] == self.stamp_cur {
                    continue;
                }
                if let Some((w, i, ct)) = self.steal_peek(j, j2) {
                    let nd = d + w as i128 + self.pi[j] - self.pi[j2];
                    debug_assert!(nd >= d, "steal arc with negative reduced cost");
                    if self.try_relax(j2, nd) {
                        self.parent[j2] = Parent::Steal(ju, i, ct);
                        self.heap.push(Reverse((nd, j2 as u32)));
                    }
                }
            }
        }
        Err(Error::Infeasible("no augmenting path within the admissible arcs".into()))
    }

    fn add_owned(&mut self, i: usize, j: u32, q: u64, cost: i64) {
        let row = &mut self.owned[i];
        if let Some(e) = row.iter_mut().find(|e| e.0 == j) {
            e.1 += q;
        } else {
            row.push((j, q, cost));
            self.gain_log[j as usize].push(i as u32);
        }
        self.received[j as usize] += q;
    }

    fn sub_owned(&mut self, i: usize, j: u32, q: u64) {
        let row = &mut self.owned[i];
        let at = row.iter().position(|e| e.0 == j).expect("path step without ownership");
        debug_assert!(row[at].1 >= q);
        row[at].1 -= q;
        if row[at].1 == 0 {
            row.swap_remove(at);
        }
        self.received[j as usize] -= q;
    }

    /// Push as many quanta as the path supports toward `jt`.
    fn augment(&mut self, jt: usize) -> u64 {
        let mut steps: Vec<(u32, u32, i64, u32)> = Vec::new(); // (to, supplier, cost, from)
        let mut v = jt as u32;
        let (i0, c0) = loop {
            match self.parent[v as usize] {
                Parent::Free(i, c) => break (i, c),
                Parent::Steal(from, i, ct) => {
                    steps.push((v, i, ct, from));
                    v = from;
                }
            }
        };
        let mut q = self.deficit[jt].min(self.free[i0 as usize]);
        for &(_, i, _, from) in &steps {
            q = q.min(owned_qty(&self.owned[i as usize], from));
        }
        debug_assert!(q > 0);
        self.free[i0 as usize] -= q;
        self.add_owned(i0 as usize, v, q, c0);
        for &(to, i, ct, from) in steps.iter().rev() {
            self.sub_owned(i as usize, from, q);
            self.add_owned(i as usize, to, q, ct);
        }
        self.deficit[jt] -= q;
        q
    }

    /// Complementary slackness over every admissible arc, in exact integers.
    fn certify(&self, phi: &[i128]) -> Result<()> {
        for j in 0..self.k {
            if self.received[j] != self.demands[j] {
                return Err(Error::Uncertified(format!(
                    "demander {j} received {} of {}",
                    self.received[j], self.demands[j]
                )));
            }
            if phi[j] < 0 {
                return Err(Error::Uncertified(format!("negative price at demander {j}")));
            }
        }
        for i in 0..self.supplies.len() {
            let r = self.row_start[i]..self.row_start[i + 1];
            let mut best: Option<i128> = None;
            for at in r {
                let p = phi[self.row_dem[at] as usize] - self.row_cost[at] as i128;
                best = Some(best.map_or(p, |b: i128| b.max(p)));
            }
            let used: u64 = self.owned[i].iter().map(|e| e.1).sum();
            if used + self.free[i] != self.supplies[i] {
                return Err(Error::Uncertified(format!("supplier {i} mass leak")));
            }
            for &(j, _, c) in &self.owned[i] {
                let p = phi[j as usize] - c as i128;
                if p < 0 || Some(p) != best {
                    return Err(Error::Uncertified(format!(
                        "used arc {i}->{j} is not a best arc"
                    )));
                }
            }
            if self.free[i] > 0 {
                if let Some(b) = best {
                    if !self.owned[i].is_empty() && b != 0 {
                        return Err(Error::Uncertified(format!(
                            "supplier {i} split between free and paid at price {b}"
                        )));
                    }
                    if b > 0 && self.owned[i].is_empty() {
                        return Err(Error::Uncertified(format!(
                            "supplier {i} idle despite positive profit {b}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn run(mut self) -> Result<FlowSolution> {
        let mut remaining: u64 = self.deficit.iter().sum();
        let budget = 2 * remaining + 1_000;
        while remaining > 0 {
            self.phases += 1;
            if self.phases > budget {
                return Err(Error::NoConvergence("flow phase budget exceeded".into()));
            }
            let jt = self.phase()?;
            remaining -= self.augment(jt);
        }
        let phi: Vec<i128> = self.pi.iter().map(|&p| p - self.pi_s).collect();
        self.certify(&phi)?;
        let mut assignments = Vec::new();
        let mut cost: i128 = 0;
        for (i, row) in self.owned.iter().enumerate() {
            for &(j, q, c) in row {
                assignments.push((i as u32, j, q));
                cost += q as i128 * c as i128;
            }
        }
        assignments.sort_unstable();
        let max_phi = phi.iter().copied().max().unwrap_or(0);
        Ok(FlowSolution { assignments, cost, phi, max_phi, phases: self.phases })
    }
}

/// Solve the instance to optimality or report infeasibility; `Ok` implies the
/// certificate passed.
pub fn solve_flow(problem: FlowProblem) -> Result<FlowSolution> {
    Engine::new(problem)?.run()
}
