//! Exact assignment solver.
//!
//! Capacitor slots are interchangeable: slot exclusivity already implies the
//! per-engine capacity bound, and the fan-out limits only care about *which*
//! neurons are assigned, not where. The search therefore branches on
//! assign/skip per neuron in index order and fills slots afterwards in
//! `(engine, capacitor)` order, which also makes the returned optimum the
//! lexicographically smallest triple set: assign-first depth-first order
//! visits candidate solutions exactly in triple-set order, and the bound
//! only prunes subtrees that cannot strictly improve.

use super::{Assignment, MapError, MappingInstance};

/// Default cap on `dests * engines * capacitors` before the exact solver
/// refuses the instance.
pub const DEFAULT_VAR_CAP: usize = 1_000_000;

/// Solve to optimality with the default size cap.
pub fn solve_exact(inst: &MappingInstance) -> Result<Assignment, MapError> {
    solve_exact_with_cap(inst, DEFAULT_VAR_CAP)
}

/// Solve to optimality, refusing instances with more than `cap` decision
/// variables.
pub fn solve_exact_with_cap(inst: &MappingInstance, cap: usize) -> Result<Assignment, MapError> {
    let vars = inst.dests * inst.slot_count();
    if vars > cap {
        return Err(MapError::TooLarge { vars, cap });
    }
    let active: Vec<usize> = (0..inst.dests).collect();
    Ok(solve_subset(inst, &active))
}

/// Solve to optimality over a restricted destination subset (sorted,
/// deduplicated original ids). This is the per-timestep activity mode: the
/// caller narrows the instance to neurons that actually receive events.
pub fn solve_exact_on(inst: &MappingInstance, active: &[usize]) -> Result<Assignment, MapError> {
    let vars = active.len() * inst.slot_count();
    if vars > DEFAULT_VAR_CAP {
        return Err(MapError::TooLarge { vars, cap: DEFAULT_VAR_CAP });
    }
    debug_assert!(active.windows(2).all(|w| w[0] < w[1]), "subset must be sorted unique");
    Ok(solve_subset(inst, active))
}

/// Branch-and-bound over the given (sorted) subset of destination neurons.
/// Triples come back with original neuron ids.
pub(super) fn solve_subset(inst: &MappingInstance, active: &[usize]) -> Assignment {
    let sources_of = inst.sources_of();
    let fanout_inactive = inst.fanout_inactive();

    let mut search = Search {
        active,
        sources_of: &sources_of,
        fanout_inactive,
        budget: inst.fanout.clone(),
        free_slots: inst.slot_count(),
        chosen: Vec::with_capacity(active.len().min(inst.slot_count())),
        best: Vec::new(),
        have_best: false,
    };
    search.dfs(0);

    let assigned = std::mem::take(&mut search.best);
    let triples = fill_slots(&assigned, inst.capacitors);
    Assignment { unassigned: active.len() - assigned.len(), triples }
}

/// Deterministic slot fill: the k-th assigned neuron (ascending) takes the
/// k-th slot in `(engine, capacitor)` order.
fn fill_slots(assigned: &[usize], capacitors: usize) -> Vec<(usize, usize, usize)> {
    assigned
        .iter()
        .enumerate()
        .map(|(slot, &neuron)| (neuron, slot / capacitors, slot % capacitors))
        .collect()
}

struct Search<'a> {
    active: &'a [usize],
    sources_of: &'a [Vec<usize>],
    fanout_inactive: bool,
    budget: Vec<usize>,
    free_slots: usize,
    chosen: Vec<usize>,
    best: Vec<usize>,
    have_best: bool,
}

impl Search<'_> {
    /// Admissible upper bound on how many of the neurons from `index` on can
    /// still be assigned: free slots, and (when fan-out can bind) the count
    /// of suffix neurons none of whose sources are already exhausted.
    fn potential(&self, index: usize) -> usize {
        let remaining = self.active.len() - index;
        if self.fanout_inactive {
            return self.free_slots.min(remaining);
        }
        let unblocked = self.active[index..]
            .iter()
            .filter(|&&neuron| {
                self.sources_of[neuron].iter().all(|&s| self.budget[s] > 0)
            })
            .count();
        self.free_slots.min(unblocked)
    }

    fn dfs(&mut self, index: usize) {
        let best_count = if self.have_best { self.best.len() } else { usize::MAX };
        let reachable = self.chosen.len() + self.potential(index);
        if self.have_best && reachable <= best_count {
            return;
        }
        if index == self.active.len() {
            if !self.have_best || self.chosen.len() > self.best.len() {
                self.best = self.chosen.clone();
                self.have_best = true;
            }
            return;
        }

        let neuron = self.active[index];
        let assignable = self.free_slots > 0
            && self.sources_of[neuron].iter().all(|&s| self.budget[s] > 0);
        if assignable {
            for &s in &self.sources_of[neuron] {
                self.budget[s] -= 1;
            }
            self.free_slots -= 1;
            self.chosen.push(neuron);
            self.dfs(index + 1);
            self.chosen.pop();
            self.free_slots += 1;
            for &s in &self.sources_of[neuron] {
                self.budget[s] += 1;
            }
        }
        self.dfs(index + 1);
    }
}
