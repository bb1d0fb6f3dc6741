//! Exhaustive verification oracle for the assignment problem.
//!
//! Enumerates every injective partial map from destination neurons to
//! capacitor slots, checking each constraint directly as written, and
//! reports the minimum unassigned count. Deliberately dumb so it stays an
//! independent reference for the real solvers; usable only on small
//! instances.

use super::{MapError, MappingInstance};

const MAX_DESTS: usize = 10;
const MAX_SLOTS: usize = 8;

/// Optimal objective value (minimum unassigned neurons) by brute force.
pub fn brute_force_oracle(inst: &MappingInstance) -> Result<usize, MapError> {
    if inst.dests > MAX_DESTS || inst.slot_count() > MAX_SLOTS {
        return Err(MapError::OracleBound { dests: inst.dests, slots: inst.slot_count() });
    }
    let sources_of = inst.sources_of();
    let mut state = Enumeration {
        inst,
        sources_of: &sources_of,
        slot_used: vec![false; inst.slot_count()],
        engine_count: vec![0; inst.engines],
        budget: inst.fanout.clone(),
        best_assigned: 0,
    };
    state.enumerate(0, 0);
    Ok(inst.dests - state.best_assigned)
}

struct Enumeration<'a> {
    inst: &'a MappingInstance,
    sources_of: &'a [Vec<usize>],
    slot_used: Vec<bool>,
    engine_count: Vec<usize>,
    budget: Vec<usize>,
    best_assigned: usize,
}

impl Enumeration<'_> {
    fn enumerate(&mut self, neuron: usize, assigned: usize) {
        if neuron == self.inst.dests {
            self.best_assigned = self.best_assigned.max(assigned);
            return;
        }

        // Leave this neuron unassigned.
        self.enumerate(neuron + 1, assigned);

        // Or try every slot, checking each constraint explicitly.
        for slot in 0..self.inst.slot_count() {
            if self.slot_used[slot] {
                continue;
            }
            let engine = slot / self.inst.capacitors;
            if self.engine_count[engine] + 1 > self.inst.capacitors {
                continue;
            }
            if !self.sources_of[neuron].iter().all(|&s| self.budget[s] > 0) {
                continue;
            }

            self.slot_used[slot] = true;
            self.engine_count[engine] += 1;
            for &s in &self.sources_of[neuron] {
                self.budget[s] -= 1;
            }

            self.enumerate(neuron + 1, assigned + 1);

            for &s in &self.sources_of[neuron] {
                self.budget[s] += 1;
            }
            self.engine_count[engine] -= 1;
            self.slot_used[slot] = false;
        }
    }
}
