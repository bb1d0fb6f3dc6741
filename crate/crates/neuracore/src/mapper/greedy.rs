//! Greedy assignment heuristic: feasible and deterministic, used when an
//! instance is past the exact solver's size cap (and as a cross-check that
//! the exact optimum is never beaten).

use super::{Assignment, MappingInstance};

/// Place neurons in descending connection-degree order (ties by index) into
/// the least-loaded engine with a free capacitor, skipping any neuron whose
/// sources have exhausted their fan-out budgets.
pub fn solve_greedy(inst: &MappingInstance) -> Assignment {
    let active: Vec<usize> = (0..inst.dests).collect();
    solve_subset(inst, &active)
}

/// Greedy placement over a restricted destination subset (per-timestep
/// activity mode).
pub fn solve_greedy_on(inst: &MappingInstance, active: &[usize]) -> Assignment {
    solve_subset(inst, active)
}

pub(super) fn solve_subset(inst: &MappingInstance, active: &[usize]) -> Assignment {
    let sources_of = inst.sources_of();

    let mut order = active.to_vec();
    order.sort_by_key(|&neuron| (std::cmp::Reverse(sources_of[neuron].len()), neuron));

    let mut budget = inst.fanout.clone();
    let mut engine_load = vec![0usize; inst.engines];
    let mut next_free_cap = vec![0usize; inst.engines];
    let mut triples = Vec::new();

    for &neuron in &order {
        if !sources_of[neuron].iter().all(|&s| budget[s] > 0) {
            continue;
        }
        // Least-loaded engine that still has a free capacitor; ties resolve
        // to the lowest engine index.
        let engine = (0..inst.engines)
            .filter(|&j| engine_load[j] < inst.capacitors)
            .min_by_key(|&j| (engine_load[j], j));
        let Some(engine) = engine else { continue };

        let capacitor = next_free_cap[engine];
        next_free_cap[engine] += 1;
        engine_load[engine] += 1;
        for &s in &sources_of[neuron] {
            budget[s] -= 1;
        }
        triples.push((neuron, engine, capacitor));
    }

    triples.sort_unstable();
    Assignment { unassigned: active.len() - triples.len(), triples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::{solve_exact, testutil::random_instance, validate};
    use crate::rng::Rng;

    #[test]
    fn capacity_only_instances_assign_everything() {
        let mut rng = Rng::new(200);
        for _ in 0..30 {
            let mut inst = random_instance(&mut rng, 6, 6, 3, 3, false);
            while inst.slot_count() < inst.dests {
                inst.capacitors += 1;
            }
            let greedy = solve_greedy(&inst);
            assert_eq!(greedy.unassigned, 0);
            assert!(validate(&greedy, &inst).is_empty());
        }
    }

    #[test]
    fn feasible_and_never_beats_exact() {
        let mut rng = Rng::new(201);
        for _ in 0..100 {
            let inst = random_instance(&mut rng, 8, 8, 2, 4, true);
            let greedy = solve_greedy(&inst);
            assert!(validate(&greedy, &inst).is_empty());
            let exact = solve_exact(&inst).unwrap();
            assert!(greedy.unassigned >= exact.unassigned);
        }
    }

    #[test]
    fn fanout_limited_result_is_feasible() {
        let inst = MappingInstance {
            dests: 4,
            sources: 1,
            engines: 2,
            capacitors: 2,
            conn: vec![vec![0, 1, 2, 3]],
            fanout: vec![2],
        };
        let greedy = solve_greedy(&inst);
        assert!(validate(&greedy, &inst).is_empty());
        assert!(greedy.unassigned >= 2);
    }

    #[test]
    fn empty_instance() {
        let inst = MappingInstance {
            dests: 0,
            sources: 0,
            engines: 1,
            capacitors: 1,
            conn: vec![],
            fanout: vec![],
        };
        let greedy = solve_greedy(&inst);
        assert!(greedy.triples.is_empty());
        assert_eq!(greedy.unassigned, 0);
    }
}
