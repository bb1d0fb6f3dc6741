//! Phase scheduling: layers wider than the hardware's slot capacity are
//! covered by repeatedly solving the assignment problem on the neurons still
//! waiting, each solution becoming one phase. Fan-out budgets reset per
//! phase; once a phase's neurons have been processed, their capacitors are
//! reassigned to the next phase's neurons.

use serde::{Deserialize, Serialize};

use super::{exact, greedy, MapError, MappingInstance, PhaseSchedule};

/// Which solver backs each phase solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Exact,
    Greedy,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverKind::Exact => write!(f, "exact"),
            SolverKind::Greedy => write!(f, "greedy"),
        }
    }
}

/// Partition all destination neurons into phases.
///
/// Errors when some neuron is unassignable in isolation, i.e. one of its
/// sources carries a fan-out limit of zero; no sequence of phases can ever
/// place such a neuron.
pub fn schedule_phases(
    inst: &MappingInstance,
    solver: SolverKind,
) -> Result<PhaseSchedule, MapError> {
    schedule_phases_with_cap(inst, solver, exact::DEFAULT_VAR_CAP)
}

pub fn schedule_phases_with_cap(
    inst: &MappingInstance,
    solver: SolverKind,
    cap: usize,
) -> Result<PhaseSchedule, MapError> {
    for (source, dests) in inst.conn.iter().enumerate() {
        if inst.fanout[source] == 0 {
            if let Some(&neuron) = dests.first() {
                return Err(MapError::Unassignable { neuron, source_neuron: source });
            }
        }
    }
    if solver == SolverKind::Exact {
        let vars = inst.dests * inst.slot_count();
        if vars > cap {
            return Err(MapError::TooLarge { vars, cap });
        }
    }

    let mut remaining: Vec<usize> = (0..inst.dests).collect();
    let mut phases = Vec::new();
    while !remaining.is_empty() {
        let assignment = match solver {
            SolverKind::Exact => exact::solve_subset(inst, &remaining),
            SolverKind::Greedy => greedy::solve_subset(inst, &remaining),
        };
        assert!(
            !assignment.triples.is_empty(),
            "phase solve made no progress on {} neurons",
            remaining.len()
        );
        let placed: Vec<usize> = assignment.triples.iter().map(|&(n, _, _)| n).collect();
        remaining.retain(|n| !placed.contains(n));
        phases.push(assignment);
    }
    Ok(PhaseSchedule { phases })
}
