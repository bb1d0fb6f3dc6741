//! Placement of destination-layer neurons onto (neuron engine, capacitor)
//! slots.
//!
//! Each layer poses an assignment problem: maximize the number of neurons
//! given a slot, subject to one slot per neuron, one neuron per slot, engine
//! capacity, and per-source fan-out limits. The exact solver is a
//! deterministic branch-and-bound; a greedy fallback covers instances past
//! the exact solver's size cap, and an exhaustive oracle pins both down on
//! small instances. Layers that exceed hardware capacity are covered by a
//! sequence of phases, each one solution's worth of assignments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::QuantizedLayer;

mod exact;
mod greedy;
mod oracle;
mod phases;

pub use exact::{solve_exact, solve_exact_on, solve_exact_with_cap, DEFAULT_VAR_CAP};
pub use greedy::{solve_greedy, solve_greedy_on};
pub use oracle::brute_force_oracle;
pub use phases::{schedule_phases, schedule_phases_with_cap, SolverKind};

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error(
        "instance has {vars} decision variables, above the exact-solver cap {cap}; \
         use the greedy solver"
    )]
    TooLarge { vars: usize, cap: usize },
    #[error("instance too large for exhaustive oracle (dests={dests}, slots={slots})")]
    OracleBound { dests: usize, slots: usize },
    #[error(
        "neuron {neuron} can never be assigned: source {source_neuron} has fan-out limit 0"
    )]
    Unassignable { neuron: usize, source_neuron: usize },
    #[error("malformed dump at line {line}: {msg}")]
    DumpFormat { line: usize, msg: String },
}

/// Engine-side shape of one core, as seen by the mapper.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Neuron engines per core.
    pub engines: usize,
    /// Capacitor slots (virtual neurons) per engine.
    pub capacitors: usize,
    /// Uniform per-source fan-out limit; `None` leaves fan-out unconstrained.
    pub fanout_limit: Option<usize>,
}

/// One layer's assignment problem.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingInstance {
    /// Destination-layer neuron count.
    pub dests: usize,
    /// Source-layer neuron count.
    pub sources: usize,
    /// Neuron engines available.
    pub engines: usize,
    /// Capacitor slots per engine.
    pub capacitors: usize,
    /// Per source neuron: sorted destination neurons it connects to
    /// (post-pruning).
    pub conn: Vec<Vec<usize>>,
    /// Per source neuron: maximum connected destinations that may be
    /// assigned within one phase.
    pub fanout: Vec<usize>,
}

impl MappingInstance {
    pub fn slot_count(&self) -> usize {
        self.engines * self.capacitors
    }

    /// Sources connecting into each destination neuron.
    pub fn sources_of(&self) -> Vec<Vec<usize>> {
        let mut rev = vec![Vec::new(); self.dests];
        for (source, dests) in self.conn.iter().enumerate() {
            for &d in dests {
                rev[d].push(source);
            }
        }
        rev
    }

    /// True when no fan-out limit can ever bind (every source's limit covers
    /// its whole connection set).
    pub fn fanout_inactive(&self) -> bool {
        self.conn.iter().zip(&self.fanout).all(|(dests, &limit)| limit >= dests.len())
    }
}

/// A solved (or partially solved) placement: `(neuron, engine, capacitor)`
/// triples sorted lexicographically, plus the count of neurons the solve
/// left unassigned.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub triples: Vec<(usize, usize, usize)>,
    pub unassigned: usize,
}

impl Assignment {
    /// Slot lookup table: `slot_of[neuron] = Some((engine, capacitor))`.
    pub fn slot_map(&self, dests: usize) -> Vec<Option<(usize, usize)>> {
        let mut map = vec![None; dests];
        for &(neuron, engine, capacitor) in &self.triples {
            map[neuron] = Some((engine, capacitor));
        }
        map
    }
}

/// Ordered phases whose assigned-neuron sets partition the destination
/// layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    pub phases: Vec<Assignment>,
}

impl PhaseSchedule {
    /// Phase index of each destination neuron.
    pub fn phase_of(&self, dests: usize) -> Vec<Option<usize>> {
        let mut map = vec![None; dests];
        for (p, phase) in self.phases.iter().enumerate() {
            for &(neuron, _, _) in &phase.triples {
                map[neuron] = Some(p);
            }
        }
        map
    }
}

/// Destination neurons receiving at least one event from the given active
/// sources, sorted ascending. Feeding this into `solve_exact_on` /
/// `solve_greedy_on` gives the per-timestep mapping mode, where each
/// timestep only places the neurons its spike activity actually touches.
pub fn active_destinations(inst: &MappingInstance, active_sources: &[bool]) -> Vec<usize> {
    let mut touched = vec![false; inst.dests];
    for (source, dests) in inst.conn.iter().enumerate() {
        if active_sources[source] {
            for &d in dests {
                touched[d] = true;
            }
        }
    }
    touched
        .iter()
        .enumerate()
        .filter_map(|(d, &hit)| hit.then_some(d))
        .collect()
}

/// Build the assignment problem for one quantized layer: a connection
/// survives wherever its quantized weight is nonzero.
pub fn build_instance(layer: &QuantizedLayer, hw: &EngineConfig) -> MappingInstance {
    let mut conn = vec![Vec::new(); layer.cols];
    for (source, dests) in conn.iter_mut().enumerate() {
        for dest in 0..layer.rows {
            if layer.qweight(dest, source) != 0 {
                dests.push(dest);
            }
        }
    }
    let fanout = vec![hw.fanout_limit.unwrap_or(layer.rows); layer.cols];
    MappingInstance {
        dests: layer.rows,
        sources: layer.cols,
        engines: hw.engines,
        capacitors: hw.capacitors,
        conn,
        fanout,
    }
}

/// A single constraint violation, naming the constraint and the indices
/// involved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Engine capacity: more neurons on an engine than it has capacitors.
    EngineCapacity { engine: usize, assigned: usize, limit: usize },
    /// Unique assignment: a neuron holds more than one slot.
    DuplicateNeuron { neuron: usize },
    /// Slot exclusivity: two neurons share a capacitor.
    SlotConflict { engine: usize, capacitor: usize },
    /// Fan-out: a source drives more assigned destinations than allowed.
    FanoutExceeded { source: usize, used: usize, limit: usize },
    /// Triple indices outside the instance shape.
    OutOfRange { neuron: usize, engine: usize, capacitor: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EngineCapacity { engine, assigned, limit } => write!(
                f,
                "engine capacity: engine {engine} holds {assigned} neurons, limit {limit}"
            ),
            Violation::DuplicateNeuron { neuron } => {
                write!(f, "unique assignment: neuron {neuron} assigned more than once")
            }
            Violation::SlotConflict { engine, capacitor } => write!(
                f,
                "slot exclusivity: capacitor ({engine}, {capacitor}) assigned twice"
            ),
            Violation::FanoutExceeded { source, used, limit } => write!(
                f,
                "fan-out: source {source} drives {used} assigned destinations, limit {limit}"
            ),
            Violation::OutOfRange { neuron, engine, capacitor } => write!(
                f,
                "index out of range: triple ({neuron}, {engine}, {capacitor})"
            ),
        }
    }
}

/// Check an assignment against every constraint of the instance. Empty
/// result means feasible.
pub fn validate(assignment: &Assignment, inst: &MappingInstance) -> Vec<Violation> {
    let mut violations = Vec::new();

    let mut in_range = Vec::new();
    for &(neuron, engine, capacitor) in &assignment.triples {
        if neuron >= inst.dests || engine >= inst.engines || capacitor >= inst.capacitors {
            violations.push(Violation::OutOfRange { neuron, engine, capacitor });
        } else {
            in_range.push((neuron, engine, capacitor));
        }
    }

    let mut per_engine = vec![0usize; inst.engines];
    let mut per_neuron = vec![0usize; inst.dests];
    let mut per_slot = vec![0usize; inst.engines * inst.capacitors];
    for &(neuron, engine, capacitor) in &in_range {
        per_engine[engine] += 1;
        per_neuron[neuron] += 1;
        per_slot[engine * inst.capacitors + capacitor] += 1;
    }

    for (engine, &assigned) in per_engine.iter().enumerate() {
        if assigned > inst.capacitors {
            violations.push(Violation::EngineCapacity {
                engine,
                assigned,
                limit: inst.capacitors,
            });
        }
    }
    for (neuron, &count) in per_neuron.iter().enumerate() {
        if count > 1 {
            violations.push(Violation::DuplicateNeuron { neuron });
        }
    }
    for (slot, &count) in per_slot.iter().enumerate() {
        if count > 1 {
            violations.push(Violation::SlotConflict {
                engine: slot / inst.capacitors,
                capacitor: slot % inst.capacitors,
            });
        }
    }

    let assigned: Vec<bool> = {
        let mut a = vec![false; inst.dests];
        for &(neuron, _, _) in &in_range {
            a[neuron] = true;
        }
        a
    };
    for (source, dests) in inst.conn.iter().enumerate() {
        let used = dests.iter().filter(|&&d| assigned[d]).count();
        if used > inst.fanout[source] {
            violations.push(Violation::FanoutExceeded {
                source,
                used,
                limit: inst.fanout[source],
            });
        }
    }

    violations
}

// ---------------------------------------------------------------------------
// Dump format (golden-file friendly)
// ---------------------------------------------------------------------------

pub fn dump_instance(inst: &MappingInstance) -> String {
    let mut out = format!(
        "instance dests={} sources={} engines={} capacitors={}\n",
        inst.dests, inst.sources, inst.engines, inst.capacitors
    );
    let fanout: Vec<String> = inst.fanout.iter().map(|f| f.to_string()).collect();
    out.push_str(&format!("fanout {}\n", fanout.join(" ")));
    for (source, dests) in inst.conn.iter().enumerate() {
        let list: Vec<String> = dests.iter().map(|d| d.to_string()).collect();
        out.push_str(&format!("conn {source}: {}\n", list.join(" ")));
    }
    out
}

pub fn dump_assignment(assignment: &Assignment) -> String {
    let mut out = format!("assignment unassigned={}\n", assignment.unassigned);
    for &(neuron, engine, capacitor) in &assignment.triples {
        out.push_str(&format!("triple {neuron} {engine} {capacitor}\n"));
    }
    out
}

fn dump_err(line: usize, msg: impl Into<String>) -> MapError {
    MapError::DumpFormat { line, msg: msg.into() }
}

fn parse_kv(token: &str, key: &str, line: usize) -> Result<usize, MapError> {
    let value = token
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| dump_err(line, format!("expected {key}=<n>, got {token:?}")))?;
    value.parse().map_err(|_| dump_err(line, format!("bad number in {token:?}")))
}

pub fn parse_instance(text: &str) -> Result<MappingInstance, MapError> {
    let mut lines = text.lines().enumerate();
    let (n, header) = lines.next().ok_or_else(|| dump_err(1, "empty dump"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "instance" {
        return Err(dump_err(n + 1, "expected instance header"));
    }
    let dests = parse_kv(fields[1], "dests", n + 1)?;
    let sources = parse_kv(fields[2], "sources", n + 1)?;
    let engines = parse_kv(fields[3], "engines", n + 1)?;
    let capacitors = parse_kv(fields[4], "capacitors", n + 1)?;

    let (n, fanout_line) = lines.next().ok_or_else(|| dump_err(2, "missing fanout line"))?;
    let fanout: Vec<usize> = fanout_line
        .strip_prefix("fanout")
        .ok_or_else(|| dump_err(n + 1, "expected fanout line"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| dump_err(n + 1, format!("bad fanout {t:?}"))))
        .collect::<Result<_, _>>()?;
    if fanout.len() != sources {
        return Err(dump_err(n + 1, "fanout count differs from sources"));
    }

    let mut conn = vec![Vec::new(); sources];
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let rest = line
            .strip_prefix("conn ")
            .ok_or_else(|| dump_err(n + 1, "expected conn line"))?;
        let (source_text, dest_text) = rest
            .split_once(':')
            .ok_or_else(|| dump_err(n + 1, "missing ':' in conn line"))?;
        let source: usize = source_text
            .trim()
            .parse()
            .map_err(|_| dump_err(n + 1, "bad source index"))?;
        if source >= sources {
            return Err(dump_err(n + 1, "source index out of range"));
        }
        conn[source] = dest_text
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| dump_err(n + 1, format!("bad dest {t:?}"))))
            .collect::<Result<_, _>>()?;
    }

    Ok(MappingInstance { dests, sources, engines, capacitors, conn, fanout })
}

pub fn parse_assignment(text: &str) -> Result<Assignment, MapError> {
    let mut lines = text.lines().enumerate();
    let (n, header) = lines.next().ok_or_else(|| dump_err(1, "empty dump"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 2 || fields[0] != "assignment" {
        return Err(dump_err(n + 1, "expected assignment header"));
    }
    let unassigned = parse_kv(fields[1], "unassigned", n + 1)?;
    let mut triples = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "triple" {
            return Err(dump_err(n + 1, "expected triple line"));
        }
        let mut values = [0usize; 3];
        for (slot, token) in values.iter_mut().zip(&parts[1..]) {
            *slot = token.parse().map_err(|_| dump_err(n + 1, "bad triple index"))?;
        }
        triples.push((values[0], values[1], values[2]));
    }
    Ok(Assignment { triples, unassigned })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog::LifParams;
    use crate::model::{quantize_symmetric, LayerSpec};

    fn qlayer(rows: usize, cols: usize, weights: Vec<f64>) -> QuantizedLayer {
        let lif = LifParams { vth: 1.0, vreset: 0.0, leak_lambda: 1.0 };
        quantize_symmetric(&LayerSpec::new(rows, cols, weights, lif))
    }

    #[test]
    fn instance_from_dense_layer() {
        let layer = qlayer(3, 2, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let hw = EngineConfig { engines: 2, capacitors: 2, fanout_limit: None };
        let inst = build_instance(&layer, &hw);
        assert_eq!(inst.conn, vec![vec![0, 1, 2], vec![0, 1, 2]]);
        assert_eq!(inst.fanout, vec![3, 3]);
    }

    #[test]
    fn fully_pruned_column_has_empty_connection_set() {
        let layer = qlayer(2, 2, vec![1.0, 0.0, 1.0, 0.0]);
        let hw = EngineConfig { engines: 1, capacitors: 2, fanout_limit: None };
        let inst = build_instance(&layer, &hw);
        assert_eq!(inst.conn[1], Vec::<usize>::new());
        assert_eq!(inst.conn[0], vec![0, 1]);
    }

    #[test]
    fn connection_sets_match_column_nonzeros() {
        let mut rng = crate::rng::Rng::new(4);
        let weights: Vec<f64> =
            (0..64).map(|_| if rng.chance(0.5) { rng.range_f64(-1.0, 1.0) } else { 0.0 }).collect();
        let layer = qlayer(8, 8, weights);
        let hw = EngineConfig { engines: 2, capacitors: 4, fanout_limit: None };
        let inst = build_instance(&layer, &hw);
        for source in 0..8 {
            let nonzeros =
                (0..8).filter(|&dest| layer.qweight(dest, source) != 0).count();
            assert_eq!(inst.conn[source].len(), nonzeros);
        }
    }

    #[test]
    fn validate_flags_capacity_violation() {
        let inst = MappingInstance {
            dests: 4,
            sources: 1,
            engines: 2,
            capacitors: 2,
            conn: vec![vec![0, 1, 2, 3]],
            fanout: vec![4],
        };
        // Three neurons on engine 0 with only two capacitors; one slot is
        // necessarily reused, so both violations surface.
        let bad = Assignment {
            triples: vec![(0, 0, 0), (1, 0, 1), (2, 0, 1)],
            unassigned: 1,
        };
        let violations = validate(&bad, &inst);
        assert!(violations
            .contains(&Violation::EngineCapacity { engine: 0, assigned: 3, limit: 2 }));
        assert!(violations.contains(&Violation::SlotConflict { engine: 0, capacitor: 1 }));
    }

    #[test]
    fn validate_flags_duplicate_neuron() {
        let inst = MappingInstance {
            dests: 3,
            sources: 1,
            engines: 2,
            capacitors: 2,
            conn: vec![vec![0, 1, 2]],
            fanout: vec![3],
        };
        let bad = Assignment { triples: vec![(2, 0, 0), (2, 1, 0)], unassigned: 1 };
        let violations = validate(&bad, &inst);
        assert!(violations.contains(&Violation::DuplicateNeuron { neuron: 2 }));
    }

    #[test]
    fn validate_flags_fanout_violation() {
        let inst = MappingInstance {
            dests: 3,
            sources: 1,
            engines: 2,
            capacitors: 2,
            conn: vec![vec![0, 1, 2]],
            fanout: vec![1],
        };
        let bad = Assignment { triples: vec![(0, 0, 0), (1, 0, 1)], unassigned: 1 };
        let violations = validate(&bad, &inst);
        assert_eq!(
            violations,
            vec![Violation::FanoutExceeded { source: 0, used: 2, limit: 1 }]
        );
    }

    #[test]
    fn active_destinations_follow_event_sources() {
        let inst = MappingInstance {
            dests: 5,
            sources: 3,
            engines: 2,
            capacitors: 2,
            conn: vec![vec![0, 2], vec![2, 4], vec![1]],
            fanout: vec![5, 5, 5],
        };
        assert_eq!(active_destinations(&inst, &[true, false, false]), vec![0, 2]);
        assert_eq!(active_destinations(&inst, &[true, true, false]), vec![0, 2, 4]);
        assert_eq!(active_destinations(&inst, &[false, false, false]), Vec::<usize>::new());

        // Restricting the solve to the active set places only (and all of)
        // those neurons when capacity allows.
        let active = active_destinations(&inst, &[true, true, false]);
        let solution = solve_exact_on(&inst, &active).unwrap();
        assert_eq!(solution.unassigned, 0);
        let placed: Vec<usize> = solution.triples.iter().map(|&(n, _, _)| n).collect();
        assert_eq!(placed, active);
        assert!(validate(&solution, &inst).is_empty());

        let greedy = solve_greedy_on(&inst, &active);
        assert!(validate(&greedy, &inst).is_empty());
        assert_eq!(greedy.unassigned, 0);
    }

    #[test]
    fn dump_round_trip_and_golden() {
        let inst = MappingInstance {
            dests: 4,
            sources: 3,
            engines: 2,
            capacitors: 2,
            conn: vec![vec![0, 1, 2], vec![], vec![1, 3]],
            fanout: vec![4, 4, 1],
        };
        let dump = dump_instance(&inst);
        assert_eq!(
            dump,
            "instance dests=4 sources=3 engines=2 capacitors=2\n\
             fanout 4 4 1\n\
             conn 0: 0 1 2\n\
             conn 1: \n\
             conn 2: 1 3\n"
        );
        assert_eq!(parse_instance(&dump).unwrap(), inst);

        let assignment = Assignment { triples: vec![(0, 0, 0), (3, 1, 0)], unassigned: 2 };
        let dump = dump_assignment(&assignment);
        assert_eq!(dump, "assignment unassigned=2\ntriple 0 0 0\ntriple 3 1 0\n");
        assert_eq!(parse_assignment(&dump).unwrap(), assignment);
    }
}
