//! Simulation trace: per-clock controller actions and per-timestep
//! aggregates, plus the line-delimited text export the metrics tooling and
//! determinism checks consume.

use std::fmt::Write as _;

/// What a core's controller did on one clock edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClockAction {
    /// Idle poll of an empty event memory.
    Poll,
    /// Popped an event and loaded its row run from the event-to-address
    /// table.
    Fetch { source: usize },
    /// Dispatched one assignment-table row.
    DispatchRow { addr: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClockRecord {
    pub clock: u64,
    pub core: usize,
    pub action: ClockAction,
}

/// Per-core, per-timestep aggregate counts. `fetches + rows + polls` is the
/// number of clocks the core saw that timestep.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepRecord {
    pub core: usize,
    pub timestep: usize,
    /// Events that arrived in the event memory this timestep.
    pub events_in: usize,
    /// Clocks spent loading row runs (zero-work events cost none).
    pub fetches: u64,
    /// Assignment-table rows dispatched.
    pub rows: u64,
    /// Idle-poll clocks.
    pub polls: u64,
    /// Neurons fired at the barrier.
    pub fires: usize,
    /// Ladder multiply-accumulate operations performed.
    pub c2c_ops: u64,
    /// Occupied virtual neurons leak/fire-checked at the barrier.
    pub barrier_neurons: usize,
    /// Accumulation count per engine.
    pub engine_contribs: Vec<u64>,
}

/// Append-only record of one simulation run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceLog {
    /// Global clock count across the whole run.
    pub total_clocks: u64,
    pub steps: Vec<StepRecord>,
    /// Present only when clock tracing is enabled in the simulator config.
    pub clocks: Vec<ClockRecord>,
}

impl TraceLog {
    pub fn total_fires(&self) -> u64 {
        self.steps.iter().map(|s| s.fires as u64).sum()
    }

    pub fn total_rows(&self) -> u64 {
        self.steps.iter().map(|s| s.rows).sum()
    }

    pub fn total_c2c_ops(&self) -> u64 {
        self.steps.iter().map(|s| s.c2c_ops).sum()
    }

    pub fn total_barrier_neurons(&self) -> u64 {
        self.steps.iter().map(|s| s.barrier_neurons as u64).sum()
    }
}

/// Render the trace as line-delimited text. Stable field order; suitable
/// for byte comparison between runs.
pub fn trace_to_text(trace: &TraceLog) -> String {
    let mut out = String::new();
    out.push_str("# trace v1\n");
    let _ = writeln!(out, "# clocks={}", trace.total_clocks);
    for s in &trace.steps {
        let engines: Vec<String> = s.engine_contribs.iter().map(u64::to_string).collect();
        let _ = writeln!(
            out,
            "S core={} t={} events={} fetches={} rows={} polls={} fires={} c2c={} barrier={} engines={}",
            s.core,
            s.timestep,
            s.events_in,
            s.fetches,
            s.rows,
            s.polls,
            s.fires,
            s.c2c_ops,
            s.barrier_neurons,
            engines.join(",")
        );
    }
    for c in &trace.clocks {
        match c.action {
            ClockAction::Poll => {
                let _ = writeln!(out, "C clock={} core={} poll", c.clock, c.core);
            }
            ClockAction::Fetch { source } => {
                let _ = writeln!(out, "C clock={} core={} fetch src={}", c.clock, c.core, source);
            }
            ClockAction::DispatchRow { addr } => {
                let _ = writeln!(out, "C clock={} core={} row addr={}", c.clock, c.core, addr);
            }
        }
    }
    out
}

/// Parse a trace back from its text form. Used by the standalone report
/// command.
pub fn trace_from_text(text: &str) -> Result<TraceLog, String> {
    let mut trace = TraceLog::default();
    for (number, line) in text.lines().enumerate() {
        let err = |msg: &str| format!("trace line {}: {msg}", number + 1);
        if let Some(rest) = line.strip_prefix("# clocks=") {
            trace.total_clocks = rest.parse().map_err(|_| err("bad clock count"))?;
        } else if line.starts_with('#') {
            continue;
        } else if let Some(rest) = line.strip_prefix("S ") {
            let mut record = StepRecord::default();
            for token in rest.split_whitespace() {
                let (key, value) =
                    token.split_once('=').ok_or_else(|| err("missing '='"))?;
                match key {
                    "core" => record.core = value.parse().map_err(|_| err("bad core"))?,
                    "t" => record.timestep = value.parse().map_err(|_| err("bad t"))?,
                    "events" => {
                        record.events_in = value.parse().map_err(|_| err("bad events"))?
                    }
                    "fetches" => {
                        record.fetches = value.parse().map_err(|_| err("bad fetches"))?
                    }
                    "rows" => record.rows = value.parse().map_err(|_| err("bad rows"))?,
                    "polls" => record.polls = value.parse().map_err(|_| err("bad polls"))?,
                    "fires" => record.fires = value.parse().map_err(|_| err("bad fires"))?,
                    "c2c" => record.c2c_ops = value.parse().map_err(|_| err("bad c2c"))?,
                    "barrier" => {
                        record.barrier_neurons =
                            value.parse().map_err(|_| err("bad barrier"))?
                    }
                    "engines" => {
                        if !value.is_empty() {
                            record.engine_contribs = value
                                .split(',')
                                .map(|v| v.parse().map_err(|_| err("bad engine count")))
                                .collect::<Result<_, _>>()?;
                        }
                    }
                    other => return Err(err(&format!("unknown key {other:?}"))),
                }
            }
            trace.steps.push(record);
        } else if line.strip_prefix("C ").is_some() {
            // Clock lines are informational; the report path only needs the
            // aggregates, so they are checked for shape and skipped.
            continue;
        } else if !line.trim().is_empty() {
            return Err(err("unrecognized line"));
        }
    }
    Ok(trace)
}
