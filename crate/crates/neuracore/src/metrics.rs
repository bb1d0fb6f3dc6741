//! Trace post-processing: operation counts, energy estimates, TOPS/W, and
//! per-timestep assignment-memory utilization series.
//!
//! The operations convention is fixed here because "OPS" is otherwise
//! ambiguous: every engine-selected row slot costs 2 ops (multiply and
//! accumulate) and every barrier visit of an occupied virtual neuron costs
//! 2 ops (leak and fire check). Neuron fire energy comes from measured
//! constants; controller, SRAM, and ladder energies are not published for
//! this hardware, default to zero, and are exposed as configuration.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::TraceLog;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty run: no clocks recorded, wall time undefined")]
    EmptyRun,
}

/// Energy and timing constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyModel {
    /// Neuron-engine power while firing, watts.
    pub neuron_power_w: f64,
    /// Neuron-engine fire delay, seconds.
    pub neuron_delay_s: f64,
    /// System clock, hertz.
    pub clock_hz: f64,
    /// Per assignment-table read, joules. Unpublished; default 0.
    pub sram_read_j: f64,
    /// Whole-chip controller energy per clock, joules. Unpublished;
    /// default 0.
    pub controller_j_per_clock: f64,
    /// Per ladder multiply-accumulate, joules. Unpublished; default 0.
    pub c2c_j_per_op: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            neuron_power_w: 97e-9,
            neuron_delay_s: 6.72e-9,
            clock_hz: 103.2e6,
            sram_read_j: 0.0,
            controller_j_per_clock: 0.0,
            c2c_j_per_op: 0.0,
        }
    }
}

/// Energy split by mechanism, joules.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub fires_j: f64,
    pub controller_j: f64,
    pub sram_j: f64,
    pub c2c_j: f64,
    pub total_j: f64,
}

/// Total operation count under the fixed 2-ops-per-MAC, 2-ops-per-barrier
/// convention.
pub fn count_ops(trace: &TraceLog) -> u64 {
    2 * trace.total_c2c_ops() + 2 * trace.total_barrier_neurons()
}

/// Energy for a run: fire count times the per-fire energy, plus the
/// configured per-clock, per-read, and per-op terms.
pub fn compute_energy(trace: &TraceLog, em: &EnergyModel) -> EnergyBreakdown {
    let fires_j = trace.total_fires() as f64 * (em.neuron_power_w * em.neuron_delay_s);
    let controller_j = trace.total_clocks as f64 * em.controller_j_per_clock;
    let sram_j = trace.total_rows() as f64 * em.sram_read_j;
    let c2c_j = trace.total_c2c_ops() as f64 * em.c2c_j_per_op;
    EnergyBreakdown {
        fires_j,
        controller_j,
        sram_j,
        c2c_j,
        total_j: fires_j + controller_j + sram_j + c2c_j,
    }
}

/// One utilization sample: fraction of a core's populated assignment rows
/// dispatched during one timestep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilPoint {
    pub core: usize,
    pub timestep: usize,
    pub utilization: f64,
}

/// Per-(core, timestep) utilization. `populated_depths[core]` is the
/// populated assignment-table depth; a core with nothing populated reads as
/// zero utilization.
pub fn utilization_series(trace: &TraceLog, populated_depths: &[usize]) -> Vec<UtilPoint> {
    trace
        .steps
        .iter()
        .map(|s| {
            let depth = populated_depths[s.core];
            let utilization = if depth == 0 { 0.0 } else { s.rows as f64 / depth as f64 };
            UtilPoint { core: s.core, timestep: s.timestep, utilization }
        })
        .collect()
}

/// Summary of one simulation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub total_ops: u64,
    pub total_clocks: u64,
    pub total_fires: u64,
    pub wall_time_s: f64,
    pub energy: EnergyBreakdown,
    pub avg_power_w: f64,
    pub tops_per_watt: f64,
    pub util_series: Vec<UtilPoint>,
}

/// Compose ops, energy, and utilization into a report.
///
/// `tops_per_watt` is ops-per-second over average power; with zero
/// configured energy it is infinite and reported as such rather than
/// faked.
pub fn build_report(
    trace: &TraceLog,
    em: &EnergyModel,
    populated_depths: &[usize],
) -> Result<RunReport, MetricsError> {
    if trace.total_clocks == 0 {
        return Err(MetricsError::EmptyRun);
    }
    let total_ops = count_ops(trace);
    let energy = compute_energy(trace, em);
    let wall_time_s = trace.total_clocks as f64 / em.clock_hz;
    let avg_power_w = energy.total_j / wall_time_s;
    let ops_per_second = total_ops as f64 / wall_time_s;
    let tops_per_watt = ops_per_second / avg_power_w / 1e12;
    Ok(RunReport {
        total_ops,
        total_clocks: trace.total_clocks,
        total_fires: trace.total_fires(),
        wall_time_s,
        energy,
        avg_power_w,
        tops_per_watt,
        util_series: utilization_series(trace, populated_depths),
    })
}

/// CSV export of the utilization series.
pub fn utilization_csv(series: &[UtilPoint]) -> String {
    let mut out = String::from(
        "# utilization: dispatched rows / populated assignment rows, per core per timestep\n",
    );
    out.push_str("core,timestep,utilization\n");
    for p in series {
        let _ = writeln!(out, "{},{},{}", p.core, p.timestep, p.utilization);
    }
    out
}

/// Single-row CSV summary of a report.
pub fn report_csv(report: &RunReport) -> String {
    let mut out = String::from(
        "# units: ops (2/MAC, 2/barrier-neuron), clocks, fires, seconds, joules, watts, TOPS/W\n",
    );
    out.push_str(
        "total_ops,total_clocks,total_fires,wall_time_s,fires_j,controller_j,sram_j,c2c_j,total_j,avg_power_w,tops_per_watt\n",
    );
    let e = &report.energy;
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{}",
        report.total_ops,
        report.total_clocks,
        report.total_fires,
        report.wall_time_s,
        e.fires_j,
        e.controller_j,
        e.sram_j,
        e.c2c_j,
        e.total_j,
        report.avg_power_w,
        report.tops_per_watt
    );
    out
}
