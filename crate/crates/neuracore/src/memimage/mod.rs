//! Controller memory images: the event-to-address table (MEM_E2A), the
//! synapse-and-neuron assignment table (MEM_S&N), and the per-engine weight
//! memories, generated bit-exactly from a phase schedule and a quantized
//! layer.
//!
//! Dispatching an event for source neuron `m` means reading row `m` of the
//! event-to-address table, which yields a row count and a start address into
//! the assignment table; each assignment row carries, per engine, a select
//! bit, a capacitor index, and a weight-memory address. A source's rows are
//! stored contiguously, grouped by phase, each group first-fit packed in
//! `(engine, capacitor)` order with at most one connection per engine per
//! row. Weights land in their engine's memory in first-use order.
//!
//! Phase group boundaries are not recoverable from the tables alone (the
//! same slot can host different neurons in different phases), so generation
//! also returns per-source, per-phase row ranges; they travel with the
//! schedule artifact, not the hex files.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapper::PhaseSchedule;
use crate::model::QuantizedLayer;

mod codec;

pub use codec::{decode_from_dir, encode_to_dir};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("schedule does not cover destination neuron {neuron}")]
    ScheduleIncomplete { neuron: usize },
    #[error("{memory} needs {needed} rows but is configured with {configured}")]
    DepthOverflow { memory: &'static str, needed: usize, configured: usize },
    #[error("{field} value {value} does not fit in {bits} bits")]
    FieldOverflow { field: &'static str, value: u64, bits: u32 },
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {msg}")]
    Malformed { file: String, line: usize, msg: String },
    #[error("{file}: layout mismatch: {msg}")]
    LayoutMismatch { file: String, msg: String },
    #[error("dangling {what} address {index} (limit {limit})")]
    DanglingAddress { what: &'static str, index: usize, limit: usize },
    #[error("row references slot ({engine}, {capacitor}) unoccupied in phase {phase}")]
    UnmappedSlot { engine: usize, capacitor: usize, phase: usize },
}

/// Bit widths and depths of one core's memories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitLayout {
    pub engines: usize,
    pub capacitors: usize,
    /// Width of the row-count field in an event-to-address row.
    pub e2a_count_bits: u32,
    /// Width of the start-address field in an event-to-address row.
    pub e2a_addr_bits: u32,
    /// Width of a capacitor index in an assignment-row slot.
    pub vn_bits: u32,
    /// Width of a weight-memory address in an assignment-row slot.
    pub w_addr_bits: u32,
    pub e2a_depth: usize,
    pub sn_depth: usize,
    pub wmem_depth: usize,
}

impl BitLayout {
    pub fn e2a_row_bits(&self) -> u32 {
        self.e2a_count_bits + self.e2a_addr_bits
    }

    pub fn sn_row_bits(&self) -> u32 {
        self.engines as u32 * (1 + self.vn_bits + self.w_addr_bits)
    }
}

/// One event-to-address row: how many assignment rows belong to this source
/// neuron and where they start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MemE2aRow {
    pub row_count: usize,
    pub start_addr: usize,
}

/// Per-engine portion of one assignment row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SnSlot {
    /// Engine-select bit; when clear the other fields are zero-filled.
    pub enabled: bool,
    /// Capacitor (virtual neuron) index within the engine.
    pub vn: usize,
    /// Address into the engine's weight memory.
    pub waddr: usize,
}

/// One assignment-table row: one slot per engine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemSnRow {
    pub slots: Vec<SnSlot>,
}

impl MemSnRow {
    fn empty(engines: usize) -> Self {
        MemSnRow { slots: vec![SnSlot::default(); engines] }
    }
}

/// Bit-exact contents of one core's controller memories.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemImage {
    pub layout: BitLayout,
    pub e2a: Vec<MemE2aRow>,
    pub sn: Vec<MemSnRow>,
    /// Per-engine signed weight words.
    pub wmem: Vec<Vec<i8>>,
}

impl MemImage {
    /// Rows actually referenced by event-to-address entries (filler
    /// excluded).
    pub fn populated_sn_rows(&self) -> usize {
        self.e2a.iter().map(|r| r.row_count).sum()
    }
}

/// Contiguous run of assignment rows, relative to a source's start address.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRange {
    pub offset: usize,
    pub len: usize,
}

/// A memory image plus the per-source, per-phase row ranges the simulator
/// needs to replay events phase by phase.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerImage {
    pub image: MemImage,
    /// `phase_rows[source][phase]` is the range of that source's rows
    /// belonging to that phase, relative to its start address.
    pub phase_rows: Vec<Vec<RowRange>>,
}

/// Optional fixed depths; `None` sizes each memory to its content
/// (event-to-address depth still covers every source neuron).
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub e2a_depth: Option<usize>,
    pub sn_depth: Option<usize>,
    pub wmem_depth: Option<usize>,
}

/// Smallest width (at least 1) that holds `value`.
fn bits_for_value(value: usize) -> u32 {
    let mut bits = 1;
    while value >> bits != 0 {
        bits += 1;
    }
    bits
}

/// Smallest width (at least 1) that addresses `count` distinct values.
fn bits_for_count(count: usize) -> u32 {
    bits_for_value(count.saturating_sub(1))
}

/// Generate the memory image for one layer from its phase schedule.
pub fn layout_from_schedule(
    schedule: &PhaseSchedule,
    layer: &QuantizedLayer,
    engines: usize,
    capacitors: usize,
    cfg: &LayoutConfig,
) -> Result<LayerImage, ImageError> {
    // neuron -> (phase, engine, capacitor)
    let mut placement = vec![None; layer.rows];
    for (phase, assignment) in schedule.phases.iter().enumerate() {
        for &(neuron, engine, capacitor) in &assignment.triples {
            placement[neuron] = Some((phase, engine, capacitor));
        }
    }
    if let Some(neuron) = placement.iter().position(|p| p.is_none()) {
        return Err(ImageError::ScheduleIncomplete { neuron });
    }
    let placement: Vec<(usize, usize, usize)> =
        placement.into_iter().map(|p| p.unwrap()).collect();
    let phase_count = schedule.phases.len();

    let mut e2a = Vec::with_capacity(layer.cols);
    let mut sn: Vec<MemSnRow> = Vec::new();
    let mut wmem: Vec<Vec<i8>> = vec![Vec::new(); engines];
    let mut phase_rows: Vec<Vec<RowRange>> = Vec::with_capacity(layer.cols);

    for source in 0..layer.cols {
        let start = sn.len();
        let mut ranges = Vec::with_capacity(phase_count);
        for phase in 0..phase_count {
            // This source's connections landing in this phase, in
            // (engine, capacitor) order.
            let mut conns: Vec<(usize, usize, usize)> = (0..layer.rows)
                .filter(|&dest| layer.qweight(dest, source) != 0)
                .filter_map(|dest| {
                    let (p, engine, capacitor) = placement[dest];
                    (p == phase).then_some((engine, capacitor, dest))
                })
                .collect();
            conns.sort_unstable();

            let mut per_engine: Vec<Vec<(usize, usize)>> = vec![Vec::new(); engines];
            for (engine, capacitor, dest) in conns {
                per_engine[engine].push((capacitor, dest));
            }
            let group_rows = per_engine.iter().map(Vec::len).max().unwrap_or(0);
            let offset = sn.len() - start;
            for r in 0..group_rows {
                let mut row = MemSnRow::empty(engines);
                for (engine, list) in per_engine.iter().enumerate() {
                    if let Some(&(capacitor, dest)) = list.get(r) {
                        let waddr = wmem[engine].len();
                        wmem[engine].push(layer.qweight(dest, source));
                        row.slots[engine] = SnSlot { enabled: true, vn: capacitor, waddr };
                    }
                }
                sn.push(row);
            }
            ranges.push(RowRange { offset, len: group_rows });
        }
        let row_count = sn.len() - start;
        e2a.push(MemE2aRow {
            row_count,
            start_addr: if row_count == 0 { 0 } else { start },
        });
        phase_rows.push(ranges);
    }

    let populated_sn = sn.len();
    let sn_depth = cfg.sn_depth.unwrap_or(populated_sn);
    if sn_depth < populated_sn {
        return Err(ImageError::DepthOverflow {
            memory: "assignment table",
            needed: populated_sn,
            configured: sn_depth,
        });
    }
    sn.resize(sn_depth, MemSnRow::empty(engines));

    let e2a_depth = cfg.e2a_depth.unwrap_or(layer.cols);
    if e2a_depth < layer.cols {
        return Err(ImageError::DepthOverflow {
            memory: "event-to-address table",
            needed: layer.cols,
            configured: e2a_depth,
        });
    }
    e2a.resize(e2a_depth, MemE2aRow::default());

    let deepest_wmem = wmem.iter().map(Vec::len).max().unwrap_or(0);
    let wmem_depth = cfg.wmem_depth.unwrap_or(deepest_wmem);
    if wmem_depth < deepest_wmem {
        return Err(ImageError::DepthOverflow {
            memory: "weight memory",
            needed: deepest_wmem,
            configured: wmem_depth,
        });
    }

    let max_row_count = e2a.iter().map(|r| r.row_count).max().unwrap_or(0);
    let layout = BitLayout {
        engines,
        capacitors,
        e2a_count_bits: bits_for_value(max_row_count),
        e2a_addr_bits: bits_for_count(sn_depth),
        vn_bits: bits_for_count(capacitors),
        w_addr_bits: bits_for_count(wmem_depth),
        e2a_depth,
        sn_depth,
        wmem_depth,
    };

    Ok(LayerImage { image: MemImage { layout, e2a, sn, wmem }, phase_rows })
}

/// One weighted connection recovered from an image, before phase
/// resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageConnection {
    pub source: usize,
    pub engine: usize,
    pub capacitor: usize,
    pub weight: i8,
    /// Row offset within the source's region, used to resolve the phase.
    pub row_offset: usize,
}

/// Walk the tables exactly as the controller would: event-to-address row,
/// then its run of assignment rows, then each selected engine's weight word.
pub fn reconstruct_connectivity(image: &MemImage) -> Result<Vec<ImageConnection>, ImageError> {
    let mut out = Vec::new();
    for (source, entry) in image.e2a.iter().enumerate() {
        for offset in 0..entry.row_count {
            let addr = entry.start_addr + offset;
            let row = image.sn.get(addr).ok_or(ImageError::DanglingAddress {
                what: "assignment-table",
                index: addr,
                limit: image.sn.len(),
            })?;
            for (engine, slot) in row.slots.iter().enumerate() {
                if !slot.enabled {
                    continue;
                }
                let weight = *image.wmem[engine].get(slot.waddr).ok_or(
                    ImageError::DanglingAddress {
                        what: "weight-memory",
                        index: slot.waddr,
                        limit: image.wmem[engine].len(),
                    },
                )?;
                out.push(ImageConnection {
                    source,
                    engine,
                    capacitor: slot.vn,
                    weight,
                    row_offset: offset,
                });
            }
        }
    }
    Ok(out)
}

/// Resolve a layer image back to `(source, dest, weight)` connections by
/// composing the table walk with the schedule's per-phase slot occupancy.
/// Sorted by `(source, dest)`, so directly comparable with
/// [`QuantizedLayer::nonzero_connections`].
pub fn resolve_connections(
    layer_image: &LayerImage,
    schedule: &PhaseSchedule,
) -> Result<Vec<(usize, usize, i8)>, ImageError> {
    let engines = layer_image.image.layout.engines;
    let capacitors = layer_image.image.layout.capacitors;
    let mut slot_owner = vec![vec![None; engines * capacitors]; schedule.phases.len()];
    for (phase, assignment) in schedule.phases.iter().enumerate() {
        for &(neuron, engine, capacitor) in &assignment.triples {
            slot_owner[phase][engine * capacitors + capacitor] = Some(neuron);
        }
    }

    let mut out = Vec::new();
    for conn in reconstruct_connectivity(&layer_image.image)? {
        let ranges = &layer_image.phase_rows[conn.source];
        let phase = ranges
            .iter()
            .position(|r| (r.offset..r.offset + r.len).contains(&conn.row_offset))
            .expect("row offset outside every phase range");
        let dest = slot_owner[phase][conn.engine * capacitors + conn.capacitor].ok_or(
            ImageError::UnmappedSlot { engine: conn.engine, capacitor: conn.capacitor, phase },
        )?;
        out.push((conn.source, dest, conn.weight));
    }
    out.sort_unstable();
    Ok(out)
}
