//! Artifact directory layout and the JSON documents that tie it together.
//!
//! ```text
//! out/
//!   compile_manifest.json   index: config echo plus per-layer summaries
//!   quantized_model.json    dims, LIF params, scales, 8-bit weights
//!   layer0/
//!     schedule.json         phases and per-source phase row ranges
//!     image_manifest.json   bit layout (widths and depths)
//!     e2a.hex  sn.hex  wmem_<j>.hex
//!   layer1/ ...
//! ```
//!
//! Nothing here embeds timestamps or absolute paths, so identical inputs
//! produce byte-identical directories.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analog::LifParams;
use crate::mapper::{PhaseSchedule, SolverKind};
use crate::memimage::RowRange;
use crate::model::QuantizedLayer;

use super::{HardwareConfig, PipelineError};

pub const COMPILE_MANIFEST: &str = "compile_manifest.json";
pub const QUANTIZED_MODEL: &str = "quantized_model.json";
pub const SCHEDULE_FILE: &str = "schedule.json";
pub const OUTPUT_SPIKES: &str = "output_spikes.txt";
pub const TRACE_FILE: &str = "trace.log";
pub const REPORT_FILE: &str = "report.csv";
pub const UTILIZATION_FILE: &str = "utilization.csv";
pub const VERIFY_FILE: &str = "verify.txt";

pub fn layer_dir(out_dir: &Path, layer: usize) -> PathBuf {
    out_dir.join(format!("layer{layer}"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn artifact_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Artifact(format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// Quantized model document
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct QuantizedModelDoc {
    pub input_size: usize,
    pub timesteps: usize,
    pub layers: Vec<QuantizedLayerDoc>,
}

#[derive(Serialize, Deserialize)]
pub struct QuantizedLayerDoc {
    pub rows: usize,
    pub cols: usize,
    pub scale: f64,
    pub degenerate: bool,
    pub lif: LifParams,
    pub qweights: Vec<i8>,
    /// Keep mask packed as a `0`/`1` string, row-major.
    pub prune_mask: String,
}

impl QuantizedModelDoc {
    pub fn new(
        input_size: usize,
        timesteps: usize,
        layers: &[(QuantizedLayer, LifParams)],
    ) -> Self {
        QuantizedModelDoc {
            input_size,
            timesteps,
            layers: layers
                .iter()
                .map(|(q, lif)| QuantizedLayerDoc {
                    rows: q.rows,
                    cols: q.cols,
                    scale: q.scale,
                    degenerate: q.degenerate,
                    lif: *lif,
                    qweights: q.qweights.clone(),
                    prune_mask: q
                        .prune_mask
                        .iter()
                        .map(|&kept| if kept { '1' } else { '0' })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_layers(&self) -> Result<Vec<(QuantizedLayer, LifParams)>, PipelineError> {
        self.layers
            .iter()
            .enumerate()
            .map(|(index, doc)| {
                if doc.qweights.len() != doc.rows * doc.cols
                    || doc.prune_mask.len() != doc.rows * doc.cols
                {
                    return Err(PipelineError::Artifact(format!(
                        "quantized layer {index}: field lengths do not match {}x{}",
                        doc.rows, doc.cols
                    )));
                }
                let layer = QuantizedLayer {
                    rows: doc.rows,
                    cols: doc.cols,
                    qweights: doc.qweights.clone(),
                    scale: doc.scale,
                    prune_mask: doc.prune_mask.chars().map(|c| c == '1').collect(),
                    degenerate: doc.degenerate,
                };
                Ok((layer, doc.lif))
            })
            .collect()
    }
}

pub fn save_quantized_model(doc: &QuantizedModelDoc, out_dir: &Path) -> Result<(), PipelineError> {
    let path = out_dir.join(QUANTIZED_MODEL);
    write_text(&path, &serde_json::to_string_pretty(doc).expect("doc serialization"))
}

pub fn load_quantized_model(out_dir: &Path) -> Result<QuantizedModelDoc, PipelineError> {
    let path = out_dir.join(QUANTIZED_MODEL);
    serde_json::from_str(&read_text(&path)?).map_err(|e| artifact_err(&path, e))
}

// ---------------------------------------------------------------------------
// Schedule document (phases + phase row index)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct ScheduleDoc {
    pub schedule: PhaseSchedule,
    /// `phase_rows[source][phase]`, offsets relative to the source's start
    /// address in the assignment table.
    pub phase_rows: Vec<Vec<RowRange>>,
}

pub fn save_schedule(doc: &ScheduleDoc, dir: &Path) -> Result<(), PipelineError> {
    let path = dir.join(SCHEDULE_FILE);
    write_text(&path, &serde_json::to_string_pretty(doc).expect("doc serialization"))
}

pub fn load_schedule(dir: &Path) -> Result<ScheduleDoc, PipelineError> {
    let path = dir.join(SCHEDULE_FILE);
    serde_json::from_str(&read_text(&path)?).map_err(|e| artifact_err(&path, e))
}

// ---------------------------------------------------------------------------
// Compile manifest (artifact index)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct CompileManifest {
    pub seed: u64,
    pub prune_ratio: f64,
    pub solver: SolverKind,
    pub hardware: HardwareConfig,
    pub layers: Vec<LayerSummary>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerSummary {
    pub dir: String,
    pub dests: usize,
    pub sources: usize,
    pub phases: usize,
    /// Populated assignment-table rows (utilization denominator).
    pub populated_rows: usize,
    /// Surviving quantized connections.
    pub nonzeros: usize,
}

pub fn save_compile_manifest(doc: &CompileManifest, out_dir: &Path) -> Result<(), PipelineError> {
    let path = out_dir.join(COMPILE_MANIFEST);
    write_text(&path, &serde_json::to_string_pretty(doc).expect("doc serialization"))
}

pub fn load_compile_manifest(out_dir: &Path) -> Result<CompileManifest, PipelineError> {
    let path = out_dir.join(COMPILE_MANIFEST);
    serde_json::from_str(&read_text(&path)?).map_err(|e| artifact_err(&path, e))
}
