//! Pipeline configuration file: a JSON document naming the inputs, the
//! output directory, the hardware shape, and the knobs of every stage.
//! Relative paths resolve against the directory containing the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::mapper::SolverKind;
use crate::metrics::EnergyModel;

use super::PipelineError;

/// Accelerator shape and runtime limits.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct HardwareConfig {
    /// Core count. Zero means "one per model layer"; a nonzero value must
    /// equal the model's layer count.
    pub cores: usize,
    /// Neuron engines per core.
    pub engines: usize,
    /// Virtual neurons (capacitor slots) per engine.
    pub virtual_neurons: usize,
    /// Event memory depth per core; default twice the core's source count.
    pub fifo_depth: Option<usize>,
    /// Event-to-address table depth; default one row per source neuron.
    pub e2a_depth: Option<usize>,
    /// Assignment table depth; default exactly the populated rows.
    pub sn_depth: Option<usize>,
    /// Weight memory depth per engine; default the deepest population.
    pub wmem_depth: Option<usize>,
    /// Uniform per-source fan-out limit; default unconstrained.
    pub fanout_limit: Option<usize>,
    /// Ladder reference voltage. Exact verification expects a dyadic value.
    pub vref: f64,
    /// Per-timestep clock budget before the deadlock guard trips.
    pub drain_budget: u64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        HardwareConfig {
            cores: 0,
            engines: 1,
            virtual_neurons: 1,
            fifo_depth: None,
            e2a_depth: None,
            sn_depth: None,
            wmem_depth: None,
            fanout_limit: None,
            vref: 1.0,
            drain_budget: 1_000_000,
        }
    }
}

/// Everything a pipeline run needs. Flags on the command line override
/// individual fields after the file loads.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Model manifest path.
    pub manifest: PathBuf,
    /// Input spike stream path.
    pub stream: PathBuf,
    /// Artifact directory.
    pub out_dir: PathBuf,
    pub hardware: HardwareConfig,
    pub energy: EnergyModel,
    /// Fraction of weights removed by unstructured L1 pruning.
    pub prune_ratio: f64,
    pub solver: SolverKind,
    pub seed: u64,
    /// Record per-clock controller actions in the trace.
    pub clock_trace: bool,
    /// Parallel per-layer compiles; 1 disables threading.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            manifest: PathBuf::new(),
            stream: PathBuf::new(),
            out_dir: PathBuf::new(),
            hardware: HardwareConfig::default(),
            energy: EnergyModel::default(),
            prune_ratio: 0.0,
            solver: SolverKind::Exact,
            seed: 0,
            clock_trace: true,
            jobs: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.manifest.as_os_str().is_empty() {
            return Err(PipelineError::Config("manifest path not set".into()));
        }
        if self.stream.as_os_str().is_empty() {
            return Err(PipelineError::Config("stream path not set".into()));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(PipelineError::Config("out_dir not set".into()));
        }
        if self.hardware.engines < 1 || self.hardware.virtual_neurons < 1 {
            return Err(PipelineError::Config(
                "engines and virtual_neurons must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.prune_ratio) {
            return Err(PipelineError::Config(format!(
                "prune_ratio {} outside [0, 1]",
                self.prune_ratio
            )));
        }
        if self.hardware.vref <= 0.0 {
            return Err(PipelineError::Config("vref must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(PipelineError::Config("jobs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Load a config file, resolving its relative paths against the file's
/// directory.
pub fn load_config(path: &Path) -> Result<PipelineConfig, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut config: PipelineConfig = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for field in [&mut config.manifest, &mut config.stream, &mut config.out_dir] {
        if !field.as_os_str().is_empty() && field.is_relative() {
            *field = base.join(&field);
        }
    }
    Ok(config)
}
