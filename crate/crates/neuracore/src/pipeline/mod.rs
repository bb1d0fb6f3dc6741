//! End-to-end drivers wiring the stages together: prune, quantize, map,
//! generate memory images, simulate, verify against the dense reference,
//! and report.
//!
//! Every command is deterministic for a fixed seed and config: rerunning
//! `compile` and `simulate` into a fresh directory reproduces it byte for
//! byte.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::analog::LifParams;
use crate::mapper::{
    build_instance, schedule_phases, EngineConfig, MapError, PhaseSchedule,
};
use crate::memimage::{
    decode_from_dir, encode_to_dir, layout_from_schedule, ImageError, LayerImage, LayoutConfig,
};
use crate::metrics::{build_report, report_csv, utilization_csv, MetricsError, RunReport};
use crate::model::{
    check_stream, load_manifest, load_stream, prune_l1, quantize_symmetric, save_manifest,
    save_stream_text, stream_to_text, synth_manifest, synth_stream, ModelError, QuantizedLayer,
    SpikeStream,
};
use crate::sim::{
    reference_forward, run_chain, trace_from_text, trace_to_text, CoreModel, SimConfig, SimError,
};

mod artifacts;
mod config;

pub use artifacts::{CompileManifest, LayerSummary, ScheduleDoc};
pub use config::{load_config, HardwareConfig, PipelineConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("mapper: {0}")]
    Map(#[from] MapError),
    #[error("memory image: {0}")]
    Image(#[from] ImageError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("artifact: {0}")]
    Artifact(String),
}

impl PipelineError {
    /// Process exit code: 2 for problems with inputs, configuration, or
    /// artifacts the user supplied; 3 for runtime/internal failures.
    /// (Exit 1 is reserved for a failed verification verdict.)
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::Io { .. }
            | PipelineError::Model(_)
            | PipelineError::Artifact(_) => 2,
            PipelineError::Map(MapError::TooLarge { .. })
            | PipelineError::Map(MapError::Unassignable { .. }) => 2,
            PipelineError::Image(ImageError::DepthOverflow { .. })
            | PipelineError::Image(ImageError::Malformed { .. })
            | PipelineError::Image(ImageError::LayoutMismatch { .. })
            | PipelineError::Image(ImageError::Io { .. }) => 2,
            _ => 3,
        }
    }
}

fn effective_cores(hw: &HardwareConfig, layer_count: usize) -> Result<usize, PipelineError> {
    if hw.cores != 0 && hw.cores != layer_count {
        return Err(PipelineError::Config(format!(
            "hardware.cores = {} but the model has {layer_count} layers (one core per layer)",
            hw.cores
        )));
    }
    Ok(layer_count)
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path)
        .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
}

// ---------------------------------------------------------------------------
// compile
// ---------------------------------------------------------------------------

struct CompiledLayer {
    quantized: QuantizedLayer,
    lif: LifParams,
    schedule: PhaseSchedule,
    built: LayerImage,
}

#[derive(Clone, Debug)]
pub struct CompileSummary {
    pub layers: Vec<LayerSummary>,
    /// Human-readable warnings (degenerate quantization and the like).
    pub warnings: Vec<String>,
}

fn compile_layer(
    spec: &crate::model::LayerSpec,
    cfg: &PipelineConfig,
) -> Result<CompiledLayer, PipelineError> {
    let hw = &cfg.hardware;
    let pruned = prune_l1(spec, cfg.prune_ratio)?;
    let quantized = quantize_symmetric(&pruned);
    let engine_cfg = EngineConfig {
        engines: hw.engines,
        capacitors: hw.virtual_neurons,
        fanout_limit: hw.fanout_limit,
    };
    let instance = build_instance(&quantized, &engine_cfg);
    let schedule = schedule_phases(&instance, cfg.solver)?;
    let layout_cfg = LayoutConfig {
        e2a_depth: hw.e2a_depth,
        sn_depth: hw.sn_depth,
        wmem_depth: hw.wmem_depth,
    };
    let built = layout_from_schedule(
        &schedule,
        &quantized,
        hw.engines,
        hw.virtual_neurons,
        &layout_cfg,
    )?;
    Ok(CompiledLayer { quantized, lif: spec.lif, schedule, built })
}

/// Run the compile stage: prune, quantize, solve the placement per layer,
/// and write memory images plus the artifact index into the output
/// directory.
pub fn compile(cfg: &PipelineConfig) -> Result<CompileSummary, PipelineError> {
    cfg.validate()?;
    let manifest = load_manifest(&cfg.manifest)?;
    effective_cores(&cfg.hardware, manifest.layers.len())?;
    create_dir(&cfg.out_dir)?;

    let layer_count = manifest.layers.len();
    let mut compiled: Vec<Option<Result<CompiledLayer, PipelineError>>> =
        (0..layer_count).map(|_| None).collect();
    if cfg.jobs <= 1 {
        for (slot, spec) in compiled.iter_mut().zip(&manifest.layers) {
            *slot = Some(compile_layer(spec, cfg));
        }
    } else {
        // Layer compiles are independent; run them in waves of `jobs`,
        // collecting results back in layer order.
        let specs = &manifest.layers;
        for wave in (0..layer_count).collect::<Vec<_>>().chunks(cfg.jobs) {
            let results: Vec<Result<CompiledLayer, PipelineError>> =
                std::thread::scope(|scope| {
                    let handles: Vec<_> = wave
                        .iter()
                        .map(|&l| {
                            let spec = &specs[l];
                            scope.spawn(move || compile_layer(spec, cfg))
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("layer compile panicked"))
                        .collect()
                });
            for (&l, result) in wave.iter().zip(results) {
                compiled[l] = Some(result);
            }
        }
    }

    let mut summaries = Vec::with_capacity(layer_count);
    let mut warnings = Vec::new();
    let mut model_layers = Vec::with_capacity(layer_count);
    for (index, slot) in compiled.into_iter().enumerate() {
        let layer = slot.expect("layer slot filled")?;
        if layer.quantized.degenerate {
            warnings.push(format!(
                "layer {index}: all weights zero after pruning; scale degenerates to 1"
            ));
        }
        let dir = artifacts::layer_dir(&cfg.out_dir, index);
        create_dir(&dir)?;
        encode_to_dir(&layer.built.image, &dir)?;
        artifacts::save_schedule(
            &ScheduleDoc {
                schedule: layer.schedule.clone(),
                phase_rows: layer.built.phase_rows.clone(),
            },
            &dir,
        )?;
        summaries.push(LayerSummary {
            dir: format!("layer{index}"),
            dests: layer.quantized.rows,
            sources: layer.quantized.cols,
            phases: layer.schedule.phases.len(),
            populated_rows: layer.built.image.populated_sn_rows(),
            nonzeros: layer.quantized.nonzero_connections().len(),
        });
        model_layers.push((layer.quantized, layer.lif));
    }

    artifacts::save_quantized_model(
        &artifacts::QuantizedModelDoc::new(manifest.input_size, manifest.timesteps, &model_layers),
        &cfg.out_dir,
    )?;
    artifacts::save_compile_manifest(
        &CompileManifest {
            seed: cfg.seed,
            prune_ratio: cfg.prune_ratio,
            solver: cfg.solver,
            hardware: cfg.hardware,
            layers: summaries.clone(),
        },
        &cfg.out_dir,
    )?;

    Ok(CompileSummary { layers: summaries, warnings })
}

// ---------------------------------------------------------------------------
// artifact loading shared by simulate / verify
// ---------------------------------------------------------------------------

struct ArtifactSet {
    layers: Vec<(QuantizedLayer, LifParams)>,
    cores: Vec<CoreModel>,
    populated: Vec<usize>,
    input_size: usize,
    timesteps: usize,
}

fn load_artifacts(cfg: &PipelineConfig) -> Result<ArtifactSet, PipelineError> {
    let index = artifacts::load_compile_manifest(&cfg.out_dir)?;
    let model_doc = artifacts::load_quantized_model(&cfg.out_dir)?;
    let layers = model_doc.to_layers()?;
    if index.layers.len() != layers.len() {
        return Err(PipelineError::Artifact(format!(
            "compile manifest indexes {} layers, quantized model holds {}",
            index.layers.len(),
            layers.len()
        )));
    }

    let mut cores = Vec::with_capacity(layers.len());
    let mut populated = Vec::with_capacity(layers.len());
    for (summary, (quantized, lif)) in index.layers.iter().zip(&layers) {
        let dir = cfg.out_dir.join(&summary.dir);
        let image = decode_from_dir(&dir)?;
        let schedule_doc = artifacts::load_schedule(&dir)?;
        populated.push(image.populated_sn_rows());
        cores.push(CoreModel {
            image,
            phase_rows: schedule_doc.phase_rows,
            schedule: schedule_doc.schedule,
            lif: *lif,
            dests: quantized.rows,
            sources: quantized.cols,
        });
    }
    Ok(ArtifactSet {
        layers,
        cores,
        populated,
        input_size: model_doc.input_size,
        timesteps: model_doc.timesteps,
    })
}

fn load_checked_stream(
    cfg: &PipelineConfig,
    artifacts: &ArtifactSet,
) -> Result<SpikeStream, PipelineError> {
    let stream = load_stream(&cfg.stream)?;
    if stream.timesteps != artifacts.timesteps || stream.width != artifacts.input_size {
        return Err(PipelineError::Artifact(format!(
            "stream is {}x{}, compiled model expects {}x{}",
            stream.timesteps, stream.width, artifacts.timesteps, artifacts.input_size
        )));
    }
    Ok(stream)
}

fn sim_config(cfg: &PipelineConfig) -> SimConfig {
    SimConfig {
        clock_hz: cfg.energy.clock_hz,
        fifo_depth: cfg.hardware.fifo_depth,
        drain_budget: cfg.hardware.drain_budget,
        runaway_volts: 1e6,
        clock_trace: cfg.clock_trace,
        vref: cfg.hardware.vref,
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SimulateSummary {
    pub output_spikes: usize,
    pub report: RunReport,
}

/// Run the compiled artifacts over the input stream; write the output spike
/// grid, the trace, and the report CSVs.
pub fn simulate(cfg: &PipelineConfig) -> Result<SimulateSummary, PipelineError> {
    cfg.validate()?;
    let artifacts_set = load_artifacts(cfg)?;
    let stream = load_checked_stream(cfg, &artifacts_set)?;

    let (output, trace) = run_chain(&artifacts_set.cores, &stream, &sim_config(cfg))?;

    save_stream_text(&output, &cfg.out_dir.join(artifacts::OUTPUT_SPIKES))?;
    artifacts::write_text(&cfg.out_dir.join(artifacts::TRACE_FILE), &trace_to_text(&trace))?;
    let report = build_report(&trace, &cfg.energy, &artifacts_set.populated)?;
    artifacts::write_text(&cfg.out_dir.join(artifacts::REPORT_FILE), &report_csv(&report))?;
    artifacts::write_text(
        &cfg.out_dir.join(artifacts::UTILIZATION_FILE),
        &utilization_csv(&report.util_series),
    )?;

    Ok(SimulateSummary { output_spikes: output.count_spikes(), report })
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

/// First point where the chain and the reference disagree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Divergence {
    pub timestep: usize,
    pub neuron: usize,
    pub chain: bool,
    pub reference: bool,
}

#[derive(Clone, Debug)]
pub struct VerifyVerdict {
    pub pass: bool,
    pub divergence: Option<Divergence>,
}

/// Run the event-driven chain and the dense reference over the same stream
/// and diff the spike grids. Exact equality is the bar.
pub fn verify(cfg: &PipelineConfig) -> Result<VerifyVerdict, PipelineError> {
    cfg.validate()?;
    let artifacts_set = load_artifacts(cfg)?;
    let stream = load_checked_stream(cfg, &artifacts_set)?;

    let (chain_out, _) = run_chain(&artifacts_set.cores, &stream, &sim_config(cfg))?;
    let quantized: Vec<QuantizedLayer> =
        artifacts_set.layers.iter().map(|(q, _)| q.clone()).collect();
    let lifs: Vec<LifParams> = artifacts_set.layers.iter().map(|(_, lif)| *lif).collect();
    let reference = reference_forward(&quantized, &lifs, &stream, cfg.hardware.vref);

    let mut divergence = None;
    'scan: for t in 0..chain_out.timesteps {
        for neuron in 0..chain_out.width {
            let (chain, reference_bit) = (chain_out.get(t, neuron), reference.get(t, neuron));
            if chain != reference_bit {
                divergence =
                    Some(Divergence { timestep: t, neuron, chain, reference: reference_bit });
                break 'scan;
            }
        }
    }

    let verdict = VerifyVerdict { pass: divergence.is_none(), divergence };
    let text = match &verdict.divergence {
        None => "PASS: chain output equals reference output exactly\n".to_string(),
        Some(d) => format!(
            "FAIL: first divergence at timestep {}, neuron {}: chain={} reference={}\n",
            d.timestep, d.neuron, d.chain as u8, d.reference as u8
        ),
    };
    artifacts::write_text(&cfg.out_dir.join(artifacts::VERIFY_FILE), &text)?;
    Ok(verdict)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// Rebuild the report CSVs from a stored trace, applying the config's
/// (possibly updated) energy model.
pub fn report(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let index = artifacts::load_compile_manifest(&cfg.out_dir)?;
    let trace_text = artifacts::read_text(&cfg.out_dir.join(artifacts::TRACE_FILE))?;
    let trace = trace_from_text(&trace_text).map_err(PipelineError::Artifact)?;
    let populated: Vec<usize> = index.layers.iter().map(|l| l.populated_rows).collect();
    let run_report = build_report(&trace, &cfg.energy, &populated)?;
    artifacts::write_text(&cfg.out_dir.join(artifacts::REPORT_FILE), &report_csv(&run_report))?;
    artifacts::write_text(
        &cfg.out_dir.join(artifacts::UTILIZATION_FILE),
        &utilization_csv(&run_report.util_series),
    )?;
    Ok(run_report)
}

// ---------------------------------------------------------------------------
// synthetic model generation
// ---------------------------------------------------------------------------

/// Shape of a synthetic model request.
#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub input_size: usize,
    /// Destination widths, one per layer.
    pub widths: Vec<usize>,
    pub timesteps: usize,
    /// Per-cell spike probability of the generated stream.
    pub density: f64,
    pub lif: LifParams,
    pub seed: u64,
}

/// Generate a seeded synthetic manifest and spike stream.
pub fn gen_synth(
    spec: &SynthSpec,
    manifest_path: &Path,
    stream_path: &Path,
) -> Result<(), PipelineError> {
    if spec.widths.is_empty() {
        return Err(PipelineError::Config("at least one layer width required".into()));
    }
    if spec.input_size < 1 || spec.timesteps < 1 || spec.widths.iter().any(|&w| w < 1) {
        return Err(PipelineError::Config("dimensions must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.density) {
        return Err(PipelineError::Config(format!(
            "density {} outside [0, 1]",
            spec.density
        )));
    }
    if !spec.lif.is_valid() {
        return Err(PipelineError::Config(
            "invalid LIF parameters (need vth > vreset, 0 < leak_lambda <= 1)".into(),
        ));
    }
    let manifest =
        synth_manifest(spec.input_size, &spec.widths, spec.timesteps, spec.lif, spec.seed);
    let stream = synth_stream(
        spec.input_size,
        spec.timesteps,
        spec.density,
        spec.seed.wrapping_add(1),
    );
    check_stream(&manifest, &stream)?;
    save_manifest(&manifest, manifest_path)?;
    save_stream_text(&stream, stream_path)?;
    Ok(())
}

/// Text form of a spike grid, re-exported where the CLI needs it.
pub fn spikes_to_text(stream: &SpikeStream) -> String {
    stream_to_text(stream)
}
