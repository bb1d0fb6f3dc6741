//! Layered spiking-network model: manifest ingestion, unstructured L1
//! pruning, symmetric 8-bit quantization, and spike-stream I/O.
//!
//! Training is out of scope; models arrive as a manifest of dense float
//! weight matrices (inline or in little-endian `f32` blobs) plus per-layer
//! LIF parameters, or are generated synthetically for tests.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analog::LifParams;
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest parse failure: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("manifest has no layers")]
    NoLayers,
    #[error("timesteps must be >= 1")]
    BadTimesteps,
    #[error("input_size must be >= 1")]
    BadInputSize,
    #[error("layer {layer}: dimensions must be >= 1")]
    BadDims { layer: usize },
    #[error("layer {layer}: expects {expected} inputs but previous layer produces {got}")]
    DimMismatch { layer: usize, expected: usize, got: usize },
    #[error("layer {layer}: weight matrix has {got} entries, expected {expected}")]
    WeightCount { layer: usize, expected: usize, got: usize },
    #[error("layer {layer}: non-finite weight at row-major index {index}")]
    NonFinite { layer: usize, index: usize },
    #[error("layer {layer}: invalid LIF parameters (need vth > vreset, 0 < leak_lambda <= 1)")]
    BadLif { layer: usize },
    #[error("prune ratio {0} outside [0, 1]")]
    BadRatio(f64),
    #[error("weight blob {path}: length {got} bytes is not {expected}")]
    BlobLength { path: String, expected: usize, got: usize },
    #[error("spike stream line {line}: {msg}")]
    StreamFormat { line: usize, msg: String },
    #[error("spike stream is {got_t}x{got_w}, model expects {want_t}x{want_w}")]
    StreamDims { got_t: usize, got_w: usize, want_t: usize, want_w: usize },
}

/// One dense layer: `rows` destination neurons fed by `cols` source neurons.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols` weight matrix.
    pub weights: Vec<f64>,
    pub lif: LifParams,
    /// Row-major keep mask; `false` marks a pruned connection. All-true
    /// until `prune_l1` runs.
    pub prune_mask: Vec<bool>,
}

impl LayerSpec {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>, lif: LifParams) -> Self {
        assert_eq!(weights.len(), rows * cols);
        LayerSpec { rows, cols, weights, lif, prune_mask: vec![true; rows * cols] }
    }

    #[inline]
    pub fn weight(&self, dest: usize, source: usize) -> f64 {
        self.weights[dest * self.cols + source]
    }
}

/// Validated model description.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelManifest {
    pub input_size: usize,
    pub timesteps: usize,
    pub layers: Vec<LayerSpec>,
}

/// Per-layer 8-bit signed weights with a symmetric scale. This is exactly
/// the digital content that ends up in the synapse-engine weight memories.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedLayer {
    pub rows: usize,
    pub cols: usize,
    /// Row-major quantized weights.
    pub qweights: Vec<i8>,
    /// Volts represented by one code step times 127; `dequant = q * scale`.
    pub scale: f64,
    /// Keep mask carried over from the float layer.
    pub prune_mask: Vec<bool>,
    /// Set when the source layer was all-zero and the scale fell back to 1.
    pub degenerate: bool,
}

impl QuantizedLayer {
    #[inline]
    pub fn qweight(&self, dest: usize, source: usize) -> i8 {
        self.qweights[dest * self.cols + source]
    }

    /// Surviving connections as `(source, dest, weight)`, sorted by
    /// `(source, dest)`.
    pub fn nonzero_connections(&self) -> Vec<(usize, usize, i8)> {
        let mut out = Vec::new();
        for source in 0..self.cols {
            for dest in 0..self.rows {
                let q = self.qweight(dest, source);
                if q != 0 {
                    out.push((source, dest, q));
                }
            }
        }
        out
    }
}

/// Boolean spike grid, one row per timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeStream {
    pub timesteps: usize,
    pub width: usize,
    spikes: Vec<bool>,
}

impl SpikeStream {
    pub fn new(timesteps: usize, width: usize) -> Self {
        SpikeStream { timesteps, width, spikes: vec![false; timesteps * width] }
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize) -> bool {
        self.spikes[t * self.width + i]
    }

    #[inline]
    pub fn set(&mut self, t: usize, i: usize, value: bool) {
        self.spikes[t * self.width + i] = value;
    }

    pub fn row(&self, t: usize) -> &[bool] {
        &self.spikes[t * self.width..(t + 1) * self.width]
    }

    pub fn count_spikes(&self) -> usize {
        self.spikes.iter().filter(|&&s| s).count()
    }
}

// ---------------------------------------------------------------------------
// Manifest file format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    input_size: usize,
    timesteps: usize,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    vth: f64,
    vreset: f64,
    leak_lambda: f64,
    weights: WeightsSource,
}

/// Weights are either inline row-major values or a path (relative to the
/// manifest file) to a little-endian `f32` blob.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WeightsSource {
    Inline(Vec<f64>),
    Blob(String),
}

fn read_weight_blob(path: &Path, expected: usize) -> Result<Vec<f64>, ModelError> {
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() != expected * 4 {
        return Err(ModelError::BlobLength {
            path: path.display().to_string(),
            expected: expected * 4,
            got: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Load and validate a model manifest.
pub fn load_manifest(path: &Path) -> Result<ModelManifest, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let doc: ManifestDoc = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    if doc.layers.is_empty() {
        return Err(ModelError::NoLayers);
    }
    if doc.timesteps < 1 {
        return Err(ModelError::BadTimesteps);
    }
    if doc.input_size < 1 {
        return Err(ModelError::BadInputSize);
    }

    let mut layers = Vec::with_capacity(doc.layers.len());
    let mut prev_rows = doc.input_size;
    for (index, layer) in doc.layers.into_iter().enumerate() {
        if layer.rows < 1 || layer.cols < 1 {
            return Err(ModelError::BadDims { layer: index });
        }
        if layer.cols != prev_rows {
            return Err(ModelError::DimMismatch {
                layer: index,
                expected: layer.cols,
                got: prev_rows,
            });
        }
        let expected = layer.rows * layer.cols;
        let weights = match layer.weights {
            WeightsSource::Inline(w) => {
                if w.len() != expected {
                    return Err(ModelError::WeightCount {
                        layer: index,
                        expected,
                        got: w.len(),
                    });
                }
                w
            }
            WeightsSource::Blob(rel) => read_weight_blob(&base.join(rel), expected)?,
        };
        if let Some(bad) = weights.iter().position(|w| !w.is_finite()) {
            return Err(ModelError::NonFinite { layer: index, index: bad });
        }
        let lif = LifParams {
            vth: layer.vth,
            vreset: layer.vreset,
            leak_lambda: layer.leak_lambda,
        };
        if !lif.is_valid() {
            return Err(ModelError::BadLif { layer: index });
        }
        prev_rows = layer.rows;
        layers.push(LayerSpec::new(layer.rows, layer.cols, weights, lif));
    }

    Ok(ModelManifest { input_size: doc.input_size, timesteps: doc.timesteps, layers })
}

/// Write a manifest with inline weights.
pub fn save_manifest(manifest: &ModelManifest, path: &Path) -> Result<(), ModelError> {
    let doc = ManifestDoc {
        input_size: manifest.input_size,
        timesteps: manifest.timesteps,
        layers: manifest
            .layers
            .iter()
            .map(|l| LayerDoc {
                rows: l.rows,
                cols: l.cols,
                vth: l.lif.vth,
                vreset: l.lif.vreset,
                leak_lambda: l.lif.leak_lambda,
                weights: WeightsSource::Inline(l.weights.clone()),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&doc).expect("manifest serialization");
    fs::write(path, text).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Pruning and quantization
// ---------------------------------------------------------------------------

/// Unstructured L1 pruning over the whole layer: zeroes exactly
/// `floor(ratio * rows * cols)` entries, picking the smallest absolute
/// values. Ties break by row-major index, lower index pruned first, so the
/// result (and everything downstream of it) is reproducible.
pub fn prune_l1(layer: &LayerSpec, ratio: f64) -> Result<LayerSpec, ModelError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(ModelError::BadRatio(ratio));
    }
    let total = layer.weights.len();
    let count = (ratio * total as f64).floor() as usize;

    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| {
        layer.weights[a]
            .abs()
            .total_cmp(&layer.weights[b].abs())
            .then(a.cmp(&b))
    });

    let mut pruned = layer.clone();
    for &index in order.iter().take(count) {
        pruned.weights[index] = 0.0;
        pruned.prune_mask[index] = false;
    }
    Ok(pruned)
}

/// Symmetric per-layer 8-bit quantization: `scale = max|w| / 127`, codes
/// rounded half away from zero and clamped to `[-128, 127]`.
///
/// An all-zero layer cannot define a scale; it quantizes to zeros with
/// `scale = 1` and the `degenerate` flag set so callers can warn.
pub fn quantize_symmetric(layer: &LayerSpec) -> QuantizedLayer {
    let max_abs = layer.weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if max_abs == 0.0 {
        return QuantizedLayer {
            rows: layer.rows,
            cols: layer.cols,
            qweights: vec![0; layer.weights.len()],
            scale: 1.0,
            prune_mask: layer.prune_mask.clone(),
            degenerate: true,
        };
    }
    let scale = max_abs / 127.0;
    let qweights = layer
        .weights
        .iter()
        .map(|&w| (w / scale).round().clamp(-128.0, 127.0) as i8)
        .collect();
    QuantizedLayer {
        rows: layer.rows,
        cols: layer.cols,
        qweights,
        scale,
        prune_mask: layer.prune_mask.clone(),
        degenerate: false,
    }
}

// ---------------------------------------------------------------------------
// Spike stream I/O
// ---------------------------------------------------------------------------

const STREAM_MAGIC: [u8; 4] = *b"SPKB";

/// Load a spike stream, accepting either the text grid (one `0`/`1` row per
/// timestep) or the binary bitmap with a 16-byte header.
pub fn load_stream(path: &Path) -> Result<SpikeStream, ModelError> {
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() >= 4 && bytes[..4] == STREAM_MAGIC {
        parse_stream_binary(&bytes)
    } else {
        parse_stream_text(&String::from_utf8_lossy(&bytes))
    }
}

pub fn parse_stream_text(text: &str) -> Result<SpikeStream, ModelError> {
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(line.len());
        for ch in line.chars() {
            match ch {
                '0' => row.push(false),
                '1' => row.push(true),
                other => {
                    return Err(ModelError::StreamFormat {
                        line: number + 1,
                        msg: format!("unexpected character {other:?}"),
                    })
                }
            }
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(ModelError::StreamFormat {
                    line: number + 1,
                    msg: format!("row width {} differs from {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ModelError::StreamFormat { line: 1, msg: "empty stream".into() });
    }
    let width = rows[0].len();
    let timesteps = rows.len();
    let mut stream = SpikeStream::new(timesteps, width);
    for (t, row) in rows.iter().enumerate() {
        for (i, &s) in row.iter().enumerate() {
            stream.set(t, i, s);
        }
    }
    Ok(stream)
}

fn parse_stream_binary(bytes: &[u8]) -> Result<SpikeStream, ModelError> {
    if bytes.len() < 16 {
        return Err(ModelError::StreamFormat { line: 0, msg: "truncated header".into() });
    }
    let timesteps = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    let width = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    if timesteps == 0 || width == 0 {
        return Err(ModelError::StreamFormat { line: 0, msg: "zero dimension".into() });
    }
    let row_bytes = width.div_ceil(8);
    let expected = 16 + timesteps * row_bytes;
    if bytes.len() != expected {
        return Err(ModelError::StreamFormat {
            line: 0,
            msg: format!("payload is {} bytes, expected {expected}", bytes.len()),
        });
    }
    let mut stream = SpikeStream::new(timesteps, width);
    for t in 0..timesteps {
        let row = &bytes[16 + t * row_bytes..16 + (t + 1) * row_bytes];
        for i in 0..width {
            if row[i / 8] >> (i % 8) & 1 == 1 {
                stream.set(t, i, true);
            }
        }
    }
    Ok(stream)
}

pub fn stream_to_text(stream: &SpikeStream) -> String {
    let mut out = String::with_capacity(stream.timesteps * (stream.width + 1));
    for t in 0..stream.timesteps {
        for i in 0..stream.width {
            out.push(if stream.get(t, i) { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

pub fn save_stream_text(stream: &SpikeStream, path: &Path) -> Result<(), ModelError> {
    let mut file = fs::File::create(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(stream_to_text(stream).as_bytes())
        .map_err(|source| ModelError::Io { path: path.display().to_string(), source })
}

pub fn save_stream_binary(stream: &SpikeStream, path: &Path) -> Result<(), ModelError> {
    let row_bytes = stream.width.div_ceil(8);
    let mut bytes = Vec::with_capacity(16 + stream.timesteps * row_bytes);
    bytes.extend_from_slice(&STREAM_MAGIC);
    bytes.extend_from_slice(&(stream.timesteps as u32).to_le_bytes());
    bytes.extend_from_slice(&(stream.width as u32).to_le_bytes());
    bytes.extend_from_slice(&0u32.to_le_bytes());
    for t in 0..stream.timesteps {
        let mut row = vec![0u8; row_bytes];
        for i in 0..stream.width {
            if stream.get(t, i) {
                row[i / 8] |= 1 << (i % 8);
            }
        }
        bytes.extend_from_slice(&row);
    }
    let mut file = fs::File::create(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(&bytes)
        .map_err(|source| ModelError::Io { path: path.display().to_string(), source })
}

/// Check a stream against a model's input shape.
pub fn check_stream(manifest: &ModelManifest, stream: &SpikeStream) -> Result<(), ModelError> {
    if stream.timesteps != manifest.timesteps || stream.width != manifest.input_size {
        return Err(ModelError::StreamDims {
            got_t: stream.timesteps,
            got_w: stream.width,
            want_t: manifest.timesteps,
            want_w: manifest.input_size,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic models
// ---------------------------------------------------------------------------

/// Seeded synthetic model with weights uniform in `[-1, 1]`. `widths` are
/// the destination-layer sizes in order.
pub fn synth_manifest(
    input_size: usize,
    widths: &[usize],
    timesteps: usize,
    lif: LifParams,
    seed: u64,
) -> ModelManifest {
    assert!(!widths.is_empty());
    let mut rng = Rng::new(seed);
    let mut layers = Vec::with_capacity(widths.len());
    let mut cols = input_size;
    for &rows in widths {
        let weights = (0..rows * cols).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        layers.push(LayerSpec::new(rows, cols, weights, lif));
        cols = rows;
    }
    ModelManifest { input_size, timesteps, layers }
}

/// Seeded random spike stream with the given per-cell density.
pub fn synth_stream(input_size: usize, timesteps: usize, density: f64, seed: u64) -> SpikeStream {
    let mut rng = Rng::new(seed);
    let mut stream = SpikeStream::new(timesteps, input_size);
    for t in 0..timesteps {
        for i in 0..input_size {
            if rng.chance(density) {
                stream.set(t, i, true);
            }
        }
    }
    stream
}
