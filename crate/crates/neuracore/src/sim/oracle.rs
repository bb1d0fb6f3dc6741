//! Dense synchronous reference model.
//!
//! Per timestep and per layer: an integer dot product of the quantized
//! weights with the incoming spike vector, scaled through the ladder
//! transfer, then leak, merge, threshold. The update is written as the same
//! two-rounding sequence the event-driven simulator performs (`v = lambda*v`
//! then `v = v + contribution`), and the contribution of a timestep is an
//! exact dyadic rational whenever `vref` is; under those conditions the two
//! paths agree bitwise, not just within tolerance.

use crate::analog::LifParams;
use crate::model::{QuantizedLayer, SpikeStream};

fn forward_grids(
    layers: &[QuantizedLayer],
    lifs: &[LifParams],
    stream: &SpikeStream,
    vref: f64,
) -> Vec<SpikeStream> {
    assert!(!layers.is_empty(), "no layers");
    assert_eq!(layers.len(), lifs.len(), "layer/parameter count mismatch");
    assert_eq!(stream.width, layers[0].cols, "stream width mismatch");
    for pair in layers.windows(2) {
        assert_eq!(pair[1].cols, pair[0].rows, "chain shape mismatch");
    }

    let full_scale = 256.0;
    let mut membranes: Vec<Vec<f64>> = layers
        .iter()
        .zip(lifs)
        .map(|(layer, lif)| vec![lif.vreset; layer.rows])
        .collect();
    let mut grids: Vec<SpikeStream> = layers
        .iter()
        .map(|layer| SpikeStream::new(stream.timesteps, layer.rows))
        .collect();

    let mut spikes_in: Vec<bool> = Vec::new();
    let mut spikes_out: Vec<bool> = Vec::new();
    for t in 0..stream.timesteps {
        spikes_in.clear();
        spikes_in.extend_from_slice(stream.row(t));
        for (layer_index, ((layer, lif), layer_membranes)) in
            layers.iter().zip(lifs).zip(membranes.iter_mut()).enumerate()
        {
            spikes_out.clear();
            for (dest, membrane) in layer_membranes.iter_mut().enumerate() {
                let row = &layer.qweights[dest * layer.cols..(dest + 1) * layer.cols];
                let mut sum: i64 = 0;
                for (source, &q) in row.iter().enumerate() {
                    if spikes_in[source] {
                        sum += q as i64;
                    }
                }
                let contribution = vref * sum as f64 / full_scale;
                // Same rounding sequence as the event path: leak the carried
                // voltage, then merge the timestep's contribution.
                let leaked = lif.leak_lambda * *membrane;
                let merged = leaked + contribution;
                let fired = merged >= lif.vth;
                *membrane = if fired { lif.vreset } else { merged };
                if fired {
                    grids[layer_index].set(t, dest, true);
                }
                spikes_out.push(fired);
            }
            std::mem::swap(&mut spikes_in, &mut spikes_out);
        }
    }
    grids
}

/// Run the dense reference over the whole stream and return the last
/// layer's spike grid. `lifs` holds one parameter set per layer.
pub fn reference_forward(
    layers: &[QuantizedLayer],
    lifs: &[LifParams],
    stream: &SpikeStream,
    vref: f64,
) -> SpikeStream {
    forward_grids(layers, lifs, stream, vref).pop().unwrap()
}

/// Per-layer input activity over the run: entry 0 is the input stream
/// itself, entry `l` is layer `l-1`'s output grid feeding layer `l`. The
/// per-timestep mapping mode consumes this profile to restrict each
/// timestep's placement instance to neurons that actually receive events.
pub fn activity_profile(
    layers: &[QuantizedLayer],
    lifs: &[LifParams],
    stream: &SpikeStream,
    vref: f64,
) -> Vec<SpikeStream> {
    let mut grids = forward_grids(layers, lifs, stream, vref);
    grids.pop();
    let mut profile = vec![stream.clone()];
    profile.append(&mut grids);
    profile
}
