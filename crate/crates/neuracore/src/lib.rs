//! Compile-and-simulate toolchain for a mixed-signal, event-driven
//! neuromorphic accelerator built as a chain of per-layer cores.
//!
//! Each core pairs a memory-based event controller with analog synapse
//! engines (C2C-ladder multiplying DACs) and time-multiplexed analog LIF
//! neuron engines. The toolchain prunes and quantizes a layered spiking
//! network, solves the neuron-to-capacitor placement problem per layer,
//! emits bit-exact controller memory images, runs an event-driven behavioral
//! simulation of the whole chain, and checks it against a dense reference
//! model. Simulation traces feed the energy and memory-utilization reports.
//!
//! Module map:
//! - [`model`]: manifest ingestion, pruning, quantization, spike streams
//! - [`analog`]: ladder DAC and LIF behavioral primitives
//! - [`mapper`]: placement solvers and phase scheduling
//! - [`memimage`]: controller memory image generation and hex codecs
//! - [`sim`]: event-driven chain simulator and the dense reference model
//! - [`metrics`]: op counts, energy, utilization, run reports
//! - [`pipeline`]: end-to-end compile / simulate / verify / report drivers

pub mod analog;
pub mod mapper;
pub mod memimage;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sim;
