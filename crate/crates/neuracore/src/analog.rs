//! Behavioral models of the analog datapath: the C2C-ladder multiplying DAC
//! inside each synapse engine (A-Syn) and the leaky integrate-and-fire
//! dynamics held in the neuron engines' (A-Neuron) capacitor slots.
//!
//! Everything here is a pure value transformation over exact reals; circuit
//! nonidealities (noise, mismatch, op-amp transients) are out of scope. With
//! a dyadic reference voltage every ladder output is an exact `f64`, which is
//! what lets the event-driven simulator and the dense reference model agree
//! bit for bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalogError {
    #[error("signed word {word} out of range for {bits}-bit ladder input")]
    SignedOutOfRange { word: i64, bits: u32 },
    #[error("unsigned word {word} does not fit in {bits} bits")]
    UnsignedOutOfRange { word: u64, bits: u32 },
    #[error("time constants must be positive (tau_m={tau_m}, dt={dt})")]
    NonPositiveTime { tau_m: f64, dt: f64 },
}

/// Capacitor-ladder multiplying DAC: an analog reference scaled by a stored
/// digital word.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct C2cLadder {
    /// Digital word width in bits.
    pub bits: u32,
    /// Analog reference voltage in volts.
    pub vref: f64,
}

impl Default for C2cLadder {
    fn default() -> Self {
        C2cLadder { bits: 8, vref: 1.0 }
    }
}

impl C2cLadder {
    pub fn new(bits: u32, vref: f64) -> Self {
        assert!((1..=62).contains(&bits), "ladder width out of range");
        assert!(vref > 0.0, "reference voltage must be positive");
        C2cLadder { bits, vref }
    }

    fn full_scale(&self) -> f64 {
        (1u64 << self.bits) as f64
    }

    /// Output voltage for a two's-complement stored word: `vref * w / 2^bits`.
    ///
    /// This is how weight words from the synapse memories are interpreted;
    /// the sign rails of the differential ladder collapse to a signed scale
    /// at the behavioral level.
    pub fn multiply_signed(&self, word: i64) -> Result<f64, AnalogError> {
        let half = 1i64 << (self.bits - 1);
        if word < -half || word >= half {
            return Err(AnalogError::SignedOutOfRange { word, bits: self.bits });
        }
        Ok(self.vref * word as f64 / self.full_scale())
    }

    /// Output voltage for an unsigned word: `vref * sum_i(W_i * 2^(i-bits))`.
    ///
    /// Kept as the plain single-rail ladder transfer; used by tests that
    /// sweep the raw ladder code space.
    pub fn multiply_unsigned(&self, word: u64) -> Result<f64, AnalogError> {
        if word >> self.bits != 0 {
            return Err(AnalogError::UnsignedOutOfRange { word, bits: self.bits });
        }
        Ok(self.vref * word as f64 / self.full_scale())
    }
}

/// Per-timestep discrete retention factor for a membrane time constant
/// `tau_m` sampled every `dt`: the exact solution of the homogeneous leak,
/// `exp(-dt / tau_m)`.
pub fn derive_lambda(tau_m: f64, dt: f64) -> Result<f64, AnalogError> {
    if tau_m <= 0.0 || dt <= 0.0 {
        return Err(AnalogError::NonPositiveTime { tau_m, dt });
    }
    Ok((-dt / tau_m).exp())
}

/// Leaky integrate-and-fire parameters of one layer's neurons.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    /// Firing threshold in volts.
    pub vth: f64,
    /// Post-fire reset voltage in volts.
    pub vreset: f64,
    /// Per-timestep retention factor in `(0, 1]`.
    pub leak_lambda: f64,
}

impl LifParams {
    /// True when the threshold sits above reset and the retention factor is
    /// in range.
    pub fn is_valid(&self) -> bool {
        self.vth.is_finite()
            && self.vreset.is_finite()
            && self.vth > self.vreset
            && self.leak_lambda > 0.0
            && self.leak_lambda <= 1.0
    }
}

/// Membrane state of one virtual neuron (one capacitor slot).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VirtualNeuronState {
    /// Stored membrane voltage in volts.
    pub v: f64,
    /// Model neuron currently mapped onto this slot, if any.
    pub assigned_neuron: Option<usize>,
}

impl VirtualNeuronState {
    /// Accumulate a synapse contribution. No threshold check happens here;
    /// firing is evaluated only at the timestep barrier.
    pub fn integrate(&mut self, contribution: f64) {
        self.v += contribution;
    }

    /// Discharge the stored voltage by the per-timestep retention factor.
    pub fn leak(&mut self, params: &LifParams) {
        self.v *= params.leak_lambda;
    }

    /// Threshold comparison with reset. A tie fires (`v >= vth`), and a slot
    /// fires at most once per barrier regardless of how far above threshold
    /// it sits.
    pub fn fire_check(&mut self, params: &LifParams) -> bool {
        if self.v >= params.vth {
            self.v = params.vreset;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn unsigned_msb_is_half_vref() {
        let ladder = C2cLadder::default();
        assert_eq!(ladder.multiply_unsigned(0b1000_0000).unwrap(), 0.5);
    }

    #[test]
    fn signed_zero_and_min() {
        let ladder = C2cLadder::default();
        assert_eq!(ladder.multiply_signed(0).unwrap(), 0.0);
        assert_eq!(ladder.multiply_signed(-128).unwrap(), -0.5);
    }

    #[test]
    fn signed_range_is_enforced() {
        let ladder = C2cLadder::default();
        assert_eq!(
            ladder.multiply_signed(128),
            Err(AnalogError::SignedOutOfRange { word: 128, bits: 8 })
        );
        assert_eq!(
            ladder.multiply_signed(-129),
            Err(AnalogError::SignedOutOfRange { word: -129, bits: 8 })
        );
        assert_eq!(
            ladder.multiply_unsigned(256),
            Err(AnalogError::UnsignedOutOfRange { word: 256, bits: 8 })
        );
    }

    #[test]
    fn unsigned_matches_bit_sum_for_all_codes() {
        // The ladder transfer must equal the per-bit summation form exactly
        // over the whole 8-bit code space.
        let ladder = C2cLadder::default();
        for word in 0u64..256 {
            let mut acc = 0.0;
            for bit in 0i32..8 {
                if word >> bit & 1 == 1 {
                    acc += 2f64.powi(bit - 8);
                }
            }
            assert_eq!(ladder.multiply_unsigned(word).unwrap(), ladder.vref * acc);
        }
    }

    #[test]
    fn ladder_is_linear() {
        let a = C2cLadder::new(8, 1.0);
        let b = C2cLadder::new(8, 0.25);
        for w in [-128i64, -57, -1, 0, 1, 19, 127] {
            assert_eq!(
                b.multiply_signed(w).unwrap(),
                0.25 * a.multiply_signed(w).unwrap()
            );
        }
        for (w1, w2) in [(3i64, 4i64), (-20, 5), (60, 67), (-128, 127)] {
            assert_eq!(
                a.multiply_signed(w1).unwrap() + a.multiply_signed(w2).unwrap(),
                a.multiply_signed(w1 + w2).unwrap()
            );
        }
    }

    #[test]
    fn lambda_limits_and_known_points() {
        let tau = 3.7e-3;
        assert!(derive_lambda(tau, 1e-12 * tau).unwrap() >= 1.0 - 1e-11);
        assert!((derive_lambda(tau, tau).unwrap() - (-1f64).exp()).abs() < 1e-12);
        assert!((derive_lambda(2.0, 1.0).unwrap() - (-0.5f64).exp()).abs() < 1e-12);
        assert!(derive_lambda(0.0, 1.0).is_err());
        assert!(derive_lambda(1.0, -1.0).is_err());
    }

    #[test]
    fn lambda_monotonicity() {
        let l1 = derive_lambda(1.0, 0.1).unwrap();
        let l2 = derive_lambda(1.0, 0.2).unwrap();
        let l3 = derive_lambda(2.0, 0.2).unwrap();
        assert!(l2 < l1);
        assert!(l3 > l2);
    }

    #[test]
    fn integrate_adds() {
        let mut s = VirtualNeuronState { v: 0.2, assigned_neuron: None };
        s.integrate(0.3);
        assert_eq!(s.v, 0.5);
        s.integrate(0.0);
        assert_eq!(s.v, 0.5);
    }

    #[test]
    fn integrate_order_independent_within_tolerance() {
        let mut rng = Rng::new(11);
        let contributions: Vec<f64> = (0..64).map(|_| rng.range_f64(-0.5, 0.5)).collect();
        let total: f64 = contributions.iter().sum();

        let mut fwd = VirtualNeuronState::default();
        for &c in &contributions {
            fwd.integrate(c);
        }
        let mut rev = VirtualNeuronState::default();
        for &c in contributions.iter().rev() {
            rev.integrate(c);
        }
        let mut once = VirtualNeuronState::default();
        once.integrate(total);

        assert!((fwd.v - once.v).abs() < 1e-12);
        assert!((rev.v - once.v).abs() < 1e-12);
    }

    #[test]
    fn leak_examples_and_power_law() {
        let unit = LifParams { vth: 1.0, vreset: 0.0, leak_lambda: 1.0 };
        let mut s = VirtualNeuronState { v: 0.8, assigned_neuron: None };
        s.leak(&unit);
        assert_eq!(s.v, 0.8);

        let half = LifParams { vth: 1.0, vreset: 0.0, leak_lambda: 0.5 };
        s.leak(&half);
        assert_eq!(s.v, 0.4);

        let p = LifParams { vth: 1.0, vreset: 0.0, leak_lambda: 0.93 };
        let mut iter = VirtualNeuronState { v: 0.71, assigned_neuron: None };
        for _ in 0..17 {
            iter.leak(&p);
        }
        assert!((iter.v - 0.71 * 0.93f64.powi(17)).abs() < 1e-12);
    }

    #[test]
    fn fire_check_semantics() {
        let p = LifParams { vth: 1.0, vreset: 0.25, leak_lambda: 1.0 };

        // Tie fires.
        let mut s = VirtualNeuronState { v: 1.0, assigned_neuron: None };
        assert!(s.fire_check(&p));
        assert_eq!(s.v, 0.25);

        // Just under does not.
        let mut s = VirtualNeuronState { v: 0.999, assigned_neuron: None };
        assert!(!s.fire_check(&p));
        assert_eq!(s.v, 0.999);

        // Far above threshold fires exactly once per barrier.
        let zero_reset = LifParams { vth: 1.0, vreset: 0.0, leak_lambda: 1.0 };
        let mut s = VirtualNeuronState { v: 2.5, assigned_neuron: None };
        assert!(s.fire_check(&zero_reset));
        assert_eq!(s.v, 0.0);
        assert!(!s.fire_check(&zero_reset));
    }

    #[test]
    fn constant_input_matches_geometric_closed_form() {
        let mut rng = Rng::new(5);
        for _ in 0..20 {
            let lambda = rng.range_f64(0.2, 0.999);
            let input = rng.range_f64(-0.1, 0.1);
            let p = LifParams { vth: 1e9, vreset: 0.0, leak_lambda: lambda };
            let steps = 100;

            let mut s = VirtualNeuronState::default();
            for _ in 0..steps {
                s.leak(&p);
                s.integrate(input);
            }
            let closed =
                input * (1.0 - lambda.powi(steps)) / (1.0 - lambda);
            assert!(
                (s.v - closed).abs() < 1e-9,
                "lambda={lambda} input={input}: {} vs {closed}",
                s.v
            );
        }
    }
}
