//! Fully-connected network `t ↦ (T, H)` with affine input/output scaling.
//!
//! Trainable variables live in one flat vector. For each layer in order the
//! weight matrix is stored row-major (`outputs × inputs`) followed by the bias
//! vector. This is the canonical θ ordering used by every gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::batch::{self, Recording};
use crate::error::{Error, Result};
use crate::model::{Rate, State};
use crate::synthetic::rng_stream;

/// RNG stream reserved for weight initialisation.
const STREAM_INIT: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// Linear hidden units; used to check the chain rule in closed form.
    Identity,
}

/// `z = scale * t + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputScale {
    pub scale: f64,
    pub shift: f64,
}

impl InputScale {
    /// Maps `[start, end]` onto `[-1, 1]`.
    pub fn for_horizon(start: f64, end: f64) -> Self {
        let scale = 2.0 / (end - start);
        Self {
            scale,
            shift: -1.0 - scale * start,
        }
    }
}

/// Physical output `center + amplitude * o` per channel (T, H).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputScale {
    pub center: [f64; 2],
    pub amplitude: [f64; 2],
}

impl Default for OutputScale {
    fn default() -> Self {
        Self {
            center: [22.0, 70.0],
            amplitude: [10.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    /// Layer widths, input first: `[1, w, ..., w, 2]`.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub input_scale: InputScale,
    pub output_scale: OutputScale,
    pub params: Vec<f64>,
}

/// Network value and its exact time derivative at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkOutput {
    pub value: State,
    pub time_derivative: Rate,
}

pub(crate) fn param_count_for(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl NetworkModel {
    /// Zero-initialised network with the given widths.
    pub fn zeros(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths[0] != 1 || *widths.last().unwrap() != 2 {
            return Err(Error::validation(
                "network widths",
                format!("expected [1, ..., 2], got {widths:?}"),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::validation("network widths", "zero-width layer"));
        }
        let n = param_count_for(&widths);
        Ok(Self {
            widths,
            activation,
            input_scale: InputScale::for_horizon(0.0, 72.0),
            output_scale: OutputScale::default(),
            params: vec![0.0; n],
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    /// Offsets of layer `l`'s weights and biases in the flat vector.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let start = param_count_for(&self.widths[..=l]);
        (start, start + self.widths[l] * self.widths[l + 1])
    }

    pub fn weights(&self, l: usize) -> &[f64] {
        let (w, b) = self.layer_offsets(l);
        &self.params[w..b]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        let (_, b) = self.layer_offsets(l);
        &self.params[b..b + self.widths[l + 1]]
    }

    pub fn validate(&self) -> Result<()> {
        let expected = param_count_for(&self.widths);
        if self.params.len() != expected {
            return Err(Error::validation(
                "network params",
                format!("expected {expected} values, found {}", self.params.len()),
            ));
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("network params", "non-finite weight"));
        }
        Ok(())
    }

    /// Evaluates the network and its time derivative at `t`.
    pub fn forward(&self, t: f64) -> Result<NetworkOutput> {
        if !t.is_finite() {
            return Err(Error::validation("t", "must be finite"));
        }
        let rec = Recording::forward(self, &[t], true);
        let out = rec.outputs();
        let o = NetworkOutput {
            value: State::new(out.temperature[0], out.humidity[0]),
            time_derivative: Rate {
                d_temperature: out.d_temperature[0],
                d_humidity: out.d_humidity[0],
            },
        };
        if !(o.value.is_finite()
            && o.time_derivative.d_temperature.is_finite()
            && o.time_derivative.d_humidity.is_finite())
        {
            return Err(Error::Evaluation(format!("network output at t = {t}")));
        }
        Ok(o)
    }

    /// Values only, at many times.
    pub fn predict(&self, times: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = batch::evaluate(self, times, false);
        if out
            .temperature
            .iter()
            .chain(&out.humidity)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Evaluation("network prediction".into()));
        }
        Ok((out.temperature, out.humidity))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: NetworkModel = serde_json::from_str(text)?;
        net.validate()?;
        Ok(net)
    }
}

/// `hidden_layers` tanh layers of `hidden_width` units. Weights are uniform
/// in `±sqrt(6 / (fan_in + fan_out))`, biases start at zero.
pub fn init_network(hidden_layers: usize, hidden_width: usize, seed: u64) -> Result<NetworkModel> {
    if hidden_layers == 0 {
        return Err(Error::validation("hidden_layers", "must be >= 1"));
    }
    if hidden_width == 0 {
        return Err(Error::validation("hidden_width", "must be >= 1"));
    }
    let mut widths = vec![1];
    widths.extend(std::iter::repeat_n(hidden_width, hidden_layers));
    widths.push(2);
    let mut net = NetworkModel::zeros(widths, Activation::Tanh)?;
    let mut rng = rng_stream(seed, STREAM_INIT);
    for l in 0..net.layer_count() {
        let (fan_in, fan_out) = (net.widths[l], net.widths[l + 1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let (w0, w1) = net.layer_offsets(l);
        for w in &mut net.params[w0..w1] {
            *w = rng.random_range(-bound..bound);
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture_param_count() {
        let net = init_network(3, 64, 0).unwrap();
        assert_eq!(net.param_count(), 64 + 64 + 2 * (64 * 64 + 64) + (2 * 64 + 2));
        assert_eq!(net.param_count(), 8578);
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_network(2, 8, 42).unwrap();
        let b = init_network(2, 8, 42).unwrap();
        let c = init_network(2, 8, 43).unwrap();
        assert!(a
            .params
            .iter()
            .zip(&b.params)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn init_respects_bounds_and_zero_bias() {
        let net = init_network(2, 16, 1).unwrap();
        for l in 0..net.layer_count() {
            let bound = (6.0 / (net.widths[l] + net.widths[l + 1]) as f64).sqrt();
            assert!(net.weights(l).iter().all(|w| w.abs() <= bound));
            assert!(net.biases(l).iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_hidden_layers_rejected() {
        assert!(init_network(0, 64, 0).is_err());
        assert!(init_network(2, 0, 0).is_err());
    }

    #[test]
    fn input_scale_maps_horizon() {
        let s = InputScale::for_horizon(0.0, 72.0);
        assert_eq!(s.scale * 0.0 + s.shift, -1.0);
        assert_eq!(s.scale * 72.0 + s.shift, 1.0);
        assert_eq!(s.scale * 36.0 + s.shift, 0.0);
    }

    #[test]
    fn zero_network_outputs_center() {
        let net = NetworkModel::zeros(vec![1, 4, 4, 2], Activation::Tanh).unwrap();
        let o = net.forward(13.0).unwrap();
        assert_eq!(o.value, State::new(22.0, 70.0));
        assert_eq!(o.time_derivative.d_temperature, 0.0);
        assert_eq!(o.time_derivative.d_humidity, 0.0);
    }

    #[test]
    fn linear_network_derivative_closed_form() {
        // One identity hidden unit: o = w2 (w1 z + b1) + b2, z = s t + c.
        let mut net = NetworkModel::zeros(vec![1, 1, 2], Activation::Identity).unwrap();
        let (w1, b1) = (0.7, -0.2);
        let (w2, b2) = ([1.3, -0.4], [0.05, 0.1]);
        net.params = vec![w1, b1, w2[0], w2[1], b2[0], b2[1]];
        let s = net.input_scale.scale;
        let o = net.forward(10.0).unwrap();
        assert_eq!(o.time_derivative.d_temperature, 10.0 * (w2[0] * (w1 * s)));
        assert_eq!(o.time_derivative.d_humidity, 20.0 * (w2[1] * (w1 * s)));
    }

    #[test]
    fn non_finite_time_rejected() {
        let net = init_network(1, 4, 0).unwrap();
        assert!(net.forward(f64::NAN).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let mut net = NetworkModel::zeros(vec![1, 2, 2], Activation::Identity).unwrap();
        net.params.iter_mut().for_each(|p| *p = 1e300);
        assert!(matches!(net.forward(50.0), Err(Error::Evaluation(_))));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = init_network(2, 8, 5).unwrap();
        let back = NetworkModel::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back, net);
        assert!(back
            .params
            .iter()
            .zip(&net.params)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn checkpoint_with_wrong_length_rejected() {
        let mut net = init_network(1, 3, 0).unwrap();
        net.params.pop();
        assert!(NetworkModel::from_json(&serde_json::to_string(&net).unwrap()).is_err());
    }
}
