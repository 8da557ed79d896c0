//! Batched dual-valued evaluation of a [`NetworkModel`] and its
//! vector–Jacobian product.
//!
//! A batch of `n` times is carried through the network as a stacked matrix
//! of `2n` rows: the first `n` rows hold activations, the last `n` rows hold
//! their derivatives with respect to `t` (the tangent). Every linear layer
//! acts on both halves with one matrix product; the bias only touches the
//! value half. Through `h = tanh(a)` the tangent becomes
//! `dh = (1 - h²) da`.
//!
//! The reverse sweep differentiates this whole dual computation, so
//! gradients of the tangent outputs (`dT/dt`, `dH/dt`) with respect to the
//! weights come out alongside the gradients of the values. For `h = tanh(a)`
//! and `dh = (1 - h²) da`, with incoming adjoints `ḡh`, `ḡdh`:
//!
//! ```text
//! ḡda = (1 - h²) ḡdh
//! ḡa  = (1 - h²) (ḡh - 2 h da ḡdh)
//! ```
//!
//! Large batches are split into fixed-size chunks. Per-chunk gradients are
//! summed in chunk order, so results do not depend on the thread count.

use super::network::{Activation, NetworkModel};
use crate::parallel;

/// Points per chunk.
pub(crate) const CHUNK: usize = 256;

/// `C = alpha * A·B + beta * C` on strided row/column views.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() > (m - 1) * rsa + (k.max(1) - 1) * csa || k == 0);
    debug_assert!(b.len() > (k.max(1) - 1) * rsb + (n - 1) * csb || k == 0);
    debug_assert!(c.len() > (m - 1) * rsc + (n - 1));
    // SAFETY: the debug assertions above spell out the extents; every caller
    // passes buffers sized exactly rows × cols for the given strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Physical-unit network outputs for a batch. Derivative vectors are empty
/// when the batch was evaluated without tangents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchOutputs {
    pub temperature: Vec<f64>,
    pub humidity: Vec<f64>,
    pub d_temperature: Vec<f64>,
    pub d_humidity: Vec<f64>,
}

impl BatchOutputs {
    fn extend(&mut self, other: BatchOutputs) {
        self.temperature.extend(other.temperature);
        self.humidity.extend(other.humidity);
        self.d_temperature.extend(other.d_temperature);
        self.d_humidity.extend(other.d_humidity);
    }

    pub fn all_finite(&self) -> bool {
        self.temperature
            .iter()
            .chain(&self.humidity)
            .chain(&self.d_temperature)
            .chain(&self.d_humidity)
            .all(|v| v.is_finite())
    }
}

/// Output adjoints for one batch; `None` means zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct OutputAdjoints<'a> {
    pub temperature: Option<&'a [f64]>,
    pub humidity: Option<&'a [f64]>,
    pub d_temperature: Option<&'a [f64]>,
    pub d_humidity: Option<&'a [f64]>,
}

impl<'a> OutputAdjoints<'a> {
    fn slice(&self, range: std::ops::Range<usize>) -> OutputAdjoints<'a> {
        let cut = |s: Option<&'a [f64]>| s.map(|s| &s[range.clone()]);
        OutputAdjoints {
            temperature: cut(self.temperature),
            humidity: cut(self.humidity),
            d_temperature: cut(self.d_temperature),
            d_humidity: cut(self.d_humidity),
        }
    }

    fn is_zero(&self) -> bool {
        self.temperature.is_none()
            && self.humidity.is_none()
            && self.d_temperature.is_none()
            && self.d_humidity.is_none()
    }
}

/// Everything the reverse sweep needs from one forward pass over a chunk.
#[derive(Debug, Clone)]
pub(crate) struct Recording {
    n: usize,
    tangent: bool,
    /// Input to each layer, stacked rows × widths[l].
    inputs: Vec<Vec<f64>>,
    /// Pre-activation tangent `da` of each hidden layer (n × width).
    pre_tangent: Vec<Vec<f64>>,
    /// Raw network output before output scaling, rows × 2.
    raw: Vec<f64>,
    scale: [f64; 2],
    center: [f64; 2],
}

impl Recording {
    pub(crate) fn forward(net: &NetworkModel, times: &[f64], tangent: bool) -> Recording {
        let n = times.len();
        let rows = if tangent { 2 * n } else { n };
        let s = net.input_scale;
        let mut z = Vec::with_capacity(rows);
        z.extend(times.iter().map(|&t| s.scale * t + s.shift));
        if tangent {
            z.extend(std::iter::repeat_n(s.scale, n));
        }
        let layers = net.layer_count();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre_tangent = Vec::with_capacity(layers - 1);
        inputs.push(z);
        for l in 0..layers {
            let (w_in, w_out) = (net.widths[l], net.widths[l + 1]);
            let mut a = vec![0.0; rows * w_out];
            gemm(
                rows,
                w_in,
                w_out,
                &inputs[l],
                (w_in, 1),
                net.weights(l),
                (1, w_in),
                0.0,
                &mut a,
                w_out,
            );
            let bias = net.biases(l);
            for row in a[..n * w_out].chunks_exact_mut(w_out) {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            if l + 1 == layers {
                let o = net.output_scale;
                return Recording {
                    n,
                    tangent,
                    inputs,
                    pre_tangent,
                    raw: a,
                    scale: o.amplitude,
                    center: o.center,
                };
            }
            if net.activation == Activation::Tanh {
                let (top, bottom) = a.split_at_mut(n * w_out);
                super::activation::tanh_in_place(top);
                if tangent {
                    pre_tangent.push(bottom.to_vec());
                    for (dv, h) in bottom.iter_mut().zip(top.iter()) {
                        *dv *= 1.0 - h * h;
                    }
                }
            }
            inputs.push(a);
        }
        unreachable!("network has at least one layer")
    }

    pub(crate) fn outputs(&self) -> BatchOutputs {
        let n = self.n;
        let [at, ah] = self.scale;
        let [ct, ch] = self.center;
        let top = &self.raw[..2 * n];
        let mut out = BatchOutputs {
            temperature: top.chunks_exact(2).map(|o| ct + at * o[0]).collect(),
            humidity: top.chunks_exact(2).map(|o| ch + ah * o[1]).collect(),
            ..Default::default()
        };
        if self.tangent {
            let bottom = &self.raw[2 * n..];
            out.d_temperature = bottom.chunks_exact(2).map(|o| at * o[0]).collect();
            out.d_humidity = bottom.chunks_exact(2).map(|o| ah * o[1]).collect();
        }
        out
    }

    /// Accumulates `∂(Σ adjoint · output)/∂θ` into `grad`.
    pub(crate) fn backward(&self, net: &NetworkModel, adj: &OutputAdjoints<'_>, grad: &mut [f64]) {
        let n = self.n;
        let rows = if self.tangent { 2 * n } else { n };
        let [at, ah] = self.scale;
        let mut g = vec![0.0; rows * 2];
        let put = |g: &mut [f64], row0: usize, col: usize, src: Option<&[f64]>, k: f64| {
            if let Some(src) = src {
                for (i, v) in src.iter().enumerate() {
                    g[(row0 + i) * 2 + col] = k * v;
                }
            }
        };
        put(&mut g, 0, 0, adj.temperature, at);
        put(&mut g, 0, 1, adj.humidity, ah);
        if self.tangent {
            put(&mut g, n, 0, adj.d_temperature, at);
            put(&mut g, n, 1, adj.d_humidity, ah);
        }

        for l in (0..net.layer_count()).rev() {
            let (w_in, w_out) = (net.widths[l], net.widths[l + 1]);
            let (w_off, b_off) = net.layer_offsets(l);
            let z = &self.inputs[l];
            // ∂W += gᵀ z over all stacked rows.
            gemm(
                w_out,
                rows,
                w_in,
                &g,
                (1, w_out),
                z,
                (w_in, 1),
                1.0,
                &mut grad[w_off..b_off],
                w_in,
            );
            let gb = &mut grad[b_off..b_off + w_out];
            for row in g[..n * w_out].chunks_exact(w_out) {
                for (acc, v) in gb.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            if l == 0 {
                break;
            }
            let mut gz = vec![0.0; rows * w_in];
            gemm(
                rows,
                w_out,
                w_in,
                &g,
                (w_out, 1),
                net.weights(l),
                (w_in, 1),
                0.0,
                &mut gz,
                w_in,
            );
            if net.activation == Activation::Tanh {
                let h = &z[..n * w_in];
                let (g_top, g_bottom) = gz.split_at_mut(n * w_in);
                if self.tangent {
                    let da = &self.pre_tangent[l - 1];
                    for i in 0..n * w_in {
                        let s = 1.0 - h[i] * h[i];
                        let gdh = g_bottom[i];
                        g_top[i] = s * (g_top[i] - 2.0 * h[i] * da[i] * gdh);
                        g_bottom[i] = s * gdh;
                    }
                } else {
                    for i in 0..n * w_in {
                        g_top[i] *= 1.0 - h[i] * h[i];
                    }
                }
            }
            g = gz;
        }
    }
}

/// A forward pass over an arbitrary number of points, chunked.
#[derive(Debug, Clone)]
pub(crate) struct BatchRecording {
    chunks: Vec<Recording>,
}

impl BatchRecording {
    pub(crate) fn forward(net: &NetworkModel, times: &[f64], tangent: bool) -> BatchRecording {
        let chunks = parallel::map_chunks(times, CHUNK, |c| Recording::forward(net, c, tangent));
        BatchRecording { chunks }
    }

    pub(crate) fn outputs(&self) -> BatchOutputs {
        let mut out = BatchOutputs::default();
        for c in &self.chunks {
            out.extend(c.outputs());
        }
        out
    }

    /// Gradient contribution of this batch, accumulated into `grad`.
    pub(crate) fn backward(&self, net: &NetworkModel, adj: &OutputAdjoints<'_>, grad: &mut [f64]) {
        if adj.is_zero() {
            return;
        }
        let mut offsets = Vec::with_capacity(self.chunks.len());
        let mut start = 0;
        for c in &self.chunks {
            offsets.push((c, start..start + c.n));
            start += c.n;
        }
        let len = grad.len();
        let partials = parallel::map(&offsets, |(c, range)| {
            let mut g = vec![0.0; len];
            c.backward(net, &adj.slice(range.clone()), &mut g);
            g
        });
        for p in partials {
            for (acc, v) in grad.iter_mut().zip(&p) {
                *acc += v;
            }
        }
    }
}

/// Forward evaluation without recording for backward use.
pub fn evaluate(net: &NetworkModel, times: &[f64], tangent: bool) -> BatchOutputs {
    let parts = parallel::map_chunks(times, CHUNK, |c| Recording::forward(net, c, tangent).outputs());
    let mut out = BatchOutputs::default();
    for p in parts {
        out.extend(p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::network::init_network;

    #[test]
    fn batch_matches_pointwise_forward() {
        let net = init_network(2, 8, 3).unwrap();
        let times: Vec<f64> = (0..600).map(|i| i as f64 * 0.12).collect();
        let out = evaluate(&net, &times, true);
        for (i, &t) in times.iter().enumerate().step_by(37) {
            let o = net.forward(t).unwrap();
            assert!((o.value.temperature - out.temperature[i]).abs() < 1e-12);
            assert!((o.value.humidity - out.humidity[i]).abs() < 1e-12);
            assert!((o.time_derivative.d_temperature - out.d_temperature[i]).abs() < 1e-12);
            assert!((o.time_derivative.d_humidity - out.d_humidity[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn values_do_not_depend_on_tangent() {
        let net = init_network(3, 5, 9).unwrap();
        let times = [0.0, 1.5, 71.0];
        let a = evaluate(&net, &times, true);
        let b = evaluate(&net, &times, false);
        assert_eq!(a.temperature, b.temperature);
        assert_eq!(a.humidity, b.humidity);
        assert!(b.d_temperature.is_empty());
    }
}
