use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of time features fed to the network: the raw `t` plus sin/cos at
/// frequencies `2^k * pi` for `k = 0..4`.
pub const TIME_FEATURES: usize = 9;

const TIME_OCTAVES: usize = 4;

pub fn time_features(t: f64) -> [f64; TIME_FEATURES] {
    let mut out = [0.0; TIME_FEATURES];
    out[0] = t;
    for k in 0..TIME_OCTAVES {
        let w = (1u32 << k) as f64 * PI * t;
        out[1 + 2 * k] = w.sin();
        out[2 + 2 * k] = w.cos();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Shape description of a [`VelocityModel`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchMeta {
    pub action_dim: usize,
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub time_features: usize,
}

impl ArchMeta {
    pub fn in_dim(&self) -> usize {
        self.action_dim + self.time_features + self.obs_dim
    }

    pub fn out_dim(&self) -> usize {
        self.action_dim
    }

    /// `(fan_in, fan_out)` for every dense layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.in_dim());
        widths.extend_from_slice(&self.hidden);
        widths.push(self.out_dim());
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.action_dim == 0 {
            return Err(Error::invalid("action_dim must be >= 1"));
        }
        if self.hidden.is_empty() {
            return Err(Error::invalid("hidden must list at least one layer width"));
        }
        if let Some(pos) = self.hidden.iter().position(|&w| w == 0) {
            return Err(Error::invalid(format!("hidden[{pos}] must be >= 1")));
        }
        if self.time_features != TIME_FEATURES {
            return Err(Error::invalid(format!(
                "time_features must be {TIME_FEATURES}, got {}",
                self.time_features
            )));
        }
        Ok(())
    }
}

/// Location of one dense layer inside the flat parameter vector.
///
/// Weights are stored row-major as `fan_out x fan_in`, followed by the bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerSlot {
    pub fn weight_len(&self) -> usize {
        self.fan_in * self.fan_out
    }
}

fn layout(arch: &ArchMeta) -> Vec<LayerSlot> {
    let mut offset = 0;
    arch.layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let slot = LayerSlot {
                fan_in,
                fan_out,
                weight_offset: offset,
                bias_offset: offset + fan_in * fan_out,
            };
            offset += fan_in * fan_out + fan_out;
            slot
        })
        .collect()
}

/// Dense feed-forward velocity field `v(a, t, o)`.
///
/// Input is `[a, time_features(t), o]`; hidden layers use `arch.activation`
/// and the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    arch: ArchMeta,
    slots: Vec<LayerSlot>,
    params: Vec<f64>,
}

/// Activations of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub(crate) struct Trace {
    /// `acts[0]` is the input, `acts[l]` the output of layer `l`.
    pub acts: Vec<Vec<f64>>,
}

impl VelocityModel {
    /// Fan-in scaled uniform init, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases.
    pub fn init(action_dim: usize, obs_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let arch = ArchMeta {
            action_dim,
            obs_dim,
            hidden: hidden.to_vec(),
            activation: Activation::Tanh,
            time_features: TIME_FEATURES,
        };
        arch.validate()?;
        let slots = layout(&arch);
        let mut params = vec![0.0; arch.num_params()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for slot in &slots {
            let bound = (1.0 / slot.fan_in as f64).sqrt();
            for w in &mut params[slot.weight_offset..slot.weight_offset + slot.weight_len()] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(Self {
            arch,
            slots,
            params,
        })
    }

    pub fn from_params(arch: ArchMeta, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.num_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                arch.num_params(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        let slots = layout(&arch);
        Ok(Self {
            arch,
            slots,
            params,
        })
    }

    pub fn arch(&self) -> &ArchMeta {
        &self.arch
    }

    pub fn action_dim(&self) -> usize {
        self.arch.action_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.arch.obs_dim
    }

    pub fn slots(&self) -> &[LayerSlot] {
        &self.slots
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn layer_weights(&self, layer: usize) -> &[f64] {
        let s = &self.slots[layer];
        &self.params[s.weight_offset..s.weight_offset + s.weight_len()]
    }

    pub fn layer_bias(&self, layer: usize) -> &[f64] {
        let s = &self.slots[layer];
        &self.params[s.bias_offset..s.bias_offset + s.fan_out]
    }

    pub fn layer_bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.slots[layer];
        &mut self.params[s.bias_offset..s.bias_offset + s.fan_out]
    }

    pub fn layer_weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.slots[layer];
        &mut self.params[s.weight_offset..s.weight_offset + s.weight_len()]
    }

    /// Evaluates `v(a, t, o)` after validating shapes and finiteness.
    pub fn eval(&self, a: &[f64], t: f64, o: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.arch.action_dim {
            return Err(Error::invalid(format!(
                "action has {} entries, model expects {}",
                a.len(),
                self.arch.action_dim
            )));
        }
        if o.len() != self.arch.obs_dim {
            return Err(Error::invalid(format!(
                "observation has {} entries, model expects {}",
                o.len(),
                self.arch.obs_dim
            )));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("t = {t} is outside [0, 1]")));
        }
        if a.iter().chain(o).any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite model input"));
        }
        let mut out = vec![0.0; self.arch.action_dim];
        self.eval_into(a, t, o, &mut out);
        Ok(out)
    }

    /// Unchecked forward pass for hot loops; shapes are debug-asserted.
    pub fn eval_into(&self, a: &[f64], t: f64, o: &[f64], out: &mut [f64]) {
        debug_assert_eq!(a.len(), self.arch.action_dim);
        debug_assert_eq!(o.len(), self.arch.obs_dim);
        debug_assert_eq!(out.len(), self.arch.action_dim);
        let mut cur = self.input_vector(a, t, o);
        let mut next = Vec::new();
        let last = self.slots.len() - 1;
        for (l, slot) in self.slots.iter().enumerate() {
            next.clear();
            next.resize(slot.fan_out, 0.0);
            self.dense(slot, &cur, &mut next);
            if l < last {
                for z in next.iter_mut() {
                    *z = self.arch.activation.apply(*z);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        out.copy_from_slice(&cur);
    }

    pub(crate) fn input_vector(&self, a: &[f64], t: f64, o: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.arch.in_dim());
        x.extend_from_slice(a);
        x.extend_from_slice(&time_features(t));
        x.extend_from_slice(o);
        x
    }

    #[inline]
    fn dense(&self, slot: &LayerSlot, x: &[f64], out: &mut [f64]) {
        let w = &self.params[slot.weight_offset..slot.weight_offset + slot.weight_len()];
        let b = &self.params[slot.bias_offset..slot.bias_offset + slot.fan_out];
        for (j, (row, bj)) in w.chunks_exact(slot.fan_in).zip(b).enumerate() {
            out[j] = bj + dot(row, x);
        }
    }

    pub(crate) fn forward_trace(&self, a: &[f64], t: f64, o: &[f64], trace: &mut Trace) {
        let n_layers = self.slots.len();
        trace.acts.resize_with(n_layers + 1, Vec::new);
        trace.acts[0] = self.input_vector(a, t, o);
        for (l, slot) in self.slots.iter().enumerate() {
            let (prev, rest) = trace.acts.split_at_mut(l + 1);
            let out = &mut rest[0];
            out.clear();
            out.resize(slot.fan_out, 0.0);
            self.dense(slot, &prev[l], out);
            if l + 1 < n_layers {
                for z in out.iter_mut() {
                    *z = self.arch.activation.apply(*z);
                }
            }
        }
    }

    /// Accumulates `d(out . upstream)/d(params)` into `grad` for the pass in `trace`.
    pub(crate) fn backward(&self, trace: &Trace, upstream: &[f64], grad: &mut [f64]) {
        let n_layers = self.slots.len();
        let mut delta = upstream.to_vec();
        let mut prev_delta = Vec::new();
        for l in (0..n_layers).rev() {
            let slot = &self.slots[l];
            let input = &trace.acts[l];
            let w = &self.params[slot.weight_offset..slot.weight_offset + slot.weight_len()];
            {
                let (gw, gb) = grad[slot.weight_offset..slot.bias_offset + slot.fan_out]
                    .split_at_mut(slot.weight_len());
                for (j, &dj) in delta.iter().enumerate() {
                    gb[j] += dj;
                    if dj != 0.0 {
                        let row = &mut gw[j * slot.fan_in..(j + 1) * slot.fan_in];
                        for (g, &x) in row.iter_mut().zip(input) {
                            *g += dj * x;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            prev_delta.clear();
            prev_delta.resize(slot.fan_in, 0.0);
            for (row, &dj) in w.chunks_exact(slot.fan_in).zip(&delta) {
                if dj != 0.0 {
                    for (p, &wji) in prev_delta.iter_mut().zip(row) {
                        *p += wji * dj;
                    }
                }
            }
            for (p, &y) in prev_delta.iter_mut().zip(input) {
                *p *= self.arch.activation.grad_from_output(y);
            }
            std::mem::swap(&mut delta, &mut prev_delta);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorise without reassociating a single chain.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_width_includes_time_features() {
        let m = VelocityModel::init(2, 2, &[128, 128], 7).unwrap();
        assert_eq!(m.arch().in_dim(), 2 + TIME_FEATURES + 2);
        assert_eq!(m.slots()[0].fan_in, 13);
        assert_eq!(m.slots().last().unwrap().fan_out, 2);
    }

    #[test]
    fn init_is_deterministic() {
        let a = VelocityModel::init(1, 0, &[4], 0).unwrap();
        let b = VelocityModel::init(1, 0, &[4], 0).unwrap();
        let bits = |m: &VelocityModel| m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = VelocityModel::init(1, 0, &[4], 1).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(matches!(
            VelocityModel::init(0, 2, &[4], 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(VelocityModel::init(1, 0, &[], 0).is_err());
        assert!(VelocityModel::init(1, 0, &[4, 0], 0).is_err());
    }

    #[test]
    fn init_respects_fan_in_bounds_and_zero_bias() {
        let m = VelocityModel::init(3, 4, &[16, 8], 11).unwrap();
        for (l, slot) in m.slots().iter().enumerate() {
            let bound = (1.0 / slot.fan_in as f64).sqrt();
            assert!(m.layer_weights(l).iter().all(|w| w.abs() <= bound));
            assert!(m.layer_bias(l).iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_final_layer_gives_zero_velocity() {
        let mut m = VelocityModel::init(2, 3, &[8, 8], 5).unwrap();
        let last = m.slots().len() - 1;
        m.layer_weights_mut(last).fill(0.0);
        m.layer_bias_mut(last).fill(0.0);
        for t in [0.0, 0.3, 1.0] {
            let v = m.eval(&[1.5, -2.0], t, &[0.1, 0.2, 0.3]).unwrap();
            assert_eq!(v, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn eval_is_pure() {
        let m = VelocityModel::init(2, 1, &[8], 5).unwrap();
        let a = m.eval(&[0.3, 0.4], 0.7, &[1.0]).unwrap();
        let b = m.eval(&[0.3, 0.4], 0.7, &[1.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eval_rejects_bad_inputs() {
        let m = VelocityModel::init(2, 1, &[8], 5).unwrap();
        assert!(m.eval(&[0.3], 0.5, &[1.0]).is_err());
        assert!(m.eval(&[0.3, 0.1], 0.5, &[]).is_err());
        assert!(m.eval(&[f64::NAN, 0.1], 0.5, &[1.0]).is_err());
        assert!(m.eval(&[0.3, 0.1], 1.5, &[1.0]).is_err());
    }

    #[test]
    fn time_features_layout() {
        let f = time_features(0.25);
        assert_eq!(f[0], 0.25);
        assert!((f[1] - (PI / 4.0).sin()).abs() < 1e-15);
        assert!((f[2] - (PI / 4.0).cos()).abs() < 1e-15);
        assert!((f[7] - (2.0 * PI).sin()).abs() < 1e-15);
        assert!((f[8] - (2.0 * PI).cos()).abs() < 1e-15);
    }
}
