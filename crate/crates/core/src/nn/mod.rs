//! A small two-branch MLP that scores one (candidate, beam) pair at a time.
//!
//! The radar branch sees the normalized candidate state, the beam branch the
//! normalized beam index. Their outputs are concatenated and reduced by the
//! head to a single sigmoid score. Parameters are stored flat so the
//! optimizer and checkpoint code can treat them as one vector.

mod adam;
mod checkpoint;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, read_sidecar, write_checkpoint, write_sidecar, Sidecar};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detect::Candidate;
use crate::rng::stream_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer; `weights` is row-major `n_out × n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(n_in: usize, n_out: usize, activation: Activation) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
            activation,
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.n_in).zip(&self.bias) {
            let z = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            out.push(self.activation.apply(z));
        }
    }
}

/// Hidden widths of the two branches and the head. The head ends with a
/// single sigmoid unit appended after `head`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub radar: Vec<usize>,
    pub beam: Vec<usize>,
    pub head: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            radar: vec![16, 32, 64],
            beam: vec![16, 32, 64],
            head: vec![64, 32, 16],
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.radar.is_empty() || self.beam.is_empty() {
            return Err(Error::Config("both branches need at least one layer".into()));
        }
        if self.radar.iter().chain(&self.beam).chain(&self.head).any(|&w| w == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Scales that map a candidate and beam index into [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub range_max: f64,
    pub angle_span: f64,
    pub vel_max: f64,
    pub n_beams: usize,
}

impl Normalization {
    pub fn validate(&self) -> Result<()> {
        if !(self.range_max > 0.0 && self.angle_span > 0.0 && self.vel_max > 0.0) || self.n_beams == 0 {
            return Err(Error::Config("normalization constants must be positive".into()));
        }
        Ok(())
    }

    /// Covers every candidate in `candidates`: the largest range and speed
    /// (each floored at 1), the full ±90° angle span.
    pub fn fit<'a>(candidates: impl IntoIterator<Item = &'a Candidate>, n_beams: usize) -> Self {
        let (mut r, mut v) = (1.0f64, 1.0f64);
        for c in candidates {
            r = r.max(c.range_m);
            v = v.max(c.velocity_mps.abs());
        }
        Self {
            range_max: r,
            angle_span: 180.0,
            vel_max: v,
            n_beams,
        }
    }

    pub fn inputs(&self, c: &Candidate, beam: usize) -> Result<[f64; 4]> {
        let beam_scale = if self.n_beams > 1 { (self.n_beams - 1) as f64 } else { 1.0 };
        let x = [
            c.range_m / self.range_max,
            (c.angle_deg + self.angle_span / 2.0) / self.angle_span,
            (c.velocity_mps + self.vel_max) / (2.0 * self.vel_max),
            beam as f64 / beam_scale,
        ];
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        Ok(x)
    }
}

/// One training row: normalized inputs and the 0/1 target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example {
    pub x: [f64; 4],
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub radar: Vec<DenseLayer>,
    pub beam: Vec<DenseLayer>,
    pub head: Vec<DenseLayer>,
    pub norm: Normalization,
}

fn chain(n_in: usize, widths: &[usize], act: Activation) -> Vec<DenseLayer> {
    let mut prev = n_in;
    widths
        .iter()
        .map(|&w| {
            let l = DenseLayer::zeros(prev, w, act);
            prev = w;
            l
        })
        .collect()
}

/// Activations of every layer for one example, kept for backpropagation.
struct Trace {
    radar: Vec<Vec<f64>>,
    beam: Vec<Vec<f64>>,
    head: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Zero-weight model with the given shape.
    pub fn zeros(arch: &Architecture, norm: Normalization) -> Result<Self> {
        arch.validate()?;
        norm.validate()?;
        let radar = chain(3, &arch.radar, Activation::Relu);
        let beam = chain(1, &arch.beam, Activation::Relu);
        let concat = arch.radar[arch.radar.len() - 1] + arch.beam[arch.beam.len() - 1];
        let mut head = chain(concat, &arch.head, Activation::Relu);
        let last = arch.head.last().copied().unwrap_or(concat);
        head.push(DenseLayer::zeros(last, 1, Activation::Sigmoid));
        Ok(Self { radar, beam, head, norm })
    }

    /// Uniform He initialization: weights drawn from U(−√(6/fan_in), √(6/fan_in)),
    /// so their variance is 2/fan_in. Biases start at zero.
    pub fn init(arch: &Architecture, norm: Normalization, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch, norm)?;
        let mut rng = stream_rng(seed, crate::rng::stream::INIT);
        for layer in model.layers_mut() {
            let bound = (6.0 / layer.n_in as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    pub fn architecture(&self) -> Architecture {
        let widths = |ls: &[DenseLayer]| ls.iter().map(|l| l.n_out).collect::<Vec<_>>();
        let mut head = widths(&self.head);
        head.pop();
        Architecture {
            radar: widths(&self.radar),
            beam: widths(&self.beam),
            head,
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.radar.iter().chain(&self.beam).chain(&self.head)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.radar.iter_mut().chain(self.beam.iter_mut()).chain(self.head.iter_mut())
    }

    pub fn n_params(&self) -> usize {
        self.layers().map(DenseLayer::n_params).sum()
    }

    /// All parameters, layer by layer (radar, beam, head), weights before bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for l in self.layers() {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.bias);
        }
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        let n = self.n_params();
        if p.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: p.len() });
        }
        let mut off = 0;
        for l in self.layers_mut() {
            let (nw, nb) = (l.weights.len(), l.bias.len());
            l.weights.copy_from_slice(&p[off..off + nw]);
            l.bias.copy_from_slice(&p[off + nw..off + nw + nb]);
            off += nw + nb;
        }
        Ok(())
    }

    fn trace(&self, x: &[f64; 4]) -> Trace {
        let run = |layers: &[DenseLayer], input: &[f64]| {
            let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
            for l in layers {
                let mut out = Vec::with_capacity(l.n_out);
                l.forward(acts.last().map_or(input, |a| a.as_slice()), &mut out);
                acts.push(out);
            }
            acts
        };
        let radar = run(&self.radar, &x[..3]);
        let beam = run(&self.beam, &x[3..]);
        let mut concat = radar[radar.len() - 1].clone();
        concat.extend_from_slice(&beam[beam.len() - 1]);
        let mut head = run(&self.head, &concat);
        head.insert(0, concat);
        Trace { radar, beam, head }
    }

    /// Score of already normalized inputs.
    pub fn forward_inputs(&self, x: &[f64; 4]) -> f64 {
        let t = self.trace(x);
        t.head[t.head.len() - 1][0]
    }

    /// Likelihood that `candidate` is the user given optimal beam `beam`.
    pub fn forward(&self, candidate: &Candidate, beam: usize) -> Result<f64> {
        Ok(self.forward_inputs(&self.norm.inputs(candidate, beam)?))
    }

    /// Mean squared error over `batch` and its gradient in [`Self::parameters`] order.
    pub fn loss_and_grad(&self, batch: &[Example]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut grad = vec![0.0; self.n_params()];
        let offsets = self.layer_offsets();
        let n_radar = self.radar.len();
        let n_beam = self.beam.len();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for ex in batch {
            let t = self.trace(&ex.x);
            let score = t.head[t.head.len() - 1][0];
            let err = score - ex.y;
            loss += err * err;

            // Head, walking back from the output; `t.head[k]` is layer k's input.
            let mut delta = vec![2.0 * err * scale];
            for (k, layer) in self.head.iter().enumerate().rev() {
                let off = offsets[n_radar + n_beam + k];
                delta = backprop_layer(layer, &t.head[k], &t.head[k + 1], &delta, &mut grad[off..]);
            }
            let split = self.radar[n_radar - 1].n_out;
            let (d_radar, d_beam) = delta.split_at(split);

            let mut d = d_radar.to_vec();
            for k in (0..n_radar).rev() {
                let input: &[f64] = if k == 0 { &ex.x[..3] } else { &t.radar[k - 1] };
                d = backprop_layer(&self.radar[k], input, &t.radar[k], &d, &mut grad[offsets[k]..]);
            }
            let mut d = d_beam.to_vec();
            for k in (0..n_beam).rev() {
                let input: &[f64] = if k == 0 { &ex.x[3..] } else { &t.beam[k - 1] };
                d = backprop_layer(&self.beam[k], input, &t.beam[k], &d, &mut grad[offsets[n_radar + k]..]);
            }
        }
        Ok((loss * scale, grad))
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.layers()
            .map(|l| {
                let o = off;
                off += l.n_params();
                o
            })
            .collect()
    }
}

/// Accumulates one layer's parameter gradient into `grad` (laid out as
/// weights then bias) and returns the gradient with respect to its input.
/// `d_out` is the loss gradient with respect to the layer's activations.
fn backprop_layer(layer: &DenseLayer, input: &[f64], output: &[f64], d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
    let n_in = layer.n_in;
    let nw = layer.weights.len();
    let mut d_in = vec![0.0; n_in];
    for o in 0..layer.n_out {
        let dz = d_out[o] * layer.activation.slope(output[o]);
        if dz == 0.0 {
            continue;
        }
        let row = &layer.weights[o * n_in..(o + 1) * n_in];
        let g = &mut grad[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            g[i] += dz * input[i];
            d_in[i] += dz * row[i];
        }
        grad[nw + o] += dz;
    }
    d_in
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn norm() -> Normalization {
        Normalization {
            range_max: 100.0,
            angle_span: 180.0,
            vel_max: 20.0,
            n_beams: 64,
        }
    }

    fn small_arch() -> Architecture {
        Architecture {
            radar: vec![5, 6],
            beam: vec![3, 4],
            head: vec![7, 3],
        }
    }

    #[test]
    fn zero_model_scores_one_half() {
        let m = MlpModel::zeros(&Architecture::default(), norm()).unwrap();
        assert_eq!(m.forward(&Candidate::new(30.0, 10.0, 2.0), 5).unwrap(), 0.5);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn default_shape_has_seven_dense_stages() {
        let m = MlpModel::zeros(&Architecture::default(), norm()).unwrap();
        assert_eq!(m.radar.len(), 3);
        assert_eq!(m.beam.len(), 3);
        assert_eq!(m.head.len(), 4);
        assert_eq!(m.head[0].n_in, 128);
        assert_eq!(m.head[3].n_out, 1);
        assert_eq!(m.architecture(), Architecture::default());
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let m = MlpModel::zeros(&small_arch(), norm()).unwrap();
        assert!(m.forward(&Candidate::new(f64::NAN, 0.0, 0.0), 0).is_err());
    }

    #[test]
    fn forward_is_repeatable() {
        let m = MlpModel::init(&Architecture::default(), norm(), 3).unwrap();
        let c = Candidate::new(42.0, -12.0, 5.5);
        assert_eq!(m.forward(&c, 17).unwrap(), m.forward(&c, 17).unwrap());
    }

    /// Plain nested-loop evaluation of the network, written without the
    /// model's own helpers.
    fn reference_score(m: &MlpModel, x: [f64; 4]) -> f64 {
        fn dense(l: &DenseLayer, v: &[f64]) -> Vec<f64> {
            (0..l.n_out)
                .map(|o| {
                    let mut z = l.bias[o];
                    for i in 0..l.n_in {
                        z += l.weights[o * l.n_in + i] * v[i];
                    }
                    match l.activation {
                        Activation::Relu => if z > 0.0 { z } else { 0.0 },
                        Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
                        Activation::Identity => z,
                    }
                })
                .collect()
        }
        let mut r = x[..3].to_vec();
        for l in &m.radar {
            r = dense(l, &r);
        }
        let mut b = vec![x[3]];
        for l in &m.beam {
            b = dense(l, &b);
        }
        r.extend(b);
        for l in &m.head {
            r = dense(l, &r);
        }
        r[0]
    }

    #[test]
    fn forward_matches_reference_evaluation() {
        for seed in 0..20 {
            let mut m = MlpModel::init(&Architecture::default(), norm(), seed).unwrap();
            let mut rng = stream_rng(seed, 99);
            // Non-zero biases so they are exercised too.
            let mut p = m.parameters();
            for v in &mut p {
                *v += rng.random_range(-0.1..0.1);
            }
            m.set_parameters(&p).unwrap();
            let c = Candidate::new(rng.random_range(0.0..100.0), rng.random_range(-60.0..60.0), rng.random_range(-20.0..20.0));
            let beam = rng.random_range(0..64);
            let x = m.norm.inputs(&c, beam).unwrap();
            let got = m.forward(&c, beam).unwrap();
            assert!((got - reference_score(&m, x)).abs() < 1e-6);
        }
    }

    #[test]
    fn inputs_are_normalized() {
        let x = norm().inputs(&Candidate::new(50.0, 45.0, -10.0), 63).unwrap();
        assert_eq!(x, [0.5, 0.75, 0.25, 1.0]);
    }

    #[test]
    fn perfect_scores_give_zero_loss_and_gradient() {
        let m = MlpModel::zeros(&small_arch(), norm()).unwrap();
        // Every score is 0.5, so a target of 0.5 is a perfect fit.
        let batch = [Example { x: [0.1, 0.2, 0.3, 0.4], y: 0.5 }];
        let (loss, grad) = m.loss_and_grad(&batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn half_score_against_one_costs_a_quarter() {
        let m = MlpModel::zeros(&small_arch(), norm()).unwrap();
        let (loss, _) = m.loss_and_grad(&[Example { x: [0.5; 4], y: 1.0 }]).unwrap();
        assert_eq!(loss, 0.25);
        assert!(m.loss_and_grad(&[]).is_err());
    }

    fn random_batch(seed: u64, n: usize) -> Vec<Example> {
        let mut rng = stream_rng(seed, 7);
        (0..n)
            .map(|_| Example {
                x: [rng.random(), rng.random(), rng.random(), rng.random()],
                y: if rng.random::<bool>() { 1.0 } else { 0.0 },
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = MlpModel::init(&small_arch(), norm(), 11).unwrap();
        let batch = random_batch(11, 5);
        let (_, grad) = m.loss_and_grad(&batch).unwrap();
        let p0 = m.parameters();
        let h = 1e-4;
        let mut probe = m.clone();
        for k in 0..p0.len() {
            let mut p = p0.clone();
            p[k] += h;
            probe.set_parameters(&p).unwrap();
            let up = probe.loss_and_grad(&batch).unwrap().0;
            p[k] -= 2.0 * h;
            probe.set_parameters(&p).unwrap();
            let down = probe.loss_and_grad(&batch).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            let denom = grad[k].abs().max(fd.abs()).max(1e-7);
            assert!((grad[k] - fd).abs() / denom < 1e-4, "param {k}: {} vs {fd}", grad[k]);
        }
    }

    #[test]
    fn init_is_seeded() {
        let a = MlpModel::init(&Architecture::default(), norm(), 1).unwrap();
        let b = MlpModel::init(&Architecture::default(), norm(), 1).unwrap();
        let c = MlpModel::init(&Architecture::default(), norm(), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.parameters(), c.parameters());
    }

    #[test]
    fn init_variance_is_two_over_fan_in() {
        let m = MlpModel::init(&Architecture::default(), norm(), 5).unwrap();
        // head[0] is 128 → 64: 8192 draws; radar[2] and beam[2] add 2 × 2048.
        for l in m.layers().filter(|l| l.weights.len() >= 2048) {
            let n = l.weights.len() as f64;
            let mean = l.weights.iter().sum::<f64>() / n;
            let var = l.weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let want = 2.0 / l.n_in as f64;
            assert!((var / want - 1.0).abs() < 0.1, "fan_in {}: {var} vs {want}", l.n_in);
        }
    }

    #[test]
    fn parameter_round_trip() {
        let m = MlpModel::init(&small_arch(), norm(), 4).unwrap();
        let mut z = MlpModel::zeros(&small_arch(), norm()).unwrap();
        z.set_parameters(&m.parameters()).unwrap();
        assert_eq!(z, m);
        assert!(z.set_parameters(&[0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn score_lies_in_unit_interval(seed in 0u64..200, r in 0.0f64..300.0, a in -90.0f64..90.0, v in -40.0f64..40.0, b in 0usize..64) {
            let m = MlpModel::init(&Architecture::default(), norm(), seed).unwrap();
            let s = m.forward(&Candidate::new(r, a, v), b).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
