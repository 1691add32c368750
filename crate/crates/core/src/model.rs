//! A small 1D convolutional classifier: layer specs, He initialization,
//! forward pass, analytic backpropagation, Adam and the training loop.
//!
//! Everything runs in `f64` with a fixed summation order so that training
//! is reproducible bit for bit.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::{HogFeatures, WtFeatures};
use crate::dataio::{write_bytes, ClassLabel};
use crate::spectral::{Spectrum, ECG_BINS, FUNDUS_BINS};
use crate::transport::EmdRefs;
use crate::par::map_indices;
use crate::{rng, Error, Result};

/// Length of every assembled feature vector.
pub const INPUT_LEN: usize = 196;
pub const NUM_CLASSES: usize = 4;
pub const MODEL_VERSION: &str = "1";
const PROB_FLOOR: f64 = 1e-12;
const SHUFFLE_STREAM: u64 = 0x5348_5546;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    /// Stride 1, zero "same" padding; `kernel` must be odd.
    Conv1d { out_channels: usize, kernel: usize },
    Relu,
    /// Non-overlapping window of 2; an odd trailing sample is dropped.
    Maxpool,
    Flatten,
    Dense { out_dim: usize },
    Softmax,
}

impl Layer {
    fn has_params(&self) -> bool {
        matches!(self, Layer::Conv1d { .. } | Layer::Dense { .. })
    }
}

/// Activation shape: channels × length.
type Shape = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_len: usize,
    pub layers: Vec<Layer>,
    pub seed: u64,
}

impl NetworkSpec {
    /// conv(8, 5) · relu · pool · conv(16, 5) · relu · pool · flatten ·
    /// dense(64) · relu · dense(4) · softmax
    pub fn default_cnn(seed: u64) -> Self {
        use Layer::*;
        Self {
            input_len: INPUT_LEN,
            layers: vec![
                Conv1d { out_channels: 8, kernel: 5 },
                Relu,
                Maxpool,
                Conv1d { out_channels: 16, kernel: 5 },
                Relu,
                Maxpool,
                Flatten,
                Dense { out_dim: 64 },
                Relu,
                Dense { out_dim: NUM_CLASSES },
                Softmax,
            ],
            seed,
        }
    }

    /// Dense 4 → 16 → 16 → 4 over the four EMD values only.
    pub fn emd_mlp(seed: u64) -> Self {
        use Layer::*;
        Self {
            input_len: 4,
            layers: vec![
                Dense { out_dim: 16 },
                Relu,
                Dense { out_dim: 16 },
                Relu,
                Dense { out_dim: NUM_CLASSES },
                Softmax,
            ],
            seed,
        }
    }

    /// Input shape of every layer followed by the output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.input_len == 0 {
            return Err(Error::Spec("input length is zero".into()));
        }
        let softmaxes = self.layers.iter().filter(|l| **l == Layer::Softmax).count();
        if softmaxes != 1 || self.layers.last() != Some(&Layer::Softmax) {
            return Err(Error::Spec("exactly one softmax is required, as the last layer".into()));
        }
        let n = self.layers.len();
        if n < 2 || self.layers[n - 2] != (Layer::Dense { out_dim: NUM_CLASSES }) {
            return Err(Error::Spec("softmax must follow dense(4)".into()));
        }
        let mut shapes = vec![(1, self.input_len)];
        let mut cur = (1, self.input_len);
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match *layer {
                Layer::Conv1d { out_channels, kernel } => {
                    if out_channels == 0 || kernel == 0 || kernel % 2 == 0 {
                        return Err(Error::Spec(format!("layer {i}: conv needs channels ≥ 1 and an odd kernel")));
                    }
                    (out_channels, cur.1)
                }
                Layer::Relu | Layer::Softmax => cur,
                Layer::Maxpool => {
                    if cur.1 < 2 {
                        return Err(Error::Spec(format!("layer {i}: cannot pool length {}", cur.1)));
                    }
                    (cur.0, cur.1 / 2)
                }
                Layer::Flatten => (1, cur.0 * cur.1),
                Layer::Dense { out_dim } => {
                    if out_dim == 0 {
                        return Err(Error::Spec(format!("layer {i}: dense with zero outputs")));
                    }
                    (1, out_dim)
                }
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    /// (weight count, bias count, fan-in) per parametric layer.
    fn param_shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        let shapes = self.shapes()?;
        Ok(self
            .layers
            .iter()
            .zip(&shapes)
            .filter_map(|(layer, &(c, l))| match *layer {
                Layer::Conv1d { out_channels, kernel } => Some((out_channels * c * kernel, out_channels, c * kernel)),
                Layer::Dense { out_dim } => Some((out_dim * c * l, out_dim, c * l)),
                _ => None,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    /// Conv: `[out][in][k]`; dense: `[out][in]`; row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// One entry per conv/dense layer, in network order. Gradients share the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub layers: Vec<LayerWeights>,
}

impl ModelWeights {
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        Ok(Self {
            layers: spec
                .param_shapes()?
                .into_iter()
                .map(|(nw, nb, _)| LayerWeights {
                    w: vec![0.0; nw],
                    b: vec![0.0; nb],
                })
                .collect(),
        })
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let shapes = spec.param_shapes()?;
        if shapes.len() != self.layers.len()
            || shapes
                .iter()
                .zip(&self.layers)
                .any(|(&(nw, nb, _), l)| l.w.len() != nw || l.b.len() != nb)
        {
            return Err(Error::Spec("weights do not match the network spec".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn add_assign(&mut self, other: &ModelWeights) {
        self.values_mut().zip(other.values()).for_each(|(a, b)| *a += b);
    }

    fn scale(&mut self, k: f64) {
        self.values_mut().for_each(|v| *v *= k);
    }
}

/// He-normal weights (std √(2/fan_in)), zero biases. Layer `i` of the network
/// draws from its own stream of the seed, so edits to one layer leave the
/// others unchanged.
pub fn init_network(spec: &NetworkSpec) -> Result<ModelWeights> {
    let shapes = spec.param_shapes()?;
    let positions = spec.layers.iter().enumerate().filter(|(_, l)| l.has_params()).map(|(i, _)| i);
    let layers = shapes
        .iter()
        .zip(positions)
        .map(|(&(nw, nb, fan_in), pos)| {
            let mut r = rng::stream(spec.seed, pos as u64);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            LayerWeights {
                w: (0..nw).map(|_| normal.sample(&mut r)).collect(),
                b: vec![0.0; nb],
            }
        })
        .collect();
    Ok(ModelWeights { layers })
}

fn conv_forward(x: &[f64], (cin, len): Shape, out: usize, k: usize, p: &LayerWeights) -> Vec<f64> {
    let pad = k / 2;
    let mut y = vec![0.0; out * len];
    for o in 0..out {
        for z in 0..len {
            let mut s = p.b[o];
            for c in 0..cin {
                let wrow = &p.w[(o * cin + c) * k..(o * cin + c + 1) * k];
                let xrow = &x[c * len..(c + 1) * len];
                for (a, w) in wrow.iter().enumerate() {
                    // true convolution: x(z − a) with the kernel centred
                    let idx = z + pad;
                    if idx >= a && idx - a < len {
                        s += w * xrow[idx - a];
                    }
                }
            }
            y[o * len + z] = s;
        }
    }
    y
}

fn conv_backward(
    x: &[f64],
    gy: &[f64],
    (cin, len): Shape,
    out: usize,
    k: usize,
    p: &LayerWeights,
    g: &mut LayerWeights,
) -> Vec<f64> {
    let pad = k / 2;
    let mut gx = vec![0.0; cin * len];
    for o in 0..out {
        for z in 0..len {
            let d = gy[o * len + z];
            g.b[o] += d;
            if d == 0.0 {
                continue;
            }
            for c in 0..cin {
                let base = (o * cin + c) * k;
                for a in 0..k {
                    let idx = z + pad;
                    if idx >= a && idx - a < len {
                        let xi = c * len + idx - a;
                        g.w[base + a] += d * x[xi];
                        gx[xi] += d * p.w[base + a];
                    }
                }
            }
        }
    }
    gx
}

fn dense_forward(x: &[f64], out: usize, p: &LayerWeights) -> Vec<f64> {
    let n = x.len();
    (0..out)
        .map(|o| {
            let row = &p.w[o * n..(o + 1) * n];
            p.b[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

fn dense_backward(x: &[f64], gy: &[f64], p: &LayerWeights, g: &mut LayerWeights) -> Vec<f64> {
    let n = x.len();
    let mut gx = vec![0.0; n];
    for (o, &d) in gy.iter().enumerate() {
        g.b[o] += d;
        let row = &p.w[o * n..(o + 1) * n];
        let grow = &mut g.w[o * n..(o + 1) * n];
        for i in 0..n {
            grow[i] += d * x[i];
            gx[i] += d * row[i];
        }
    }
    gx
}

fn maxpool_forward(x: &[f64], (c, len): Shape) -> Vec<f64> {
    let half = len / 2;
    let mut y = Vec::with_capacity(c * half);
    for ch in 0..c {
        let row = &x[ch * len..(ch + 1) * len];
        y.extend((0..half).map(|j| row[2 * j].max(row[2 * j + 1])));
    }
    y
}

fn maxpool_backward(x: &[f64], gy: &[f64], (c, len): Shape) -> Vec<f64> {
    let half = len / 2;
    let mut gx = vec![0.0; c * len];
    for ch in 0..c {
        for j in 0..half {
            let i = ch * len + 2 * j;
            // ties route to the first element, matching `f64::max` ordering above
            let pick = if x[i] >= x[i + 1] { i } else { i + 1 };
            gx[pick] = gy[ch * half + j];
        }
    }
    gx
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Activations at every layer boundary; `acts[0]` is the input.
struct Trace {
    acts: Vec<Vec<f64>>,
}

fn run(weights: &ModelWeights, spec: &NetworkSpec, shapes: &[Shape], x: &[f64]) -> Trace {
    let mut acts = Vec::with_capacity(spec.layers.len() + 1);
    acts.push(x.to_vec());
    let mut p = 0;
    for (i, layer) in spec.layers.iter().enumerate() {
        let cur = &acts[i];
        let next = match *layer {
            Layer::Conv1d { out_channels, kernel } => {
                p += 1;
                conv_forward(cur, shapes[i], out_channels, kernel, &weights.layers[p - 1])
            }
            Layer::Dense { out_dim } => {
                p += 1;
                dense_forward(cur, out_dim, &weights.layers[p - 1])
            }
            Layer::Relu => cur.iter().map(|v| v.max(0.0)).collect(),
            Layer::Maxpool => maxpool_forward(cur, shapes[i]),
            Layer::Flatten => cur.clone(),
            Layer::Softmax => softmax(cur),
        };
        acts.push(next);
    }
    Trace { acts }
}

fn prepare(weights: &ModelWeights, spec: &NetworkSpec, x: &[f64]) -> Result<Vec<Shape>> {
    let shapes = spec.shapes()?;
    weights.check(spec)?;
    if x.len() != spec.input_len {
        return Err(Error::Spec(format!("input has length {}, network expects {}", x.len(), spec.input_len)));
    }
    Ok(shapes)
}

/// Class probabilities.
pub fn forward(weights: &ModelWeights, spec: &NetworkSpec, x: &[f64]) -> Result<[f64; NUM_CLASSES]> {
    let shapes = prepare(weights, spec, x)?;
    let trace = run(weights, spec, &shapes, x);
    Ok(to_array(trace.acts.last().expect("output")))
}

/// Pre-softmax scores.
pub fn logits(weights: &ModelWeights, spec: &NetworkSpec, x: &[f64]) -> Result<[f64; NUM_CLASSES]> {
    let shapes = prepare(weights, spec, x)?;
    let trace = run(weights, spec, &shapes, x);
    Ok(to_array(&trace.acts[trace.acts.len() - 2]))
}

fn to_array(v: &[f64]) -> [f64; NUM_CLASSES] {
    let mut out = [0.0; NUM_CLASSES];
    out.copy_from_slice(v);
    out
}

/// Cross-entropy of one prediction; the flag reports whether the
/// probability had to be clamped.
pub fn loss(probs: &[f64], label: ClassLabel) -> (f64, bool) {
    let p = probs[label.index()];
    if p < PROB_FLOOR {
        (-PROB_FLOOR.ln(), true)
    } else {
        (-p.ln(), false)
    }
}

/// Argmax; ties go to the lowest class index.
pub fn argmax(probs: &[f64]) -> ClassLabel {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    ClassLabel::from_index(best).expect("four classes")
}

pub fn predict(weights: &ModelWeights, spec: &NetworkSpec, x: &[f64]) -> Result<(ClassLabel, [f64; NUM_CLASSES])> {
    let probs = forward(weights, spec, x)?;
    Ok((argmax(&probs), probs))
}

/// Mean-loss gradients of a batch, plus bookkeeping from the same forward passes.
#[derive(Debug, Clone)]
pub struct BatchGrad {
    pub grads: ModelWeights,
    pub loss: f64,
    pub correct: usize,
    pub clamped: usize,
}

fn sample_grad(weights: &ModelWeights, spec: &NetworkSpec, shapes: &[Shape], x: &[f64], label: ClassLabel) -> (ModelWeights, f64, bool, bool) {
    let trace = run(weights, spec, shapes, x);
    let probs = trace.acts.last().expect("output");
    let (l, clamped) = loss(probs, label);
    let correct = argmax(probs) == label;

    let mut grads = ModelWeights {
        layers: weights
            .layers
            .iter()
            .map(|l| LayerWeights {
                w: vec![0.0; l.w.len()],
                b: vec![0.0; l.b.len()],
            })
            .collect(),
    };
    // softmax + cross-entropy: d loss / d logits = p − onehot
    let mut g: Vec<f64> = probs.clone();
    g[label.index()] -= 1.0;
    let mut p = weights.layers.len();
    for i in (0..spec.layers.len() - 1).rev() {
        let x = &trace.acts[i];
        g = match spec.layers[i] {
            Layer::Conv1d { out_channels, kernel } => {
                p -= 1;
                conv_backward(x, &g, shapes[i], out_channels, kernel, &weights.layers[p], &mut grads.layers[p])
            }
            Layer::Dense { .. } => {
                p -= 1;
                dense_backward(x, &g, &weights.layers[p], &mut grads.layers[p])
            }
            Layer::Relu => g.iter().zip(x).map(|(d, v)| if *v > 0.0 { *d } else { 0.0 }).collect(),
            Layer::Maxpool => maxpool_backward(x, &g, shapes[i]),
            Layer::Flatten => g,
            Layer::Softmax => unreachable!("softmax is last"),
        };
    }
    (grads, l, correct, clamped)
}

/// Gradients of the mean batch cross-entropy. Per-sample terms may be
/// computed in parallel but are summed in batch order.
pub fn backward(weights: &ModelWeights, spec: &NetworkSpec, batch: &[(&[f64], ClassLabel)]) -> Result<BatchGrad> {
    if batch.is_empty() {
        return Err(Error::param("empty batch"));
    }
    let shapes = spec.shapes()?;
    weights.check(spec)?;
    if let Some((x, _)) = batch.iter().find(|(x, _)| x.len() != spec.input_len) {
        return Err(Error::Spec(format!("input has length {}, network expects {}", x.len(), spec.input_len)));
    }
    let parts = map_indices(batch.len(), |i| sample_grad(weights, spec, &shapes, batch[i].0, batch[i].1));
    let mut iter = parts.into_iter();
    let (mut grads, mut total, c0, k0) = iter.next().expect("non-empty");
    let mut correct = usize::from(c0);
    let mut clamped = usize::from(k0);
    for (g, l, c, k) in iter {
        grads.add_assign(&g);
        total += l;
        correct += usize::from(c);
        clamped += usize::from(k);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok(BatchGrad {
        grads,
        loss: total / n,
        correct,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 150,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::param(format!("learning rate must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::param(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::param("eps must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelWeights,
    pub v: ModelWeights,
    pub t: u64,
}

impl AdamState {
    pub fn new(weights: &ModelWeights) -> Self {
        let mut m = weights.clone();
        m.values_mut().for_each(|v| *v = 0.0);
        Self { v: m.clone(), m, t: 0 }
    }
}

pub fn adam_step(state: &mut AdamState, weights: &mut ModelWeights, grads: &ModelWeights, config: &TrainConfig) -> Result<()> {
    if state.m.param_count() != weights.param_count() || grads.param_count() != weights.param_count() {
        return Err(Error::Train("optimizer state does not match the weights".into()));
    }
    if let Some(pos) = grads.values().position(|g| !g.is_finite()) {
        return Err(Error::Train(format!("non-finite gradient at parameter {pos} (step {})", state.t + 1)));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    let it = weights
        .values_mut()
        .zip(grads.values())
        .zip(state.m.values_mut().zip(state.v.values_mut()));
    for ((w, g), (m, v)) in it {
        *m = config.beta1 * *m + (1.0 - config.beta1) * g;
        *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
        let mhat = *m / c1;
        let vhat = *v / c2;
        *w -= config.lr * mhat / (vhat.sqrt() + config.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's mini-batches.
    pub loss: f64,
    pub train_acc: f64,
    /// Samples whose correct-class probability hit the clamp.
    pub clamped: usize,
}

/// Interleaves classes so every stretch of the order carries roughly the
/// class proportions of the whole set; order within a class is shuffled.
pub fn stratified_order(labels: &[ClassLabel], rng: &mut rng::Rng) -> Vec<usize> {
    let mut keyed = Vec::with_capacity(labels.len());
    for class in ClassLabel::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        let n = members.len() as f64;
        for (rank, idx) in members.into_iter().enumerate() {
            keyed.push(((rank as f64 + 0.5) / n, class.index(), idx));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|k| k.2).collect()
}

pub fn train(dataset: &[(Vec<f64>, ClassLabel)], spec: &NetworkSpec, config: &TrainConfig) -> Result<(ModelWeights, Vec<EpochStats>)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Train("empty training set".into()));
    }
    spec.shapes()?;
    if let Some((x, _)) = dataset.iter().find(|(x, _)| x.len() != spec.input_len) {
        return Err(Error::Spec(format!("sample has length {}, network expects {}", x.len(), spec.input_len)));
    }
    let mut weights = init_network(spec)?;
    let mut state = AdamState::new(&weights);
    let mut shuffle = rng::stream(config.seed, SHUFFLE_STREAM);
    let labels: Vec<ClassLabel> = dataset.iter().map(|d| d.1).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let order = stratified_order(&labels, &mut shuffle);
        let (mut loss_sum, mut correct, mut clamped) = (0.0, 0, 0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f64], ClassLabel)> = chunk.iter().map(|&i| (dataset[i].0.as_slice(), dataset[i].1)).collect();
            let g = backward(&weights, spec, &batch)?;
            adam_step(&mut state, &mut weights, &g.grads, config)?;
            loss_sum += g.loss * chunk.len() as f64;
            correct += g.correct;
            clamped += g.clamped;
        }
        if !weights.is_finite() {
            return Err(Error::Train(format!("weights became non-finite in epoch {epoch}")));
        }
        let n = dataset.len() as f64;
        history.push(EpochStats {
            epoch,
            loss: loss_sum / n,
            train_acc: correct as f64 / n,
            clamped,
        });
    }
    Ok((weights, history))
}

/// Mean cross-entropy and accuracy of fixed weights over a dataset.
pub fn evaluate(weights: &ModelWeights, spec: &NetworkSpec, dataset: &[(Vec<f64>, ClassLabel)]) -> Result<(f64, f64)> {
    let mut total = 0.0;
    let mut correct = 0;
    for (x, y) in dataset {
        let (pred, probs) = predict(weights, spec, x)?;
        total += loss(&probs, *y).0;
        correct += usize::from(pred == *y);
    }
    let n = dataset.len().max(1) as f64;
    Ok((total / n, correct as f64 / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineMode {
    FftEmd,
    Wt,
    Hog,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 3] = [PipelineMode::FftEmd, PipelineMode::Wt, PipelineMode::Hog];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineMode::FftEmd => "fft-emd",
            PipelineMode::Wt => "wt",
            PipelineMode::Hog => "hog",
        }
    }
}

impl std::fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PipelineMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::param(format!("unknown pipeline {s:?} (expected fft-emd, wt or hog)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub mode: PipelineMode,
}

impl FeatureVector {
    pub fn new(mode: PipelineMode, values: Vec<f64>) -> Result<Self> {
        if values.len() != INPUT_LEN {
            return Err(Error::param(format!("{mode} vector has length {}, expected {INPUT_LEN}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param(format!("{mode} vector has non-finite entries")));
        }
        Ok(Self { values, mode })
    }

    /// The four EMD values at the tail of an fft-emd vector.
    pub fn emd(&self) -> Result<&[f64]> {
        if self.mode != PipelineMode::FftEmd {
            return Err(Error::param(format!("{} vector carries no EMD values", self.mode)));
        }
        Ok(&self.values[INPUT_LEN - 4..])
    }
}

/// Block-mean pools `x` into `n` contiguous, nearly equal chunks.
pub fn block_mean_pool(x: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let lo = i * x.len() / n;
            let hi = ((i + 1) * x.len() / n).max(lo + 1).min(x.len());
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Builds the fixed-length classifier input for a pipeline.
///
/// - fft-emd: ECG spectrum (128) ‖ fundus spectrum (64) ‖ EMD values (4)
/// - wt: the 6 wavelet energies, zero padded
/// - hog: the descriptor block-mean pooled to 192, then 4 zeros
pub fn assemble_input(
    mode: PipelineMode,
    ecg_spec: Option<&Spectrum>,
    fundus_spec: Option<&Spectrum>,
    emd4: Option<&[f64; 4]>,
    wt: Option<&WtFeatures>,
    hog: Option<&HogFeatures>,
) -> Result<FeatureVector> {
    let missing = |what: &str| Error::param(format!("{mode} input needs {what}"));
    let values = match mode {
        PipelineMode::FftEmd => {
            let e = ecg_spec.ok_or_else(|| missing("an ECG spectrum"))?;
            let f = fundus_spec.ok_or_else(|| missing("a fundus spectrum"))?;
            let d = emd4.ok_or_else(|| missing("EMD values"))?;
            if e.len() != ECG_BINS || f.len() != FUNDUS_BINS {
                return Err(Error::param(format!(
                    "spectra have {} and {} bins, expected {ECG_BINS} and {FUNDUS_BINS}",
                    e.len(),
                    f.len()
                )));
            }
            let mut v = Vec::with_capacity(INPUT_LEN);
            v.extend_from_slice(&e.weights);
            v.extend_from_slice(&f.weights);
            v.extend_from_slice(d);
            v
        }
        PipelineMode::Wt => {
            let w = wt.ok_or_else(|| missing("wavelet energies"))?;
            if w.level_energies.len() > INPUT_LEN {
                return Err(Error::param("too many wavelet levels"));
            }
            let mut v = w.level_energies.clone();
            v.resize(INPUT_LEN, 0.0);
            v
        }
        PipelineMode::Hog => {
            let h = hog.ok_or_else(|| missing("a HOG descriptor"))?;
            if h.descriptor.is_empty() {
                return Err(Error::param("empty HOG descriptor"));
            }
            let mut v = block_mean_pool(&h.descriptor, INPUT_LEN - 4);
            v.resize(INPUT_LEN, 0.0);
            v
        }
    };
    FeatureVector::new(mode, values)
}

/// Per-feature standardization fitted on the training inputs. Constant
/// features keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::param("no rows to fit a scaler"))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::param("rows differ in length"));
            }
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            var.iter_mut().zip(r.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m) * (v - m));
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 * m.abs().max(1e-12) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classifier {
    #[default]
    Cnn,
    /// Dense network over the four EMD values.
    EmdMlp,
}

impl Classifier {
    pub fn spec(self, seed: u64) -> NetworkSpec {
        match self {
            Classifier::Cnn => NetworkSpec::default_cnn(seed),
            Classifier::EmdMlp => NetworkSpec::emd_mlp(seed),
        }
    }

    /// The part of a feature vector this classifier reads.
    pub fn input<'a>(self, fv: &'a FeatureVector) -> Result<&'a [f64]> {
        match self {
            Classifier::Cnn => Ok(&fv.values),
            Classifier::EmdMlp => fv.emd(),
        }
    }
}

impl std::str::FromStr for Classifier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(Classifier::Cnn),
            "emd-mlp" => Ok(Classifier::EmdMlp),
            _ => Err(Error::param(format!("unknown classifier {s:?} (expected cnn or emd-mlp)"))),
        }
    }
}

/// A trained network with everything needed to score new feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedModel {
    pub version: String,
    pub pipeline: PipelineMode,
    #[serde(default)]
    pub classifier: Classifier,
    #[serde(default)]
    pub emd_refs: EmdRefs,
    pub spec: NetworkSpec,
    pub weights: ModelWeights,
    pub scaler: InputScaler,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_path: Option<String>,
    pub train_seed: u64,
}

impl TrainedModel {
    /// Fits the scaler on the training inputs, then trains.
    pub fn fit(
        pipeline: PipelineMode,
        classifier: Classifier,
        data: &[(FeatureVector, ClassLabel)],
        config: &TrainConfig,
    ) -> Result<(Self, Vec<EpochStats>)> {
        let raw: Vec<Vec<f64>> = data
            .iter()
            .map(|(fv, _)| {
                if fv.mode != pipeline {
                    return Err(Error::param(format!("{} vector given to a {pipeline} model", fv.mode)));
                }
                classifier.input(fv).map(<[f64]>::to_vec)
            })
            .collect::<Result<_>>()?;
        let scaler = InputScaler::fit(&raw)?;
        let scaled: Vec<(Vec<f64>, ClassLabel)> = raw.iter().zip(data).map(|(x, (_, y))| (scaler.apply(x), *y)).collect();
        let spec = classifier.spec(config.seed);
        let (weights, history) = train(&scaled, &spec, config)?;
        Ok((
            Self {
                version: MODEL_VERSION.to_string(),
                pipeline,
                classifier,
                emd_refs: EmdRefs::default(),
                spec,
                weights,
                scaler,
                templates_path: None,
                train_seed: config.seed,
            },
            history,
        ))
    }

    pub fn predict(&self, fv: &FeatureVector) -> Result<(ClassLabel, [f64; NUM_CLASSES])> {
        if fv.mode != self.pipeline {
            return Err(Error::param(format!("{} vector given to a {} model", fv.mode, self.pipeline)));
        }
        let x = self.scaler.apply(self.classifier.input(fv)?);
        predict(&self.weights, &self.spec, &x)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::format(format!("model file: {e}")))?;
        match value.get("version") {
            Some(serde_json::Value::String(v)) if v == MODEL_VERSION => {}
            Some(serde_json::Value::String(v)) => return Err(Error::Version(v.clone())),
            Some(other) => return Err(Error::Version(other.to_string())),
            None => return Err(Error::format("model file has no version field")),
        }
        let model: TrainedModel = serde_json::from_value(value).map_err(|e| Error::format(format!("model file: {e}")))?;
        model.weights.check(&model.spec).map_err(|e| Error::format(e.to_string()))?;
        let d = model.spec.input_len;
        if model.scaler.mean.len() != d || model.scaler.scale.len() != d {
            return Err(Error::format("scaler does not match the network input"));
        }
        if !model.weights.is_finite() {
            return Err(Error::format("model weights are not finite"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
