//! Feed-forward ReLU classifier used to learn the dangerous set.
//!
//! Hidden layers apply `max(W s + b, 0)`; the last layer is affine and
//! produces a scalar score. The learned dangerous region is
//! `{x : score(x) >= threshold}`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::rng::RngStream;

/// One affine layer with a row-major `out × in` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let rows = weights.len();
        if rows == 0 {
            return Err(Error::InvalidNetwork("layer with zero outputs".into()));
        }
        let cols = weights[0].len();
        if cols == 0 || weights.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidNetwork("ragged or empty weight rows".into()));
        }
        check_dim(rows, bias.len())?;
        Ok(Self {
            rows,
            cols,
            weights: weights.into_iter().flatten().collect(),
            bias,
        })
    }

    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn weight(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let acc: f64 = self.row(r).iter().zip(input).map(|(w, x)| w * x).sum();
            out.push(acc + self.bias[r]);
        }
    }

    fn weight_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetJson", into = "NetJson")]
pub struct ReluNet {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetJson {
    widths: Vec<usize>,
    layers: Vec<LayerJson>,
}

impl TryFrom<NetJson> for ReluNet {
    type Error = Error;
    fn try_from(j: NetJson) -> Result<Self> {
        let layers = j
            .layers
            .into_iter()
            .map(|l| Layer::new(l.w, l.b))
            .collect::<Result<Vec<_>>>()?;
        let net = ReluNet::new(layers)?;
        if net.widths() != j.widths {
            return Err(Error::InvalidNetwork(format!(
                "declared widths {:?} do not match layers {:?}",
                j.widths,
                net.widths()
            )));
        }
        Ok(net)
    }
}

impl From<ReluNet> for NetJson {
    fn from(n: ReluNet) -> Self {
        NetJson {
            widths: n.widths(),
            layers: n
                .layers
                .iter()
                .map(|l| LayerJson {
                    w: l.weight_rows(),
                    b: l.bias.clone(),
                })
                .collect(),
        }
    }
}

impl ReluNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].cols != pair[0].rows {
                return Err(Error::InvalidNetwork(format!(
                    "layer widths do not chain: {} outputs feed {} inputs",
                    pair[0].rows, pair[1].cols
                )));
            }
        }
        if layers.last().unwrap().rows != 1 {
            return Err(Error::InvalidNetwork("final layer must have one output".into()));
        }
        if layers
            .iter()
            .any(|l| l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(Self { layers })
    }

    /// Convenience constructor from `(W rows, b)` pairs.
    pub fn from_parts(parts: Vec<(Vec<Vec<f64>>, Vec<f64>)>) -> Result<Self> {
        Self::new(
            parts
                .into_iter()
                .map(|(w, b)| Layer::new(w, b))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    /// Glorot-uniform initialised network with the given full widths
    /// `[d, m_1, ..., 1]`.
    pub fn init(widths: &[usize], rng: RngStream) -> Result<Self> {
        if widths.len() < 2 || *widths.last().unwrap() != 1 || widths.contains(&0) {
            return Err(invalid("widths", format!("{widths:?} must be [d, ..., 1] with positive entries")));
        }
        let mut r = rng.rng();
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut l = Layer::zeros(fan_out, fan_in);
                for v in &mut l.weights {
                    *v = r.random_range(-limit..limit);
                }
                l
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].cols)
            .chain(self.layers.iter().map(|l| l.rows))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    /// Widths of the ReLU layers.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.rows).collect()
    }

    pub fn hidden_count(&self) -> usize {
        self.hidden_widths().iter().sum()
    }

    /// Score `g(x)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim(), x.len())?;
        Ok(self.score(x))
    }

    /// Unchecked [`forward`](Self::forward) for hot loops.
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i < last {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Pre-activations of every hidden layer.
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dim(self.input_dim(), x.len())?;
        let mut cur = x.to_vec();
        let mut out = Vec::new();
        for layer in &self.layers[..self.layers.len() - 1] {
            let mut pre = Vec::new();
            layer.apply(&cur, &mut pre);
            cur = pre.iter().map(|v| v.max(0.0)).collect();
            out.push(pre);
        }
        Ok(out)
    }

    /// Hidden-unit activity at `x`: `true` iff the pre-activation is
    /// strictly positive.
    pub fn activation_pattern(&self, x: &[f64]) -> Result<Vec<Vec<bool>>> {
        Ok(self
            .pre_activations(x)?
            .into_iter()
            .map(|l| l.into_iter().map(|v| v > 0.0).collect())
            .collect())
    }

    /// Negates the final layer, swapping the roles of the two classes.
    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        let last = out.layers.last_mut().unwrap();
        last.weights.iter_mut().for_each(|v| *v = -*v);
        last.bias.iter_mut().for_each(|v| *v = -*v);
        out
    }

    /// Flattened parameters, layer by layer, weights then bias.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = it.next().expect("parameter vector too short");
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Stage-1 training data; label `true` marks a dangerous input.
#[derive(Debug, Clone, Default)]
pub struct LabeledDataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl LabeledDataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self> {
        check_dim(inputs.len(), labels.len())?;
        if inputs.is_empty() {
            return Err(invalid("inputs", "dataset must not be empty"));
        }
        let d = inputs[0].len();
        for x in &inputs {
            check_dim(d, x.len())?;
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y).count()
    }

    pub fn extend(&mut self, other: LabeledDataset) {
        self.inputs.extend(other.inputs);
        self.labels.extend(other.labels);
    }

    /// Inputs labelled safe.
    pub fn safe_inputs(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.inputs
            .iter()
            .zip(&self.labels)
            .filter(|(_, &y)| !y)
            .map(|(x, _)| x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Each positive example appears this many times per epoch (fractional
    /// part realised stochastically).
    pub oversample: f64,
    pub seed: u64,
    /// Accept single-class data and return a constant-score network.
    pub allow_degenerate: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            oversample: 10.0,
            seed: 0,
            allow_degenerate: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid("epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(invalid("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid("momentum", "must lie in [0, 1)"));
        }
        if !(self.oversample >= 1.0) {
            return Err(invalid("oversample", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub accuracy: f64,
    pub loss: f64,
    pub positives: usize,
    pub examples: usize,
}

/// Parameter gradients, same layout as [`ReluNet::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    fn zeros_like(net: &ReluNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

/// Mean logistic loss `softplus(g) − y g` over the batch, evaluated as
/// `softplus(±g)` so confident predictions do not cancel.
pub fn logistic_loss(net: &ReluNet, inputs: &[Vec<f64>], labels: &[bool]) -> f64 {
    let n = inputs.len().max(1) as f64;
    inputs
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let s = net.score(x);
            softplus(if y { -s } else { s })
        })
        .sum::<f64>()
        / n
}

/// Exact gradient of the mean logistic loss. The ReLU derivative at zero is
/// taken as zero.
pub fn loss_gradient(net: &ReluNet, inputs: &[Vec<f64>], labels: &[bool]) -> Result<Gradients> {
    check_dim(inputs.len(), labels.len())?;
    let mut grad = Gradients::zeros_like(net);
    if inputs.is_empty() {
        return Ok(grad);
    }
    for x in inputs {
        check_dim(net.input_dim(), x.len())?;
    }
    let scale = 1.0 / inputs.len() as f64;
    let nl = net.layers.len();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(nl + 1);
    for (x, &y) in inputs.iter().zip(labels) {
        acts.clear();
        acts.push(x.clone());
        for (i, layer) in net.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.apply(&acts[i], &mut out);
            if i + 1 < nl {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        let score = acts[nl][0];
        let mut delta = vec![(sigmoid(score) - if y { 1.0 } else { 0.0 }) * scale];
        for i in (0..nl).rev() {
            let layer = &net.layers[i];
            let input = &acts[i];
            let (gw, gb) = &mut grad.layers[i];
            for r in 0..layer.rows {
                let dr = delta[r];
                if dr == 0.0 {
                    continue;
                }
                gb[r] += dr;
                let row = &mut gw[r * layer.cols..(r + 1) * layer.cols];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += dr * a;
                }
            }
            if i > 0 {
                // acts[i] is post-ReLU, so a positive value means an active unit
                let mut prev = vec![0.0; layer.cols];
                for (c, p) in prev.iter_mut().enumerate() {
                    if input[c] > 0.0 {
                        *p = (0..layer.rows).map(|r| layer.weight(r, c) * delta[r]).sum();
                    }
                }
                delta = prev;
            }
        }
    }
    Ok(grad)
}

/// Trains a classifier by mini-batch gradient descent with momentum on the
/// logistic loss. Inputs are standardised internally and the scaling is folded
/// back into the first layer, so the returned network acts on raw inputs.
pub fn train(data: &LabeledDataset, widths: &[usize], cfg: &TrainConfig) -> Result<(ReluNet, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(invalid("data", "dataset must not be empty"));
    }
    let d = data.inputs[0].len();
    if widths.first() != Some(&d) {
        return Err(invalid("widths", format!("input width must be {d}")));
    }
    let positives = data.positives();
    let rng = RngStream::new(cfg.seed, crate::rng::streams::TRAIN);
    if positives == 0 || positives == data.len() {
        if !cfg.allow_degenerate {
            return Err(Error::DegenerateLabels);
        }
        let mut net = ReluNet::init(widths, rng)?;
        let zeros = vec![0.0; net.params().len()];
        net.set_params(&zeros);
        let c = if positives == 0 { -10.0 } else { 10.0 };
        net.layers.last_mut().unwrap().bias[0] = c;
        let report = TrainReport {
            accuracy: 1.0,
            loss: logistic_loss(&net, &data.inputs, &data.labels),
            positives,
            examples: data.len(),
        };
        return Ok((net, report));
    }

    let n = data.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| data.inputs.iter().map(|x| x[j]).sum::<f64>() / n)
        .collect();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let v = data.inputs.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if v > 1e-24 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled: Vec<Vec<f64>> = data
        .inputs
        .iter()
        .map(|x| x.iter().zip(&mean).zip(&std).map(|((v, m), s)| (v - m) / s).collect())
        .collect();

    let mut net = ReluNet::init(widths, rng)?;
    let mut r = rng.fork(1).rng();
    let mut velocity = vec![0.0; net.params().len()];
    let whole = cfg.oversample.floor() as usize;
    let frac = cfg.oversample - whole as f64;
    let mut order: Vec<usize> = Vec::new();
    let mut bx: Vec<Vec<f64>> = Vec::with_capacity(cfg.batch_size);
    let mut by: Vec<bool> = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.clear();
        for (i, &y) in data.labels.iter().enumerate() {
            if y {
                let extra = usize::from(frac > 0.0 && r.random::<f64>() < frac);
                order.extend(std::iter::repeat_n(i, whole + extra));
            } else {
                order.push(i);
            }
        }
        order.shuffle(&mut r);
        for batch in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            for &i in batch {
                bx.push(scaled[i].clone());
                by.push(data.labels[i]);
            }
            let g = loss_gradient(&net, &bx, &by)?.flatten();
            let mut p = net.params();
            for ((pi, vi), gi) in p.iter_mut().zip(velocity.iter_mut()).zip(&g) {
                *vi = cfg.momentum * *vi - cfg.learning_rate * gi;
                *pi += *vi;
            }
            net.set_params(&p);
        }
    }
    if net.params().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("trained parameters (lower the learning rate)"));
    }

    let first = &mut net.layers[0];
    for row in 0..first.rows {
        let mut shift = 0.0;
        for c in 0..first.cols {
            let w = first.weights[row * first.cols + c] / std[c];
            first.weights[row * first.cols + c] = w;
            shift += w * mean[c];
        }
        first.bias[row] -= shift;
    }

    let correct = data
        .inputs
        .iter()
        .zip(&data.labels)
        .filter(|(x, &y)| (net.score(x) >= 0.0) == y)
        .count();
    let report = TrainReport {
        accuracy: correct as f64 / n,
        loss: logistic_loss(&net, &data.inputs, &data.labels),
        positives,
        examples: data.len(),
    };
    Ok((net, report))
}
