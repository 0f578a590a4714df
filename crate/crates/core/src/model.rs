//! Dense feed-forward classifier with hand-derived gradients.
//!
//! The network is a plain MLP: `input → hidden... → classes`, relu or tanh
//! between layers, softmax cross-entropy at the top. Parameters live in a
//! [`LayeredParams`] with one layer per tensor, named `w1, b1, w2, b2, ...`;
//! weight matrices are row-major `[out × in]` so logits are `W·a + b`.
//!
//! Gradient accumulation over a batch always visits samples in ascending
//! index order. Mini-batch SGD shuffles only batch *membership*, so a batch
//! that covers the full dataset reproduces the plain dataset gradient bit for
//! bit. That makes single-step training exactly checkable against
//! [`backward`].

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Architecture, Layer, LayeredParams};
use crate::rng::rng_from;
use crate::synthdata::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn parse(s: &str) -> Option<Activation> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative in terms of the pre-activation. relu'(0) is taken as 0.
    fn grad(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Shape of the classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelArch {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub n_classes: usize,
    pub activation: Activation,
}

impl ModelArch {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.n_classes == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!(
                "model architecture has a zero dimension: {}-{:?}-{}",
                self.input_dim, self.hidden_dims, self.n_classes
            )));
        }
        Ok(())
    }

    /// Layer widths including input and output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden_dims.len() + 2);
        d.push(self.input_dim);
        d.extend_from_slice(&self.hidden_dims);
        d.push(self.n_classes);
        d
    }

    /// Number of linear layers.
    pub fn n_linear(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    /// Parameter layout: `w1, b1, w2, b2, ...` with row-major weights.
    pub fn architecture(&self) -> Architecture {
        let dims = self.dims();
        let mut layers = Vec::with_capacity(2 * self.n_linear());
        for l in 1..dims.len() {
            layers.push((format!("w{l}"), dims[l] * dims[l - 1]));
            layers.push((format!("b{l}"), dims[l]));
        }
        Architecture::new(layers)
    }
}

/// Local SGD settings. The learning rate at 1-based round `t` is
/// `lr0 · decay^(t−1)`, so round 1 trains at exactly `lr0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.01,
            decay: 0.99,
            batch_size: 32,
            local_epochs: 1,
        }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, round: u32) -> f64 {
        self.lr0 * self.decay.powi(round.saturating_sub(1) as i32)
    }
}

/// Draws weights from `Normal(0, 1/fan_in)` and zeroes all biases.
pub fn init_params(arch: &ModelArch, seed: u64) -> LayeredParams {
    let dims = arch.dims();
    let mut rng = rng_from(seed);
    let mut layers = Vec::with_capacity(2 * arch.n_linear());
    for l in 1..dims.len() {
        let (fan_out, fan_in) = (dims[l], dims[l - 1]);
        let dist = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("valid normal");
        let values = (0..fan_out * fan_in).map(|_| dist.sample(&mut rng)).collect();
        layers.push(Layer { name: format!("w{l}"), values });
        layers.push(Layer {
            name: format!("b{l}"),
            values: vec![0.0; fan_out],
        });
    }
    LayeredParams::new(layers)
}

/// Per-sample forward state, reused across samples to avoid reallocating.
struct Workspace {
    /// Pre-activations per linear layer.
    z: Vec<Vec<f64>>,
    /// Post-activations per linear layer (last entry unused for loss).
    a: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(arch: &ModelArch) -> Workspace {
        let dims = arch.dims();
        Workspace {
            z: dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
            a: dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
        }
    }
}

fn check_shapes(arch: &ModelArch, params: &LayeredParams, sample: &Sample) -> Result<()> {
    if params.architecture() != arch.architecture() {
        return Err(Error::ArchMismatch(
            "parameters do not match the model architecture".into(),
        ));
    }
    if sample.pixels.len() != arch.input_dim {
        return Err(Error::Structure(format!(
            "sample has {} pixels, model expects {}",
            sample.pixels.len(),
            arch.input_dim
        )));
    }
    if sample.label >= arch.n_classes {
        return Err(Error::Structure(format!(
            "label {} out of range for {} classes",
            sample.label, arch.n_classes
        )));
    }
    Ok(())
}

/// Runs the net on one sample; fills `ws` and leaves the logits in the last
/// `z` entry.
fn forward_sample(arch: &ModelArch, params: &LayeredParams, pixels: &[f64], ws: &mut Workspace) {
    let n_linear = arch.n_linear();
    for l in 0..n_linear {
        let w = &params.layer(2 * l).values;
        let b = &params.layer(2 * l + 1).values;
        let d_out = b.len();
        let d_in = w.len() / d_out;
        // Split borrow: the input of layer l is either the pixels or a[l-1].
        let (done, rest) = ws.a.split_at_mut(l);
        let input: &[f64] = if l == 0 { pixels } else { &done[l - 1] };
        let z = &mut ws.z[l];
        for o in 0..d_out {
            let row = &w[o * d_in..(o + 1) * d_in];
            let mut acc = b[o];
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            z[o] = acc;
        }
        if l + 1 < n_linear {
            for o in 0..d_out {
                rest[0][o] = arch.activation.apply(z[o]);
            }
        }
    }
}

/// Numerically stable log-sum-exp.
fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Argmax with ties broken towards the lowest class index.
fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = c;
        }
    }
    best
}

/// Mean softmax cross-entropy and correct-prediction count over `idx`.
/// Samples are visited in the order given by `idx`.
pub fn forward_loss_idx(
    arch: &ModelArch,
    params: &LayeredParams,
    samples: &[Sample],
    idx: &[usize],
) -> Result<(f64, usize)> {
    if idx.is_empty() {
        return Err(Error::Structure("forward_loss: empty batch".into()));
    }
    check_shapes(arch, params, &samples[idx[0]])?;
    let mut ws = Workspace::new(arch);
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for &j in idx {
        let s = &samples[j];
        forward_sample(arch, params, &s.pixels, &mut ws);
        let logits = &ws.z[arch.n_linear() - 1];
        loss_sum += log_sum_exp(logits) - logits[s.label];
        if argmax(logits) == s.label {
            correct += 1;
        }
    }
    let loss = loss_sum / idx.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("forward_loss: non-finite loss {loss}")));
    }
    Ok((loss, correct))
}

/// Mean cross-entropy over the whole dataset.
pub fn forward_loss(
    arch: &ModelArch,
    params: &LayeredParams,
    samples: &[Sample],
) -> Result<(f64, usize)> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    forward_loss_idx(arch, params, samples, &idx)
}

/// Analytic gradient of the mean cross-entropy over `idx`, accumulated in
/// `idx` order and scaled by `1/|idx|` at the end.
pub fn backward_idx(
    arch: &ModelArch,
    params: &LayeredParams,
    samples: &[Sample],
    idx: &[usize],
) -> Result<LayeredParams> {
    if idx.is_empty() {
        return Err(Error::Structure("backward: empty batch".into()));
    }
    check_shapes(arch, params, &samples[idx[0]])?;
    let n_linear = arch.n_linear();
    let dims = arch.dims();
    let mut ws = Workspace::new(arch);
    let mut gw: Vec<Vec<f64>> = (1..dims.len())
        .map(|l| vec![0.0; dims[l] * dims[l - 1]])
        .collect();
    let mut gb: Vec<Vec<f64>> = (1..dims.len()).map(|l| vec![0.0; dims[l]]).collect();

    let mut delta = vec![0.0; *dims.iter().max().expect("nonempty dims")];
    let mut delta_prev = delta.clone();

    for &j in idx {
        let s = &samples[j];
        forward_sample(arch, params, &s.pixels, &mut ws);

        // Output layer: softmax - onehot.
        let logits = &ws.z[n_linear - 1];
        let lse = log_sum_exp(logits);
        for (c, &z) in logits.iter().enumerate() {
            delta[c] = (z - lse).exp() - if c == s.label { 1.0 } else { 0.0 };
        }

        for l in (0..n_linear).rev() {
            let d_out = dims[l + 1];
            let d_in = dims[l];
            let input: &[f64] = if l == 0 { &s.pixels } else { &ws.a[l - 1] };
            {
                let gwl = &mut gw[l];
                let gbl = &mut gb[l];
                for o in 0..d_out {
                    let d = delta[o];
                    gbl[o] += d;
                    let row = &mut gwl[o * d_in..(o + 1) * d_in];
                    for (g, xi) in row.iter_mut().zip(input) {
                        *g += d * xi;
                    }
                }
            }
            if l > 0 {
                let w = &params.layer(2 * l).values;
                for (p, slot) in delta_prev.iter_mut().enumerate().take(d_in) {
                    let mut acc = 0.0;
                    for (o, d) in delta.iter().enumerate().take(d_out) {
                        acc += w[o * d_in + p] * d;
                    }
                    *slot = acc * arch.activation.grad(ws.z[l - 1][p]);
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }
    }

    let scale = 1.0 / idx.len() as f64;
    let mut layers = Vec::with_capacity(2 * n_linear);
    for l in 0..n_linear {
        let mut wv = std::mem::take(&mut gw[l]);
        for v in &mut wv {
            *v *= scale;
        }
        let mut bv = std::mem::take(&mut gb[l]);
        for v in &mut bv {
            *v *= scale;
        }
        layers.push(Layer {
            name: format!("w{}", l + 1),
            values: wv,
        });
        layers.push(Layer {
            name: format!("b{}", l + 1),
            values: bv,
        });
    }
    let grads = LayeredParams::new(layers);
    for layer in grads.layers() {
        if layer.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "backward: non-finite gradient in layer {:?}",
                layer.name
            )));
        }
    }
    Ok(grads)
}

/// Gradient over the whole dataset in index order.
pub fn backward(
    arch: &ModelArch,
    params: &LayeredParams,
    samples: &[Sample],
) -> Result<LayeredParams> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    backward_idx(arch, params, samples, &idx)
}

/// Fraction of argmax-correct predictions; argmax ties go to the lowest
/// class index.
pub fn accuracy(arch: &ModelArch, params: &LayeredParams, samples: &[Sample]) -> f64 {
    assert!(!samples.is_empty(), "accuracy over an empty dataset");
    let mut ws = Workspace::new(arch);
    let mut correct = 0usize;
    for s in samples {
        forward_sample(arch, params, &s.pixels, &mut ws);
        if argmax(&ws.z[arch.n_linear() - 1]) == s.label {
            correct += 1;
        }
    }
    correct as f64 / samples.len() as f64
}

/// Smallest |pre-activation| over all hidden units and samples. Finite
/// differencing a relu net is only well-posed when every hidden
/// pre-activation sits clear of the kink at 0, so gradient checks screen
/// candidate batches with this margin. Note that a fully dead layer feeds
/// exact zeros (the biases) onward, so tiny margins are a real occurrence,
/// not a measure-zero fluke.
pub fn kink_margin(arch: &ModelArch, params: &LayeredParams, batch: &[Sample]) -> f64 {
    let mut ws = Workspace::new(arch);
    let mut min_abs = f64::INFINITY;
    for s in batch {
        forward_sample(arch, params, &s.pixels, &mut ws);
        for l in 0..arch.n_linear() - 1 {
            for &z in &ws.z[l] {
                min_abs = min_abs.min(z.abs());
            }
        }
    }
    min_abs
}

/// Mini-batch SGD for `cfg.local_epochs` epochs starting from `params_in`,
/// which is left untouched. Epoch shuffles draw from the given seed only;
/// each batch's samples are visited in ascending index order. The learning
/// rate is `cfg.lr_at(round)`. A non-finite batch loss aborts with a training
/// error carrying round and client.
pub fn local_train(
    arch: &ModelArch,
    params_in: &LayeredParams,
    samples: &[Sample],
    cfg: &TrainConfig,
    round: u32,
    client: usize,
    seed: u64,
) -> Result<LayeredParams> {
    if samples.is_empty() {
        return Err(Error::Training {
            round,
            client,
            msg: "empty training dataset".into(),
        });
    }
    let mut params = params_in.clone();
    let lr = cfg.lr_at(round);
    if cfg.local_epochs == 0 || lr == 0.0 {
        return Ok(params);
    }

    use rand::seq::SliceRandom;
    let mut rng = rng_from(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut batch: Vec<usize> = chunk.to_vec();
            batch.sort_unstable();
            let (loss, _) = forward_loss_idx(arch, &params, samples, &batch).map_err(|e| {
                Error::Training {
                    round,
                    client,
                    msg: e.to_string(),
                }
            })?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    round,
                    client,
                    msg: format!("loss diverged to {loss}"),
                });
            }
            let grads = backward_idx(arch, &params, samples, &batch).map_err(|e| {
                Error::Training {
                    round,
                    client,
                    msg: e.to_string(),
                }
            })?;
            params = params.sub(&grads.scale(lr))?;
        }
    }
    Ok(params)
}
