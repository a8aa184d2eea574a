//! Small fully connected networks with dropout and plain SGD.
//!
//! Hidden layers use `tanh`; the output layer is affine followed by an
//! [`OutputTransform`]. Dropout is applied to hidden activations through an
//! explicit [`DropoutSample`], so a forward pass with a given sample is a
//! pure function of the weights and the sample.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serialization format version written into [`NetRecord`].
pub const NET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OutputTransform {
    /// `σ(z)` in `[0, 1]`.
    Sigmoid,
    /// `lo + (hi − lo) σ(z)`.
    Affine { lo: f64, hi: f64 },
    Identity,
}

impl OutputTransform {
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputTransform::Sigmoid => sigmoid(z),
            OutputTransform::Affine { lo, hi } => lo + (hi - lo) * sigmoid(z),
            OutputTransform::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            OutputTransform::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            OutputTransform::Affine { lo, hi } => {
                let s = sigmoid(z);
                (hi - lo) * s * (1.0 - s)
            }
            OutputTransform::Identity => 1.0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    /// Row-major `out × in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    n_in: usize,
    n_out: usize,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
            n_in,
            n_out,
        }
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + self.bias[o];
            out.push(z);
        }
    }
}

/// Binary keep-masks for each hidden layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropoutSample {
    masks: Vec<Vec<bool>>,
}

impl DropoutSample {
    /// Keeps every unit.
    pub fn keep_all(net: &Net) -> Self {
        Self {
            masks: net.hidden_widths().map(|w| vec![true; w]).collect(),
        }
    }

    /// Bernoulli(1 − rate) keep decisions for every hidden unit.
    pub fn draw<R: Rng + ?Sized>(net: &Net, rng: &mut R) -> Self {
        let keep = 1.0 - net.dropout_rate;
        Self {
            masks: net
                .hidden_widths()
                .map(|w| (0..w).map(|_| rng.gen::<f64>() < keep).collect())
                .collect(),
        }
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }
}

/// One training example. `weight` scales its contribution to the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub weight: f64,
    pub dropout: Option<DropoutSample>,
}

impl TrainSample {
    pub fn new(input: Vec<f64>, target: Vec<f64>) -> Self {
        Self {
            input,
            target,
            weight: 1.0,
            dropout: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
    output: OutputTransform,
    dropout_rate: f64,
}

/// Versioned on-disk form of a [`Net`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetRecord {
    pub version: u32,
    pub net: Net,
}

impl Net {
    /// All weights and biases zero.
    pub fn zeros(layer_dims: &[usize], output: OutputTransform, dropout_rate: f64) -> Self {
        assert!(layer_dims.len() >= 2, "need input and output widths");
        assert!((0.0..1.0).contains(&dropout_rate), "dropout rate in [0, 1)");
        let layers = layer_dims
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Self {
            layer_dims: layer_dims.to_vec(),
            layers,
            output,
            dropout_rate,
        }
    }

    /// Weights and biases uniform in `±1/√fan_in`.
    pub fn random<R: Rng + ?Sized>(
        layer_dims: &[usize],
        output: OutputTransform,
        dropout_rate: f64,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(layer_dims, output, dropout_rate);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.n_in as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.gen_range(-bound..=bound);
            }
        }
        net
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn output_transform(&self) -> OutputTransform {
        self.output
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn set_dropout_rate(&mut self, rate: f64) {
        assert!((0.0..1.0).contains(&rate), "dropout rate in [0, 1)");
        self.dropout_rate = rate;
    }

    fn hidden_widths(&self) -> impl Iterator<Item = usize> + '_ {
        self.layer_dims[1..self.layer_dims.len() - 1].iter().copied()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least two layers")
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Sets the output-layer bias, e.g. to place an untrained net's output.
    pub fn set_output_bias(&mut self, bias: f64) {
        let last = self.layers.last_mut().expect("at least one layer");
        last.bias.iter_mut().for_each(|b| *b = bias);
    }

    /// Flat copy of all parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                got: params.len(),
            });
        }
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    fn check_sample(&self, sample: Option<&DropoutSample>) -> Result<()> {
        if let Some(s) = sample {
            let widths: Vec<usize> = self.hidden_widths().collect();
            let ok = s.masks.len() == widths.len()
                && s.masks.iter().zip(&widths).all(|(m, &w)| m.len() == w);
            if !ok {
                return Err(Error::DimensionMismatch {
                    expected: widths.iter().sum(),
                    got: s.masks.iter().map(Vec::len).sum(),
                });
            }
        }
        Ok(())
    }

    /// Forward pass. With a sample, dropped hidden units are zeroed and kept
    /// ones are scaled by `1/(1 − rate)`.
    pub fn forward(&self, input: &[f64], sample: Option<&DropoutSample>) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        self.check_sample(sample)?;
        Ok(self.forward_trace(input, sample).output)
    }

    /// Single-output convenience wrapper around [`Net::forward`].
    pub fn eval(&self, input: &[f64], sample: Option<&DropoutSample>) -> f64 {
        debug_assert_eq!(input.len(), self.input_dim());
        self.forward_trace(input, sample).output[0]
    }

    /// Single-output evaluation reusing `scratch` buffers; same result as
    /// [`Net::eval`].
    pub fn eval_with(&self, input: &[f64], sample: Option<&DropoutSample>, scratch: &mut Scratch) -> f64 {
        let scale = 1.0 / (1.0 - self.dropout_rate);
        let n = self.layers.len();
        let (a, b) = (&mut scratch.a, &mut scratch.b);
        a.clear();
        a.extend_from_slice(input);
        for (k, layer) in self.layers.iter().enumerate() {
            layer.affine(a, b);
            if k + 1 < n {
                for (j, v) in b.iter_mut().enumerate() {
                    let keep = sample.map_or(true, |s| s.masks[k][j]);
                    *v = if !keep {
                        0.0
                    } else if sample.is_some() {
                        v.tanh() * scale
                    } else {
                        v.tanh()
                    };
                }
            }
            std::mem::swap(a, b);
        }
        self.output.apply(a[0])
    }

    fn forward_trace(&self, input: &[f64], sample: Option<&DropoutSample>) -> Trace {
        let scale = 1.0 / (1.0 - self.dropout_rate);
        let n = self.layers.len();
        let mut activations = Vec::with_capacity(n + 1);
        let mut pre = Vec::with_capacity(n);
        activations.push(input.to_vec());
        let mut z = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            layer.affine(&activations[k], &mut z);
            if k + 1 < n {
                let mut h: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
                if let Some(s) = sample {
                    for (hv, &keep) in h.iter_mut().zip(&s.masks[k]) {
                        *hv = if keep { *hv * scale } else { 0.0 };
                    }
                }
                activations.push(h);
            }
            pre.push(z.clone());
        }
        let output = pre[n - 1].iter().map(|&v| self.output.apply(v)).collect();
        Trace {
            activations,
            pre,
            output,
        }
    }

    /// Mean weighted squared error over `batch` and its gradient with
    /// respect to [`Net::params`].
    pub fn loss_and_gradient(&self, batch: &[TrainSample]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        let scale = 1.0 / (1.0 - self.dropout_rate);
        let mut grads: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer::zeros(l.n_in, l.n_out))
            .collect();
        let inv_n = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for ex in batch {
            if ex.input.len() != self.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim(),
                    got: ex.input.len(),
                });
            }
            if ex.target.len() != self.output_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.output_dim(),
                    got: ex.target.len(),
                });
            }
            self.check_sample(ex.dropout.as_ref())?;
            let tr = self.forward_trace(&ex.input, ex.dropout.as_ref());
            let n = self.layers.len();
            // dL/dz at the output layer
            let mut delta: Vec<f64> = tr
                .output
                .iter()
                .zip(&ex.target)
                .zip(&tr.pre[n - 1])
                .map(|((y, t), &z)| {
                    loss += ex.weight * inv_n * (y - t) * (y - t);
                    2.0 * ex.weight * inv_n * (y - t) * self.output.derivative(z)
                })
                .collect();
            for k in (0..n).rev() {
                let layer = &self.layers[k];
                let a = &tr.activations[k];
                let g = &mut grads[k];
                for o in 0..layer.n_out {
                    g.bias[o] += delta[o];
                    let row = &mut g.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (gw, av) in row.iter_mut().zip(a) {
                        *gw += delta[o] * av;
                    }
                }
                if k == 0 {
                    break;
                }
                // back through the hidden activation of layer k-1
                let mut next = vec![0.0; layer.n_in];
                for o in 0..layer.n_out {
                    let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (nv, w) in next.iter_mut().zip(row) {
                        *nv += delta[o] * w;
                    }
                }
                for (j, nv) in next.iter_mut().enumerate() {
                    let th = tr.pre[k - 1][j].tanh();
                    let mut d = 1.0 - th * th;
                    if let Some(s) = &ex.dropout {
                        d *= if s.masks[k - 1][j] { scale } else { 0.0 };
                    }
                    *nv *= d;
                }
                delta = next;
            }
        }
        let mut flat = Vec::with_capacity(self.n_params());
        for g in grads {
            flat.extend(g.weights);
            flat.extend(g.bias);
        }
        Ok((loss, flat))
    }

    /// Central finite differences of the batch loss with step `h`, in the
    /// order of [`Net::params`].
    pub fn numerical_gradient(&self, batch: &[TrainSample], h: f64) -> Result<Vec<f64>> {
        let base = self.params();
        let mut probe = self.clone();
        let mut out = Vec::with_capacity(base.len());
        let mut p = base.clone();
        for k in 0..base.len() {
            p[k] = base[k] + h;
            probe.set_params(&p)?;
            let up = probe.loss_and_gradient(batch)?.0;
            p[k] = base[k] - h;
            probe.set_params(&p)?;
            let down = probe.loss_and_gradient(batch)?.0;
            p[k] = base[k];
            out.push((up - down) / (2.0 * h));
        }
        Ok(out)
    }

    /// One SGD step on the batch; returns the batch loss before the step.
    pub fn train_step(&mut self, batch: &[TrainSample], learning_rate: f64) -> Result<f64> {
        let (loss, grad) = self.loss_and_gradient(batch)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence);
        }
        let mut k = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w -= learning_rate * grad[k];
                k += 1;
            }
        }
        Ok(loss)
    }

    pub fn to_record(&self) -> NetRecord {
        NetRecord {
            version: NET_FORMAT_VERSION,
            net: self.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("nets always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: NetRecord =
            serde_json::from_str(s).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        if rec.version != NET_FORMAT_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported net format version {}",
                rec.version
            )));
        }
        Ok(rec.net)
    }
}

/// Reusable buffers for [`Net::eval_with`].
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

struct Trace {
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}
