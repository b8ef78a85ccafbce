use rand::Rng;

use super::params::ParamStore;
use super::session::{Mode, Session};
use crate::autodiff::{ParamId, Tensor, Var};
use crate::error::{Error, Result};

/// Uniform in `±1/sqrt(fan_in)`.
pub fn uniform_init<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("sized by shape")
}

/// Anything owning entries in a [`ParamStore`].
pub trait Component {
    fn params(&self) -> Vec<ParamId>;

    /// Trainable scalar parameters; running statistics are excluded.
    fn count_params(&self, store: &ParamStore) -> usize {
        store.count(&self.params())
    }
}

/// `y = x W + b` with `W: [in × out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let weight = store.add(format!("{name}.weight"), uniform_init(rng, &[in_dim, out_dim], in_dim));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Self { weight, bias, in_dim, out_dim }
    }

    /// `x: [B × in] -> [B × out]`
    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let w = s.param(self.weight);
        let b = s.param(self.bias);
        let xw = s.graph.matmul(x, w)?;
        let shape = s.graph.shape(xw).to_vec();
        let bb = s.graph.broadcast(b, &shape)?;
        s.graph.add(xw, bb)
    }
}

impl Component for Linear {
    fn params(&self) -> Vec<ParamId> {
        vec![self.weight, self.bias]
    }
}

/// Batch normalization over the batch axis of `[B × F]` activations.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub features: usize,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, features: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[features], 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[features])),
            running_mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[features])),
            running_var: store.add_buffer(format!("{name}.running_var"), Tensor::full(&[features], 1.0)),
            features,
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let shape = s.graph.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.features {
            return Err(Error::shape("batch_norm", format!("{shape:?}, features {}", self.features)));
        }
        let normalized = match s.mode() {
            Mode::Train => {
                let mu = s.graph.mean(x, 0)?;
                let mu_b = s.graph.broadcast(mu, &shape)?;
                let centered = s.graph.sub(x, mu_b)?;
                let sq = s.graph.mul(centered, centered)?;
                let var = s.graph.mean(sq, 0)?;
                let shifted = s.graph.add_scalar(var, self.eps)?;
                let inv = s.graph.powf(shifted, -0.5)?;
                let inv_b = s.graph.broadcast(inv, &shape)?;
                let out = s.graph.mul(centered, inv_b)?;
                self.record_running_stats(s, mu, var, shape[0]);
                out
            }
            Mode::Eval => {
                let rm = s.store().get(self.running_mean).clone();
                let inv: Vec<f64> = s
                    .store()
                    .get(self.running_var)
                    .data()
                    .iter()
                    .map(|v| 1.0 / (v + self.eps).sqrt())
                    .collect();
                let rm = s.constant(rm);
                let inv = s.constant(Tensor::vector(inv));
                let rm_b = s.graph.broadcast(rm, &shape)?;
                let inv_b = s.graph.broadcast(inv, &shape)?;
                let centered = s.graph.sub(x, rm_b)?;
                s.graph.mul(centered, inv_b)?
            }
        };
        let gamma = s.param(self.gamma);
        let beta = s.param(self.beta);
        let gamma_b = s.graph.broadcast(gamma, &shape)?;
        let beta_b = s.graph.broadcast(beta, &shape)?;
        let scaled = s.graph.mul(normalized, gamma_b)?;
        s.graph.add(scaled, beta_b)
    }

    fn record_running_stats(&self, s: &mut Session, mu: Var, var: Var, batch: usize) {
        let m = self.momentum;
        let unbias = if batch > 1 { batch as f64 / (batch as f64 - 1.0) } else { 1.0 };
        let blend = |old: &Tensor, new: &Tensor, k: f64| -> Tensor {
            let data = old.data().iter().zip(new.data()).map(|(o, n)| (1.0 - m) * o + m * k * n).collect();
            Tensor::vector(data)
        };
        let mean = blend(s.store().get(self.running_mean), s.value(mu), 1.0);
        let var = blend(s.store().get(self.running_var), s.value(var), unbias);
        s.push_stat_update(self.running_mean, mean);
        s.push_stat_update(self.running_var, var);
    }
}

impl Component for BatchNorm {
    fn params(&self) -> Vec<ParamId> {
        vec![self.gamma, self.beta, self.running_mean, self.running_var]
    }
}

/// Inverted dropout: active in train mode only, survivors scaled by `1/(1-p)`.
pub fn dropout(s: &mut Session, x: Var, p: f64) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
    }
    if p == 0.0 || s.mode() == Mode::Eval {
        return Ok(x);
    }
    let shape = s.graph.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let keep = 1.0 / (1.0 - p);
    let rng = s.rng();
    let mask: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
    let m = s.constant(Tensor::new(shape, mask)?);
    s.graph.mul(x, m)
}

/// Hidden block of an MLP: linear, optional batch norm, ReLU, dropout.
#[derive(Clone, Debug)]
pub struct HiddenLayer {
    pub linear: Linear,
    pub bn: Option<BatchNorm>,
}

/// Multi-layer perceptron with a linear output layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Vec<HiddenLayer>,
    pub output: Linear,
    pub dropout_p: f64,
}

impl Mlp {
    /// `dims = [in, h1, ..., out]`
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        use_bn: bool,
        dropout_p: f64,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output sizes");
        let hidden = dims
            .windows(2)
            .take(dims.len() - 2)
            .enumerate()
            .map(|(i, w)| HiddenLayer {
                linear: Linear::new(store, &format!("{name}.hidden{i}"), w[0], w[1], rng),
                bn: use_bn.then(|| BatchNorm::new(store, &format!("{name}.bn{i}"), w[1])),
            })
            .collect();
        let n = dims.len();
        let output = Linear::new(store, &format!("{name}.out"), dims[n - 2], dims[n - 1], rng);
        Self { hidden, output, dropout_p }
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let mut h = x;
        for layer in &self.hidden {
            h = layer.linear.forward(s, h)?;
            if let Some(bn) = &layer.bn {
                h = bn.forward(s, h)?;
            }
            h = s.graph.relu(h)?;
            h = dropout(s, h, self.dropout_p)?;
        }
        self.output.forward(s, h)
    }
}

impl Component for Mlp {
    fn params(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for layer in &self.hidden {
            ids.extend(layer.linear.params());
            if let Some(bn) = &layer.bn {
                ids.extend(bn.params());
            }
        }
        ids.extend(self.output.params());
        ids
    }
}
