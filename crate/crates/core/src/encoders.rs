//! View-encoders mapping each input view to a shared `d`-dimensional space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{dropout, uniform_init, Component, Linear, LstmOutput, LstmStack, Mlp, ParamStore, SeqBatch, Session};

/// Added to attention scores of masked steps; `exp` of it underflows to zero.
const MASKED_SCORE: f64 = -1e30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    LastState,
    Attention,
}

/// Stacked LSTM, pooling over time, dropout, then a linear projection to `d`.
#[derive(Clone, Debug)]
pub struct TemporalEncoder {
    pub lstm: LstmStack,
    /// Score vector `[hidden × 1]` when pooling with attention.
    pub attention: Option<ParamId>,
    pub projection: Linear,
    pub dropout_p: f64,
}

impl TemporalEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        layers: usize,
        d: usize,
        pooling: Pooling,
        dropout_p: f64,
        rng: &mut R,
    ) -> Self {
        let lstm = LstmStack::new(store, &format!("{name}.lstm"), in_dim, hidden, layers, rng);
        let attention = (pooling == Pooling::Attention)
            .then(|| store.add(format!("{name}.attn"), uniform_init(rng, &[hidden, 1], hidden)));
        let projection = Linear::new(store, &format!("{name}.proj"), hidden, d, rng);
        Self { lstm, attention, projection, dropout_p }
    }

    pub fn pooling(&self) -> Pooling {
        if self.attention.is_some() {
            Pooling::Attention
        } else {
            Pooling::LastState
        }
    }

    /// `[T × B × in]` with mask -> `[B × d]`.
    pub fn encode(&self, s: &mut Session, batch: &SeqBatch) -> Result<Var> {
        let out = self.lstm.forward(s, batch)?;
        let pooled = match self.attention {
            None => out.last,
            Some(w) => {
                let weights = self.attention_weights(s, &out, batch, w)?;
                attention_pool(s, &out, weights)?
            }
        };
        let pooled = dropout(s, pooled, self.dropout_p)?;
        self.projection.forward(s, pooled)
    }

    /// Softmax over active steps, `[B × steps]`; masked steps get exactly zero.
    fn attention_weights(&self, s: &mut Session, out: &LstmOutput, batch: &SeqBatch, w: ParamId) -> Result<Var> {
        let w = s.param(w);
        let mut scores = Vec::with_capacity(out.states.len());
        for &h in &out.states {
            scores.push(s.graph.matmul(h, w)?);
        }
        let scores = if scores.len() == 1 { scores[0] } else { s.graph.concat(&scores, 1)? };
        let b = batch.batch();
        let bias: Vec<f64> = (0..b)
            .flat_map(|j| out.steps.iter().map(move |&t| (t, j)))
            .map(|(t, j)| if batch.valid(t, j) { 0.0 } else { MASKED_SCORE })
            .collect();
        let bias = s.constant(Tensor::matrix(b, out.steps.len(), bias)?);
        let scores = s.graph.add(scores, bias)?;
        s.graph.softmax(scores, 1)
    }

    /// Attention weights for inspection, `[B × T]` over all steps of the batch.
    pub fn attention_profile(&self, s: &mut Session, batch: &SeqBatch) -> Result<Tensor> {
        let w = self
            .attention
            .ok_or_else(|| Error::Contract("encoder does not use attention pooling".into()))?;
        let out = self.lstm.forward(s, batch)?;
        let weights = self.attention_weights(s, &out, batch, w)?;
        let (b, t) = (batch.batch(), batch.steps());
        let mut full = vec![0.0; b * t];
        let wv = s.value(weights);
        for j in 0..b {
            for (k, &step) in out.steps.iter().enumerate() {
                full[j * t + step] = wv.at2(j, k);
            }
        }
        Tensor::matrix(b, t, full)
    }
}

/// `a = Σ_t α_t h_t` over the stack's active steps.
fn attention_pool(s: &mut Session, out: &LstmOutput, weights: Var) -> Result<Var> {
    let stacked = s.graph.stack(&out.states, 1)?; // [B × T × h]
    let shape = s.graph.shape(stacked).to_vec();
    let w = s.graph.reshape(weights, &[shape[0], shape[1], 1])?;
    let w = s.graph.broadcast(w, &shape)?;
    let weighted = s.graph.mul(stacked, w)?;
    s.graph.sum(weighted, 1)
}

impl Component for TemporalEncoder {
    fn params(&self) -> Vec<ParamId> {
        let mut ids = self.lstm.params();
        ids.extend(self.attention);
        ids.extend(self.projection.params());
        ids
    }
}

/// MLP encoder for static vectors: hidden layer (BN, ReLU, dropout) then projection to `d`.
#[derive(Clone, Debug)]
pub struct StaticEncoder {
    pub mlp: Mlp,
}

impl StaticEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        d: usize,
        use_bn: bool,
        dropout_p: f64,
        rng: &mut R,
    ) -> Self {
        Self { mlp: Mlp::new(store, name, &[in_dim, hidden, d], use_bn, dropout_p, rng) }
    }

    pub fn in_dim(&self) -> usize {
        self.mlp.hidden.first().map_or(self.mlp.output.in_dim, |h| h.linear.in_dim)
    }

    /// `[B × in] -> [B × d]`
    pub fn encode(&self, s: &mut Session, x: Var) -> Result<Var> {
        let shape = s.graph.shape(x);
        if shape.len() != 2 || shape[1] != self.in_dim() {
            return Err(Error::shape(
                "encode_static",
                format!("{shape:?}, expected [B, {}]", self.in_dim()),
            ));
        }
        self.mlp.forward(s, x)
    }
}

impl Component for StaticEncoder {
    fn params(&self) -> Vec<ParamId> {
        self.mlp.params()
    }
}
