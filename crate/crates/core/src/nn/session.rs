use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use crate::autodiff::{Graph, ParamId, Tensor, Var};
use crate::error::Result;

/// Whether stochastic and batch-statistic layers behave as in training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One forward pass: a graph over a read-only parameter store, plus the
/// dropout stream and any running-statistic updates produced on the way.
pub struct Session<'a> {
    pub graph: Graph,
    store: &'a ParamStore,
    mode: Mode,
    rng: ChaCha8Rng,
    leaves: Vec<Option<Var>>,
    stat_updates: Vec<(ParamId, Tensor)>,
}

/// Gradient for every entry of a store; zeros where the loss does not reach.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self { grads: store.ids().map(|id| Tensor::zeros(store.get(id).shape())).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.index()]
    }

    pub fn set(&mut self, id: ParamId, grad: Tensor) {
        self.grads[id.index()] = grad;
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }
}

impl<'a> Session<'a> {
    /// Recording is on in train mode and off in eval mode.
    pub fn new(store: &'a ParamStore, mode: Mode, dropout_seed: u64) -> Self {
        Self::with_recording(store, mode, dropout_seed, mode == Mode::Train)
    }

    pub fn with_recording(store: &'a ParamStore, mode: Mode, dropout_seed: u64, record: bool) -> Self {
        Self {
            graph: if record { Graph::new() } else { Graph::inference() },
            store,
            mode,
            rng: ChaCha8Rng::seed_from_u64(dropout_seed),
            leaves: vec![None; store.len()],
            stat_updates: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Graph leaf for a parameter, registered once per session.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.leaves[id.index()] {
            return v;
        }
        let value = self.store.get(id).clone();
        let v = if self.store.is_trainable(id) {
            self.graph.param(value, id)
        } else {
            self.graph.constant(value)
        };
        self.leaves[id.index()] = Some(v);
        v
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.graph.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.graph.value(v)
    }

    pub(crate) fn push_stat_update(&mut self, id: ParamId, value: Tensor) {
        self.stat_updates.push((id, value));
    }

    /// Running-statistic updates to apply to the store after the step.
    pub fn take_stat_updates(&mut self) -> Vec<(ParamId, Tensor)> {
        std::mem::take(&mut self.stat_updates)
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let mut node_grads = self.graph.backward(loss)?;
        let mut out = Gradients::zeros_like(self.store);
        for (id, var) in self.graph.param_vars() {
            if let Some(g) = node_grads.take(var) {
                out.grads[id.index()] = g;
            }
        }
        Ok(out)
    }
}
