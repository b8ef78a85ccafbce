//! LSTM layers over padded, masked batches.
//!
//! Gate blocks are laid out `[i | f | g | o]` along the last axis. Each layer
//! carries two bias vectors (input side and recurrent side).

use rand::Rng;

use super::layers::{uniform_init, Component};
use super::params::ParamStore;
use super::session::Session;
use crate::autodiff::{ParamId, Tensor, Var};
use crate::error::{Error, Result};

/// Time-major batch `x: [T × B × F]` with validity mask `[T × B]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqBatch {
    pub x: Tensor,
    pub mask: Vec<bool>,
}

impl SeqBatch {
    pub fn new(x: Tensor, mask: Vec<bool>) -> Result<Self> {
        if x.rank() != 3 || mask.len() != x.shape()[0] * x.shape()[1] {
            return Err(Error::shape(
                "seq_batch",
                format!("x {:?} with mask of {}", x.shape(), mask.len()),
            ));
        }
        Ok(Self { x, mask })
    }

    pub fn steps(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn batch(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn features(&self) -> usize {
        self.x.shape()[2]
    }

    pub fn valid(&self, t: usize, b: usize) -> bool {
        self.mask[t * self.batch() + b]
    }

    /// Steps where at least one sample is valid.
    pub fn active_steps(&self) -> Vec<usize> {
        (0..self.steps())
            .filter(|&t| (0..self.batch()).any(|b| self.valid(t, b)))
            .collect()
    }

    fn check_nonempty(&self) -> Result<()> {
        for b in 0..self.batch() {
            if !(0..self.steps()).any(|t| self.valid(t, b)) {
                return Err(Error::EmptySequence);
            }
        }
        Ok(())
    }

    /// Rows of the given steps flattened to `[steps.len() · B × F]`.
    fn gather_rows(&self, steps: &[usize]) -> Result<Tensor> {
        let row = self.batch() * self.features();
        let mut data = Vec::with_capacity(steps.len() * row);
        for &t in steps {
            data.extend_from_slice(&self.x.data()[t * row..(t + 1) * row]);
        }
        Tensor::matrix(steps.len() * self.batch(), self.features(), data)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

#[derive(Clone, Debug)]
pub struct LstmLayer {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let g = 4 * hidden;
        Self {
            w_ih: store.add(format!("{name}.w_ih"), uniform_init(rng, &[in_dim, g], in_dim)),
            w_hh: store.add(format!("{name}.w_hh"), uniform_init(rng, &[hidden, g], hidden)),
            b_ih: store.add(format!("{name}.b_ih"), Tensor::zeros(&[g])),
            b_hh: store.add(format!("{name}.b_hh"), Tensor::zeros(&[g])),
            in_dim,
            hidden,
        }
    }

    /// `x W_ih + b_ih + b_hh` for `x: [N × in]`.
    fn input_projection(&self, s: &mut Session, x: Var) -> Result<Var> {
        let w = s.param(self.w_ih);
        let b_ih = s.param(self.b_ih);
        let b_hh = s.param(self.b_hh);
        let xw = s.graph.matmul(x, w)?;
        let bias = s.graph.add(b_ih, b_hh)?;
        let shape = s.graph.shape(xw).to_vec();
        let bias = s.graph.broadcast(bias, &shape)?;
        s.graph.add(xw, bias)
    }

    /// Gate nonlinearities and state update given the input projection.
    /// `None` stands for the all-zero initial state.
    fn gates_step(&self, s: &mut Session, pre_x: Var, prev: Option<LstmState>) -> Result<LstmState> {
        let h = self.hidden;
        let pre = match prev {
            None => pre_x,
            Some(st) => {
                let w = s.param(self.w_hh);
                let hw = s.graph.matmul(st.h, w)?;
                s.graph.add(pre_x, hw)?
            }
        };
        let i = s.graph.slice(pre, 1, 0, h)?;
        let i = s.graph.sigmoid(i)?;
        let f = s.graph.slice(pre, 1, h, 2 * h)?;
        let f = s.graph.sigmoid(f)?;
        let g = s.graph.slice(pre, 1, 2 * h, 3 * h)?;
        let g = s.graph.tanh(g)?;
        let o = s.graph.slice(pre, 1, 3 * h, 4 * h)?;
        let o = s.graph.sigmoid(o)?;
        let ig = s.graph.mul(i, g)?;
        let c = match prev {
            None => ig,
            Some(st) => {
                let fc = s.graph.mul(f, st.c)?;
                s.graph.add(fc, ig)?
            }
        };
        let tc = s.graph.tanh(c)?;
        let h = s.graph.mul(o, tc)?;
        Ok(LstmState { h, c })
    }
}

impl Component for LstmLayer {
    fn params(&self) -> Vec<ParamId> {
        vec![self.w_ih, self.w_hh, self.b_ih, self.b_hh]
    }
}

/// One LSTM step: `x_t: [B × in]`, `h_prev, c_prev: [B × hidden]`.
pub fn lstm_cell_step(
    s: &mut Session,
    layer: &LstmLayer,
    x_t: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    let (xs, hs, cs) = (s.graph.shape(x_t), s.graph.shape(h_prev), s.graph.shape(c_prev));
    let ok = xs.len() == 2
        && xs[1] == layer.in_dim
        && hs == [xs[0], layer.hidden]
        && cs == [xs[0], layer.hidden];
    if !ok {
        return Err(Error::shape("lstm_cell_step", format!("x {xs:?}, h {hs:?}, c {cs:?}")));
    }
    let pre_x = layer.input_projection(s, x_t)?;
    let st = layer.gates_step(s, pre_x, Some(LstmState { h: h_prev, c: c_prev }))?;
    Ok((st.h, st.c))
}

/// Result of running a stack over a masked batch.
pub struct LstmOutput {
    /// Step indices that had at least one valid sample.
    pub steps: Vec<usize>,
    /// Top-layer hidden state after each of `steps`, `[B × hidden]`.
    pub states: Vec<Var>,
    /// Hidden state after each sample's last valid step.
    pub last: Var,
}

#[derive(Clone, Debug)]
pub struct LstmStack {
    pub layers: Vec<LstmLayer>,
}

impl LstmStack {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Self {
        let layers = (0..num_layers)
            .map(|l| {
                let d_in = if l == 0 { in_dim } else { hidden };
                LstmLayer::new(store, &format!("{name}.l{l}"), d_in, hidden, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    /// Masked steps leave `h` and `c` untouched, so padding anywhere in the
    /// sequence is inert and `last` is the state after the final valid step.
    pub fn forward(&self, s: &mut Session, batch: &SeqBatch) -> Result<LstmOutput> {
        if batch.features() != self.in_dim() {
            return Err(Error::shape(
                "lstm_stack_forward",
                format!("input {:?}, expected {} features", batch.x.shape(), self.in_dim()),
            ));
        }
        batch.check_nonempty()?;
        let steps = batch.active_steps();
        let b = batch.batch();
        let hidden = self.hidden();

        // per-step blend masks for partially valid steps
        let blends: Vec<Option<(Tensor, Tensor)>> = steps
            .iter()
            .map(|&t| {
                let valid: Vec<bool> = (0..b).map(|j| batch.valid(t, j)).collect();
                if valid.iter().all(|&v| v) {
                    return None;
                }
                let keep: Vec<f64> = valid
                    .iter()
                    .flat_map(|&v| std::iter::repeat_n(if v { 1.0 } else { 0.0 }, hidden))
                    .collect();
                let carry = keep.iter().map(|k| 1.0 - k).collect();
                Some((
                    Tensor::matrix(b, hidden, keep).expect("sized"),
                    Tensor::matrix(b, hidden, carry).expect("sized"),
                ))
            })
            .collect();

        let mut input = s.constant(batch.gather_rows(&steps)?);
        let mut outputs = Vec::new();
        let mut state: Option<LstmState> = None;
        for (li, layer) in self.layers.iter().enumerate() {
            let proj = layer.input_projection(s, input)?;
            let mut prev: Option<LstmState> = None;
            outputs = Vec::with_capacity(steps.len());
            for (k, blend) in blends.iter().enumerate() {
                let pre_x = if steps.len() == 1 { proj } else { s.graph.slice(proj, 0, k * b, (k + 1) * b)? };
                let mut next = layer.gates_step(s, pre_x, prev)?;
                if let Some((keep, carry)) = blend {
                    let keep = s.constant(keep.clone());
                    next.h = s.graph.mul(next.h, keep)?;
                    next.c = s.graph.mul(next.c, keep)?;
                    if let Some(p) = prev {
                        let carry = s.constant(carry.clone());
                        let ph = s.graph.mul(p.h, carry)?;
                        let pc = s.graph.mul(p.c, carry)?;
                        next.h = s.graph.add(next.h, ph)?;
                        next.c = s.graph.add(next.c, pc)?;
                    }
                }
                outputs.push(next.h);
                prev = Some(next);
            }
            state = prev;
            if li + 1 < self.layers.len() {
                input = if outputs.len() == 1 { outputs[0] } else { s.graph.concat(&outputs, 0)? };
            }
        }
        let last = state.expect("at least one active step").h;
        Ok(LstmOutput { steps, states: outputs, last })
    }
}

impl Component for LstmStack {
    fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }
}
