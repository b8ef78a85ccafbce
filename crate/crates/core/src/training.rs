//! Mini-batch training with Adam, decoupled weight decay, and early stopping.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tensor, Var};
use crate::data::{build_batch, MultiViewSample, NormStats};
use crate::error::{Error, Result};
use crate::model::{Model, Prediction};
use crate::nn::{Gradients, Mode, ParamStore, Session};
use crate::seeding::{derive_seed, substream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            batch_size: 1024,
            max_epochs: 50,
            patience: 14,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.learning_rate > 0.0 && self.eps > 0.0 && self.batch_size > 0 && self.max_epochs > 0;
        if !positive || self.weight_decay < 0.0 {
            return Err(Error::Config("learning rate, eps, batch size and epochs must be positive".into()));
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} must lie in 1..={}",
                self.patience, self.max_epochs
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Mean squared error of two equal-length vectors.
pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(Error::shape("mse_loss", format!("{} targets vs {} predictions", y.len(), yhat.len())));
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Graph MSE between predictions `[B × 1]` and constant targets.
pub fn mse_loss(s: &mut Session, prediction: Var, targets: &[f64]) -> Result<Var> {
    let shape = s.graph.shape(prediction).to_vec();
    if shape.iter().product::<usize>() != targets.len() || targets.is_empty() {
        return Err(Error::shape("mse_loss", format!("{shape:?} vs {} targets", targets.len())));
    }
    let y = s.constant(Tensor::new(shape, targets.to_vec())?);
    let r = s.graph.sub(prediction, y)?;
    let sq = s.graph.mul(r, r)?;
    let total = s.graph.sum_all(sq)?;
    s.graph.scale(total, 1.0 / targets.len() as f64)
}

/// Adam state for every trainable entry of a store.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: &TrainConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store.ids().map(|id| vec![0.0; store.get(id).numel()]).collect();
        Self {
            learning_rate: config.learning_rate,
            weight_decay: config.weight_decay,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// `θ ← θ - lr·wd·θ`, then the bias-corrected Adam update.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for (id, g) in grads.iter() {
            if store.is_trainable(id) && !g.is_finite() {
                return Err(Error::NonFinite { op: "adam_step" });
            }
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.is_trainable(id) {
                continue;
            }
            let g = grads.get(id).data();
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            let theta = store.get_mut(id).data_mut();
            for i in 0..theta.len() {
                theta[i] -= self.learning_rate * self.weight_decay * theta[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                theta[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

impl TrainHistory {
    pub fn best_val_mse(&self) -> f64 {
        self.epochs.iter().map(|e| e.val_mse).fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse\n");
        for e in &self.epochs {
            writeln!(out, "{},{},{}", e.epoch, e.train_mse, e.val_mse).expect("string write");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Eval-mode predictions over many samples, `chunk` pixels at a time.
pub fn predict_samples(model: &Model, samples: &[&MultiViewSample], stats: &NormStats, chunk: usize) -> Result<Prediction> {
    let spec = model.input_spec();
    let mut out = Prediction { yhat: Vec::with_capacity(samples.len()), alpha: None };
    let mut alphas = Vec::new();
    for part in samples.chunks(chunk.max(1)) {
        let batch = build_batch(part, &spec, stats)?;
        let p = model.predict(&batch)?;
        out.yhat.extend(p.yhat);
        if let Some(a) = p.alpha {
            alphas.extend(a);
        }
    }
    if !alphas.is_empty() {
        out.alpha = Some(alphas);
    }
    Ok(out)
}

fn evaluate_mse(model: &Model, samples: &[&MultiViewSample], stats: &NormStats, chunk: usize) -> Result<f64> {
    let p = predict_samples(model, samples, stats, chunk)?;
    let y: Vec<f64> = samples.iter().map(|s| s.yield_t_ha).collect();
    mse(&y, &p.yhat)
}

/// One optimisation step on a prepared batch; returns the batch loss.
pub fn train_step(
    model: &mut Model,
    optimizer: &mut Adam,
    batch: &crate::data::Batch,
    dropout_seed: u64,
) -> Result<f64> {
    let (loss, grads, updates) = {
        let mut s = Session::new(&model.store, Mode::Train, dropout_seed);
        let out = model.forward(&mut s, batch)?;
        let loss = mse_loss(&mut s, out.prediction, &batch.targets)?;
        let value = s.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "mse_loss" });
        }
        let grads = s.backward(loss)?;
        (value, grads, s.take_stat_updates())
    };
    for (id, value) in updates {
        model.store.set(id, value)?;
    }
    optimizer.step(&mut model.store, &grads)?;
    Ok(loss)
}

/// Trains on normalized `train` pixels, monitoring MSE on `val` each epoch.
/// On return the model holds the parameters of the best validation epoch.
pub fn train(
    model: &mut Model,
    train: &[&MultiViewSample],
    val: &[&MultiViewSample],
    stats: &NormStats,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training and validation sets must be non-empty".into()));
    }
    let spec = model.input_spec();
    let mut optimizer = Adam::new(&model.store, config);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle = substream(config.seed, "shuffle");
    let mut history = TrainHistory { epochs: Vec::new(), best_epoch: 0, stopped_epoch: 0 };
    let mut best: Option<(f64, ParamStore)> = None;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle);
        let mut weighted = 0.0;
        for (step, idx) in order.chunks(config.batch_size).enumerate() {
            let samples: Vec<&MultiViewSample> = idx.iter().map(|&i| train[i]).collect();
            let batch = build_batch(&samples, &spec, stats)?;
            let seed = derive_seed(config.seed, &format!("dropout/{epoch}/{step}"));
            weighted += train_step(model, &mut optimizer, &batch, seed)? * samples.len() as f64;
        }
        let train_mse = weighted / train.len() as f64;
        let val_mse = evaluate_mse(model, val, stats, config.batch_size)?;
        if !val_mse.is_finite() {
            return Err(Error::NonFinite { op: "validation" });
        }
        log::debug!("epoch {epoch}: train mse {train_mse:.5}, val mse {val_mse:.5}");
        history.epochs.push(EpochRecord { epoch, train_mse, val_mse });
        history.stopped_epoch = epoch;
        if best.as_ref().is_none_or(|(b, _)| val_mse < *b) {
            best = Some((val_mse, model.store.clone()));
            history.best_epoch = epoch;
        }
        if epoch - history.best_epoch >= config.patience {
            break;
        }
    }
    if let Some((_, store)) = best {
        model.store = store;
    }
    Ok(history)
}
