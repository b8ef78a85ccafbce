//! Gated fusion of per-view representations and the fixed mergers it is compared to.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{Component, ParamStore, Session};

/// What the gate sees: all views concatenated, or their mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateInput {
    Concat,
    Average,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateActivation {
    Softmax,
    Sigmoid,
}

/// One weight per view, or one per view and feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    Global,
    FeatureWise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateConfig {
    pub input: GateInput,
    pub activation: GateActivation,
    pub granularity: Granularity,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { input: GateInput::Concat, activation: GateActivation::Softmax, granularity: Granularity::Global }
    }
}

impl GateConfig {
    pub fn in_dim(&self, views: usize, d: usize) -> usize {
        match self.input {
            GateInput::Concat => views * d,
            GateInput::Average => d,
        }
    }

    pub fn out_dim(&self, views: usize, d: usize) -> usize {
        match self.granularity {
            Granularity::Global => views,
            Granularity::FeatureWise => views * d,
        }
    }
}

/// Bias-free linear gate. `theta` starts at zero, so softmax weights start uniform.
#[derive(Clone, Debug)]
pub struct GatedUnit {
    pub theta: ParamId,
    pub config: GateConfig,
    pub views: usize,
    pub d: usize,
}

impl GatedUnit {
    pub fn new(store: &mut ParamStore, name: &str, views: usize, d: usize, config: GateConfig) -> Self {
        let shape = [config.in_dim(views, d), config.out_dim(views, d)];
        let theta = store.add(format!("{name}.theta"), Tensor::zeros(&shape));
        Self { theta, config, views, d }
    }

    /// `[B × k]` for global gates, `[B × k × d]` for feature-wise gates.
    pub fn weights(&self, s: &mut Session, zs: &[Var]) -> Result<Var> {
        let b = check_views(s, zs, self.views, self.d, "gated_weights")?;
        let x = match self.config.input {
            GateInput::Concat => s.graph.concat(zs, 1)?,
            GateInput::Average => {
                let stacked = s.graph.stack(zs, 1)?;
                s.graph.mean(stacked, 1)?
            }
        };
        let theta = s.param(self.theta);
        let logits = s.graph.matmul(x, theta)?;
        let logits = match self.config.granularity {
            Granularity::Global => logits,
            Granularity::FeatureWise => s.graph.reshape(logits, &[b, self.views, self.d])?,
        };
        // the view axis is 1 in both layouts
        match self.config.activation {
            GateActivation::Softmax => s.graph.softmax(logits, 1),
            GateActivation::Sigmoid => s.graph.sigmoid(logits),
        }
    }
}

impl Component for GatedUnit {
    fn params(&self) -> Vec<ParamId> {
        vec![self.theta]
    }
}

/// Checks `k` views of shape `[B × d]` and returns `B`.
fn check_views(s: &Session, zs: &[Var], views: usize, d: usize, op: &'static str) -> Result<usize> {
    if zs.len() != views || zs.is_empty() {
        return Err(Error::shape(op, format!("{} views, expected {views}", zs.len())));
    }
    let first = s.graph.shape(zs[0]).to_vec();
    for &z in zs {
        let shape = s.graph.shape(z);
        if shape.len() != 2 || shape[1] != d || shape != first.as_slice() {
            return Err(Error::shape(op, format!("view {shape:?}, expected [{}, {d}]", first[0])));
        }
    }
    Ok(first[0])
}

/// `z_F = Σ_v α_v ⊙ z_v` for global `[B × k]` or feature-wise `[B × k × d]` weights.
pub fn fuse_weighted_sum(s: &mut Session, zs: &[Var], alpha: Var) -> Result<Var> {
    if zs.is_empty() {
        return Err(Error::shape("fuse_weighted_sum", "no views"));
    }
    let d = s.graph.shape(zs[0]).get(1).copied().unwrap_or(0);
    let b = check_views(s, zs, zs.len(), d, "fuse_weighted_sum")?;
    let k = zs.len();
    let stacked = s.graph.stack(zs, 1)?;
    let alpha = match s.graph.shape(alpha) {
        [ab, ak] if *ab == b && *ak == k => {
            let a = s.graph.reshape(alpha, &[b, k, 1])?;
            s.graph.broadcast(a, &[b, k, d])?
        }
        [ab, ak, ad] if *ab == b && *ak == k && *ad == d => alpha,
        other => {
            return Err(Error::shape(
                "fuse_weighted_sum",
                format!("weights {other:?} for {k} views of [{b}, {d}]"),
            ))
        }
    };
    let weighted = s.graph.mul(stacked, alpha)?;
    s.graph.sum(weighted, 1)
}

/// Parameter-free mergers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeKind {
    Concat,
    Product,
    Maximum,
    UniformSum,
}

impl MergeKind {
    pub fn out_dim(self, views: usize, d: usize) -> usize {
        match self {
            MergeKind::Concat => views * d,
            _ => d,
        }
    }
}

pub fn merge_static(s: &mut Session, zs: &[Var], kind: MergeKind) -> Result<Var> {
    if zs.is_empty() {
        return Err(Error::shape("merge_static", "no views"));
    }
    let d = s.graph.shape(zs[0]).get(1).copied().unwrap_or(0);
    check_views(s, zs, zs.len(), d, "merge_static")?;
    match kind {
        MergeKind::Concat => s.graph.concat(zs, 1),
        MergeKind::Product => zs[1..].iter().try_fold(zs[0], |acc, &z| s.graph.mul(acc, z)),
        MergeKind::Maximum => zs[1..].iter().try_fold(zs[0], |acc, &z| s.graph.maximum(acc, z)),
        MergeKind::UniformSum => {
            let stacked = s.graph.stack(zs, 1)?;
            s.graph.mean(stacked, 1)
        }
    }
}
