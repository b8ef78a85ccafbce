//! Full predictive models: gated multi-view fusion and the recurrent baselines.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, Tensor, Var};
use crate::data::{input_fusion_width, Batch, InputSpec, View};
use crate::encoders::{Pooling, StaticEncoder, TemporalEncoder};
use crate::error::{Error, Result};
use crate::fusion::{fuse_weighted_sum, merge_static, GateConfig, GatedUnit, Granularity, MergeKind};
use crate::nn::{Component, Linear, Mlp, Mode, ParamStore, Session};
use crate::seeding::substream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Multi-view gated fusion with an MLP head.
    Mvgf,
    /// Multi-view gated fusion with a linear head, for per-view contributions.
    MvgfLr,
    /// Optical LSTM over the raw acquisition series.
    LstmS2r,
    /// Optical LSTM over the 24 monthly composites.
    LstmS2m,
    /// LSTM over the monthly input-level fusion series.
    LstmIf,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.trim().to_ascii_lowercase()))
            .map_err(|_| Error::Config(format!("unknown model kind '{s}'")))
    }

    pub fn is_fused(self) -> bool {
        matches!(self, ModelKind::Mvgf | ModelKind::MvgfLr)
    }
}

/// How view representations are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Merger {
    Gated(GateConfig),
    Static(MergeKind),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Encoded views for fused models; series blocks for the input-level fusion model.
    pub views: Vec<View>,
    pub merger: Merger,
    /// Shared representation width.
    pub d: usize,
    /// LSTM and MLP hidden width.
    pub hidden: usize,
    pub lstm_layers: usize,
    pub pooling: Pooling,
    pub batch_norm: bool,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mvgf,
            views: View::ALL.to_vec(),
            merger: Merger::Gated(GateConfig::default()),
            d: 128,
            hidden: 128,
            lstm_layers: 2,
            pooling: Pooling::LastState,
            batch_norm: true,
            dropout: 0.3,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_kind(kind: ModelKind) -> Self {
        Self { kind, ..Self::default() }
    }

    /// Views sorted into canonical order; single-series models use only the optical view.
    pub fn effective_views(&self) -> Vec<View> {
        match self.kind {
            ModelKind::LstmS2r | ModelKind::LstmS2m => vec![View::S2],
            _ => {
                let mut v = self.views.clone();
                if self.kind == ModelKind::LstmIf && !v.contains(&View::S2) {
                    v.push(View::S2);
                }
                v.sort();
                v.dedup();
                v
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.d == 0 || self.hidden == 0 || self.lstm_layers == 0 {
            return fail("widths and layer count must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.effective_views().is_empty() {
            return fail("at least one view is required".into());
        }
        if self.kind == ModelKind::MvgfLr && !matches!(self.merger, Merger::Gated(_)) {
            return fail("the linear-head model needs a gated merger".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum ViewEncoder {
    Temporal(TemporalEncoder),
    Static(StaticEncoder),
}

impl ViewEncoder {
    fn params(&self) -> Vec<ParamId> {
        match self {
            ViewEncoder::Temporal(e) => e.params(),
            ViewEncoder::Static(e) => e.params(),
        }
    }
}

#[derive(Clone, Debug)]
enum Fusion {
    Gated(GatedUnit),
    Static(MergeKind),
}

#[derive(Clone, Debug)]
enum Head {
    Mlp(Mlp),
    Linear(Linear),
}

impl Head {
    fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        match self {
            Head::Mlp(m) => m.forward(s, x),
            Head::Linear(l) => l.forward(s, x),
        }
    }

    fn params(&self) -> Vec<ParamId> {
        match self {
            Head::Mlp(m) => m.params(),
            Head::Linear(l) => l.params(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SeriesSource {
    Raw,
    Monthly,
    InputFusion,
}

#[derive(Clone, Debug)]
enum Body {
    Fused { encoders: Vec<(View, ViewEncoder)>, fusion: Fusion },
    Sequence { source: SeriesSource, encoder: TemporalEncoder },
}

/// Graph outputs of one forward pass.
pub struct ForwardOutput {
    /// `[B × 1]`
    pub prediction: Var,
    /// Gate weights, `[B × k]` or `[B × k × d]`, for gated fusion.
    pub alpha: Option<Var>,
    /// View representations in canonical view order.
    pub representations: Vec<Var>,
}

/// Plain-value predictions. Feature-wise gate weights are reported as their
/// per-view mean across features.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub yhat: Vec<f64>,
    pub alpha: Option<Vec<Vec<f64>>>,
}

/// Per-sample additive split of a linear-head prediction over views.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub alpha: Vec<f64>,
    /// `C_v = wᵀ z_v`
    pub contributions: Vec<f64>,
    /// `α_v C_v`
    pub weighted: Vec<f64>,
    pub bias: f64,
    pub prediction: f64,
}

fn normalize_abs(xs: &[f64]) -> Vec<f64> {
    let total: f64 = xs.iter().map(|x| x.abs()).sum();
    if total == 0.0 {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| x / total).collect()
}

impl Decomposition {
    /// `C_v / Σ|C_v|`
    pub fn normalized_contributions(&self) -> Vec<f64> {
        normalize_abs(&self.contributions)
    }

    /// `α_v C_v / Σ|α_v C_v|`
    pub fn normalized_weighted(&self) -> Vec<f64> {
        normalize_abs(&self.weighted)
    }

    /// `ŷ - (Σ α_v C_v + b)`
    pub fn residual(&self) -> f64 {
        self.prediction - (self.weighted.iter().sum::<f64>() + self.bias)
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    views: Vec<View>,
    body: Body,
    head: Head,
}

impl Model {
    /// Parameters are drawn from the `init` stream of `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(config.seed, "init");
        let mut store = ParamStore::new();
        let c = &config;
        let views = c.effective_views();
        let temporal = |store: &mut ParamStore, name: &str, in_dim: usize, rng: &mut _| {
            TemporalEncoder::new(store, name, in_dim, c.hidden, c.lstm_layers, c.d, c.pooling, c.dropout, rng)
        };
        let (body, head_in) = match c.kind {
            ModelKind::Mvgf | ModelKind::MvgfLr => {
                let encoders: Vec<(View, ViewEncoder)> = views
                    .iter()
                    .map(|&v| {
                        let name = format!("enc.{}", v.name());
                        let enc = if v.is_temporal() {
                            ViewEncoder::Temporal(temporal(&mut store, &name, v.features(), &mut rng))
                        } else {
                            ViewEncoder::Static(StaticEncoder::new(
                                &mut store,
                                &name,
                                v.features(),
                                c.hidden,
                                c.d,
                                c.batch_norm,
                                c.dropout,
                                &mut rng,
                            ))
                        };
                        (v, enc)
                    })
                    .collect();
                let (fusion, width) = match c.merger {
                    Merger::Gated(g) => (Fusion::Gated(GatedUnit::new(&mut store, "gate", views.len(), c.d, g)), c.d),
                    Merger::Static(m) => (Fusion::Static(m), m.out_dim(views.len(), c.d)),
                };
                (Body::Fused { encoders, fusion }, width)
            }
            ModelKind::LstmS2r | ModelKind::LstmS2m => {
                let source = if c.kind == ModelKind::LstmS2r { SeriesSource::Raw } else { SeriesSource::Monthly };
                let encoder = temporal(&mut store, "enc.s2", View::S2.features(), &mut rng);
                (Body::Sequence { source, encoder }, c.d)
            }
            ModelKind::LstmIf => {
                let encoder = temporal(&mut store, "enc.if", input_fusion_width(&views), &mut rng);
                (Body::Sequence { source: SeriesSource::InputFusion, encoder }, c.d)
            }
        };
        let head = match c.kind {
            ModelKind::MvgfLr => Head::Linear(Linear::new(&mut store, "head", head_in, 1, &mut rng)),
            _ => Head::Mlp(Mlp::new(&mut store, "head", &[head_in, c.hidden, 1], c.batch_norm, 0.0, &mut rng)),
        };
        Ok(Self { config, store, views, body, head })
    }

    pub fn views(&self) -> &[View] {
        &self.views
    }

    pub fn input_spec(&self) -> InputSpec {
        match &self.body {
            Body::Fused { .. } => InputSpec { views: self.views.clone(), ..InputSpec::default() },
            Body::Sequence { source: SeriesSource::Raw, .. } => {
                InputSpec { views: vec![View::S2], ..InputSpec::default() }
            }
            Body::Sequence { source: SeriesSource::Monthly, .. } => InputSpec { monthly: true, ..InputSpec::default() },
            Body::Sequence { source: SeriesSource::InputFusion, .. } => {
                InputSpec { fused_series: Some(self.views.clone()), ..InputSpec::default() }
            }
        }
    }

    pub fn gate(&self) -> Option<&GatedUnit> {
        match &self.body {
            Body::Fused { fusion: Fusion::Gated(g), .. } => Some(g),
            _ => None,
        }
    }

    pub fn forward(&self, s: &mut Session, batch: &Batch) -> Result<ForwardOutput> {
        let (fused, alpha, representations) = match &self.body {
            Body::Fused { encoders, fusion } => {
                let mut zs = Vec::with_capacity(encoders.len());
                for (view, enc) in encoders {
                    let z = match enc {
                        ViewEncoder::Temporal(e) => e.encode(s, batch.sequence(*view)?)?,
                        ViewEncoder::Static(e) => {
                            let x = s.constant(batch.vector(*view)?.clone());
                            e.encode(s, x)?
                        }
                    };
                    zs.push(z);
                }
                match fusion {
                    Fusion::Gated(g) => {
                        let alpha = g.weights(s, &zs)?;
                        (fuse_weighted_sum(s, &zs, alpha)?, Some(alpha), zs)
                    }
                    Fusion::Static(kind) => (merge_static(s, &zs, *kind)?, None, zs),
                }
            }
            Body::Sequence { source, encoder } => {
                let series = match source {
                    SeriesSource::Raw => batch.sequence(View::S2)?,
                    SeriesSource::Monthly => batch
                        .monthly
                        .as_ref()
                        .ok_or_else(|| Error::Contract("batch has no monthly series".into()))?,
                    SeriesSource::InputFusion => batch
                        .fused_series
                        .as_ref()
                        .ok_or_else(|| Error::Contract("batch has no input-level fusion series".into()))?,
                };
                let z = encoder.encode(s, series)?;
                (z, None, vec![z])
            }
        };
        let prediction = self.head.forward(s, fused)?;
        Ok(ForwardOutput { prediction, alpha, representations })
    }

    /// Eval-mode predictions without recording a tape.
    pub fn predict(&self, batch: &Batch) -> Result<Prediction> {
        let mut s = Session::new(&self.store, Mode::Eval, 0);
        let out = self.forward(&mut s, batch)?;
        let yhat = s.value(out.prediction).data().to_vec();
        let alpha = out.alpha.map(|a| {
            let t = s.value(a);
            let k = t.shape()[1];
            let per_view = t.numel() / (batch.len * k);
            (0..batch.len)
                .map(|i| {
                    (0..k)
                        .map(|v| {
                            let start = (i * k + v) * per_view;
                            t.data()[start..start + per_view].iter().sum::<f64>() / per_view as f64
                        })
                        .collect()
                })
                .collect()
        });
        Ok(Prediction { yhat, alpha })
    }

    /// Splits each linear-head prediction into per-view contributions.
    pub fn decompose(&self, batch: &Batch) -> Result<Vec<Decomposition>> {
        let Head::Linear(head) = &self.head else {
            return Err(Error::Contract("decomposition needs a linear prediction head".into()));
        };
        match self.gate() {
            Some(g) if g.config.granularity == Granularity::Global => {}
            _ => return Err(Error::Contract("decomposition needs global gated fusion".into())),
        }
        let mut s = Session::new(&self.store, Mode::Eval, 0);
        let out = self.forward(&mut s, batch)?;
        let alpha = s.value(out.alpha.expect("gated")).clone();
        let w = self.store.get(head.weight).data().to_vec();
        let bias = self.store.get(head.bias).data()[0];
        let yhat = s.value(out.prediction).data().to_vec();
        let zs: Vec<&Tensor> = out.representations.iter().map(|&z| s.value(z)).collect();
        Ok((0..batch.len)
            .map(|i| {
                let contributions: Vec<f64> =
                    zs.iter().map(|z| z.row(i).iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
                let alpha = alpha.row(i).to_vec();
                let weighted = alpha.iter().zip(&contributions).map(|(a, c)| a * c).collect();
                Decomposition { alpha, contributions, weighted, bias, prediction: yhat[i] }
            })
            .collect())
    }

    /// Trainable parameter groups: one per encoder, the gate, and the head.
    pub fn param_groups(&self) -> Vec<(String, Vec<ParamId>)> {
        let mut groups = Vec::new();
        match &self.body {
            Body::Fused { encoders, fusion } => {
                for (view, enc) in encoders {
                    groups.push((view.name().to_string(), enc.params()));
                }
                if let Fusion::Gated(g) = fusion {
                    groups.push(("gate".to_string(), g.params()));
                }
            }
            Body::Sequence { source, encoder } => {
                let name = if *source == SeriesSource::InputFusion { "input-fusion" } else { "s2" };
                groups.push((name.to_string(), encoder.params()));
            }
        }
        groups.push(("head".to_string(), self.head.params()));
        groups
    }

    pub fn component_counts(&self) -> Vec<(String, usize)> {
        self.param_groups().into_iter().map(|(n, ids)| (n, self.store.count(&ids))).collect()
    }

    pub fn count_params(&self) -> usize {
        self.store.count_all()
    }

    /// Writes `<stem>.bin`, `<stem>.json` (manifest) and `<stem>.config.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        self.store.save(dir, stem)?;
        std::fs::write(dir.join(format!("{stem}.config.json")), serde_json::to_string_pretty(&self.config)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let config: ModelConfig = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.config.json")))?)?;
        let mut model = Self::new(config)?;
        model.store.load(dir, stem)?;
        Ok(model)
    }
}
