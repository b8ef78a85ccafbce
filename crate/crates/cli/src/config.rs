//! Flat `key = value` run configuration: defaults, then a config file, then command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mvgf_core::data::{GeneratorConfig, View};
use mvgf_core::encoders::Pooling;
use mvgf_core::evaluation::SplitKind;
use mvgf_core::experiment::{AblationAxis, ExperimentConfig};
use mvgf_core::fusion::{GateActivation, GateConfig, GateInput, Granularity, MergeKind};
use mvgf_core::model::{Merger, ModelConfig, ModelKind};
use mvgf_core::training::TrainConfig;
use mvgf_core::{Error, Result};

/// Every accepted key with its default. An empty default means "unset".
const DEFAULTS: &[(&str, &str)] = &[
    ("command", ""),
    ("dataset", ""),
    ("out", "runs/latest"),
    ("run", ""),
    ("seed", "0"),
    ("workers", "1"),
    // generator
    ("preset", "arg-s-like"),
    ("n_farms", ""),
    ("fields_per_farm", ""),
    ("pixels_per_field", ""),
    ("years", ""),
    ("cloud_rate", ""),
    ("noise", ""),
    ("signal", ""),
    // model
    ("model", "mvgf"),
    ("views", "s2,weather,dem,soil"),
    ("merger", "gated-softmax"),
    ("granularity", "global"),
    ("gu_input", "concat"),
    ("bn", "true"),
    ("dropout", "0.3"),
    ("d", "128"),
    ("hidden", "128"),
    ("lstm_layers", "2"),
    ("pooling", "last-state"),
    // protocol
    ("split", "stratified-group-kfold"),
    ("folds", "10"),
    ("year", ""),
    ("fold_limit", ""),
    ("holdout", "0.1"),
    ("axis", "views"),
    // optimisation
    ("learning_rate", "0.001"),
    ("weight_decay", "0.0001"),
    ("batch_size", "1024"),
    ("max_epochs", "50"),
    ("patience", "14"),
    ("beta1", "0.9"),
    ("beta2", "0.999"),
    ("eps", "1e-8"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn parse_lines(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{origin}:{}: expected `key = value`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn new() -> Self {
        Self { values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match self.values.get_mut(&key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        for (k, v) in parse_lines(&text, &path.display().to_string())? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
        self.set(k, v)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        let raw = self.get(key);
        if raw.is_empty() {
            return Ok(None);
        }
        raw.parse().map(Some).map_err(|_| Error::Config(format!("invalid value '{raw}' for {key}")))
    }

    fn req<T: FromStr>(&self, key: &str) -> Result<T> {
        self.opt(key)?.ok_or_else(|| Error::Config(format!("{key} must be set")))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.opt::<PathBuf>(key)?.ok_or_else(|| Error::Config(format!("{key} must be set")))
    }

    /// The merged configuration, one `key = value` per line in key order.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            writeln!(out, "{k} = {v}").expect("string write");
        }
        out
    }

    pub fn seed(&self) -> Result<u64> {
        self.req("seed")
    }

    pub fn workers(&self) -> Result<usize> {
        match self.req("workers")? {
            0 => Err(Error::Config("workers must be positive".into())),
            n => Ok(n),
        }
    }

    pub fn generator(&self) -> Result<GeneratorConfig> {
        let mut g = GeneratorConfig::preset(self.get("preset"), self.seed()?)?;
        if let Some(v) = self.opt("n_farms")? {
            g.n_farms = v;
        }
        if let Some(v) = self.opt("fields_per_farm")? {
            g.fields_per_farm = v;
        }
        if let Some(v) = self.opt("pixels_per_field")? {
            g.pixels_per_field = v;
        }
        if let Some(v) = self.opt("cloud_rate")? {
            g.cloud_rate = v;
        }
        if let Some(v) = self.opt("noise")? {
            g.noise = v;
        }
        if !self.get("years").is_empty() {
            g.years = list(self.get("years"), |s| {
                s.parse().map_err(|_| Error::Config(format!("invalid year '{s}'")))
            })?;
        }
        if !self.get("signal").is_empty() {
            let w: Vec<f64> = list(self.get("signal"), |s| {
                s.parse().map_err(|_| Error::Config(format!("invalid signal weight '{s}'")))
            })?;
            let [s2, weather, dem, soil] = w[..] else {
                return Err(Error::Config("signal needs four weights: s2,weather,dem,soil".into()));
            };
            g.informativeness = mvgf_core::data::ViewWeights { s2, weather, dem, soil };
        }
        g.validate()?;
        Ok(g)
    }

    pub fn model(&self) -> Result<ModelConfig> {
        let kind = ModelKind::parse(self.get("model"))?;
        let granularity = match self.get("granularity") {
            "global" => Granularity::Global,
            "feature-wise" => Granularity::FeatureWise,
            other => return Err(Error::Config(format!("unknown granularity '{other}'"))),
        };
        let input = match self.get("gu_input") {
            "concat" => GateInput::Concat,
            "average" => GateInput::Average,
            other => return Err(Error::Config(format!("unknown gate input '{other}'"))),
        };
        let gate = |activation| Merger::Gated(GateConfig { input, activation, granularity });
        let merger = match self.get("merger") {
            "gated-softmax" => gate(GateActivation::Softmax),
            "gated-sigmoid" => gate(GateActivation::Sigmoid),
            "concat" => Merger::Static(MergeKind::Concat),
            "product" => Merger::Static(MergeKind::Product),
            "maximum" => Merger::Static(MergeKind::Maximum),
            "uniform-sum" => Merger::Static(MergeKind::UniformSum),
            other => return Err(Error::Config(format!("unknown merger '{other}'"))),
        };
        let pooling = match self.get("pooling") {
            "last-state" => Pooling::LastState,
            "attention" => Pooling::Attention,
            other => return Err(Error::Config(format!("unknown pooling '{other}'"))),
        };
        let views = list(self.get("views"), View::parse)?;
        if views.is_empty() {
            return Err(Error::Config("views must name at least one view".into()));
        }
        let cfg = ModelConfig {
            kind,
            views,
            merger,
            d: self.req("d")?,
            hidden: self.req("hidden")?,
            lstm_layers: self.req("lstm_layers")?,
            pooling,
            batch_norm: self.req("bn")?,
            dropout: self.req("dropout")?,
            seed: self.seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.req("learning_rate")?,
            weight_decay: self.req("weight_decay")?,
            batch_size: self.req("batch_size")?,
            max_epochs: self.req("max_epochs")?,
            patience: self.req("patience")?,
            beta1: self.req("beta1")?,
            beta2: self.req("beta2")?,
            eps: self.req("eps")?,
            seed: self.seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let cfg = ExperimentConfig {
            model: self.model()?,
            train: self.train()?,
            split: SplitKind::parse(self.get("split"))?,
            folds: self.req("folds")?,
            year: self.opt("year")?,
            fold_limit: self.opt("fold_limit")?,
            holdout: self.req("holdout")?,
            seed: self.seed()?,
            workers: self.req("workers")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn axis(&self) -> Result<AblationAxis> {
        AblationAxis::parse(self.get("axis"))
    }
}

fn list<T>(raw: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(parse).collect()
}
