//! Ablation grids over views, merge functions, gate variants and regularization.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{build_report, evaluate_fold, fold_label, predict_fields, run_parallel, train_fold, ExperimentConfig, PREDICT_CHUNK};
use crate::data::{FieldDataset, View};
use crate::error::{Error, Result};
use crate::evaluation::{Level, LevelSummary};
use crate::fusion::{GateActivation, GateConfig, GateInput, Granularity, MergeKind};
use crate::model::{Merger, ModelConfig, ModelKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationAxis {
    Views,
    Merger,
    GuVariant,
    Regularization,
}

impl AblationAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "views" => Ok(Self::Views),
            "merger" => Ok(Self::Merger),
            "gu-variant" => Ok(Self::GuVariant),
            "regularization" => Ok(Self::Regularization),
            other => Err(Error::Config(format!("unknown ablation axis '{other}'"))),
        }
    }

    /// Row-label columns of the comparison table.
    pub fn label_columns(self) -> &'static [&'static str] {
        match self {
            Self::Views => &["model", "input_views"],
            Self::Merger => &["approach", "merge"],
            Self::GuVariant => &["gu_input", "across"],
            Self::Regularization => &["technique"],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationVariant {
    pub labels: Vec<String>,
    pub model: ModelConfig,
}

fn variant(labels: &[&str], model: ModelConfig) -> AblationVariant {
    AblationVariant { labels: labels.iter().map(|s| s.to_string()).collect(), model }
}

/// Table rows for `axis`, built from `base` with only the ablated setting changed.
pub fn ablation_variants(axis: AblationAxis, base: &ModelConfig) -> Vec<AblationVariant> {
    let mvgf = ModelConfig { kind: ModelKind::Mvgf, views: View::ALL.to_vec(), ..base.clone() };
    let gated = |g: GateConfig| ModelConfig { merger: Merger::Gated(g), ..mvgf.clone() };
    let merged = |m: MergeKind| ModelConfig { merger: Merger::Static(m), ..mvgf.clone() };
    let with_views = |v: &[View]| ModelConfig { views: v.to_vec(), ..mvgf.clone() };
    let softmax = GateConfig::default();
    match axis {
        AblationAxis::Views => vec![
            variant(&["lstm", "s2-r"], ModelConfig { kind: ModelKind::LstmS2r, ..base.clone() }),
            variant(&["mvgf", "s2-r+weather"], with_views(&[View::S2, View::Weather])),
            variant(&["mvgf", "s2-r+dem"], with_views(&[View::S2, View::Dem])),
            variant(&["mvgf", "s2-r+soil"], with_views(&[View::S2, View::Soil])),
            variant(&["mvgf", "s2-r+weather+dem+soil"], mvgf.clone()),
        ],
        AblationAxis::Merger => vec![
            variant(&["feature-fusion", "product"], merged(MergeKind::Product)),
            variant(&["feature-fusion", "maximum"], merged(MergeKind::Maximum)),
            variant(&["feature-fusion", "concat"], merged(MergeKind::Concat)),
            variant(&["feature-fusion", "uniform-sum"], merged(MergeKind::UniformSum)),
            variant(
                &["adaptive-fusion", "sigmoid-weighted-sum"],
                gated(GateConfig { activation: GateActivation::Sigmoid, ..softmax }),
            ),
            variant(&["adaptive-fusion", "softmax-weighted-sum"], gated(softmax)),
        ],
        AblationAxis::GuVariant => vec![
            variant(
                &["average", "views+features"],
                gated(GateConfig { input: GateInput::Average, granularity: Granularity::FeatureWise, ..softmax }),
            ),
            variant(&["concat", "views+features"], gated(GateConfig { granularity: Granularity::FeatureWise, ..softmax })),
            variant(&["concat", "views"], gated(softmax)),
        ],
        AblationAxis::Regularization => {
            let p = if base.dropout > 0.0 { base.dropout } else { ModelConfig::default().dropout };
            let reg = |bn: bool, dropout: f64| ModelConfig { batch_norm: bn, dropout, ..gated(softmax) };
            vec![
                variant(&["none"], reg(false, 0.0)),
                variant(&["dropout"], reg(false, p)),
                variant(&["bn"], reg(true, 0.0)),
                variant(&["bn+dropout"], reg(true, p)),
            ]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub labels: Vec<String>,
    pub field: LevelSummary,
    pub subfield: LevelSummary,
}

/// Cross-validates every variant of `axis`; all variants share the fold plan and fold seeds.
pub fn run_ablation(dataset: &FieldDataset, axis: AblationAxis, config: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    config.validate()?;
    let plan = config.plan(dataset)?;
    let variants = ablation_variants(axis, &config.model);
    let per_variant = plan.folds.len();
    let cells = run_parallel(variants.len() * per_variant, config.workers, |i| {
        let (v, f) = (i / per_variant, i % per_variant);
        let cfg = ExperimentConfig { model: variants[v].model.clone(), ..config.clone() };
        let fold = &plan.folds[f];
        let run = train_fold(dataset, fold, &cfg)?;
        let preds = predict_fields(&run.model, &run.stats, dataset, &fold.validation, PREDICT_CHUNK)?;
        let mut eval = evaluate_fold(fold_label(fold), preds, dataset)?;
        eval.predictions.clear();
        log::info!("ablation {}: fold {} done", variants[v].labels.join("/"), fold_label(fold));
        Ok(eval)
    })?;
    Ok(variants
        .iter()
        .zip(cells.chunks(per_variant))
        .map(|(v, evals)| {
            let report = build_report(evals, &[]);
            AblationRow {
                labels: v.labels.clone(),
                field: report.summary(Level::Field).expect("at least one fold"),
                subfield: report.summary(Level::Subfield).expect("at least one fold"),
            }
        })
        .collect())
}

/// Label columns, then field and sub-field MAE, MAPE and R² means across folds.
pub fn ablation_csv(axis: AblationAxis, rows: &[AblationRow], with_std: bool) -> String {
    let mut out = axis.label_columns().join(",");
    for level in ["field", "subfield"] {
        for m in ["mae", "mape", "r2"] {
            write!(out, ",{level}_{m}").expect("string write");
            if with_std {
                write!(out, ",{level}_{m}_std").expect("string write");
            }
        }
    }
    out.push('\n');
    for r in rows {
        out.push_str(&r.labels.join(","));
        for s in [&r.field, &r.subfield] {
            for m in [s.mae, s.mape, s.r2] {
                write!(out, ",{}", m.mean).expect("string write");
                if with_std {
                    write!(out, ",{}", m.std).expect("string write");
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_counts_follow_tables() {
        let base = ModelConfig::default();
        let counts: Vec<usize> = [AblationAxis::Views, AblationAxis::Merger, AblationAxis::GuVariant, AblationAxis::Regularization]
            .iter()
            .map(|&a| ablation_variants(a, &base).len())
            .collect();
        assert_eq!(counts, vec![5, 6, 3, 4]);
        for axis in [AblationAxis::Views, AblationAxis::Merger, AblationAxis::GuVariant, AblationAxis::Regularization] {
            for v in ablation_variants(axis, &base) {
                assert!(v.model.validate().is_ok());
                assert_eq!(v.labels.len(), axis.label_columns().len());
            }
        }
        assert!(AblationAxis::parse("depth").is_err());
    }
}
