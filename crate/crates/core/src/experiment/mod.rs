//! Cross-validated training runs, checkpoint evaluation, and ablation tables.

mod ablation;
mod outputs;
mod pool;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use ablation::{ablation_csv, ablation_variants, run_ablation, AblationAxis, AblationRow, AblationVariant};
pub use outputs::{load_run, write_evaluation, write_training, FoldManifest, RunManifest};
pub use pool::run_parallel;

use crate::data::{FieldDataset, MultiViewSample, NormStats, View};
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate_fusion_weights, coverage_split, field_overlaps, loyo_split, split_metrics, stratified_group_kfold,
    CoverageSplit, EvalReport, Fold, Metrics, SplitKind, SplitPlan, LOW_COVERAGE_RANK,
};
use crate::model::{Model, ModelConfig};
use crate::seeding::{derive_seed, substream};
use crate::training::{predict_samples, train, TrainConfig, TrainHistory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitKind,
    pub folds: usize,
    /// Restricts a leave-one-year-out run to this held-out year.
    pub year: Option<i32>,
    /// Runs only the first folds of the plan.
    pub fold_limit: Option<usize>,
    /// Fraction of training fields held out for early stopping.
    pub holdout: f64,
    /// Master seed; fold, init, shuffle and dropout streams derive from it.
    pub seed: u64,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split: SplitKind::StratifiedGroupKfold,
            folds: 10,
            year: None,
            fold_limit: None,
            holdout: 0.1,
            seed: 0,
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(Error::Config(format!("holdout fraction {} outside (0, 1)", self.holdout)));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        if self.fold_limit == Some(0) {
            return Err(Error::Config("fold limit must be positive".into()));
        }
        Ok(())
    }

    /// The fold plan this configuration trains on. A coverage split trains on k-fold folds.
    pub fn plan(&self, dataset: &FieldDataset) -> Result<SplitPlan> {
        let mut plan = match self.split {
            SplitKind::Loyo => loyo_split(&dataset.field_year)?,
            SplitKind::StratifiedGroupKfold | SplitKind::Coverage => {
                let mut p = stratified_group_kfold(&dataset.field_farm, self.folds, derive_seed(self.seed, "split"))?;
                p.kind = self.split;
                p
            }
        };
        if let Some(year) = self.year {
            if self.split != SplitKind::Loyo {
                return Err(Error::Config("a held-out year needs the loyo split".into()));
            }
            plan.folds.retain(|f| f.year == Some(year));
            if plan.folds.is_empty() {
                return Err(Error::Config(format!("no fields harvested in {year}")));
            }
        }
        if let Some(n) = self.fold_limit {
            plan.folds.truncate(n);
        }
        Ok(plan)
    }
}

/// Label of a fold in reports: the held-out year for LOYO, otherwise the fold index.
pub fn fold_label(fold: &Fold) -> String {
    fold.year.map_or_else(|| fold.id.to_string(), |y| y.to_string())
}

pub fn fold_seed(master: u64, fold: &Fold) -> u64 {
    derive_seed(master, &format!("fold/{}", fold.id))
}

/// Seeded early-stopping holdout: `fraction` of the training fields, at least one, never all.
pub fn inner_holdout(train_fields: &[u32], fraction: f64, seed: u64) -> Result<(Vec<u32>, Vec<u32>)> {
    if train_fields.len() < 2 {
        return Err(Error::Data("a training fold needs at least two fields for the early-stopping holdout".into()));
    }
    let mut fields = train_fields.to_vec();
    fields.sort_unstable();
    fields.shuffle(&mut substream(seed, "holdout"));
    let n = ((fields.len() as f64 * fraction).round() as usize).clamp(1, fields.len() - 1);
    let mut held = fields.split_off(fields.len() - n);
    fields.sort_unstable();
    held.sort_unstable();
    Ok((fields, held))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelPrediction {
    pub pixel_id: u64,
    pub field_id: u32,
    pub y: f64,
    pub yhat: f64,
    pub alpha: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct FoldRun {
    pub fold: Fold,
    pub holdout: Vec<u32>,
    pub history: TrainHistory,
    pub model: Model,
    pub stats: NormStats,
}

fn samples_of<'a>(dataset: &'a FieldDataset, fields: &[u32]) -> Vec<&'a MultiViewSample> {
    let keep: BTreeSet<u32> = fields.iter().copied().collect();
    dataset.samples.iter().filter(|s| keep.contains(&s.field_id)).collect()
}

fn normalized(samples: &[&MultiViewSample], stats: &NormStats) -> Vec<MultiViewSample> {
    samples.iter().map(|s| stats.normalize_sample(s)).collect()
}

/// Fits normalization on the fold's training fields, then trains with early stopping on an inner holdout.
pub fn train_fold(dataset: &FieldDataset, fold: &Fold, config: &ExperimentConfig) -> Result<FoldRun> {
    let seed = fold_seed(config.seed, fold);
    let (fit_fields, holdout) = inner_holdout(&fold.train, config.holdout, seed)?;
    let raw_train: Vec<MultiViewSample> = samples_of(dataset, &fold.train).into_iter().cloned().collect();
    let stats = NormStats::fit(&raw_train)?;
    let fit = normalized(&samples_of(dataset, &fit_fields), &stats);
    let val = normalized(&samples_of(dataset, &holdout), &stats);
    let mut model = Model::new(ModelConfig { seed, ..config.model.clone() })?;
    let train_cfg = TrainConfig { seed, ..config.train.clone() };
    let fit_refs: Vec<&MultiViewSample> = fit.iter().collect();
    let val_refs: Vec<&MultiViewSample> = val.iter().collect();
    let history = train(&mut model, &fit_refs, &val_refs, &stats, &train_cfg)?;
    log::info!(
        "fold {}: best epoch {} of {}, val mse {:.4}",
        fold_label(fold),
        history.best_epoch,
        history.stopped_epoch,
        history.best_val_mse()
    );
    Ok(FoldRun { fold: fold.clone(), holdout, history, model, stats })
}

/// Eval-mode predictions for every pixel of `fields`.
pub fn predict_fields(
    model: &Model,
    stats: &NormStats,
    dataset: &FieldDataset,
    fields: &[u32],
    chunk: usize,
) -> Result<Vec<PixelPrediction>> {
    let raw = samples_of(dataset, fields);
    if raw.is_empty() {
        return Err(Error::Data("no pixels for the requested fields".into()));
    }
    let norm = normalized(&raw, stats);
    let refs: Vec<&MultiViewSample> = norm.iter().collect();
    let p = predict_samples(model, &refs, stats, chunk)?;
    let mut alphas = p.alpha.map(Vec::into_iter);
    Ok(raw
        .iter()
        .zip(p.yhat)
        .map(|(s, yhat)| PixelPrediction {
            pixel_id: s.pixel_id,
            field_id: s.field_id,
            y: s.yield_t_ha,
            yhat,
            alpha: alphas.as_mut().and_then(Iterator::next),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldEvaluation {
    pub label: String,
    pub subfield: Metrics,
    pub field: Metrics,
    /// Validation coverage split with metrics per side; absent below five validation fields.
    pub coverage: Option<CoverageEvaluation>,
    pub overlaps: BTreeMap<u32, f64>,
    pub fold_alpha: Option<Vec<f64>>,
    pub field_alpha: BTreeMap<u32, Vec<f64>>,
    pub predictions: Vec<PixelPrediction>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageEvaluation {
    pub coverages: BTreeMap<u32, f64>,
    pub split: CoverageSplit,
    /// (sub-field, field) metrics on the high and low sides, when each has at least two fields.
    pub high: Option<(Metrics, Metrics)>,
    pub low: Option<(Metrics, Metrics)>,
}

fn side_metrics(preds: &[PixelPrediction], fields: &[u32]) -> Result<Option<(Metrics, Metrics)>> {
    if fields.len() < 2 {
        return Ok(None);
    }
    let keep: BTreeSet<u32> = fields.iter().copied().collect();
    let part: Vec<&PixelPrediction> = preds.iter().filter(|p| keep.contains(&p.field_id)).collect();
    let y: Vec<f64> = part.iter().map(|p| p.y).collect();
    let yhat: Vec<f64> = part.iter().map(|p| p.yhat).collect();
    let ids: Vec<u32> = part.iter().map(|p| p.field_id).collect();
    split_metrics(&y, &yhat, &ids).map(Some)
}

/// Metrics, coverage split, overlaps and fusion-weight means for one fold's validation predictions.
pub fn evaluate_fold(label: String, predictions: Vec<PixelPrediction>, dataset: &FieldDataset) -> Result<FoldEvaluation> {
    let y: Vec<f64> = predictions.iter().map(|p| p.y).collect();
    let yhat: Vec<f64> = predictions.iter().map(|p| p.yhat).collect();
    let ids: Vec<u32> = predictions.iter().map(|p| p.field_id).collect();
    if yhat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "prediction" });
    }
    let fields: BTreeSet<u32> = ids.iter().copied().collect();
    if fields.len() < 2 {
        return Err(Error::Data(format!("fold {label} validates fewer than two fields")));
    }
    let (subfield, field) = split_metrics(&y, &yhat, &ids)?;
    let coverage = if fields.len() >= LOW_COVERAGE_RANK {
        let coverages: BTreeMap<u32, f64> = fields
            .iter()
            .map(|f| dataset.field_coverage.get(f).map(|c| (*f, *c)).ok_or_else(|| Error::Data(format!("field {f} has no coverage"))))
            .collect::<Result<_>>()?;
        let split = coverage_split(&coverages)?;
        let high = side_metrics(&predictions, &split.high)?;
        let low = side_metrics(&predictions, &split.low)?;
        Some(CoverageEvaluation { coverages, split, high, low })
    } else {
        None
    };
    let overlaps = field_overlaps(&y, &yhat, &ids)?;
    let (fold_alpha, field_alpha) = match predictions.iter().map(|p| p.alpha.clone()).collect::<Option<Vec<_>>>() {
        Some(alpha) => {
            let fold = aggregate_fusion_weights(&alpha, &vec![(); alpha.len()])?.remove(&());
            (fold, aggregate_fusion_weights(&alpha, &ids)?)
        }
        None => (None, BTreeMap::new()),
    };
    Ok(FoldEvaluation { label, subfield, field, coverage, overlaps, fold_alpha, field_alpha, predictions })
}

/// Fold-ordered evaluations folded into one report.
pub fn build_report(evaluations: &[FoldEvaluation], views: &[View]) -> EvalReport {
    let mut report = EvalReport { views: views.to_vec(), ..EvalReport::default() };
    let mut overlaps = Vec::new();
    for e in evaluations {
        report.push(e.label.clone(), e.subfield, e.field);
        overlaps.extend(e.overlaps.values().copied());
        if let Some(a) = &e.fold_alpha {
            report.fusion_weights.push((e.label.clone(), a.clone()));
        }
    }
    if !overlaps.is_empty() {
        report.bhattacharyya = Some(overlaps.iter().sum::<f64>() / overlaps.len() as f64);
    }
    report
}

pub struct CrossValidation {
    pub plan: SplitPlan,
    pub runs: Vec<FoldRun>,
    pub evaluations: Vec<FoldEvaluation>,
}

impl CrossValidation {
    pub fn report(&self) -> EvalReport {
        let views = self.runs.first().map(|r| r.model.views().to_vec()).unwrap_or_default();
        build_report(&self.evaluations, &views)
    }
}

pub const PREDICT_CHUNK: usize = 512;

/// Trains and evaluates every fold of the configured plan on the worker pool.
pub fn run_cross_validation(dataset: &FieldDataset, config: &ExperimentConfig) -> Result<CrossValidation> {
    config.validate()?;
    let plan = config.plan(dataset)?;
    let results = run_parallel(plan.folds.len(), config.workers, |i| {
        let fold = &plan.folds[i];
        let run = train_fold(dataset, fold, config)?;
        let preds = predict_fields(&run.model, &run.stats, dataset, &fold.validation, PREDICT_CHUNK)?;
        let eval = evaluate_fold(fold_label(fold), preds, dataset)?;
        Ok((run, eval))
    })?;
    let (runs, evaluations) = results.into_iter().unzip();
    Ok(CrossValidation { plan, runs, evaluations })
}

pub struct RunEvaluation {
    pub manifest: RunManifest,
    pub views: Vec<View>,
    pub evaluations: Vec<FoldEvaluation>,
}

/// Re-evaluates saved fold checkpoints on their validation fields.
pub fn evaluate_run(run_dir: &Path, dataset: &FieldDataset, workers: usize) -> Result<RunEvaluation> {
    let (manifest, folds) = load_run(run_dir)?;
    let known: BTreeSet<u32> = dataset.field_farm.keys().copied().collect();
    for (fold, _, _) in &folds {
        if let Some(f) = fold.validation.iter().chain(&fold.train).find(|f| !known.contains(f)) {
            return Err(Error::Data(format!("checkpoint fold {} refers to field {f} missing from the dataset", fold.id)));
        }
    }
    let evaluations = run_parallel(folds.len(), workers, |i| {
        let (fold, model, stats) = &folds[i];
        let preds = predict_fields(model, stats, dataset, &fold.validation, PREDICT_CHUNK)?;
        evaluate_fold(fold_label(fold), preds, dataset)
    })?;
    let views = folds.first().map(|(_, m, _)| m.views().to_vec()).unwrap_or_default();
    Ok(RunEvaluation { manifest, views, evaluations })
}

/// Per-field means of the linear-head view contributions `C_v` and weighted terms `α_v C_v`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldContribution {
    pub field_id: u32,
    pub contributions: Vec<f64>,
    pub weighted: Vec<f64>,
    pub bias: f64,
}

pub fn field_contributions(
    model: &Model,
    stats: &NormStats,
    dataset: &FieldDataset,
    fields: &[u32],
) -> Result<Vec<FieldContribution>> {
    let raw = samples_of(dataset, fields);
    let norm = normalized(&raw, stats);
    let spec = model.input_spec();
    let mut sums: BTreeMap<u32, (usize, Vec<f64>, Vec<f64>, f64)> = BTreeMap::new();
    for part in norm.chunks(PREDICT_CHUNK) {
        let refs: Vec<&MultiViewSample> = part.iter().collect();
        let batch = crate::data::build_batch(&refs, &spec, stats)?;
        for (s, d) in part.iter().zip(model.decompose(&batch)?) {
            let k = d.contributions.len();
            let e = sums.entry(s.field_id).or_insert_with(|| (0, vec![0.0; k], vec![0.0; k], 0.0));
            e.0 += 1;
            e.1.iter_mut().zip(&d.contributions).for_each(|(a, b)| *a += b);
            e.2.iter_mut().zip(&d.weighted).for_each(|(a, b)| *a += b);
            e.3 += d.bias;
        }
    }
    Ok(sums
        .into_iter()
        .map(|(field_id, (n, c, w, b))| {
            let n = n as f64;
            FieldContribution {
                field_id,
                contributions: c.into_iter().map(|x| x / n).collect(),
                weighted: w.into_iter().map(|x| x / n).collect(),
                bias: b / n,
            }
        })
        .collect())
}
