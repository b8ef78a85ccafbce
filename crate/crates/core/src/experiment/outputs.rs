//! Run-directory layout: checkpoints, manifests and report CSVs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_report, CrossValidation, FoldEvaluation};
use crate::data::{NormStats, View};
use crate::error::{Error, Result};
use crate::evaluation::{coverage_csv, fusion_weights_csv, EvalReport, Fold, Metrics, SplitKind};
use crate::model::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldManifest {
    pub fold: Fold,
    pub checkpoint: String,
    pub holdout: Vec<u32>,
    pub stats_fingerprint: String,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub split: SplitKind,
    pub folds: Vec<FoldManifest>,
}

fn stem(fold: &Fold) -> String {
    format!("fold{}", fold.id)
}

/// Checkpoints, normalization stats and histories per fold, the run manifest, and the evaluation files.
pub fn write_training(dir: &Path, cv: &CrossValidation) -> Result<RunManifest> {
    fs::create_dir_all(dir)?;
    let mut folds = Vec::new();
    for run in &cv.runs {
        let stem = stem(&run.fold);
        run.model.save(dir, &stem)?;
        run.stats.save(&dir.join(format!("{stem}.norm.json")))?;
        run.history.write_csv(&dir.join(format!("{stem}.history.csv")))?;
        folds.push(FoldManifest {
            fold: run.fold.clone(),
            checkpoint: stem,
            holdout: run.holdout.clone(),
            stats_fingerprint: run.stats.fingerprint(),
            best_epoch: run.history.best_epoch,
            stopped_epoch: run.history.stopped_epoch,
        });
    }
    let manifest = RunManifest { split: cv.plan.kind, folds };
    fs::write(dir.join("run.json"), serde_json::to_string_pretty(&manifest)?)?;
    let views = cv.runs.first().map(|r| r.model.views().to_vec()).unwrap_or_default();
    write_evaluation(dir, &cv.evaluations, &views)?;
    Ok(manifest)
}

/// Loads every fold checkpoint listed in `run.json`, checking the stats fingerprints.
pub fn load_run(dir: &Path) -> Result<(RunManifest, Vec<(Fold, Model, NormStats)>)> {
    let path = dir.join("run.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Data(format!("cannot read run manifest {}: {e}", path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    let mut folds = Vec::new();
    for f in &manifest.folds {
        let model = Model::load(dir, &f.checkpoint)?;
        let stats = NormStats::load(&dir.join(format!("{}.norm.json", f.checkpoint)))?;
        if stats.fingerprint() != f.stats_fingerprint {
            return Err(Error::Data(format!("normalization stats of {} do not match the manifest", f.checkpoint)));
        }
        folds.push((f.fold.clone(), model, stats));
    }
    Ok((manifest, folds))
}

fn metric_line(out: &mut String, group: &str, level: &str, m: &Metrics) {
    writeln!(out, "{group},{level},{},{},{},{}", m.mae, m.mape, m.r2, m.n).expect("string write");
}

/// Writes the report CSVs for fold evaluations and returns the report.
pub fn write_evaluation(dir: &Path, evaluations: &[FoldEvaluation], views: &[View]) -> Result<EvalReport> {
    fs::create_dir_all(dir)?;
    let report = build_report(evaluations, views);
    fs::write(dir.join("metrics.csv"), report.metrics_csv())?;
    fs::write(dir.join("summary.csv"), report.summary_csv())?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;

    let mut by_coverage = String::from("fold,level,mae,mape,r2,n\n");
    let mut coverage = String::from("field_id,coverage,split\n");
    let mut overlaps = String::from("fold,field_id,bhattacharyya\n");
    let mut predictions = String::from("fold,pixel_id,field_id,y,yhat");
    let alpha_header = fusion_weights_csv(views, std::iter::empty());
    let has_alpha = evaluations.iter().all(|e| e.fold_alpha.is_some()) && !evaluations.is_empty();
    if has_alpha {
        predictions.push_str(alpha_header.trim_end().trim_start_matches("group"));
    }
    predictions.push('\n');

    let mut field_alpha: Vec<(String, Vec<f64>)> = Vec::new();
    for e in evaluations {
        if let Some(c) = &e.coverage {
            for (side, m) in [("high", &c.high), ("low", &c.low)] {
                if let Some((sub, field)) = m {
                    let group = format!("{}/{side}", e.label);
                    metric_line(&mut by_coverage, &group, "subfield", sub);
                    metric_line(&mut by_coverage, &group, "field", field);
                }
            }
            coverage.push_str(coverage_csv(&c.coverages, &c.split).split_once('\n').map_or("", |(_, rows)| rows));
        }
        for (f, rho) in &e.overlaps {
            writeln!(overlaps, "{},{f},{rho}", e.label).expect("string write");
        }
        for p in &e.predictions {
            write!(predictions, "{},{},{},{},{}", e.label, p.pixel_id, p.field_id, p.y, p.yhat).expect("string write");
            if has_alpha {
                for a in p.alpha.iter().flatten() {
                    write!(predictions, ",{a}").expect("string write");
                }
            }
            predictions.push('\n');
        }
        field_alpha.extend(e.field_alpha.iter().map(|(f, a)| (f.to_string(), a.clone())));
    }
    fs::write(dir.join("metrics_coverage.csv"), by_coverage)?;
    fs::write(dir.join("coverage.csv"), coverage)?;
    fs::write(dir.join("bhattacharyya.csv"), overlaps)?;
    fs::write(dir.join("predictions.csv"), predictions)?;
    if has_alpha {
        fs::write(dir.join("fusion_weights_fold.csv"), report.fusion_weights_csv())?;
        let rows = field_alpha.iter().map(|(g, a)| (g.as_str(), a.as_slice()));
        fs::write(dir.join("fusion_weights_field.csv"), fusion_weights_csv(views, rows))?;
    }
    Ok(report)
}
