use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use mvgf_core::data::{generate_synthetic_dataset, read_dataset, write_dataset, FieldDataset};
use mvgf_core::evaluation::{fusion_weights_csv, Level};
use mvgf_core::experiment::{
    ablation_csv, evaluate_fold, evaluate_run, field_contributions, fold_label, load_run, predict_fields,
    run_ablation, run_cross_validation, write_evaluation, write_training, PREDICT_CHUNK,
};
use mvgf_core::model::ModelKind;
use mvgf_core::{Error, Result};

use crate::config::RunConfig;

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.path("out")?;
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.txt"), cfg.echo())?;
    Ok(out)
}

fn load_dataset(cfg: &RunConfig) -> Result<FieldDataset> {
    let path = cfg.path("dataset")?;
    let (dataset, _) = read_dataset(&path).map_err(|e| match e {
        Error::Io(io) => Error::Data(format!("cannot read dataset {}: {io}", path.display())),
        other => other,
    })?;
    log::info!("loaded {} pixels in {} fields from {}", dataset.len(), dataset.field_farm.len(), path.display());
    Ok(dataset)
}

fn print_summary(report: &mvgf_core::evaluation::EvalReport) {
    for level in [Level::Subfield, Level::Field] {
        if let Some(s) = report.summary(level) {
            println!(
                "{:<8} MAE {:.3} ± {:.3}  MAPE {:.1} ± {:.1}  R² {:.3} ± {:.3}",
                level.name(),
                s.mae.mean,
                s.mae.std,
                s.mape.mean,
                s.mape.std,
                s.r2.mean,
                s.r2.std
            );
        }
    }
    if let Some(rho) = report.bhattacharyya {
        println!("mean per-field Bhattacharyya {rho:.3}");
    }
}

pub fn generate(cfg: &RunConfig) -> Result<()> {
    let generator = cfg.generator()?;
    let out = prepare_out(cfg)?;
    let dataset = generate_synthetic_dataset(&generator)?;
    let path = out.join("dataset.jsonl");
    write_dataset(&path, &dataset, Some(&generator))?;
    fs::write(out.join("generator.json"), serde_json::to_string_pretty(&generator)?)?;
    let n = dataset.len() as f64;
    let mean = dataset.samples.iter().map(|s| s.yield_t_ha).sum::<f64>() / n;
    let var = dataset.samples.iter().map(|s| (s.yield_t_ha - mean).powi(2)).sum::<f64>() / n;
    println!(
        "wrote {} pixels in {} fields to {} (yield {mean:.2} ± {:.2} t/ha)",
        dataset.len(),
        dataset.field_farm.len(),
        path.display(),
        var.sqrt()
    );
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let experiment = cfg.experiment()?;
    let dataset = load_dataset(cfg)?;
    let out = prepare_out(cfg)?;
    let cv = run_cross_validation(&dataset, &experiment)?;
    write_training(&out, &cv)?;
    println!("trained {} folds into {}", cv.runs.len(), out.display());
    print_summary(&cv.report());
    Ok(())
}

fn run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let run = cfg.path("run")?;
    if !run.join("run.json").exists() {
        return Err(Error::Data(format!("{} holds no training run", run.display())));
    }
    Ok(run)
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let run = run_dir(cfg)?;
    let dataset = load_dataset(cfg)?;
    let out = prepare_out(cfg)?;
    let evaluated = evaluate_run(&run, &dataset, cfg.workers()?)?;
    let report = write_evaluation(&out, &evaluated.evaluations, &evaluated.views)?;
    println!("evaluated {} folds into {}", evaluated.evaluations.len(), out.display());
    print_summary(&report);
    Ok(())
}

pub fn ablate(cfg: &RunConfig) -> Result<()> {
    let axis = cfg.axis()?;
    let experiment = cfg.experiment()?;
    let dataset = load_dataset(cfg)?;
    let out = prepare_out(cfg)?;
    let rows = run_ablation(&dataset, axis, &experiment)?;
    let name = cfg.get("axis").replace('-', "_");
    let table = ablation_csv(axis, &rows, false);
    fs::write(out.join(format!("ablation_{name}.csv")), &table)?;
    fs::write(out.join(format!("ablation_{name}_std.csv")), ablation_csv(axis, &rows, true))?;
    print!("{table}");
    Ok(())
}

/// Fusion weights per fold and field, plus per-view contributions for the linear-head model.
pub fn weights(cfg: &RunConfig) -> Result<()> {
    let run = run_dir(cfg)?;
    let dataset = load_dataset(cfg)?;
    let out = prepare_out(cfg)?;
    let (_, folds) = load_run(&run)?;
    let mut fold_rows = Vec::new();
    let mut field_rows = Vec::new();
    let mut contributions = String::new();
    for (fold, model, stats) in &folds {
        if model.gate().is_none() {
            return Err(Error::Config(format!("checkpoint {} has no gated fusion weights", fold.id)));
        }
        let views = model.views();
        let preds = predict_fields(model, stats, &dataset, &fold.validation, PREDICT_CHUNK)?;
        let eval = evaluate_fold(fold_label(fold), preds, &dataset)?;
        fold_rows.push((eval.label.clone(), eval.fold_alpha.clone().expect("gated model")));
        field_rows.extend(eval.field_alpha.iter().map(|(f, a)| (f.to_string(), a.clone())));
        if model.config.kind == ModelKind::MvgfLr {
            if contributions.is_empty() {
                contributions.push_str("fold,field_id");
                for prefix in ["c", "weighted"] {
                    for v in views {
                        write!(contributions, ",{prefix}_{}", v.name()).expect("string write");
                    }
                }
                contributions.push_str(",bias\n");
            }
            for fc in field_contributions(model, stats, &dataset, &fold.validation)? {
                write!(contributions, "{},{}", eval.label, fc.field_id).expect("string write");
                for x in fc.contributions.iter().chain(&fc.weighted) {
                    write!(contributions, ",{x}").expect("string write");
                }
                writeln!(contributions, ",{}", fc.bias).expect("string write");
            }
        }
    }
    let views = folds.first().map(|(_, m, _)| m.views().to_vec()).unwrap_or_default();
    let write = |name: &str, rows: &[(String, Vec<f64>)]| -> Result<()> {
        let csv = fusion_weights_csv(&views, rows.iter().map(|(g, a)| (g.as_str(), a.as_slice())));
        fs::write(out.join(name), csv)?;
        Ok(())
    };
    write("fusion_weights_fold.csv", &fold_rows)?;
    write("fusion_weights_field.csv", &field_rows)?;
    if !contributions.is_empty() {
        fs::write(out.join("contributions_field.csv"), contributions)?;
    }
    print!("{}", fs::read_to_string(out.join("fusion_weights_fold.csv"))?);
    Ok(())
}

