//! Fold-level reports and their CSV forms.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use super::splits::CoverageSplit;
use crate::data::View;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    Field,
    Subfield,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Field => "field",
            Level::Subfield => "subfield",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// Fold index, year, or split label.
    pub group: String,
    pub level: Level,
    pub metrics: Metrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub mae: MeanStd,
    pub mape: MeanStd,
    pub r2: MeanStd,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<MetricRow>,
    /// Mean per-field overlap between target and prediction histograms.
    pub bhattacharyya: Option<f64>,
    pub views: Vec<View>,
    /// Mean fusion weights per group, in `views` order.
    pub fusion_weights: Vec<(String, Vec<f64>)>,
}

impl EvalReport {
    pub fn push(&mut self, group: impl Into<String>, subfield: Metrics, field: Metrics) {
        let group = group.into();
        self.rows.push(MetricRow { group: group.clone(), level: Level::Subfield, metrics: subfield });
        self.rows.push(MetricRow { group, level: Level::Field, metrics: field });
    }

    pub fn summary(&self, level: Level) -> Option<LevelSummary> {
        let rows: Vec<&Metrics> = self.rows.iter().filter(|r| r.level == level).map(|r| &r.metrics).collect();
        if rows.is_empty() {
            return None;
        }
        let pick = |f: fn(&Metrics) -> f64| MeanStd::of(&rows.iter().map(|m| f(m)).collect::<Vec<_>>());
        Some(LevelSummary { mae: pick(|m| m.mae), mape: pick(|m| m.mape), r2: pick(|m| m.r2) })
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("fold,level,mae,mape,r2,n\n");
        for r in &self.rows {
            let m = &r.metrics;
            writeln!(out, "{},{},{},{},{},{}", r.group, r.level.name(), m.mae, m.mape, m.r2, m.n).expect("string write");
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("level,mae_mean,mae_std,mape_mean,mape_std,r2_mean,r2_std\n");
        for level in [Level::Subfield, Level::Field] {
            if let Some(s) = self.summary(level) {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    level.name(),
                    s.mae.mean,
                    s.mae.std,
                    s.mape.mean,
                    s.mape.std,
                    s.r2.mean,
                    s.r2.std
                )
                .expect("string write");
            }
        }
        out
    }

    pub fn fusion_weights_csv(&self) -> String {
        fusion_weights_csv(&self.views, self.fusion_weights.iter().map(|(g, a)| (g.as_str(), a.as_slice())))
    }
}

fn weight_column(view: View) -> &'static str {
    match view {
        View::S2 => "alpha_s2",
        View::Weather => "alpha_w",
        View::Dem => "alpha_dem",
        View::Soil => "alpha_soil",
    }
}

pub fn fusion_weights_csv<'a>(views: &[View], rows: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> String {
    let mut out = String::from("group");
    for &v in views {
        out.push(',');
        out.push_str(weight_column(v));
    }
    out.push('\n');
    for (group, alpha) in rows {
        out.push_str(group);
        for a in alpha {
            write!(out, ",{a}").expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn coverage_csv(coverages: &BTreeMap<u32, f64>, split: &CoverageSplit) -> String {
    let mut out = String::from("field_id,coverage,split\n");
    for (&field, &c) in coverages {
        let label = if split.is_low(field) { "low" } else { "high" };
        writeln!(out, "{field},{c},{label}").expect("string write");
    }
    out
}
