//! Regression metrics, field aggregation and histogram overlap.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    /// Percent, over the non-zero targets only.
    pub mape: f64,
    pub r2: f64,
    pub n: usize,
    /// Targets equal to zero, left out of the MAPE average.
    pub mape_excluded: usize,
}

/// MAE, MAPE (%) and R² against the baseline `y_bar`.
pub fn metrics(y: &[f64], yhat: &[f64], y_bar: f64) -> Result<Metrics> {
    if y.len() != yhat.len() {
        return Err(Error::Contract(format!("metrics: {} targets vs {} predictions", y.len(), yhat.len())));
    }
    if y.len() < 2 {
        return Err(Error::Contract("metrics need at least two samples".into()));
    }
    let n = y.len();
    let mut abs = 0.0;
    let mut pct = 0.0;
    let mut excluded = 0;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&t, &p) in y.iter().zip(yhat) {
        let r = t - p;
        abs += r.abs();
        if t == 0.0 {
            excluded += 1;
        } else {
            pct += (r / t).abs();
        }
        ss_res += r * r;
        ss_tot += (t - y_bar) * (t - y_bar);
    }
    let kept = n - excluded;
    if excluded > 0 {
        log::warn!("MAPE: {excluded} zero targets excluded");
    }
    Ok(Metrics {
        mae: abs / n as f64,
        mape: if kept == 0 { f64::NAN } else { 100.0 * pct / kept as f64 },
        r2: 1.0 - ss_res / ss_tot,
        n,
        mape_excluded: excluded,
    })
}

/// [`metrics`] with the mean of `y` as the R² baseline.
pub fn metrics_vs_mean(y: &[f64], yhat: &[f64]) -> Result<Metrics> {
    let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
    metrics(y, yhat, mean)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldMean {
    pub field_id: u32,
    pub pixels: usize,
    pub y: f64,
    pub yhat: f64,
}

/// Per-field means of targets and predictions, ordered by field id.
pub fn field_aggregate(y: &[f64], yhat: &[f64], field_ids: &[u32]) -> Result<Vec<FieldMean>> {
    if y.len() != yhat.len() || y.len() != field_ids.len() {
        return Err(Error::Contract("field_aggregate: length mismatch".into()));
    }
    if y.is_empty() {
        return Err(Error::Contract("field_aggregate: no pixels".into()));
    }
    let mut sums: BTreeMap<u32, (usize, f64, f64)> = BTreeMap::new();
    for ((&t, &p), &f) in y.iter().zip(yhat).zip(field_ids) {
        let e = sums.entry(f).or_default();
        e.0 += 1;
        e.1 += t;
        e.2 += p;
    }
    Ok(sums
        .into_iter()
        .map(|(field_id, (k, t, p))| FieldMean { field_id, pixels: k, y: t / k as f64, yhat: p / k as f64 })
        .collect())
}

/// Sub-field and field-level metrics for one validation split.
pub fn split_metrics(y: &[f64], yhat: &[f64], field_ids: &[u32]) -> Result<(Metrics, Metrics)> {
    let pixel = metrics_vs_mean(y, yhat)?;
    let fields = field_aggregate(y, yhat, field_ids)?;
    let fy: Vec<f64> = fields.iter().map(|f| f.y).collect();
    let fp: Vec<f64> = fields.iter().map(|f| f.yhat).collect();
    Ok((pixel, metrics_vs_mean(&fy, &fp)?))
}

const NORMALIZATION_TOL: f64 = 1e-9;

/// Overlap Σ√(p·q) of two normalized histograms on shared bins.
pub fn bhattacharyya(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::Contract("bhattacharyya: histograms need identical non-empty bins".into()));
    }
    for h in [p, q] {
        let total: f64 = h.iter().sum();
        if h.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Contract(format!("bhattacharyya: histogram sums to {total}, expected 1")));
        }
    }
    let rho: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
    Ok(rho.min(1.0))
}

/// Normalized histogram of `values` on `bins` equal-width bins over [lo, hi].
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if values.is_empty() || bins == 0 || !(hi >= lo) {
        return Err(Error::Contract("histogram: need values, bins and lo <= hi".into()));
    }
    let mut h = vec![0.0; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let b = if width > 0.0 { ((v - lo) / width).floor() as isize } else { 0 };
        h[b.clamp(0, bins as isize - 1) as usize] += 1.0;
    }
    let total = values.len() as f64;
    h.iter_mut().for_each(|x| *x /= total);
    Ok(h)
}

pub const OVERLAP_BINS: usize = 50;

/// Bhattacharyya overlap of target and prediction distributions within one field.
pub fn distribution_overlap(y: &[f64], yhat: &[f64]) -> Result<f64> {
    let lo = y.iter().chain(yhat).copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().chain(yhat).copied().fold(f64::NEG_INFINITY, f64::max);
    bhattacharyya(&histogram(y, lo, hi, OVERLAP_BINS)?, &histogram(yhat, lo, hi, OVERLAP_BINS)?)
}

/// Per-field overlaps keyed by field id.
pub fn field_overlaps(y: &[f64], yhat: &[f64], field_ids: &[u32]) -> Result<BTreeMap<u32, f64>> {
    if y.len() != yhat.len() || y.len() != field_ids.len() {
        return Err(Error::Contract("field_overlaps: length mismatch".into()));
    }
    let mut groups: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((&t, &p), &f) in y.iter().zip(yhat).zip(field_ids) {
        let g = groups.entry(f).or_default();
        g.0.push(t);
        g.1.push(p);
    }
    groups.into_iter().map(|(f, (t, p))| Ok((f, distribution_overlap(&t, &p)?))).collect()
}

/// Mean weight vector per group, keyed and ordered by group.
pub fn aggregate_fusion_weights<G: Ord + Clone>(alpha: &[Vec<f64>], groups: &[G]) -> Result<BTreeMap<G, Vec<f64>>> {
    if alpha.len() != groups.len() {
        return Err(Error::Contract("aggregate_fusion_weights: length mismatch".into()));
    }
    let width = alpha.first().map_or(0, Vec::len);
    if alpha.is_empty() || width == 0 || alpha.iter().any(|a| a.len() != width) {
        return Err(Error::Contract("aggregate_fusion_weights: need equal-width, non-empty rows".into()));
    }
    let mut sums: BTreeMap<G, (usize, Vec<f64>)> = BTreeMap::new();
    for (a, g) in alpha.iter().zip(groups) {
        let e = sums.entry(g.clone()).or_insert_with(|| (0, vec![0.0; width]));
        e.0 += 1;
        e.1.iter_mut().zip(a).for_each(|(s, x)| *s += x);
    }
    Ok(sums
        .into_iter()
        .map(|(g, (k, s))| (g, s.into_iter().map(|x| x / k as f64).collect()))
        .collect())
}
