//! Assembling model inputs for a set of (normalized) pixels.

use super::series::{build_input_fusion_series, monthly_sample_s2m, pad_s2, pad_weather, PaddedSeries};
use super::{MultiViewSample, NormStats, View, S2_FEATURES, WEATHER_FEATURES};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::SeqBatch;

/// Which inputs a model consumes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InputSpec {
    /// Raw views fed to their own encoders.
    pub views: Vec<View>,
    /// 24-step monthly optical series.
    pub monthly: bool,
    /// Input-level fusion series over these views.
    pub fused_series: Option<Vec<View>>,
}

/// Time-major tensors for a batch. Trailing steps that are padding for every
/// pixel are dropped; they would be skipped by the recurrence anyway.
#[derive(Clone, Debug)]
pub struct Batch {
    pub len: usize,
    pub s2: Option<SeqBatch>,
    pub weather: Option<SeqBatch>,
    pub dem: Option<Tensor>,
    pub soil: Option<Tensor>,
    pub monthly: Option<SeqBatch>,
    pub fused_series: Option<SeqBatch>,
    pub targets: Vec<f64>,
}

impl Batch {
    pub fn sequence(&self, view: View) -> Result<&SeqBatch> {
        let seq = match view {
            View::S2 => self.s2.as_ref(),
            View::Weather => self.weather.as_ref(),
            _ => None,
        };
        seq.ok_or_else(|| Error::Contract(format!("batch has no {} series", view.name())))
    }

    pub fn vector(&self, view: View) -> Result<&Tensor> {
        let t = match view {
            View::Dem => self.dem.as_ref(),
            View::Soil => self.soil.as_ref(),
            _ => None,
        };
        t.ok_or_else(|| Error::Contract(format!("batch has no {} vectors", view.name())))
    }
}

fn time_major(series: &[PaddedSeries]) -> Result<SeqBatch> {
    let b = series.len();
    let f = series[0].features;
    let t = series.iter().map(PaddedSeries::used_len).max().unwrap_or(0).max(1);
    let mut data = Vec::with_capacity(t * b * f);
    let mut mask = Vec::with_capacity(t * b);
    for step in 0..t {
        for s in series {
            data.extend_from_slice(s.row(step));
            mask.push(s.mask[step]);
        }
    }
    SeqBatch::new(Tensor::new(vec![t, b, f], data)?, mask)
}

fn vectors(samples: &[&MultiViewSample], width: usize, pick: impl Fn(&MultiViewSample) -> &[f64]) -> Result<Tensor> {
    let data: Vec<f64> = samples.iter().flat_map(|s| pick(s).iter().copied()).collect();
    Tensor::matrix(samples.len(), width, data)
}

/// `samples` must already be min-max scaled with `stats`; the interval
/// weather sums of the fusion series are scaled here.
pub fn build_batch(samples: &[&MultiViewSample], spec: &InputSpec, stats: &NormStats) -> Result<Batch> {
    if samples.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let mut batch = Batch {
        len: samples.len(),
        s2: None,
        weather: None,
        dem: None,
        soil: None,
        monthly: None,
        fused_series: None,
        targets: samples.iter().map(|s| s.yield_t_ha).collect(),
    };
    for &view in &spec.views {
        match view {
            View::S2 => batch.s2 = Some(time_major(&samples.iter().map(|s| pad_s2(s)).collect::<Result<Vec<_>>>()?)?),
            View::Weather => {
                batch.weather =
                    Some(time_major(&samples.iter().map(|s| pad_weather(s)).collect::<Result<Vec<_>>>()?)?)
            }
            View::Dem => batch.dem = Some(vectors(samples, view.features(), |s| &s.dem)?),
            View::Soil => batch.soil = Some(vectors(samples, view.features(), |s| &s.soil)?),
        }
    }
    if spec.monthly {
        let series = samples
            .iter()
            .map(|s| monthly_sample_s2m(s)?.series(s))
            .collect::<Result<Vec<_>>>()?;
        batch.monthly = Some(time_major(&series)?);
    }
    if let Some(views) = &spec.fused_series {
        let mut series = samples
            .iter()
            .map(|s| build_input_fusion_series(s, views))
            .collect::<Result<Vec<_>>>()?;
        if views.contains(&View::Weather) {
            for s in &mut series {
                for t in (0..s.steps()).filter(|&t| s.mask[t]) {
                    let row = &mut s.values[t * s.features + S2_FEATURES..t * s.features + S2_FEATURES + WEATHER_FEATURES];
                    for (x, r) in row.iter_mut().zip(&stats.weather_sum) {
                        *x = r.apply(*x);
                    }
                }
            }
        }
        batch.fused_series = Some(time_major(&series)?);
    }
    Ok(batch)
}
