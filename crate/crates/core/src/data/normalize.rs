//! Min-max scaling fitted on training pixels.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::series::{interval_weather_sums, monthly_sample_s2m};
use super::{
    soil_names, FieldDataset, MultiViewSample, DEM_NAMES, S2_BANDS, S2_BAND_NAMES, WEATHER_FEATURES, WEATHER_NAMES,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    fn fit(name: &str, values: impl Iterator<Item = f64>) -> Self {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        if !min.is_finite() {
            log::warn!("feature {name} has no training values; using [0, 1]");
            return Self { min: 0.0, max: 1.0 };
        }
        if max <= min {
            log::warn!("feature {name} is constant at {min}; widening its range to 1");
            max = min + 1.0;
        }
        Self { min, max }
    }
}

/// Per-feature ranges for every view. `weather_sum` scales the interval sums
/// of the input-level fusion series, which are built from scaled daily weather.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub s2: Vec<FeatureRange>,
    pub weather: Vec<FeatureRange>,
    pub dem: Vec<FeatureRange>,
    pub soil: Vec<FeatureRange>,
    pub weather_sum: Vec<FeatureRange>,
}

fn scale_all(ranges: &[FeatureRange], xs: &mut [f64]) {
    for (x, r) in xs.iter_mut().zip(ranges) {
        *x = r.apply(*x);
    }
}

impl NormStats {
    /// Optical ranges use only observations labelled vegetation or not-vegetated.
    pub fn fit(train: &[MultiViewSample]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Data("cannot fit normalization on no samples".into()));
        }
        let clean: Vec<&[f64]> = train
            .iter()
            .flat_map(|s| s.s2.iter())
            .filter(|o| matches!(o.scl, 4 | 5))
            .map(|o| o.bands.as_slice())
            .collect();
        let s2 = (0..S2_BANDS)
            .map(|b| FeatureRange::fit(S2_BAND_NAMES[b], clean.iter().map(|bands| bands[b])))
            .collect();
        let weather = (0..WEATHER_FEATURES)
            .map(|f| {
                let values = train.iter().flat_map(|s| s.weather.iter().map(move |w| w.features[f]));
                FeatureRange::fit(WEATHER_NAMES[f], values)
            })
            .collect();
        let dem = (0..DEM_NAMES.len())
            .map(|f| FeatureRange::fit(DEM_NAMES[f], train.iter().map(|s| s.dem[f])))
            .collect();
        let soil = soil_names()
            .iter()
            .enumerate()
            .map(|(f, name)| FeatureRange::fit(name, train.iter().map(|s| s.soil[f])))
            .collect();
        let mut stats = Self { s2, weather, dem, soil, weather_sum: Vec::new() };

        let mut sums: Vec<[f64; WEATHER_FEATURES]> = Vec::new();
        for s in train {
            let scaled = stats.normalize_sample(s);
            if let Ok(sel) = monthly_sample_s2m(&scaled) {
                sums.extend(interval_weather_sums(&scaled, &sel));
            }
        }
        stats.weather_sum = (0..WEATHER_FEATURES)
            .map(|f| FeatureRange::fit(&format!("{}_sum", WEATHER_NAMES[f]), sums.iter().map(|r| r[f])))
            .collect();
        Ok(stats)
    }

    /// Scales optical bands, weather, DEM and soil; SCL, ids and yield are untouched.
    pub fn normalize_sample(&self, s: &MultiViewSample) -> MultiViewSample {
        let mut out = s.clone();
        for o in &mut out.s2 {
            scale_all(&self.s2, &mut o.bands);
        }
        for w in &mut out.weather {
            scale_all(&self.weather, &mut w.features);
        }
        scale_all(&self.dem, &mut out.dem);
        scale_all(&self.soil, &mut out.soil);
        out
    }

    fn views(&self) -> [(&'static str, Vec<String>, &Vec<FeatureRange>); 5] {
        let names = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        [
            ("s2", names(&S2_BAND_NAMES), &self.s2),
            ("weather", names(&WEATHER_NAMES), &self.weather),
            ("dem", names(&DEM_NAMES), &self.dem),
            ("soil", soil_names(), &self.soil),
            ("weather_sum", names(&WEATHER_NAMES), &self.weather_sum),
        ]
    }

    /// `{view: {feature: {min, max}}}`
    pub fn to_json(&self) -> Result<String> {
        let mut out: BTreeMap<&str, BTreeMap<String, FeatureRange>> = BTreeMap::new();
        for (view, names, ranges) in self.views() {
            out.insert(view, names.into_iter().zip(ranges.iter().copied()).collect());
        }
        Ok(serde_json::to_string_pretty(&out)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, BTreeMap<String, FeatureRange>> = serde_json::from_str(text)?;
        let template = Self {
            s2: Vec::new(),
            weather: Vec::new(),
            dem: Vec::new(),
            soil: Vec::new(),
            weather_sum: Vec::new(),
        };
        let mut parsed: Vec<Vec<FeatureRange>> = Vec::new();
        for (view, names, _) in template.views() {
            let entries = map.get(view).ok_or_else(|| Error::Data(format!("normalization lacks view {view}")))?;
            let ranges = names
                .iter()
                .map(|n| {
                    entries
                        .get(n)
                        .copied()
                        .ok_or_else(|| Error::Data(format!("normalization lacks feature {view}.{n}")))
                })
                .collect::<Result<Vec<_>>>()?;
            parsed.push(ranges);
        }
        let mut it = parsed.into_iter();
        let mut next = || it.next().expect("five views");
        Ok(Self { s2: next(), weather: next(), dem: next(), soil: next(), weather_sum: next() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = self.to_json().expect("finite ranges serialize");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn minmax_normalize(dataset: &FieldDataset, stats: &NormStats) -> FieldDataset {
    FieldDataset {
        samples: dataset.samples.iter().map(|s| stats.normalize_sample(s)).collect(),
        field_farm: dataset.field_farm.clone(),
        field_year: dataset.field_year.clone(),
        field_coverage: dataset.field_coverage.clone(),
    }
}
