//! Pixel samples, preprocessing, and the synthetic multi-view generator.

mod batch;
mod coverage;
mod io;
mod normalize;
mod raster;
mod series;
mod synth;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batch::{build_batch, Batch, InputSpec};
pub use coverage::{compute_coverage, is_clean, is_excluded};
pub use io::{read_dataset, write_dataset, DatasetHeader, SCHEMA_VERSION};
pub use normalize::{minmax_normalize, FeatureRange, NormStats};
pub use raster::{align_static_raster, broadcast_weather, BicubicSurface, Grid};
pub use series::{
    build_input_fusion_series, encode_scl_onehot, input_fusion_width, is_cloudy, month_of_day,
    monthly_sample_s2m, pad_and_mask, pad_s2, pad_weather, unpad_s2, unpad_weather, MonthlySelection,
    PaddedSeries,
};
pub use synth::{generate_synthetic_dataset, GeneratorConfig, ViewWeights};

pub const S2_BANDS: usize = 12;
pub const SCL_CLASSES: usize = 12;
/// SCL one-hot width: twelve classes plus padding.
pub const SCL_ONEHOT: usize = 13;
pub const SCL_PADDING: u8 = 12;
pub const S2_FEATURES: usize = S2_BANDS + SCL_ONEHOT;
pub const WEATHER_FEATURES: usize = 4;
pub const DEM_FEATURES: usize = 5;
pub const SOIL_FEATURES: usize = 24;
pub const S2_MAX_LEN: usize = 150;
pub const WEATHER_MAX_LEN: usize = 500;
pub const MONTHS: usize = 24;
pub const PAD_VALUE: f64 = -1.0;

pub const S2_BAND_NAMES: [&str; S2_BANDS] =
    ["B01", "B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A", "B09", "B11", "B12"];
pub const WEATHER_NAMES: [&str; WEATHER_FEATURES] = ["t_mean", "t_max", "t_min", "precip_cum"];
pub const DEM_NAMES: [&str; DEM_FEATURES] = ["aspect", "curvature", "elevation", "slope", "twi"];
pub const SOIL_PROPERTIES: [&str; 8] =
    ["bulk_density", "cec", "clay", "coarse_fragments", "nitrogen", "ph", "sand", "soc"];
pub const SOIL_DEPTHS: [&str; 3] = ["0_5", "5_15", "15_30"];

pub fn soil_names() -> Vec<String> {
    SOIL_PROPERTIES
        .iter()
        .flat_map(|p| SOIL_DEPTHS.iter().map(move |d| format!("{p}_{d}")))
        .collect()
}

/// Input views, in the canonical order used for encoders and fusion weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum View {
    S2,
    Weather,
    Dem,
    Soil,
}

impl View {
    pub const ALL: [View; 4] = [View::S2, View::Weather, View::Dem, View::Soil];

    pub fn name(self) -> &'static str {
        match self {
            View::S2 => "s2",
            View::Weather => "weather",
            View::Dem => "dem",
            View::Soil => "soil",
        }
    }

    pub fn parse(s: &str) -> Result<View> {
        View::ALL
            .into_iter()
            .find(|v| v.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown view '{s}'")))
    }

    /// Per-step width for temporal views, vector width for static views.
    pub fn features(self) -> usize {
        match self {
            View::S2 => S2_FEATURES,
            View::Weather => WEATHER_FEATURES,
            View::Dem => DEM_FEATURES,
            View::Soil => SOIL_FEATURES,
        }
    }

    pub fn is_temporal(self) -> bool {
        matches!(self, View::S2 | View::Weather)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct S2Observation {
    pub day: i32,
    pub bands: Vec<f64>,
    pub scl: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub day: i32,
    pub features: Vec<f64>,
}

/// One pixel. Day offsets count from seeding; `seeding_day` and `harvest_day`
/// count from 1 January of the year before harvest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiViewSample {
    pub pixel_id: u64,
    pub field_id: u32,
    pub farm_id: u32,
    pub harvest_year: i32,
    pub seeding_day: u32,
    pub harvest_day: u32,
    pub s2: Vec<S2Observation>,
    pub weather: Vec<WeatherRecord>,
    pub dem: Vec<f64>,
    pub soil: Vec<f64>,
    #[serde(rename = "yield")]
    pub yield_t_ha: f64,
}

fn strictly_increasing(days: impl Iterator<Item = i32>) -> bool {
    let days: Vec<i32> = days.collect();
    days.windows(2).all(|w| w[0] < w[1])
}

impl MultiViewSample {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Data(format!("pixel {}: {msg}", self.pixel_id)));
        if self.s2.len() > S2_MAX_LEN {
            return fail(format!("optical series of {} exceeds {S2_MAX_LEN}", self.s2.len()));
        }
        if self.weather.len() > WEATHER_MAX_LEN {
            return fail(format!("weather series of {} exceeds {WEATHER_MAX_LEN}", self.weather.len()));
        }
        if !strictly_increasing(self.s2.iter().map(|o| o.day)) {
            return fail("optical day offsets not strictly increasing".into());
        }
        if !strictly_increasing(self.weather.iter().map(|w| w.day)) {
            return fail("weather day offsets not strictly increasing".into());
        }
        if let Some(o) = self.s2.iter().find(|o| o.bands.len() != S2_BANDS || o.scl as usize >= SCL_CLASSES) {
            return fail(format!("bad optical record on day {}", o.day));
        }
        if let Some(w) = self.weather.iter().find(|w| w.features.len() != WEATHER_FEATURES) {
            return fail(format!("bad weather record on day {}", w.day));
        }
        if self.dem.len() != DEM_FEATURES || self.soil.len() != SOIL_FEATURES {
            return fail(format!("static widths {} and {}", self.dem.len(), self.soil.len()));
        }
        if !(self.yield_t_ha.is_finite() && self.yield_t_ha >= 0.0) {
            return fail(format!("yield {}", self.yield_t_ha));
        }
        if self.harvest_day <= self.seeding_day || self.harvest_day as usize >= 365 * 2 {
            return fail(format!("season {}..{}", self.seeding_day, self.harvest_day));
        }
        Ok(())
    }
}

/// Pixels plus per-field lookups. Every field id in `samples` has an entry in each map.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldDataset {
    pub samples: Vec<MultiViewSample>,
    pub field_farm: BTreeMap<u32, u32>,
    pub field_year: BTreeMap<u32, i32>,
    pub field_coverage: BTreeMap<u32, f64>,
}

impl FieldDataset {
    pub fn from_samples(samples: Vec<MultiViewSample>) -> Result<Self> {
        let mut field_farm = BTreeMap::new();
        let mut field_year = BTreeMap::new();
        for s in &samples {
            s.validate()?;
            let farm = *field_farm.entry(s.field_id).or_insert(s.farm_id);
            let year = *field_year.entry(s.field_id).or_insert(s.harvest_year);
            if farm != s.farm_id || year != s.harvest_year {
                return Err(Error::Data(format!("field {} has inconsistent farm or year", s.field_id)));
            }
        }
        let mut field_coverage = BTreeMap::new();
        for (field, idx) in Self::group(&samples) {
            let pixels: Vec<&MultiViewSample> = idx.iter().map(|&i| &samples[i]).collect();
            field_coverage.insert(field, compute_coverage(&pixels)?);
        }
        Ok(Self { samples, field_farm, field_year, field_coverage })
    }

    fn group(samples: &[MultiViewSample]) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            out.entry(s.field_id).or_default().push(i);
        }
        out
    }

    pub fn fields(&self) -> Vec<u32> {
        self.field_farm.keys().copied().collect()
    }

    /// Sample indices per field.
    pub fn field_pixels(&self) -> BTreeMap<u32, Vec<usize>> {
        Self::group(&self.samples)
    }

    pub fn subset(&self, fields: &BTreeSet<u32>) -> FieldDataset {
        fn keep<T: Copy>(m: &BTreeMap<u32, T>, fields: &BTreeSet<u32>) -> BTreeMap<u32, T> {
            m.iter().filter(|(f, _)| fields.contains(f)).map(|(f, v)| (*f, *v)).collect()
        }
        FieldDataset {
            samples: self.samples.iter().filter(|s| fields.contains(&s.field_id)).cloned().collect(),
            field_farm: keep(&self.field_farm, fields),
            field_year: keep(&self.field_year, fields),
            field_coverage: keep(&self.field_coverage, fields),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
