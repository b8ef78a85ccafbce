//! Padding, SCL encoding, monthly compositing, and input-level fusion series.

use super::{
    MultiViewSample, S2Observation, View, WeatherRecord, MONTHS, PAD_VALUE, S2_BANDS, S2_FEATURES, S2_MAX_LEN,
    SCL_CLASSES, SCL_ONEHOT, SCL_PADDING, WEATHER_FEATURES, WEATHER_MAX_LEN,
};
use crate::error::{Error, Result};

const MONTH_DAYS: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

pub fn encode_scl_onehot(scl: u8) -> Result<[f64; SCL_ONEHOT]> {
    if scl as usize >= SCL_ONEHOT {
        return Err(Error::Data(format!("SCL category {scl} out of range")));
    }
    let mut v = [0.0; SCL_ONEHOT];
    v[scl as usize] = 1.0;
    Ok(v)
}

/// Cloud proxy for monthly selection: shadow, medium and high cloud, cirrus.
pub fn is_cloudy(scl: u8) -> bool {
    matches!(scl, 3 | 8 | 9 | 10)
}

/// Row-major `[steps × features]` series with a validity mask. `days` keeps
/// the day offset of each valid row (`-1` on padding) so padding can be undone.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedSeries {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub days: Vec<i32>,
    pub features: usize,
}

impl PaddedSeries {
    pub fn steps(&self) -> usize {
        self.mask.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.features..(t + 1) * self.features]
    }

    /// Number of leading steps up to and including the last valid one.
    pub fn used_len(&self) -> usize {
        self.mask.iter().rposition(|&m| m).map_or(0, |i| i + 1)
    }
}

fn s2_row(o: &S2Observation) -> Result<Vec<f64>> {
    let mut row = o.bands.clone();
    row.extend(encode_scl_onehot(o.scl)?);
    Ok(row)
}

fn s2_padding_row() -> Vec<f64> {
    let mut row = vec![PAD_VALUE; S2_BANDS];
    row.extend(encode_scl_onehot(SCL_PADDING).expect("padding category"));
    row
}

fn check_len(what: &str, len: usize, cap: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::Data(format!("empty {what} series")));
    }
    if len > cap {
        return Err(Error::Data(format!("{what} series of {len} exceeds cap {cap}")));
    }
    Ok(())
}

/// Optical series as `[150 × 25]`: twelve bands then the SCL one-hot.
pub fn pad_s2(sample: &MultiViewSample) -> Result<PaddedSeries> {
    check_len("optical", sample.s2.len(), S2_MAX_LEN)?;
    let mut values = Vec::with_capacity(S2_MAX_LEN * S2_FEATURES);
    let mut days = Vec::with_capacity(S2_MAX_LEN);
    for o in &sample.s2 {
        values.extend(s2_row(o)?);
        days.push(o.day);
    }
    let pad = s2_padding_row();
    for _ in sample.s2.len()..S2_MAX_LEN {
        values.extend_from_slice(&pad);
        days.push(-1);
    }
    let mut mask = vec![true; sample.s2.len()];
    mask.resize(S2_MAX_LEN, false);
    Ok(PaddedSeries { values, mask, days, features: S2_FEATURES })
}

/// Weather series as `[500 × 4]`.
pub fn pad_weather(sample: &MultiViewSample) -> Result<PaddedSeries> {
    check_len("weather", sample.weather.len(), WEATHER_MAX_LEN)?;
    let mut values = Vec::with_capacity(WEATHER_MAX_LEN * WEATHER_FEATURES);
    let mut days = Vec::with_capacity(WEATHER_MAX_LEN);
    for w in &sample.weather {
        values.extend_from_slice(&w.features);
        days.push(w.day);
    }
    values.resize(WEATHER_MAX_LEN * WEATHER_FEATURES, PAD_VALUE);
    days.resize(WEATHER_MAX_LEN, -1);
    let mut mask = vec![true; sample.weather.len()];
    mask.resize(WEATHER_MAX_LEN, false);
    Ok(PaddedSeries { values, mask, days, features: WEATHER_FEATURES })
}

pub fn pad_and_mask(sample: &MultiViewSample) -> Result<(PaddedSeries, PaddedSeries)> {
    Ok((pad_s2(sample)?, pad_weather(sample)?))
}

pub fn unpad_s2(series: &PaddedSeries) -> Result<Vec<S2Observation>> {
    let mut out = Vec::new();
    for t in (0..series.steps()).filter(|&t| series.mask[t]) {
        let row = series.row(t);
        let scl = row[S2_BANDS..]
            .iter()
            .position(|&v| v == 1.0)
            .filter(|&c| c < SCL_CLASSES)
            .ok_or_else(|| Error::Data(format!("step {t} has no SCL class")))?;
        out.push(S2Observation { day: series.days[t], bands: row[..S2_BANDS].to_vec(), scl: scl as u8 });
    }
    Ok(out)
}

pub fn unpad_weather(series: &PaddedSeries) -> Vec<WeatherRecord> {
    (0..series.steps())
        .filter(|&t| series.mask[t])
        .map(|t| WeatherRecord { day: series.days[t], features: series.row(t).to_vec() })
        .collect()
}

/// Month index `0..24` of a day counted from 1 January of the first year (365-day years).
pub fn month_of_day(day: u32) -> Option<usize> {
    if day >= 365 * 2 {
        return None;
    }
    let (year, mut doy) = (day / 365, day % 365);
    for (m, len) in MONTH_DAYS.iter().enumerate() {
        if doy < *len {
            return Some(year as usize * 12 + m);
        }
        doy -= len;
    }
    unreachable!("day of year below 365")
}

/// Chosen optical observation (index into `sample.s2`) for each of the 24 months.
#[derive(Clone, Debug, PartialEq)]
pub struct MonthlySelection {
    pub picks: [Option<usize>; MONTHS],
}

impl MonthlySelection {
    pub fn mask(&self) -> Vec<bool> {
        self.picks.iter().map(Option::is_some).collect()
    }

    /// `[24 × 25]` optical series with unselected months padded.
    pub fn series(&self, sample: &MultiViewSample) -> Result<PaddedSeries> {
        let mut values = Vec::with_capacity(MONTHS * S2_FEATURES);
        let mut days = Vec::with_capacity(MONTHS);
        for pick in &self.picks {
            match pick {
                Some(i) => {
                    values.extend(s2_row(&sample.s2[*i])?);
                    days.push(sample.s2[*i].day);
                }
                None => {
                    values.extend(s2_padding_row());
                    days.push(-1);
                }
            }
        }
        Ok(PaddedSeries { values, mask: self.mask(), days, features: S2_FEATURES })
    }
}

/// Per month, the earliest observation with the fewest cloud-flagged pixels.
/// Observations outside the seeding-to-harvest window are ignored.
pub fn monthly_sample_s2m(sample: &MultiViewSample) -> Result<MonthlySelection> {
    let mut picks: [Option<usize>; MONTHS] = [None; MONTHS];
    for (i, o) in sample.s2.iter().enumerate() {
        let abs = sample.seeding_day as i64 + o.day as i64;
        if abs < sample.seeding_day as i64 || abs > sample.harvest_day as i64 {
            continue;
        }
        let Some(m) = month_of_day(abs as u32) else { continue };
        let better = match picks[m] {
            None => true,
            Some(j) => is_cloudy(sample.s2[j].scl) && !is_cloudy(o.scl),
        };
        if better {
            picks[m] = Some(i);
        }
    }
    if picks.iter().all(Option::is_none) {
        return Err(Error::Data(format!(
            "pixel {}: no optical observation inside the growing season",
            sample.pixel_id
        )));
    }
    Ok(MonthlySelection { picks })
}

pub fn input_fusion_width(views: &[View]) -> usize {
    S2_FEATURES + views.iter().filter(|v| **v != View::S2).map(|v| v.features()).sum::<usize>()
}

/// Weather summed over the intervals between selected image dates. Record
/// `r` goes to the first selected date `>= r.day`, or to the last interval.
pub(crate) fn interval_weather_sums(sample: &MultiViewSample, sel: &MonthlySelection) -> Vec<[f64; WEATHER_FEATURES]> {
    let dates: Vec<i32> = sel.picks.iter().flatten().map(|&i| sample.s2[i].day).collect();
    let mut sums = vec![[0.0; WEATHER_FEATURES]; dates.len()];
    for r in &sample.weather {
        let k = dates.iter().position(|&d| r.day <= d).unwrap_or(dates.len() - 1);
        for (acc, v) in sums[k].iter_mut().zip(&r.features) {
            *acc += v;
        }
    }
    sums
}

/// `[24 × width]` rows of `[S2-M 25 | weather sums 4 | dem 5 | soil 24]`,
/// keeping only the blocks of the listed non-optical views.
pub fn build_input_fusion_series(sample: &MultiViewSample, views: &[View]) -> Result<PaddedSeries> {
    let sel = monthly_sample_s2m(sample)?;
    let sums = interval_weather_sums(sample, &sel);
    let width = input_fusion_width(views);
    let mut values = Vec::with_capacity(MONTHS * width);
    let mut days = Vec::with_capacity(MONTHS);
    let mut k = 0;
    for pick in &sel.picks {
        let start = values.len();
        match pick {
            Some(i) => {
                values.extend(s2_row(&sample.s2[*i])?);
                days.push(sample.s2[*i].day);
                for v in View::ALL.iter().filter(|v| views.contains(v)) {
                    match v {
                        View::S2 => {}
                        View::Weather => values.extend_from_slice(&sums[k]),
                        View::Dem => values.extend_from_slice(&sample.dem),
                        View::Soil => values.extend_from_slice(&sample.soil),
                    }
                }
                k += 1;
            }
            None => {
                values.extend(s2_padding_row());
                values.resize(start + width, PAD_VALUE);
                days.push(-1);
            }
        }
    }
    Ok(PaddedSeries { values, mask: sel.mask(), days, features: width })
}
