use std::collections::BTreeMap;

use super::MultiViewSample;
use crate::error::{Error, Result};

/// Vegetation or not-vegetated.
pub fn is_clean(scl: u8) -> bool {
    matches!(scl, 4 | 5)
}

/// No data, saturated, dark area, water, snow: left out of the denominator.
pub fn is_excluded(scl: u8) -> bool {
    matches!(scl, 0 | 1 | 2 | 6 | 11)
}

/// Share of clean pixel observations per acquisition date, averaged over dates.
pub fn compute_coverage(pixels: &[&MultiViewSample]) -> Result<f64> {
    if pixels.is_empty() {
        return Err(Error::Data("coverage of an empty field".into()));
    }
    let mut per_date: BTreeMap<i32, (usize, usize)> = BTreeMap::new();
    for p in pixels {
        for o in &p.s2 {
            if is_excluded(o.scl) {
                continue;
            }
            let entry = per_date.entry(o.day).or_default();
            entry.1 += 1;
            if is_clean(o.scl) {
                entry.0 += 1;
            }
        }
    }
    if per_date.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = per_date.values().map(|&(clean, seen)| clean as f64 / seen as f64).sum();
    Ok(total / per_date.len() as f64)
}
