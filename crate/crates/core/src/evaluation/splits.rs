//! Field-grouped cross-validation plans and the coverage split.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::substream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    StratifiedGroupKfold,
    Loyo,
    Coverage,
}

impl SplitKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "stratified-group-kfold" | "kfold" => Ok(Self::StratifiedGroupKfold),
            "loyo" => Ok(Self::Loyo),
            "coverage" => Ok(Self::Coverage),
            other => Err(Error::Config(format!("unknown split kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub id: usize,
    /// Held-out harvest year for LOYO folds.
    pub year: Option<i32>,
    pub train: Vec<u32>,
    pub validation: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub folds: Vec<Fold>,
}

impl SplitPlan {
    fn from_assignment(kind: SplitKind, fields: &[u32], fold_of: &BTreeMap<u32, usize>, years: Option<Vec<i32>>) -> Self {
        let k = fold_of.values().max().map_or(0, |m| m + 1);
        let folds = (0..k)
            .map(|id| {
                let (validation, train) = fields.iter().partition(|f| fold_of[f] == id);
                Fold { id, year: years.as_ref().map(|y| y[id]), train, validation }
            })
            .collect();
        Self { kind, folds }
    }

    /// Checks that every field is validated exactly once and never trains its own fold.
    pub fn check_partition(&self, fields: &BTreeSet<u32>) -> Result<()> {
        let mut seen = BTreeSet::new();
        for fold in &self.folds {
            let val: BTreeSet<u32> = fold.validation.iter().copied().collect();
            let train: BTreeSet<u32> = fold.train.iter().copied().collect();
            if fold.validation.is_empty() {
                return Err(Error::Contract(format!("fold {} has no validation fields", fold.id)));
            }
            if val.len() != fold.validation.len() || !val.is_disjoint(&train) {
                return Err(Error::Contract(format!("fold {} mixes train and validation fields", fold.id)));
            }
            if val.union(&train).copied().collect::<BTreeSet<_>>() != *fields {
                return Err(Error::Contract(format!("fold {} does not cover every field", fold.id)));
            }
            if !seen.is_disjoint(&val) {
                return Err(Error::Contract(format!("fold {} repeats a validation field", fold.id)));
            }
            seen.extend(val);
        }
        if seen != *fields {
            return Err(Error::Contract("some fields are never validated".into()));
        }
        Ok(())
    }
}

/// Farm-stratified k-fold over fields.
///
/// Fields are visited farm by farm (largest farm first, field order shuffled by
/// `seed`) and each goes to the fold holding the fewest fields of its farm,
/// then the fewest fields overall, then the lowest index.
pub fn stratified_group_kfold(field_farm: &BTreeMap<u32, u32>, k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > field_farm.len() {
        return Err(Error::Config(format!("k = {k} exceeds the {} available fields", field_farm.len())));
    }
    let mut farms: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (&field, &farm) in field_farm {
        farms.entry(farm).or_default().push(field);
    }
    let mut rng = substream(seed, "kfold");
    let mut order: Vec<(u32, Vec<u32>)> = farms.into_iter().collect();
    for (_, fields) in order.iter_mut() {
        fields.shuffle(&mut rng);
    }
    order.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));

    let mut sizes = vec![0usize; k];
    let mut fold_of = BTreeMap::new();
    for (_, fields) in &order {
        let mut per_farm = vec![0usize; k];
        for &field in fields {
            let best = (0..k).min_by_key(|&f| (per_farm[f], sizes[f], f)).expect("k >= 2");
            per_farm[best] += 1;
            sizes[best] += 1;
            fold_of.insert(field, best);
        }
    }
    let fields: Vec<u32> = field_farm.keys().copied().collect();
    Ok(SplitPlan::from_assignment(SplitKind::StratifiedGroupKfold, &fields, &fold_of, None))
}

/// One fold per harvest year, validating on every field of that year.
pub fn loyo_split(field_year: &BTreeMap<u32, i32>) -> Result<SplitPlan> {
    let years: Vec<i32> = field_year.values().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if years.len() < 2 {
        return Err(Error::Config("leave-one-year-out needs at least two harvest years".into()));
    }
    let fold_of = field_year
        .iter()
        .map(|(&f, y)| (f, years.binary_search(y).expect("year present")))
        .collect();
    let fields: Vec<u32> = field_year.keys().copied().collect();
    Ok(SplitPlan::from_assignment(SplitKind::Loyo, &fields, &fold_of, Some(years)))
}

pub const LOW_COVERAGE_RANK: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSplit {
    pub threshold: f64,
    pub high: Vec<u32>,
    pub low: Vec<u32>,
}

impl CoverageSplit {
    pub fn is_low(&self, field: u32) -> bool {
        self.low.contains(&field)
    }
}

/// Fields at or below the 5th-lowest coverage are low; ties at the threshold stay low.
pub fn coverage_split(coverages: &BTreeMap<u32, f64>) -> Result<CoverageSplit> {
    if coverages.len() < LOW_COVERAGE_RANK {
        return Err(Error::Config(format!(
            "coverage split needs at least {LOW_COVERAGE_RANK} fields, got {}",
            coverages.len()
        )));
    }
    let mut sorted: Vec<f64> = coverages.values().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[LOW_COVERAGE_RANK - 1];
    let (low, high) = coverages.iter().map(|(&f, &c)| (f, c)).partition::<Vec<_>, _>(|&(_, c)| c <= threshold);
    Ok(CoverageSplit {
        threshold,
        high: high.into_iter().map(|(f, _)| f).collect(),
        low: low.into_iter().map(|(f, _)| f).collect(),
    })
}
