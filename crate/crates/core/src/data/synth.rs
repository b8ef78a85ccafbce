//! Deterministic synthetic fields with planted, view-specific yield signal.
//!
//! Each view is driven by its own latent variable: crop vigour (optical),
//! season favourability (weather, shared by a field), wetness (DEM) and
//! fertility (soil). Yield is a weighted sum of the latents plus noise,
//! affinely mapped to the requested mean and standard deviation and clipped at 0.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::raster::{broadcast_weather, Grid, Interpolator};
use super::{FieldDataset, MultiViewSample, S2Observation, WeatherRecord, S2_MAX_LEN, WEATHER_MAX_LEN};
use crate::error::{Error, Result};
use crate::seeding::substream;

/// How strongly each view's latent drives yield.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewWeights {
    pub s2: f64,
    pub weather: f64,
    pub dem: f64,
    pub soil: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_farms: usize,
    pub fields_per_farm: usize,
    pub pixels_per_field: usize,
    pub years: Vec<i32>,
    pub seed: u64,
    /// Probability that an acquisition date carries a cloud episode.
    pub cloud_rate: f64,
    pub informativeness: ViewWeights,
    /// Weight of pixel-level noise in the yield score.
    pub noise: f64,
    pub yield_mean: f64,
    pub yield_std: f64,
    pub revisit_days: u32,
    pub weather_step_days: u32,
    /// Mean seeding day counted from 1 January of the year before harvest.
    pub seeding_day: u32,
    pub seeding_spread: u32,
    pub season_days: u32,
    pub season_spread: u32,
}

impl GeneratorConfig {
    /// Soybean-like season with yields around 3.86 ± 1.49 t/ha.
    pub fn arg_s_like(seed: u64) -> Self {
        Self {
            n_farms: 10,
            fields_per_farm: 5,
            pixels_per_field: 200,
            years: vec![2019, 2020, 2021],
            seed,
            cloud_rate: 0.15,
            informativeness: ViewWeights { s2: 1.0, weather: 0.5, dem: 0.4, soil: 0.7 },
            noise: 0.5,
            yield_mean: 3.86,
            yield_std: 1.49,
            revisit_days: 5,
            weather_step_days: 1,
            seeding_day: 320,
            seeding_spread: 15,
            season_days: 150,
            season_spread: 10,
        }
    }

    /// Short sequences for quick experiments on a laptop.
    pub fn desk(seed: u64) -> Self {
        Self {
            n_farms: 8,
            fields_per_farm: 5,
            pixels_per_field: 16,
            revisit_days: 10,
            weather_step_days: 7,
            ..Self::arg_s_like(seed)
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "arg-s-like" => Ok(Self::arg_s_like(seed)),
            "desk" => Ok(Self::desk(seed)),
            other => Err(Error::Config(format!("unknown generator preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(format!("generator: {msg}")));
        if self.n_farms == 0 || self.fields_per_farm == 0 || self.pixels_per_field == 0 {
            return fail("farm, field and pixel counts must be positive");
        }
        if self.years.is_empty() {
            return fail("at least one harvest year is required");
        }
        if !(0.0..=1.0).contains(&self.cloud_rate) {
            return fail("cloud rate must lie in [0, 1]");
        }
        let w = self.informativeness;
        let weights = [w.s2, w.weather, w.dem, w.soil, self.noise];
        if weights.iter().any(|x| !x.is_finite() || *x < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return fail("weights must be non-negative and not all zero");
        }
        if !(self.yield_std > 0.0 && self.yield_mean.is_finite()) {
            return fail("yield std must be positive");
        }
        if self.revisit_days == 0 || self.weather_step_days == 0 {
            return fail("revisit and weather step must be positive");
        }
        let earliest = self.seeding_day as i64 - self.seeding_spread as i64;
        let shortest = self.season_days as i64 - self.season_spread as i64;
        let longest = self.season_days as i64 + self.season_spread as i64;
        if earliest < 0 || shortest <= 0 || earliest + shortest < 365 {
            return fail("harvest must fall in the second calendar year");
        }
        if self.seeding_day as i64 + self.seeding_spread as i64 + longest >= 730 {
            return fail("season runs past the two-year window");
        }
        if longest as usize / self.revisit_days as usize + 1 > S2_MAX_LEN {
            return fail("revisit too frequent for the optical length cap");
        }
        if longest as usize / self.weather_step_days as usize + 1 > WEATHER_MAX_LEN {
            return fail("weather step too short for the weather length cap");
        }
        Ok(())
    }
}

/// Reflectance as `base + slope · ndvi` per band.
const BAND_RESPONSE: [(f64, f64); 12] = [
    (0.10, -0.05),
    (0.10, -0.06),
    (0.11, -0.02),
    (0.14, -0.12),
    (0.16, -0.05),
    (0.18, 0.20),
    (0.19, 0.30),
    (0.20, 0.35),
    (0.21, 0.36),
    (0.08, 0.10),
    (0.30, -0.10),
    (0.24, -0.15),
];

/// `(base, loading, noise sd)` per soil property; loading decays with depth.
const SOIL_RESPONSE: [(f64, f64, f64); 8] = [
    (1.3, -0.08, 0.04),
    (20.0, 4.0, 1.5),
    (25.0, 6.0, 2.0),
    (8.0, -2.0, 1.5),
    (1.5, 0.3, 0.1),
    (6.5, 0.2, 0.15),
    (35.0, -6.0, 3.0),
    (12.0, 3.0, 1.0),
];
const DEPTH_ATTENUATION: [f64; 3] = [1.0, 0.8, 0.6];

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn random_grid(rng: &mut ChaCha8Rng, n: usize) -> Grid {
    Grid::new(n, n, (0..n * n).map(|_| normal(rng)).collect()).expect("square grid")
}

struct Field {
    samples: Vec<MultiViewSample>,
    scores: Vec<f64>,
}

struct FarmLatents {
    soil: f64,
    dem: f64,
}

fn spread(rng: &mut ChaCha8Rng, centre: u32, half_width: u32) -> u32 {
    let h = half_width as i64;
    (centre as i64 + rng.random_range(-h..=h)) as u32
}

fn field_weather(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng, seeding: u32, season: u32, z_w: f64) -> Vec<WeatherRecord> {
    let rain = Exp::new(1.0 / 8.0).expect("positive rate");
    let rain_p = (0.2 + 0.06 * z_w).clamp(0.02, 0.5);
    let mut daily = Vec::with_capacity(season as usize + 1);
    for d in 0..=season {
        let doy = ((seeding + d) % 365) as f64;
        let seasonal = 18.0 + 8.0 * (2.0 * std::f64::consts::PI * (doy - 15.0) / 365.0).cos();
        let t_mean = seasonal - 1.5 * z_w + 1.5 * normal(rng);
        let t_max = t_mean + 6.0 + normal(rng).abs();
        let t_min = t_mean - 6.0 - normal(rng).abs();
        let precip = if rng.random::<f64>() < rain_p { rain.sample(rng) } else { 0.0 };
        daily.push([t_mean, t_max, t_min, precip]);
    }
    let step = cfg.weather_step_days as usize;
    let mut cumulative = 0.0;
    daily
        .chunks(step)
        .enumerate()
        .map(|(k, block)| {
            let n = block.len() as f64;
            cumulative += block.iter().map(|r| r[3]).sum::<f64>();
            WeatherRecord {
                day: (k * step) as i32,
                features: vec![
                    block.iter().map(|r| r[0]).sum::<f64>() / n,
                    block.iter().map(|r| r[1]).fold(f64::NEG_INFINITY, f64::max),
                    block.iter().map(|r| r[2]).fold(f64::INFINITY, f64::min),
                    cumulative,
                ],
            }
        })
        .collect()
}

fn generate_field(cfg: &GeneratorConfig, field_id: u32, farm_id: u32, farm: &FarmLatents) -> Field {
    let mut rng = substream(cfg.seed, &format!("field/{field_id}"));
    let harvest_year = cfg.years[rng.random_range(0..cfg.years.len())];
    let seeding = spread(&mut rng, cfg.seeding_day, cfg.seeding_spread);
    let season = spread(&mut rng, cfg.season_days, cfg.season_spread);

    let z_w = normal(&mut rng);
    let field_vigour = normal(&mut rng);
    let soil_surface = Interpolator::new(random_grid(&mut rng, 4));
    let dem_surface = Interpolator::new(random_grid(&mut rng, 5));
    let green_up = season as f64 * (0.25 + 0.03 * normal(&mut rng));
    let senescence = season as f64 * (0.80 + 0.03 * normal(&mut rng));
    let width = season as f64 * 0.06;

    let weather = field_weather(cfg, &mut rng, seeding, season, z_w);
    let mut weather_copies = broadcast_weather(&weather, cfg.pixels_per_field);

    // acquisition dates and cloud episodes are shared by the whole field
    let first = rng.random_range(0..cfg.revisit_days) as i32;
    let dates: Vec<i32> = (first..=season as i32).step_by(cfg.revisit_days as usize).collect();
    let episodes: Vec<Option<f64>> = dates
        .iter()
        .map(|_| (rng.random::<f64>() < cfg.cloud_rate).then(|| rng.random_range(0.5..1.0)))
        .collect();

    let side = (cfg.pixels_per_field as f64).sqrt().ceil() as usize;
    let w = cfg.informativeness;
    let mut samples = Vec::with_capacity(cfg.pixels_per_field);
    let mut scores = Vec::with_capacity(cfg.pixels_per_field);
    for p in 0..cfg.pixels_per_field {
        let (row, col) = ((p / side) as f64, (p % side) as f64);
        let at = |surface: &Interpolator, cells: f64| {
            surface.at((row + 0.5) / side as f64 * (cells - 1.0), (col + 0.5) / side as f64 * (cells - 1.0))
        };
        let z_soil = 0.5 * farm.soil + 0.866 * at(&soil_surface, 4.0);
        let z_dem = 0.5 * farm.dem + 0.866 * at(&dem_surface, 5.0);
        let z_s2 = 0.6 * field_vigour + 0.8 * normal(&mut rng);

        let amplitude = (0.5 + 0.12 * z_s2).clamp(0.1, 0.85);
        let mut s2 = Vec::with_capacity(dates.len());
        for (&day, episode) in dates.iter().zip(&episodes) {
            let t = day as f64;
            let ndvi = 0.12 + amplitude * (logistic((t - green_up) / width) - logistic((t - senescence) / width));
            let clear: Vec<f64> = BAND_RESPONSE
                .iter()
                .map(|(base, slope)| (base + slope * ndvi + 0.01 * normal(&mut rng)).clamp(0.0, 1.0))
                .collect();
            let cloudy = episode.is_some_and(|cover| rng.random::<f64>() < cover);
            let (bands, scl) = if !cloudy {
                (clear, if ndvi >= 0.3 { 4 } else { 5 })
            } else if rng.random::<f64>() < 0.15 {
                (clear.iter().map(|b| b * 0.35).collect(), 3)
            } else {
                let scl = [8, 9, 10][rng.random_range(0..3)];
                let bright = 0.45 + 0.35 * rng.random::<f64>();
                (clear.iter().map(|b| (bright + 0.2 * b).min(1.0)).collect(), scl)
            };
            s2.push(S2Observation { day, bands, scl });
        }

        let dem = vec![
            rng.random_range(0.0..360.0),
            -0.4 * z_dem + 0.3 * normal(&mut rng),
            120.0 + 15.0 * farm.dem + 4.0 * z_dem + 0.5 * normal(&mut rng),
            (2.0 - 0.5 * z_dem + 0.5 * normal(&mut rng)).max(0.0),
            8.0 + 1.6 * z_dem + 0.4 * normal(&mut rng),
        ];
        let mut soil = Vec::with_capacity(24);
        for (base, loading, sd) in SOIL_RESPONSE {
            for atten in DEPTH_ATTENUATION {
                soil.push(base + loading * atten * z_soil + sd * normal(&mut rng));
            }
        }

        let score = w.s2 * z_s2 + w.weather * z_w + w.dem * z_dem + w.soil * z_soil + cfg.noise * normal(&mut rng);
        scores.push(score);
        samples.push(MultiViewSample {
            pixel_id: field_id as u64 * cfg.pixels_per_field as u64 + p as u64,
            field_id,
            farm_id,
            harvest_year,
            seeding_day: seeding,
            harvest_day: seeding + season,
            s2,
            weather: std::mem::take(&mut weather_copies[p]),
            dem,
            soil,
            yield_t_ha: 0.0,
        });
    }
    Field { samples, scores }
}

/// Same config, same bytes. Every field draws from its own stream derived
/// from the master seed, so fields do not depend on generation order.
pub fn generate_synthetic_dataset(cfg: &GeneratorConfig) -> Result<FieldDataset> {
    cfg.validate()?;
    let mut samples = Vec::new();
    let mut scores = Vec::new();
    for farm_id in 0..cfg.n_farms as u32 {
        let mut rng = substream(cfg.seed, &format!("farm/{farm_id}"));
        let farm = FarmLatents { soil: normal(&mut rng), dem: normal(&mut rng) };
        for j in 0..cfg.fields_per_farm as u32 {
            let field = generate_field(cfg, farm_id * cfg.fields_per_farm as u32 + j, farm_id, &farm);
            samples.extend(field.samples);
            scores.extend(field.scores);
        }
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let sd = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt().max(f64::MIN_POSITIVE);
    for (sample, score) in samples.iter_mut().zip(&scores) {
        sample.yield_t_ha = (cfg.yield_mean + cfg.yield_std * (score - mean) / sd).max(0.0);
    }
    FieldDataset::from_samples(samples)
}
