//! Synthetic meter corpora with known ground truth.
//!
//! Every building belongs to one archetype. An archetype owns one daily load
//! curve per day regime (weekday, weekend, ...), and a building's reading is
//! its floor area times an energy intensity times the curve, with
//! multiplicative Gaussian noise.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::behavior::{CategoricalDayMatrix, HOURS_PER_DAY};
use crate::ingest::{write_meter_csv, write_metadata_csv, BuildingMetadata, MeterTable};
use crate::seed::counter_hash;

const ARCHETYPE_NAMES: [&str; 6] = ["Office", "Education", "Lodging", "Retail", "Lab", "Assembly"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub buildings: usize,
    pub days: usize,
    /// 1: every day alike; 2: weekday / weekend; 3: weekday / Saturday / Sunday.
    pub regimes: usize,
    pub archetypes: usize,
    /// Standard deviation of the multiplicative noise.
    pub noise: f64,
    /// Fraction of readings blanked out at random.
    pub missing_rate: f64,
    pub seed: u64,
    pub start: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            buildings: 12,
            days: 60,
            regimes: 2,
            archetypes: 3,
            noise: 0.05,
            missing_rate: 0.0,
            seed: 2016,
            start: NaiveDate::from_ymd_opt(2016, 1, 1).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub table: MeterTable,
    pub metadata: Vec<BuildingMetadata>,
    /// Archetype index per building, aligned with the table columns.
    pub building_archetype: Vec<usize>,
    pub day_dates: Vec<NaiveDate>,
    pub day_regime: Vec<usize>,
}

pub fn regime_of(date: NaiveDate, regimes: usize) -> usize {
    match (regimes, date.weekday()) {
        (1, _) => 0,
        (2, Weekday::Sat | Weekday::Sun) => 1,
        (3, Weekday::Sat) => 1,
        (3, Weekday::Sun) => 2,
        _ => 0,
    }
}

fn bump(hour: f64, center: f64, width: f64) -> f64 {
    let d = hour - center;
    (-0.5 * d * d / (width * width)).exp()
}

/// Relative load of an archetype at `hour` under `regime`.
fn load_shape(archetype: usize, archetypes: usize, regime: usize, hour: f64, jitter: f64) -> f64 {
    // weekday peaks spread across the working day, one per archetype
    let center = 7.0 + 12.0 * (archetype as f64 + 0.5) / archetypes as f64 + jitter;
    let night = 0.3 + 0.1 * (archetype % 3) as f64;
    match regime {
        0 => night + 1.0 * bump(hour, center, 2.5),
        1 => night + 0.35 * bump(hour, center + 2.0, 3.5),
        _ => night + 0.15 * bump(hour, 24.0 - center, 3.0),
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthCorpus, PipelineError> {
    if cfg.buildings == 0 {
        return Err(PipelineError::Config("synthetic corpus needs at least one building".into()));
    }
    if cfg.days < 7 {
        return Err(PipelineError::Config("synthetic corpus needs at least 7 days".into()));
    }
    if !(1..=3).contains(&cfg.regimes) {
        return Err(PipelineError::Config("regimes must be 1, 2 or 3".into()));
    }
    if cfg.archetypes == 0 {
        return Err(PipelineError::Config("archetypes must be positive".into()));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) || !(0.0..1.0).contains(&cfg.missing_rate) {
        return Err(PipelineError::Config("noise must be >= 0 and missing_rate in [0, 1)".into()));
    }

    let day_dates: Vec<NaiveDate> = (0..cfg.days)
        .map(|d| cfg.start + Duration::days(d as i64))
        .collect();
    let day_regime: Vec<usize> = day_dates.iter().map(|&d| regime_of(d, cfg.regimes)).collect();
    let t0: NaiveDateTime = cfg.start.and_hms_opt(0, 0, 0).expect("midnight");
    let hours = cfg.days * HOURS_PER_DAY;
    let timestamps: Vec<NaiveDateTime> = (0..hours).map(|h| t0 + Duration::hours(h as i64)).collect();

    let width = cfg.buildings.to_string().len();
    let mut ids = Vec::with_capacity(cfg.buildings);
    let mut metadata = Vec::with_capacity(cfg.buildings);
    let mut archetype_of = Vec::with_capacity(cfg.buildings);
    let mut columns = Vec::with_capacity(cfg.buildings);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    for b in 0..cfg.buildings {
        // per-building stream so columns do not depend on each other
        let mut rng = ChaCha8Rng::seed_from_u64(counter_hash(cfg.seed, b as u64, 0, 0));
        let archetype = b % cfg.archetypes;
        let name = ARCHETYPE_NAMES[archetype % ARCHETYPE_NAMES.len()];
        let id = format!("synth_{b:0width$}_{}", name.to_lowercase());
        let area = rng.random_range(5_000.0f64..200_000.0).round();
        let intensity = rng.random_range(0.0008..0.003);
        let jitter = rng.random_range(-0.5..0.5);

        let mut col = Vec::with_capacity(hours);
        for &regime in &day_regime {
            for h in 0..HOURS_PER_DAY {
                let base = area * intensity * load_shape(archetype, cfg.archetypes, regime, h as f64, jitter);
                let factor = (1.0 + cfg.noise * normal.sample(&mut rng)).max(0.0);
                let missing = cfg.missing_rate > 0.0 && rng.random_bool(cfg.missing_rate);
                col.push((!missing).then(|| (base * factor * 1e4).round() / 1e4));
            }
        }
        metadata.push(BuildingMetadata {
            building_id: id.clone(),
            site: format!("site_{}", b % 19),
            floor_area: Some(area),
            primary_usage: Some(name.to_string()),
        });
        ids.push(id);
        archetype_of.push(archetype);
        columns.push(col);
    }
    let table = MeterTable::new(ids, timestamps, columns)?;
    Ok(SynthCorpus {
        table,
        metadata,
        building_archetype: archetype_of,
        day_dates,
        day_regime,
    })
}

impl SynthCorpus {
    /// Write `meters.csv`, `metadata.csv`, `truth_buildings.csv` and
    /// `truth_days.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let create = |name: &str| {
            let path = dir.join(name);
            fs::File::create(&path)
                .map(BufWriter::new)
                .map_err(|e| PipelineError::io(&path, e))
        };
        write_meter_csv(&self.table, create("meters.csv")?)?;
        write_metadata_csv(&self.metadata, create("metadata.csv")?)?;

        let mut w = csv::Writer::from_writer(create("truth_buildings.csv")?);
        w.write_record(["building_id", "archetype"])?;
        for (id, a) in self.table.building_ids().iter().zip(&self.building_archetype) {
            w.write_record([id.clone(), a.to_string()])?;
        }
        w.flush().map_err(|e| PipelineError::io(dir, e))?;

        let mut w = csv::Writer::from_writer(create("truth_days.csv")?);
        w.write_record(["date", "regime"])?;
        for (d, r) in self.day_dates.iter().zip(&self.day_regime) {
            w.write_record([d.to_string(), r.to_string()])?;
        }
        w.flush().map_err(|e| PipelineError::io(dir, e))?;
        Ok(())
    }
}

/// Replace each hourly label, with probability `rate`, by a different
/// label drawn uniformly.
pub fn perturb_labels(cat: &CategoricalDayMatrix, rate: f64, seed: u64) -> CategoricalDayMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cat.categories as u8;
    let mut out = cat.clone();
    for day in &mut out.labels {
        for label in day.iter_mut() {
            if rng.random_bool(rate) {
                let shift = rng.random_range(1..n);
                *label = (*label + shift) % n;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regimes_follow_the_calendar() {
        let mon = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        let sat = NaiveDate::from_ymd_opt(2016, 1, 2).unwrap();
        let sun = NaiveDate::from_ymd_opt(2016, 1, 3).unwrap();
        assert_eq!(regime_of(mon, 2), 0);
        assert_eq!(regime_of(sat, 2), 1);
        assert_eq!(regime_of(sun, 2), 1);
        assert_eq!(regime_of(sun, 3), 2);
        assert_eq!(regime_of(sat, 1), 0);
    }

    #[test]
    fn corpus_shape() {
        let c = generate_synthetic(&SynthConfig::default()).unwrap();
        assert_eq!(c.table.building_count(), 12);
        assert_eq!(c.table.row_count(), 60 * 24);
        assert_eq!(c.metadata.len(), 12);
        assert_eq!(c.building_archetype, (0..12).map(|b| b % 3).collect::<Vec<_>>());
        assert_eq!(c.table.missing_count(), 0);
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_synthetic(&SynthConfig::default()).unwrap();
        let b = generate_synthetic(&SynthConfig::default()).unwrap();
        assert_eq!(a.table, b.table);
        let c = generate_synthetic(&SynthConfig { seed: 1, ..Default::default() }).unwrap();
        assert_ne!(a.table, c.table);
    }

    #[test]
    fn preconditions() {
        assert!(generate_synthetic(&SynthConfig { days: 6, ..Default::default() }).is_err());
        assert!(generate_synthetic(&SynthConfig { buildings: 0, ..Default::default() }).is_err());
        assert!(generate_synthetic(&SynthConfig { regimes: 4, ..Default::default() }).is_err());
    }

    #[test]
    fn missing_rate_blanks_cells() {
        let c = generate_synthetic(&SynthConfig { missing_rate: 0.1, ..Default::default() }).unwrap();
        let frac = c.table.missing_count() as f64 / (12.0 * 1440.0);
        assert!((frac - 0.1).abs() < 0.02);
    }

    #[test]
    fn perturbation_changes_about_rate_of_labels() {
        let cat = CategoricalDayMatrix {
            building_id: "b".into(),
            day_dates: vec![NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(); 500],
            labels: vec![[1; 24]; 500],
            categories: 4,
        };
        let noisy = perturb_labels(&cat, 0.02, 3);
        let changed = noisy.labels.iter().flatten().filter(|&&l| l != 1).count();
        let frac = changed as f64 / 12_000.0;
        assert!((frac - 0.02).abs() < 0.005, "{frac}");
        assert!(noisy.labels.iter().flatten().all(|&l| l < 4));
    }
}
