//! From one building's hourly series to its daily behavior matrices.
//!
//! Readings are normalised per square foot and min-max scaled to `[0, 1]`,
//! then every hour is labelled by the building's own quantiles (low,
//! medium-low, medium-high, high for the default four categories). Complete
//! days form the categorical `D x 24` matrix, which is expanded one-hot into
//! the `D x 24n` binary matrix whose rows are the daily behavior vectors.

use std::io::Write;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use nalgebra::DMatrix;
use thiserror::Error;

use crate::ingest::{BuildingMetadata, HourlySeries};

pub const HOURS_PER_DAY: usize = 24;
pub const DEFAULT_CATEGORIES: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BehaviorError {
    #[error("building {0:?} has no floor area")]
    MissingArea(String),
    #[error("building {0:?} has a degenerate series (no spread in its readings)")]
    DegenerateSeries(String),
    #[error("building {0:?} has no complete days")]
    NoCompleteDays(String),
    #[error("category count {0} is outside 2..=255")]
    InvalidCategories(usize),
    #[error("shape error: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledSeries {
    pub building_id: String,
    pub timestamps: Vec<NaiveDateTime>,
    /// Values in `[0, 1]`, `None` where the reading was missing.
    pub values: Vec<Option<f64>>,
}

/// Energy use per square foot, min-max scaled over the non-missing hours.
pub fn scale_series(
    series: &HourlySeries,
    meta: &BuildingMetadata,
) -> Result<ScaledSeries, BehaviorError> {
    let area = meta
        .floor_area
        .filter(|a| a.is_finite() && *a > 0.0)
        .ok_or_else(|| BehaviorError::MissingArea(series.building_id.clone()))?;

    let per_area: Vec<Option<f64>> = series.values.iter().map(|v| v.map(|x| x / area)).collect();
    let (min, max) = per_area
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(max > min) {
        return Err(BehaviorError::DegenerateSeries(series.building_id.clone()));
    }
    let range = max - min;
    Ok(ScaledSeries {
        building_id: series.building_id.clone(),
        timestamps: series.timestamps.clone(),
        values: per_area
            .into_iter()
            .map(|v| v.map(|x| (x - min) / range))
            .collect(),
    })
}

/// Percentile of sorted data by linear interpolation between order statistics.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted.len() {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Category thresholds over a building's readings.
///
/// `cuts[l - 1]` is the lower edge of category `l`. A cut that does not rise
/// above the previous edge (the minimum, for the first cut) is collapsed:
/// its category is left empty and tied values stay in the lower category.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCuts {
    cuts: Vec<f64>,
    active: Vec<bool>,
}

impl QuantileCuts {
    pub fn fit(values: &[f64], categories: usize) -> Option<Self> {
        if values.is_empty() || categories < 2 {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let cuts: Vec<f64> = (1..categories)
            .map(|l| percentile_sorted(&sorted, l as f64 / categories as f64))
            .collect();
        let mut prev = sorted[0];
        let active = cuts
            .iter()
            .map(|&c| {
                let rises = c > prev;
                prev = c;
                rises
            })
            .collect();
        Some(QuantileCuts { cuts, active })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.cuts
    }

    /// Largest category whose (non-collapsed) lower edge is `<= v`.
    pub fn label(&self, v: f64) -> u8 {
        let mut label = 0;
        for (i, (&c, &on)) in self.cuts.iter().zip(&self.active).enumerate() {
            if v < c {
                break;
            }
            if on {
                label = i + 1;
            }
        }
        label as u8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub building_id: String,
    pub timestamps: Vec<NaiveDateTime>,
    pub labels: Vec<Option<u8>>,
    pub categories: usize,
    pub thresholds: Vec<f64>,
}

pub fn quantile_bin(scaled: &ScaledSeries, categories: usize) -> Result<LabeledSeries, BehaviorError> {
    if !(2..=255).contains(&categories) {
        return Err(BehaviorError::InvalidCategories(categories));
    }
    let present: Vec<f64> = scaled.values.iter().flatten().copied().collect();
    if present.len() < categories {
        return Err(BehaviorError::DegenerateSeries(scaled.building_id.clone()));
    }
    let cuts = QuantileCuts::fit(&present, categories)
        .ok_or_else(|| BehaviorError::DegenerateSeries(scaled.building_id.clone()))?;
    Ok(LabeledSeries {
        building_id: scaled.building_id.clone(),
        timestamps: scaled.timestamps.clone(),
        labels: scaled.values.iter().map(|v| v.map(|x| cuts.label(x))).collect(),
        categories,
        thresholds: cuts.thresholds().to_vec(),
    })
}

/// `B(x, y)`: one row of hourly labels per complete calendar day.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDayMatrix {
    pub building_id: String,
    pub day_dates: Vec<NaiveDate>,
    pub labels: Vec<[u8; HOURS_PER_DAY]>,
    pub categories: usize,
}

impl CategoricalDayMatrix {
    pub fn days(&self) -> usize {
        self.day_dates.len()
    }
}

/// Group labelled hours by calendar date, keeping only days whose 24 hours
/// are all present.
pub fn build_day_matrix(labeled: &LabeledSeries) -> Result<CategoricalDayMatrix, BehaviorError> {
    let mut day_dates = Vec::new();
    let mut labels = Vec::new();
    let mut current: Option<NaiveDate> = None;
    let mut hours = [None::<u8>; HOURS_PER_DAY];

    let mut flush = |date: Option<NaiveDate>, hours: &[Option<u8>; HOURS_PER_DAY]| {
        if let Some(date) = date {
            if hours.iter().all(Option::is_some) {
                day_dates.push(date);
                labels.push(hours.map(|h| h.unwrap_or_default()));
            }
        }
    };

    for (ts, label) in labeled.timestamps.iter().zip(&labeled.labels) {
        let date = ts.date();
        if current != Some(date) {
            flush(current, &hours);
            current = Some(date);
            hours = [None; HOURS_PER_DAY];
        }
        hours[ts.hour() as usize] = *label;
    }
    flush(current, &hours);

    if day_dates.is_empty() {
        return Err(BehaviorError::NoCompleteDays(labeled.building_id.clone()));
    }
    Ok(CategoricalDayMatrix {
        building_id: labeled.building_id.clone(),
        day_dates,
        labels,
        categories: labeled.categories,
    })
}

/// `B'(x, y)`: the one-hot expansion of the categorical matrix.
///
/// Column `label * 24 + hour` of row `i` is 1 when hour `hour` of day `i`
/// carries `label`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryBehaviorMatrix {
    pub building_id: String,
    pub day_dates: Vec<NaiveDate>,
    pub categories: usize,
    rows: DMatrix<f64>,
}

impl BinaryBehaviorMatrix {
    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn days(&self) -> usize {
        self.rows.nrows()
    }

    pub fn width(&self) -> usize {
        self.rows.ncols()
    }

    /// Read back the label of every hour from its one-hot block.
    pub fn to_categorical(&self) -> CategoricalDayMatrix {
        let labels = (0..self.days())
            .map(|i| {
                let mut day = [0u8; HOURS_PER_DAY];
                for (h, slot) in day.iter_mut().enumerate() {
                    let mut best = 0;
                    for l in 1..self.categories {
                        if self.rows[(i, l * HOURS_PER_DAY + h)]
                            > self.rows[(i, best * HOURS_PER_DAY + h)]
                        {
                            best = l;
                        }
                    }
                    *slot = best as u8;
                }
                day
            })
            .collect();
        CategoricalDayMatrix {
            building_id: self.building_id.clone(),
            day_dates: self.day_dates.clone(),
            labels,
            categories: self.categories,
        }
    }
}

pub fn binarize(cat: &CategoricalDayMatrix) -> BinaryBehaviorMatrix {
    let width = HOURS_PER_DAY * cat.categories;
    let mut rows = DMatrix::zeros(cat.days(), width);
    for (i, day) in cat.labels.iter().enumerate() {
        for (h, &label) in day.iter().enumerate() {
            rows[(i, label as usize * HOURS_PER_DAY + h)] = 1.0;
        }
    }
    BinaryBehaviorMatrix {
        building_id: cat.building_id.clone(),
        day_dates: cat.day_dates.clone(),
        categories: cat.categories,
        rows,
    }
}

/// Scale, label, group and expand one building's series.
pub fn behavior_matrices(
    series: &HourlySeries,
    meta: &BuildingMetadata,
    categories: usize,
) -> Result<(CategoricalDayMatrix, BinaryBehaviorMatrix), BehaviorError> {
    let scaled = scale_series(series, meta)?;
    let labeled = quantile_bin(&scaled, categories)?;
    let cat = build_day_matrix(&labeled)?;
    let bin = binarize(&cat);
    Ok((cat, bin))
}

pub fn write_day_matrix_csv<W: Write>(cat: &CategoricalDayMatrix, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend((0..HOURS_PER_DAY).map(|h| format!("h{h:02}")));
    w.write_record(&header)?;
    for (date, day) in cat.day_dates.iter().zip(&cat.labels) {
        let mut rec = vec![date.to_string()];
        rec.extend(day.iter().map(u8::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_binary_matrix_csv<W: Write>(bin: &BinaryBehaviorMatrix, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    for l in 0..bin.categories {
        header.extend((0..HOURS_PER_DAY).map(|h| format!("l{l}_h{h:02}")));
    }
    w.write_record(&header)?;
    for (i, date) in bin.day_dates.iter().enumerate() {
        let mut rec = vec![date.to_string()];
        rec.extend(bin.rows.row(i).iter().map(|&v| (v as u8).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;
    use proptest::prelude::*;

    fn hours_from(start: &str, n: usize) -> Vec<NaiveDateTime> {
        let t0 = crate::ingest::parse_timestamp(start).unwrap();
        (0..n).map(|i| t0 + Duration::hours(i as i64)).collect()
    }

    fn series(values: Vec<Option<f64>>) -> HourlySeries {
        HourlySeries {
            building_id: "b".into(),
            timestamps: hours_from("2016-01-01 00:00", values.len()),
            values,
        }
    }

    fn meta(area: Option<f64>) -> BuildingMetadata {
        BuildingMetadata {
            building_id: "b".into(),
            site: "s".into(),
            floor_area: area,
            primary_usage: None,
        }
    }

    fn scaled(values: &[f64]) -> ScaledSeries {
        ScaledSeries {
            building_id: "b".into(),
            timestamps: hours_from("2016-01-01 00:00", values.len()),
            values: values.iter().map(|&v| Some(v)).collect(),
        }
    }

    #[test]
    fn two_point_min_max() {
        let s = scale_series(&series(vec![Some(100.0), Some(300.0)]), &meta(Some(100.0))).unwrap();
        assert_eq!(s.values, vec![Some(0.0), Some(1.0)]);
    }

    #[test]
    fn three_point_min_max_keeps_missing() {
        let s = scale_series(
            &series(vec![Some(1.0), None, Some(2.0), Some(3.0)]),
            &meta(Some(1.0)),
        )
        .unwrap();
        assert_eq!(s.values, vec![Some(0.0), None, Some(0.5), Some(1.0)]);
    }

    #[test]
    fn scale_errors() {
        assert_eq!(
            scale_series(&series(vec![Some(5.0); 3]), &meta(Some(1.0))),
            Err(BehaviorError::DegenerateSeries("b".into()))
        );
        assert_eq!(
            scale_series(&series(vec![None; 3]), &meta(Some(1.0))),
            Err(BehaviorError::DegenerateSeries("b".into()))
        );
        assert_eq!(
            scale_series(&series(vec![Some(1.0), Some(2.0)]), &meta(None)),
            Err(BehaviorError::MissingArea("b".into()))
        );
    }

    /// Quartile labels by counting how many sorted-order quartile positions a
    /// value reaches, computed directly from the order statistics.
    fn sort_oracle(values: &[f64]) -> Vec<u8> {
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64 - 1.0;
        let q = |p: f64| {
            let pos = p * n;
            let (i, f) = (pos.floor() as usize, pos.fract());
            if f == 0.0 { s[i] } else { s[i] * (1.0 - f) + s[i + 1] * f }
        };
        let qs = [q(0.25), q(0.5), q(0.75)];
        values
            .iter()
            .map(|v| qs.iter().filter(|&&t| *v >= t).count() as u8)
            .collect()
    }

    #[test]
    fn one_to_eight_quartiles() {
        let vals: Vec<f64> = (1..=8).map(f64::from).collect();
        let expected = sort_oracle(&vals);
        assert_eq!(expected, vec![0, 0, 1, 1, 2, 2, 3, 3]);
        let labeled = quantile_bin(&scaled(&vals), 4).unwrap();
        let got: Vec<u8> = labeled.labels.iter().map(|l| l.unwrap()).collect();
        assert_eq!(got, expected);
        assert_eq!(labeled.thresholds, vec![2.75, 4.5, 6.25]);
    }

    #[test]
    fn identical_values_collapse_to_lowest_label() {
        let labeled = quantile_bin(&scaled(&[0.4; 8]), 4).unwrap();
        assert!(labeled.labels.iter().all(|l| *l == Some(0)));
    }

    #[test]
    fn tied_mass_at_minimum_stays_low() {
        // 50% zeros: first two cuts sit on the minimum and collapse
        let vals = [0.0, 0.0, 0.0, 0.0, 0.2, 0.4, 0.6, 0.8];
        let labeled = quantile_bin(&scaled(&vals), 4).unwrap();
        let got: Vec<u8> = labeled.labels.iter().map(|l| l.unwrap()).collect();
        assert_eq!(got, vec![0, 0, 0, 0, 2, 2, 3, 3]);
    }

    #[test]
    fn too_few_values_is_degenerate() {
        assert!(matches!(
            quantile_bin(&scaled(&[0.1, 0.2]), 4),
            Err(BehaviorError::DegenerateSeries(_))
        ));
        assert!(matches!(
            quantile_bin(&scaled(&[0.1, 0.2]), 1),
            Err(BehaviorError::InvalidCategories(1))
        ));
    }

    fn labeled_hours(start: &str, labels: Vec<Option<u8>>) -> LabeledSeries {
        LabeledSeries {
            building_id: "b".into(),
            timestamps: hours_from(start, labels.len()),
            labels,
            categories: 4,
            thresholds: vec![],
        }
    }

    #[test]
    fn two_full_days() {
        let cat = build_day_matrix(&labeled_hours("2016-01-01 00:00", vec![Some(1); 48])).unwrap();
        assert_eq!(cat.days(), 2);
    }

    #[test]
    fn incomplete_day_dropped() {
        let mut labels = vec![Some(2); 48];
        labels[7] = None;
        let cat = build_day_matrix(&labeled_hours("2016-01-01 00:00", labels)).unwrap();
        assert_eq!(cat.days(), 1);
        assert_eq!(cat.day_dates[0], NaiveDate::from_ymd_opt(2016, 1, 2).unwrap());
    }

    #[test]
    fn partial_leading_day_dropped() {
        let cat = build_day_matrix(&labeled_hours("2016-01-01 12:00", vec![Some(0); 36])).unwrap();
        assert_eq!(cat.day_dates, vec![NaiveDate::from_ymd_opt(2016, 1, 2).unwrap()]);
        assert!(matches!(
            build_day_matrix(&labeled_hours("2016-01-01 01:00", vec![Some(0); 23])),
            Err(BehaviorError::NoCompleteDays(_))
        ));
    }

    #[test]
    fn two_years_of_days() {
        // 2016 is a leap year
        let expected = (NaiveDate::from_ymd_opt(2018, 1, 1).unwrap()
            - NaiveDate::from_ymd_opt(2016, 1, 1).unwrap())
        .num_days() as usize;
        assert_eq!(expected, 731);
        let cat =
            build_day_matrix(&labeled_hours("2016-01-01 00:00", vec![Some(3); expected * 24]))
                .unwrap();
        assert_eq!(cat.days(), 731);
    }

    fn one_day(labels: [u8; 24]) -> CategoricalDayMatrix {
        CategoricalDayMatrix {
            building_id: "b".into(),
            day_dates: vec![NaiveDate::from_ymd_opt(2016, 1, 1).unwrap()],
            labels: vec![labels],
            categories: 4,
        }
    }

    #[test]
    fn all_low_day() {
        let bin = binarize(&one_day([0; 24]));
        assert_eq!(bin.width(), 96);
        for c in 0..96 {
            assert_eq!(bin.rows()[(0, c)], if c < 24 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn single_hour_displacement() {
        let mut day = [0; 24];
        day[5] = 3;
        let bin = binarize(&one_day(day));
        assert_eq!(bin.rows()[(0, 77)], 1.0);
        for c in 0..24 {
            assert_eq!(bin.rows()[(0, c)], if c == 5 { 0.0 } else { 1.0 });
        }
        assert_eq!(bin.rows().row(0).sum(), 24.0);
    }

    #[test]
    fn debug_dumps_have_expected_shape() {
        let bin = binarize(&one_day([1; 24]));
        let mut buf = Vec::new();
        write_binary_matrix_csv(&bin, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), 97);
        let mut buf = Vec::new();
        write_day_matrix_csv(&bin.to_categorical(), &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("2016-01-01,1,1"));
    }

    proptest! {
        #[test]
        fn binarize_is_label_preserving(days in prop::collection::vec(prop::array::uniform24(0u8..4), 1..20)) {
            let cat = CategoricalDayMatrix {
                building_id: "b".into(),
                day_dates: (0..days.len())
                    .map(|i| NaiveDate::from_ymd_opt(2016, 1, 1).unwrap() + Duration::days(i as i64))
                    .collect(),
                labels: days,
                categories: 4,
            };
            let bin = binarize(&cat);
            for i in 0..bin.days() {
                prop_assert_eq!(bin.rows().row(i).sum(), 24.0);
            }
            prop_assert_eq!(bin.to_categorical(), cat);
        }

        #[test]
        fn binning_is_monotone(vals in prop::collection::vec(0.0f64..1.0, 4..200)) {
            let labeled = quantile_bin(&scaled(&vals), 4).unwrap();
            let mut pairs: Vec<(f64, u8)> = vals.iter().copied()
                .zip(labeled.labels.iter().map(|l| l.unwrap()))
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in pairs.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
        }

        #[test]
        fn positive_rescaling_does_not_change_labels(
            vals in prop::collection::vec(0.0f64..1000.0, 8..100),
            c in 0.01f64..100.0,
        ) {
            prop_assume!(vals.iter().any(|&v| v != vals[0]));
            let m = meta(Some(250.0));
            let base = series(vals.iter().map(|&v| Some(v)).collect());
            let scaled_up = series(vals.iter().map(|&v| Some(c * v)).collect());
            let a = quantile_bin(&scale_series(&base, &m).unwrap(), 4).unwrap();
            let b = quantile_bin(&scale_series(&scaled_up, &m).unwrap(), 4).unwrap();
            prop_assert_eq!(a.labels, b.labels);
        }
    }
}
