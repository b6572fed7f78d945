use chrono::{Duration, NaiveDate};
use eigenbehavior::ingest::*;
use proptest::prelude::*;

fn table() -> impl Strategy<Value = MeterTable> {
    (1usize..5, 1usize..48).prop_flat_map(|(buildings, rows)| {
        let cell = prop::option::weighted(0.9, 0.0f64..1e6);
        prop::collection::vec(prop::collection::vec(cell, rows), buildings).prop_map(move |columns| {
            let t0 = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
            let ids = (0..buildings).map(|b| format!("b{b}")).collect();
            let ts = (0..rows).map(|h| t0 + Duration::hours(h as i64)).collect();
            MeterTable::new(ids, ts, columns).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn meter_csv_round_trips(t in table()) {
        let mut buf = Vec::new();
        write_meter_csv(&t, &mut buf).unwrap();
        let parsed = parse_meter_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(&parsed.table, &t);
        prop_assert_eq!(parsed.report.rows_in, t.row_count());
        prop_assert_eq!(parsed.report.rows_out, t.row_count());
        prop_assert_eq!(parsed.report.empty_cells, t.missing_count());
        prop_assert_eq!(parsed.report.missing_cells(), t.missing_count());
        prop_assert!(parsed.report.rejected.is_empty());
    }

    #[test]
    fn metadata_csv_round_trips(areas in prop::collection::vec(prop::option::of(1.0f64..1e6), 1..10)) {
        let records: Vec<BuildingMetadata> = areas
            .iter()
            .enumerate()
            .map(|(i, a)| BuildingMetadata {
                building_id: format!("b{i}"),
                site: format!("s{}", i % 3),
                floor_area: *a,
                primary_usage: (i % 2 == 0).then(|| "Office".to_string()),
            })
            .collect();
        let mut buf = Vec::new();
        write_metadata_csv(&records, &mut buf).unwrap();
        prop_assert_eq!(parse_metadata_csv(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn row_order_does_not_matter(t in table(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut buf = Vec::new();
        write_meter_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let header = lines.remove(0);
        lines.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let shuffled = std::iter::once(header).chain(lines).collect::<Vec<_>>().join("\n");
        prop_assert_eq!(parse_meter_csv(shuffled.as_bytes()).unwrap().table, t);
    }
}
