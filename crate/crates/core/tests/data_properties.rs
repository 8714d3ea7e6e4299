//! Property tests for parsing, the geometry join, cleaning and features.

use chrono::{Duration, NaiveDate};
use proptest::prelude::*;

use wildfire_core::clean::{clean_records, summarize, FireRecord};
use wildfire_core::features::{feature_matrix, prepare_dataset, Standardizer};
use wildfire_core::ingest::{
    join_geometry, parse_perimeter_csv, polygon_centroid, write_perimeter_csv, Geometry, GeometryEntry, GeometryTable,
    JoinedRecord, Polygon, RawFireRecord,
};
use wildfire_core::synth::synth_records;

fn date_text() -> impl Strategy<Value = String> {
    (1990i32..2024, 1u32..=12, 1u32..=28).prop_map(|(y, m, d)| format!("{y:04}-{m:02}-{d:02}"))
}

fn raw_record() -> impl Strategy<Value = RawFireRecord> {
    (
        (1990i32..2024, proptest::option::of("\\{[A-F0-9]{8}\\}"), "[A-Z][A-Z ]{0,10}[A-Z]", date_text(), date_text()),
        (
            proptest::option::of(1i64..20),
            proptest::option::of("[A-Z]{3}"),
            proptest::option::of("[A-Z]{3}"),
            proptest::option::of(1i64..9),
            proptest::option::of(1i64..3),
            proptest::option::of(0.0f64..1e6),
        ),
    )
        .prop_map(|((year, irwin, name, alarm, cont), (cause, agency, unit, method, objective, acres))| RawFireRecord {
            year_digitized: year,
            irwin_id: irwin,
            fire_name: name,
            alarm_date_text: alarm,
            cont_date_text: cont,
            cause_code: cause,
            agency_code: agency,
            unit_id: unit,
            c_method_code: method,
            objective_code: objective,
            gis_acres: acres,
        })
}

/// Convex polygon: sorted angles on an ellipse, counterclockwise.
fn convex_polygon() -> impl Strategy<Value = Vec<(f64, f64)>> {
    (
        -150.0f64..150.0,
        -80.0f64..80.0,
        0.01f64..5.0,
        0.01f64..5.0,
        proptest::collection::btree_set(0u32..3600, 3..12),
    )
        .prop_map(|(cx, cy, rx, ry, angles)| {
            let mut ring: Vec<(f64, f64)> = angles
                .into_iter()
                .map(|a| {
                    let t = a as f64 / 3600.0 * std::f64::consts::TAU;
                    (cx + rx * t.cos(), cy + ry * t.sin())
                })
                .collect();
            ring.push(ring[0]);
            ring
        })
}

fn ring_area(ring: &[(f64, f64)]) -> f64 {
    ring.windows(2).map(|w| w[0].0 * w[1].1 - w[1].0 * w[0].1).sum::<f64>() / 2.0
}

/// A cleaned record pushed back through the join output type.
fn as_joined(r: &FireRecord) -> JoinedRecord {
    JoinedRecord {
        record: RawFireRecord {
            year_digitized: r.year_digitized,
            irwin_id: r.irwin_id.clone(),
            fire_name: r.fire_name.clone(),
            alarm_date_text: r.alarm_date.to_string(),
            cont_date_text: r.cont_date.to_string(),
            cause_code: r.cause_code,
            agency_code: r.agency_code.clone(),
            unit_id: r.unit_id.clone(),
            c_method_code: r.c_method_code,
            objective_code: r.objective_code,
            gis_acres: Some(r.gis_acres),
        },
        latitude: r.latitude,
        longitude: r.longitude,
    }
}

fn joined_record() -> impl Strategy<Value = JoinedRecord> {
    (
        raw_record(),
        prop_oneof![Just("2020-13-01".to_string()), date_text()],
        prop::bool::weighted(0.2),
        30.0f64..45.0,
        -127.0f64..-112.0,
    )
        .prop_map(|(mut raw, alarm, drop_acres, lat, lon)| {
            raw.alarm_date_text = alarm;
            if drop_acres {
                raw.gis_acres = None;
            }
            // A small name pool makes duplicate keys common.
            raw.irwin_id = raw.irwin_id.map(|id| id[..3].to_string() + "}");
            JoinedRecord { record: raw, latitude: lat, longitude: lon }
        })
}

fn fire(alarm: NaiveDate, days: i64, acres: f64, cause: i64) -> FireRecord {
    FireRecord {
        year_digitized: 2020,
        irwin_id: None,
        fire_name: format!("F{acres}"),
        alarm_date: alarm,
        cont_date: alarm + Duration::days(days),
        cause_code: Some(cause),
        agency_code: Some("CDF".into()),
        unit_id: Some(format!("U{}", cause % 3)),
        c_method_code: Some(cause % 8 + 1),
        objective_code: Some(1),
        gis_acres: acres,
        latitude: 37.0,
        longitude: -120.0,
        containment_days: days as u32,
        log_cont_days: (days as f64).ln_1p(),
    }
}

fn fire_strategy(years: std::ops::Range<i32>) -> impl Strategy<Value = FireRecord> {
    (years, 1u32..=365, 0i64..60, 0.0f64..5e4, 1i64..15).prop_map(|(y, doy, days, acres, cause)| {
        fire(NaiveDate::from_yo_opt(y, doy).expect("valid ordinal"), days, acres, cause)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perimeter_csv_round_trips(records in proptest::collection::vec(raw_record(), 0..20)) {
        let text = write_perimeter_csv(&records);
        prop_assert_eq!(parse_perimeter_csv(text.as_bytes()).unwrap(), records);
    }

    #[test]
    fn centroid_is_translation_equivariant(ring in convex_polygon(), dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
        let g = Geometry::Polygon(Polygon::new(vec![ring]).unwrap());
        let c = polygon_centroid(&g).unwrap();
        let moved = polygon_centroid(&g.translated(dx, dy)).unwrap();
        prop_assert!((moved.longitude - (c.longitude + dx)).abs() < 1e-9);
        prop_assert!((moved.latitude - (c.latitude + dy)).abs() < 1e-9);
    }

    #[test]
    fn convex_centroid_lies_inside(ring in convex_polygon()) {
        let c = polygon_centroid(&Geometry::Polygon(Polygon::new(vec![ring.clone()]).unwrap())).unwrap();
        let area = ring_area(&ring);
        prop_assume!(area.abs() > 1e-6);
        for w in ring.windows(2) {
            let cross = (w[1].0 - w[0].0) * (c.latitude - w[0].1) - (w[1].1 - w[0].1) * (c.longitude - w[0].0);
            prop_assert!(cross * area.signum() >= -1e-9, "centroid outside edge {:?}", w);
        }
    }

    #[test]
    fn join_counts_balance(
        records in proptest::collection::vec((1990i32..1994, 0usize..5, proptest::option::of(0usize..4)), 0..25),
        entries in proptest::collection::vec((1990i32..1994, 0usize..5, proptest::option::of(0usize..4), prop::bool::weighted(0.85)), 0..25),
    ) {
        let names = ["ALPHA", "BRAVO", "CHARLIE", "DELTA", "ECHO"];
        let square = Geometry::Polygon(Polygon::new(vec![vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)]]).unwrap());
        let raw: Vec<RawFireRecord> = records
            .iter()
            .map(|&(year, n, id)| RawFireRecord {
                year_digitized: year,
                irwin_id: id.map(|i| format!("{{ID{i}}}")),
                fire_name: names[n].to_string(),
                alarm_date_text: "2000-01-01".into(),
                cont_date_text: "2000-01-02".into(),
                cause_code: None,
                agency_code: None,
                unit_id: None,
                c_method_code: None,
                objective_code: None,
                gis_acres: Some(1.0),
            })
            .collect();
        let table = GeometryTable {
            entries: entries
                .iter()
                .map(|&(year, n, id, ok)| GeometryEntry {
                    year,
                    irwin_id: id.map(|i| format!("{{ID{i}}}")),
                    fire_name: names[n].to_string(),
                    geometry: ok.then(|| square.clone()),
                })
                .collect(),
        };
        let (joined, report) = join_geometry(&raw, &table);
        prop_assert!(joined.len() <= raw.len().min(table.entries.len()));
        prop_assert_eq!(joined.len(), report.joined);
        prop_assert_eq!(report.dropped(), raw.len() - joined.len());
    }

    #[test]
    fn cleaning_is_consistent_and_idempotent(rows in proptest::collection::vec(joined_record(), 0..40)) {
        let (clean, report) = clean_records(&rows);
        prop_assert_eq!(report.rows_in, rows.len());
        prop_assert_eq!(report.rows_out + report.total_dropped(), rows.len());
        for r in &clean {
            prop_assert!((r.log_cont_days.exp() - 1.0 - r.containment_days as f64).abs() < 1e-9);
            prop_assert!(r.cont_date >= r.alarm_date);
            prop_assert!(r.in_bounds());
        }
        let again: Vec<JoinedRecord> = clean.iter().map(as_joined).collect();
        let (twice, report2) = clean_records(&again);
        prop_assert_eq!(report2.total_dropped(), 0);
        prop_assert_eq!(twice, clean);
    }

    #[test]
    fn stats_rows_are_ordered(values in proptest::collection::vec(-1e6f64..1e6, 1..200)) {
        let s = summarize("v", &values).unwrap();
        prop_assert!(s.min <= s.p25 && s.p25 <= s.p50 && s.p50 <= s.p75 && s.p75 <= s.max);
        prop_assert!(s.std >= 0.0);
        prop_assert!(s.min <= s.mean + 1e-6 && s.mean <= s.max + 1e-6);
        prop_assert_eq!(s.count, values.len());
    }

    #[test]
    fn test_rows_do_not_leak_into_fitted_state(
        train in proptest::collection::vec(fire_strategy(2005..2018), 2..30),
        test in proptest::collection::vec(fire_strategy(2018..2024), 1..30),
    ) {
        let anchor = fire(NaiveDate::from_ymd_opt(2019, 6, 1).unwrap(), 3, 10.0, 1);
        let with_one: Vec<FireRecord> = train.iter().cloned().chain([anchor]).collect();
        let with_all: Vec<FireRecord> = with_one.iter().cloned().chain(test).collect();
        let a = prepare_dataset(&with_one, 2018).unwrap();
        let b = prepare_dataset(&with_all, 2018).unwrap();
        prop_assert_eq!(serde_json::to_vec(&a.spec).unwrap(), serde_json::to_vec(&b.spec).unwrap());
        let n_num = a.spec.n_numeric();
        let sa = Standardizer::fit_rows(&a.features, &a.train_indices(), n_num).unwrap();
        let sb = Standardizer::fit_rows(&b.features, &b.train_indices(), n_num).unwrap();
        prop_assert_eq!(serde_json::to_vec(&sa).unwrap(), serde_json::to_vec(&sb).unwrap());
    }

    #[test]
    fn matrix_is_row_local_and_ignores_the_label(
        records in proptest::collection::vec(fire_strategy(2010..2024), 2..30),
        shift in 1i64..400,
    ) {
        let ds = match prepare_dataset(&records, 2018) {
            Ok(d) => d,
            Err(_) => return Ok(()),
        };
        prop_assert_eq!(&prepare_dataset(&records, 2018).unwrap(), &ds);
        for (i, r) in records.iter().enumerate() {
            let alone = feature_matrix(std::slice::from_ref(r), &ds.spec).unwrap();
            prop_assert_eq!(alone.row(0), ds.features.row(i));
        }
        // Moving the containment date (and so the label) leaves every
        // feature value unchanged.
        let relabeled: Vec<FireRecord> = records
            .iter()
            .map(|r| {
                let days = r.containment_days as i64 + shift;
                FireRecord { cont_date: r.alarm_date + Duration::days(days), containment_days: days as u32, log_cont_days: (days as f64).ln_1p(), ..r.clone() }
            })
            .collect();
        prop_assert_eq!(feature_matrix(&relabeled, &ds.spec).unwrap(), ds.features);
    }
}

#[test]
fn synthetic_target_is_right_skewed() {
    let mut days: Vec<f64> = synth_records(2000, 7).iter().map(|r| r.containment_days as f64).collect();
    let mean = days.iter().sum::<f64>() / days.len() as f64;
    days.sort_by(f64::total_cmp);
    let median = days[days.len() / 2];
    assert!(mean > median, "mean {mean} median {median}");
}
