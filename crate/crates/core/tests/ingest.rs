mod common;

use chrono::NaiveDate;
use common::synthetic;
use proptest::prelude::*;
use traffic_llm::ingest::{
    build_dataset, filter_dead_windows, is_dead, make_windows, resample_hourly, write_tasks, DatasetConfig,
    DatasetInputs, RawFlowRecord, Window,
};
use traffic_llm::model::{FlowSeries, LocalHour};

fn window(values: Vec<u32>) -> Window {
    let split = values.len() / 2;
    Window {
        sensor_id: "s".into(),
        history: values[..split].to_vec(),
        target: values[split..].to_vec(),
        anchor: LocalHour::from_ymdh(2018, 5, 1, 11).unwrap(),
    }
}

fn inputs(flows: &str) -> DatasetInputs {
    DatasetInputs {
        flow_dir: synthetic(flows),
        sensors_file: synthetic("sensors.csv"),
        poi_file: Some(synthetic("poi.csv")),
        weather_file: synthetic("weather.csv"),
        bucket_table: None,
        holidays: None,
    }
}

#[test]
fn twenty_four_zeros_are_dead_twenty_three_are_not() {
    let dead = window(vec![0; 24]);
    let mut alive = vec![0; 24];
    alive[23] = 5;
    let alive = window(alive);
    assert!(is_dead(&dead));
    assert!(!is_dead(&alive));
    assert_eq!(filter_dead_windows(vec![dead, alive.clone()]), vec![alive]);
}

#[test]
fn windows_skip_missing_hours() {
    let mut values: Vec<Option<u32>> = (1..=30).map(Some).collect();
    values[10] = None;
    let series = FlowSeries {
        sensor_id: "s".into(),
        start: LocalHour::from_ymdh(2018, 5, 1, 0).unwrap(),
        values,
    };
    let w = make_windows(&series, 4, 4, 1).unwrap();
    assert!(w
        .windows
        .iter()
        .all(|w| !w.history.contains(&11) && !w.target.contains(&11)));
    assert_eq!(w.windows.len() + w.skipped_missing, 30 - 8 + 1);
    assert_eq!(w.skipped_missing, 8);
}

#[test]
fn build_is_deterministic_and_splits_are_disjoint() {
    let cfg = DatasetConfig::default();
    let a = build_dataset(&inputs("flows_noisy"), &cfg).unwrap();
    let b = build_dataset(&inputs("flows_noisy"), &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    write_tasks(&pa, &a.split.train).unwrap();
    write_tasks(&pb, &b.split.train).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());

    let train: std::collections::BTreeSet<_> = a.split.train.iter().map(|t| t.task.id.clone()).collect();
    assert!(a.split.test.iter().all(|t| !train.contains(&t.task.id)));
    for t in &a.split.train {
        assert!(t.task.step_hour(t.task.horizon).date().to_string().starts_with("2018"));
        assert!(t.task.step_hour(1).date().to_string().starts_with("2018"));
    }
    for t in &a.split.test {
        assert!(t.task.step_hour(1).date().to_string().starts_with("2019"));
    }
    // the 30-hour outage on the second sensor leaves 30 - 24 + 1 dead windows
    assert_eq!(a.report.dead_windows, 7);
    assert!(a.report.weather_filled > 0);
}

#[test]
fn christmas_tasks_carry_the_holiday() {
    let built = build_dataset(&inputs("flows_periodic"), &DatasetConfig::default()).unwrap();
    let xmas = NaiveDate::from_ymd_opt(2018, 12, 25).unwrap();
    let tagged: Vec<_> = built
        .split
        .train
        .iter()
        .filter(|t| t.task.anchor().date() == xmas)
        .collect();
    assert!(!tagged.is_empty());
    assert!(tagged
        .iter()
        .all(|t| t.task.calendar.holiday.as_deref() == Some("Christmas Day")));
}

fn records_strategy() -> impl Strategy<Value = Vec<(u32, u32, Option<u32>)>> {
    prop::collection::vec((0u32..4, 0u32..4, prop::option::weighted(0.9, 0u32..500)), 4..80)
}

proptest! {
    #[test]
    fn dead_filter_is_idempotent(
        windows in prop::collection::vec(prop::collection::vec(prop_oneof![3 => Just(0u32), 1 => 0u32..50], 24), 0..60),
    ) {
        let windows: Vec<Window> = windows.into_iter().map(window).collect();
        let once = filter_dead_windows(windows);
        prop_assert_eq!(filter_dead_windows(once.clone()), once.clone());
        prop_assert!(once.iter().all(|w| !is_dead(w)));
    }

    /// Sum of complete hours equals the sum of their quarter-hour counts.
    #[test]
    fn resampling_conserves_mass(cells in records_strategy()) {
        let start = NaiveDate::from_ymd_opt(2018, 6, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let mut quarters = std::collections::BTreeMap::new();
        for (i, (_, _, count)) in cells.iter().enumerate() {
            if let Some(c) = count {
                quarters.insert(i as i64, *c);
            }
        }
        prop_assume!(!quarters.is_empty());
        let records: Vec<RawFlowRecord> = quarters
            .iter()
            .map(|(&q, &count)| RawFlowRecord {
                sensor_id: "s".into(),
                timestamp: start + chrono::Duration::minutes(15 * q),
                count,
            })
            .collect();
        let series = resample_hourly(&records, 15).unwrap();
        prop_assert_eq!(series.len(), 1);
        let s = &series[0];
        for (idx, v) in s.values.iter().enumerate() {
            let hour = s.hour_at(idx).datetime();
            let q0 = (hour - start).num_minutes() / 15;
            let present: Vec<u32> = (q0..q0 + 4).filter_map(|q| quarters.get(&q).copied()).collect();
            if present.len() == 4 {
                prop_assert_eq!(*v, Some(present.iter().sum::<u32>()));
            } else {
                prop_assert_eq!(*v, None);
            }
        }
    }
}
