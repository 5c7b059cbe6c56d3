use chrono::NaiveDate;
use proptest::prelude::*;
use traffic_llm::evaluate::{
    baseline_historical_average, baseline_persistence, compute_metrics, is_peak_hour, metrics_of, DayType, EvalPair,
};
use traffic_llm::model::WeatherCondition;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn oracle(y: &[f64], y_hat: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mae = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let mse = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    (mse.sqrt(), mae)
}

fn pair(start_hour: u32, y: Vec<u32>, y_hat: Vec<u32>) -> EvalPair {
    EvalPair {
        task_id: format!("s@{start_hour}"),
        sensor_id: "s".into(),
        date: NaiveDate::from_ymd_opt(2019, 3, 4).unwrap(),
        day_type: DayType::Weekday,
        weather: WeatherCondition::Sunny,
        step_hours: (0..y.len() as u32).map(|i| (start_hour + 1 + i) % 24).collect(),
        y,
        y_hat,
    }
}

#[test]
fn hand_computed_case() {
    let m = metrics_of([(100.0, 110.0), (200.0, 190.0), (300.0, 330.0)]).unwrap();
    assert!((m.mae - 50.0 / 3.0).abs() < 1e-9);
    assert!((m.rmse - (1100.0f64 / 3.0).sqrt()).abs() < 1e-9);
    assert!((m.mape.unwrap() - 25.0 / 3.0).abs() < 1e-9);
    assert!((m.rmse - 19.1485).abs() < 1e-4);
}

#[test]
fn identity_is_exactly_zero() {
    let m = metrics_of([(5.0, 5.0), (17.0, 17.0), (0.0, 0.0)]).unwrap();
    assert_eq!((m.rmse, m.mae, m.mape), (0.0, 0.0, Some(0.0)));
    assert_eq!(m.mape_excluded, 1);
}

#[test]
fn all_zero_ground_truth_has_undefined_mape() {
    let m = metrics_of([(0.0, 3.0), (0.0, 1.0)]).unwrap();
    assert_eq!(m.mape, None);
    assert_eq!(m.mape_excluded, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rmse_dominates_mae_and_matches_oracle(
        cells in prop::collection::vec((0.0f64..5000.0, 0.0f64..5000.0), 1..60),
    ) {
        let (y, y_hat): (Vec<f64>, Vec<f64>) = cells.iter().copied().unzip();
        let m = metrics_of(cells).unwrap();
        let (rmse, mae) = oracle(&y, &y_hat);
        prop_assert!(m.rmse >= m.mae);
        prop_assert!(m.mae >= 0.0);
        prop_assert!(close(m.rmse, rmse) && close(m.mae, mae));
    }

    #[test]
    fn joint_scaling(
        cells in prop::collection::vec((1.0f64..5000.0, 0.0f64..5000.0), 1..60),
        c in 0.01f64..100.0,
    ) {
        let base = metrics_of(cells.clone()).unwrap();
        let scaled = metrics_of(cells.iter().map(|&(a, b)| (c * a, c * b))).unwrap();
        prop_assert!(close(scaled.mae, c * base.mae));
        prop_assert!(close(scaled.rmse, c * base.rmse));
        prop_assert!(close(scaled.mape.unwrap(), base.mape.unwrap()));
    }

    #[test]
    fn peak_and_off_peak_recombine(
        rows in prop::collection::vec(
            (0u32..24, prop::collection::vec((0u32..2000, 0u32..2000), 12)),
            1..20,
        ),
    ) {
        let pairs: Vec<EvalPair> = rows
            .into_iter()
            .map(|(h, cells)| {
                let (y, y_hat) = cells.into_iter().unzip();
                pair(h, y, y_hat)
            })
            .collect();
        let all = compute_metrics(&pairs, |_, _| true).unwrap();
        let peak = compute_metrics(&pairs, |p, s| is_peak_hour(p.step_hours[s]));
        let off = compute_metrics(&pairs, |p, s| !is_peak_hour(p.step_hours[s]));
        let (mut sum, mut n) = (0.0, 0usize);
        for m in [peak, off].into_iter().flatten() {
            sum += m.mae * m.count as f64;
            n += m.count;
        }
        prop_assert_eq!(n, all.count);
        prop_assert!((sum / n as f64 - all.mae).abs() <= 1e-9);
    }

    #[test]
    fn baselines_emit_full_non_negative_vectors(history in prop::collection::vec(0u32..3000, 12)) {
        let mut task = common_task();
        task.history = history;
        prop_assert_eq!(baseline_persistence(&task).len(), 12);
        let train = vec![traffic_llm::model::LabeledTask { task: task.clone(), target: vec![7; 12] }];
        let v = baseline_historical_average(&train, &task).unwrap();
        prop_assert_eq!(v.len(), 12);
    }
}

fn common_task() -> traffic_llm::model::PredictionTask {
    let text =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/table4_task.json")).unwrap();
    serde_json::from_str::<traffic_llm::model::LabeledTask>(&text)
        .unwrap()
        .task
}
