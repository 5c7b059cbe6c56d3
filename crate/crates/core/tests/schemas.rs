mod common;

use common::synthetic;
use traffic_llm::evaluate::{
    emit_report, pair_results, per_horizon_report, Dimension, ReportFormat, METRIC_REPORT_SCHEMA,
};
use traffic_llm::inference::{mock_forecast, parse_prediction};
use traffic_llm::ingest::{build_dataset, DatasetConfig, DatasetInputs};
use traffic_llm::model::{PredictionResult, PromptOptions};
use traffic_llm::prompt::{export_sft, SftRecord, SFT_RECORD_SCHEMA};

fn built() -> traffic_llm::ingest::BuiltDataset {
    let inputs = DatasetInputs {
        flow_dir: synthetic("flows_noisy"),
        sensors_file: synthetic("sensors.csv"),
        poi_file: Some(synthetic("poi.csv")),
        weather_file: synthetic("weather.csv"),
        bucket_table: None,
        holidays: None,
    };
    build_dataset(&inputs, &DatasetConfig::default()).unwrap()
}

fn validator(schema: &str) -> jsonschema::Validator {
    jsonschema::validator_for(&serde_json::from_str(schema).unwrap()).unwrap()
}

#[test]
fn sft_lines_validate_and_reparse() {
    let data = built();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sft.jsonl");
    let n = export_sft(&data.split, &PromptOptions::default(), &path).unwrap();
    assert_eq!(n, data.split.train.len());

    let schema = validator(SFT_RECORD_SCHEMA);
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), n);
    for (line, labeled) in lines.iter().zip(&data.split.train) {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(schema.is_valid(&value), "{line}");
        let record: SftRecord = serde_json::from_value(value).unwrap();
        assert_eq!(parse_prediction(&record.assistant, 12).unwrap().values, labeled.target);
    }
}

#[test]
fn schema_rejects_extra_or_missing_fields() {
    let schema = validator(SFT_RECORD_SCHEMA);
    assert!(!schema.is_valid(&serde_json::json!({"system": "s", "user": "u"})));
    assert!(!schema.is_valid(&serde_json::json!({"system": "s", "user": "u", "assistant": "a", "x": 1})));
    assert!(!schema.is_valid(&serde_json::json!({"system": "s", "user": "u", "assistant": 3})));
}

#[test]
fn metric_report_json_validates() {
    let data = built();
    let results: Vec<PredictionResult> = data
        .split
        .test
        .iter()
        .map(|t| PredictionResult {
            task_id: t.task.id.clone(),
            values: mock_forecast(&t.task.history, 12),
            explanation: None,
            raw: String::new(),
            attempts: 1,
            warnings: vec![],
        })
        .collect();
    let (pairs, missing) = pair_results(&data.split.test, &results).unwrap();
    assert!(missing.is_empty());
    let mut report = per_horizon_report(&pairs).unwrap();
    for d in Dimension::ALL {
        report.add_breakdown(&pairs, d).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    emit_report(&report, &path, ReportFormat::Json).unwrap();
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let schema = validator(METRIC_REPORT_SCHEMA);
    let errors: Vec<String> = schema.iter_errors(&value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    assert!(!schema.is_valid(&serde_json::json!({"schema_version": "0.1"})));
}
