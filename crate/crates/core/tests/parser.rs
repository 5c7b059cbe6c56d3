mod common;

use common::fixture;
use proptest::prelude::*;
use traffic_llm::inference::{mock_complete, parse_prediction, BackendParams, ParseError};
use traffic_llm::prompt::{build_bundle, render_target};

pub const TABLE5_VALUES: [u32; 12] = [214, 183, 158, 157, 119, 69, 47, 36, 31, 26, 27, 33];

#[test]
fn table5_response_yields_vector_and_explanation() {
    let raw = std::fs::read_to_string(fixture("fixtures/table5_response.txt")).unwrap();
    let parsed = parse_prediction(&raw, 12).unwrap();
    assert_eq!(parsed.values, TABLE5_VALUES);
    let explanation = parsed.explanation.unwrap();
    assert!(
        explanation.starts_with("I will provide a step-by-step explanation"),
        "{explanation}"
    );
    assert!(explanation.contains("5. Rain Impact"));
    assert!(explanation.contains("Late-night hours (10 PM to 5 AM)"));
}

#[test]
fn refusals_are_rejected() {
    for text in [
        "I'm sorry, but I can't predict future traffic volumes.",
        "As an AI language model I do not have access to real-time data.",
        "The next 12 hours will be busy.",
    ] {
        assert!(matches!(parse_prediction(text, 12), Err(ParseError::NoList)), "{text}");
    }
}

#[test]
fn mock_is_referentially_transparent() {
    let task = common::table4_task().task;
    let bundle = build_bundle(&task, &[]).unwrap();
    let a = mock_complete(&bundle, &BackendParams::default()).unwrap();
    let b = mock_complete(&bundle, &BackendParams::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(parse_prediction(&a, 12).unwrap().values.len(), 12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn parse_inverts_render(values in prop::collection::vec(any::<u32>(), 12)) {
        let parsed = parse_prediction(&render_target(&values, 12).unwrap(), 12).unwrap();
        prop_assert_eq!(parsed.values, values);
        prop_assert_eq!(parsed.explanation, None);
        prop_assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn parsed_output_always_has_horizon_length(
        values in prop::collection::vec(0u32..100_000, 1..30),
        horizon in 1usize..16,
        prefix in "[a-zA-Z ,.]{0,40}",
    ) {
        let list = values.iter().map(u32::to_string).collect::<Vec<_>>().join(", ");
        let raw = format!("{prefix} [{list}]");
        match parse_prediction(&raw, horizon) {
            Ok(p) => {
                prop_assert_eq!(p.values.len(), horizon);
                prop_assert!(values.len() >= horizon);
            }
            Err(_) => prop_assert!(values.len() < horizon),
        }
    }
}
