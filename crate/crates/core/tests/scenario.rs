mod common;

use common::table4_task;
use proptest::prelude::*;
use traffic_llm::model::{LocalHour, Scenario};
use traffic_llm::prompt::{build_bundle, inject_scenario, render_user_prompt};

fn check_single_insert(before: &str, after: &str, sentence: &str) {
    let old: Vec<&str> = before.lines().collect();
    let new: Vec<&str> = after.lines().collect();
    assert_eq!(new.len(), old.len() + 1);
    let at = new.iter().position(|l| l.contains(sentence)).expect("sentence present");
    let mut rest = new.clone();
    rest.remove(at);
    assert_eq!(rest, old);
    assert_eq!(after.len(), before.len() + new[at].len() + 1);
}

#[test]
fn accident_sentence_is_inserted_verbatim() {
    let user = render_user_prompt(&table4_task().task).unwrap();
    let scenario = Scenario::accident(LocalHour::from_ymdh(2018, 2, 19, 22).unwrap());
    let out = inject_scenario(&user, &scenario).unwrap();
    check_single_insert(
        &user,
        &out,
        "Important! A serious traffic accident occurred on this road at 10 PM!",
    );
}

#[test]
fn sandstorm_sentence_is_inserted_verbatim() {
    let user = render_user_prompt(&table4_task().task).unwrap();
    let scenario = Scenario::sandstorm(LocalHour::from_ymdh(2018, 2, 19, 9).unwrap());
    let out = inject_scenario(&user, &scenario).unwrap();
    check_single_insert(&user, &out, "Important! A severe sandstorm broke out at 9 AM!");
}

#[test]
fn task_scenario_reaches_the_rendered_prompt() {
    let mut task = table4_task().task;
    task.scenario = Some(Scenario::accident(LocalHour::from_ymdh(2018, 2, 19, 22).unwrap()));
    let bundle = build_bundle(&task, &[]).unwrap();
    assert_eq!(bundle.user.matches("Important!").count(), 1);
}

proptest! {
    #[test]
    fn any_description_adds_exactly_one_line(description in "[A-Za-z][A-Za-z0-9 ,]{0,60}") {
        let user = render_user_prompt(&table4_task().task).unwrap();
        let scenario = Scenario::new(description.clone(), LocalHour::from_ymdh(2018, 2, 19, 20).unwrap()).unwrap();
        let out = inject_scenario(&user, &scenario).unwrap();
        let old: Vec<&str> = user.lines().collect();
        let mut new: Vec<&str> = out.lines().collect();
        prop_assert_eq!(new.len(), old.len() + 1);
        let at = new.iter().position(|l| l.starts_with("Important! ")).unwrap();
        new.remove(at);
        prop_assert_eq!(new, old);
    }
}
