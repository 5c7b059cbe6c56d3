mod common;

use common::{read_golden, table4_task};
use proptest::prelude::*;
use traffic_llm::model::{AblationSetting, PromptOptions};
use traffic_llm::prompt::{render_system_prompt, render_user_prompt};

type FlagCase = (fn(&mut PromptOptions), &'static str);

fn all_lines(options: PromptOptions) -> Vec<String> {
    let mut task = table4_task().task;
    task.options = options;
    let system = render_system_prompt(&options);
    let user = render_user_prompt(&task).unwrap();
    system.lines().chain(user.lines()).map(str::to_string).collect()
}

fn is_subsequence(small: &[String], big: &[String]) -> bool {
    let mut it = big.iter();
    small.iter().all(|line| it.any(|b| b == line))
}

#[test]
fn full_system_prompt_matches_golden() {
    assert_eq!(
        render_system_prompt(&PromptOptions::default()),
        read_golden("system_full.txt")
    );
}

#[test]
fn table4_user_prompt_matches_golden() {
    let user = render_user_prompt(&table4_task().task).unwrap();
    assert_eq!(user, read_golden("user_table4.txt"));
    assert!(user.contains("19, 44, 98, 150, 156, 178, 208, 246, 248, 257, 263 and 269"));
    assert!(user.contains("from 4 PM to 3 AM"));
}

#[test]
fn each_flag_removes_its_line() {
    let cases: [FlagCase; 5] = [
        (|o| o.include_date = false, "- Current time:"),
        (|o| o.include_weather = false, "- Today's weather:"),
        (|o| o.include_pois = false, "- Region information:"),
        (
            |o| o.include_domain_knowledge = false,
            "Context knowledge you could consider:",
        ),
        (
            |o| o.include_cot = false,
            "Think carefully about the following questions",
        ),
    ];
    let full = all_lines(PromptOptions::default());
    for (switch_off, marker) in cases {
        assert!(full.iter().any(|l| l.starts_with(marker)), "{marker}");
        let mut opts = PromptOptions::default();
        switch_off(&mut opts);
        let lines = all_lines(opts);
        assert!(!lines.iter().any(|l| l.starts_with(marker)), "{marker} still present");
        assert!(lines.len() < full.len());
        assert!(is_subsequence(&lines, &full), "{marker}: not a subsequence");
    }
}

#[test]
fn ablation_settings_render_distinct_prompts() {
    let rendered: std::collections::BTreeSet<Vec<String>> =
        AblationSetting::ALL.iter().map(|s| all_lines(s.options())).collect();
    assert_eq!(rendered.len(), AblationSetting::ALL.len());
}

proptest! {
    #[test]
    fn disabling_flags_only_removes_lines(
        date in any::<bool>(), weather in any::<bool>(), pois in any::<bool>(),
        knowledge in any::<bool>(), cot in any::<bool>(),
    ) {
        let opts = PromptOptions {
            include_date: date,
            include_weather: weather,
            include_pois: pois,
            include_domain_knowledge: knowledge,
            include_cot: cot,
            ..PromptOptions::default()
        };
        let lines = all_lines(opts);
        prop_assert!(is_subsequence(&lines, &all_lines(PromptOptions::default())));
        prop_assert_eq!(lines, all_lines(opts));
    }
}
