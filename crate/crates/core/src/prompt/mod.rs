//! Prompt compilation: system prompt, multi-modal user prompt, what-if
//! scenario injection, answer formatting and SFT export.

mod templates;

use std::path::Path;

use chrono::{Datelike, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::parse_prediction;
use crate::ingest::DatasetSplit;
use crate::io::IoError;
use crate::model::{LocalHour, PredictionTask, PromptOptions, RegionAttributes, Scenario};

pub use templates::{sha256_hex, verify_manifest, ExplanationExample, TemplateSet, MANIFEST_FILE};

/// Prefix of the closing instruction line; scenario lines go right above it.
pub const INSTRUCTION_PREFIX: &str = "According to the above information and careful reasoning";

/// Key phrase that introduces the answer list.
pub const ANSWER_KEY_PREFIX: &str = "Traffic volume data in the next";

/// JSON schema of one SFT JSONL line.
pub const SFT_RECORD_SCHEMA: &str = include_str!("../../schemas/sft_record.schema.json");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("history has {actual} values but h_in is {expected}")]
    HistoryLength { expected: usize, actual: usize },
    #[error("target has {actual} values but horizon is {expected}")]
    TargetLength { expected: usize, actual: usize },
    #[error("scenario description is empty")]
    EmptyScenario,
    #[error("user prompt has no instruction line")]
    NoInstructionLine,
    #[error("explanation mode needs {requested} few-shot examples, {supplied} supplied")]
    MissingExplanations { requested: usize, supplied: usize },
    #[error("template error: {0}")]
    Template(String),
    #[error("SFT record for task {task_id} does not parse back: {reason}")]
    SftRoundTrip { task_id: String, reason: String },
    #[error("nothing to export: training split is empty")]
    EmptySplit,
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShot {
    pub user: String,
    pub assistant: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// Ordered message set ready for a chat backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub few_shots: Vec<FewShot>,
    pub user: String,
}

impl PromptBundle {
    /// `[system] + few-shot (user, assistant) pairs + [user]`.
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut out = Vec::with_capacity(2 + 2 * self.few_shots.len());
        out.push(ChatMessage {
            role: Role::System,
            content: self.system.clone(),
        });
        for shot in &self.few_shots {
            out.push(ChatMessage {
                role: Role::User,
                content: shot.user.clone(),
            });
            out.push(ChatMessage {
                role: Role::Assistant,
                content: shot.assistant.clone(),
            });
        }
        out.push(ChatMessage {
            role: Role::User,
            content: self.user.clone(),
        });
        out
    }
}

/// One supervised fine-tuning example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub system: String,
    pub user: String,
    pub assistant: String,
}

/// `3 PM`, `12 AM` for midnight, `12 PM` for noon.
pub fn clock_label(hour: u32) -> String {
    let suffix = if hour < 12 { "AM" } else { "PM" };
    let h12 = match hour % 12 {
        0 => 12,
        h => h,
    };
    format!("{h12} {suffix}")
}

fn weekday_name(day: Weekday) -> &'static str {
    match day {
        Weekday::Mon => "Monday",
        Weekday::Tue => "Tuesday",
        Weekday::Wed => "Wednesday",
        Weekday::Thu => "Thursday",
        Weekday::Fri => "Friday",
        Weekday::Sat => "Saturday",
        Weekday::Sun => "Sunday",
    }
}

/// `19, 44 and 98`
fn join_with_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [only] => only.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// `transportation areas, commercial areas, and educational areas`
fn area_list(region: &RegionAttributes) -> String {
    let names: Vec<String> = region.labels().map(|l| format!("{} areas", l.as_str())).collect();
    match names.as_slice() {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

fn slot_names(horizon: usize) -> String {
    (1..=horizon).map(|i| format!("V{i}")).collect::<Vec<_>>().join(", ")
}

/// Renders prompts from a [`TemplateSet`].
#[derive(Debug, Clone, Copy)]
pub struct PromptCompiler<'a> {
    templates: &'a TemplateSet,
}

impl Default for PromptCompiler<'static> {
    fn default() -> Self {
        Self {
            templates: TemplateSet::bundled(),
        }
    }
}

impl<'a> PromptCompiler<'a> {
    pub fn new(templates: &'a TemplateSet) -> Self {
        Self { templates }
    }

    pub fn templates(&self) -> &'a TemplateSet {
        self.templates
    }

    pub fn system_prompt(&self, options: &PromptOptions) -> String {
        let t = self.templates;
        let mut blocks = vec![t.system_role.as_str()];
        if options.include_domain_knowledge {
            blocks.push(&t.system_knowledge);
        }
        if options.include_cot {
            blocks.push(&t.system_cot);
        }
        blocks.join("\n\n")
    }

    /// User prompt without the explanation request.
    pub fn user_prompt(&self, task: &PredictionTask) -> Result<String, PromptError> {
        self.user_prompt_with(task, false)
    }

    fn user_prompt_with(&self, task: &PredictionTask, explain: bool) -> Result<String, PromptError> {
        if task.history.len() != task.h_in {
            return Err(PromptError::HistoryLength {
                expected: task.h_in,
                actual: task.history.len(),
            });
        }
        let t = self.templates;
        let opts = &task.options;
        let meta = &task.meta;
        let mut lines = vec![t.user_header.clone()];

        let district = meta.district.to_string();
        let lane = meta.lane.to_string();
        lines.push(format!(
            "- {}",
            templates::fill(
                &t.user_location,
                &[
                    ("district", &district),
                    ("county", &meta.county),
                    ("city", &meta.city),
                    ("freeway", &meta.freeway),
                    ("lane", &lane),
                    ("direction", meta.direction.as_str()),
                ],
            )
        ));

        if opts.include_weather {
            let w = &task.weather;
            let temperature = format!("{:.1}", w.temperature_c);
            let visibility = format!("{:.1}", w.visibility_miles);
            lines.push(format!(
                "- {}",
                templates::fill(
                    &t.user_weather,
                    &[
                        ("condition", w.condition.as_str()),
                        ("temperature", &temperature),
                        ("visibility", &visibility),
                    ],
                )
            ));
        }

        if opts.include_pois && !task.region.is_empty() {
            let areas = area_list(&task.region);
            lines.push(format!("- {}", templates::fill(&t.user_region, &[("areas", &areas)])));
        }

        if opts.include_date {
            let anchor = task.anchor();
            let date = anchor.date();
            let clock = clock_label(anchor.hour());
            let date_text = format!("{}-{}-{}", date.year(), date.month(), date.day());
            let holiday = task
                .calendar
                .holiday
                .as_deref()
                .map(|h| format!(", {h}"))
                .unwrap_or_default();
            lines.push(format!(
                "- {}",
                templates::fill(
                    &t.user_time,
                    &[
                        ("clock", &clock),
                        ("date", &date_text),
                        ("weekday", weekday_name(task.calendar.weekday)),
                        ("holiday", &holiday),
                    ],
                )
            ));
        }

        let values: Vec<String> = task.history.iter().map(u32::to_string).collect();
        let h_in = task.h_in.to_string();
        let values = join_with_and(&values);
        lines.push(format!(
            "- {}",
            templates::fill(&t.user_history, &[("h_in", &h_in), ("values", &values)])
        ));

        lines.push(String::new());
        lines.push(self.instruction_line(task.anchor(), task.horizon, explain));
        Ok(lines.join("\n"))
    }

    fn instruction_line(&self, anchor: LocalHour, horizon: usize, explain: bool) -> String {
        let template = if explain {
            &self.templates.user_instruction_explain
        } else {
            &self.templates.user_instruction
        };
        let h = horizon.to_string();
        let start = clock_label(anchor.plus_hours(1).hour());
        let end = clock_label(anchor.plus_hours(horizon as i64).hour());
        let slots = slot_names(horizon);
        templates::fill(
            template,
            &[("horizon", &h), ("start", &start), ("end", &end), ("slots", &slots)],
        )
    }

    /// Assembles the full message set for one task. In explanation mode the
    /// first `options.few_shot_explanations` of `examples` are included.
    pub fn bundle(&self, task: &PredictionTask, examples: &[ExplanationExample]) -> Result<PromptBundle, PromptError> {
        let opts = &task.options;
        let system = self.system_prompt(opts);
        let mut user = self.user_prompt_with(task, opts.explanation_mode)?;
        if let Some(scenario) = &task.scenario {
            user = inject_scenario(&user, scenario)?;
        }
        let few_shots = if opts.explanation_mode {
            let requested = opts.few_shot_explanations;
            if requested == 0 || examples.len() < requested {
                return Err(PromptError::MissingExplanations {
                    requested,
                    supplied: examples.len(),
                });
            }
            examples[..requested]
                .iter()
                .map(|e| FewShot {
                    user: e.user.clone(),
                    assistant: e.assistant.clone(),
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(PromptBundle {
            system,
            few_shots,
            user,
        })
    }
}

pub fn render_system_prompt(options: &PromptOptions) -> String {
    PromptCompiler::default().system_prompt(options)
}

pub fn render_user_prompt(task: &PredictionTask) -> Result<String, PromptError> {
    PromptCompiler::default().user_prompt(task)
}

pub fn build_bundle(task: &PredictionTask, examples: &[ExplanationExample]) -> Result<PromptBundle, PromptError> {
    PromptCompiler::default().bundle(task, examples)
}

/// Inserts `Important! {description}` directly above the instruction line.
pub fn inject_scenario(user_text: &str, scenario: &Scenario) -> Result<String, PromptError> {
    let description = scenario.description.trim();
    if description.is_empty() {
        return Err(PromptError::EmptyScenario);
    }
    let terminal = if description.ends_with(['!', '.', '?']) {
        ""
    } else {
        "!"
    };
    let alert = format!("Important! {description}{terminal}");

    let mut out = String::with_capacity(user_text.len() + alert.len() + 1);
    let mut inserted = false;
    for line in user_text.split_inclusive('\n') {
        if !inserted && line.starts_with(INSTRUCTION_PREFIX) {
            out.push_str(&alert);
            out.push('\n');
            inserted = true;
        }
        out.push_str(line);
    }
    if inserted {
        Ok(out)
    } else {
        Err(PromptError::NoInstructionLine)
    }
}

/// `{Traffic volume data in the next 12 hours: [v1, ..., v12]}`
pub fn render_target(values: &[u32], horizon: usize) -> Result<String, PromptError> {
    if values.len() != horizon {
        return Err(PromptError::TargetLength {
            expected: horizon,
            actual: values.len(),
        });
    }
    let list = values.iter().map(u32::to_string).collect::<Vec<_>>().join(", ");
    Ok(format!("{{{ANSWER_KEY_PREFIX} {horizon} hours: [{list}]}}"))
}

/// Writes one SFT record per training task as JSON lines and returns the
/// count. `options` replaces each task's own prompt options; the explanation
/// request is only rendered when `options.explanation_mode` is set.
pub fn export_sft(split: &DatasetSplit, options: &PromptOptions, path: &Path) -> Result<usize, PromptError> {
    export_sft_with(&PromptCompiler::default(), split, options, path)
}

pub fn export_sft_with(
    compiler: &PromptCompiler<'_>,
    split: &DatasetSplit,
    options: &PromptOptions,
    path: &Path,
) -> Result<usize, PromptError> {
    if split.train.is_empty() {
        return Err(PromptError::EmptySplit);
    }
    let system = compiler.system_prompt(options);
    let mut records = Vec::with_capacity(split.train.len());
    for labeled in &split.train {
        let mut task = labeled.task.clone();
        task.options = *options;
        let user = compiler.user_prompt_with(&task, options.explanation_mode)?;
        let assistant = render_target(&labeled.target, task.horizon)?;
        match parse_prediction(&assistant, task.horizon) {
            Ok(parsed) if parsed.values == labeled.target => {}
            Ok(parsed) => {
                return Err(PromptError::SftRoundTrip {
                    task_id: task.id.clone(),
                    reason: format!("parsed {:?}", parsed.values),
                })
            }
            Err(e) => {
                return Err(PromptError::SftRoundTrip {
                    task_id: task.id.clone(),
                    reason: e.to_string(),
                })
            }
        }
        records.push(SftRecord {
            system: system.clone(),
            user,
            assistant,
        });
    }
    crate::io::write_jsonl(path, &records)?;
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::yolo_task;
    use crate::model::{AblationSetting, LocalHour, Scenario};

    #[test]
    fn clock_labels_wrap_at_noon_and_midnight() {
        assert_eq!(clock_label(0), "12 AM");
        assert_eq!(clock_label(3), "3 AM");
        assert_eq!(clock_label(12), "12 PM");
        assert_eq!(clock_label(15), "3 PM");
        assert_eq!(clock_label(23), "11 PM");
    }

    #[test]
    fn no_cot_means_no_think_carefully() {
        let opts = PromptOptions {
            include_cot: false,
            ..PromptOptions::default()
        };
        assert!(!render_system_prompt(&opts).contains("Think carefully"));
        assert!(render_system_prompt(&PromptOptions::default()).contains("Think carefully"));
    }

    #[test]
    fn setting_a_system_prompt_is_role_only() {
        let sys = render_system_prompt(&AblationSetting::A.options());
        assert_eq!(sys, TemplateSet::bundled().system_role);
        assert!(!sys.contains('\n'));
    }

    #[test]
    fn weather_flag_controls_weather_line() {
        let mut task = yolo_task();
        task.options.include_weather = false;
        let text = render_user_prompt(&task).unwrap();
        assert!(!text
            .lines()
            .any(|l| l.trim_start_matches("- ").starts_with("Today's weather")));
    }

    #[test]
    fn short_history_renders_its_own_length() {
        let mut task = yolo_task();
        task.h_in = 4;
        task.history = vec![248, 257, 263, 269];
        let text = render_user_prompt(&task).unwrap();
        assert!(text.contains("Traffic volume data in the past 4 hours were 248, 257, 263 and 269, respectively."));
    }

    #[test]
    fn history_mismatch_is_an_error() {
        let mut task = yolo_task();
        task.history.truncate(5);
        assert!(matches!(
            render_user_prompt(&task),
            Err(PromptError::HistoryLength {
                expected: 12,
                actual: 5
            })
        ));
    }

    #[test]
    fn no_holiday_ends_the_time_line_at_the_weekday() {
        let mut task = yolo_task();
        task.calendar.holiday = None;
        let text = render_user_prompt(&task).unwrap();
        assert!(text.contains("- Current time: 3 PM, 2018-2-19, Monday.\n"));
    }

    #[test]
    fn region_phrasing_by_label_count() {
        let mut task = yolo_task();
        task.region.entries.truncate(2);
        let text = render_user_prompt(&task).unwrap();
        assert!(text.contains("including transportation areas and commercial areas within a range of 5 km."));
        task.region.entries.truncate(1);
        let text = render_user_prompt(&task).unwrap();
        assert!(text.contains("including transportation areas within a range of 5 km."));
        task.region.entries.clear();
        let text = render_user_prompt(&task).unwrap();
        assert!(!text.contains("Region information"));
    }

    #[test]
    fn scenario_injection_adds_one_line_above_instruction() {
        let user = render_user_prompt(&yolo_task()).unwrap();
        let at = LocalHour::from_ymdh(2018, 2, 19, 22).unwrap();
        let out = inject_scenario(&user, &Scenario::accident(at)).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        let idx = lines.iter().position(|l| l.starts_with(INSTRUCTION_PREFIX)).unwrap();
        assert_eq!(
            lines[idx - 1],
            "Important! A serious traffic accident occurred on this road at 10 PM!"
        );
        assert_eq!(out.lines().count(), user.lines().count() + 1);
    }

    #[test]
    fn scenario_with_own_punctuation_is_not_doubled() {
        let user = render_user_prompt(&yolo_task()).unwrap();
        let s = Scenario {
            description: "Lane 2 is closed for repairs.".into(),
            event_hour: LocalHour::from_ymdh(2018, 2, 19, 16).unwrap(),
        };
        assert!(inject_scenario(&user, &s)
            .unwrap()
            .contains("\nImportant! Lane 2 is closed for repairs.\n"));
    }

    #[test]
    fn empty_scenario_and_missing_instruction_are_errors() {
        let at = LocalHour::from_ymdh(2018, 2, 19, 16).unwrap();
        let empty = Scenario {
            description: "   ".into(),
            event_hour: at,
        };
        let user = render_user_prompt(&yolo_task()).unwrap();
        assert!(matches!(
            inject_scenario(&user, &empty),
            Err(PromptError::EmptyScenario)
        ));
        assert!(matches!(
            inject_scenario("no instruction here", &Scenario::sandstorm(at)),
            Err(PromptError::NoInstructionLine)
        ));
    }

    #[test]
    fn render_target_formats_and_checks_length() {
        let zeros = render_target(&[0; 12], 12).unwrap();
        assert_eq!(
            zeros,
            "{Traffic volume data in the next 12 hours: [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]}"
        );
        assert!(matches!(
            render_target(&[1, 2, 3], 12),
            Err(PromptError::TargetLength {
                expected: 12,
                actual: 3
            })
        ));
    }

    #[test]
    fn bundle_without_explanations_has_no_few_shots() {
        let b = build_bundle(&yolo_task(), &TemplateSet::bundled().explanations).unwrap();
        assert!(b.few_shots.is_empty());
        assert_eq!(b.messages().len(), 2);
    }

    #[test]
    fn explanation_bundle_carries_requested_examples() {
        let mut task = yolo_task();
        task.options.explanation_mode = true;
        task.options.few_shot_explanations = 2;
        let examples = &TemplateSet::bundled().explanations;
        let b = build_bundle(&task, examples).unwrap();
        assert_eq!(b.few_shots.len(), 2);
        assert!(b.user.ends_with("Please think step by step."));
        assert!(b.user.contains("(from 4 PM to 3 AM) and explain it."));
        let roles: Vec<Role> = b.messages().iter().map(|m| m.role).collect();
        assert_eq!(
            roles,
            [
                Role::System,
                Role::User,
                Role::Assistant,
                Role::User,
                Role::Assistant,
                Role::User
            ]
        );
        assert!(matches!(
            build_bundle(&task, &[]),
            Err(PromptError::MissingExplanations {
                requested: 2,
                supplied: 0
            })
        ));
        task.options.few_shot_explanations = 0;
        assert!(build_bundle(&task, examples).is_err());
    }

    #[test]
    fn bundled_explanation_examples_are_parseable_answers() {
        for ex in &TemplateSet::bundled().explanations {
            let parsed = parse_prediction(&ex.assistant, 12).unwrap();
            assert_eq!(parsed.values.len(), 12);
            assert!(parsed.explanation.is_some());
            assert!(ex.user.ends_with("Please think step by step."));
        }
    }
}
