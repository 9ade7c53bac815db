//! Property tests for the persistence and rendering round-trips.

use proptest::prelude::*;

use scot_core::corpus::{parse_dataset, dataset_to_bytes, Dataset, Label, Question, Record};
use scot_core::evolve::StyleId;
use scot_core::scot::{parse_scot, render_scot, CategoryId, CategoryVerdict, SCoTAnswer};

/// Single-line text with letters, digits, punctuation, and some non-ASCII.
/// Trailing whitespace is trimmed: line-final fields reject it (it would not
/// survive the whitespace-tolerant parse).
fn line() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[A-Za-z0-9αβγδÅü🎲][A-Za-z0-9αβγδÅü🎲 ,.!?'()-]{0,38}")
        .expect("valid regex")
        .prop_map(|s| s.trim_end().to_string())
}

/// Multi-line body; no line can start with '#" (excluded from the class).
fn body() -> impl Strategy<Value = String> {
    (line(), proptest::collection::vec(line(), 0..4))
        .prop_map(|(first, rest)| {
            let mut out = first;
            for part in rest {
                out.push('\n');
                out.push_str(&part);
            }
            out
        })
}

fn arb_answer() -> impl Strategy<Value = SCoTAnswer> {
    (
        line(),
        proptest::collection::vec(proptest::option::of(line()), 8),
        body(),
    )
        .prop_map(|(summary, flags, response)| {
            let verdicts: Vec<CategoryVerdict> = CategoryId::ALL
                .iter()
                .zip(flags)
                .map(|(&category, flag)| match flag {
                    Some(explanation) => CategoryVerdict::yes(category, explanation),
                    None => CategoryVerdict::no(category),
                })
                .collect();
            SCoTAnswer::new(summary, verdicts, response).expect("generated answer is valid")
        })
}

fn arb_question(idx: usize) -> impl Strategy<Value = Question> {
    (
        body(),
        proptest::option::of(line()),
        proptest::bool::ANY,
        proptest::option::of((0usize..6, line())),
    )
        .prop_map(move |(text, topic, harmful, lineage)| {
            let mut q = Question::new(
                format!("q{idx}"),
                text,
                if harmful { Label::Harmful } else { Label::Benign },
                "prop",
            );
            q.topic = topic;
            if let Some((style_idx, parent)) = lineage {
                q.style = Some(StyleId::ALL[style_idx]);
                q.parent_id = Some(parent);
            }
            q
        })
}

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    proptest::collection::vec(proptest::option::of(body()), 0..12).prop_flat_map(|answers| {
        let questions: Vec<_> = answers
            .iter()
            .enumerate()
            .map(|(idx, _)| arb_question(idx))
            .collect();
        (questions, Just(answers)).prop_map(|(questions, answers)| {
            let records = questions
                .into_iter()
                .zip(answers)
                .map(|(question, answer)| Record { question, answer })
                .collect();
            Dataset::new("prop", records).expect("generated dataset is valid")
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn scot_render_parse_round_trip(answer in arb_answer()) {
        let text = render_scot(&answer);
        let parsed = parse_scot(&text).expect("canonical text parses");
        prop_assert_eq!(&parsed, &answer);
        prop_assert_eq!(render_scot(&parsed), text);
    }

    #[test]
    fn rendered_text_has_fixed_shape(answer in arb_answer()) {
        let text = render_scot(&answer);
        let headers = text.lines().filter(|l| l.starts_with("#### ")).count();
        prop_assert_eq!(headers, 2);
        let verification = text.split("#### Response").next().unwrap();
        let bullets = verification.lines().filter(|l| l.starts_with("* ")).count();
        prop_assert_eq!(bullets, 8);
        // The unsafe category list always equals the flagged set.
        let flagged = answer.flagged_categories();
        match answer.conclusion() {
            scot_core::scot::Conclusion::Safe => prop_assert!(flagged.is_empty()),
            scot_core::scot::Conclusion::Unsafe(list) => prop_assert_eq!(list, flagged),
        }
    }

    #[test]
    fn dataset_save_load_identity(dataset in arb_dataset()) {
        let bytes = dataset_to_bytes(&dataset).expect("serializes");
        let text = String::from_utf8(bytes).expect("utf-8");
        let loaded = parse_dataset(&text, "prop.jsonl").expect("parses");
        prop_assert_eq!(loaded, dataset);
    }

    #[test]
    fn split_is_a_partition(dataset in arb_dataset(), seed in 0u64..1000) {
        prop_assume!(dataset.len() >= 2);
        let parts =
            scot_core::corpus::split_dataset(&dataset, &[0.5, 0.3, 0.2], seed).expect("splits");
        let mut seen = std::collections::BTreeSet::new();
        for part in &parts {
            for record in part.records() {
                prop_assert!(seen.insert(record.question.id.clone()), "id in two splits");
            }
        }
        prop_assert_eq!(seen.len(), dataset.len());
    }
}
