use abyssal_core::fixtures;
use abyssal_core::knowledge::{KnowledgePatch, PatchOp};
use abyssal_core::scenario::Intervention;
use abyssal_orchestrator::engine::{Engine, EngineOptions, Input};
use abyssal_orchestrator::events::LogError;
use abyssal_orchestrator::replay::{replay_log, ReplayError};
use std::path::PathBuf;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// The scripted two-vehicle run, cut after the report reaches the dock.
fn scripted_log() -> String {
    let mut e = Engine::new(fixtures::two_auv(), EngineOptions::default()).unwrap();
    e.run_until(300.0).unwrap();
    e.finish();
    e.log().to_jsonl()
}

/// A run driven by operator inputs of every kind.
fn operator_log() -> String {
    let mut e = Engine::new(fixtures::two_auv(), EngineOptions::default()).unwrap();
    e.run_until(30.0).unwrap();
    e.apply_input(Input::Intervention(Intervention::ClassifyObject { object: "sphere_1".into(), class: "torus".into() }));
    e.run_until(32.0).unwrap();
    e.apply_input(Input::Mission {
        robot: "beta".into(),
        text: "mission look normal\nbeta observe object sphere_1\nbeta dock\n".into(),
    });
    e.run_until(33.5).unwrap();
    let version = e.store().version() + 1;
    let patch = KnowledgePatch { version, ops: vec![PatchOp::RemoveClass { name: "cone".into() }] };
    e.apply_input(Input::Intervention(Intervention::PatchKnowledge { patch }));
    e.apply_input(Input::Seed(12));
    e.run_until(40.0).unwrap();
    e.apply_input(Input::Mission { robot: "gamma".into(), text: "mission x normal\ngamma dock\n".into() });
    e.apply_input(Input::Intervention(Intervention::AbortMission { mission: "look".into() }));
    e.run_until(60.0).unwrap();
    e.finish();
    e.log().to_jsonl()
}

fn check_golden(name: &str, fresh: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("ABYSSAL_BLESS").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&path, fresh).unwrap();
    }
    let stored = std::fs::read_to_string(&path).expect("golden log present (set ABYSSAL_BLESS=1 to write)");
    assert!(stored == fresh, "{name} no longer matches a fresh run");
}

#[test]
fn golden_logs_match_fresh_runs() {
    check_golden("two_auv_scripted.jsonl", &scripted_log());
    check_golden("two_auv_operator.jsonl", &operator_log());
}

#[test]
fn golden_logs_replay_clean() {
    for name in ["two_auv_scripted.jsonl", "two_auv_operator.jsonl"] {
        let text = std::fs::read_to_string(golden_dir().join(name)).unwrap();
        let report = replay_log(&text).unwrap();
        assert!(report.is_clean(), "{name}: {:?}", report.divergence);
        assert_eq!(report.records, text.lines().count());
    }
}

#[test]
fn operator_log_covers_every_input_kind() {
    let log = operator_log();
    for kind in ["ClassifyObject", "PatchKnowledge", "SeedChanged", "MissionRejected", "MissionAborted", "OperatorInput"] {
        assert!(log.contains(&format!("\"kind\":\"{kind}\"")), "missing {kind}");
    }
}

/// Changes one byte inside the payload of line `seq`, keeping the JSON valid:
/// the last digit or ASCII letter in the payload is nudged.
fn tamper(text: &str, seq: usize) -> Option<String> {
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let line = &lines[seq];
    let start = line.find("\"payload\":")? + "\"payload\":".len();
    let bytes = line.as_bytes();
    let at = (start..bytes.len()).rev().find(|&i| {
        let b = bytes[i];
        b.is_ascii_digit() || (b.is_ascii_lowercase() && !matches!(b, b'e' | b't' | b'f' | b'n' | b'u' | b'l' | b'r' | b's' | b'a'))
    })?;
    let b = bytes[at];
    let replacement = match b {
        b'9' => b'8',
        b'0'..=b'8' => b + 1,
        b'z' => b'y',
        _ => b + 1,
    };
    let mut changed = bytes.to_vec();
    changed[at] = replacement;
    lines[seq] = String::from_utf8(changed).unwrap();
    Some(lines.join("\n") + "\n")
}

#[test]
fn single_byte_payload_mutation_is_found_at_its_seq() {
    let text = std::fs::read_to_string(golden_dir().join("two_auv_operator.jsonl")).unwrap();
    let n = text.lines().count();
    let mut checked = 0;
    for seq in 0..n {
        let Some(bad) = tamper(&text, seq) else { continue };
        let report = replay_log(&bad).unwrap();
        let d = report.divergence.unwrap_or_else(|| panic!("mutation at seq {seq} went unnoticed"));
        assert_eq!(d.seq, seq as u64, "mutation at {seq} reported at {}: {}", d.seq, d.reason);
        checked += 1;
    }
    assert!(checked > n / 2, "only {checked} of {n} lines were mutated");
}

#[test]
fn truncated_log_is_corrupt() {
    let text = scripted_log();
    let cut = &text[..text.len() - 10];
    match replay_log(cut) {
        Err(ReplayError::CorruptLog(LogError::Corrupt { line, .. })) => assert_eq!(line, text.lines().count() - 1),
        other => panic!("expected CorruptLog, got {other:?}"),
    }
    assert!(matches!(replay_log(""), Err(ReplayError::CorruptLog(_))));
}

#[test]
fn dropping_a_whole_line_is_a_divergence() {
    let text = scripted_log();
    let lines: Vec<&str> = text.lines().collect();
    // Removing a middle line shifts seq numbers and is caught by the parser.
    let mut shorter = lines.clone();
    shorter.remove(5);
    assert!(replay_log(&(shorter.join("\n") + "\n")).is_err());
    // Removing the last record of a step is caught by re-simulation.
    let head = lines[..lines.len() - 2].join("\n") + "\n";
    let report = replay_log(&head).unwrap();
    assert!(report.is_clean() || report.divergence.unwrap().seq as usize == lines.len() - 2);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    const OBJECTS: [&str; 5] = ["sphere_1", "cube_2", "cylinder_3", "cone_4", "torus_5"];
    const CLASSES: [&str; 5] = ["sphere", "cylinder", "cube", "cone", "torus"];
    const MISSIONS: [(&str, &str); 3] = [
        ("beta", "mission p1 normal\nbeta survey region 10 10 10 4\nbeta dock\n"),
        ("beta", "mission p2 human\nbeta observe object cube_2\n"),
        ("alpha", "mission p3 normal\nalpha manipulate class cube\n"),
    ];

    fn input() -> impl Strategy<Value = Input> {
        prop_oneof![
            (0..OBJECTS.len(), 0..CLASSES.len()).prop_map(|(o, c)| Input::Intervention(Intervention::ClassifyObject {
                object: OBJECTS[o].into(),
                class: CLASSES[c].into(),
            })),
            (0..MISSIONS.len()).prop_map(|i| Input::Mission { robot: MISSIONS[i].0.into(), text: MISSIONS[i].1.into() }),
            any::<u64>().prop_map(Input::Seed),
            (1..4usize).prop_map(|i| Input::Intervention(Intervention::AbortMission { mission: format!("p{i}") })),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        /// Any operator schedule, cut at any time, replays without divergence.
        #[test]
        fn operator_schedules_replay_clean(
            schedule in proptest::collection::vec((0.0f64..40.0, input()), 0..6),
            cut in 1.0f64..60.0,
            finish in any::<bool>(),
        ) {
            let mut schedule = schedule;
            schedule.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut e = Engine::new(fixtures::two_auv(), EngineOptions::default()).unwrap();
            for (t, input) in schedule.into_iter().filter(|(t, _)| *t < cut) {
                e.run_until(t).unwrap();
                e.apply_input(input);
            }
            e.run_until(cut).unwrap();
            if finish {
                e.finish();
            }
            let text = e.log().to_jsonl();
            let report = replay_log(&text).unwrap();
            prop_assert!(report.is_clean(), "{:?}", report.divergence);
            prop_assert_eq!(report.records, e.log().len());
        }
    }
}
