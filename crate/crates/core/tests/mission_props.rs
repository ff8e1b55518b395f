use abyssal_core::mission::{parse_mission, Mission, Priority, Region, TargetRef, Task};
use abyssal_core::ActionKind;
use proptest::prelude::*;

fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_.-]{0,8}"
}

fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![(-500i32..500).prop_map(f64::from), -1e3f64..1e3]
}

fn extent() -> impl Strategy<Value = f64> {
    prop_oneof![(1i32..200).prop_map(f64::from), 0.001f64..500.0]
}

fn region() -> impl Strategy<Value = TargetRef> {
    (coord(), coord(), extent(), extent()).prop_map(|(x, y, w, h)| TargetRef::Region(Region::new(x, y, w, h)))
}

fn object_or_class() -> impl Strategy<Value = TargetRef> {
    prop_oneof![
        ident().prop_map(|id| TargetRef::Object { id }),
        ident().prop_map(|name| TargetRef::Class { name }),
    ]
}

fn peer() -> impl Strategy<Value = TargetRef> {
    prop_oneof![
        ident().prop_map(|id| TargetRef::Robot { id }),
        ident().prop_map(|id| TargetRef::Station { id }),
    ]
}

fn task() -> impl Strategy<Value = Task> {
    let with_target = |action: ActionKind, t: BoxedStrategy<TargetRef>| {
        (ident(), t).prop_map(move |(s, t)| Task::new(s, action, Some(t))).boxed()
    };
    prop_oneof![
        with_target(ActionKind::Observe, object_or_class().boxed()),
        with_target(ActionKind::Touch, object_or_class().boxed()),
        with_target(ActionKind::Manipulate, object_or_class().boxed()),
        with_target(ActionKind::Navigate, prop_oneof![object_or_class(), region(), peer()].boxed()),
        with_target(ActionKind::Communicate, peer().boxed()),
        (ident(), proptest::option::of(region())).prop_map(|(s, t)| Task::new(s, ActionKind::Survey, t)),
        ident().prop_map(|s| Task::new(s, ActionKind::Dock, None)),
        ident().prop_map(|s| Task::new(s, ActionKind::Undock, None)),
    ]
}

fn priority() -> impl Strategy<Value = Priority> {
    prop_oneof![Just(Priority::Normal), Just(Priority::Communication), Just(Priority::Human), Just(Priority::Safety)]
}

fn mission() -> impl Strategy<Value = Mission> {
    (ident(), priority(), proptest::collection::vec(task(), 1..6))
        .prop_map(|(id, p, tasks)| Mission::new(id, p, tasks).expect("generated missions are valid"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn parse_inverts_render(m in mission()) {
        let text = m.render();
        prop_assert_eq!(parse_mission(&text).unwrap(), m);
    }

    #[test]
    fn rendering_is_canonical(m in mission()) {
        let once = m.render();
        let twice = parse_mission(&once).unwrap().render();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn json_form_round_trips(m in mission()) {
        let json = serde_json::to_string(&m).unwrap();
        let back: Mission = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn parsing_is_total(text in "(mission|alpha|beta|survey|region|object|[0-9.-]+|#|\n| |[a-z]+){0,30}") {
        // Every input yields a mission or a positioned error.
        if let Err(e) = parse_mission(&text) {
            let line = match e {
                abyssal_core::mission::MissionError::Syntax { line, .. }
                | abyssal_core::mission::MissionError::Arity { line, .. }
                | abyssal_core::mission::MissionError::UnknownAction { line, .. } => line,
            };
            prop_assert!(line >= 1 && line <= text.split('\n').count() + 1);
        }
    }

    #[test]
    fn noisy_whitespace_and_comments_do_not_matter(m in mission()) {
        let noisy: String = m
            .render()
            .lines()
            .map(|l| format!("  {}\t # note\n\n", l.replace(' ', "   ")))
            .collect();
        prop_assert_eq!(parse_mission(&noisy).unwrap(), m);
    }
}

#[test]
fn examples() {
    let m = parse_mission("mission m1 normal\nalpha survey region 0 0 40 20\nalpha dock").unwrap();
    assert_eq!(m.tasks().len(), 2);
    let m = parse_mission("mission m2 normal\nbeta collect object o7").unwrap();
    assert_eq!(m.tasks()[0], Task::new("beta", ActionKind::Manipulate, Some(TargetRef::Object { id: "o7".into() })));
    assert!(matches!(
        parse_mission("mission m3 normal\nalpha manipulate"),
        Err(abyssal_core::mission::MissionError::Arity { .. })
    ));
    let region = parse_mission("mission r normal\nalpha survey region 25 0 30 16\n").unwrap();
    assert_eq!(region.render().lines().nth(1), Some("alpha survey region 25 0 30 16"));
    assert!(Mission::new("empty", Priority::Normal, vec![]).is_err());
}
