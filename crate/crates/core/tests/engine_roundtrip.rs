use babelbot_core::engine::*;
use babelbot_core::langid::LanguageTag;
use proptest::prelude::*;

fn positive() -> impl Strategy<Value = f64> {
    (1u32..5000).prop_map(|v| v as f64 / 100.0)
}

fn speed() -> impl Strategy<Value = Option<f64>> {
    prop::option::of((0u32..300).prop_map(|v| v as f64 / 100.0))
}

fn coord() -> impl Strategy<Value = f64> {
    (-2000i32..2000).prop_map(|v| v as f64 / 100.0)
}

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "kitchen",
        "living room",
        "office",
        "charging dock",
        "hallway",
    ])
    .prop_map(str::to_string)
}

fn label() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["chair", "person", "bottle", "potted plant", "laptop"])
        .prop_map(str::to_string)
}

fn turn() -> impl Strategy<Value = TurnDirection> {
    prop_oneof![Just(TurnDirection::Left), Just(TurnDirection::Right)]
}

fn simple() -> impl Strategy<Value = ActionPrimitive> {
    prop_oneof![
        (any::<bool>(), positive(), speed()).prop_map(|(fwd, distance, speed)| {
            ActionPrimitive::MoveLinear {
                direction: if fwd {
                    LinearDirection::Forward
                } else {
                    LinearDirection::Backward
                },
                distance,
                speed,
            }
        }),
        (
            turn(),
            positive(),
            prop::option::of((1u32..200).prop_map(|v| v as f64))
        )
            .prop_map(|(direction, angle_deg, angular_speed_deg)| {
                ActionPrimitive::Rotate {
                    direction,
                    angle_deg,
                    angular_speed_deg,
                }
            }),
        (coord(), coord(), coord(), speed())
            .prop_map(|(x, y, z, speed)| ActionPrimitive::NavigateToCoords { x, y, z, speed }),
        (word(), speed()).prop_map(|(destination, speed)| ActionPrimitive::NavigateToNamed {
            destination,
            speed
        }),
        label().prop_map(|label| ActionPrimitive::NavigateToObject {
            label,
            selector: ObjectSelector::Named
        }),
        Just(ActionPrimitive::NavigateToObject {
            label: "object".into(),
            selector: ObjectSelector::BestConfidence
        }),
        (positive(), speed()).prop_map(|(radius, speed)| ActionPrimitive::PatternMove {
            shape: PatternShape::Circle { radius },
            speed
        }),
        (positive(), positive(), turn(), speed()).prop_map(
            |(radius, angle_deg, direction, speed)| {
                ActionPrimitive::PatternMove {
                    shape: PatternShape::Arc {
                        radius,
                        angle_deg,
                        direction,
                    },
                    speed,
                }
            }
        ),
        (positive(), positive(), speed()).prop_map(|(length, breadth, speed)| {
            ActionPrimitive::PatternMove {
                shape: PatternShape::Rectangle { length, breadth },
                speed,
            }
        }),
        (positive(), positive(), speed()).prop_map(|(horizontal, vertical, speed)| {
            ActionPrimitive::PatternMove {
                shape: PatternShape::LShape {
                    horizontal,
                    vertical,
                },
                speed,
            }
        }),
        positive().prop_map(|seconds| ActionPrimitive::Wait { seconds }),
        Just(ActionPrimitive::DescribeSurroundings),
        Just(ActionPrimitive::ReportPose),
        Just(ActionPrimitive::CaptureImage),
        (20u32..=100).prop_map(|v| ActionPrimitive::LimitSpeed {
            max_speed: v as f64 / 100.0
        }),
    ]
}

fn condition() -> impl Strategy<Value = Condition> {
    prop_oneof![
        (
            prop::option::of(label()),
            (0u32..=100).prop_map(|p| p as f64 / 100.0)
        )
            .prop_map(|(label, prob)| Condition::DetectionAbove { label, prob }),
        positive().prop_map(|distance| Condition::ObstacleCloser { distance }),
        positive().prop_map(|seconds| Condition::ElapsedOver { seconds }),
        (positive(), positive(), coord(), coord()).prop_map(|(seconds, speed, x, y)| {
            Condition::TravelTimeOver {
                seconds,
                speed,
                goal: [x, y, 0.0],
            }
        }),
        positive().prop_map(|meters| Condition::DistanceTravelledOver { meters }),
    ]
}

fn primitive() -> impl Strategy<Value = ActionPrimitive> {
    prop_oneof![
        4 => simple(),
        1 => (condition(), simple(), prop::option::of(simple())).prop_map(|(condition, then, otherwise)| {
            ActionPrimitive::Guarded {
                condition,
                then: Box::new(then),
                otherwise: otherwise.map(Box::new),
            }
        }),
    ]
}

proptest! {
    #[test]
    fn format_parse_is_stable(actions in prop::collection::vec(primitive(), 1..6)) {
        let en = LanguageTag::default_language();
        let plan = ActionPlan::new(actions, en.clone(), Provenance::Mock);
        let first = parse_action_lines(&plan.to_lines(), &en, Provenance::Mock).unwrap();
        prop_assert!(first.unparsed.is_empty(), "{:?}", first.unparsed);
        let second = parse_action_lines(&first.to_lines(), &en, Provenance::Mock).unwrap();
        prop_assert_eq!(&first.actions, &second.actions);
        prop_assert_eq!(first.requires_confirmation, second.requires_confirmation);
    }

    #[test]
    fn parsed_speeds_are_in_range(actions in prop::collection::vec(simple(), 1..6)) {
        let en = LanguageTag::default_language();
        let plan = ActionPlan::new(actions, en.clone(), Provenance::Mock);
        let parsed = parse_action_lines(&plan.to_lines(), &en, Provenance::Mock).unwrap();
        for a in &parsed.actions {
            let v = match a {
                ActionPrimitive::MoveLinear { speed, .. }
                | ActionPrimitive::NavigateToCoords { speed, .. }
                | ActionPrimitive::NavigateToNamed { speed, .. }
                | ActionPrimitive::PatternMove { speed, .. } => *speed,
                _ => None,
            };
            if let Some(v) = v {
                prop_assert!((MIN_LINEAR_SPEED..=MAX_LINEAR_SPEED).contains(&v));
            }
            if let ActionPrimitive::Rotate { angular_speed_deg: Some(w), .. } = a {
                prop_assert!(*w > 0.0 && *w <= MAX_ANGULAR_SPEED_DEG);
            }
        }
    }
}
