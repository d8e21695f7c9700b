use std::fmt;

use serde::{Deserialize, Serialize};

use crate::langid::LanguageTag;

pub const MIN_LINEAR_SPEED: f64 = 0.2;
pub const MAX_LINEAR_SPEED: f64 = 1.0;
pub const MAX_ANGULAR_SPEED_DEG: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearDirection {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnDirection {
    Left,
    Right,
}

impl TurnDirection {
    /// +1 for counter-clockwise (left), -1 for clockwise.
    pub fn sign(self) -> f64 {
        match self {
            TurnDirection::Left => 1.0,
            TurnDirection::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectSelector {
    BestConfidence,
    Named,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum PatternShape {
    Circle {
        radius: f64,
    },
    Arc {
        radius: f64,
        angle_deg: f64,
        direction: TurnDirection,
    },
    Rectangle {
        length: f64,
        breadth: f64,
    },
    LShape {
        horizontal: f64,
        vertical: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Condition {
    DetectionAbove {
        label: Option<String>,
        prob: f64,
    },
    ObstacleCloser {
        distance: f64,
    },
    ElapsedOver {
        seconds: f64,
    },
    TravelTimeOver {
        seconds: f64,
        speed: f64,
        goal: [f64; 3],
    },
    DistanceTravelledOver {
        meters: f64,
    },
}

/// One robot-executable step with its physical parameters. Angles are in
/// degrees here and converted to radians when compiled into twists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionPrimitive {
    MoveLinear {
        direction: LinearDirection,
        distance: f64,
        speed: Option<f64>,
    },
    Rotate {
        direction: TurnDirection,
        angle_deg: f64,
        angular_speed_deg: Option<f64>,
    },
    NavigateToCoords {
        x: f64,
        y: f64,
        z: f64,
        speed: Option<f64>,
    },
    NavigateToNamed {
        destination: String,
        speed: Option<f64>,
    },
    NavigateToObject {
        label: String,
        selector: ObjectSelector,
    },
    PatternMove {
        shape: PatternShape,
        speed: Option<f64>,
    },
    Wait {
        seconds: f64,
    },
    DescribeSurroundings,
    ReportPose,
    CaptureImage,
    LimitSpeed {
        max_speed: f64,
    },
    Guarded {
        condition: Condition,
        then: Box<ActionPrimitive>,
        otherwise: Option<Box<ActionPrimitive>>,
    },
}

impl ActionPrimitive {
    /// Whether executing this primitive can move the robot.
    pub fn is_motion(&self) -> bool {
        match self {
            ActionPrimitive::MoveLinear { .. }
            | ActionPrimitive::Rotate { .. }
            | ActionPrimitive::NavigateToCoords { .. }
            | ActionPrimitive::NavigateToNamed { .. }
            | ActionPrimitive::NavigateToObject { .. }
            | ActionPrimitive::PatternMove { .. } => true,
            ActionPrimitive::Guarded {
                then, otherwise, ..
            } => then.is_motion() || otherwise.as_ref().is_some_and(|o| o.is_motion()),
            ActionPrimitive::Wait { .. }
            | ActionPrimitive::DescribeSurroundings
            | ActionPrimitive::ReportPose
            | ActionPrimitive::CaptureImage
            | ActionPrimitive::LimitSpeed { .. } => false,
        }
    }

    pub fn is_query(&self) -> bool {
        matches!(
            self,
            ActionPrimitive::DescribeSurroundings
                | ActionPrimitive::ReportPose
                | ActionPrimitive::CaptureImage
        )
    }

    /// Canonical action string, e.g. `Move forward 2 m at 0.2 m/s.`
    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

fn fmt_speed(f: &mut fmt::Formatter<'_>, speed: Option<f64>) -> fmt::Result {
    match speed {
        Some(v) => write!(f, " at {} m/s", num(v)),
        None => Ok(()),
    }
}

/// Shortest decimal form that parses back to the same value.
pub(crate) fn num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v}")
}

fn turn_word(d: TurnDirection) -> &'static str {
    match d {
        TurnDirection::Left => "left",
        TurnDirection::Right => "right",
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::DetectionAbove { label, prob } => write!(
                f,
                "detected {} with probability >= {}",
                label.as_deref().unwrap_or("any object"),
                num(*prob)
            ),
            Condition::ObstacleCloser { distance } => {
                write!(f, "obstacle closer than {} m", num(*distance))
            }
            Condition::ElapsedOver { seconds } => {
                write!(f, "elapsed time over {} s", num(*seconds))
            }
            Condition::TravelTimeOver {
                seconds,
                speed,
                goal,
            } => write!(
                f,
                "travel time to x = {}, y = {}, z = {} at {} m/s over {} s",
                num(goal[0]),
                num(goal[1]),
                num(goal[2]),
                num(*speed),
                num(*seconds)
            ),
            Condition::DistanceTravelledOver { meters } => {
                write!(f, "distance travelled over {} m", num(*meters))
            }
        }
    }
}

impl fmt::Display for ActionPrimitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionPrimitive::MoveLinear {
                direction,
                distance,
                speed,
            } => {
                let dir = match direction {
                    LinearDirection::Forward => "forward",
                    LinearDirection::Backward => "backward",
                };
                write!(f, "Move {dir} {} m", num(*distance))?;
                fmt_speed(f, *speed)?;
                f.write_str(".")
            }
            ActionPrimitive::Rotate {
                direction,
                angle_deg,
                angular_speed_deg,
            } => {
                write!(f, "Turn {} {} deg", turn_word(*direction), num(*angle_deg))?;
                if let Some(w) = angular_speed_deg {
                    write!(f, " at {} deg/s", num(*w))?;
                }
                f.write_str(".")
            }
            ActionPrimitive::NavigateToCoords { x, y, z, speed } => {
                write!(
                    f,
                    "Navigate to the coordinates x = {}, y = {}, z = {}",
                    num(*x),
                    num(*y),
                    num(*z)
                )?;
                fmt_speed(f, *speed)?;
                f.write_str(".")
            }
            ActionPrimitive::NavigateToNamed { destination, speed } => {
                write!(f, "Navigate to the {destination}")?;
                fmt_speed(f, *speed)?;
                f.write_str(".")
            }
            ActionPrimitive::NavigateToObject { label, selector } => match selector {
                ObjectSelector::Named => write!(f, "Navigate to the detected {label}."),
                ObjectSelector::BestConfidence => {
                    write!(
                        f,
                        "Navigate to the detected {label} with the highest confidence."
                    )
                }
            },
            ActionPrimitive::PatternMove { shape, speed } => {
                match shape {
                    PatternShape::Circle { radius } => {
                        write!(f, "Move in a circle of radius {} m", num(*radius))?
                    }
                    PatternShape::Arc {
                        radius,
                        angle_deg,
                        direction,
                    } => write!(
                        f,
                        "Move in an arc of radius {} m through {} deg to the {}",
                        num(*radius),
                        num(*angle_deg),
                        turn_word(*direction)
                    )?,
                    PatternShape::Rectangle { length, breadth } => write!(
                        f,
                        "Move in a rectangle of length {} m and breadth {} m",
                        num(*length),
                        num(*breadth)
                    )?,
                    PatternShape::LShape {
                        horizontal,
                        vertical,
                    } => write!(
                        f,
                        "Move in an L-shape of {} m horizontal and {} m vertical",
                        num(*horizontal),
                        num(*vertical)
                    )?,
                }
                fmt_speed(f, *speed)?;
                f.write_str(".")
            }
            ActionPrimitive::Wait { seconds } => write!(f, "Wait {} s.", num(*seconds)),
            ActionPrimitive::DescribeSurroundings => f.write_str("Describe surroundings."),
            ActionPrimitive::ReportPose => f.write_str("Report pose."),
            ActionPrimitive::CaptureImage => f.write_str("Capture image."),
            ActionPrimitive::LimitSpeed { max_speed } => {
                write!(f, "Limit maximum speed to {} m/s.", num(*max_speed))
            }
            ActionPrimitive::Guarded {
                condition,
                then,
                otherwise,
            } => {
                write!(f, "If {condition}: {then}")?;
                if let Some(o) = otherwise {
                    write!(f, " Else: {o}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Llm,
    Mock,
}

/// A reply line that could not be turned into a primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnparsedLine {
    pub index: usize,
    pub line: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPlan {
    pub actions: Vec<ActionPrimitive>,
    pub language: LanguageTag,
    pub requires_confirmation: bool,
    pub provenance: Provenance,
    /// Lines kept verbatim because no action verb matched; such a plan
    /// counts as failed.
    #[serde(default)]
    pub unparsed: Vec<UnparsedLine>,
    /// Notes about parameters adjusted during parsing (speed clamping).
    #[serde(default)]
    pub annotations: Vec<String>,
}

impl ActionPlan {
    pub fn new(
        actions: Vec<ActionPrimitive>,
        language: LanguageTag,
        provenance: Provenance,
    ) -> Self {
        let mut plan = Self {
            actions,
            language,
            requires_confirmation: false,
            provenance,
            unparsed: Vec::new(),
            annotations: Vec::new(),
        };
        plan.requires_confirmation = plan_requires_confirmation(&plan);
        plan
    }

    pub fn is_unparseable(&self) -> bool {
        !self.unparsed.is_empty()
    }

    pub fn canonical_actions(&self) -> Vec<String> {
        self.actions
            .iter()
            .map(ActionPrimitive::canonical)
            .collect()
    }

    /// `Action k: ...` lines for this plan.
    pub fn to_lines(&self) -> Vec<String> {
        self.actions
            .iter()
            .enumerate()
            .map(|(i, a)| format!("Action {}: {a}", i + 1))
            .collect()
    }

    pub fn motion_count(&self) -> usize {
        self.actions.iter().filter(|a| a.is_motion()).count()
    }
}

/// Multistep plans (two or more motion-bearing primitives) need the user's
/// approval before anything moves.
pub fn plan_requires_confirmation(plan: &ActionPlan) -> bool {
    plan.motion_count() >= 2
}
