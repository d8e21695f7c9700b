use serde::{Deserialize, Serialize};

use super::action::{MAX_ANGULAR_SPEED_DEG, MAX_LINEAR_SPEED, MIN_LINEAR_SPEED};
use super::llm::{ChatMessage, ChatRequest};
use super::EngineError;
use crate::langid::{language_info, LanguageTag};

/// Section names in the order they are sent.
pub const PROMPT_SECTIONS: [&str; 5] = [
    "identity_status",
    "action_definitions",
    "navigation_rules",
    "few_shot_examples",
    "language_instruction",
];

/// Robot status interpolated into the identity section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotContext {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw_deg: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub max_angular_speed_deg: f64,
}

impl Default for RobotContext {
    fn default() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            yaw_deg: 0.0,
            min_speed: MIN_LINEAR_SPEED,
            max_speed: MAX_LINEAR_SPEED,
            max_angular_speed_deg: MAX_ANGULAR_SPEED_DEG,
        }
    }
}

impl RobotContext {
    pub fn at(x: f64, y: f64, yaw_deg: f64) -> Self {
        Self {
            x,
            y,
            yaw_deg,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    /// `(section name, text)` in [`PROMPT_SECTIONS`] order.
    pub system_sections: Vec<(String, String)>,
    pub user_message: String,
}

impl PromptBundle {
    pub fn section(&self, name: &str) -> Option<&str> {
        self.system_sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.as_str())
    }

    pub fn system_text(&self) -> String {
        self.system_sections
            .iter()
            .map(|(_, t)| t.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Chat request carrying this prompt and `user_text`, with deterministic
    /// decoding settings.
    pub fn to_request(&self, user_text: &str) -> ChatRequest {
        ChatRequest {
            model: String::new(),
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: self.system_text(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: user_text.to_string(),
                },
            ],
            temperature: 0.0,
            max_tokens: 500,
        }
    }
}

/// Eight-point compass name for a yaw measured counter-clockwise from +x.
pub fn compass_direction(yaw_deg: f64) -> &'static str {
    const NAMES: [&str; 8] = [
        "east",
        "north-east",
        "north",
        "north-west",
        "west",
        "south-west",
        "south",
        "south-east",
    ];
    let idx = ((yaw_deg.rem_euclid(360.0) + 22.5) / 45.0).floor() as usize % 8;
    NAMES[idx]
}

fn language_name(tag: &LanguageTag) -> String {
    language_info(&tag.code)
        .map(|i| i.name.to_string())
        .unwrap_or_else(|| tag.code.clone())
}

const FEW_SHOTS: &str = "\
User: Go 2 meters ahead at 0.2m/s, then turn right at 30 deg/s.
Robot:
Action 1: Move forward 2 m at 0.2 m/s.
Action 2: Turn right 90 deg at 30 deg/s.

User: Visit the point (2, 3, 0) and then the kitchen, both at 0.5 m/s.
Robot:
Action 1: Navigate to the coordinates x = 2, y = 3, z = 0 at 0.5 m/s.
Action 2: Navigate to the kitchen at 0.5 m/s.

User: Drive over to the chair you saw.
Robot:
Action 1: Navigate to the detected chair.

User: Drive a circle 2 meters across as fast as you can.
Robot:
Action 1: Move in a circle of radius 1 meter at 1 m/s.

User: Turn 90 degrees left, go 4 meters forward, head to the kitchen, tell me what you see and approach the object you are most sure about.
Robot:
Action 1: Turn left 90 degrees.
Action 2: Move forward 4 meters.
Action 3: Navigate to the kitchen.
Action 4: Describe surroundings.
Action 5: Go to the detected object with the highest confidence.";

/// Assemble the five system sections for the current robot state.
pub fn build_system_prompt(
    robot: &RobotContext,
    destinations: &[String],
    language: &LanguageTag,
) -> Result<PromptBundle, EngineError> {
    if destinations.is_empty() {
        return Err(EngineError::NoDestinations);
    }
    let lang = language_name(language);
    let n = super::action::num;
    let identity = format!(
        "You are BabelBot, a multilingual wheeled mobile robot with a camera, a depth sensor and \
         odometry. Linear speed must stay between {} m/s and {} m/s; rotation speed must stay \
         between 0 deg/s and {} deg/s.\n\
         Current orientation (yaw): {} degrees, facing {}, and position: x = {}, y = {}, z = {}.\n\
         The user writes in {lang}. You may also answer questions about your status and abilities.",
        n(robot.min_speed),
        n(robot.max_speed),
        n(robot.max_angular_speed_deg),
        n(robot.yaw_deg),
        compass_direction(robot.yaw_deg),
        n(robot.x),
        n(robot.y),
        n(robot.z),
    );
    let actions = "Map each command onto these actions:\n\
         - Motion: move forward/backward, turn or rotate, navigate to coordinates or to a named destination.\n\
         - Sensing: describe surroundings, detect objects, capture an image.\n\
         - Status: report position, orientation and detected objects.\n\
         - Patterns: circles, arcs, rectangles and L-shapes.\n\
         - Conditions: If <condition>: <action> Else: <action>.\n\
         Give distances in meters, angles in degrees and speeds in m/s or deg/s."
        .to_string();
    let navigation = format!(
        "Named destinations: {}. You may also go to explicit coordinates or to objects you have \
         detected. For a command, answer with numbered lines of the form \"Action k: ...\". For a \
         question, answer briefly in plain sentences.",
        destinations.join(", ")
    );
    let language_section = format!(
        "Reply in {lang}. Always use the action names in English exactly as provided, even when \
         the rest of the reply is in {lang}."
    );
    let texts = [
        identity,
        actions,
        navigation,
        FEW_SHOTS.to_string(),
        language_section,
    ];
    Ok(PromptBundle {
        system_sections: PROMPT_SECTIONS
            .iter()
            .zip(texts)
            .map(|(n, t)| (n.to_string(), t))
            .collect(),
        user_message: String::new(),
    })
}
