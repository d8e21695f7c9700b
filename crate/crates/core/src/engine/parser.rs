//! Parser for `Action k: <verb phrase>` reply lines.

use std::sync::LazyLock;

use regex::Regex;

use super::action::*;
use super::EngineError;
use crate::langid::{language_info, LanguageTag};

static ACTION_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*\**\s*action\s+(\d+)\s*\**\s*:\s*(.*?)\s*$").unwrap());

/// Whether `line` has the `Action k: ...` shape.
pub fn is_action_line(line: &str) -> bool {
    ACTION_LINE.is_match(line)
}

const NUM: &str = r"(-?\d+(?:[.,]\d+)?)";
const CNUM: &str = r"(-?\d+(?:\.\d+)?)";
const LEN_UNIT: &str =
    r"(m|meters?|metres?|cm|centimeters?|centimetres?|mm|millimeters?|millimetres?)";
const ANGLE_UNIT: &str = r"(deg|degrees?|°|rad|radians?)";
const SPEED: &str =
    r"(?:\s+at\s+(-?\d+(?:[.,]\d+)?)\s*(?:m/s|meters? per second|metres? per second))?";

fn re(pattern: String) -> Regex {
    Regex::new(&format!("(?i)^{pattern}$")).unwrap()
}

static GUARD: LazyLock<Regex> =
    LazyLock::new(|| re(r"if\s+(.+?)\s*:\s*(.+?)(?:\s*else\s*:\s*(.+))?".into()));
static MOVE: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"(?:move|drive|go|travel)\s+(forwards?|ahead|straight|backwards?|back)\s+(?:by\s+|for\s+)?{NUM}\s*{LEN_UNIT}{SPEED}"
    ))
});
static ROTATE: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"(?:turn|rotate)\s+(?:(left|right)\s+)?(?:by\s+)?{NUM}\s*{ANGLE_UNIT}(?:\s+(?:to\s+the\s+)?(left|right))?(?:\s+at\s+{NUM}\s*(deg/s|degrees?\s+per\s+second|°/s|rad/s))?"
    ))
});
static COORDS_NAMED: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"(?:navigate|go|move|head|travel|return)\s+(?:back\s+)?to\s+(?:the\s+)?(?:coordinates?|location|position|point|destination)?\s*(?:with\s+coordinates\s*)?:?\s*x\s*=\s*{CNUM}\s*,\s*y\s*=\s*{CNUM}(?:\s*,\s*z\s*=\s*{CNUM})?{SPEED}"
    ))
});
static COORDS_TUPLE: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"(?:navigate|go|move|head|travel|return)\s+(?:back\s+)?to\s+(?:the\s+)?(?:coordinates?|location|position|point|destination)?\s*(?:with\s+coordinates\s*)?:?\s*\(\s*{CNUM}\s*,\s*{CNUM}\s*(?:,\s*{CNUM}\s*)?\){SPEED}"
    ))
});
static OBJECT: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?:navigate|go|move|head|drive)\s+(?:to|towards?)\s+(?:the\s+)?detected\s+(.+?)(\s+with\s+(?:the\s+)?highest\s+(?:detection\s+)?(?:confidence|probability))?".into())
});
static NAMED: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"(?:navigate|go|head|move|travel|return)\s+(?:back\s+)?(?:to|towards?)\s+(?:the\s+)?(.+?){SPEED}"
    ))
});
static CIRCLE: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"move\s+in\s+an?\s+circle\s+(?:of|with)\s+(?:a\s+)?(radius|diameter)\s+(?:of\s+)?{NUM}\s*{LEN_UNIT}{SPEED}"
    ))
});
static ARC: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"move\s+in\s+an?\s+arc\s+of\s+radius\s+{NUM}\s*{LEN_UNIT}\s+through\s+{NUM}\s*{ANGLE_UNIT}(?:\s+to\s+the\s+(left|right))?{SPEED}"
    ))
});
static RECTANGLE: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"move\s+in\s+a\s+rectangle\s+of\s+length\s+{NUM}\s*{LEN_UNIT}\s+and\s+(?:breadth|width)\s+{NUM}\s*{LEN_UNIT}{SPEED}"
    ))
});
static SQUARE: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"move\s+in\s+a\s+square\s+(?:of|with)\s+(?:a\s+)?side\s+(?:length\s+)?(?:of\s+)?{NUM}\s*{LEN_UNIT}{SPEED}"
    ))
});
static LSHAPE: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"move\s+in\s+an?\s+l-?shape(?:d\s+path)?\s+of\s+{NUM}\s*{LEN_UNIT}\s+horizontal\s+and\s+{NUM}\s*{LEN_UNIT}\s+vertical{SPEED}"
    ))
});
static WAIT: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"(?:wait|pause|stay|remain)(?:\s+there)?(?:\s+for)?\s+{NUM}\s*(s|secs?|seconds?)"
    ))
});
static DESCRIBE: LazyLock<Regex> = LazyLock::new(|| {
    re(r"describe\s+(?:the\s+|your\s+)?(?:surroundings|environment|objects(?:\s+.*)?|what\s+you\s+(?:can\s+)?see.*)".into())
});
static REPORT: LazyLock<Regex> = LazyLock::new(|| {
    re(
        r"(?:report|send|tell)\b.*\b(?:pose|position|orientation|coordinates|location|heading)\b.*"
            .into(),
    )
});
static CAPTURE: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?:capture|take|send|snap)\s+(?:me\s+)?(?:an?\s+)?(?:image|photo|picture|snapshot)(?:\s+.*)?".into())
});
static LIMIT: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"(?:limit|set)\s+(?:the\s+)?(?:maximum\s+|max\s+)?speed\s+to\s+{NUM}\s*m/s"
    ))
});
static COND_DETECT: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"(?:you\s+)?detect(?:ed|s)?\s+(.+?)\s+with\s+(?:a\s+)?(?:probability|confidence)\s*(?:>=|≥|of\s+at\s+least|at\s+least|above|over|>)\s*{NUM}\s*(%)?"
    ))
});
static COND_OBSTACLE: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"(?:an?\s+|any\s+)?obstacle\s+(?:is\s+)?closer\s+than\s+{NUM}\s*{LEN_UNIT}"
    ))
});
static COND_ELAPSED: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"elapsed\s+time\s+(?:is\s+)?(?:over|exceeds|above|>)\s+{NUM}\s*(?:s|secs?|seconds?)"
    ))
});
static COND_TRAVEL: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"travel\s+time\s+to\s+(?:x\s*=\s*{CNUM}\s*,\s*y\s*=\s*{CNUM}(?:\s*,\s*z\s*=\s*{CNUM})?|\(\s*{CNUM}\s*,\s*{CNUM}\s*(?:,\s*{CNUM}\s*)?\))\s+at\s+{NUM}\s*m/s\s+(?:is\s+)?(?:over|exceeds|above|>)\s+{NUM}\s*(?:s|secs?|seconds?)"
    ))
});
static COND_DISTANCE: LazyLock<Regex> = LazyLock::new(|| {
    re(format!(
        r"distance\s+travel(?:l)?ed\s+(?:is\s+)?(?:over|exceeds|above|>)\s+{NUM}\s*{LEN_UNIT}"
    ))
});

/// Why a single action body could not be parsed.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LineError {
    UnknownVerb,
    Negative(String),
}

struct LineParser {
    decimal_comma: bool,
    annotations: Vec<String>,
    index: usize,
}

impl LineParser {
    fn number(&self, s: &str) -> Result<f64, LineError> {
        let s = if self.decimal_comma {
            s.replace(',', ".")
        } else if s.contains(',') {
            return Err(LineError::UnknownVerb);
        } else {
            s.to_string()
        };
        s.parse::<f64>().map_err(|_| LineError::UnknownVerb)
    }

    fn positive(&self, s: &str, what: &str) -> Result<f64, LineError> {
        let v = self.number(s)?;
        if v <= 0.0 || !v.is_finite() {
            return Err(LineError::Negative(format!(
                "{what} must be positive, got {v}"
            )));
        }
        Ok(v)
    }

    fn length(&self, s: &str, unit: &str, what: &str) -> Result<f64, LineError> {
        Ok(self.positive(s, what)? * length_factor(unit))
    }

    fn speed(&mut self, s: Option<regex::Match<'_>>) -> Result<Option<f64>, LineError> {
        let Some(m) = s else { return Ok(None) };
        let v = self.number(m.as_str())?;
        if v < 0.0 {
            return Err(LineError::Negative(format!(
                "speed must not be negative, got {v}"
            )));
        }
        let clamped = v.clamp(MIN_LINEAR_SPEED, MAX_LINEAR_SPEED);
        if clamped != v {
            self.annotations.push(format!(
                "action {}: speed {v} m/s clamped to {clamped} m/s",
                self.index
            ));
        }
        Ok(Some(clamped))
    }

    fn angular_speed(&mut self, value: &str, unit: &str) -> Result<f64, LineError> {
        let mut v = self.number(value)?;
        if unit.eq_ignore_ascii_case("rad/s") {
            v = v.to_degrees();
        }
        if v <= 0.0 {
            return Err(LineError::Negative(format!(
                "angular speed must be positive, got {v}"
            )));
        }
        if v > MAX_ANGULAR_SPEED_DEG {
            self.annotations.push(format!(
                "action {}: angular speed {v} deg/s clamped to {MAX_ANGULAR_SPEED_DEG} deg/s",
                self.index
            ));
            v = MAX_ANGULAR_SPEED_DEG;
        }
        Ok(v)
    }

    fn coord(&self, s: &str) -> Result<f64, LineError> {
        s.parse::<f64>().map_err(|_| LineError::UnknownVerb)
    }

    fn parse(&mut self, body: &str) -> Result<ActionPrimitive, LineError> {
        let body = body.trim().trim_end_matches(['.', '!', ';']).trim();

        if let Some(c) = GUARD.captures(body) {
            let condition = self.condition(c[1].trim())?;
            let then = Box::new(self.parse(&c[2])?);
            let otherwise = match c.get(3) {
                Some(m) => Some(Box::new(self.parse(m.as_str())?)),
                None => None,
            };
            return Ok(ActionPrimitive::Guarded {
                condition,
                then,
                otherwise,
            });
        }
        if let Some(c) = MOVE.captures(body) {
            let direction = if c[1].to_lowercase().starts_with("back") {
                LinearDirection::Backward
            } else {
                LinearDirection::Forward
            };
            return Ok(ActionPrimitive::MoveLinear {
                direction,
                distance: self.length(&c[2], &c[3], "distance")?,
                speed: self.speed(c.get(4))?,
            });
        }
        if let Some(c) = ROTATE.captures(body) {
            let dir = c.get(1).or(c.get(4)).map(|m| m.as_str().to_lowercase());
            let direction = match dir.as_deref() {
                Some("right") => TurnDirection::Right,
                _ => TurnDirection::Left,
            };
            let mut angle = self.positive(&c[2], "angle")?;
            if c[3].to_lowercase().starts_with("rad") {
                angle = angle.to_degrees();
            }
            let angular_speed_deg = match (c.get(5), c.get(6)) {
                (Some(v), Some(u)) => Some(self.angular_speed(v.as_str(), u.as_str())?),
                _ => None,
            };
            return Ok(ActionPrimitive::Rotate {
                direction,
                angle_deg: angle,
                angular_speed_deg,
            });
        }
        if let Some(c) = COORDS_NAMED
            .captures(body)
            .or_else(|| COORDS_TUPLE.captures(body))
        {
            return Ok(ActionPrimitive::NavigateToCoords {
                x: self.coord(&c[1])?,
                y: self.coord(&c[2])?,
                z: c.get(3)
                    .map(|m| self.coord(m.as_str()))
                    .transpose()?
                    .unwrap_or(0.0),
                speed: self.speed(c.get(4))?,
            });
        }
        if let Some(c) = OBJECT.captures(body) {
            let label = strip_articles(&c[1]);
            let selector = if c.get(2).is_some() || label == "object" {
                ObjectSelector::BestConfidence
            } else {
                ObjectSelector::Named
            };
            return Ok(ActionPrimitive::NavigateToObject { label, selector });
        }
        if let Some(c) = CIRCLE.captures(body) {
            let mut radius = self.length(&c[2], &c[3], "radius")?;
            if c[1].eq_ignore_ascii_case("diameter") {
                radius /= 2.0;
            }
            return Ok(ActionPrimitive::PatternMove {
                shape: PatternShape::Circle { radius },
                speed: self.speed(c.get(4))?,
            });
        }
        if let Some(c) = ARC.captures(body) {
            let radius = self.length(&c[1], &c[2], "radius")?;
            let mut angle = self.positive(&c[3], "arc angle")?;
            if c[4].to_lowercase().starts_with("rad") {
                angle = angle.to_degrees();
            }
            let direction = match c.get(5).map(|m| m.as_str().to_lowercase()).as_deref() {
                Some("right") => TurnDirection::Right,
                _ => TurnDirection::Left,
            };
            return Ok(ActionPrimitive::PatternMove {
                shape: PatternShape::Arc {
                    radius,
                    angle_deg: angle,
                    direction,
                },
                speed: self.speed(c.get(6))?,
            });
        }
        if let Some(c) = RECTANGLE.captures(body) {
            return Ok(ActionPrimitive::PatternMove {
                shape: PatternShape::Rectangle {
                    length: self.length(&c[1], &c[2], "length")?,
                    breadth: self.length(&c[3], &c[4], "breadth")?,
                },
                speed: self.speed(c.get(5))?,
            });
        }
        if let Some(c) = SQUARE.captures(body) {
            let side = self.length(&c[1], &c[2], "side")?;
            return Ok(ActionPrimitive::PatternMove {
                shape: PatternShape::Rectangle {
                    length: side,
                    breadth: side,
                },
                speed: self.speed(c.get(3))?,
            });
        }
        if let Some(c) = LSHAPE.captures(body) {
            return Ok(ActionPrimitive::PatternMove {
                shape: PatternShape::LShape {
                    horizontal: self.length(&c[1], &c[2], "horizontal leg")?,
                    vertical: self.length(&c[3], &c[4], "vertical leg")?,
                },
                speed: self.speed(c.get(5))?,
            });
        }
        if let Some(c) = WAIT.captures(body) {
            return Ok(ActionPrimitive::Wait {
                seconds: self.positive(&c[1], "wait duration")?,
            });
        }
        if let Some(c) = LIMIT.captures(body) {
            let v = self.positive(&c[1], "speed limit")?;
            return Ok(ActionPrimitive::LimitSpeed {
                max_speed: v.clamp(MIN_LINEAR_SPEED, MAX_LINEAR_SPEED),
            });
        }
        if DESCRIBE.is_match(body) {
            return Ok(ActionPrimitive::DescribeSurroundings);
        }
        if REPORT.is_match(body) {
            return Ok(ActionPrimitive::ReportPose);
        }
        if CAPTURE.is_match(body) {
            return Ok(ActionPrimitive::CaptureImage);
        }
        // Named destinations come last: the pattern accepts any noun phrase.
        if let Some(c) = NAMED.captures(body) {
            let destination = strip_articles(&c[1]);
            if destination.is_empty() || destination.chars().any(|ch| ch.is_ascii_digit()) {
                return Err(LineError::UnknownVerb);
            }
            return Ok(ActionPrimitive::NavigateToNamed {
                destination,
                speed: self.speed(c.get(2))?,
            });
        }
        Err(LineError::UnknownVerb)
    }

    fn condition(&mut self, text: &str) -> Result<Condition, LineError> {
        if let Some(c) = COND_DETECT.captures(text) {
            let label = strip_articles(&c[1]);
            let label = match label.as_str() {
                "object" | "objects" | "any object" | "anything" | "something" => None,
                _ => Some(label),
            };
            let mut prob = self.number(&c[2])?;
            if c.get(3).is_some() || prob > 1.0 {
                prob /= 100.0;
            }
            if !(0.0..=1.0).contains(&prob) {
                return Err(LineError::Negative(format!(
                    "probability {prob} outside [0, 1]"
                )));
            }
            return Ok(Condition::DetectionAbove { label, prob });
        }
        if let Some(c) = COND_OBSTACLE.captures(text) {
            return Ok(Condition::ObstacleCloser {
                distance: self.length(&c[1], &c[2], "obstacle distance")?,
            });
        }
        if let Some(c) = COND_ELAPSED.captures(text) {
            return Ok(Condition::ElapsedOver {
                seconds: self.positive(&c[1], "elapsed time")?,
            });
        }
        if let Some(c) = COND_TRAVEL.captures(text) {
            let (x, y, z) = if c.get(1).is_some() {
                (c.get(1), c.get(2), c.get(3))
            } else {
                (c.get(4), c.get(5), c.get(6))
            };
            let coord = |m: Option<regex::Match<'_>>| -> Result<f64, LineError> {
                m.map(|m| self.coord(m.as_str()))
                    .transpose()
                    .map(|v| v.unwrap_or(0.0))
            };
            let goal = [coord(x)?, coord(y)?, coord(z)?];
            return Ok(Condition::TravelTimeOver {
                speed: self.positive(&c[7], "travel speed")?,
                seconds: self.positive(&c[8], "travel time")?,
                goal,
            });
        }
        if let Some(c) = COND_DISTANCE.captures(text) {
            return Ok(Condition::DistanceTravelledOver {
                meters: self.length(&c[1], &c[2], "distance")?,
            });
        }
        Err(LineError::UnknownVerb)
    }
}

fn length_factor(unit: &str) -> f64 {
    let u = unit.to_lowercase();
    if u.starts_with("cm") || u.starts_with("centi") {
        0.01
    } else if u.starts_with("mm") || u.starts_with("milli") {
        0.001
    } else {
        1.0
    }
}

fn strip_articles(s: &str) -> String {
    let mut s = s.trim().to_lowercase();
    for article in ["the ", "a ", "an ", "any ", "your "] {
        if let Some(rest) = s.strip_prefix(article) {
            s = rest.to_string();
        }
    }
    s.trim().to_string()
}

/// Parse a single action body (without the `Action k:` prefix).
pub fn parse_action_body(
    body: &str,
    language: &LanguageTag,
) -> Result<ActionPrimitive, EngineError> {
    let mut p = LineParser {
        decimal_comma: decimal_comma(language),
        annotations: Vec::new(),
        index: 1,
    };
    p.parse(body).map_err(|e| match e {
        LineError::UnknownVerb => EngineError::UnknownActionVerb(body.to_string()),
        LineError::Negative(msg) => EngineError::NegativeParameter(msg),
    })
}

fn decimal_comma(language: &LanguageTag) -> bool {
    language_info(&language.code).is_some_and(|i| i.decimal_comma)
}

/// Turn `Action k:` lines into a plan.
///
/// Lines with an unknown verb are kept in `unparsed` and the plan is flagged;
/// numbering that does not start at 1 and strictly increase, or a negative
/// parameter, rejects the whole plan.
pub fn parse_action_lines(
    lines: &[String],
    language: &LanguageTag,
    provenance: Provenance,
) -> Result<ActionPlan, EngineError> {
    let mut parser = LineParser {
        decimal_comma: decimal_comma(language),
        annotations: Vec::new(),
        index: 0,
    };
    let mut actions = Vec::new();
    let mut unparsed = Vec::new();
    let mut last_k = 0u64;
    for line in lines {
        let caps = ACTION_LINE
            .captures(line)
            .ok_or_else(|| EngineError::UnknownActionVerb(line.clone()))?;
        let k: u64 = caps[1]
            .parse()
            .map_err(|_| EngineError::NonmonotoneNumbering {
                expected_after: last_k,
                found: 0,
            })?;
        if (last_k == 0 && k != 1) || k <= last_k {
            return Err(EngineError::NonmonotoneNumbering {
                expected_after: last_k,
                found: k,
            });
        }
        last_k = k;
        parser.index = k as usize;
        match parser.parse(&caps[2]) {
            Ok(a) => actions.push(a),
            Err(LineError::UnknownVerb) => unparsed.push(UnparsedLine {
                index: k as usize,
                line: line.clone(),
                reason: "unknown action verb".into(),
            }),
            Err(LineError::Negative(msg)) => return Err(EngineError::NegativeParameter(msg)),
        }
    }
    let mut plan = ActionPlan::new(actions, language.clone(), provenance);
    plan.unparsed = unparsed;
    plan.annotations = parser.annotations;
    Ok(plan)
}

/// Extract the `Action k: ...` lines of a reply, in order.
pub fn extract_action_lines(reply: &str) -> Vec<String> {
    reply
        .lines()
        .filter(|l| is_action_line(l))
        .map(|l| l.trim().to_string())
        .collect()
}
