//! Core library of BabelBot: multilingual command interpretation, visual
//! grounding, a simulated differential-drive robot and evaluation metrics.

pub mod engine;
pub mod executor;
pub mod gateway;
pub mod langid;
pub mod metrics;
pub mod perception;
pub mod simulator;

pub use engine::{ActionPlan, ActionPrimitive, FixtureCorpus, Instruction};
pub use executor::{ExecStatus, ExecutionTrace};
pub use gateway::{Gateway, GatewayConfig, GatewayError, SessionStatus, TelemetryEvent};
pub use langid::{detect_language, LanguageTag};
pub use metrics::{InteractionRecord, MetricsReport};
pub use simulator::{MapFile, Pose};
