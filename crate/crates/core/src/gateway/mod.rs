//! Session service: command intake, plan preview and approval, execution
//! with live telemetry, and per-session interaction logs.

mod bench;
mod clock;
mod config;
mod store;
mod telemetry;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Receiver;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bench::{run_bench, BenchOptions, BenchSummary, LatencyClient};
pub use clock::{Clock, SystemClock, VirtualClock};
pub use config::{load_map, GatewayConfig};
pub use store::{GoldSource, SessionLog, TurnLogEntry, TurnOutcome};
pub use telemetry::{EventDraft, EventKind, SessionStatus, TelemetryEvent, TelemetryHub};

use crate::engine::{
    build_system_prompt, classify_confirmation, interpret, parse_action_lines, ActionPlan,
    ActionPrimitive, EngineError, FixtureCorpus, HttpChatClient, Instruction, Interpretation,
    LanguageModelClient, LexiconSet, MockClient, Provenance, RobotContext,
};
use crate::executor::{
    discarded_trace, ActionOutcome, ExecStatus, ExecutionObserver, ExecutionTrace, Executor,
    FrameProvider, PerceptionRig, RobotRuntime, Tick, TurnInfo,
};
use crate::langid::{
    detect_language, resolve_session_language, script_fallback, LanguageProfileSet, LanguageSource, LanguageTag,
    SessionLanguageState,
};
use crate::metrics::InteractionRecord;
use crate::simulator::{
    AffinityTable, MapFile, Pose, RenderConfig, Simulation, World, BUNDLED_MAPS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("unknown session {0:?}")]
    SessionUnknown(String),
    #[error("session {0:?} already exists")]
    SessionExists(String),
    #[error("invalid session id {0:?}")]
    InvalidSessionId(String),
    #[error("session is busy with another command")]
    SessionBusy,
    #[error("no plan is waiting for confirmation")]
    NoPendingPlan,
    #[error("empty command")]
    EmptyCommand,
    #[error("language model: {message}")]
    Llm { message: String, retryable: bool },
    #[error("invalid language code {0:?}")]
    InvalidLanguage(String),
    #[error("engine: {0}")]
    Engine(String),
    #[error("execution: {0}")]
    Exec(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("corrupt log {path}: {reason}")]
    CorruptLog { path: String, reason: String },
    #[error("bench: {0}")]
    Bench(String),
}

/// What the client sees after submitting a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandReply {
    pub session_id: String,
    pub turn: u64,
    pub reply_text: String,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<ActionPlan>,
    pub needs_confirmation: bool,
    /// The plan is running in the background; watch the event stream.
    pub executing: bool,
    pub status: SessionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<ExecutionTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfirmReply {
    pub executed: bool,
    /// `None` when the reply matched no template and the plan is kept.
    pub decision: Option<u8>,
    pub pending: bool,
    pub reply_text: String,
    pub language: String,
    pub status: SessionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<ExecutionTrace>,
}

/// Snapshot of a session for state queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub status: SessionStatus,
    pub pose: Pose,
    pub language: LanguageTag,
    pub language_source: LanguageSource,
    pub pending_plan: Option<ActionPlan>,
    pub action_index: Option<usize>,
    pub speed_ceiling: f64,
    pub turns: usize,
    pub last_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedMap {
    pub name: String,
    pub active: bool,
    pub map: MapFile,
}

struct PendingTurn {
    turn: u64,
    text: String,
    language: LanguageTag,
    plan: ActionPlan,
    t_ins_ms: u64,
    t_res_ms: u64,
    gold: Option<Vec<String>>,
    summary: String,
}

impl PendingTurn {
    fn entry(
        &self,
        session_id: &str,
        outcome: TurnOutcome,
        success: bool,
        reply: String,
        trace: Option<&ExecutionTrace>,
    ) -> TurnLogEntry {
        let mut pred = self.plan.canonical_actions();
        pred.extend(self.plan.unparsed.iter().map(|u| u.line.clone()));
        TurnLogEntry {
            record: InteractionRecord {
                lang: self.language.code.clone(),
                text: self.text.clone(),
                t_ins_ms: self.t_ins_ms,
                t_res_ms: self.t_res_ms,
                gold_actions: self.gold.clone().unwrap_or_default(),
                pred_actions: pred,
                success,
            },
            session_id: session_id.to_string(),
            turn: self.turn,
            outcome,
            reply,
            gold_source: if self.gold.is_some() {
                GoldSource::Fixture
            } else {
                GoldSource::None
            },
            statuses: trace.map_or_else(Vec::new, |t| {
                t.per_action.iter().map(|a| a.status).collect()
            }),
            snapshots: trace.map_or_else(Vec::new, |t| t.snapshots.clone()),
        }
    }
}

struct SessionInner {
    pending: Option<PendingTurn>,
    turn_log: Vec<TurnLogEntry>,
    runtime: RobotRuntime,
    next_turn: u64,
    log: Option<SessionLog>,
}

pub struct Session {
    pub id: String,
    hub: TelemetryHub,
    busy: AtomicBool,
    executing: AtomicBool,
    abort: AtomicBool,
    language: Mutex<SessionLanguageState>,
    view: Mutex<SessionView>,
    inner: Mutex<SessionInner>,
}

/// Clears the busy flag when the command that set it is finished.
struct BusyGuard(Arc<Session>);

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::SeqCst);
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Session {
    fn claim(self: &Arc<Self>) -> Result<BusyGuard, GatewayError> {
        self.busy
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .map_err(|_| GatewayError::SessionBusy)?;
        Ok(BusyGuard(Arc::clone(self)))
    }

    fn emit(&self, kind: EventKind, at_ms: u64, message: Option<String>) -> TelemetryEvent {
        let v = lock(&self.view);
        let draft = EventDraft {
            kind,
            at_ms,
            status: v.status,
            pose: v.pose,
            action_index: v.action_index,
            language: v.language.code.clone(),
            message,
        };
        drop(v);
        self.hub.publish(draft)
    }

    fn update_view(&self, f: impl FnOnce(&mut SessionView)) {
        f(&mut lock(&self.view));
    }

    fn current_language(&self) -> LanguageTag {
        lock(&self.language).current.clone()
    }

    fn sync_language(&self) {
        let st = lock(&self.language).clone();
        self.update_view(|v| {
            v.language = st.current;
            v.language_source = st.source;
        });
    }
}

struct Shared {
    config: GatewayConfig,
    map_name: String,
    map: MapFile,
    world: World,
    executor: Executor,
    client: Box<dyn LanguageModelClient>,
    provenance: Provenance,
    fixtures: FixtureCorpus,
    profiles: LanguageProfileSet,
    lexicons: LexiconSet,
    clock: Arc<dyn Clock>,
    sessions: Mutex<BTreeMap<String, Arc<Session>>>,
}

/// Pieces a gateway can be assembled from when the defaults do not fit.
pub struct GatewayParts {
    pub client: Box<dyn LanguageModelClient>,
    pub provenance: Provenance,
    pub fixtures: FixtureCorpus,
    pub clock: Arc<dyn Clock>,
}

/// The session manager. Cheap to clone; clones share all sessions.
#[derive(Clone)]
pub struct Gateway {
    shared: Arc<Shared>,
}

impl Gateway {
    /// Mock or HTTP model client per `config.mock_llm`, wall clock.
    pub fn new(config: GatewayConfig) -> Result<Self, GatewayError> {
        let fixtures = match &config.fixtures {
            Some(p) => FixtureCorpus::load(p).map_err(|e| GatewayError::Config(e.to_string()))?,
            None => FixtureCorpus::bundled(),
        };
        let (client, provenance): (Box<dyn LanguageModelClient>, Provenance) = if config.mock_llm
        {
            (Box::new(MockClient::new(fixtures.clone())), Provenance::Mock)
        } else {
            let c = HttpChatClient::new(config.llm.clone())
                .map_err(|e| GatewayError::Config(e.to_string()))?;
            (Box::new(c), Provenance::Llm)
        };
        Self::from_parts(
            config,
            GatewayParts {
                client,
                provenance,
                fixtures,
                clock: Arc::new(SystemClock),
            },
        )
    }

    pub fn from_parts(config: GatewayConfig, parts: GatewayParts) -> Result<Self, GatewayError> {
        config
            .perception
            .validate()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        let map = config.load_map()?;
        let world = World::from_map(&map).map_err(|e| GatewayError::Config(e.to_string()))?;
        let map_name = if crate::simulator::bundled_map(&config.map).is_some() {
            config.map.clone()
        } else {
            PathBuf::from(&config.map)
                .file_stem()
                .map_or_else(|| config.map.clone(), |s| s.to_string_lossy().into_owned())
        };
        let mut exec_config = config.executor.clone();
        if exec_config.snapshot_dir.is_none() {
            exec_config.snapshot_dir = config.data_dir.clone();
        }
        let executor = Executor::new(exec_config, crate::executor::ResponseCatalog::bundled());
        Ok(Self {
            shared: Arc::new(Shared {
                map_name,
                map,
                world,
                executor,
                client: parts.client,
                provenance: parts.provenance,
                fixtures: parts.fixtures,
                profiles: LanguageProfileSet::bundled(),
                lexicons: LexiconSet::bundled(),
                clock: parts.clock,
                sessions: Mutex::new(BTreeMap::new()),
                config,
            }),
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.shared.config
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        Arc::clone(&self.shared.clock)
    }

    pub fn lexicons(&self) -> &LexiconSet {
        &self.shared.lexicons
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, GatewayError> {
        lock(&self.shared.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| GatewayError::SessionUnknown(id.to_string()))
    }

    fn new_runtime(&self, seed: u64) -> RobotRuntime {
        let rig = PerceptionRig::new(
            self.shared.config.perception,
            FrameProvider::Render {
                config: RenderConfig::default(),
                affinity: AffinityTable::bundled(),
                seed,
            },
        );
        RobotRuntime::new(self.shared.world.clone(), rig)
    }

    /// Open a session. With a data directory, an existing log for the same
    /// id is picked up and turn numbering continues after it.
    pub fn create_session(&self, id: Option<&str>) -> Result<SessionView, GatewayError> {
        let id = match id {
            Some(id) => {
                let ok = !id.is_empty()
                    && id.len() <= 64
                    && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
                if !ok {
                    return Err(GatewayError::InvalidSessionId(id.to_string()));
                }
                id.to_string()
            }
            None => format!("s-{:012x}", rand::thread_rng().gen::<u64>() & 0xffff_ffff_ffff),
        };
        let mut sessions = lock(&self.shared.sessions);
        if sessions.contains_key(&id) {
            return Err(GatewayError::SessionExists(id));
        }
        let (log, turn_log) = match &self.shared.config.data_dir {
            Some(dir) => {
                let (log, entries) = SessionLog::open(&dir.join(format!("{id}.jsonl")))?;
                (Some(log), entries)
            }
            None => (None, Vec::new()),
        };
        let next_turn = turn_log.iter().map(|e| e.turn).max().unwrap_or(0) + 1;
        let runtime = self.new_runtime(self.shared.config.seed);
        let language = SessionLanguageState::default();
        let view = SessionView {
            id: id.clone(),
            status: SessionStatus::Idle,
            pose: runtime.sim.state.pose,
            language: language.current.clone(),
            language_source: language.source,
            pending_plan: None,
            action_index: None,
            speed_ceiling: runtime.speed_ceiling,
            turns: turn_log.len(),
            last_seq: 0,
        };
        let session = Arc::new(Session {
            id: id.clone(),
            hub: TelemetryHub::new(&id, self.shared.config.telemetry_history),
            busy: AtomicBool::new(false),
            executing: AtomicBool::new(false),
            abort: AtomicBool::new(false),
            language: Mutex::new(language),
            view: Mutex::new(view.clone()),
            inner: Mutex::new(SessionInner {
                pending: None,
                turn_log,
                runtime,
                next_turn,
                log,
            }),
        });
        sessions.insert(id, session);
        Ok(view)
    }

    pub fn session_ids(&self) -> Vec<String> {
        lock(&self.shared.sessions).keys().cloned().collect()
    }

    pub fn state(&self, id: &str) -> Result<SessionView, GatewayError> {
        let s = self.session(id)?;
        let mut v = lock(&s.view).clone();
        v.last_seq = s.hub.last_seq();
        Ok(v)
    }

    /// Put the robot back at the map start with fresh perception, drop any
    /// pending plan and clear a language override.
    pub fn reset_session(&self, id: &str, seed: u64) -> Result<(), GatewayError> {
        let s = self.session(id)?;
        let _busy = s.claim()?;
        let mut inner = lock(&s.inner);
        inner.runtime = self.new_runtime(seed);
        inner.pending = None;
        *lock(&s.language) = SessionLanguageState::default();
        s.sync_language();
        let (pose, ceiling) = (inner.runtime.sim.state.pose, inner.runtime.speed_ceiling);
        s.update_view(|v| {
            v.status = SessionStatus::Idle;
            v.pose = pose;
            v.pending_plan = None;
            v.action_index = None;
            v.speed_ceiling = ceiling;
        });
        Ok(())
    }

    pub fn turn_log(&self, id: &str) -> Result<Vec<TurnLogEntry>, GatewayError> {
        let s = self.session(id)?;
        let inner = lock(&s.inner);
        Ok(inner.turn_log.clone())
    }

    /// Set (`Some`) or clear (`None`) the session's language override.
    pub fn set_language(&self, id: &str, code: Option<&str>) -> Result<SessionView, GatewayError> {
        let s = self.session(id)?;
        let now = self.shared.clock.now_ms();
        match code.map(str::trim).filter(|c| !c.is_empty()) {
            Some(c) => {
                let tag = LanguageTag::from_override(c)
                    .map_err(|_| GatewayError::InvalidLanguage(c.to_string()))?;
                lock(&s.language).set_override(tag, now);
            }
            None => lock(&s.language).clear_override(),
        }
        s.sync_language();
        s.emit(EventKind::Status, now, None);
        self.state(id)
    }

    /// Ask a running plan to stop. Returns whether anything was running.
    pub fn abort(&self, id: &str) -> Result<bool, GatewayError> {
        let s = self.session(id)?;
        if s.executing.load(Ordering::SeqCst) {
            s.abort.store(true, Ordering::SeqCst);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Retained events after `after` plus a live receiver.
    pub fn subscribe(
        &self,
        id: &str,
        after: u64,
    ) -> Result<(Vec<TelemetryEvent>, Receiver<TelemetryEvent>), GatewayError> {
        Ok(self.session(id)?.hub.subscribe(after))
    }

    /// Heartbeat for every session that is not executing.
    pub fn heartbeat_all(&self) {
        let now = self.shared.clock.now_ms();
        let sessions: Vec<Arc<Session>> = lock(&self.shared.sessions).values().cloned().collect();
        for s in sessions {
            if !s.executing.load(Ordering::SeqCst) {
                s.emit(EventKind::Heartbeat, now, None);
            }
        }
    }

    pub fn heartbeat(&self, id: &str) -> Result<Option<TelemetryEvent>, GatewayError> {
        let s = self.session(id)?;
        if s.executing.load(Ordering::SeqCst) {
            return Ok(None);
        }
        Ok(Some(s.emit(EventKind::Heartbeat, self.shared.clock.now_ms(), None)))
    }

    pub fn maps(&self) -> Vec<NamedMap> {
        let mut out: Vec<NamedMap> = BUNDLED_MAPS
            .iter()
            .filter_map(|(name, _)| {
                crate::simulator::bundled_map(name).map(|map| NamedMap {
                    name: name.to_string(),
                    active: *name == self.shared.map_name,
                    map,
                })
            })
            .collect();
        if !out.iter().any(|m| m.active) {
            out.push(NamedMap {
                name: self.shared.map_name.clone(),
                active: true,
                map: self.shared.map.clone(),
            });
        }
        out
    }

    fn render(&self, lang: &str, key: &str, args: &[(&str, String)]) -> String {
        self.shared.executor.catalog.render(lang, key, args).text
    }

    fn destinations(&self) -> Vec<String> {
        self.shared.map.destinations.keys().cloned().collect()
    }

    /// Interpret `text` and either park the plan for confirmation or run it.
    pub fn submit_command(&self, id: &str, text: &str) -> Result<CommandReply, GatewayError> {
        let s = self.session(id)?;
        let busy = s.claim()?;
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyCommand);
        }
        let sh = &self.shared;
        let t_ins_ms = sh.clock.now_ms();
        let mut inner = lock(&s.inner);

        if let Some(old) = inner.pending.take() {
            let reply = self.render(&old.language.code, "discarded", &[]);
            let entry = old.entry(&s.id, TurnOutcome::Superseded, false, reply, None);
            self.record(&s, &mut inner, entry)?;
            s.update_view(|v| v.pending_plan = None);
        }

        let language = {
            let mut st = lock(&s.language);
            match detect_language(text, &sh.profiles) {
                Ok(tag) => resolve_session_language(&mut st, tag, t_ins_ms),
                Err(_) => match script_fallback(text, &sh.profiles) {
                    Some(tag) => resolve_session_language(&mut st, tag, t_ins_ms),
                    None => st.current.clone(),
                },
            }
        };
        s.sync_language();
        let lang = language.code.clone();

        let instr = Instruction::new(text, language.clone(), t_ins_ms, &s.id)
            .map_err(|_| GatewayError::EmptyCommand)?;
        let pose = inner.runtime.sim.state.pose;
        let prompt = build_system_prompt(
            &RobotContext::at(pose.x, pose.y, pose.theta.to_degrees()),
            &self.destinations(),
            &language,
        )
        .map_err(|e| GatewayError::Engine(e.to_string()))?;
        let interpretation = match interpret(&instr, &prompt, sh.client.as_ref()) {
            Ok(i) => Some(i),
            Err(EngineError::NoFixture { .. }) => None,
            Err(e) => {
                return Err(GatewayError::Llm {
                    retryable: e.is_retryable(),
                    message: e.to_string(),
                })
            }
        };
        let t_res_ms = sh.clock.now_ms();
        let turn = inner.next_turn;
        inner.next_turn += 1;
        let gold = sh
            .fixtures
            .lookup(text, &lang)
            .map(|r| r.gold_actions.clone());

        let mut pending = PendingTurn {
            turn,
            text: text.to_string(),
            language: language.clone(),
            plan: ActionPlan::new(Vec::new(), language.clone(), sh.provenance),
            t_ins_ms,
            t_res_ms,
            gold,
            summary: String::new(),
        };
        let reply_only = |this: &Self,
                          inner: &mut SessionInner,
                          pending: PendingTurn,
                          outcome: TurnOutcome,
                          success: bool,
                          reply: String|
         -> Result<CommandReply, GatewayError> {
            let entry = pending.entry(&s.id, outcome, success, reply.clone(), None);
            this.record(&s, inner, entry)?;
            s.update_view(|v| v.status = SessionStatus::Idle);
            s.emit(EventKind::Message, t_res_ms, Some(reply.clone()));
            Ok(CommandReply {
                session_id: s.id.clone(),
                turn,
                reply_text: reply,
                language: lang.clone(),
                plan: None,
                needs_confirmation: false,
                executing: false,
                status: SessionStatus::Idle,
                trace: None,
            })
        };

        let Some(Interpretation {
            summary,
            plan_lines,
            ..
        }) = interpretation
        else {
            let reply = self.render(&lang, "no_action", &[]);
            return reply_only(self, &mut inner, pending, TurnOutcome::Rejected, false, reply);
        };
        pending.summary = summary.clone();
        let plan = match parse_action_lines(&plan_lines, &language, sh.provenance) {
            Ok(p) => p,
            Err(e) => {
                let reply = self.render(&lang, "failed", &[("detail", e.to_string())]);
                return reply_only(self, &mut inner, pending, TurnOutcome::Rejected, false, reply);
            }
        };
        if plan.actions.is_empty() && plan.unparsed.is_empty() {
            let (reply, ok) = if summary.is_empty() {
                (self.render(&lang, "no_action", &[]), false)
            } else {
                (summary, true)
            };
            return reply_only(self, &mut inner, pending, TurnOutcome::Answered, ok, reply);
        }
        pending.plan = plan.clone();

        if plan.requires_confirmation {
            let reply = join_nonempty(&[&summary, &self.render(&lang, "confirm_request", &[])]);
            inner.pending = Some(pending);
            s.update_view(|v| {
                v.status = SessionStatus::AwaitingConfirmation;
                v.pending_plan = Some(plan.clone());
            });
            s.emit(EventKind::Message, t_res_ms, Some(reply.clone()));
            return Ok(CommandReply {
                session_id: s.id.clone(),
                turn,
                reply_text: reply,
                language: lang,
                plan: Some(plan),
                needs_confirmation: true,
                executing: false,
                status: SessionStatus::AwaitingConfirmation,
                trace: None,
            });
        }

        let started = self.start(&s, inner, busy, pending, false)?;
        Ok(CommandReply {
            session_id: s.id.clone(),
            turn,
            reply_text: started.reply,
            language: lang,
            plan: Some(plan),
            needs_confirmation: false,
            executing: started.trace.is_none(),
            status: started.status,
            trace: started.trace,
        })
    }

    /// Resolve the pending plan with the user's reply.
    pub fn confirm(&self, id: &str, reply_text: &str) -> Result<ConfirmReply, GatewayError> {
        let s = self.session(id)?;
        let busy = s.claim()?;
        let mut inner = lock(&s.inner);
        if inner.pending.is_none() {
            return Err(GatewayError::NoPendingPlan);
        }
        let language = s.current_language();
        let lang = language.code.clone();
        let now = self.shared.clock.now_ms();
        match classify_confirmation(reply_text, &language, &self.shared.lexicons) {
            Ok(d) if d.value == 1 => {
                let pending = inner.pending.take().expect("checked above");
                s.update_view(|v| v.pending_plan = None);
                let started = self.start(&s, inner, busy, pending, true)?;
                Ok(ConfirmReply {
                    executed: true,
                    decision: Some(1),
                    pending: false,
                    reply_text: started.reply,
                    language: lang,
                    status: started.status,
                    trace: started.trace,
                })
            }
            Ok(_) => {
                let pending = inner.pending.take().expect("checked above");
                let pose = inner.runtime.sim.state.pose;
                let trace = discarded_trace(&pending.plan, pose, now);
                let reply = self.render(&lang, "discarded", &[]);
                let entry =
                    pending.entry(&s.id, TurnOutcome::Discarded, false, reply.clone(), Some(&trace));
                self.record(&s, &mut inner, entry)?;
                s.update_view(|v| {
                    v.pending_plan = None;
                    v.status = SessionStatus::Idle;
                });
                s.emit(EventKind::Message, now, Some(reply.clone()));
                Ok(ConfirmReply {
                    executed: false,
                    decision: Some(0),
                    pending: false,
                    reply_text: reply,
                    language: lang,
                    status: SessionStatus::Idle,
                    trace: Some(trace),
                })
            }
            Err(EngineError::Indeterminate) => {
                let reply = self.render(&lang, "reprompt", &[]);
                s.emit(EventKind::Message, now, Some(reply.clone()));
                Ok(ConfirmReply {
                    executed: false,
                    decision: None,
                    pending: true,
                    reply_text: reply,
                    language: lang,
                    status: SessionStatus::AwaitingConfirmation,
                    trace: None,
                })
            }
            Err(e) => Err(GatewayError::Engine(e.to_string())),
        }
    }

    fn record(
        &self,
        s: &Session,
        inner: &mut SessionInner,
        entry: TurnLogEntry,
    ) -> Result<(), GatewayError> {
        if let Some(log) = &mut inner.log {
            log.append(&entry)?;
        }
        inner.turn_log.push(entry);
        let n = inner.turn_log.len();
        s.update_view(|v| v.turns = n);
        Ok(())
    }

    /// Run the plan now, or on a worker thread when execution is paced and
    /// the plan moves the robot.
    fn start(
        &self,
        s: &Arc<Session>,
        mut inner: MutexGuard<'_, SessionInner>,
        busy: BusyGuard,
        pending: PendingTurn,
        approved: bool,
    ) -> Result<Started, GatewayError> {
        let paced = self.shared.config.realtime_factor > 0.0;
        let lang = pending.language.code.clone();
        s.abort.store(false, Ordering::SeqCst);
        s.executing.store(true, Ordering::SeqCst);
        s.update_view(|v| v.status = SessionStatus::Executing);
        let now = self.shared.clock.now_ms();
        let opening = join_nonempty(&[&pending.summary, &self.render(&lang, "executing", &[])]);
        s.emit(EventKind::Status, now, Some(opening.clone()));

        if paced && pending.plan.motion_count() > 0 {
            drop(inner);
            let this = self.clone();
            let session = Arc::clone(s);
            std::thread::spawn(move || {
                let _busy = busy;
                let mut inner = lock(&session.inner);
                if let Err(e) = this.execute(&session, &mut inner, pending, approved) {
                    tracing::error!("session {}: {e}", session.id);
                }
            });
            return Ok(Started {
                reply: opening,
                status: SessionStatus::Executing,
                trace: None,
            });
        }
        let (trace, reply, status) = self.execute(s, &mut inner, pending, approved)?;
        drop(busy);
        Ok(Started {
            reply,
            status,
            trace: Some(trace),
        })
    }

    fn execute(
        &self,
        s: &Session,
        inner: &mut SessionInner,
        pending: PendingTurn,
        approved: bool,
    ) -> Result<(ExecutionTrace, String, SessionStatus), GatewayError> {
        let sh = &self.shared;
        let lang = pending.language.code.clone();
        let info = TurnInfo {
            session_id: s.id.clone(),
            turn: pending.turn,
            language: lang.clone(),
            base_ms: sh.clock.now_ms(),
        };
        let mut observer = TelemetryObserver {
            session: s,
            realtime_factor: sh.config.realtime_factor,
            base_ms: info.base_ms,
            wall_start: Instant::now(),
        };
        let result = sh.executor.execute_plan(
            &pending.plan,
            approved,
            &mut inner.runtime,
            &info,
            &s.abort,
            &mut observer,
        );
        s.executing.store(false, Ordering::SeqCst);
        let trace = match result {
            Ok(t) => t,
            Err(e) => {
                s.update_view(|v| v.status = SessionStatus::Failed);
                s.emit(EventKind::Status, sh.clock.now_ms(), Some(e.to_string()));
                return Err(GatewayError::Exec(e.to_string()));
            }
        };
        let end_ms = trace
            .per_action
            .iter()
            .map(|a| a.ended_at_ms)
            .max()
            .unwrap_or(info.base_ms);
        sh.clock.settle(end_ms);

        let status = if trace.aborted() {
            SessionStatus::Aborted
        } else if trace.s_n == 1 {
            SessionStatus::Completed
        } else {
            SessionStatus::Failed
        };
        let mut parts: Vec<String> = trace
            .per_action
            .iter()
            .filter_map(|a| a.response.as_ref().map(|r| r.text.text.clone()))
            .collect();
        let closing = match status {
            SessionStatus::Aborted => Some(self.render(&lang, "aborted", &[])),
            SessionStatus::Failed => {
                let detail = trace
                    .per_action
                    .iter()
                    .find(|a| a.status == ExecStatus::Failed)
                    .map_or_else(String::new, |a| a.detail.clone());
                Some(self.render(&lang, "failed", &[("detail", detail)]))
            }
            _ if pending.plan.motion_count() > 0 || parts.is_empty() => {
                Some(self.render(&lang, "done", &[]))
            }
            _ => None,
        };
        parts.extend(closing);
        let reply = parts.join("\n");

        let entry = pending.entry(
            &s.id,
            TurnOutcome::Executed,
            trace.s_n == 1,
            reply.clone(),
            Some(&trace),
        );
        self.record(s, inner, entry)?;
        let (pose, ceiling) = (inner.runtime.sim.state.pose, inner.runtime.speed_ceiling);
        s.update_view(|v| {
            v.status = status;
            v.pose = pose;
            v.action_index = None;
            v.speed_ceiling = ceiling;
        });
        s.emit(EventKind::Status, end_ms, Some(reply.clone()));
        Ok((trace, reply, status))
    }
}

struct Started {
    reply: String,
    status: SessionStatus,
    trace: Option<ExecutionTrace>,
}

fn join_nonempty(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Publishes a pose event per simulator tick and, when paced, holds each
/// tick back until its wall-clock time.
struct TelemetryObserver<'a> {
    session: &'a Session,
    realtime_factor: f64,
    base_ms: u64,
    wall_start: Instant,
}

impl ExecutionObserver for TelemetryObserver<'_> {
    fn on_tick(&mut self, tick: &Tick, _sim: &Simulation) {
        self.session.update_view(|v| {
            v.pose = tick.pose;
            v.action_index = Some(tick.action_index);
        });
        self.session.emit(EventKind::Pose, tick.at_ms, None);
        if self.realtime_factor > 0.0 {
            let sim_s = tick.at_ms.saturating_sub(self.base_ms) as f64 / 1000.0;
            let due = Duration::from_secs_f64(sim_s / self.realtime_factor);
            let elapsed = self.wall_start.elapsed();
            if due > elapsed {
                std::thread::sleep(due - elapsed);
            }
        }
    }

    fn on_action_start(&mut self, index: usize, _primitive: &ActionPrimitive, at_ms: u64) {
        self.session.update_view(|v| v.action_index = Some(index));
        self.session.emit(EventKind::ActionStarted, at_ms, None);
    }

    fn on_action_end(&mut self, outcome: &ActionOutcome) {
        let message = outcome.response.as_ref().map(|r| r.text.text.clone());
        self.session
            .emit(EventKind::ActionFinished, outcome.ended_at_ms, message);
    }
}
