use std::collections::VecDeque;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::simulator::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Idle,
    AwaitingConfirmation,
    Executing,
    Completed,
    Failed,
    Aborted,
}

impl SessionStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            SessionStatus::Completed | SessionStatus::Failed | SessionStatus::Aborted
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Heartbeat,
    Pose,
    ActionStarted,
    ActionFinished,
    Status,
    Message,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryEvent {
    pub seq: u64,
    pub session_id: String,
    pub kind: EventKind,
    pub at_ms: u64,
    pub status: SessionStatus,
    pub pose: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_index: Option<usize>,
    /// Session language when the event was emitted.
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Event fields before a sequence number is assigned.
#[derive(Debug, Clone)]
pub struct EventDraft {
    pub kind: EventKind,
    pub at_ms: u64,
    pub status: SessionStatus,
    pub pose: Pose,
    pub action_index: Option<usize>,
    pub language: String,
    pub message: Option<String>,
}

struct HubState {
    next_seq: u64,
    history: VecDeque<TelemetryEvent>,
    subscribers: Vec<Sender<TelemetryEvent>>,
}

/// Per-session event fan-out. Sequence numbers start at 1 and are assigned
/// under one lock, so every subscriber sees the same gap-free order.
pub struct TelemetryHub {
    session_id: String,
    capacity: usize,
    state: Mutex<HubState>,
}

impl TelemetryHub {
    pub fn new(session_id: &str, capacity: usize) -> Self {
        Self {
            session_id: session_id.to_string(),
            capacity: capacity.max(1),
            state: Mutex::new(HubState {
                next_seq: 1,
                history: VecDeque::new(),
                subscribers: Vec::new(),
            }),
        }
    }

    pub fn publish(&self, draft: EventDraft) -> TelemetryEvent {
        let mut st = self.state.lock().expect("telemetry lock");
        let event = TelemetryEvent {
            seq: st.next_seq,
            session_id: self.session_id.clone(),
            kind: draft.kind,
            at_ms: draft.at_ms,
            status: draft.status,
            pose: draft.pose,
            action_index: draft.action_index,
            language: draft.language,
            message: draft.message,
        };
        st.next_seq += 1;
        if st.history.len() == self.capacity {
            st.history.pop_front();
        }
        st.history.push_back(event.clone());
        st.subscribers.retain(|tx| tx.send(event.clone()).is_ok());
        event
    }

    /// Retained events with `seq > after`, plus a receiver for everything
    /// published from now on. Nothing falls between the two.
    pub fn subscribe(&self, after: u64) -> (Vec<TelemetryEvent>, Receiver<TelemetryEvent>) {
        let mut st = self.state.lock().expect("telemetry lock");
        let backlog = st.history.iter().filter(|e| e.seq > after).cloned().collect();
        let (tx, rx) = channel();
        st.subscribers.push(tx);
        (backlog, rx)
    }

    pub fn last_seq(&self) -> u64 {
        self.state.lock().expect("telemetry lock").next_seq - 1
    }

    pub fn history(&self) -> Vec<TelemetryEvent> {
        self.state
            .lock()
            .expect("telemetry lock")
            .history
            .iter()
            .cloned()
            .collect()
    }
}
