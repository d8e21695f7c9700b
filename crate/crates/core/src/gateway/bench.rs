use std::sync::Arc;
use std::time::Instant;

use super::{Clock, Gateway, GatewayConfig, GatewayError, GatewayParts, TurnLogEntry, VirtualClock};
use crate::engine::{
    ChatRequest, EngineError, FixtureCorpus, Instruction, LanguageModelClient, MockClient,
    Provenance,
};
use crate::metrics::{build_report, InteractionRecord, IpaParams, MetricsReport, TokenF1Scorer};

/// Wraps a client and lets `latency_ms` pass on the clock before each
/// answer. On a virtual clock this costs no wall time.
pub struct LatencyClient {
    pub inner: Box<dyn LanguageModelClient>,
    pub clock: Arc<dyn Clock>,
    pub latency_ms: u64,
}

impl LanguageModelClient for LatencyClient {
    fn complete(&self, instr: &Instruction, request: &ChatRequest) -> Result<String, EngineError> {
        self.clock.sleep_ms(self.latency_ms);
        self.inner.complete(instr, request)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub session_id: String,
    /// Virtual time between the starts of consecutive instructions.
    pub spacing_ms: u64,
    /// Simulated model latency per instruction.
    pub latency_ms: u64,
    /// Stop after this many new instructions (simulates an interruption).
    pub stop_after: Option<usize>,
    /// Wall-clock pause after each instruction.
    pub pace_ms: u64,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            session_id: "bench".into(),
            spacing_ms: 300_000,
            latency_ms: 0,
            stop_after: None,
            pace_ms: 0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchSummary {
    pub total: usize,
    /// Instructions already in the log when the run started.
    pub resumed: usize,
    /// Instructions processed by this run.
    pub ran: usize,
    pub entries: Vec<TurnLogEntry>,
    /// Present once every instruction has a log entry.
    pub report: Option<MetricsReport>,
    pub elapsed_s: f64,
}

impl BenchSummary {
    pub fn complete(&self) -> bool {
        self.entries.len() == self.total
    }
}

/// Replay a fixture corpus through the full session pipeline with the mock
/// model and a virtual clock. Each instruction starts from the map start
/// pose at `index * spacing_ms`, so the log does not depend on how often the
/// run was interrupted: with a data directory, entries already logged are
/// skipped and the run continues after them.
pub fn run_bench(
    config: GatewayConfig,
    corpus: &FixtureCorpus,
    opts: &BenchOptions,
) -> Result<BenchSummary, GatewayError> {
    let wall = Instant::now();
    let clock = Arc::new(VirtualClock::new(0));
    let config = GatewayConfig {
        mock_llm: true,
        realtime_factor: 0.0,
        ..config
    };
    let client = LatencyClient {
        inner: Box::new(MockClient::new(corpus.clone())),
        clock: clock.clone(),
        latency_ms: opts.latency_ms,
    };
    let gw = Gateway::from_parts(
        config,
        GatewayParts {
            client: Box::new(client),
            provenance: Provenance::Mock,
            fixtures: corpus.clone(),
            clock: clock.clone(),
        },
    )?;
    let id = opts.session_id.as_str();
    gw.create_session(Some(id))?;
    let records = corpus.records();
    let done = gw.turn_log(id)?;
    if done.len() > records.len() {
        return Err(GatewayError::Bench(format!(
            "log has {} entries but the corpus only {}",
            done.len(),
            records.len()
        )));
    }
    for (k, (e, r)) in done.iter().zip(records).enumerate() {
        if e.record.text != r.text {
            return Err(GatewayError::Bench(format!(
                "log entry {} is {:?}, corpus has {:?}",
                k + 1,
                e.record.text,
                r.text
            )));
        }
    }
    let resumed = done.len();
    let mut ran = 0;
    for (i, r) in records.iter().enumerate().skip(resumed) {
        if opts.stop_after.is_some_and(|n| ran >= n) {
            break;
        }
        gw.reset_session(id, opts.seed.wrapping_add(i as u64))?;
        clock.set(i as u64 * opts.spacing_ms);
        let reply = gw.submit_command(id, &r.text)?;
        if reply.needs_confirmation {
            let yes = gw
                .lexicons()
                .get(&reply.language)
                .or_else(|| gw.lexicons().english())
                .map(|l| l.canonical_positive().to_string())
                .unwrap_or_else(|| "yes".into());
            gw.confirm(id, &yes)?;
        }
        ran += 1;
        if opts.pace_ms > 0 {
            std::thread::sleep(std::time::Duration::from_millis(opts.pace_ms));
        }
    }
    let entries = gw.turn_log(id)?;
    let report = if entries.len() == records.len() && !entries.is_empty() {
        let recs: Vec<InteractionRecord> = entries.iter().map(|e| e.record.clone()).collect();
        Some(
            build_report(&recs, &TokenF1Scorer, &IpaParams::default())
                .map_err(|e| GatewayError::Bench(e.to_string()))?,
        )
    } else {
        None
    };
    Ok(BenchSummary {
        total: records.len(),
        resumed,
        ran,
        entries,
        report,
        elapsed_s: wall.elapsed().as_secs_f64(),
    })
}
