use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::executor::ExecStatus;
use crate::metrics::InteractionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnOutcome {
    /// The plan ran (possibly failing or aborted part way).
    Executed,
    /// No actions; the reply alone answered the user.
    Answered,
    /// The user declined the pending plan.
    Discarded,
    /// A new command arrived while the plan was still pending.
    Superseded,
    /// The reply could not be turned into a plan.
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldSource {
    /// Gold actions come from the fixture corpus.
    Fixture,
    /// No reference was available; `gold_actions` is empty.
    #[default]
    None,
}

/// One line of a session log. The interaction fields sit at the top level so
/// the file also reads as a plain interaction log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnLogEntry {
    #[serde(flatten)]
    pub record: InteractionRecord,
    pub session_id: String,
    pub turn: u64,
    pub outcome: TurnOutcome,
    pub reply: String,
    #[serde(default)]
    pub gold_source: GoldSource,
    #[serde(default)]
    pub statuses: Vec<ExecStatus>,
    #[serde(default)]
    pub snapshots: Vec<String>,
}

/// Append-only JSONL file, synced after every line.
#[derive(Debug)]
pub struct SessionLog {
    path: PathBuf,
    file: File,
}

impl SessionLog {
    /// Open or create the log at `path` and return the entries already in
    /// it. A torn last line (no newline, or not valid JSON) is cut off.
    pub fn open(path: &Path) -> Result<(Self, Vec<TurnLogEntry>), GatewayError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err)?;
        }
        let contents = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(e)),
        };
        let mut entries = Vec::new();
        let mut good = 0usize;
        let mut start = 0usize;
        while let Some(nl) = contents[start..].iter().position(|&b| b == b'\n') {
            let line = &contents[start..start + nl];
            let end = start + nl + 1;
            if line.iter().all(u8::is_ascii_whitespace) {
                good = end;
            } else {
                match serde_json::from_slice::<TurnLogEntry>(line) {
                    Ok(e) => {
                        entries.push(e);
                        good = end;
                    }
                    Err(e) => {
                        if contents[end..].iter().all(u8::is_ascii_whitespace) {
                            tracing::warn!("dropping torn log line in {}: {e}", path.display());
                            break;
                        }
                        return Err(GatewayError::CorruptLog {
                            path: path.display().to_string(),
                            reason: e.to_string(),
                        });
                    }
                }
            }
            start = end;
        }
        if good < contents.len() {
            let f = OpenOptions::new().write(true).open(path).map_err(io_err)?;
            f.set_len(good as u64).map_err(io_err)?;
            f.sync_all().map_err(io_err)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
            },
            entries,
        ))
    }

    pub fn append(&mut self, entry: &TurnLogEntry) -> Result<(), GatewayError> {
        let mut line = serde_json::to_vec(entry).map_err(|e| GatewayError::Io(e.to_string()))?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(io_err)?;
        self.file.sync_data().map_err(io_err)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

fn io_err(e: std::io::Error) -> GatewayError {
    GatewayError::Io(e.to_string())
}
