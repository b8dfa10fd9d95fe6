//! The append-only event log.
//!
//! Every line is `{"crc32":"<8 hex>","event":{...}}` with the checksum taken
//! over the exact bytes of the `event` value. On resume the existing lines
//! become a replay queue: each event the driver emits must equal the next
//! logged one byte for byte, and only once the queue is drained does the log
//! start appending.

use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::lr_schedules::RoundBoundary;
use crate::schedulers::ScheduleMode;
use crate::search_space::Config;
use crate::trainers::EpochReport;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    ExperimentStarted {
        format: u32,
        budget: u64,
        config: ExperimentConfig,
    },
    RepetitionStarted {
        repetition: usize,
        seed: u64,
    },
    GenerationStarted {
        repetition: usize,
        generation: usize,
        s_min: u32,
        mode: ScheduleMode,
        rounds: Vec<RoundBoundary>,
        budget: u64,
        n: usize,
    },
    TrialCreated {
        repetition: usize,
        generation: usize,
        trial_id: u64,
        config: Config,
        tpe_score: Option<f64>,
    },
    RoundStarted {
        repetition: usize,
        generation: usize,
        round: usize,
        s: u32,
        e_start: usize,
        e_end: usize,
        trials: Vec<u64>,
    },
    TrialRoundCompleted {
        repetition: usize,
        generation: usize,
        round: usize,
        trial_id: u64,
        reports: Vec<EpochReport>,
        epochs_billed: u64,
        consumed_after: u64,
        checkpoint: String,
        checkpoint_crc32: String,
    },
    Promotion {
        repetition: usize,
        generation: usize,
        round: usize,
        promoted: Vec<u64>,
        stopped: Vec<u64>,
    },
    GenerationFinished {
        repetition: usize,
        generation: usize,
        best_trial: u64,
        best_metric: f64,
        consumed: u64,
    },
    RepetitionFinished {
        repetition: usize,
        best_trial: u64,
        best_metric: f64,
        best_config: Config,
        consumed: u64,
    },
    ExperimentFinished {
        best_metrics: Vec<f64>,
        mean_best: f64,
        ci_half_width: Option<f64>,
    },
}

#[derive(Deserialize)]
struct Line<'a> {
    crc32: String,
    #[serde(borrow)]
    event: &'a RawValue,
}

pub fn crc_hex(bytes: &[u8]) -> String {
    format!("{:08x}", crc32fast::hash(bytes))
}

pub fn encode_line(event_json: &str) -> String {
    format!("{{\"crc32\":\"{}\",\"event\":{}}}\n", crc_hex(event_json.as_bytes()), event_json)
}

/// Verifies one log line and returns the raw event JSON.
pub fn decode_line(line: &str, lineno: usize) -> Result<String> {
    let parsed: Line = serde_json::from_str(line)
        .map_err(|e| Error::EventLog(format!("line {lineno} is not a log record: {e}")))?;
    let raw = parsed.event.get();
    let actual = crc_hex(raw.as_bytes());
    if actual != parsed.crc32 {
        return Err(Error::EventLog(format!(
            "line {lineno}: checksum mismatch (stored {}, computed {actual})",
            parsed.crc32
        )));
    }
    Ok(raw.to_string())
}

enum Sink {
    Discard,
    Memory(Vec<String>),
    File(File),
}

pub struct EventLog {
    sink: Sink,
    pending: VecDeque<String>,
    replayed: usize,
}

impl EventLog {
    pub fn discard() -> Self {
        Self::with_sink(Sink::Discard)
    }

    pub fn memory() -> Self {
        Self::with_sink(Sink::Memory(Vec::new()))
    }

    /// Starts a fresh log at `path`, refusing to clobber an existing one.
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().write(true).create_new(true).open(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::Config(format!("{} already exists; resume it or pick a new output", path.display()))
            } else {
                e.into()
            }
        })?;
        Ok(Self::with_sink(Sink::File(file)))
    }

    /// Opens an existing log for replay followed by appends. A torn final
    /// line (no trailing newline) is dropped; any other damage is an error.
    pub fn open_for_resume(path: &Path) -> Result<Self> {
        let mut text = String::new();
        File::open(path)
            .map_err(|e| Error::EventLog(format!("cannot open {}: {e}", path.display())))?
            .read_to_string(&mut text)?;
        let complete = match text.rfind('\n') {
            Some(i) => i + 1,
            None => 0,
        };
        if complete < text.len() {
            log::warn!("dropping torn final line of {}", path.display());
        }
        let mut pending = VecDeque::new();
        for (i, line) in text[..complete].lines().enumerate() {
            pending.push_back(decode_line(line, i + 1)?);
        }
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(complete as u64)?;
        let mut file = OpenOptions::new().append(true).open(path)?;
        file.flush()?;
        Ok(EventLog {
            sink: Sink::File(file),
            pending,
            replayed: 0,
        })
    }

    fn with_sink(sink: Sink) -> Self {
        EventLog {
            sink,
            pending: VecDeque::new(),
            replayed: 0,
        }
    }

    pub fn is_replaying(&self) -> bool {
        !self.pending.is_empty()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Parses the `i`-th pending (not yet replayed) event.
    pub fn peek(&self, i: usize) -> Option<Result<Event>> {
        self.pending
            .get(i)
            .map(|raw| serde_json::from_str(raw).map_err(Error::from))
    }

    pub fn first_event(&self) -> Result<Event> {
        self.peek(0)
            .unwrap_or_else(|| Err(Error::EventLog("log is empty".into())))
    }

    pub fn emit(&mut self, event: &Event) -> Result<()> {
        if matches!(self.sink, Sink::Discard) && self.pending.is_empty() {
            return Ok(());
        }
        let json = serde_json::to_string(event)?;
        if let Some(expected) = self.pending.pop_front() {
            self.replayed += 1;
            if expected != json {
                return Err(Error::EventLog(format!(
                    "replay diverged at line {}:\n  logged:  {expected}\n  emitted: {json}",
                    self.replayed
                )));
            }
            return Ok(());
        }
        let line = encode_line(&json);
        match &mut self.sink {
            Sink::Discard => {}
            Sink::Memory(lines) => lines.push(line),
            Sink::File(f) => {
                f.write_all(line.as_bytes())?;
                f.flush()?;
            }
        }
        Ok(())
    }

    /// Lines held by a memory sink.
    pub fn lines(&self) -> &[String] {
        match &self.sink {
            Sink::Memory(lines) => lines,
            _ => &[],
        }
    }

    pub fn sync(&mut self) -> Result<()> {
        if let Sink::File(f) = &mut self.sink {
            f.sync_data()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_round_trip_and_tamper() {
        let ev = Event::RepetitionStarted { repetition: 0, seed: 3 };
        let json = serde_json::to_string(&ev).unwrap();
        let line = encode_line(&json);
        assert_eq!(decode_line(line.trim_end(), 1).unwrap(), json);
        let tampered = line.replace("\"seed\":3", "\"seed\":4");
        assert!(matches!(decode_line(tampered.trim_end(), 1), Err(Error::EventLog(m)) if m.contains("checksum")));
    }

    #[test]
    fn replay_then_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let a = Event::RepetitionStarted { repetition: 0, seed: 1 };
        let b = Event::RepetitionStarted { repetition: 1, seed: 2 };
        {
            let mut log = EventLog::create(&path).unwrap();
            log.emit(&a).unwrap();
        }
        assert!(EventLog::create(&path).is_err());
        let mut log = EventLog::open_for_resume(&path).unwrap();
        assert!(log.is_replaying());
        assert_eq!(log.first_event().unwrap(), a);
        log.emit(&a).unwrap();
        assert!(!log.is_replaying());
        log.emit(&b).unwrap();
        drop(log);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);

        let mut log = EventLog::open_for_resume(&path).unwrap();
        assert!(log.emit(&b).is_err());
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let json = serde_json::to_string(&Event::RepetitionStarted { repetition: 0, seed: 1 }).unwrap();
        let mut text = encode_line(&json);
        text.push_str("{\"crc32\":\"00");
        std::fs::write(&path, &text).unwrap();
        let log = EventLog::open_for_resume(&path).unwrap();
        assert_eq!(log.pending_len(), 1);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), encode_line(&json));
    }
}
