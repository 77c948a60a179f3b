//! Line-delimited match logs.
//!
//! Every line is `<digest> <json>`. The first entry is the header, then one
//! entry per step, then the report. Digests are chained: the header's is the
//! SHA-256 of its JSON, each later one hashes the previous digest followed by
//! the line's JSON. A changed byte anywhere breaks the chain from that line on.

use std::io::{self, Write};

use gridcoop_core::sim::{MatchConfig, MatchReport, StepRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FORMAT: &str = "gridcoop-log/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub config_hash: String,
    pub config: MatchConfig,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Entry {
    Header(Header),
    Step(StepRecord),
    Report(MatchReport),
}

pub fn config_hash(config: &MatchConfig) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(config).expect("config serializes")))
}

fn chain(prev: Option<&[u8; 32]>, json: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    if let Some(p) = prev {
        h.update(p);
    }
    h.update(json);
    h.finalize().into()
}

pub struct LogWriter<W: Write> {
    out: W,
    last: [u8; 32],
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut out: W, config: &MatchConfig) -> io::Result<Self> {
        let header = Entry::Header(Header { format: FORMAT.into(), config_hash: config_hash(config), config: config.clone() });
        let json = serde_json::to_vec(&header).map_err(io::Error::other)?;
        let last = chain(None, &json);
        write_line(&mut out, &last, &json)?;
        Ok(LogWriter { out, last })
    }

    fn entry(&mut self, e: &Entry) -> io::Result<()> {
        let json = serde_json::to_vec(e).map_err(io::Error::other)?;
        self.last = chain(Some(&self.last), &json);
        write_line(&mut self.out, &self.last, &json)
    }

    pub fn step(&mut self, rec: &StepRecord) -> io::Result<()> {
        self.entry(&Entry::Step(rec.clone()))
    }

    /// Writes the report and returns the sink with the final digest.
    pub fn finish(mut self, report: &MatchReport) -> io::Result<(W, String)> {
        self.entry(&Entry::Report(report.clone()))?;
        self.out.flush()?;
        Ok((self.out, hex::encode(self.last)))
    }
}

fn write_line(out: &mut impl Write, digest: &[u8; 32], json: &[u8]) -> io::Result<()> {
    out.write_all(hex::encode(digest).as_bytes())?;
    out.write_all(b" ")?;
    out.write_all(json)?;
    out.write_all(b"\n")
}

/// Whole log in memory.
pub fn write_log(config: &MatchConfig, records: &[StepRecord], report: &MatchReport) -> (Vec<u8>, String) {
    let mut w = LogWriter::new(Vec::new(), config).expect("in-memory write");
    for r in records {
        w.step(r).expect("in-memory write");
    }
    w.finish(report).expect("in-memory write")
}

/// Final chain digest of the log a run would write.
pub fn log_digest(config: &MatchConfig, records: &[StepRecord], report: &MatchReport) -> String {
    write_log(config, records, report).1
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LogError {
    #[error("line {line}: checksum mismatch (last valid step {})", show(.last_valid_step))]
    Checksum { line: usize, last_valid_step: Option<u64> },
    #[error("line {line}: {detail} (last valid step {})", show(.last_valid_step))]
    Malformed { line: usize, last_valid_step: Option<u64>, detail: String },
    #[error("log ends without a report (last valid step {})", show(.last_valid_step))]
    Truncated { last_valid_step: Option<u64> },
    #[error("unsupported log format {0:?}")]
    Format(String),
    #[error("header config hash does not match its config")]
    ConfigHash,
}

fn show(s: &Option<u64>) -> String {
    s.map_or_else(|| "none".into(), |s| s.to_string())
}

impl LogError {
    pub fn last_valid_step(&self) -> Option<u64> {
        match self {
            LogError::Checksum { last_valid_step, .. }
            | LogError::Malformed { last_valid_step, .. }
            | LogError::Truncated { last_valid_step } => *last_valid_step,
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchLog {
    pub header: Header,
    pub records: Vec<StepRecord>,
    pub report: MatchReport,
    pub digest: String,
}

/// Parses and verifies a log. Checksums are checked before any JSON is read.
pub fn read_log(bytes: &[u8]) -> Result<MatchLog, LogError> {
    let mut header: Option<Header> = None;
    let mut records: Vec<StepRecord> = Vec::new();
    let mut report = None;
    let mut last: Option<[u8; 32]> = None;
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    for (i, line) in body.split(|b| *b == b'\n').enumerate() {
        let n = i + 1;
        let last_valid_step = records.last().map(|r| r.step);
        let malformed = |detail: String| LogError::Malformed { line: n, last_valid_step, detail };
        if report.is_some() {
            return Err(malformed("data after the report".into()));
        }
        let sep = line.iter().position(|b| *b == b' ');
        let (digest, json) = match sep {
            Some(k) => (&line[..k], &line[k + 1..]),
            None => return Err(LogError::Checksum { line: n, last_valid_step }),
        };
        let expect = chain(last.as_ref(), json);
        if digest != hex::encode(expect).as_bytes() {
            return Err(LogError::Checksum { line: n, last_valid_step });
        }
        last = Some(expect);
        let entry: Entry = serde_json::from_slice(json).map_err(|e| malformed(e.to_string()))?;
        match (entry, &header) {
            (Entry::Header(h), None) => {
                if h.format != FORMAT {
                    return Err(LogError::Format(h.format));
                }
                if h.config_hash != config_hash(&h.config) {
                    return Err(LogError::ConfigHash);
                }
                header = Some(h);
            }
            (_, None) => return Err(malformed("expected the header".into())),
            (Entry::Header(_), Some(_)) => return Err(malformed("second header".into())),
            (Entry::Step(r), Some(_)) => {
                let expected = records.len() as u64;
                if r.step != expected {
                    return Err(malformed(format!("step {} where {expected} was expected", r.step)));
                }
                records.push(r);
            }
            (Entry::Report(r), Some(_)) => report = Some(r),
        }
    }
    let last_valid_step = records.last().map(|r| r.step);
    match (header, report) {
        (Some(header), Some(report)) => {
            Ok(MatchLog { header, records, report, digest: hex::encode(last.expect("header read")) })
        }
        _ => Err(LogError::Truncated { last_valid_step }),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("recomputed report differs from the recorded one")]
    Mismatch { recorded: Box<MatchReport>, recomputed: Box<MatchReport> },
}

/// Recomputes the report from the log's step records and compares it with
/// the recorded one.
pub fn replay(bytes: &[u8]) -> Result<MatchReport, ReplayError> {
    let log = read_log(bytes)?;
    let recomputed = MatchReport::from_records(&log.records);
    if recomputed != log.report {
        return Err(ReplayError::Mismatch { recorded: Box::new(log.report), recomputed: Box::new(recomputed) });
    }
    Ok(recomputed)
}
