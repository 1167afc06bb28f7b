//! Run and ground-truth persistence.
//!
//! Both files are line-delimited canonical JSON: a header line carrying the
//! schema version, then one line per frame.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::policy::PolicyKind;
use crate::scenario::{GroundTruth, GtFrame, GtHeader};
use crate::tracker::FrameResult;

/// Major.minor version of the run and ground-truth file schemas.
pub const SCHEMA_VERSION: &str = "1.0";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported schema version {found} (this build reads {SCHEMA_VERSION})")]
    SchemaVersionMismatch { found: String },
    #[error("corrupt line {line}: {reason}")]
    CorruptLine { line: usize, reason: String },
    #[error("serialization failed: {0}")]
    Encode(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config_digest: String,
    pub scenario_seed: u64,
    pub policy: PolicyKind,
    pub tool_version: String,
    /// RFC 3339 UTC timestamp; the only non-deterministic field of a run file.
    pub created_at: String,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            config_digest: String::new(),
            scenario_seed: 0,
            policy: PolicyKind::Decoupled,
            tool_version: TOOL_VERSION.to_string(),
            created_at: "1970-01-01T00:00:00Z".to_string(),
        }
    }
}

impl RunManifest {
    pub fn now(config_digest: String, scenario_seed: u64, policy: PolicyKind) -> Self {
        RunManifest {
            config_digest,
            scenario_seed,
            policy,
            tool_version: TOOL_VERSION.to_string(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }
}

/// Full trace of one tracking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub manifest: RunManifest,
    pub frames: Vec<FrameResult>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunHeader {
    schema_version: String,
    manifest: RunManifest,
}

pub fn write_run(record: &RunRecord, path: &Path) -> Result<(), RecordError> {
    let file = BufWriter::new(File::create(path)?);
    write_run_to(record, file)
}

pub fn write_run_to<W: Write>(record: &RunRecord, mut out: W) -> Result<(), RecordError> {
    let header = RunHeader {
        schema_version: SCHEMA_VERSION.to_string(),
        manifest: record.manifest.clone(),
    };
    writeln!(out, "{}", canonical::to_line(&header)?)?;
    for frame in &record.frames {
        writeln!(out, "{}", canonical::to_line(frame)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_run(path: &Path) -> Result<RunRecord, RecordError> {
    read_run_from(BufReader::new(File::open(path)?))
}

pub fn read_run_from<R: BufRead>(input: R) -> Result<RunRecord, RecordError> {
    let (header, frames): (RunHeader, Vec<FrameResult>) = read_lines(input)?;
    Ok(RunRecord {
        manifest: header.manifest,
        frames,
    })
}

pub fn write_ground_truth(gt: &GroundTruth, path: &Path) -> Result<(), RecordError> {
    let mut out = BufWriter::new(File::create(path)?);
    #[derive(Serialize)]
    struct Header<'a> {
        schema_version: &'a str,
        #[serde(flatten)]
        header: &'a GtHeader,
    }
    let header = Header {
        schema_version: SCHEMA_VERSION,
        header: &gt.header,
    };
    writeln!(out, "{}", canonical::to_line(&header)?)?;
    for frame in &gt.frames {
        writeln!(out, "{}", canonical::to_line(frame)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth, RecordError> {
    #[derive(Deserialize)]
    struct Header {
        #[serde(rename = "schema_version")]
        _schema_version: String,
        #[serde(flatten)]
        header: GtHeader,
    }
    let (header, frames): (Header, Vec<GtFrame>) = read_lines(BufReader::new(File::open(path)?))?;
    Ok(GroundTruth {
        header: header.header,
        frames,
    })
}

fn major(version: &str) -> &str {
    version.split('.').next().unwrap_or(version)
}

fn read_lines<R, H, F>(input: R) -> Result<(H, Vec<F>), RecordError>
where
    R: BufRead,
    H: DeserializeOwned,
    F: DeserializeOwned,
{
    let mut lines = input.lines().enumerate();
    let header: H = match lines.next() {
        None => {
            return Err(RecordError::CorruptLine {
                line: 1,
                reason: "missing header".into(),
            })
        }
        Some((_, line)) => {
            let line = line?;
            // Version first, so newer files fail with a version error rather
            // than a schema error.
            let probe: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| corrupt(1, e))?;
            let version = probe.get("schema_version").and_then(|v| v.as_str());
            match version {
                Some(v) if major(v) == major(SCHEMA_VERSION) => {}
                Some(v) => return Err(RecordError::SchemaVersionMismatch { found: v.into() }),
                None => {
                    return Err(RecordError::CorruptLine {
                        line: 1,
                        reason: "header lacks schema_version".into(),
                    })
                }
            }
            serde_json::from_value(probe).map_err(|e| corrupt(1, e))?
        }
    };
    let mut frames = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let frame = serde_json::from_str(&line).map_err(|e| corrupt(i + 1, e))?;
        frames.push(frame);
    }
    Ok((header, frames))
}

fn corrupt(line: usize, e: serde_json::Error) -> RecordError {
    RecordError::CorruptLine {
        line,
        reason: e.to_string(),
    }
}
