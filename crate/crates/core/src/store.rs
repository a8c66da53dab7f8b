//! Append-only journal behind the registry.
//!
//! A file store is a header line `{"schema":N,...}` followed by one JSON
//! record per line. Each append is written and synced before the in-memory
//! state changes. On open, a final line with no terminating newline is a
//! torn write and is discarded; any other unreadable line is an error.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SchedError};
use crate::ids::{AppointmentId, DoctorId};
use crate::records::{Appointment, AppointmentState, DoctorRecord, HistoryEntry, PatientAccount, Specialty};

pub const SCHEMA_VERSION: u32 = 1;
pub const STORE_FILE: &str = "registry.journal";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum JournalRecord {
    PatientRegistered(PatientAccount),
    DoctorLogin {
        doctor_id: DoctorId,
        username: String,
        credential_hash: String,
    },
    SpecialtyUpserted(Specialty),
    DoctorUpserted(DoctorRecord),
    AppointmentCreated(Appointment),
    AppointmentStateChanged {
        appointment_id: AppointmentId,
        state: AppointmentState,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outcome_note: Option<String>,
        at: DateTime<Utc>,
    },
    HistoryAppended(HistoryEntry),
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: u32,
}

pub trait Store: Send {
    fn append(&mut self, rec: &JournalRecord) -> Result<()>;
    fn load(&mut self) -> Result<Vec<JournalRecord>>;
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    records: Vec<JournalRecord>,
}

impl Store for MemoryStore {
    fn append(&mut self, rec: &JournalRecord) -> Result<()> {
        self.records.push(rec.clone());
        Ok(())
    }

    fn load(&mut self) -> Result<Vec<JournalRecord>> {
        Ok(self.records.clone())
    }
}

#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    file: File,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SchedError {
    SchedError::Storage(format!("{}: {e}", path.display()))
}

impl FileStore {
    /// Opens or creates `registry.journal` inside `dir`.
    pub fn open_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Self::open(dir.join(STORE_FILE))
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let fresh = !path.exists() || std::fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        if fresh {
            let header = serde_json::to_string(&Header { schema: SCHEMA_VERSION }).expect("header serializes");
            writeln!(file, "{header}").map_err(|e| io_err(&path, e))?;
            file.sync_data().map_err(|e| io_err(&path, e))?;
        }
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Store for FileStore {
    fn append(&mut self, rec: &JournalRecord) -> Result<()> {
        let mut line = serde_json::to_string(rec).map_err(|e| io_err(&self.path, e))?;
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| io_err(&self.path, e))?;
        self.file.sync_data().map_err(|e| io_err(&self.path, e))
    }

    fn load(&mut self) -> Result<Vec<JournalRecord>> {
        let full = std::fs::read(&self.path).map_err(|e| io_err(&self.path, e))?;
        let torn = !full.is_empty() && !full.ends_with(b"\n");
        let mut lines = full.split(|b| *b == b'\n');
        let header_line = lines.next().filter(|l| !l.is_empty()).ok_or_else(|| io_err(&self.path, "missing header"))?;
        let header: Header =
            serde_json::from_slice(header_line).map_err(|e| io_err(&self.path, format!("bad header: {e}")))?;
        if header.schema != SCHEMA_VERSION {
            return Err(io_err(
                &self.path,
                format!("schema {} unsupported (expected {SCHEMA_VERSION})", header.schema),
            ));
        }
        let mut valid_len = header_line.len() + 1;
        let body: Vec<&[u8]> = lines.collect();
        let mut out = Vec::with_capacity(body.len());
        for (i, raw) in body.iter().enumerate() {
            let last = i + 1 == body.len();
            if raw.is_empty() && last {
                break;
            }
            match serde_json::from_slice::<JournalRecord>(raw) {
                Ok(rec) if !(last && torn) => {
                    out.push(rec);
                    valid_len += raw.len() + 1;
                }
                Err(e) if !last => return Err(io_err(&self.path, format!("line {}: {e}", i + 2))),
                _ => break,
            }
        }
        if torn {
            self.file.set_len(valid_len as u64).map_err(|e| io_err(&self.path, e))?;
        }
        Ok(out)
    }
}
