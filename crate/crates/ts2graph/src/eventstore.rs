//! Embedded event tuple store.
//!
//! An append-only JSON-lines log with an in-memory index rebuilt on open,
//! standing in for an external graph database. The (event, sensor, time)
//! tuples fully determine the graph semantics, so time-window queries per
//! sensor are all the graph layer needs.
//!
//! Concurrency: one writer at a time (enforced by `&mut self`); any number of
//! readers may hold their own opened copy, which is a consistent snapshot as
//! of the open.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{EventTuple, EventType};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    StorageFailure(#[from] std::io::Error),
    #[error("corrupt store at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    SchemaVersion(u32),
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

/// An event set `S_i`: the (event type, time) pairs of one sensor in a window.
pub type EventSet = Vec<(EventType, i64)>;

/// Persistent, deduplicated store of event tuples with per-sensor time index.
#[derive(Debug)]
pub struct EventStore {
    path: Option<PathBuf>,
    /// sensor -> (time, event code) -> tuple. The key order yields
    /// time-ascending queries with ties broken by event type code.
    index: BTreeMap<String, BTreeMap<(i64, u8), EventTuple>>,
    len: usize,
}

impl EventStore {
    /// A store without backing file; inserts are kept in memory only.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            index: BTreeMap::new(),
            len: 0,
        }
    }

    /// Open (or create) a store backed by a JSON-lines file. A sidecar
    /// manifest `<path>.manifest.json` records the schema version.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut store = Self {
            path: Some(path.to_path_buf()),
            index: BTreeMap::new(),
            len: 0,
        };
        let manifest_path = Self::manifest_path(path);
        if manifest_path.exists() {
            let manifest: Manifest = serde_json::from_reader(File::open(&manifest_path)?)
                .map_err(|e| StoreError::Corrupt {
                    line: 0,
                    reason: format!("manifest: {e}"),
                })?;
            if manifest.schema_version != SCHEMA_VERSION {
                return Err(StoreError::SchemaVersion(manifest.schema_version));
            }
        } else {
            store.write_manifest(None)?;
        }
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let tuple: EventTuple =
                    serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                        line: i + 1,
                        reason: e.to_string(),
                    })?;
                store.insert_in_memory(tuple);
            }
        }
        Ok(store)
    }

    fn manifest_path(path: &Path) -> PathBuf {
        let mut os = path.as_os_str().to_owned();
        os.push(".manifest.json");
        PathBuf::from(os)
    }

    /// Record the producing config hash in the manifest.
    pub fn write_manifest(&self, config_hash: Option<&str>) -> Result<(), StoreError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            config_hash: config_hash.map(str::to_string),
        };
        let mut w = BufWriter::new(File::create(Self::manifest_path(path))?);
        serde_json::to_writer(&mut w, &manifest).map_err(|e| StoreError::Corrupt {
            line: 0,
            reason: e.to_string(),
        })?;
        w.flush()?;
        Ok(())
    }

    fn insert_in_memory(&mut self, tuple: EventTuple) -> bool {
        let key = (tuple.time, tuple.event_type.code());
        let per_sensor = self.index.entry(tuple.sensor_id.clone()).or_default();
        if per_sensor.contains_key(&key) {
            return false;
        }
        per_sensor.insert(key, tuple);
        self.len += 1;
        true
    }

    /// Insert tuples, dropping exact duplicates (same type, sensor, time).
    /// Returns the number of newly stored tuples.
    pub fn insert(&mut self, events: &[EventTuple]) -> Result<usize, StoreError> {
        let mut appended = Vec::new();
        for tuple in events {
            if self.insert_in_memory(tuple.clone()) {
                appended.push(tuple.clone());
            }
        }
        if let (Some(path), false) = (&self.path, appended.is_empty()) {
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            let mut w = BufWriter::new(file);
            for tuple in &appended {
                serde_json::to_writer(&mut w, tuple).map_err(std::io::Error::other)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        Ok(appended.len())
    }

    /// Total stored tuples.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// All sensor ids with at least one tuple, ascending.
    pub fn sensors(&self) -> Vec<String> {
        self.index.keys().cloned().collect()
    }

    /// Tuples for one sensor with `start <= time <= end`, ascending by time
    /// (ties by event type code). Unknown sensors yield an empty list.
    pub fn query(&self, sensor_id: &str, start: i64, end: i64) -> Vec<EventTuple> {
        debug_assert!(start <= end);
        let Some(per_sensor) = self.index.get(sensor_id) else {
            return Vec::new();
        };
        per_sensor
            .range((start, 0)..=(end, u8::MAX))
            .map(|(_, tuple)| tuple.clone())
            .collect()
    }

    /// The event set `S_i` of a sensor over a window: (event type, time) pairs.
    pub fn event_set(&self, sensor_id: &str, start: i64, end: i64) -> EventSet {
        let Some(per_sensor) = self.index.get(sensor_id) else {
            return Vec::new();
        };
        per_sensor
            .range((start, 0)..=(end, u8::MAX))
            .map(|(&(time, code), _)| (EventType::from_code(code).unwrap(), time))
            .collect()
    }
}
