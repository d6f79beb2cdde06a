//! Append-only JSONL logs for feedback, usage events and issued results.
//!
//! Each record type lives in its own file under the data directory. Writes to
//! a file go through a single mutex-guarded handle and are synced before the
//! call returns. Statistics are always recomputed from a full scan, so the
//! files are the only source of truth.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::registry::TaskRegistry;

pub const FEEDBACK_FILE: &str = "feedback.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const MAX_FREE_TEXT_CHARS: usize = 2_000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    StorageFailure(#[from] io::Error),
    #[error("invalid record: {0}")]
    Validation(String),
    #[error("unknown result: {0}")]
    UnknownResult(Uuid),
    #[error("unknown task: {0}")]
    UnknownTask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackLevel {
    Positive,
    Neutral,
    Negative,
}

impl FeedbackLevel {
    pub const ALL: [FeedbackLevel; 3] = [
        FeedbackLevel::Positive,
        FeedbackLevel::Neutral,
        FeedbackLevel::Negative,
    ];
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriState {
    Yes,
    No,
    #[default]
    Unset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub feedback_id: Uuid,
    pub result_id: Uuid,
    pub level: FeedbackLevel,
    #[serde(default)]
    pub helpful: TriState,
    #[serde(default)]
    pub correct: TriState,
    #[serde(default)]
    pub confusing: TriState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_text: Option<String>,
    pub created_at: DateTime<Utc>,
    /// Set when the result id was not issued by this gateway.
    #[serde(default)]
    pub orphan: bool,
}

impl FeedbackRecord {
    pub fn new(result_id: Uuid, level: FeedbackLevel) -> Self {
        Self {
            feedback_id: Uuid::new_v4(),
            result_id,
            level,
            helpful: TriState::Unset,
            correct: TriState::Unset,
            confusing: TriState::Unset,
            free_text: None,
            created_at: Utc::now(),
            orphan: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Shown,
    Accepted,
    Regenerated,
    Dismissed,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageEvent {
    pub event_id: Uuid,
    pub result_id: Uuid,
    pub kind: EventKind,
    /// 1-based rank of the clicked suggestion; only for `accepted`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_index: Option<u32>,
    pub created_at: DateTime<Utc>,
}

impl UsageEvent {
    pub fn new(result_id: Uuid, kind: EventKind, item_index: Option<u32>) -> Self {
        Self {
            event_id: Uuid::new_v4(),
            result_id,
            kind,
            item_index,
            created_at: Utc::now(),
        }
    }
}

/// Index entry for every result id handed out, including failed attempts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub result_id: Uuid,
    pub task_id: String,
    pub item_count: u32,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStats {
    pub task_id: String,
    pub shown_count: u64,
    pub accepted_count: u64,
    pub regenerated_count: u64,
    pub dismissed_count: u64,
    pub error_count: u64,
    pub acceptance_rate: f64,
    pub feedback_counts: BTreeMap<FeedbackLevel, u64>,
}

impl TaskStats {
    pub fn empty(task_id: &str) -> Self {
        Self {
            task_id: task_id.to_owned(),
            shown_count: 0,
            accepted_count: 0,
            regenerated_count: 0,
            dismissed_count: 0,
            error_count: 0,
            acceptance_rate: 0.0,
            feedback_counts: FeedbackLevel::ALL.iter().map(|l| (*l, 0)).collect(),
        }
    }
}

/// `accepted / shown`, 0 when nothing was shown, capped at 1 because one
/// result can be accepted more than once.
pub fn acceptance_rate(accepted: u64, shown: u64) -> f64 {
    if shown == 0 {
        0.0
    } else {
        (accepted as f64 / shown as f64).min(1.0)
    }
}

struct JsonlLog<T> {
    path: PathBuf,
    writer: Mutex<File>,
    sync: bool,
    _record: PhantomData<fn() -> T>,
}

impl<T: Serialize + DeserializeOwned> JsonlLog<T> {
    fn open(path: PathBuf, sync: bool) -> io::Result<Self> {
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)?;
        // terminate a torn final line so the next record starts cleanly
        let len = file.metadata()?.len();
        if len > 0 {
            file.seek(SeekFrom::Start(len - 1))?;
            let mut last = [0u8; 1];
            file.read_exact(&mut last)?;
            if last[0] != b'\n' {
                file.write_all(b"\n")?;
                file.sync_data()?;
            }
        }
        Ok(Self {
            path,
            writer: Mutex::new(file),
            sync,
            _record: PhantomData,
        })
    }

    fn append(&self, record: &T) -> io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
        line.push('\n');
        let mut file = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes())?;
        file.flush()?;
        if self.sync {
            file.sync_data()?;
        }
        Ok(())
    }

    /// Every complete, parseable line. A trailing partial line (a write in
    /// progress or cut short by a crash) is ignored.
    fn read_all(&self) -> io::Result<Vec<T>> {
        read_jsonl(&self.path)
    }
}

/// Reads a JSONL file, skipping blank, unterminated and unparseable lines.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let mut out = Vec::new();
    for (lineno, line) in complete.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(e) => tracing::warn!(path = %path.display(), line = lineno + 1, error = %e, "skipping unreadable log line"),
        }
    }
    Ok(out)
}

pub struct FeedbackStore {
    dir: PathBuf,
    feedback: JsonlLog<FeedbackRecord>,
    events: JsonlLog<UsageEvent>,
    results: JsonlLog<ResultRecord>,
    index: RwLock<HashMap<Uuid, ResultRecord>>,
}

impl std::fmt::Debug for FeedbackStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeedbackStore").field("dir", &self.dir).finish()
    }
}

impl FeedbackStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with(dir, true)
    }

    /// `sync = false` skips the per-record fsync (tests and benchmarks).
    pub fn open_with(dir: impl AsRef<Path>, sync: bool) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let results = JsonlLog::<ResultRecord>::open(dir.join(RESULTS_FILE), sync)?;
        let index = results
            .read_all()?
            .into_iter()
            .map(|r| (r.result_id, r))
            .collect();
        Ok(Self {
            feedback: JsonlLog::open(dir.join(FEEDBACK_FILE), sync)?,
            events: JsonlLog::open(dir.join(EVENTS_FILE), sync)?,
            results,
            index: RwLock::new(index),
            dir,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn result(&self, result_id: &Uuid) -> Option<ResultRecord> {
        self.index.read().unwrap().get(result_id).cloned()
    }

    pub fn record_result(&self, record: ResultRecord) -> Result<(), StoreError> {
        self.results.append(&record)?;
        self.index.write().unwrap().insert(record.result_id, record);
        Ok(())
    }

    /// Appends a feedback record, flagging it as orphan when the result id is
    /// unknown. Returns the stored record.
    pub fn record_feedback(&self, mut record: FeedbackRecord) -> Result<FeedbackRecord, StoreError> {
        if let Some(text) = &record.free_text {
            if text.chars().count() > MAX_FREE_TEXT_CHARS {
                return Err(StoreError::Validation(format!(
                    "free_text exceeds {MAX_FREE_TEXT_CHARS} characters"
                )));
            }
        }
        record.orphan = self.result(&record.result_id).is_none();
        self.feedback.append(&record)?;
        Ok(record)
    }

    pub fn record_event(&self, event: UsageEvent) -> Result<UsageEvent, StoreError> {
        let result = self
            .result(&event.result_id)
            .ok_or(StoreError::UnknownResult(event.result_id))?;
        match (event.kind, event.item_index) {
            (EventKind::Accepted, Some(i)) if (1..=result.item_count).contains(&i) => {}
            (EventKind::Accepted, Some(i)) => {
                return Err(StoreError::Validation(format!(
                    "item_index {i} outside 1..={}",
                    result.item_count
                )))
            }
            (EventKind::Accepted, None) => {
                return Err(StoreError::Validation(
                    "accepted events require item_index".to_owned(),
                ))
            }
            (_, Some(_)) => {
                return Err(StoreError::Validation(
                    "item_index is only allowed for accepted events".to_owned(),
                ))
            }
            (_, None) => {}
        }
        self.events.append(&event)?;
        Ok(event)
    }

    pub fn feedback_records(&self) -> Result<Vec<FeedbackRecord>, StoreError> {
        Ok(self.feedback.read_all()?)
    }

    pub fn events(&self) -> Result<Vec<UsageEvent>, StoreError> {
        Ok(self.events.read_all()?)
    }

    pub fn result_records(&self) -> Result<Vec<ResultRecord>, StoreError> {
        Ok(self.results.read_all()?)
    }

    /// Recounts the logs for one task.
    pub fn aggregate_stats(
        &self,
        registry: &TaskRegistry,
        task_id: &str,
    ) -> Result<TaskStats, StoreError> {
        if registry.get_task(task_id).is_err() {
            return Err(StoreError::UnknownTask(task_id.to_owned()));
        }
        let owners: HashMap<Uuid, String> = self
            .result_records()?
            .into_iter()
            .map(|r| (r.result_id, r.task_id))
            .collect();
        let belongs = |id: &Uuid| owners.get(id).is_some_and(|t| t == task_id);

        let mut stats = TaskStats::empty(task_id);
        for event in self.events()?.iter().filter(|e| belongs(&e.result_id)) {
            match event.kind {
                EventKind::Shown => stats.shown_count += 1,
                EventKind::Accepted => stats.accepted_count += 1,
                EventKind::Regenerated => stats.regenerated_count += 1,
                EventKind::Dismissed => stats.dismissed_count += 1,
                EventKind::Error => stats.error_count += 1,
            }
        }
        stats.acceptance_rate = acceptance_rate(stats.accepted_count, stats.shown_count);

        let mut latest: HashMap<Uuid, FeedbackLevel> = HashMap::new();
        for fb in self.feedback_records()? {
            if belongs(&fb.result_id) {
                latest.insert(fb.result_id, fb.level);
            }
        }
        for level in latest.values() {
            *stats.feedback_counts.entry(*level).or_insert(0) += 1;
        }
        Ok(stats)
    }
}
