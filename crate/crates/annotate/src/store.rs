//! Append-only JSONL store for scores and pairwise preferences.
//!
//! Every record is written as one line and fsynced before the write is
//! acknowledged. On open the log is replayed; a trailing line without a
//! newline is an interrupted write and is cut off. Superseded records move to
//! a sibling `.history.jsonl` file when the log is compacted.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use specvi_core::metrics::Verdict;
use thiserror::Error;

pub const MAX_SCORE: i64 = 5;
pub const DEFAULT_COMPACT_THRESHOLD: usize = 1024;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store {path} is corrupt at line {line}: {message}")]
    CorruptStore { path: String, line: usize, message: String },
    #[error("score must be an integer in 0..={MAX_SCORE}, got {0}")]
    ScoreOutOfRange(i64),
    #[error("{0}")]
    Invalid(String),
    #[error("store i/o on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub trajectory_id: String,
    pub annotator_id: String,
    pub score: u8,
    /// Milliseconds since the Unix epoch, assigned by the server.
    pub noted_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preference {
    pub case_id: String,
    pub annotator_id: String,
    pub verdict: Verdict,
    pub left_system: String,
    pub right_system: String,
    pub noted_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogRecord {
    Annotation(Annotation),
    Preference(Preference),
}

type Key = (String, String);

#[derive(Debug, Default)]
struct View {
    annotations: BTreeMap<Key, Annotation>,
    preferences: BTreeMap<Key, Preference>,
}

#[derive(Debug)]
struct Appender {
    file: File,
    /// Records overwritten since the last compaction.
    superseded: Vec<LogRecord>,
}

#[derive(Debug)]
pub struct AnnotationStore {
    path: PathBuf,
    history_path: PathBuf,
    compact_threshold: usize,
    view: RwLock<View>,
    appender: Mutex<Appender>,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn history_path_for(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.strip_suffix(".jsonl").unwrap_or(&name);
    path.with_file_name(format!("{stem}.history.jsonl"))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> StoreError + '_ {
    move |e| StoreError::Io { path: path.display().to_string(), message: e.to_string() }
}

impl View {
    /// Applies `rec`, returning the record it replaced.
    fn apply(&mut self, rec: LogRecord) -> Option<LogRecord> {
        match rec {
            LogRecord::Annotation(a) => {
                let key = (a.trajectory_id.clone(), a.annotator_id.clone());
                self.annotations.insert(key, a).map(LogRecord::Annotation)
            }
            LogRecord::Preference(p) => {
                let key = (p.case_id.clone(), p.annotator_id.clone());
                self.preferences.insert(key, p).map(LogRecord::Preference)
            }
        }
    }

    fn records(&self) -> impl Iterator<Item = LogRecord> + '_ {
        self.annotations
            .values()
            .cloned()
            .map(LogRecord::Annotation)
            .chain(self.preferences.values().cloned().map(LogRecord::Preference))
    }
}

fn line(rec: &LogRecord) -> String {
    let mut s = serde_json::to_string(rec).expect("records serialize");
    s.push('\n');
    s
}

impl AnnotationStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Self::open_with_threshold(path, DEFAULT_COMPACT_THRESHOLD)
    }

    pub fn open_with_threshold(path: impl Into<PathBuf>, compact_threshold: usize) -> Result<Self, StoreError> {
        let path = path.into();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err(&path))?;

        let complete = bytes.iter().rposition(|&b| b == b'\n').map(|i| i + 1).unwrap_or(0);
        if complete < bytes.len() {
            tracing::warn!(
                path = %path.display(),
                dropped = bytes.len() - complete,
                "discarding interrupted trailing record"
            );
            file.set_len(complete as u64).map_err(io_err(&path))?;
            file.sync_all().map_err(io_err(&path))?;
        }
        file.seek(SeekFrom::End(0)).map_err(io_err(&path))?;

        let mut view = View::default();
        let mut superseded = Vec::new();
        for (i, raw) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if raw.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let rec: LogRecord = serde_json::from_slice(raw).map_err(|e| StoreError::CorruptStore {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            superseded.extend(view.apply(rec));
        }

        let store = AnnotationStore {
            history_path: history_path_for(&path),
            path,
            compact_threshold: compact_threshold.max(1),
            view: RwLock::new(view),
            appender: Mutex::new(Appender { file, superseded }),
        };
        if !store.appender.lock().superseded.is_empty() {
            store.compact()?;
        }
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn history_path(&self) -> &Path {
        &self.history_path
    }

    fn append(&self, rec: LogRecord) -> Result<(), StoreError> {
        let mut app = self.appender.lock();
        app.file.write_all(line(&rec).as_bytes()).map_err(io_err(&self.path))?;
        app.file.sync_data().map_err(io_err(&self.path))?;
        let old = self.view.write().apply(rec);
        app.superseded.extend(old);
        let due = app.superseded.len() >= self.compact_threshold;
        drop(app);
        if due {
            self.compact()?;
        }
        Ok(())
    }

    /// Validates and durably records a score. Returns the stored record.
    pub fn put_annotation(
        &self,
        trajectory_id: &str,
        annotator_id: &str,
        score: i64,
        comment: Option<String>,
    ) -> Result<Annotation, StoreError> {
        if !(0..=MAX_SCORE).contains(&score) {
            return Err(StoreError::ScoreOutOfRange(score));
        }
        require("trajectory_id", trajectory_id)?;
        require("annotator_id", annotator_id)?;
        let a = Annotation {
            trajectory_id: trajectory_id.to_string(),
            annotator_id: annotator_id.to_string(),
            score: score as u8,
            noted_at: now_ms(),
            comment,
        };
        self.append(LogRecord::Annotation(a.clone()))?;
        Ok(a)
    }

    pub fn put_preference(
        &self,
        case_id: &str,
        annotator_id: &str,
        verdict: Verdict,
        left_system: &str,
        right_system: &str,
    ) -> Result<Preference, StoreError> {
        require("case_id", case_id)?;
        require("annotator_id", annotator_id)?;
        let p = Preference {
            case_id: case_id.to_string(),
            annotator_id: annotator_id.to_string(),
            verdict,
            left_system: left_system.to_string(),
            right_system: right_system.to_string(),
            noted_at: now_ms(),
        };
        self.append(LogRecord::Preference(p.clone()))?;
        Ok(p)
    }

    pub fn annotations_for(&self, trajectory_id: &str) -> Vec<Annotation> {
        self.view
            .read()
            .annotations
            .values()
            .filter(|a| a.trajectory_id == trajectory_id)
            .cloned()
            .collect()
    }

    pub fn annotations(&self) -> Vec<Annotation> {
        self.view.read().annotations.values().cloned().collect()
    }

    pub fn preferences(&self) -> Vec<Preference> {
        self.view.read().preferences.values().cloned().collect()
    }

    /// Superseded records: those already moved to the history file plus any
    /// still awaiting compaction.
    pub fn history(&self) -> Result<Vec<LogRecord>, StoreError> {
        let app = self.appender.lock();
        let mut out = Vec::new();
        match std::fs::read_to_string(&self.history_path) {
            Ok(text) => {
                for (i, l) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    out.push(serde_json::from_str(l).map_err(|e| StoreError::CorruptStore {
                        path: self.history_path.display().to_string(),
                        line: i + 1,
                        message: e.to_string(),
                    })?);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(&self.history_path)(e)),
        }
        out.extend(app.superseded.iter().cloned());
        Ok(out)
    }

    /// `trajectory_id,annotator_id,score` rows, one per live pair.
    pub fn scores_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trajectory_id", "annotator_id", "score"]).expect("in-memory write");
        for a in self.view.read().annotations.values() {
            w.write_record([&a.trajectory_id, &a.annotator_id, &a.score.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    /// Moves superseded records to the history file and rewrites the log with
    /// live records only. History is written first, so a crash part-way can
    /// duplicate history lines but never lose a record.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut app = self.appender.lock();
        if app.superseded.is_empty() {
            return Ok(());
        }
        let mut hist = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.history_path)
            .map_err(io_err(&self.history_path))?;
        let text: String = app.superseded.iter().map(line).collect();
        hist.write_all(text.as_bytes()).map_err(io_err(&self.history_path))?;
        hist.sync_data().map_err(io_err(&self.history_path))?;

        let tmp = self.path.with_extension("jsonl.tmp");
        let live: String = self.view.read().records().map(|r| line(&r)).collect();
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(live.as_bytes()).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        std::fs::rename(&tmp, &self.path).map_err(io_err(&self.path))?;
        if let Some(dir) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            if let Ok(d) = File::open(dir) {
                let _ = d.sync_all();
            }
        }
        app.file = OpenOptions::new().append(true).open(&self.path).map_err(io_err(&self.path))?;
        app.superseded.clear();
        Ok(())
    }
}

fn require(field: &str, value: &str) -> Result<(), StoreError> {
    if value.trim().is_empty() {
        Err(StoreError::Invalid(format!("{field} must be non-empty")))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let s = AnnotationStore::open(&path).unwrap();
        s.put_annotation("t1", "alice", 3, None).unwrap();
        s.put_annotation("t1", "alice", 5, Some("revised".into())).unwrap();
        s.put_annotation("t1", "bob", 0, None).unwrap();
        assert!(matches!(s.put_annotation("t1", "bob", 6, None), Err(StoreError::ScoreOutOfRange(6))));
        assert!(s.put_annotation("t1", " ", 1, None).is_err());
        assert_eq!(s.annotations_for("t1").len(), 2);
        assert_eq!(s.history().unwrap().len(), 1);
        drop(s);

        let s = AnnotationStore::open(&path).unwrap();
        let live = s.annotations_for("t1");
        assert_eq!(live[0].score, 5);
        assert_eq!(live[0].comment.as_deref(), Some("revised"));
        // Reopening compacted the log and kept the old score in history.
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
        let hist = s.history().unwrap();
        assert!(matches!(&hist[0], LogRecord::Annotation(a) if a.score == 3));
    }

    #[test]
    fn partial_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let s = AnnotationStore::open(&path).unwrap();
        s.put_annotation("t1", "a", 4, None).unwrap();
        drop(s);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"type":"annotation","trajectory_id":"t2","annot"#).unwrap();
        drop(f);
        let s = AnnotationStore::open(&path).unwrap();
        assert_eq!(s.annotations().len(), 1);
        s.put_annotation("t3", "a", 1, None).unwrap();
        drop(s);
        let s = AnnotationStore::open(&path).unwrap();
        assert_eq!(s.annotations().len(), 2);
    }

    #[test]
    fn corrupt_middle_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        std::fs::write(&path, "not json\n{}\n").unwrap();
        let err = AnnotationStore::open(&path).unwrap_err();
        assert!(matches!(err, StoreError::CorruptStore { line: 1, .. }));
    }

    #[test]
    fn threshold_triggers_compaction() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let s = AnnotationStore::open_with_threshold(&path, 2).unwrap();
        for score in 0..=4 {
            s.put_annotation("t", "a", score, None).unwrap();
        }
        assert_eq!(s.history().unwrap().len(), 4);
        assert!(std::fs::read_to_string(&path).unwrap().lines().count() <= 2);
        assert_eq!(s.annotations()[0].score, 4);
        assert_eq!(s.scores_csv(), "trajectory_id,annotator_id,score\nt,a,4\n");
    }

    #[test]
    fn preferences_persist() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let s = AnnotationStore::open(&path).unwrap();
        s.put_preference("c1", "a", Verdict::Win, "left", "right").unwrap();
        drop(s);
        let s = AnnotationStore::open(&path).unwrap();
        assert_eq!(s.preferences()[0].verdict, Verdict::Win);
    }
}
