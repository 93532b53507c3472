//! Persistent hit counts and the in-process recorder.
//!
//! File format (little-endian): magic `BCV1`; u32 meta count; per meta
//! entry u32 uid, u16 key length, key bytes, u16 name length, name bytes;
//! u32 count-entry count; per entry u32 uid, u64 count.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Mutex, MutexGuard};

use thiserror::Error;

use crate::goals::GoalUid;

pub const MAGIC: &[u8; 4] = b"BCV1";
pub const DEFAULT_DB_FILE: &str = "blueCov.db";
pub const DB_ENV_VAR: &str = "BLUECOV_DB";

/// `$BLUECOV_DB` if set, else `blueCov.db` in the working directory.
pub fn default_db_path() -> PathBuf {
    std::env::var_os(DB_ENV_VAR)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DB_FILE))
}

#[derive(Debug, Error)]
pub enum DbError {
    #[error("cannot access database {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt database: {0}")]
    Corrupt(String),
}

impl DbError {
    pub fn is_not_found(&self) -> bool {
        matches!(self, DbError::Io { source, .. } if source.kind() == io::ErrorKind::NotFound)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoalMeta {
    pub key: String,
    pub name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HitCountDb {
    pub counts: BTreeMap<GoalUid, u64>,
    pub meta: BTreeMap<GoalUid, GoalMeta>,
}

impl HitCountDb {
    pub fn next_uid(&self) -> GoalUid {
        let max_meta = self.meta.keys().next_back();
        let max_count = self.counts.keys().next_back();
        max_meta.max(max_count).map_or(0, |m| m + 1)
    }

    pub fn count(&self, uid: GoalUid) -> u64 {
        self.counts.get(&uid).copied().unwrap_or(0)
    }

    /// Adds session counts; UIDs without metadata get `unknown@<uid>`.
    pub fn merge_counts(&mut self, session: &BTreeMap<GoalUid, u64>) {
        for (&uid, &n) in session {
            let c = self.counts.entry(uid).or_insert(0);
            *c = c.saturating_add(n);
            self.meta.entry(uid).or_insert_with(|| {
                let key = format!("unknown@{uid}");
                GoalMeta { name: key.clone(), key }
            });
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.meta.len() * 48 + self.counts.len() * 12);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (uid, m) in &self.meta {
            out.extend_from_slice(&uid.to_le_bytes());
            for s in [&m.key, &m.name] {
                let bytes = truncate_utf8(s, u16::MAX as usize);
                out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
                out.extend_from_slice(bytes);
            }
        }
        out.extend_from_slice(&(self.counts.len() as u32).to_le_bytes());
        for (uid, n) in &self.counts {
            out.extend_from_slice(&uid.to_le_bytes());
            out.extend_from_slice(&n.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<HitCountDb, DbError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(DbError::Corrupt("bad magic (expected BCV1)".into()));
        }
        let mut db = HitCountDb::default();
        let meta_count = cur.u32()?;
        for _ in 0..meta_count {
            let uid = cur.u32()?;
            let key = cur.string()?;
            let name = cur.string()?;
            if db.meta.insert(uid, GoalMeta { key, name }).is_some() {
                return Err(DbError::Corrupt(format!("duplicate meta entry for uid {uid}")));
            }
        }
        let count_count = cur.u32()?;
        for _ in 0..count_count {
            let uid = cur.u32()?;
            let n = u64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
            if db.counts.insert(uid, n).is_some() {
                return Err(DbError::Corrupt(format!("duplicate count entry for uid {uid}")));
            }
        }
        if cur.pos != bytes.len() {
            return Err(DbError::Corrupt(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        Ok(db)
    }

    pub fn load(path: &Path) -> Result<HitCountDb, DbError> {
        let bytes = std::fs::read(path).map_err(|source| DbError::Io { path: path.to_owned(), source })?;
        HitCountDb::from_bytes(&bytes)
    }

    /// Like [`HitCountDb::load`], but a missing file is an empty database.
    pub fn load_or_default(path: &Path) -> Result<HitCountDb, DbError> {
        match HitCountDb::load(path) {
            Err(e) if e.is_not_found() => Ok(HitCountDb::default()),
            other => other,
        }
    }

    /// Replaces the file atomically: readers see the old or the new
    /// contents, never a partial write.
    pub fn save(&self, path: &Path) -> Result<(), DbError> {
        let io_err = |source| DbError::Io { path: path.to_owned(), source };
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
        tmp.write_all(&self.to_bytes()).map_err(io_err)?;
        tmp.as_file().sync_all().map_err(io_err)?;
        tmp.persist(path).map_err(|e| io_err(e.error))?;
        Ok(())
    }
}

fn truncate_utf8(s: &str, max: usize) -> &[u8] {
    if s.len() <= max {
        return s.as_bytes();
    }
    let mut end = max;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s.as_bytes()[..end]
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DbError> {
        if self.bytes.len() - self.pos < n {
            return Err(DbError::Corrupt(format!("truncated at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, DbError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String, DbError> {
        let len = u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")) as usize;
        let at = self.pos;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| DbError::Corrupt(format!("invalid UTF-8 string at byte {at}")))
    }
}

/// Hit counts accumulated by one process (or one interpreter suite run)
/// before they are merged into the database file.
#[derive(Debug, Default)]
pub struct SessionRecorder {
    counts: Mutex<BTreeMap<GoalUid, u64>>,
    first_hit: AtomicBool,
}

impl SessionRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    /// In first-hit mode each UID's count stays at 1 however often it is hit.
    pub fn with_first_hit(first_hit: bool) -> Self {
        let r = Self::new();
        r.set_first_hit(first_hit);
        r
    }

    pub fn set_first_hit(&self, on: bool) {
        self.first_hit.store(on, Ordering::Relaxed);
    }

    pub fn first_hit(&self) -> bool {
        self.first_hit.load(Ordering::Relaxed)
    }

    // A panic while holding the lock cannot leave the map inconsistent, so
    // poisoning is ignored rather than propagated into recorded code.
    fn lock(&self) -> MutexGuard<'_, BTreeMap<GoalUid, u64>> {
        self.counts.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn record(&self, uid: GoalUid) {
        let mut counts = self.lock();
        let c = counts.entry(uid).or_insert(0);
        if self.first_hit() {
            *c = (*c).max(1);
        } else {
            *c = c.saturating_add(1);
        }
    }

    pub fn snapshot(&self) -> BTreeMap<GoalUid, u64> {
        self.lock().clone()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }

    /// Merges the session into the file at `path` (disk += memory) and clears
    /// the session. Records block until the flush completes. On error the
    /// session keeps its counts.
    pub fn flush(&self, path: &Path) -> Result<usize, DbError> {
        let mut counts = self.lock();
        if counts.is_empty() {
            return Ok(0);
        }
        let mut db = HitCountDb::load_or_default(path)?;
        db.merge_counts(&counts);
        db.save(path)?;
        let n = counts.len();
        counts.clear();
        Ok(n)
    }
}
