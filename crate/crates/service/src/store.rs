//! Append-only session persistence.
//!
//! Layout under the store root:
//!
//! ```text
//! sessions/<sha256(session_id)>/records.jsonl   one JSON record per line
//! blobs/<sha256(contents)>                      indexed file contents
//! ```
//!
//! Records are only ever appended and each append is synced before it
//! returns, so a crash loses at most the line being written. A torn final
//! line is ignored on reload.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use lens_core::explain::{Level1Explanation, Level2Explanation, SummaryCard};
use lens_core::index::{content_digest, IndexDocument};
use lens_core::ingest::FileModification;
use lens_core::{ArtifactId, RepoIndex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const RECORDS_FILE: &str = "records.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store io error at {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store record in {path:?} line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Core(#[from] lens_core::Error),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record {
    Session {
        session_id: String,
        task_prompt: String,
        repo_root: PathBuf,
    },
    /// The index without file contents, which live in blobs.
    Snapshot {
        index: IndexDocument,
        timeline: Vec<FileModification>,
    },
    Card {
        card: SummaryCard,
    },
    Level1 {
        document: Level1Explanation,
    },
    Level2 {
        order_index: usize,
        document: Level2Explanation,
    },
    Failed {
        code: String,
        message: String,
    },
}

/// Everything a session's records say, folded in order.
#[derive(Debug, Clone)]
pub struct StoredSession {
    pub session_id: String,
    pub task_prompt: String,
    pub repo_root: PathBuf,
    pub snapshot: Option<(Arc<RepoIndex>, Vec<FileModification>)>,
    pub cards: Vec<SummaryCard>,
    pub level1: Option<Level1Explanation>,
    pub level2: BTreeMap<usize, Level2Explanation>,
    pub failure: Option<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

/// Open handle on one session's record file.
#[derive(Debug)]
pub struct RecordLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl RecordLog {
    pub fn append(&self, record: &Record) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(record).expect("records serialize");
        line.push(b'\n');
        let mut file = self.file.lock().expect("record log lock");
        file.write_all(&line).map_err(io(&self.path))?;
        file.sync_data().map_err(io(&self.path))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn session_dir_name(session_id: &str) -> String {
    let digest = Sha256::digest(session_id.as_bytes());
    digest.iter().map(|b| format!("{:02x}", b)).collect()
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["sessions", "blobs"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(io(&dir))?;
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, session_id: &str) -> PathBuf {
        self.root
            .join("sessions")
            .join(session_dir_name(session_id))
    }

    pub fn exists(&self, session_id: &str) -> bool {
        self.session_dir(session_id).join(RECORDS_FILE).exists()
    }

    /// Opens (creating if needed) the record log of a session.
    pub fn log(&self, session_id: &str) -> Result<RecordLog, StoreError> {
        let dir = self.session_dir(session_id);
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let path = dir.join(RECORDS_FILE);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io(&path))?;
        Ok(RecordLog {
            path,
            file: Mutex::new(file),
        })
    }

    fn blob_path(&self, digest: &str) -> PathBuf {
        self.root.join("blobs").join(digest)
    }

    /// Writes the contents of every artifact, skipping blobs already present.
    pub fn put_contents(&self, index: &RepoIndex) -> Result<(), StoreError> {
        for artifact in index.artifacts() {
            let path = self.blob_path(&artifact.content_digest);
            if path.exists() {
                continue;
            }
            let text = index.contents(&artifact.artifact_id).ok_or_else(|| {
                lens_core::Error::NotFound(format!("contents of {}", artifact.path))
            })?;
            // write-then-rename so a reader never sees half a blob
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, text.as_bytes()).map_err(io(&tmp))?;
            fs::rename(&tmp, &path).map_err(io(&path))?;
        }
        Ok(())
    }

    fn rebuild_index(&self, doc: IndexDocument) -> Result<RepoIndex, StoreError> {
        let mut contents: BTreeMap<ArtifactId, Arc<str>> = BTreeMap::new();
        for a in &doc.artifacts {
            let path = self.blob_path(&a.content_digest);
            let text = fs::read_to_string(&path).map_err(io(&path))?;
            debug_assert_eq!(content_digest(text.as_bytes()), a.content_digest);
            contents.insert(a.artifact_id.clone(), Arc::from(text));
        }
        Ok(RepoIndex::from_document(doc, contents)?)
    }

    /// Reads one record file. A final line without its newline is a torn
    /// write and is dropped; any other bad line is corruption.
    pub fn read_records(path: &Path) -> Result<Vec<Record>, StoreError> {
        let file = File::open(path).map_err(io(path))?;
        let mut reader = BufReader::new(file);
        let mut records = Vec::new();
        let mut buf = String::new();
        let mut line_no = 0;
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf).map_err(io(path))?;
            if n == 0 {
                break;
            }
            line_no += 1;
            if !buf.ends_with('\n') {
                tracing::warn!(?path, line = line_no, "dropping torn trailing record");
                break;
            }
            let record = serde_json::from_str(buf.trim_end()).map_err(|e| StoreError::Corrupt {
                path: path.to_path_buf(),
                line: line_no,
                reason: e.to_string(),
            })?;
            records.push(record);
        }
        Ok(records)
    }

    fn fold(&self, records: Vec<Record>, path: &Path) -> Result<StoredSession, StoreError> {
        let mut iter = records.into_iter();
        let Some(Record::Session {
            session_id,
            task_prompt,
            repo_root,
        }) = iter.next()
        else {
            return Err(StoreError::Corrupt {
                path: path.to_path_buf(),
                line: 1,
                reason: "first record is not a session header".into(),
            });
        };
        let mut session = StoredSession {
            session_id,
            task_prompt,
            repo_root,
            snapshot: None,
            cards: Vec::new(),
            level1: None,
            level2: BTreeMap::new(),
            failure: None,
        };
        for record in iter {
            match record {
                Record::Session { .. } => {}
                Record::Snapshot { index, timeline } => {
                    session.snapshot = Some((Arc::new(self.rebuild_index(index)?), timeline));
                }
                Record::Card { card } => session.cards.push(card),
                Record::Level1 { document } => session.level1 = Some(document),
                Record::Level2 {
                    order_index,
                    document,
                } => {
                    session.level2.entry(order_index).or_insert(document);
                }
                Record::Failed { code, message } => session.failure = Some((code, message)),
            }
        }
        Ok(session)
    }

    pub fn load(&self, session_id: &str) -> Result<StoredSession, StoreError> {
        let path = self.session_dir(session_id).join(RECORDS_FILE);
        self.fold(Self::read_records(&path)?, &path)
    }

    /// Every persisted session, ordered by directory name.
    pub fn load_all(&self) -> Result<Vec<StoredSession>, StoreError> {
        let dir = self.root.join("sessions");
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io(&dir))?
            .filter_map(|e| e.ok())
            .map(|e| e.path().join(RECORDS_FILE))
            .filter(|p| p.exists())
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| self.fold(Self::read_records(p)?, p))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lens_core::explain::Significance;
    use lens_core::index::{index_from_files, KindTable};
    use lens_core::ingest::ModificationKind;

    fn card(i: usize) -> SummaryCard {
        SummaryCard {
            order_index: i,
            path: format!("f{}.py", i),
            kind: ModificationKind::Created,
            title: "t".into(),
            significance: Significance::Low,
            summary: "s.".into(),
            anchors: vec![],
        }
    }

    #[test]
    fn records_round_trip_with_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let idx = index_from_files([("a.py", "x = 1\n")], &KindTable::default()).unwrap();
        store.put_contents(&idx).unwrap();
        let log = store.log("s1").unwrap();
        log.append(&Record::Session {
            session_id: "s1".into(),
            task_prompt: "p".into(),
            repo_root: "/r".into(),
        })
        .unwrap();
        log.append(&Record::Snapshot {
            index: idx.document().clone(),
            timeline: vec![],
        })
        .unwrap();
        log.append(&Record::Card { card: card(0) }).unwrap();
        let loaded = store.load("s1").unwrap();
        assert_eq!(loaded.cards, vec![card(0)]);
        let (index, _) = loaded.snapshot.unwrap();
        assert_eq!(index.to_json(), idx.to_json());
        assert!(loaded.level1.is_none());
    }

    #[test]
    fn torn_tail_is_dropped_but_garbage_is_not() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let log = store.log("s").unwrap();
        log.append(&Record::Session {
            session_id: "s".into(),
            task_prompt: String::new(),
            repo_root: "/".into(),
        })
        .unwrap();
        let path = log.path().to_path_buf();
        drop(log);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"record\":\"card\",\"ca").unwrap();
        drop(f);
        assert!(store.load("s").unwrap().cards.is_empty());

        fs::write(&path, "not json\n").unwrap();
        assert!(matches!(store.load("s"), Err(StoreError::Corrupt { .. })));
    }

    #[test]
    fn directory_is_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let name = store
            .session_dir("abc")
            .file_name()
            .unwrap()
            .to_string_lossy()
            .to_string();
        assert_eq!(name.len(), 64);
        assert_eq!(name, session_dir_name("abc"));
        assert_ne!(name, session_dir_name("abd"));
    }
}
