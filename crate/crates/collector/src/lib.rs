//! Survey collector: a small HTTP service that walks each annotator through
//! consent, Task 1, Task 2 and a profile page, and journals every accepted
//! page to disk.
//!
//! Every story gets two files in the data directory: `<story>.jsonl` holds
//! sessions and their accepted pages, `<story>.contacts.jsonl` holds the
//! optional contact addresses, which never appear in exports.

mod journal;
mod routes;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use charnet_core::corpus::CharacterRegistry;
use charnet_core::survey::{ProfileRecord, RespondentRecord, Task1EntryRecord, Task2CellRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use journal::Journal;
pub use routes::{
    CharacterList, ConsentPayload, CreateSession, ErrorBody, Schema, SessionCreated, SessionStatus,
    StageAccepted, Task1Payload, Task2Payload,
};

#[derive(Debug, Error)]
pub enum CollectorError {
    #[error("story id `{0}` may only use ASCII letters, digits, `-` and `_`")]
    InvalidStoryId(String),
    #[error("story `{0}` is configured twice")]
    DuplicateStory(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: record for unknown session {token}")]
    OrphanRecord { path: PathBuf, token: String },
    #[error("{path}: session {token} records {got} while at {expected}")]
    JournalOrder {
        path: PathBuf,
        token: String,
        expected: Stage,
        got: Stage,
    },
}

/// Survey pages in the order they must be submitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Consent,
    Task1,
    Task2,
    Profile,
    Done,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Consent, Stage::Task1, Stage::Task2, Stage::Profile, Stage::Done];

    pub fn next(self) -> Stage {
        match self {
            Stage::Consent => Stage::Task1,
            Stage::Task1 => Stage::Task2,
            Stage::Task2 => Stage::Profile,
            Stage::Profile | Stage::Done => Stage::Done,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Consent => "consent",
            Stage::Task1 => "task1",
            Stage::Task2 => "task2",
            Stage::Profile => "profile",
            Stage::Done => "done",
        }
    }

    /// Stages that accept a submission.
    pub fn parse_submittable(s: &str) -> Option<Stage> {
        Stage::ALL[..4].iter().copied().find(|st| st.as_str() == s)
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Journal line. The profile is stored without its contact address.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum JournalRecord {
    Session {
        token: String,
        seq: u64,
        created_at: u64,
    },
    Consent {
        token: String,
    },
    Task1 {
        token: String,
        entries: Vec<Task1EntryRecord>,
    },
    Task2 {
        token: String,
        cells: Vec<Task2CellRecord>,
    },
    Profile {
        token: String,
        profile: ProfileRecord,
    },
}

impl JournalRecord {
    fn token(&self) -> &str {
        match self {
            JournalRecord::Session { token, .. }
            | JournalRecord::Consent { token }
            | JournalRecord::Task1 { token, .. }
            | JournalRecord::Task2 { token, .. }
            | JournalRecord::Profile { token, .. } => token,
        }
    }

    fn stage(&self) -> Option<Stage> {
        match self {
            JournalRecord::Session { .. } => None,
            JournalRecord::Consent { .. } => Some(Stage::Consent),
            JournalRecord::Task1 { .. } => Some(Stage::Task1),
            JournalRecord::Task2 { .. } => Some(Stage::Task2),
            JournalRecord::Profile { .. } => Some(Stage::Profile),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContactRecord {
    token: String,
    email: String,
}

#[derive(Debug)]
struct Session {
    token: String,
    story_id: String,
    seq: u64,
    created_at: u64,
    stage: Stage,
    task1: Option<Vec<Task1EntryRecord>>,
    task2: Option<Vec<Task2CellRecord>>,
}

impl Session {
    /// Applies an accepted page. The caller has already checked the stage.
    fn apply(&mut self, record: &JournalRecord) -> Option<RespondentRecord> {
        match record {
            JournalRecord::Task1 { entries, .. } => self.task1 = Some(entries.clone()),
            JournalRecord::Task2 { cells, .. } => self.task2 = Some(cells.clone()),
            JournalRecord::Profile { profile, .. } => {
                self.stage = Stage::Done;
                return Some(RespondentRecord {
                    respondent_id: self.token.clone(),
                    task1: self.task1.take(),
                    task2: self.task2.take(),
                    profile: Some(ProfileRecord {
                        contact_email: None,
                        ..profile.clone()
                    }),
                });
            }
            JournalRecord::Consent { .. } | JournalRecord::Session { .. } => {}
        }
        self.stage = self.stage.next();
        None
    }
}

struct Story {
    registry: CharacterRegistry,
    journal: Arc<Journal>,
    contacts: Arc<Journal>,
    /// Finished respondents keyed by creation sequence.
    completed: RwLock<BTreeMap<u64, RespondentRecord>>,
}

struct State {
    stories: BTreeMap<String, Story>,
    sessions: RwLock<HashMap<String, Arc<tokio::sync::Mutex<Session>>>>,
    next_seq: AtomicU64,
}

/// Running collector; cheap to clone.
#[derive(Clone)]
pub struct Collector {
    state: Arc<State>,
}

fn valid_story_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl Collector {
    /// Opens (or creates) the journals for every story and replays them.
    pub fn open(
        data_dir: &Path,
        registries: impl IntoIterator<Item = CharacterRegistry>,
    ) -> Result<Self, CollectorError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CollectorError::Io { path, source }
        };
        std::fs::create_dir_all(data_dir).map_err(io_err(data_dir))?;
        let mut stories = BTreeMap::new();
        let mut sessions = HashMap::new();
        let mut max_seq = None;
        for registry in registries {
            let id = registry.story_id().to_string();
            if !valid_story_id(&id) {
                return Err(CollectorError::InvalidStoryId(id));
            }
            if stories.contains_key(&id) {
                return Err(CollectorError::DuplicateStory(id));
            }
            let path = data_dir.join(format!("{id}.jsonl"));
            let (journal, records) = Journal::open::<JournalRecord>(&path).map_err(io_err(&path))?;
            let cpath = data_dir.join(format!("{id}.contacts.jsonl"));
            let (contacts, _) = Journal::open::<ContactRecord>(&cpath).map_err(io_err(&cpath))?;
            let mut completed = BTreeMap::new();
            for rec in records {
                if let JournalRecord::Session {
                    token,
                    seq,
                    created_at,
                } = &rec
                {
                    max_seq = max_seq.max(Some(*seq));
                    let session = Session {
                        token: token.clone(),
                        story_id: id.clone(),
                        seq: *seq,
                        created_at: *created_at,
                        stage: Stage::Consent,
                        task1: None,
                        task2: None,
                    };
                    sessions.insert(token.clone(), session);
                    continue;
                }
                let session = sessions
                    .get_mut(rec.token())
                    .filter(|s| s.story_id == id)
                    .ok_or_else(|| CollectorError::OrphanRecord {
                        path: path.clone(),
                        token: rec.token().to_string(),
                    })?;
                let got = rec.stage().expect("non-session record");
                if got != session.stage {
                    return Err(CollectorError::JournalOrder {
                        path: path.clone(),
                        token: session.token.clone(),
                        expected: session.stage,
                        got,
                    });
                }
                if let Some(done) = session.apply(&rec) {
                    completed.insert(session.seq, done);
                }
            }
            log::info!(
                "story {id}: {} sessions, {} completed",
                sessions.values().filter(|s| s.story_id == id).count(),
                completed.len()
            );
            stories.insert(
                id,
                Story {
                    registry,
                    journal: Arc::new(journal),
                    contacts: Arc::new(contacts),
                    completed: RwLock::new(completed),
                },
            );
        }
        let sessions = sessions
            .into_iter()
            .map(|(k, s)| (k, Arc::new(tokio::sync::Mutex::new(s))))
            .collect();
        Ok(Collector {
            state: Arc::new(State {
                stories,
                sessions: RwLock::new(sessions),
                next_seq: AtomicU64::new(max_seq.map_or(0, |s| s + 1)),
            }),
        })
    }

    pub fn story_ids(&self) -> impl Iterator<Item = &str> {
        self.state.stories.keys().map(String::as_str)
    }

    pub fn router(&self) -> axum::Router {
        routes::router(self.clone())
    }

    fn story(&self, id: &str) -> Option<&Story> {
        self.state.stories.get(id)
    }

    fn session(&self, token: &str) -> Option<Arc<tokio::sync::Mutex<Session>>> {
        self.state
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(token)
            .cloned()
    }

    fn next_seq(&self) -> u64 {
        self.state.next_seq.fetch_add(1, Ordering::SeqCst)
    }
}

async fn append(journal: &Arc<Journal>, record: impl Serialize + Send + 'static) -> std::io::Result<()> {
    let journal = Arc::clone(journal);
    tokio::task::spawn_blocking(move || journal.append(&record))
        .await
        .map_err(std::io::Error::other)?
}

/// Serves the collector until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, collector: Collector) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        log::info!("collector listening on http://{addr}/v1");
    }
    axum::serve(listener, collector.router()).await
}
