//! Embedded persistence. Each entity is stored as JSON under a
//! `"{project}/{entity}"` key so a project loads with one range scan per
//! table; every coordinator mutation is written in a single transaction.

use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use labelforge_core::coordinator::{ChangeSet, ProjectParts};
use labelforge_core::{Coder, CoderId, ProjectId, ProjectState};
use redb::{Database, ReadableTable, TableDefinition, WriteTransaction};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

type Table = TableDefinition<'static, &'static str, &'static [u8]>;

const USERS: Table = TableDefinition::new("users");
const USERNAMES: Table = TableDefinition::new("usernames");
const SESSIONS: Table = TableDefinition::new("sessions");
const PROJECTS: Table = TableDefinition::new("projects");
const MEMBERS: Table = TableDefinition::new("members");
const VOCABULARIES: Table = TableDefinition::new("vocabularies");
const CODEBOOKS: Table = TableDefinition::new("codebooks");
const RECORDS: Table = TableDefinition::new("records");
const ANNOTATIONS: Table = TableDefinition::new("annotations");
const ASSIGNMENTS: Table = TableDefinition::new("assignments");
const BATCHES: Table = TableDefinition::new("batches");
const SNAPSHOTS: Table = TableDefinition::new("snapshots");

const ALL_TABLES: [Table; 12] = [
    USERS, USERNAMES, SESSIONS, PROJECTS, MEMBERS, VOCABULARIES, CODEBOOKS, RECORDS, ANNOTATIONS,
    ASSIGNMENTS, BATCHES, SNAPSHOTS,
];

pub const DATABASE_FILE: &str = "labelforge.redb";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage: {0}")]
    Storage(#[from] redb::Error),
    #[error("corrupt entry: {0}")]
    Json(#[from] serde_json::Error),
    #[error("inconsistent project data: {0}")]
    Project(#[from] labelforge_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("username {0:?} is taken")]
    UsernameTaken(String),
}

macro_rules! storage_error {
    ($($t:ty),*) => {
        $(impl From<$t> for StoreError {
            fn from(e: $t) -> Self {
                StoreError::Storage(e.into())
            }
        })*
    };
}
storage_error!(
    redb::DatabaseError,
    redb::TransactionError,
    redb::TableError,
    redb::StorageError,
    redb::CommitError
);

pub type StoreResult<T> = Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredUser {
    pub coder: Coder,
    pub password_hash: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub coder_id: CoderId,
    pub expires_at: DateTime<Utc>,
}

pub struct Store {
    db: Database,
}

fn key(project: ProjectId, entity: impl std::fmt::Display) -> String {
    format!("{project}/{entity}")
}

fn ordinal(i: usize) -> String {
    format!("{i:010}")
}

fn put<T: Serialize>(txn: &WriteTransaction, table: Table, key: &str, value: &T) -> StoreResult<()> {
    let bytes = serde_json::to_vec(value)?;
    txn.open_table(table)?.insert(key, bytes.as_slice())?;
    Ok(())
}

impl Store {
    pub fn open(dir: &Path) -> StoreResult<Self> {
        std::fs::create_dir_all(dir)?;
        let db = Database::create(dir.join(DATABASE_FILE))?;
        let txn = db.begin_write()?;
        for table in ALL_TABLES {
            txn.open_table(table)?;
        }
        txn.commit()?;
        Ok(Self { db })
    }

    fn get<T: DeserializeOwned>(&self, table: Table, key: &str) -> StoreResult<Option<T>> {
        let txn = self.db.begin_read()?;
        let table = txn.open_table(table)?;
        let value = table.get(key)?;
        Ok(match value {
            Some(v) => Some(serde_json::from_slice(v.value())?),
            None => None,
        })
    }

    fn scan<T: DeserializeOwned>(&self, table: Table, prefix: &str) -> StoreResult<Vec<T>> {
        let txn = self.db.begin_read()?;
        let table = txn.open_table(table)?;
        // '0' sorts right after '/', so this covers exactly the prefix
        let end = format!("{}0", prefix.trim_end_matches('/'));
        let mut out = Vec::new();
        for entry in table.range(prefix..end.as_str())? {
            let (_, v) = entry?;
            out.push(serde_json::from_slice(v.value())?);
        }
        Ok(out)
    }

    // ---- accounts ----------------------------------------------------------

    pub fn insert_user(&self, user: &StoredUser) -> StoreResult<()> {
        let txn = self.db.begin_write()?;
        {
            let mut names = txn.open_table(USERNAMES)?;
            if names.get(user.coder.username.as_str())?.is_some() {
                return Err(StoreError::UsernameTaken(user.coder.username.clone()));
            }
            let id = user.coder.id.to_string();
            names.insert(user.coder.username.as_str(), id.as_bytes())?;
            put(&txn, USERS, &id, user)?;
        }
        txn.commit()?;
        Ok(())
    }

    pub fn user(&self, id: CoderId) -> StoreResult<Option<StoredUser>> {
        self.get(USERS, &id.to_string())
    }

    pub fn user_by_name(&self, username: &str) -> StoreResult<Option<StoredUser>> {
        let id = {
            let txn = self.db.begin_read()?;
            let table = txn.open_table(USERNAMES)?;
            let found = table.get(username)?;
            match found {
                Some(v) => String::from_utf8_lossy(v.value()).into_owned(),
                None => return Ok(None),
            }
        };
        self.get(USERS, &id)
    }

    pub fn users(&self) -> StoreResult<Vec<StoredUser>> {
        let txn = self.db.begin_read()?;
        let table = txn.open_table(USERS)?;
        let mut out = Vec::new();
        for entry in table.iter()? {
            let (_, v) = entry?;
            out.push(serde_json::from_slice(v.value())?);
        }
        Ok(out)
    }

    pub fn insert_session(&self, session: &Session) -> StoreResult<()> {
        let txn = self.db.begin_write()?;
        put(&txn, SESSIONS, &session.token, session)?;
        txn.commit()?;
        Ok(())
    }

    pub fn session(&self, token: &str) -> StoreResult<Option<Session>> {
        self.get(SESSIONS, token)
    }

    pub fn delete_session(&self, token: &str) -> StoreResult<()> {
        let txn = self.db.begin_write()?;
        txn.open_table(SESSIONS)?.remove(token)?;
        txn.commit()?;
        Ok(())
    }

    /// Drops sessions that expired before `now`; returns how many.
    pub fn purge_sessions(&self, now: DateTime<Utc>) -> StoreResult<usize> {
        let txn = self.db.begin_write()?;
        let removed = {
            let mut table = txn.open_table(SESSIONS)?;
            let mut expired = Vec::new();
            for entry in table.iter()? {
                let (k, v) = entry?;
                let session: Session = serde_json::from_slice(v.value())?;
                if session.expires_at < now {
                    expired.push(k.value().to_string());
                }
            }
            for token in &expired {
                table.remove(token.as_str())?;
            }
            expired.len()
        };
        txn.commit()?;
        Ok(removed)
    }

    // ---- projects ----------------------------------------------------------

    pub fn project_ids(&self) -> StoreResult<Vec<ProjectId>> {
        let txn = self.db.begin_read()?;
        let table = txn.open_table(PROJECTS)?;
        let mut out = Vec::new();
        for entry in table.iter()? {
            let (k, _) = entry?;
            let id = ProjectId::from_str(k.value())
                .map_err(|_| labelforge_core::Error::InvalidInput(format!("bad project key {}", k.value())))?;
            out.push(id);
        }
        Ok(out)
    }

    pub fn load_project(&self, id: ProjectId) -> StoreResult<Option<ProjectState>> {
        let Some(project) = self.get(PROJECTS, &id.to_string())? else {
            return Ok(None);
        };
        let prefix = format!("{id}/");
        let vocabulary = self
            .get(VOCABULARIES, &id.to_string())?
            .ok_or_else(|| labelforge_core::Error::InvalidInput(format!("project {id} has no vocabulary")))?;
        let parts = ProjectParts {
            project,
            records: self.scan(RECORDS, &prefix)?,
            annotations: self.scan(ANNOTATIONS, &prefix)?,
            assignments: self.scan(ASSIGNMENTS, &prefix)?,
            batches: self.scan(BATCHES, &prefix)?,
            snapshots: self.scan(SNAPSHOTS, &prefix)?,
            vocabulary,
            members: self.get(MEMBERS, &id.to_string())?.unwrap_or_default(),
        };
        Ok(Some(ProjectState::from_parts(parts)?))
    }

    /// Writes every entity named in `changes`, plus the codebook bytes when
    /// given, in one transaction.
    pub fn persist(&self, state: &ProjectState, changes: &ChangeSet, codebook: Option<&[u8]>) -> StoreResult<()> {
        let id = state.project.id;
        let txn = self.db.begin_write()?;
        if changes.project {
            put(&txn, PROJECTS, &id.to_string(), &state.project)?;
        }
        if changes.vocabulary {
            put(&txn, VOCABULARIES, &id.to_string(), &*state.vocabulary())?;
        }
        if changes.members {
            let members: Vec<&Coder> = state.members().collect();
            put(&txn, MEMBERS, &id.to_string(), &members)?;
        }
        for r in &changes.records {
            if let Some(record) = state.record(*r) {
                put(&txn, RECORDS, &key(id, r), record)?;
            }
        }
        for a in &changes.annotations {
            if let Some(annotation) = state.annotation(*a) {
                put(&txn, ANNOTATIONS, &key(id, a), annotation)?;
            }
        }
        for a in &changes.assignments {
            if let Some(assignment) = state.assignment(*a) {
                put(&txn, ASSIGNMENTS, &key(id, a), assignment)?;
            }
        }
        for &b in &changes.batches {
            if let Some(batch) = state.batches().get(b) {
                put(&txn, BATCHES, &key(id, ordinal(b)), batch)?;
            }
        }
        for &s in &changes.snapshots {
            if let Some(snapshot) = state.snapshots().get(s) {
                put(&txn, SNAPSHOTS, &key(id, ordinal(s)), snapshot)?;
            }
        }
        if let Some(bytes) = codebook {
            txn.open_table(CODEBOOKS)?.insert(id.to_string().as_str(), bytes)?;
        }
        txn.commit()?;
        Ok(())
    }

    pub fn codebook(&self, project: ProjectId) -> StoreResult<Option<Vec<u8>>> {
        let txn = self.db.begin_read()?;
        let table = txn.open_table(CODEBOOKS)?;
        let value = table.get(project.to_string().as_str())?;
        Ok(value.map(|v| v.value().to_vec()))
    }
}
