//! Shared service state: loaded projects behind per-project locks, the id
//! index that maps records, assignments and annotations to their project,
//! and the background retrain and lease-sweep workers.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::Utc;
use labelforge_core::active_learning::{commit_cycle, compute_cycle, prepare_cycle};
use labelforge_core::coordinator::ChangeSet;
use labelforge_core::{AnnotationId, AssignmentId, ProjectId, ProjectState, RecordId};

use crate::config::ServiceConfig;
use crate::error::{ApiError, ApiResult};
use crate::store::{Store, StoreError};

#[derive(Default)]
struct EntityIndex {
    records: HashMap<RecordId, ProjectId>,
    assignments: HashMap<AssignmentId, ProjectId>,
    annotations: HashMap<AnnotationId, ProjectId>,
}

impl EntityIndex {
    fn add_project(&mut self, state: &ProjectState) {
        let id = state.project.id;
        self.records.extend(state.records().iter().map(|r| (r.id, id)));
        self.assignments.extend(state.assignments().iter().map(|a| (a.id, id)));
        self.annotations.extend(state.annotations().iter().map(|a| (a.id, id)));
    }

    fn add_changes(&mut self, project: ProjectId, changes: &ChangeSet) {
        self.records.extend(changes.records.iter().map(|r| (*r, project)));
        self.assignments.extend(changes.assignments.iter().map(|a| (*a, project)));
        self.annotations.extend(changes.annotations.iter().map(|a| (*a, project)));
    }
}

pub struct App {
    pub config: ServiceConfig,
    pub store: Store,
    projects: RwLock<HashMap<ProjectId, Arc<Mutex<ProjectState>>>>,
    index: RwLock<EntityIndex>,
    cycling: Mutex<HashSet<ProjectId>>,
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        tracing::error!(error = %e, "storage failure");
        ApiError::internal(e.to_string())
    }
}

fn lock(project: &Mutex<ProjectState>) -> MutexGuard<'_, ProjectState> {
    project.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl App {
    /// Opens the store and loads every project into memory.
    pub fn open(config: ServiceConfig) -> Result<Arc<Self>, StoreError> {
        let store = Store::open(&config.data_dir)?;
        let mut projects = HashMap::new();
        let mut index = EntityIndex::default();
        for id in store.project_ids()? {
            if let Some(state) = store.load_project(id)? {
                index.add_project(&state);
                projects.insert(id, Arc::new(Mutex::new(state)));
            }
        }
        let app = Arc::new(Self {
            config,
            store,
            projects: RwLock::new(projects),
            index: RwLock::new(index),
            cycling: Mutex::new(HashSet::new()),
        });
        // batches completed before a shutdown still need their cycle
        for id in app.project_ids() {
            let pending = app.project(id).map(|p| lock(&p).needs_cycle()).unwrap_or(false);
            if pending {
                app.schedule_cycle(id);
            }
        }
        Ok(app)
    }

    pub fn project_ids(&self) -> Vec<ProjectId> {
        self.projects.read().expect("project map").keys().copied().collect()
    }

    pub fn project(&self, id: ProjectId) -> ApiResult<Arc<Mutex<ProjectState>>> {
        self.projects
            .read()
            .expect("project map")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("project"))
    }

    pub fn project_of_record(&self, id: RecordId) -> ApiResult<ProjectId> {
        let index = self.index.read().expect("index");
        index.records.get(&id).copied().ok_or_else(|| ApiError::not_found("record"))
    }

    pub fn project_of_assignment(&self, id: AssignmentId) -> ApiResult<ProjectId> {
        let index = self.index.read().expect("index");
        index.assignments.get(&id).copied().ok_or_else(|| ApiError::not_found("assignment"))
    }

    pub fn project_of_annotation(&self, id: AnnotationId) -> ApiResult<ProjectId> {
        let index = self.index.read().expect("index");
        index.annotations.get(&id).copied().ok_or_else(|| ApiError::not_found("annotation"))
    }

    /// Persists a freshly created project and starts serving it.
    pub fn insert_project(self: &Arc<Self>, mut state: ProjectState, codebook: Option<&[u8]>) -> ApiResult<ProjectId> {
        let id = state.project.id;
        let changes = state.take_changes();
        self.store.persist(&state, &changes, codebook)?;
        self.index.write().expect("index").add_project(&state);
        let needs_cycle = state.needs_cycle();
        self.projects.write().expect("project map").insert(id, Arc::new(Mutex::new(state)));
        if needs_cycle {
            self.schedule_cycle(id);
        }
        Ok(id)
    }

    pub fn read<T>(&self, id: ProjectId, f: impl FnOnce(&ProjectState) -> ApiResult<T>) -> ApiResult<T> {
        let project = self.project(id)?;
        let state = lock(&project);
        f(&state)
    }

    /// Runs `f` under the project's lock and writes whatever it changed, even
    /// when it fails, so memory and disk never diverge. A completed batch
    /// schedules the retrain cycle.
    pub fn mutate<T>(
        self: &Arc<Self>,
        id: ProjectId,
        f: impl FnOnce(&mut ProjectState) -> ApiResult<T>,
    ) -> ApiResult<T> {
        let project = self.project(id)?;
        let mut state = lock(&project);
        let result = f(&mut state);
        self.flush(&mut state)?;
        let needs_cycle = state.needs_cycle();
        drop(state);
        if needs_cycle {
            self.schedule_cycle(id);
        }
        result
    }

    /// Async wrapper that keeps lock waits and disk writes off the reactor.
    pub async fn mutate_async<T: Send + 'static>(
        self: &Arc<Self>,
        id: ProjectId,
        f: impl FnOnce(&mut ProjectState) -> ApiResult<T> + Send + 'static,
    ) -> ApiResult<T> {
        let app = Arc::clone(self);
        tokio::task::spawn_blocking(move || app.mutate(id, f))
            .await
            .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
    }

    pub async fn read_async<T: Send + 'static>(
        self: &Arc<Self>,
        id: ProjectId,
        f: impl FnOnce(&ProjectState) -> ApiResult<T> + Send + 'static,
    ) -> ApiResult<T> {
        let app = Arc::clone(self);
        tokio::task::spawn_blocking(move || app.read(id, f))
            .await
            .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
    }

    fn flush(&self, state: &mut ProjectState) -> ApiResult<()> {
        let changes = state.take_changes();
        if changes.is_empty() {
            return Ok(());
        }
        let id = state.project.id;
        if let Err(e) = self.store.persist(state, &changes, None) {
            // fall back to the last durable state
            if let Ok(Some(stored)) = self.store.load_project(id) {
                *state = stored;
            }
            return Err(e.into());
        }
        self.index.write().expect("index").add_changes(id, &changes);
        Ok(())
    }

    /// True while a retrain cycle is queued or running for the project.
    pub fn cycle_in_progress(&self, id: ProjectId) -> bool {
        self.cycling.lock().expect("cycle set").contains(&id)
    }

    /// Starts the retrain worker for `id` unless one is already running.
    pub fn schedule_cycle(self: &Arc<Self>, id: ProjectId) {
        if !self.cycling.lock().expect("cycle set").insert(id) {
            return;
        }
        let app = Arc::clone(self);
        let spawned = std::thread::Builder::new()
            .name(format!("retrain-{id}"))
            .spawn(move || app.cycle_worker(id));
        if let Err(e) = spawned {
            tracing::error!(project = %id, error = %e, "could not start retrain worker");
            self.cycling.lock().expect("cycle set").remove(&id);
        }
    }

    /// Prepares and commits under the lock, trains without it. Loops until
    /// no completed batch awaits a cycle.
    fn cycle_worker(self: Arc<Self>, id: ProjectId) {
        let Ok(project) = self.project(id) else {
            self.cycling.lock().expect("cycle set").remove(&id);
            return;
        };
        loop {
            let input = {
                let state = lock(&project);
                if !state.needs_cycle() {
                    // released while holding the project lock so a batch
                    // completing right now reschedules us
                    self.cycling.lock().expect("cycle set").remove(&id);
                    return;
                }
                match prepare_cycle(&state) {
                    Ok(input) => input,
                    Err(e) => {
                        tracing::error!(project = %id, error = %e, "cycle preparation failed");
                        self.cycling.lock().expect("cycle set").remove(&id);
                        return;
                    }
                }
            };
            let outcome = compute_cycle(&input, Utc::now());
            let mut state = lock(&project);
            let committed = outcome.and_then(|o| commit_cycle(&mut state, o));
            let flushed = self.flush(&mut state);
            drop(state);
            let stop = |what: &str, error: String| {
                tracing::error!(project = %id, error, "{what}");
                self.cycling.lock().expect("cycle set").remove(&id);
            };
            match committed {
                Ok(summary) => {
                    tracing::info!(project = %id, next_batch = ?summary.next_batch, "retrain cycle committed");
                }
                Err(labelforge_core::Error::Conflict(reason)) => {
                    tracing::debug!(project = %id, reason, "cycle raced a mutation; retrying");
                }
                Err(e) => return stop("retrain cycle failed", e.to_string()),
            }
            if let Err(e) = flushed {
                return stop("could not persist retrain cycle", e.to_string());
            }
        }
    }

    /// Expires lapsed leases in every project; returns the total.
    pub fn sweep_leases(self: &Arc<Self>) -> usize {
        let now = Utc::now();
        self.project_ids()
            .into_iter()
            .map(|id| self.mutate(id, |s| Ok(s.expire_leases(now))).unwrap_or(0))
            .sum()
    }
}

/// Periodically expires leases and stale sessions until the runtime stops.
pub fn spawn_sweeper(app: Arc<App>) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval(app.config.lease_sweep_interval);
        ticker.tick().await;
        loop {
            ticker.tick().await;
            let worker = Arc::clone(&app);
            let swept = tokio::task::spawn_blocking(move || {
                let leases = worker.sweep_leases();
                let sessions = worker.store.purge_sessions(Utc::now()).unwrap_or(0);
                (leases, sessions)
            })
            .await;
            if let Ok((leases, sessions)) = swept {
                if leases + sessions > 0 {
                    tracing::debug!(leases, sessions, "sweep");
                }
            }
        }
    })
}
