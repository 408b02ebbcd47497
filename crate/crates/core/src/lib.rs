//! Core algorithms and workflow state for labelforge, a self-hosted
//! text-labeling service.
//!
//! The crate is organized by concern:
//!
//! - [`domain`]: entities, the record state machine and the permission matrix
//! - [`vectorizer`]: tokenization and tf-idf featurization
//! - [`classifier`]: multinomial logistic regression and cross-validation
//! - [`active_learning`]: uncertainty measures, batch selection, retrain cycle
//! - [`irr`]: Cohen's and Fleiss' kappa, percent agreement, agreement matrices
//! - [`coordinator`]: assignment leasing, adjudication and dashboard statistics
//! - [`ingest`] and [`export`]: CSV upload parsing and zip archive production
//!
//! Everything here is synchronous and free of I/O beyond in-memory byte
//! buffers. The HTTP service wraps a [`coordinator::ProjectState`] per project
//! behind a single-writer lock.

pub mod active_learning;
pub mod classifier;
pub mod coordinator;
pub mod domain;
pub mod error;
pub mod export;
pub mod ids;
pub mod ingest;
pub mod irr;
pub mod stats;
pub mod synthetic;
pub mod vectorizer;

pub use active_learning::{Batch, BatchStatus, SelectionMethod, UncertaintyMethod};
pub use classifier::{LinearModel, Metrics, ModelSnapshot, ProbabilityVector};
pub use coordinator::{Assignment, AssignmentResolution, ProjectState, SubmitOutcome};
pub use domain::{
    Action, Annotation, AnnotationSource, CodebookInfo, Coder, LabelClass, Project, ProjectSettings, Record,
    RecordEvent, RecordStatus, Role,
};
pub use error::{Error, Result};
pub use ids::{AnnotationId, AssignmentId, BatchId, CoderId, LabelId, ProjectId, RecordId};
pub use vectorizer::{SparseVector, Vocabulary};
