//! HTTP service that serves rollout archives to reviewers and records their
//! scores and pairwise preferences.

use thiserror::Error;

pub mod archive;
pub mod server;
pub mod store;

pub use archive::Archive;
pub use server::{router, serve, AppState, ServeOptions};
pub use store::{Annotation, AnnotationStore, LogRecord, Preference, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {message}")]
    BindFailure { addr: String, message: String },
    #[error("archive: {0}")]
    Archive(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("server: {0}")]
    Server(String),
}
