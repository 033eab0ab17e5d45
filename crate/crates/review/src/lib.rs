//! Review service: serves classified records with their evidence, journals
//! expert decisions and staged refinements, and scores the classifier
//! against the decisions made so far.

pub mod api;
pub mod decision;
pub mod refinement;
pub mod state;

use std::sync::{Arc, RwLock};

pub use api::router;
pub use state::ReviewState;

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: ReviewState) -> std::io::Result<()> {
    axum::serve(listener, router(Arc::new(RwLock::new(state)))).await
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/review.md")]
mod book {}
