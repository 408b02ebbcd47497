//! HTTP JSON service for labelforge: accounts and sessions, project
//! lifecycle, annotation and admin flows, dashboard metrics and exports.

pub mod app;
pub mod auth;
pub mod config;
pub mod error;
pub mod routes;
pub mod store;

use std::sync::Arc;

pub use app::App;
pub use config::ServiceConfig;
pub use error::{ApiError, ApiResult, ErrorBody};
pub use routes::{router, Access, Endpoint, ENDPOINTS};

/// Binds the configured port and serves until ctrl-c or SIGTERM, letting
/// in-flight requests finish.
pub async fn serve(app: Arc<App>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", app.config.port)).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let sweeper = app::spawn_sweeper(Arc::clone(&app));
    let result = axum::serve(listener, router(app))
        .with_graceful_shutdown(shutdown_signal())
        .await;
    sweeper.abort();
    result
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
    tracing::info!("shutting down");
}
