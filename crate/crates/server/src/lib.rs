//! Socket and HTTP front end: one actor task per open model, speaking the
//! text protocol at `/model/{id}`.

pub mod actor;
pub mod app;
pub mod config;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use graphdsl_core::meta::{parse_metamodel, MetaError};
use graphdsl_core::service::{HookRegistry, ServiceConfig};
use tokio::net::TcpListener;

pub use app::{router, AppError, AppState};
pub use config::{ConfigError, ServerConfig};
pub use store::DirectoryStore;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read metamodel {path}: {source}")]
    ReadMetamodel { path: String, source: std::io::Error },
    #[error("invalid metamodel: {0}")]
    Metamodel(#[from] MetaError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Builds the shared state a config describes.
pub fn state_from_config(config: &ServerConfig, hooks: HookRegistry) -> Result<AppState, ServeError> {
    let text = std::fs::read_to_string(&config.metamodel)
        .map_err(|source| ServeError::ReadMetamodel { path: config.metamodel.display().to_string(), source })?;
    let mm = Arc::new(parse_metamodel(&text)?);
    let service = ServiceConfig { seed: config.seed, ..ServiceConfig::default() };
    let mut state = AppState::new(mm, Arc::new(hooks), service, config.auto_create);
    if let Some(dir) = &config.persistence_dir {
        state = state.with_persistence(Arc::new(DirectoryStore::open(dir)?));
    }
    Ok(state)
}

/// Binds and serves in the background; returns the bound address, which
/// matters when the config asks for port 0.
pub async fn start(config: &ServerConfig, hooks: HookRegistry) -> Result<SocketAddr, ServeError> {
    let state = Arc::new(state_from_config(config, hooks)?);
    let listener = TcpListener::bind(config.listen).await?;
    let addr = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router(state)).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok(addr)
}

/// Serves until ctrl-c.
pub async fn serve(config: &ServerConfig, hooks: HookRegistry) -> Result<(), ServeError> {
    let state = Arc::new(state_from_config(config, hooks)?);
    let listener = TcpListener::bind(config.listen).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
