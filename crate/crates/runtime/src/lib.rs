//! Networked guidance runtime: a WebSocket stream endpoint that runs task
//! packages against per-frame detections, plus the HTTP authoring API.

pub mod api;
pub mod config;
pub mod flow;
pub mod modules;
pub mod protocol;
pub mod session;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use stepwise_core::labeling::{PluginDetector, TemplateDetectorModel};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use api::{router, AppState};
pub use config::{DetectorBinding, ServiceConfig};
pub use flow::{FlowControl, FlowError, DEFAULT_MAX_TOKENS};
pub use modules::{CognitiveModule, DetectorModule, Endpoint, ModuleBinding, PassThrough, PubSub, StreamKind};
pub use protocol::{MessageType, StreamMessage, PROTOCOL_VERSION};
pub use session::Runtime;
pub use store::{PackageStore, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("detector: {0}")]
    Detector(#[from] stepwise_core::labeling::LabelingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Module bus for a detector binding; pass-through is always subscribed.
pub fn build_bus(binding: &DetectorBinding) -> Result<PubSub, ServiceError> {
    let mut bus = PubSub::new();
    bus.subscribe(Arc::new(PassThrough));
    match binding {
        DetectorBinding::None => {}
        DetectorBinding::Template(path) => {
            let model = TemplateDetectorModel::load(path)?;
            bus.subscribe(Arc::new(DetectorModule::new("template-detector", Endpoint::InProcess, Arc::new(model))));
        }
        DetectorBinding::Plugin(command) => {
            let mut parts = command.split_whitespace();
            let program = parts.next().unwrap_or_default();
            let args: Vec<String> = parts.map(str::to_string).collect();
            let plugin = PluginDetector::spawn(program, &args)?;
            bus.subscribe(Arc::new(DetectorModule::new(
                "detector-plugin",
                Endpoint::Plugin {
                    command: command.clone(),
                },
                Arc::new(plugin),
            )));
        }
    }
    Ok(bus)
}

/// Loads packages and modules for `config`.
pub fn build_state(config: &ServiceConfig) -> Result<AppState, ServiceError> {
    let store = match &config.package_dir {
        Some(dir) => PackageStore::open(dir)?,
        None => PackageStore::in_memory(),
    };
    let bus = build_bus(&config.detector)?;
    Ok(AppState::new(Arc::new(Runtime::new(Arc::new(store), bus, config.max_tokens))))
}

pub struct RunningService {
    pub addr: SocketAddr,
    pub state: AppState,
    pub handle: JoinHandle<std::io::Result<()>>,
}

/// Binds and serves in a background task.
pub async fn start(state: AppState, bind_addr: &str) -> Result<RunningService, ServiceError> {
    let listener = TcpListener::bind(bind_addr).await?;
    let addr = listener.local_addr()?;
    let app = router(state.clone());
    let handle = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok(RunningService { addr, state, handle })
}

/// Runs until the server stops.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = build_state(&config)?;
    let running = start(state, &config.bind_addr).await?;
    tracing::info!(addr = %running.addr, packages = ?running.state.runtime.store.names(), "serving");
    running.handle.await.map_err(std::io::Error::other)??;
    Ok(())
}
