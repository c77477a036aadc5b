use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use graphdsl_core::ids::ElementId;
use graphdsl_core::meta::Metamodel;
use graphdsl_core::model::GraphModelInstance;
use graphdsl_core::service::{HookRegistry, ModelService, PersistError, Persistence, ServiceConfig};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::mpsc::{unbounded_channel, UnboundedSender};

use crate::actor::{self, ModelRequest};

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("invalid model id {0:?}")]
    BadId(String),
    #[error("unknown model {0}")]
    UnknownModel(ElementId),
    #[error("model {0} already exists")]
    ModelExists(ElementId),
    #[error("this server only hosts {served:?} models, not {requested:?}")]
    WrongMetamodel { served: String, requested: String },
    #[error(transparent)]
    Persist(#[from] PersistError),
}

impl AppError {
    fn status(&self) -> StatusCode {
        match self {
            AppError::BadId(_) | AppError::WrongMetamodel { .. } => StatusCode::BAD_REQUEST,
            AppError::UnknownModel(_) => StatusCode::NOT_FOUND,
            AppError::ModelExists(_) => StatusCode::CONFLICT,
            AppError::Persist(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

/// Everything the handlers share: the language, and one actor per open model.
pub struct AppState {
    mm: Arc<Metamodel>,
    hooks: Arc<HookRegistry>,
    service: ServiceConfig,
    auto_create: bool,
    persistence: Option<Arc<dyn Persistence>>,
    models: Mutex<BTreeMap<ElementId, UnboundedSender<ModelRequest>>>,
    sessions: AtomicU64,
    ids: Mutex<StdRng>,
}

impl AppState {
    pub fn new(mm: Arc<Metamodel>, hooks: Arc<HookRegistry>, service: ServiceConfig, auto_create: bool) -> Self {
        let ids = Mutex::new(StdRng::seed_from_u64(service.seed));
        AppState {
            mm,
            hooks,
            service,
            auto_create,
            persistence: None,
            models: Mutex::new(BTreeMap::new()),
            sessions: AtomicU64::new(1),
            ids,
        }
    }

    pub fn with_persistence(mut self, p: Arc<dyn Persistence>) -> Self {
        self.persistence = Some(p);
        self
    }

    pub fn metamodel(&self) -> &Metamodel {
        &self.mm
    }

    fn spawn(&self, model: GraphModelInstance) -> UnboundedSender<ModelRequest> {
        let mut svc = ModelService::new(model, Arc::clone(&self.mm), Arc::clone(&self.hooks), self.service.clone());
        if let Some(p) = &self.persistence {
            svc = svc.with_persistence(Arc::clone(p));
        }
        actor::spawn(svc)
    }

    fn exists(&self, models: &BTreeMap<ElementId, UnboundedSender<ModelRequest>>, id: ElementId) -> bool {
        models.contains_key(&id) || self.persistence.as_ref().is_some_and(|p| p.model_ids().contains(&id))
    }

    /// The actor for `id`: already running, loaded from persistence, or
    /// freshly created when auto-create is on.
    pub fn open(&self, id: ElementId) -> Result<UnboundedSender<ModelRequest>, AppError> {
        let mut models = self.models.lock().unwrap();
        if let Some(tx) = models.get(&id) {
            if !tx.is_closed() {
                return Ok(tx.clone());
            }
        }
        let loaded = match &self.persistence {
            Some(p) => p.load(id)?,
            None => None,
        };
        let model = match loaded {
            Some(m) => m,
            None if self.auto_create => self.fresh(id)?,
            None => return Err(AppError::UnknownModel(id)),
        };
        let tx = self.spawn(model);
        models.insert(id, tx.clone());
        Ok(tx)
    }

    fn fresh(&self, id: ElementId) -> Result<GraphModelInstance, AppError> {
        let model = GraphModelInstance::new(id, self.mm.graph_model_name());
        if let Some(p) = &self.persistence {
            p.persist(&model)?;
        }
        Ok(model)
    }

    /// Creates an empty model; a random id is drawn when none is given.
    pub fn create(&self, id: Option<ElementId>) -> Result<ElementId, AppError> {
        let mut models = self.models.lock().unwrap();
        let id = match id {
            Some(id) if self.exists(&models, id) => return Err(AppError::ModelExists(id)),
            Some(id) => id,
            None => {
                let mut rng = self.ids.lock().unwrap();
                loop {
                    let id = ElementId::random(&mut *rng);
                    if !self.exists(&models, id) {
                        break id;
                    }
                }
            }
        };
        let model = self.fresh(id)?;
        models.insert(id, self.spawn(model));
        Ok(id)
    }

    pub fn list(&self) -> Vec<ElementId> {
        let mut ids: Vec<ElementId> = self.models.lock().unwrap().keys().copied().collect();
        if let Some(p) = &self.persistence {
            ids.extend(p.model_ids());
        }
        ids.sort();
        ids.dedup();
        ids
    }

    fn next_session(&self) -> u64 {
        self.sessions.fetch_add(1, Ordering::Relaxed)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/model/{id}", get(socket))
        .route("/models", get(list_models).post(create_model))
        .route("/meta", get(meta))
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .with_state(state)
}

fn parse_id(raw: &str) -> Result<ElementId, AppError> {
    raw.parse().map_err(|_| AppError::BadId(raw.to_string()))
}

#[derive(Deserialize)]
struct UserQuery {
    #[serde(default = "anonymous")]
    user: String,
}

fn anonymous() -> String {
    "anonymous".into()
}

async fn socket(
    State(state): State<Arc<AppState>>,
    Path(raw): Path<String>,
    Query(q): Query<UserQuery>,
    ws: Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> Result<Response, AppError> {
    let id = parse_id(&raw)?;
    let model = state.open(id)?;
    let ws = match ws {
        Ok(ws) => ws,
        Err(rejection) => return Ok(rejection.into_response()),
    };
    let session = state.next_session();
    Ok(ws.on_upgrade(move |socket| session_loop(socket, model, session, q.user)))
}

async fn session_loop(socket: WebSocket, model: UnboundedSender<ModelRequest>, session: u64, user: String) {
    let (mut sink, mut stream) = socket.split();
    let (outbox, mut frames) = unbounded_channel::<String>();
    if model.send(ModelRequest::Connect { session, user, outbox }).is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        while let Some(frame) = frames.recv().await {
            if sink.send(WsMessage::Text(frame.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    while let Some(Ok(msg)) = stream.next().await {
        let req = match msg {
            WsMessage::Text(text) => ModelRequest::Text { session, text: text.to_string() },
            WsMessage::Binary(bytes) => ModelRequest::Binary { session, bytes: bytes.to_vec() },
            WsMessage::Close(_) => break,
            WsMessage::Ping(_) | WsMessage::Pong(_) => continue,
        };
        if model.send(req).is_err() {
            break;
        }
    }
    let _ = model.send(ModelRequest::Disconnect { session });
    writer.abort();
}

async fn list_models(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let ids: Vec<String> = state.list().iter().map(ElementId::to_string).collect();
    Json(json!({ "metamodel": state.mm.graph_model_name(), "models": ids }))
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CreateRequest {
    id: Option<String>,
    metamodel: Option<String>,
}

#[derive(Serialize)]
struct Created {
    id: String,
    metamodel: String,
}

async fn create_model(
    State(state): State<Arc<AppState>>,
    body: Option<Json<CreateRequest>>,
) -> Result<(StatusCode, Json<Created>), AppError> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let served = state.mm.graph_model_name().to_string();
    if let Some(requested) = req.metamodel {
        if requested != served {
            return Err(AppError::WrongMetamodel { served, requested });
        }
    }
    let id = req.id.as_deref().map(parse_id).transpose()?;
    let id = state.create(id)?;
    Ok((StatusCode::CREATED, Json(Created { id: id.to_string(), metamodel: served })))
}

#[derive(Deserialize)]
struct RoleQuery {
    role: Option<String>,
}

async fn meta(State(state): State<Arc<AppState>>, Query(q): Query<RoleQuery>) -> Json<serde_json::Value> {
    Json(json!({
        "metamodel": state.mm.spec(),
        "uiProfile": state.mm.ui_profile_for(q.role.as_deref()),
    }))
}
