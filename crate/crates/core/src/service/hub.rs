use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Audience, ModelService, Persistence, PersistError, Reply, ServiceConfig};
use crate::ids::{ElementId, MessageId};
use crate::meta::Metamodel;
use crate::model::GraphModelInstance;
use crate::protocol::{decode, Message, MessageKind};

use super::HookRegistry;

pub type SessionId = u64;

#[derive(Clone, Default)]
pub struct HubConfig {
    /// Connecting to an unknown model id creates it.
    pub auto_create: bool,
    pub service: ServiceConfig,
}

/// A frame for one session, in the order it must be delivered.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub session: SessionId,
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HubError {
    #[error("unknown model {0}")]
    UnknownModel(ElementId),
    #[error("model {0} already exists")]
    ModelExists(ElementId),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

#[derive(Debug, Clone)]
struct Session {
    user_id: String,
    model: ElementId,
}

/// All models of one language plus the session registry. Single-threaded;
/// the socket server instead runs one [`ModelService`] per task.
#[derive(Clone)]
pub struct ModelHub {
    mm: Arc<Metamodel>,
    hooks: Arc<HookRegistry>,
    config: HubConfig,
    persistence: Option<Arc<dyn Persistence>>,
    models: BTreeMap<ElementId, ModelService>,
    sessions: BTreeMap<SessionId, Session>,
}

impl ModelHub {
    pub fn new(mm: Arc<Metamodel>, hooks: Arc<HookRegistry>, config: HubConfig) -> Self {
        ModelHub { mm, hooks, config, persistence: None, models: BTreeMap::new(), sessions: BTreeMap::new() }
    }

    pub fn with_persistence(mut self, p: Arc<dyn Persistence>) -> Self {
        self.persistence = Some(p);
        self
    }

    fn service_for(&self, model: GraphModelInstance) -> ModelService {
        let svc = ModelService::new(model, Arc::clone(&self.mm), Arc::clone(&self.hooks), self.config.service.clone());
        match &self.persistence {
            Some(p) => svc.with_persistence(Arc::clone(p)),
            None => svc,
        }
    }

    pub fn create_model(&mut self, id: ElementId) -> Result<&ModelService, HubError> {
        if self.models.contains_key(&id) || self.persistence.as_ref().is_some_and(|p| p.model_ids().contains(&id)) {
            return Err(HubError::ModelExists(id));
        }
        let model = GraphModelInstance::new(id, self.mm.graph_model_name());
        if let Some(p) = &self.persistence {
            p.persist(&model)?;
        }
        let svc = self.service_for(model);
        Ok(self.models.entry(id).or_insert(svc))
    }

    /// Takes over an existing model instance, e.g. one loaded from a file.
    pub fn import_model(&mut self, model: GraphModelInstance) -> Result<&ModelService, HubError> {
        let id = model.id;
        if self.models.contains_key(&id) || self.persistence.as_ref().is_some_and(|p| p.model_ids().contains(&id)) {
            return Err(HubError::ModelExists(id));
        }
        if let Some(p) = &self.persistence {
            p.persist(&model)?;
        }
        let svc = self.service_for(model);
        Ok(self.models.entry(id).or_insert(svc))
    }

    /// Brings a model into memory from persistence or, if allowed, creates it.
    fn open(&mut self, id: ElementId) -> Result<&mut ModelService, HubError> {
        if !self.models.contains_key(&id) {
            let loaded = match &self.persistence {
                Some(p) => p.load(id)?,
                None => None,
            };
            let svc = match loaded {
                Some(m) => self.service_for(m),
                None if self.config.auto_create => {
                    self.create_model(id)?;
                    return Ok(self.models.get_mut(&id).expect("just created"));
                }
                None => return Err(HubError::UnknownModel(id)),
            };
            self.models.insert(id, svc);
        }
        Ok(self.models.get_mut(&id).expect("present"))
    }

    pub fn service(&self, id: ElementId) -> Option<&ModelService> {
        self.models.get(&id)
    }

    pub fn model_ids(&self) -> Vec<ElementId> {
        let mut ids: Vec<ElementId> = self.models.keys().copied().collect();
        if let Some(p) = &self.persistence {
            ids.extend(p.model_ids());
        }
        ids.sort();
        ids.dedup();
        ids
    }

    /// Subscribes `session` to `model` (dropping any previous subscription)
    /// and returns its init frame.
    pub fn connect(&mut self, session: SessionId, user_id: &str, model: ElementId) -> Result<Outgoing, HubError> {
        let svc = self.open(model)?;
        let message = svc.init_message(MessageId(0), user_id);
        self.sessions.insert(session, Session { user_id: user_id.to_string(), model });
        Ok(Outgoing { session, message })
    }

    pub fn disconnect(&mut self, session: SessionId) {
        self.sessions.remove(&session);
    }

    /// Sessions subscribed to `model`, in id order.
    pub fn subscribers(&self, model: ElementId) -> Vec<SessionId> {
        self.sessions.iter().filter(|(_, s)| s.model == model).map(|(id, _)| *id).collect()
    }

    pub fn receive(&mut self, session: SessionId, text: &str) -> Vec<Outgoing> {
        match decode(text) {
            Ok(msg) => self.receive_message(session, msg),
            Err(e) => self.reject(session, MessageId(0), e.to_string()),
        }
    }

    fn reject(&self, session: SessionId, message_id: MessageId, detail: String) -> Vec<Outgoing> {
        let Some(s) = self.sessions.get(&session) else { return Vec::new() };
        let m = Message::new(message_id, s.model, &s.user_id, MessageKind::Error, Vec::new()).with_detail(detail);
        vec![Outgoing { session, message: m }]
    }

    pub fn receive_message(&mut self, session: SessionId, msg: Message) -> Vec<Outgoing> {
        let Some(s) = self.sessions.get(&session) else { return Vec::new() };
        let model = s.model;
        if msg.graph_model_id != model {
            return self.reject(session, msg.message_id, format!("session is not subscribed to {}", msg.graph_model_id));
        }
        let replies = match self.models.get_mut(&model) {
            Some(svc) => svc.handle(msg),
            None => return self.reject(session, msg.message_id, format!("model {model} is gone")),
        };
        self.route(session, model, replies)
    }

    fn route(&self, sender: SessionId, model: ElementId, replies: Vec<Reply>) -> Vec<Outgoing> {
        let mut out = Vec::new();
        for r in replies {
            match r.to {
                Audience::Sender => out.push(Outgoing { session: sender, message: r.message }),
                Audience::All => {
                    for s in self.subscribers(model) {
                        out.push(Outgoing { session: s, message: r.message.clone() });
                    }
                }
            }
        }
        out
    }
}
