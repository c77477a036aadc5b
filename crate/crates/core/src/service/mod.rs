//! The authoritative side of replication, free of any I/O: per-model
//! transactions with hooks and write repair, plus a session registry that
//! routes replies. Transports (sockets, the simulator) feed it frames and
//! deliver what it returns.

mod hooks;
mod hub;

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::engine::{apply_command, snapshot_state, CommandOutcome};
use crate::ids::{ElementId, MessageId};
use crate::interpreter::{execute, ExecutionContext, InterpreterLibrary, ValidationPolicy};
use crate::meta::Metamodel;
use crate::model::GraphModelInstance;
use crate::protocol::{affected_elements, decode, decode_bytes, Command, Message, MessageKind};
use crate::schema::{MemoryStore, StoreError};

pub use hooks::{Hook, HookContext, HookError, HookEvent, HookPoint, HookRegistry, UnknownType};
pub use hub::{HubConfig, HubError, ModelHub, Outgoing, SessionId};

/// Context-menu action that runs the model's default interpreter;
/// `run:<name>` picks one by name.
pub const RUN_ACTION: &str = "run";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("persistence failed: {0}")]
pub struct PersistError(pub String);

/// Durable storage of committed snapshots.
pub trait Persistence: Send + Sync {
    fn persist(&self, model: &GraphModelInstance) -> Result<(), PersistError>;
    fn load(&self, id: ElementId) -> Result<Option<GraphModelInstance>, PersistError>;
    fn model_ids(&self) -> Vec<ElementId>;
}

impl Persistence for Mutex<MemoryStore> {
    fn persist(&self, model: &GraphModelInstance) -> Result<(), PersistError> {
        self.lock().unwrap().store_snapshot(model).map_err(|e| PersistError(e.to_string()))
    }

    fn load(&self, id: ElementId) -> Result<Option<GraphModelInstance>, PersistError> {
        match self.lock().unwrap().load_snapshot(id) {
            Ok(m) => Ok(Some(m)),
            Err(StoreError::UnknownModel(_)) => Ok(None),
            Err(e) => Err(PersistError(e.to_string())),
        }
    }

    fn model_ids(&self) -> Vec<ElementId> {
        self.lock().unwrap().model_ids()
    }
}

/// Who a reply goes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Audience {
    /// Every session subscribed to the model, sender included.
    All,
    Sender,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub to: Audience,
    pub message: Message,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServiceStats {
    pub committed: u64,
    pub rejected: u64,
    pub errors: u64,
    pub reports: u64,
}

#[derive(Clone)]
pub struct ServiceConfig {
    pub seed: u64,
    pub max_steps: usize,
    pub policy: ValidationPolicy,
    pub library: InterpreterLibrary,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            seed: 0,
            max_steps: crate::interpreter::DEFAULT_MAX_STEPS,
            policy: ValidationPolicy::Warn,
            library: InterpreterLibrary::builtin(),
        }
    }
}

/// Why a transaction was rolled back.
#[derive(Debug, Clone, PartialEq)]
enum Abort {
    Stale(ElementId),
    Constraint(String),
    Engine(String),
    Hook(String),
    Persist(String),
}

impl Abort {
    fn describe(&self) -> String {
        match self {
            Abort::Stale(id) => format!("stale state of {id}"),
            Abort::Constraint(v) => format!("constraint violated: {v}"),
            Abort::Engine(e) => e.clone(),
            Abort::Hook(e) => format!("hook aborted: {e}"),
            Abort::Persist(e) => format!("persistence failed: {e}"),
        }
    }
}

/// Single-writer executor for one model. Every mutation goes through a
/// transaction; on commit the full command stack is broadcast, on any
/// rejection the model is restored and the sender gets a revert.
#[derive(Clone)]
pub struct ModelService {
    mm: Arc<Metamodel>,
    hooks: Arc<HookRegistry>,
    persistence: Option<Arc<dyn Persistence>>,
    config: ServiceConfig,
    rng: StdRng,
    base: GraphModelInstance,
    model: GraphModelInstance,
    log: Vec<Vec<Command>>,
    stats: ServiceStats,
}

impl std::fmt::Debug for ModelService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelService")
            .field("model", &self.model.id)
            .field("model_version", &self.model.model_version)
            .field("stats", &self.stats)
            .finish_non_exhaustive()
    }
}

impl ModelService {
    pub fn new(model: GraphModelInstance, mm: Arc<Metamodel>, hooks: Arc<HookRegistry>, config: ServiceConfig) -> Self {
        let rng = StdRng::seed_from_u64(config.seed ^ (model.id.0 as u64) ^ ((model.id.0 >> 64) as u64));
        ModelService {
            mm,
            hooks,
            persistence: None,
            config,
            rng,
            base: model.clone(),
            model,
            log: Vec::new(),
            stats: ServiceStats::default(),
        }
    }

    pub fn with_persistence(mut self, p: Arc<dyn Persistence>) -> Self {
        self.persistence = Some(p);
        self
    }

    pub fn id(&self) -> ElementId {
        self.model.id
    }

    pub fn model(&self) -> &GraphModelInstance {
        &self.model
    }

    pub fn metamodel(&self) -> &Metamodel {
        &self.mm
    }

    /// State the service started from; replaying [`committed`](Self::committed)
    /// on it yields [`model`](Self::model).
    pub fn base(&self) -> &GraphModelInstance {
        &self.base
    }

    /// Command stacks of all committed transactions, in commit order.
    pub fn committed(&self) -> &[Vec<Command>] {
        &self.log
    }

    pub fn stats(&self) -> ServiceStats {
        self.stats
    }

    pub fn init_message(&self, message_id: MessageId, user_id: &str) -> Message {
        Message::init(message_id, user_id, self.model.clone())
    }

    fn error(&mut self, message_id: MessageId, user_id: &str, detail: impl Into<String>) -> Vec<Reply> {
        self.stats.errors += 1;
        let m = Message::new(message_id, self.model.id, user_id, MessageKind::Error, Vec::new()).with_detail(detail);
        vec![Reply { to: Audience::Sender, message: m }]
    }

    /// Decodes one frame and handles it; malformed input only earns the
    /// sender an error frame.
    pub fn handle_text(&mut self, user_id: &str, text: &str) -> Vec<Reply> {
        match decode(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => self.error(MessageId(0), user_id, e.to_string()),
        }
    }

    /// [`handle_text`](Self::handle_text) for binary frames.
    pub fn handle_bytes(&mut self, user_id: &str, bytes: &[u8]) -> Vec<Reply> {
        match decode_bytes(bytes) {
            Ok(msg) => self.handle(msg),
            Err(e) => self.error(MessageId(0), user_id, e.to_string()),
        }
    }

    pub fn handle(&mut self, msg: Message) -> Vec<Reply> {
        if let Err(e) = msg.check() {
            return self.error(msg.message_id, &msg.user_id, e.to_string());
        }
        if msg.graph_model_id != self.model.id {
            return self.error(msg.message_id, &msg.user_id, format!("message addressed to model {}", msg.graph_model_id));
        }
        match msg.kind {
            MessageKind::Edit => self.handle_edit(msg),
            MessageKind::Interaction => self.handle_interaction(msg),
            MessageKind::InitRequest => {
                vec![Reply { to: Audience::Sender, message: self.init_message(msg.message_id, &msg.user_id) }]
            }
            other => self.error(msg.message_id, &msg.user_id, format!("clients may not send {other:?} messages")),
        }
    }

    /// Runs `body` as one transaction. The stack it builds is committed,
    /// persisted and broadcast, or everything is rolled back.
    fn transaction(
        &mut self,
        body: impl FnOnce(&mut Self, &mut Vec<Command>) -> Result<(), Abort>,
    ) -> Result<Vec<Command>, Abort> {
        let before = self.model.clone();
        let rng_before = self.rng.clone();
        let mut stack = Vec::new();
        let mut result = body(self, &mut stack);
        if result.is_ok() && !stack.is_empty() {
            if let Some(p) = &self.persistence {
                result = p.persist(&self.model).map_err(|e| Abort::Persist(e.0));
            }
        }
        match result {
            Ok(()) => {
                if !stack.is_empty() {
                    self.log.push(stack.clone());
                    self.stats.committed += 1;
                }
                Ok(stack)
            }
            Err(a) => {
                self.model = before;
                self.rng = rng_before;
                self.stats.rejected += 1;
                Err(a)
            }
        }
    }

    fn fire(&mut self, event: &HookEvent, stack: &mut Vec<Command>) -> Result<(), Abort> {
        let hooks = Arc::clone(&self.hooks);
        for hook in hooks.matching(&self.mm, &event.point, &event.type_name) {
            let mut ctx = HookContext::new(&mut self.model, &self.mm, &mut self.rng, stack);
            hook(&mut ctx, event).map_err(|e| Abort::Hook(e.to_string()))?;
        }
        Ok(())
    }

    fn revert(&self, msg: &Message, targets: BTreeSet<ElementId>, why: &Abort) -> Reply {
        let commands = targets
            .into_iter()
            .map(|id| Command::Restore { id, state: snapshot_state(&self.model, id) })
            .collect();
        let m = Message::new(msg.message_id, self.model.id, &msg.user_id, MessageKind::Revert, commands)
            .with_detail(why.describe());
        Reply { to: Audience::Sender, message: m }
    }

    fn broadcast(&self, msg: &Message, stack: Vec<Command>) -> Reply {
        Reply {
            to: Audience::All,
            message: Message::new(msg.message_id, self.model.id, &msg.user_id, MessageKind::Edit, stack),
        }
    }

    pub fn handle_edit(&mut self, msg: Message) -> Vec<Reply> {
        let outcome = self.transaction(|svc, stack| {
            for cmd in &msg.commands {
                match apply_command(&mut svc.model, &svc.mm, cmd, true) {
                    Ok(CommandOutcome::Applied { .. }) => {}
                    Ok(CommandOutcome::RejectedStale(id)) => return Err(Abort::Stale(id)),
                    Ok(CommandOutcome::RejectedConstraint(v)) => return Err(Abort::Constraint(v.to_string())),
                    Err(e) => return Err(Abort::Engine(e.to_string())),
                }
                stack.push(cmd.clone());
                // Hook output does not raise further events.
                if let Some(event) = HookEvent::of_command(cmd, &svc.model) {
                    svc.fire(&event, stack)?;
                }
            }
            Ok(())
        });
        match outcome {
            Ok(stack) => vec![self.broadcast(&msg, stack)],
            Err(why) => vec![self.revert(&msg, affected_elements(&msg), &why)],
        }
    }

    pub fn handle_interaction(&mut self, msg: Message) -> Vec<Reply> {
        let (id, point) = match &msg.commands[0] {
            Command::Click { id } => (*id, HookPoint::OnClick),
            Command::DoubleClick { id } => (*id, HookPoint::OnDoubleClick),
            Command::ContextMenu { id, action_id } => (*id, HookPoint::OnContextMenu(action_id.clone())),
            _ => unreachable!("checked by Message::check"),
        };
        let type_name = if id == self.model.id {
            self.model.type_name.clone()
        } else {
            match self.model.element(id) {
                Some(e) => e.type_name().to_string(),
                // Deleted concurrently: nothing to react on.
                None => return Vec::new(),
            }
        };
        let has_hook = self.hooks.matching(&self.mm, &point, &type_name).next().is_some();
        if !has_hook {
            return match point {
                HookPoint::OnContextMenu(action) => match run_target(&action) {
                    Some(name) => self.run_interpreter(&msg, name),
                    None => self.error(msg.message_id, &msg.user_id, format!("unknown action `{action}` for {type_name}")),
                },
                _ => Vec::new(),
            };
        }
        let event = HookEvent { point, element_id: id, type_name, command: None };
        match self.transaction(|svc, stack| svc.fire(&event, stack)) {
            Ok(stack) if stack.is_empty() => Vec::new(),
            Ok(stack) => vec![self.broadcast(&msg, stack)],
            Err(why) => vec![self.revert(&msg, BTreeSet::from([id]), &why)],
        }
    }

    fn run_interpreter(&mut self, msg: &Message, name: Option<&str>) -> Vec<Reply> {
        let lib = &self.config.library;
        let Some(name) = name.map(str::to_string).or_else(|| lib.default_for(&self.mm).map(str::to_string)) else {
            return self.error(msg.message_id, &msg.user_id, "no interpreter applies to this language");
        };
        let result = lib.build(&name, &self.mm, self.config.max_steps).and_then(|def| {
            execute(&name, &self.model, &self.mm, &def, ExecutionContext::default(), self.config.policy)
        });
        match result {
            Ok(report) => {
                self.stats.reports += 1;
                let m = Message::new(msg.message_id, self.model.id, &msg.user_id, MessageKind::Report, Vec::new())
                    .with_detail(report.to_json());
                vec![Reply { to: Audience::Sender, message: m }]
            }
            Err(e) => self.error(msg.message_id, &msg.user_id, e.to_string()),
        }
    }
}

/// `run` → default interpreter, `run:<name>` → that one.
fn run_target(action: &str) -> Option<Option<&str>> {
    if action == RUN_ACTION {
        Some(None)
    } else {
        action.strip_prefix("run:").map(Some)
    }
}

/// Replays committed stacks on `base`, with the same checks the server
/// made; any command that no longer applies is an error.
pub fn replay(base: &GraphModelInstance, mm: &Metamodel, log: &[Vec<Command>]) -> Result<GraphModelInstance, String> {
    let mut m = base.clone();
    for cmd in log.iter().flatten() {
        match apply_command(&mut m, mm, cmd, true) {
            Ok(CommandOutcome::Applied { .. }) => {}
            other => return Err(format!("{} does not replay: {other:?}", cmd.type_name())),
        }
    }
    Ok(m)
}
