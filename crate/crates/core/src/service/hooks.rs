//! Server-side event system: procedures fired after model operations and on
//! user gestures, writing only through the engine.

use std::fmt;
use std::sync::Arc;

use rand::rngs::StdRng;

use crate::engine::{apply_command, CommandOutcome, EngineError};
use crate::ids::ElementId;
use crate::meta::Metamodel;
use crate::model::GraphModelInstance;
use crate::protocol::Command;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HookPoint {
    PostCreate,
    PostMove,
    PostResize,
    PostDelete,
    PostAttributeChange,
    OnClick,
    OnDoubleClick,
    OnContextMenu(String),
}

impl fmt::Display for HookPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HookPoint::PostCreate => f.write_str("postCreate"),
            HookPoint::PostMove => f.write_str("postMove"),
            HookPoint::PostResize => f.write_str("postResize"),
            HookPoint::PostDelete => f.write_str("postDelete"),
            HookPoint::PostAttributeChange => f.write_str("postAttributeChange"),
            HookPoint::OnClick => f.write_str("onClick"),
            HookPoint::OnDoubleClick => f.write_str("onDoubleClick"),
            HookPoint::OnContextMenu(a) => write!(f, "onContextMenu({a})"),
        }
    }
}

/// What triggered a hook.
#[derive(Debug, Clone, PartialEq)]
pub struct HookEvent {
    pub point: HookPoint,
    pub element_id: ElementId,
    /// Type of the element; for deletions, the type it had.
    pub type_name: String,
    /// The applied command, absent for gestures.
    pub command: Option<Command>,
}

impl HookEvent {
    /// The event an applied edit command raises, if any.
    pub fn of_command(cmd: &Command, model: &GraphModelInstance) -> Option<HookEvent> {
        let (point, id, type_name) = match cmd {
            Command::CreateNode { id, type_name, .. } | Command::CreateEdge { id, type_name, .. } => {
                (HookPoint::PostCreate, *id, type_name.clone())
            }
            Command::MoveNode { id, .. } => (HookPoint::PostMove, *id, model.element(*id)?.type_name().to_string()),
            Command::ResizeNode { id, .. } => (HookPoint::PostResize, *id, model.element(*id)?.type_name().to_string()),
            Command::DeleteNode { id, old_state } => (HookPoint::PostDelete, *id, old_state.type_name.clone()),
            Command::DeleteEdge { id, old_state } => (HookPoint::PostDelete, *id, old_state.type_name.clone()),
            Command::SetAttributes { id, .. } => {
                let t = if *id == model.id {
                    model.type_name.clone()
                } else {
                    model.element(*id)?.type_name().to_string()
                };
                (HookPoint::PostAttributeChange, *id, t)
            }
            _ => return None,
        };
        Some(HookEvent { point, element_id: id, type_name, command: Some(cmd.clone()) })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HookError {
    #[error("hook command {command} rejected: {reason}")]
    Rejected { command: String, reason: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("hook failed: {0}")]
    Failed(String),
}

/// The only handle a hook gets: read access to the model and an
/// [`apply_command`] wrapper that records what was applied.
pub struct HookContext<'a> {
    model: &'a mut GraphModelInstance,
    mm: &'a Metamodel,
    rng: &'a mut StdRng,
    applied: &'a mut Vec<Command>,
}

impl<'a> HookContext<'a> {
    pub(crate) fn new(
        model: &'a mut GraphModelInstance,
        mm: &'a Metamodel,
        rng: &'a mut StdRng,
        applied: &'a mut Vec<Command>,
    ) -> Self {
        HookContext { model, mm, rng, applied }
    }

    pub fn model(&self) -> &GraphModelInstance {
        self.model
    }

    pub fn metamodel(&self) -> &Metamodel {
        self.mm
    }

    /// Applies with stale checking; the command joins the transaction's stack.
    pub fn apply(&mut self, cmd: Command) -> Result<(), HookError> {
        let rejected = |reason: String| HookError::Rejected { command: cmd.type_name().to_string(), reason };
        match apply_command(self.model, self.mm, &cmd, true)? {
            CommandOutcome::Applied { .. } => {
                self.applied.push(cmd);
                Ok(())
            }
            CommandOutcome::RejectedConstraint(v) => Err(rejected(v.to_string())),
            CommandOutcome::RejectedStale(id) => Err(rejected(format!("stale state of {id}"))),
        }
    }

    /// Fresh element id, deterministic per service seed.
    pub fn new_id(&mut self) -> ElementId {
        loop {
            let id = ElementId::random(self.rng);
            if id != self.model.id && self.model.element(id).is_none() {
                return id;
            }
        }
    }
}

pub type Hook = Arc<dyn Fn(&mut HookContext<'_>, &HookEvent) -> Result<(), HookError> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown type `{0}`")]
pub struct UnknownType(pub String);

#[derive(Clone, Default)]
pub struct HookRegistry {
    entries: Vec<(HookPoint, String, Hook)>,
}

impl fmt::Debug for HookRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.iter().map(|(p, t, _)| format!("{p}:{t}"))).finish()
    }
}

impl HookRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a hook for `type_name` and all of its subtypes.
    pub fn register(
        &mut self,
        mm: &Metamodel,
        point: HookPoint,
        type_name: &str,
        hook: impl Fn(&mut HookContext<'_>, &HookEvent) -> Result<(), HookError> + Send + Sync + 'static,
    ) -> Result<(), UnknownType> {
        if !mm.contains(type_name) {
            return Err(UnknownType(type_name.to_string()));
        }
        self.entries.push((point, type_name.to_string(), Arc::new(hook)));
        Ok(())
    }

    /// Hooks matching the event, in registration order.
    pub fn matching<'r>(&'r self, mm: &'r Metamodel, point: &'r HookPoint, type_name: &'r str) -> impl Iterator<Item = &'r Hook> {
        self.entries
            .iter()
            .filter(move |(p, t, _)| p == point && mm.is_subtype(type_name, t))
            .map(|(_, _, h)| h)
    }

    /// Context-menu actions some hook answers for `type_name`.
    pub fn actions(&self, mm: &Metamodel, type_name: &str) -> Vec<String> {
        let mut out: Vec<String> = self
            .entries
            .iter()
            .filter_map(|(p, t, _)| match p {
                HookPoint::OnContextMenu(a) if mm.is_subtype(type_name, t) => Some(a.clone()),
                _ => None,
            })
            .collect();
        out.dedup();
        out
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
